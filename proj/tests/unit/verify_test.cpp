#include <gtest/gtest.h>

#include <cmath>

#include "cafe/trainer.hpp"
#include "cafe/verify/gradcheck.hpp"
#include "cafe/verify/reference_loss.hpp"

namespace cafe {
namespace {

struct Problem {
  TrainConfig config;
  verify::ReferenceProblem ref;
  MaskNetwork net;
  ChannelPartition partition;
  DropMask drop;
};

Problem make_problem(std::uint64_t seed, bool mask_on, bool fc_bias) {
  Rng rng(seed);
  const std::size_t b = 1 + rng.uniform_index(5), d = 1 + rng.uniform_index(5), c = 14 + rng.uniform_index(8);
  TrainConfig config;
  config.hidden = {1 + rng.uniform_index(6)};
  config.fc_bias = fc_bias;
  config.mask_on = mask_on;
  config.sep_on = mask_on;
  config.div_on = mask_on;
  config.drop_rate = Rational{1, 3};
  config.seed = seed;
  verify::ReferenceProblem ref;
  ref.input_dim = d;
  ref.hidden = config.hidden;
  ref.channels = c;
  ref.classes = 7;
  ref.fc_bias = fc_bias;
  ref.use_mask = mask_on;
  ref.sep_on = mask_on;
  ref.div_on = mask_on;
  ref.inputs = MatrixD(b, d);
  ref.frozen = MatrixD(b, c);
  for (double& v : ref.inputs.values()) v = rng.normal();
  for (double& v : ref.frozen.values()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < b; ++i) ref.labels.push_back(static_cast<std::uint8_t>(rng.uniform_index(7)));
  ChannelPartition part = make_partition(config, c, 7);
  DropMask drop = mask_on ? sample_drop_mask(part, rng) : keep_all(part);
  ref.keep = drop.keep;
  MaskNetwork net = initial_network(config, d, c, 7);
  return {config, ref, std::move(net), std::move(part), std::move(drop)};
}

TEST(ReferenceLoss, AgreesWithTrainingStep) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (bool mask_on : {true, false}) {
      const Problem p = make_problem(seed, mask_on, seed % 2 == 0);
      ASSERT_EQ(verify::reference_parameter_count(p.ref), p.net.num_parameters());
      const StepResult s =
          training_step(p.net, p.config, p.partition, p.ref.inputs, p.ref.frozen, p.ref.labels, p.drop, false);
      const verify::ReferenceLosses r = verify::reference_losses(p.ref, p.net.parameters());
      EXPECT_NEAR(s.losses.cls, static_cast<double>(r.cls), 1e-12) << seed;
      EXPECT_NEAR(s.losses.sep, static_cast<double>(r.sep), 1e-12) << seed;
      EXPECT_NEAR(s.losses.div, static_cast<double>(r.div), 1e-12) << seed;
      EXPECT_NEAR(s.losses.total, static_cast<double>(r.total), 1e-11) << seed;
    }
  }
}

TEST(ReferenceLoss, WrongParameterCountThrows) {
  const Problem p = make_problem(1, true, true);
  std::vector<double> params(p.net.parameters().begin(), p.net.parameters().end());
  params.pop_back();
  EXPECT_ANY_THROW(verify::reference_losses(p.ref, params));
}

TEST(GradCheck, RandomCasesPass) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const verify::GradCheckCase c = verify::random_gradcheck_case(seed);
    EXPECT_GE(c.batch, 1u);
    EXPECT_LE(c.batch, 4u);
    EXPECT_TRUE(c.channels == 14 || c.channels == 21);
    const verify::GradCheckReport r = verify::check_training_gradients(c);
    EXPECT_LE(r.worst.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_NEAR(r.analytic_loss, static_cast<double>(r.reference_loss), 1e-10);
  }
}

}  // namespace
}  // namespace cafe
