#include "cafe/verify/gradcheck.hpp"

#include "cafe/channel_modules.hpp"
#include "cafe/mask_network.hpp"
#include "cafe/random.hpp"
#include "cafe/trainer.hpp"
#include "cafe/verify/reference_loss.hpp"

namespace cafe::verify {
namespace {

constexpr std::uint64_t kCaseStream = 10;
constexpr std::uint64_t kDataStream = 11;
constexpr std::uint64_t kNetStream = 12;

}  // namespace

GradCheckCase random_gradcheck_case(std::uint64_t seed) {
  Rng rng(derive_seed(seed, kCaseStream));
  GradCheckCase c;
  c.batch = 1 + rng.uniform_index(4);
  c.input_dim = 1 + rng.uniform_index(6);
  c.hidden = 1 + rng.uniform_index(8);
  c.channels = rng.uniform_index(2) == 0 ? 14 : 21;
  c.classes = 7;
  c.seed = seed;
  return c;
}

GradCheckReport check_training_gradients(const GradCheckCase& c, double h) {
  TrainConfig config;
  config.lambda = c.lambda;
  config.beta = c.beta;
  config.hidden = {c.hidden};
  // Pieces of 2 or 3 channels; 1/3 drops exactly one channel from each
  // 3-channel piece so the drop path is exercised.
  config.drop_rate = Rational{1, 3};
  config.validate();

  const NetworkShape shape = network_shape(config, c.input_dim, c.channels, c.classes);
  const MaskNetwork net(shape, derive_seed(c.seed, kNetStream));
  const ChannelPartition partition = make_partition(config, c.channels, c.classes);

  Rng rng(derive_seed(c.seed, kDataStream));
  ReferenceProblem problem;
  problem.input_dim = c.input_dim;
  problem.hidden = {c.hidden};
  problem.channels = c.channels;
  problem.classes = c.classes;
  problem.fc_bias = shape.fc_bias;
  problem.lambda = c.lambda;
  problem.beta = c.beta;
  problem.inputs = MatrixD(c.batch, c.input_dim);
  problem.frozen = MatrixD(c.batch, c.channels);
  for (double& v : problem.inputs.values()) v = rng.normal();
  for (double& v : problem.frozen.values()) v = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < c.batch; ++i) {
    problem.labels.push_back(static_cast<std::uint8_t>(rng.uniform_index(c.classes)));
  }
  const DropMask drop = sample_drop_mask(partition, rng);
  problem.keep = drop.keep;

  const StepResult step =
      training_step(net, config, partition, problem.inputs, problem.frozen, problem.labels, drop, true);

  GradCheckReport report;
  report.analytic_loss = step.losses.total;
  report.reference_loss = reference_losses(problem, net.parameters()).total;
  report.num_parameters = net.num_parameters();
  const LossFn loss = [&](std::span<const double> p) { return reference_losses(problem, p).total; };
  report.worst = grad_check(loss, net.parameters(), step.grads, h);
  return report;
}

}  // namespace cafe::verify
