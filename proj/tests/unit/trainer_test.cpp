#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "cafe/checkpoint.hpp"
#include "cafe/errors.hpp"
#include "cafe/synthetic_benchmark.hpp"
#include "cafe/trainer.hpp"
#include "helpers.hpp"

namespace cafe {
namespace {

using testing::TempDir;

TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden = {8};
  c.epochs = 3;
  c.batch_size = 8;
  c.seed = 11;
  c.drop_rate = Rational{1, 3};
  return c;
}

FeatureDataset tiny_dataset(std::uint64_t seed, std::size_t n = 30, std::string name = "tiny") {
  Rng rng(seed);
  return testing::random_dataset(rng, n, 21, 4, 7, std::move(name));
}

TEST(TrainConfig, JsonRoundTripAndUnknownKeys) {
  TrainConfig c = tiny_config();
  c.lambda = 0.5;
  c.drop_rate = Rational{2, 9};
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(j.at("drop_rate"), "2/9");
  EXPECT_EQ(to_json(train_config_from_json(j)), j);
  EXPECT_THROW(train_config_from_json({{"lamda", 1.0}}), ArgumentError);
  EXPECT_THROW(train_config_from_json({{"lambda", -1.0}}), ArgumentError);
  EXPECT_THROW(train_config_from_json({{"mask_on", false}}), ArgumentError);
  EXPECT_NO_THROW(train_config_from_json({{"mask_on", false}, {"sep_on", false}, {"div_on", false}}));
}

TEST(TrainConfig, DefaultHyperparameters) {
  const TrainConfig c;
  EXPECT_EQ(c.lambda, 1.5);
  EXPECT_EQ(c.beta, 5.0);
  EXPECT_EQ(c.drop_rate, (Rational{10, 73}));
  EXPECT_EQ(c.adam.lr, 2e-4);
  EXPECT_EQ(c.adam.gamma, 0.9);
  EXPECT_EQ(c.adam.weight_decay, 1e-4);
}

TEST(Train, MaskOnlyRecordsZeroChannelLosses) {
  TrainConfig c = tiny_config();
  c.sep_on = false;
  c.div_on = false;
  const TrainResult r = train(c, tiny_dataset(1), FrozenProvider::file_backed());
  for (const auto& e : r.epochs) {
    EXPECT_EQ(e.sep, 0.0);
    EXPECT_EQ(e.div, 0.0);
    EXPECT_EQ(e.total, e.cls);
  }
}

TEST(Train, ZeroWeightsMatchDisabledModules) {
  const FeatureDataset ds = tiny_dataset(2);
  TrainConfig a = tiny_config();
  a.lambda = 0.0;
  a.beta = 0.0;
  TrainConfig b = tiny_config();
  b.sep_on = false;
  b.div_on = false;
  const TrainResult ra = train(a, ds, FrozenProvider::file_backed());
  const TrainResult rb = train(b, ds, FrozenProvider::file_backed());
  ASSERT_EQ(ra.net.num_parameters(), rb.net.num_parameters());
  for (std::size_t i = 0; i < ra.net.num_parameters(); ++i) {
    ASSERT_EQ(ra.net.parameters()[i], rb.net.parameters()[i]) << "parameter " << i;
  }
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) EXPECT_EQ(ra.epochs[e].cls, rb.epochs[e].cls);
}

TEST(Train, StepLossesDecompose) {
  TrainConfig c = tiny_config();
  c.log_steps = true;
  const TrainResult r = train(c, tiny_dataset(3), FrozenProvider::file_backed());
  ASSERT_EQ(r.steps.size(), 3u * 4);
  for (const auto& s : r.steps) {
    EXPECT_NEAR(s.total, s.cls + c.lambda * s.sep + c.beta * s.div, 1e-12);
    EXPECT_GT(s.sep, 0.0);
  }
}

TEST(Train, SameSeedIsBitIdenticalDifferentSeedIsNot) {
  const FeatureDataset ds = tiny_dataset(4);
  const TrainResult a = train(tiny_config(), ds, FrozenProvider::file_backed());
  const TrainResult b = train(tiny_config(), ds, FrozenProvider::file_backed());
  TrainConfig other = tiny_config();
  other.seed = 12;
  const TrainResult c = train(other, ds, FrozenProvider::file_backed());
  EXPECT_TRUE(std::equal(a.net.parameters().begin(), a.net.parameters().end(), b.net.parameters().begin()));
  EXPECT_FALSE(std::equal(a.net.parameters().begin(), a.net.parameters().end(), c.net.parameters().begin()));
  for (std::size_t e = 0; e < a.epochs.size(); ++e) EXPECT_EQ(a.epochs[e].total, b.epochs[e].total);
}

TEST(Train, BatchLargerThanDatasetIsFullBatch) {
  TrainConfig c = tiny_config();
  c.batch_size = 1000;
  c.log_steps = true;
  const TrainResult r = train(c, tiny_dataset(5, 9), FrozenProvider::file_backed());
  EXPECT_EQ(r.steps.size(), 3u);
}

TEST(Train, BenchmarkLossDecreasesAndProviderStaysFrozen) {
  BenchmarkSpec spec;
  spec.seed = 42;
  const Benchmark bench = generate(spec);
  const std::uint64_t fp = bench.provider.fingerprint();
  const std::uint64_t sum = frozen_checksum(bench.source());
  TrainConfig c;
  c.epochs = 20;
  c.seed = 42;
  const TrainResult r = train(c, bench.source(), bench.provider);
  ASSERT_EQ(r.epochs.size(), 20u);
  EXPECT_LT(r.epochs.back().total, r.epochs.front().total);
  EXPECT_EQ(bench.provider.fingerprint(), fp);
  EXPECT_EQ(frozen_checksum(bench.source()), sum);
}

TEST(Train, DivergenceNamesEpochAndStep) {
  TrainConfig c = tiny_config();
  c.adam.lr = 1e300;
  c.adam.gamma = 1.0;
  c.epochs = 50;
  try {
    train(c, tiny_dataset(6), FrozenProvider::file_backed());
    FAIL() << "did not diverge";
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Predict, ChannelModulesDoNotChangeInference) {
  const FeatureDataset ds = tiny_dataset(7);
  const TrainConfig c = tiny_config();
  const TrainResult r = train(c, ds, FrozenProvider::file_backed());
  const MatrixD x = matrix_cast<double>(ds.backbone_inputs());
  const MatrixD f = matrix_cast<double>(ds.frozen_features());
  const Predictions p = predict(r.net, x, f);
  const ChannelPartition part = make_partition(c, 21, 7);
  Rng rng(1);
  const StepResult with = training_step(r.net, c, part, x, f, ds.labels(), sample_drop_mask(part, rng), false);
  TrainConfig off = c;
  off.sep_on = false;
  off.div_on = false;
  const StepResult without = training_step(r.net, off, part, x, f, ds.labels(), keep_all(part), false);
  EXPECT_TRUE(bit_equal(p.logits, with.logits));
  EXPECT_TRUE(bit_equal(p.logits, without.logits));
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  NetworkShape s;
  s.input_dim = 1;
  s.hidden = {1};
  s.feature_dim = 7;
  s.use_mask = false;
  const MaskNetwork zero = MaskNetwork::zeros(s);
  const Predictions p = predict(zero, MatrixD(2, 1), MatrixD(2, 7, 1.0));
  EXPECT_EQ(p.labels[0], 0);
  EXPECT_EQ(p.labels[1], 0);
}

std::vector<FeatureDataset> labelled_domains(std::size_t count, std::size_t n) {
  std::vector<FeatureDataset> out;
  for (std::size_t d = 0; d < count; ++d) out.push_back(tiny_dataset(100 + d, n, "dom" + std::to_string(d)));
  return out;
}

TEST(CrossDomain, PerfectPredictorScoresHundred) {
  const auto domains = labelled_domains(3, 20);
  const auto truth = [](const FeatureDataset& ds) {
    return std::vector<std::uint8_t>(ds.labels().begin(), ds.labels().end());
  };
  const CrossDomainReport r = evaluate_cross_domain(truth, domains, "dom1");
  for (const auto& d : r.domains) EXPECT_EQ(d.accuracy, 100.0);
  EXPECT_EQ(r.mean_accuracy, 100.0);
  EXPECT_EQ(*r.mean_unseen_accuracy, 100.0);
  EXPECT_EQ(r.domains[1].role, "source");
  EXPECT_EQ(r.domains[0].role, "unseen");
}

TEST(CrossDomain, MeanIsTheMeanOfDomains) {
  const auto domains = labelled_domains(3, 21);
  const auto zeros = [](const FeatureDataset& ds) { return std::vector<std::uint8_t>(ds.size(), 0); };
  const CrossDomainReport r = evaluate_cross_domain(zeros, domains, "dom0");
  double sum = 0.0;
  for (const auto& d : r.domains) {
    EXPECT_EQ(d.accuracy, 100.0 * static_cast<double>(d.correct) / static_cast<double>(d.samples));
    sum += d.accuracy;
  }
  EXPECT_DOUBLE_EQ(r.mean_accuracy, sum / 3.0);
  EXPECT_DOUBLE_EQ(*r.mean_unseen_accuracy, (r.domains[1].accuracy + r.domains[2].accuracy) / 2.0);
}

TEST(CrossDomain, RecallMarksAbsentClasses) {
  MatrixF f(2, 7), x(2, 1);
  const std::vector<FeatureDataset> one{FeatureDataset("d", f, x, {0, 0})};
  const auto zeros = [](const FeatureDataset& ds) { return std::vector<std::uint8_t>(ds.size(), 0); };
  const CrossDomainReport r = evaluate_cross_domain(zeros, one, "d");
  EXPECT_EQ(*r.domains[0].recall[0], 100.0);
  EXPECT_FALSE(r.domains[0].recall[1].has_value());
  EXPECT_FALSE(r.mean_unseen_accuracy.has_value());
}

// Exact binomial tail computed in log space.
double binomial_outside(int n, double p, int lo, int hi) {
  double out = 0.0;
  for (int k = 0; k <= n; ++k) {
    if (k >= lo && k <= hi) continue;
    const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                           k * std::log(p) + (n - k) * std::log1p(-p);
    out += std::exp(log_pmf);
  }
  return out;
}

TEST(CrossDomain, RandomPredictorStaysInsideTheBinomialBand) {
  // [12.0, 16.6] percent of 7000 is [840, 1162] correct answers.
  const double outside = binomial_outside(7000, 1.0 / 7.0, 840, 1162);
  EXPECT_NEAR(outside, 3.7154e-8, 1e-11);
  EXPECT_LT(5.0 * outside, 1e-3);

  std::vector<FeatureDataset> domains;
  for (int d = 0; d < 5; ++d) {
    Rng rng(500 + d);
    MatrixF f(7000, 7), x(7000, 1);
    std::vector<std::uint8_t> y(7000);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng.uniform_index(7));
    domains.emplace_back("d" + std::to_string(d), std::move(f), std::move(x), std::move(y));
  }
  Rng guess(9);
  const auto random = [&](const FeatureDataset& ds) {
    std::vector<std::uint8_t> out(ds.size());
    for (auto& v : out) v = static_cast<std::uint8_t>(guess.uniform_index(7));
    return out;
  };
  const CrossDomainReport r = evaluate_cross_domain(random, domains, "d0");
  for (const auto& d : r.domains) {
    EXPECT_GE(d.accuracy, 12.0);
    EXPECT_LE(d.accuracy, 16.6);
  }
}

TEST(CrossDomain, EmptyInputThrows) {
  const auto zeros = [](const FeatureDataset& ds) { return std::vector<std::uint8_t>(ds.size(), 0); };
  EXPECT_THROW(evaluate_cross_domain(zeros, std::vector<FeatureDataset>{}, "x"), ArgumentError);
}

TEST(Ablation, FourVariantsShareSeeds) {
  const auto domains = labelled_domains(3, 14);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const std::uint64_t seeds[] = {1, 2};
  const AblationTable t = run_ablation(c, domains, 0, FrozenProvider::file_backed(), seeds);
  ASSERT_EQ(t.rows.size(), 4u);
  const char* labels[] = {"baseline", "mask", "mask+sep", "mask+sep+div"};
  for (std::size_t v = 0; v < 4; ++v) {
    EXPECT_EQ(t.rows[v].label, labels[v]);
    ASSERT_EQ(t.rows[v].runs.size(), 2u);
    for (std::size_t s = 0; s < 2; ++s) {
      const auto& rep = t.rows[v].runs[s];
      EXPECT_EQ(rep.seed, seeds[s]);
      EXPECT_EQ(rep.config_hash, config_hash(rep.config));
      EXPECT_EQ(rep.config.at("seed"), seeds[s]);
    }
  }
  EXPECT_EQ(t.rows[0].runs[0].config.at("mask_on"), false);
  EXPECT_EQ(t.rows[3].runs[0].config.at("div_on"), true);
  const nlohmann::json j = to_json(t);
  EXPECT_EQ(j.at("rows").size(), 4u);
}

TEST(Sweep, LambdaMajorGrid) {
  const auto domains = labelled_domains(2, 14);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const double lambdas[] = {0.5, 1.5, 5.0};
  const double betas[] = {1.0, 5.0, 10.0};
  const auto reports = run_sweep(c, domains, 0, FrozenProvider::file_backed(), lambdas, betas);
  ASSERT_EQ(reports.size(), 9u);
  EXPECT_EQ(reports[1].config.at("lambda"), 0.5);
  EXPECT_EQ(reports[1].config.at("beta"), 5.0);
  EXPECT_EQ(reports[8].config.at("lambda"), 5.0);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), ArgumentError);
}

TEST(MaskDump, ZeroNetworkIsHalfEverywhere) {
  NetworkShape s;
  s.input_dim = 4;
  s.hidden = {3};
  s.feature_dim = 21;
  const MaskNetwork zero = MaskNetwork::zeros(s);
  const FeatureDataset ds = tiny_dataset(8, 40);
  const MaskDump d = dump_masks(zero, ds, split_channels(21, 7));
  for (std::size_t k = 0; k < 7; ++k) {
    if (!d.present[k]) continue;
    for (double v : d.class_means.row(k)) EXPECT_EQ(v, 0.5);
    for (double v : d.piece_max.row(k)) EXPECT_EQ(v, 0.5);
  }
}

TEST(MaskDump, CsvRoundTripAndAbsentClasses) {
  TempDir dir;
  NetworkShape s;
  s.input_dim = 4;
  s.hidden = {3};
  s.feature_dim = 21;
  const MaskNetwork net(s, 3);
  MatrixF f(3, 21, 0.5f), x(3, 4, 0.25f);
  x(1, 2) = -1.0f;
  const FeatureDataset ds("d", f, x, {0, 2, 2});
  const MaskDump d = dump_masks(net, ds, split_channels(21, 7));
  EXPECT_TRUE(d.present[0]);
  EXPECT_FALSE(d.present[1]);
  write_mask_csv(d, dir / "m.csv");
  const MaskCsv back = read_mask_csv(dir / "m.csv");
  EXPECT_EQ(back.present, d.present);
  EXPECT_TRUE(bit_equal(back.values, d.class_means));
  std::ifstream in(dir / "m.csv");
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  EXPECT_EQ(header.substr(0, 12), "class,0,1,2,");
  EXPECT_EQ(row1, "1,absent");
  for (double v : d.class_means.row(0)) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Checkpoint, RoundTripAndCorruption) {
  TempDir dir;
  const FeatureDataset ds = tiny_dataset(9);
  const TrainConfig c = tiny_config();
  const TrainResult r = train(c, ds, FrozenProvider::file_backed());
  save_checkpoint(r.net, dir / "m.ckpt", to_json(c));
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.seed, 11u);
  EXPECT_EQ(back.config, to_json(c));
  EXPECT_EQ(back.config_hash, config_hash(to_json(c)));
  ASSERT_EQ(back.net.num_parameters(), r.net.num_parameters());
  EXPECT_TRUE(std::equal(r.net.parameters().begin(), r.net.parameters().end(), back.net.parameters().begin()));
  const MatrixD x = matrix_cast<double>(ds.backbone_inputs());
  const MatrixD f = matrix_cast<double>(ds.frozen_features());
  EXPECT_TRUE(bit_equal(predict(r.net, x, f).logits, predict(back.net, x, f).logits));

  const auto size = std::filesystem::file_size(dir / "m.ckpt");
  std::filesystem::resize_file(dir / "m.ckpt", size - 3);
  try {
    load_checkpoint(dir / "m.ckpt");
    FAIL() << "truncated checkpoint accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseErrorKind::kTruncated);
  }
  std::ofstream(dir / "bad.ckpt") << "{\"format\":\"other\"}\n";
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), ParseError);
}

}  // namespace
}  // namespace cafe
