#include "cafe/synthetic_benchmark.hpp"

#include <cmath>
#include <set>

#include "cafe/hashing.hpp"
#include "cafe/random.hpp"

namespace cafe {
namespace {

constexpr std::uint64_t kPrototypeStream = 100;
constexpr std::uint64_t kProviderStream = 101;
constexpr std::uint64_t kDomainStream = 200;

MatrixD gaussian(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  MatrixD m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

FeatureDataset make_domain(const BenchmarkSpec& spec, const MatrixD& prototypes, const FrozenProvider& provider,
                           std::size_t domain) {
  const std::size_t d = spec.input_dim;
  const std::size_t k = spec.nuisance_dim;
  const double m = spec.shift_magnitude;
  Rng rng(derive_seed(spec.seed, kDomainStream + domain));

  // Domain transform, drawn before any sample so it does not depend on N.
  const MatrixD mix = gaussian(rng, d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> offset(d);
  for (double& v : offset) v = rng.normal();
  const MatrixD basis = gaussian(rng, k, d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> nuisance_offset(k);
  for (double& v : nuisance_offset) v = rng.normal();

  const std::size_t n = spec.samples_per_class * spec.num_classes;
  MatrixD x(n, d);
  std::vector<std::uint8_t> labels(n);
  std::vector<double> z(d);
  std::vector<double> coeff(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::uint8_t>(i % spec.num_classes);
    labels[i] = y;
    for (std::size_t j = 0; j < d; ++j) z[j] = prototypes(y, j) + spec.noise_scale * rng.normal();
    auto row = x.row(i);
    if (spec.shift == ShiftKind::kAffine) {
      for (std::size_t r = 0; r < d; ++r) {
        double acc = z[r] + m * offset[r];
        for (std::size_t c = 0; c < d; ++c) acc += m * mix(r, c) * z[c];
        row[r] = acc;
      }
    } else {
      for (std::size_t r = 0; r < d; ++r) row[r] = z[r];
    }
    for (std::size_t q = 0; q < k; ++q) {
      const double domain_part = spec.shift == ShiftKind::kNuisanceSubspace ? m * nuisance_offset[q] : 0.0;
      coeff[q] = domain_part + spec.nuisance_scale * rng.normal();
      for (std::size_t r = 0; r < d; ++r) row[r] += coeff[q] * basis(q, r);
    }
  }
  // Project the stored (f32) inputs so file-backed and projected features agree.
  MatrixF inputs = matrix_cast<float>(x);
  MatrixF features = matrix_cast<float>(provider.extract(matrix_cast<double>(inputs)));
  return FeatureDataset("domain" + std::to_string(domain), std::move(features), std::move(inputs),
                        std::move(labels), static_cast<std::uint32_t>(spec.num_classes));
}

}  // namespace

const char* to_string(ShiftKind kind) {
  return kind == ShiftKind::kAffine ? "affine" : "nuisance-subspace";
}

ShiftKind parse_shift_kind(const std::string& text) {
  if (text == "affine") return ShiftKind::kAffine;
  if (text == "nuisance-subspace") return ShiftKind::kNuisanceSubspace;
  throw ArgumentError("unknown shift kind '" + text + "'");
}

void BenchmarkSpec::validate() const {
  if (num_domains < 2) throw ArgumentError("benchmark: need at least two domains");
  if (num_classes < 1 || num_classes > 255) throw ArgumentError("benchmark: num_classes must be in [1, 255]");
  if (input_dim == 0 || feature_dim == 0) throw ArgumentError("benchmark: dimensions must be positive");
  if (samples_per_class == 0) throw ArgumentError("benchmark: samples_per_class must be positive");
  if (source_domain >= num_domains) throw ArgumentError("benchmark: source_domain out of range");
  if (!(prototype_scale >= 0.0) || !(noise_scale >= 0.0) || !(shift_magnitude >= 0.0) ||
      !(nuisance_scale >= 0.0)) {
    throw ArgumentError("benchmark: scales and magnitudes must be non-negative");
  }
}

nlohmann::json to_json(const BenchmarkSpec& s) {
  return {{"num_domains", s.num_domains},
          {"num_classes", s.num_classes},
          {"input_dim", s.input_dim},
          {"samples_per_class", s.samples_per_class},
          {"prototype_scale", s.prototype_scale},
          {"noise_scale", s.noise_scale},
          {"shift", to_string(s.shift)},
          {"shift_magnitude", s.shift_magnitude},
          {"nuisance_dim", s.nuisance_dim},
          {"nuisance_scale", s.nuisance_scale},
          {"feature_dim", s.feature_dim},
          {"provider_gain", s.provider_gain},
          {"provider_bias_scale", s.provider_bias_scale},
          {"source_domain", s.source_domain},
          {"seed", s.seed}};
}

BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ArgumentError("benchmark spec must be a JSON object");
  static const std::set<std::string> kKnown = {
      "num_domains", "num_classes", "input_dim", "samples_per_class", "prototype_scale", "noise_scale", "shift",
      "shift_magnitude", "nuisance_dim", "nuisance_scale", "feature_dim", "provider_gain", "provider_bias_scale",
      "source_domain", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) throw ArgumentError("unknown benchmark key '" + key + "'");
  }
  BenchmarkSpec s;
  try {
    s.num_domains = j.value("num_domains", s.num_domains);
    s.num_classes = j.value("num_classes", s.num_classes);
    s.input_dim = j.value("input_dim", s.input_dim);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.prototype_scale = j.value("prototype_scale", s.prototype_scale);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    if (j.contains("shift")) s.shift = parse_shift_kind(j.at("shift").get<std::string>());
    s.shift_magnitude = j.value("shift_magnitude", s.shift_magnitude);
    s.nuisance_dim = j.value("nuisance_dim", s.nuisance_dim);
    s.nuisance_scale = j.value("nuisance_scale", s.nuisance_scale);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.provider_gain = j.value("provider_gain", s.provider_gain);
    s.provider_bias_scale = j.value("provider_bias_scale", s.provider_bias_scale);
    s.source_domain = j.value("source_domain", s.source_domain);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("benchmark spec: ") + e.what());
  }
  s.validate();
  return s;
}

FrozenProvider benchmark_provider(const BenchmarkSpec& spec) {
  ProjectionConfig pc;
  pc.input_dim = spec.input_dim;
  pc.feature_dim = spec.feature_dim;
  pc.seed = derive_seed(spec.seed, kProviderStream);
  pc.gain = spec.provider_gain;
  pc.bias_scale = spec.provider_bias_scale;
  return FrozenProvider::random_projection(pc);
}

Benchmark generate(const BenchmarkSpec& spec) {
  spec.validate();
  Rng proto_rng(derive_seed(spec.seed, kPrototypeStream));
  const MatrixD prototypes = gaussian(proto_rng, spec.num_classes, spec.input_dim,
                                      spec.prototype_scale / std::sqrt(static_cast<double>(spec.input_dim)));
  Benchmark bench{spec, benchmark_provider(spec), {}};
  bench.domains.reserve(spec.num_domains);
  for (std::size_t d = 0; d < spec.num_domains; ++d) {
    bench.domains.push_back(make_domain(spec, prototypes, bench.provider, d));
  }
  return bench;
}

std::filesystem::path write_benchmark(const Benchmark& bench, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  manifest.spec = to_json(bench.spec);
  for (std::size_t d = 0; d < bench.domains.size(); ++d) {
    const FeatureDataset& ds = bench.domains[d];
    const std::string file = ds.name() + kFeatureExtension;
    write_feature_file(ds, dir / file);
    manifest.domains.push_back(
        {ds.name(), file, sha256_file(dir / file), d == bench.spec.source_domain ? "source" : "unseen"});
  }
  const auto path = dir / "manifest.json";
  write_manifest(manifest, path);
  return path;
}

std::vector<double> nearest_mean_oracle(const FeatureDataset& train, const std::vector<FeatureDataset>& tests) {
  const std::size_t d = train.input_dim();
  const std::size_t l = train.num_classes();
  std::vector<std::vector<double>> means(l, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(l, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::size_t y = train.labels()[i];
    ++counts[y];
    for (std::size_t j = 0; j < d; ++j) means[y][j] += train.backbone_inputs()(i, j);
  }
  for (std::size_t y = 0; y < l; ++y) {
    if (counts[y] == 0) continue;
    for (std::size_t j = 0; j < d; ++j) means[y][j] /= static_cast<double>(counts[y]);
  }
  std::vector<double> acc;
  for (const FeatureDataset& test : tests) {
    if (test.input_dim() != d || test.num_classes() != l) {
      throw ArgumentError("nearest_mean_oracle: dataset '" + test.name() + "' has different dimensions");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      std::size_t best = l;
      double best_dist = 0.0;
      for (std::size_t y = 0; y < l; ++y) {
        if (counts[y] == 0) continue;
        double dist = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = test.backbone_inputs()(i, j) - means[y][j];
          dist += diff * diff;
        }
        if (best == l || dist < best_dist) {
          best = y;
          best_dist = dist;
        }
      }
      correct += best == test.labels()[i];
    }
    acc.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  return acc;
}

}  // namespace cafe
