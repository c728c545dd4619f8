#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cafe {

struct AdamConfig {
  double lr = 2e-4;
  double gamma = 0.9;  // exponential decay of lr, applied once per epoch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

/// lr * gamma^epoch
double lr_at(const AdamConfig& config, std::size_t epoch);

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
/// Coordinates whose decay-mask entry is false (biases) are never decayed.
class Adam {
 public:
  Adam(AdamConfig config, std::vector<bool> decay_mask);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return t_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }
  double lr_at(std::size_t epoch) const { return cafe::lr_at(config_, epoch); }

  /// Throws TrainingDiverged on a non-finite gradient, leaving params untouched.
  void step(std::span<double> params, std::span<const double> grads, std::size_t epoch);

 private:
  AdamConfig config_;
  std::vector<bool> decay_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Extended-precision return type keeps the difference of two nearby losses
/// above the roundoff floor of a double.
using LossFn = std::function<long double(std::span<const double>)>;

/// Central differences (f(p+h) - f(p-h)) / 2h per coordinate, compared with
/// `analytic` as |a - n| / max(|a|, |n|, 1e-8). The divisor is the step
/// actually taken after rounding p +- h to double.
GradCheckResult grad_check(const LossFn& loss, std::span<const double> params,
                           std::span<const double> analytic, double h = 1e-5);

}  // namespace cafe
