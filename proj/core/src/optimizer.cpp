#include "cafe/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "cafe/errors.hpp"

namespace cafe {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ArgumentError("adam: lr must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ArgumentError("adam: gamma must be in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ArgumentError("adam: betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw ArgumentError("adam: eps must be positive");
  if (!(weight_decay >= 0.0)) throw ArgumentError("adam: weight_decay must be non-negative");
}

double lr_at(const AdamConfig& config, std::size_t epoch) {
  return config.lr * std::pow(config.gamma, static_cast<double>(epoch));
}

Adam::Adam(AdamConfig config, std::vector<bool> decay_mask)
    : config_(config), decay_(std::move(decay_mask)), m_(decay_.size(), 0.0), v_(decay_.size(), 0.0) {
  config_.validate();
}

void Adam::step(std::span<double> params, std::span<const double> grads, std::size_t epoch) {
  if (params.size() != decay_.size() || grads.size() != decay_.size()) {
    throw ArgumentError("adam: parameter/gradient size does not match optimizer state");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingDiverged("adam: non-finite gradient at coordinate " + std::to_string(i));
    }
  }
  ++t_;
  const double lr = lr_at(epoch);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (decay_[i]) g += config_.weight_decay * params[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
  }
}

GradCheckResult grad_check(const LossFn& loss, std::span<const double> params,
                           std::span<const double> analytic, double h) {
  if (params.size() != analytic.size()) throw ArgumentError("grad_check: size mismatch");
  if (!(h > 0.0)) throw ArgumentError("grad_check: step must be positive");
  std::vector<double> probe(params.begin(), params.end());
  GradCheckResult worst;
  worst.max_rel_error = -1.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    const double hi = saved + h;
    const double lo = saved - h;
    probe[i] = hi;
    const long double up = loss(probe);
    probe[i] = lo;
    const long double down = loss(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw TrainingDiverged("grad_check: non-finite loss at coordinate " + std::to_string(i));
    }
    const auto numeric = static_cast<double>((up - down) / (static_cast<long double>(hi) - lo));
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (err > worst.max_rel_error) worst = {err, i, analytic[i], numeric};
  }
  if (worst.max_rel_error < 0.0) worst.max_rel_error = 0.0;
  return worst;
}

}  // namespace cafe
