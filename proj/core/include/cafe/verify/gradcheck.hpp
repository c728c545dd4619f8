#pragma once

#include <cstdint>

#include "cafe/optimizer.hpp"

namespace cafe::verify {

/// A small random model and batch used to verify analytic gradients.
struct GradCheckCase {
  std::size_t batch = 4;
  std::size_t input_dim = 3;
  std::size_t hidden = 5;
  std::size_t channels = 14;
  std::size_t classes = 7;
  double lambda = 1.5;
  double beta = 5.0;
  std::uint64_t seed = 0;
};

/// B in [1, 4], D in [1, 6], H in [1, 8], C in {14, 21}, L = 7.
GradCheckCase random_gradcheck_case(std::uint64_t seed);

struct GradCheckReport {
  GradCheckResult worst;
  double analytic_loss = 0.0;
  long double reference_loss = 0;
  std::size_t num_parameters = 0;
};

/// Analytic gradient of the full objective (classification, separation with
/// a fixed drop mask, and diverse terms) against central differences of
/// reference_losses.
GradCheckReport check_training_gradients(const GradCheckCase& c, double h = 1e-5);

}  // namespace cafe::verify
