#pragma once

// Scalar re-implementation of the training objective in extended precision.
// Shares no code with the mask network or the channel modules; it reads the
// flat parameter vector directly in the documented layout.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cafe/matrix.hpp"

namespace cafe::verify {

struct ReferenceProblem {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t backbone_width = 0;
  std::size_t channels = 0;
  std::size_t classes = 0;
  bool fc_bias = true;
  bool use_mask = true;
  MatrixD inputs;                   // B x D
  MatrixD frozen;                   // B x C
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> keep;   // per channel; empty keeps all
  double lambda = 1.5;
  double beta = 5.0;
  std::size_t c_norm = 0;           // 0 means floor(C / L)
  bool sep_on = true;
  bool div_on = true;
};

struct ReferenceLosses {
  long double cls = 0;
  long double sep = 0;
  long double div = 0;
  long double total = 0;
};

std::size_t reference_parameter_count(const ReferenceProblem& problem);

ReferenceLosses reference_losses(const ReferenceProblem& problem, std::span<const double> params);

}  // namespace cafe::verify
