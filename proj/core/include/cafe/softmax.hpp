#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "cafe/matrix.hpp"

namespace cafe {

struct SoftmaxXent {
  double loss = 0.0;  // mean over rows of -log softmax(row)[label]
  MatrixD grad;       // d loss / d logits, already divided by the row count
};

/// Mean softmax cross-entropy with max-subtraction log-sum-exp.
SoftmaxXent softmax_cross_entropy(const MatrixD& logits, std::span<const std::uint8_t> labels);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> row);

}  // namespace cafe
