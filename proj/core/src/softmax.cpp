#include "cafe/softmax.hpp"

#include <cmath>

namespace cafe {

SoftmaxXent softmax_cross_entropy(const MatrixD& logits, std::span<const std::uint8_t> labels) {
  const std::size_t b = logits.rows();
  const std::size_t l = logits.cols();
  if (b == 0 || l == 0) throw ArgumentError("softmax_cross_entropy: empty logits");
  if (labels.size() != b) throw ArgumentError("softmax_cross_entropy: label count does not match rows");

  SoftmaxXent out{0.0, MatrixD(b, l)};
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= l) throw ArgumentError("softmax_cross_entropy: label out of range");
    auto z = logits.row(i);
    const double zmax = z[argmax(z)];
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    total += lse - z[labels[i]];
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < l; ++j) g[j] = std::exp(z[j] - lse) * inv_b;
    g[labels[i]] -= inv_b;
  }
  out.loss = total * inv_b;
  return out;
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

}  // namespace cafe
