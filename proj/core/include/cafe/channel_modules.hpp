#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cafe/matrix.hpp"
#include "cafe/random.hpp"
#include "cafe/softmax.hpp"

namespace cafe {

/// Exact drop rate, so drop counts come from integer arithmetic.
struct Rational {
  std::int64_t num = 10;
  std::int64_t den = 73;

  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  /// Accepts "a/b" or a decimal such as "0.25".
  static Rational parse(const std::string& text);
  friend bool operator==(const Rational&, const Rational&) = default;
};

/// Split of C channels into L contiguous pieces, one per class. The first
/// L-1 pieces hold floor(C/L) channels and the last one takes the remainder
/// (512 channels, 7 classes -> six pieces of 73 and one of 74).
class ChannelPartition {
 public:
  /// c_norm = 0 selects floor(C/L).
  ChannelPartition(std::size_t channels, std::size_t classes, Rational drop_rate = {},
                   std::size_t c_norm = 0);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t classes() const noexcept { return sizes_.size(); }
  std::span<const std::size_t> piece_sizes() const noexcept { return sizes_; }
  std::span<const std::size_t> piece_offsets() const noexcept { return offsets_; }
  const Rational& drop_rate() const noexcept { return drop_rate_; }
  std::size_t c_norm() const noexcept { return c_norm_; }
  /// floor(drop_rate * size_j)
  std::size_t drop_count(std::size_t piece) const;

 private:
  std::size_t channels_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  Rational drop_rate_;
  std::size_t c_norm_;
};

ChannelPartition split_channels(std::size_t channels, std::size_t classes, Rational drop_rate = {},
                                std::size_t c_norm = 0);

/// Per-channel keep flags, shared by every row of a batch.
struct DropMask {
  std::vector<std::uint8_t> keep;

  std::size_t zeros_in(const ChannelPartition& partition, std::size_t piece) const;
};

/// Drops exactly drop_count(j) uniformly chosen channels in every piece j.
DropMask sample_drop_mask(const ChannelPartition& partition, Rng& rng);
DropMask keep_all(const ChannelPartition& partition);

/// Per-(row, piece) maxima and the global channel index that won each one.
struct PiecewiseMax {
  MatrixD values;                    // B x L
  std::vector<std::size_t> winners;  // B x L, row-major
  std::size_t channels = 0;

  std::size_t winner(std::size_t row, std::size_t piece) const { return winners[row * values.cols() + piece]; }
};

/// Max over surviving channels of each piece; ties go to the lowest index.
PiecewiseMax sep_logits(const MatrixD& masked, const DropMask& drop, const ChannelPartition& partition);

/// Max over every channel of each piece (no drop).
PiecewiseMax piece_max(const MatrixD& masked, const ChannelPartition& partition);

SoftmaxXent sep_loss(const MatrixD& sep_logits, std::span<const std::uint8_t> labels);

struct DiverseLoss {
  double loss = 0.0;
  PiecewiseMax maxima;
};

/// 1 - (1 / (B * c_norm)) * sum of piece maxima. Reads F~ without any drop.
DiverseLoss div_loss(const MatrixD& masked, const ChannelPartition& partition);

struct ChannelUpstream {
  const PiecewiseMax* sep = nullptr;
  const MatrixD* sep_grad = nullptr;  // d l_sep / d sep_logits
  double sep_weight = 0.0;            // lambda
  const PiecewiseMax* div = nullptr;
  double div_weight = 0.0;            // beta
};

/// Gradient w.r.t. F~ of lambda * l_sep + beta * l_div. Each max routes its
/// gradient to its cached winner only.
MatrixD backward_channel(const ChannelPartition& partition, std::size_t rows, const ChannelUpstream& up);

}  // namespace cafe
