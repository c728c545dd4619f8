#include "cafe/channel_modules.hpp"

#include <charconv>
#include <limits>
#include <numeric>

namespace cafe {

Rational Rational::parse(const std::string& text) {
  auto parse_int = [&](std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ArgumentError("cannot parse rational '" + text + "'");
    }
    return v;
  };
  const auto slash = text.find('/');
  Rational r;
  if (slash != std::string::npos) {
    r = {parse_int(std::string_view(text).substr(0, slash)),
         parse_int(std::string_view(text).substr(slash + 1))};
  } else {
    const auto dot = text.find('.');
    if (dot == std::string::npos) {
      r = {parse_int(text), 1};
    } else {
      const std::string digits = text.substr(0, dot) + text.substr(dot + 1);
      const std::size_t frac = text.size() - dot - 1;
      if (frac > 12) throw ArgumentError("too many decimals in rational '" + text + "'");
      std::int64_t den = 1;
      for (std::size_t i = 0; i < frac; ++i) den *= 10;
      r = {parse_int(digits), den};
    }
  }
  if (r.den <= 0 || r.num < 0) throw ArgumentError("rational must be non-negative: '" + text + "'");
  const std::int64_t g = std::gcd(r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
  return r;
}

ChannelPartition::ChannelPartition(std::size_t channels, std::size_t classes, Rational drop_rate,
                                   std::size_t c_norm)
    : channels_(channels), drop_rate_(drop_rate) {
  if (classes < 1) throw ArgumentError("split_channels: need at least one class");
  if (channels < classes) {
    throw ArgumentError("split_channels: C=" + std::to_string(channels) + " is below L=" +
                        std::to_string(classes));
  }
  if (drop_rate.den <= 0 || drop_rate.num < 0) throw ArgumentError("split_channels: invalid drop rate");
  const std::size_t base = channels / classes;
  sizes_.assign(classes, base);
  sizes_.back() += channels % classes;
  offsets_.resize(classes);
  std::exclusive_scan(sizes_.begin(), sizes_.end(), offsets_.begin(), std::size_t{0});
  c_norm_ = c_norm == 0 ? base : c_norm;
  for (std::size_t j = 0; j < classes; ++j) {
    if (drop_count(j) >= sizes_[j]) {
      throw ArgumentError("split_channels: drop rate " + drop_rate.str() + " removes every channel of piece " +
                          std::to_string(j));
    }
  }
}

std::size_t ChannelPartition::drop_count(std::size_t piece) const {
  const auto size = static_cast<std::int64_t>(sizes_.at(piece));
  return static_cast<std::size_t>(drop_rate_.num * size / drop_rate_.den);
}

ChannelPartition split_channels(std::size_t channels, std::size_t classes, Rational drop_rate,
                                std::size_t c_norm) {
  return ChannelPartition(channels, classes, drop_rate, c_norm);
}

std::size_t DropMask::zeros_in(const ChannelPartition& partition, std::size_t piece) const {
  const std::size_t lo = partition.piece_offsets()[piece];
  const std::size_t hi = lo + partition.piece_sizes()[piece];
  std::size_t zeros = 0;
  for (std::size_t c = lo; c < hi; ++c) zeros += keep[c] == 0;
  return zeros;
}

DropMask sample_drop_mask(const ChannelPartition& partition, Rng& rng) {
  DropMask mask = keep_all(partition);
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < partition.classes(); ++j) {
    const std::size_t size = partition.piece_sizes()[j];
    const std::size_t count = partition.drop_count(j);
    pool.resize(size);
    std::iota(pool.begin(), pool.end(), partition.piece_offsets()[j]);
    // Partial Fisher-Yates: the first `count` slots are a uniform sample.
    for (std::size_t k = 0; k < count; ++k) {
      std::swap(pool[k], pool[k + rng.uniform_index(size - k)]);
      mask.keep[pool[k]] = 0;
    }
  }
  return mask;
}

DropMask keep_all(const ChannelPartition& partition) {
  return DropMask{std::vector<std::uint8_t>(partition.channels(), 1)};
}

namespace {

PiecewiseMax pooled_max(const MatrixD& masked, const std::uint8_t* keep, const ChannelPartition& partition) {
  if (masked.cols() != partition.channels()) {
    throw ArgumentError("piecewise max: feature width " + std::to_string(masked.cols()) +
                        " does not match partition C=" + std::to_string(partition.channels()));
  }
  const std::size_t b = masked.rows();
  const std::size_t l = partition.classes();
  PiecewiseMax out{MatrixD(b, l), std::vector<std::size_t>(b * l), partition.channels()};
  for (std::size_t i = 0; i < b; ++i) {
    auto row = masked.row(i);
    for (std::size_t j = 0; j < l; ++j) {
      const std::size_t lo = partition.piece_offsets()[j];
      const std::size_t hi = lo + partition.piece_sizes()[j];
      std::size_t best = hi;
      for (std::size_t c = lo; c < hi; ++c) {
        if (keep && !keep[c]) continue;
        if (best == hi || row[c] > row[best]) best = c;
      }
      out.values(i, j) = row[best];
      out.winners[i * l + j] = best;
    }
  }
  return out;
}

void check_cache(const PiecewiseMax& cache, const ChannelPartition& partition, std::size_t rows,
                 const char* what) {
  if (cache.channels != partition.channels() || cache.values.rows() != rows ||
      cache.values.cols() != partition.classes() || cache.winners.size() != rows * partition.classes()) {
    throw ContractViolation(std::string("backward_channel: ") + what +
                            " cache does not match the partition or batch");
  }
}

}  // namespace

PiecewiseMax sep_logits(const MatrixD& masked, const DropMask& drop, const ChannelPartition& partition) {
  if (drop.keep.size() != partition.channels()) throw ArgumentError("sep_logits: drop mask width mismatch");
  return pooled_max(masked, drop.keep.data(), partition);
}

PiecewiseMax piece_max(const MatrixD& masked, const ChannelPartition& partition) {
  return pooled_max(masked, nullptr, partition);
}

SoftmaxXent sep_loss(const MatrixD& sep_logits, std::span<const std::uint8_t> labels) {
  return softmax_cross_entropy(sep_logits, labels);
}

DiverseLoss div_loss(const MatrixD& masked, const ChannelPartition& partition) {
  DiverseLoss out{0.0, piece_max(masked, partition)};
  double sum = 0.0;
  for (double v : out.maxima.values.values()) sum += v;
  const double norm = static_cast<double>(masked.rows()) * static_cast<double>(partition.c_norm());
  out.loss = 1.0 - sum / norm;
  return out;
}

MatrixD backward_channel(const ChannelPartition& partition, std::size_t rows, const ChannelUpstream& up) {
  const std::size_t l = partition.classes();
  MatrixD grad(rows, partition.channels());
  if (up.sep) {
    check_cache(*up.sep, partition, rows, "separation");
    if (!up.sep_grad || up.sep_grad->rows() != rows || up.sep_grad->cols() != l) {
      throw ContractViolation("backward_channel: separation gradient does not match its cache");
    }
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < l; ++j) {
        grad(i, up.sep->winner(i, j)) += up.sep_weight * (*up.sep_grad)(i, j);
      }
    }
  }
  if (up.div) {
    check_cache(*up.div, partition, rows, "diverse");
    const double g = -up.div_weight / (static_cast<double>(rows) * static_cast<double>(partition.c_norm()));
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < l; ++j) grad(i, up.div->winner(i, j)) += g;
    }
  }
  return grad;
}

}  // namespace cafe
