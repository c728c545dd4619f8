#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cafe/matrix.hpp"

namespace cafe {

struct NetworkShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden{128};
  std::size_t feature_dim = 512;
  /// Width of the last backbone layer. 0 means feature_dim; a larger width
  /// is reduced to feature_dim with adapt_dim.
  std::size_t backbone_out = 0;
  std::size_t num_classes = 7;
  bool fc_bias = true;
  /// false gives the no-mask baseline: no backbone, the FC head reads F directly.
  bool use_mask = true;

  std::size_t backbone_width() const noexcept { return backbone_out ? backbone_out : feature_dim; }
  void validate() const;
};

/// Location of one parameter tensor inside the flat parameter vector.
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool is_bias = false;

  std::size_t size() const noexcept { return rows * cols; }
};

/// Intermediate values of the mask path for one batch.
struct ForwardCache {
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  MatrixD input;
  std::vector<MatrixD> hidden_pre;   // pre-activation of each hidden layer
  std::vector<MatrixD> hidden_post;  // rectified output of each hidden layer
  MatrixD backbone_out;
  MatrixD mask;          // M
  MatrixD mask_sigmoid;  // M_s
};

struct ModelForward {
  ForwardCache cache;  // empty mask fields when the network has no mask
  MatrixD masked;      // F~ = M_s (.) F, or F itself without a mask
  MatrixD logits;
};

/// Trainable part of the model: a rectifier MLP producing pre-sigmoid masks
/// over C channels, and the FC classification head. Parameters live in one
/// flat 64-bit vector laid out as
///   backbone.0.weight, backbone.0.bias, ..., fc.weight[, fc.bias]
/// with weights stored out x in.
class MaskNetwork {
 public:
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; FC bias zero.
  MaskNetwork(NetworkShape shape, std::uint64_t seed);
  static MaskNetwork zeros(NetworkShape shape);

  MaskNetwork(const MaskNetwork& other);
  MaskNetwork& operator=(const MaskNetwork& other);
  MaskNetwork(MaskNetwork&&) noexcept = default;
  MaskNetwork& operator=(MaskNetwork&&) noexcept = default;

  const NetworkShape& shape() const noexcept { return shape_; }
  std::span<const TensorSlot> slots() const noexcept { return slots_; }
  const TensorSlot& slot(std::string_view name) const;
  std::size_t num_parameters() const noexcept { return params_.size(); }

  std::span<const double> parameters() const noexcept { return params_; }
  /// Invalidates every ForwardCache taken from this network.
  std::span<double> mutable_parameters() noexcept;
  std::span<const double> tensor(const TensorSlot& slot) const;

  /// true for weights, false for biases (biases are excluded from decay).
  std::vector<bool> decay_mask() const;
  std::uint64_t version() const noexcept { return version_; }

  /// Backbone forward followed by M_s = sigmoid(M).
  ForwardCache forward_mask(const MatrixD& inputs) const;
  /// FC head: masked * W^T + b.
  MatrixD logits(const MatrixD& masked) const;
  ModelForward forward(const MatrixD& inputs, const MatrixD& frozen) const;

  /// Gradient of the training loss w.r.t. every parameter. `dlogits` is the
  /// upstream gradient at the FC output; `dmasked_extra` (empty or B x C) is
  /// any gradient reaching F~ from losses that bypass the FC head.
  std::vector<double> backward(const ModelForward& fwd, const MatrixD& frozen, const MatrixD& dlogits,
                               const MatrixD& dmasked_extra = {}) const;

 private:
  explicit MaskNetwork(NetworkShape shape);
  void check_cache(const ForwardCache& cache) const;
  std::size_t num_backbone_layers() const noexcept { return shape_.use_mask ? shape_.hidden.size() + 1 : 0; }

  NetworkShape shape_;
  std::vector<TensorSlot> slots_;
  std::vector<double> params_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

/// Elementwise logistic function, clamped so every output lies strictly in (0, 1).
MatrixD sigmoid(const MatrixD& m);

/// F~ = M_s (.) F.
MatrixD apply_mask(const MatrixD& mask_sigmoid, const MatrixD& frozen);

struct ClsLoss {
  double loss = 0.0;
  MatrixD logits;
  MatrixD dlogits;
};
ClsLoss cls_loss(const MaskNetwork& net, const MatrixD& masked, std::span<const std::uint8_t> labels);

/// Window width used to reduce `from` channels to `to`: ceil(from / to).
/// Throws ArgumentError unless the windows produce exactly `to` outputs.
std::size_t adapt_window(std::size_t from, std::size_t to);

/// Mean over non-overlapping windows of adapt_window(C', C) channels; the
/// final window may be shorter.
MatrixD adapt_dim(const MatrixD& features, std::size_t target);
MatrixD adapt_dim_backward(const MatrixD& grad_out, std::size_t source_width);

}  // namespace cafe
