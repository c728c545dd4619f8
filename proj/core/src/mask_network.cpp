#include "cafe/mask_network.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "cafe/random.hpp"
#include "cafe/softmax.hpp"

namespace cafe {
namespace {

std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// out(i, o) = bias(o) + sum_k in(i, k) * w(o, k)
MatrixD affine(const MatrixD& in, std::span<const double> w, std::span<const double> bias,
               std::size_t out_dim) {
  const std::size_t in_dim = in.cols();
  MatrixD out(in.rows(), out_dim);
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto x = in.row(i);
    auto y = out.row(i);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = w.data() + o * in_dim;
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t k = 0; k < in_dim; ++k) acc += x[k] * wr[k];
      y[o] = acc;
    }
  }
  return out;
}

// Accumulates dW += dz^T * in, db += colsum(dz); returns dz * W.
MatrixD affine_backward(const MatrixD& in, const MatrixD& dz, std::span<const double> w,
                        std::span<double> dw, std::span<double> db, bool need_input_grad) {
  const std::size_t in_dim = in.cols();
  const std::size_t out_dim = dz.cols();
  MatrixD din;
  if (need_input_grad) din = MatrixD(in.rows(), in_dim);
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto x = in.row(i);
    auto g = dz.row(i);
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double go = g[o];
      if (!db.empty()) db[o] += go;
      double* dwr = dw.data() + o * in_dim;
      for (std::size_t k = 0; k < in_dim; ++k) dwr[k] += go * x[k];
      if (need_input_grad) {
        const double* wr = w.data() + o * in_dim;
        auto dx = din.row(i);
        for (std::size_t k = 0; k < in_dim; ++k) dx[k] += go * wr[k];
      }
    }
  }
  return din;
}

void require_finite(const MatrixD& m, const char* what) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw TrainingDiverged(std::string("non-finite ") + what);
  }
}

}  // namespace

void NetworkShape::validate() const {
  if (input_dim == 0) throw ArgumentError("NetworkShape: input_dim must be positive");
  if (feature_dim == 0) throw ArgumentError("NetworkShape: feature_dim must be positive");
  if (num_classes == 0) throw ArgumentError("NetworkShape: num_classes must be positive");
  for (std::size_t h : hidden) {
    if (h == 0) throw ArgumentError("NetworkShape: hidden widths must be positive");
  }
  if (backbone_out != 0) adapt_window(backbone_out, feature_dim);
}

MaskNetwork::MaskNetwork(NetworkShape shape) : shape_(std::move(shape)), id_(next_network_id()) {
  shape_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, bool is_bias) {
    slots_.push_back({std::move(name), offset, rows, cols, is_bias});
    offset += rows * cols;
  };
  std::size_t in = shape_.input_dim;
  for (std::size_t k = 0; k < num_backbone_layers(); ++k) {
    const std::size_t out = k < shape_.hidden.size() ? shape_.hidden[k] : shape_.backbone_width();
    add("backbone." + std::to_string(k) + ".weight", out, in, false);
    add("backbone." + std::to_string(k) + ".bias", 1, out, true);
    in = out;
  }
  add("fc.weight", shape_.num_classes, shape_.feature_dim, false);
  if (shape_.fc_bias) add("fc.bias", 1, shape_.num_classes, true);
  params_.assign(offset, 0.0);
}

MaskNetwork::MaskNetwork(NetworkShape shape, std::uint64_t seed) : MaskNetwork(std::move(shape)) {
  Rng rng(seed);
  for (const TensorSlot& s : slots_) {
    if (s.name == "fc.bias") continue;
    // fan_in is the column count of the layer's weight; biases share it.
    const std::size_t fan_in = s.is_bias ? slots_[&s - slots_.data() - 1].cols : s.cols;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < s.size(); ++i) params_[s.offset + i] = rng.uniform(-bound, bound);
  }
}

MaskNetwork MaskNetwork::zeros(NetworkShape shape) { return MaskNetwork(std::move(shape)); }

MaskNetwork::MaskNetwork(const MaskNetwork& other)
    : shape_(other.shape_), slots_(other.slots_), params_(other.params_), id_(next_network_id()) {}

MaskNetwork& MaskNetwork::operator=(const MaskNetwork& other) {
  if (this != &other) {
    shape_ = other.shape_;
    slots_ = other.slots_;
    params_ = other.params_;
    id_ = next_network_id();
    version_ = 0;
  }
  return *this;
}

const TensorSlot& MaskNetwork::slot(std::string_view name) const {
  for (const TensorSlot& s : slots_) {
    if (s.name == name) return s;
  }
  throw ArgumentError("MaskNetwork: no parameter tensor named " + std::string(name));
}

std::span<double> MaskNetwork::mutable_parameters() noexcept {
  ++version_;
  return params_;
}

std::span<const double> MaskNetwork::tensor(const TensorSlot& s) const {
  return std::span<const double>(params_).subspan(s.offset, s.size());
}

std::vector<bool> MaskNetwork::decay_mask() const {
  std::vector<bool> mask(params_.size(), true);
  for (const TensorSlot& s : slots_) {
    if (s.is_bias) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(s.offset), s.size(), false);
  }
  return mask;
}

ForwardCache MaskNetwork::forward_mask(const MatrixD& inputs) const {
  if (!shape_.use_mask) throw ContractViolation("forward_mask: network has no mask path");
  if (inputs.cols() != shape_.input_dim) {
    throw ArgumentError("forward_mask: input width " + std::to_string(inputs.cols()) +
                        " does not match network input_dim " + std::to_string(shape_.input_dim));
  }
  ForwardCache cache;
  cache.network_id = id_;
  cache.version = version_;
  cache.input = inputs;
  const MatrixD* current = &cache.input;
  for (std::size_t k = 0; k < num_backbone_layers(); ++k) {
    const TensorSlot& w = slots_[2 * k];
    const TensorSlot& b = slots_[2 * k + 1];
    MatrixD z = affine(*current, tensor(w), tensor(b), w.rows);
    if (k + 1 < num_backbone_layers()) {
      MatrixD h = z;
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
      cache.hidden_pre.push_back(std::move(z));
      cache.hidden_post.push_back(std::move(h));
      current = &cache.hidden_post.back();
    } else {
      cache.backbone_out = std::move(z);
    }
  }
  cache.mask = shape_.backbone_out != 0 && shape_.backbone_out != shape_.feature_dim
                   ? adapt_dim(cache.backbone_out, shape_.feature_dim)
                   : cache.backbone_out;
  require_finite(cache.mask, "mask activation");
  cache.mask_sigmoid = sigmoid(cache.mask);
  return cache;
}

MatrixD MaskNetwork::logits(const MatrixD& masked) const {
  if (masked.cols() != shape_.feature_dim) {
    throw ArgumentError("logits: feature width does not match network feature_dim");
  }
  const TensorSlot& w = slot("fc.weight");
  std::span<const double> b;
  if (shape_.fc_bias) b = tensor(slot("fc.bias"));
  return affine(masked, tensor(w), b, shape_.num_classes);
}

ModelForward MaskNetwork::forward(const MatrixD& inputs, const MatrixD& frozen) const {
  ModelForward out;
  if (shape_.use_mask) {
    if (inputs.rows() != frozen.rows()) throw ArgumentError("forward: input and feature row counts differ");
    out.cache = forward_mask(inputs);
    out.masked = apply_mask(out.cache.mask_sigmoid, frozen);
  } else {
    require_shape(frozen, frozen.rows(), shape_.feature_dim, "forward: frozen features");
    out.cache.network_id = id_;
    out.cache.version = version_;
    out.masked = frozen;
  }
  out.logits = logits(out.masked);
  return out;
}

void MaskNetwork::check_cache(const ForwardCache& cache) const {
  if (cache.network_id != id_ || cache.version != version_) {
    throw ContractViolation("backward: forward cache does not belong to the current parameters");
  }
}

std::vector<double> MaskNetwork::backward(const ModelForward& fwd, const MatrixD& frozen,
                                          const MatrixD& dlogits, const MatrixD& dmasked_extra) const {
  check_cache(fwd.cache);
  const std::size_t b = fwd.masked.rows();
  const std::size_t c = shape_.feature_dim;
  require_shape(dlogits, b, shape_.num_classes, "backward: dlogits");
  require_shape(frozen, b, c, "backward: frozen features");
  if (!dmasked_extra.empty()) require_shape(dmasked_extra, b, c, "backward: extra masked gradient");

  std::vector<double> grads(params_.size(), 0.0);
  std::span<double> g(grads);

  const TensorSlot& fw = slot("fc.weight");
  std::span<double> fdb;
  if (shape_.fc_bias) {
    const TensorSlot& fb = slot("fc.bias");
    fdb = g.subspan(fb.offset, fb.size());
  }
  MatrixD dmasked = affine_backward(fwd.masked, dlogits, tensor(fw), g.subspan(fw.offset, fw.size()),
                                    fdb, shape_.use_mask);
  if (!shape_.use_mask) return grads;

  if (!dmasked_extra.empty()) {
    auto dst = dmasked.values();
    auto src = dmasked_extra.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  // dl/dM = (dl/dF~ (.) F) (.) M_s (.) (1 - M_s)
  const MatrixD& ms = fwd.cache.mask_sigmoid;
  MatrixD dmask(b, c);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double s = ms(i, j);
      dmask(i, j) = dmasked(i, j) * frozen(i, j) * s * (1.0 - s);
    }
  }
  MatrixD dz = shape_.backbone_width() != c ? adapt_dim_backward(dmask, shape_.backbone_width())
                                            : std::move(dmask);

  for (std::size_t k = num_backbone_layers(); k-- > 0;) {
    const TensorSlot& w = slots_[2 * k];
    const TensorSlot& bs = slots_[2 * k + 1];
    const MatrixD& layer_in = k == 0 ? fwd.cache.input : fwd.cache.hidden_post[k - 1];
    MatrixD din = affine_backward(layer_in, dz, tensor(w), g.subspan(w.offset, w.size()),
                                  g.subspan(bs.offset, bs.size()), k > 0);
    if (k == 0) break;
    const MatrixD& pre = fwd.cache.hidden_pre[k - 1];
    auto d = din.values();
    auto p = pre.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(p[i] > 0.0)) d[i] = 0.0;
    }
    dz = std::move(din);
  }
  return grads;
}

MatrixD sigmoid(const MatrixD& m) {
  // Clamped so the open-interval bound holds in floating point even when the
  // exact value rounds to 0 or 1.
  constexpr double kLo = std::numeric_limits<double>::min();
  constexpr double kHi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  MatrixD out(m.rows(), m.cols());
  auto src = m.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double x = src[i];
    double s;
    if (x >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      s = e / (1.0 + e);
    }
    dst[i] = std::clamp(s, kLo, kHi);
  }
  return out;
}

MatrixD apply_mask(const MatrixD& mask_sigmoid, const MatrixD& frozen) {
  if (!mask_sigmoid.same_shape(frozen)) throw ArgumentError("apply_mask: shape mismatch");
  MatrixD out(frozen.rows(), frozen.cols());
  auto a = mask_sigmoid.values();
  auto f = frozen.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * f[i];
  return out;
}

ClsLoss cls_loss(const MaskNetwork& net, const MatrixD& masked, std::span<const std::uint8_t> labels) {
  ClsLoss out;
  out.logits = net.logits(masked);
  SoftmaxXent xent = softmax_cross_entropy(out.logits, labels);
  out.loss = xent.loss;
  out.dlogits = std::move(xent.grad);
  return out;
}

std::size_t adapt_window(std::size_t from, std::size_t to) {
  if (to == 0) throw ArgumentError("adapt_dim: target width must be positive");
  if (from < to) {
    throw ArgumentError("adapt_dim: source width " + std::to_string(from) + " is below target " +
                        std::to_string(to));
  }
  const std::size_t window = (from + to - 1) / to;
  const std::size_t outputs = (from + window - 1) / window;
  if (outputs != to) {
    throw ArgumentError("adapt_dim: windows of " + std::to_string(window) + " over " +
                        std::to_string(from) + " channels give " + std::to_string(outputs) +
                        " outputs, not " + std::to_string(to));
  }
  return window;
}

MatrixD adapt_dim(const MatrixD& features, std::size_t target) {
  const std::size_t from = features.cols();
  const std::size_t window = adapt_window(from, target);
  MatrixD out(features.rows(), target);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto in = features.row(i);
    for (std::size_t j = 0; j < target; ++j) {
      const std::size_t lo = j * window;
      const std::size_t hi = std::min(from, lo + window);
      double acc = 0.0;
      for (std::size_t k = lo; k < hi; ++k) acc += in[k];
      out(i, j) = acc / static_cast<double>(hi - lo);
    }
  }
  return out;
}

MatrixD adapt_dim_backward(const MatrixD& grad_out, std::size_t source_width) {
  const std::size_t target = grad_out.cols();
  const std::size_t window = adapt_window(source_width, target);
  MatrixD out(grad_out.rows(), source_width);
  for (std::size_t i = 0; i < grad_out.rows(); ++i) {
    for (std::size_t j = 0; j < target; ++j) {
      const std::size_t lo = j * window;
      const std::size_t hi = std::min(source_width, lo + window);
      const double g = grad_out(i, j) / static_cast<double>(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) out(i, k) = g;
    }
  }
  return out;
}

}  // namespace cafe
