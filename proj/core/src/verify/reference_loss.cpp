#include "cafe/verify/reference_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cafe/errors.hpp"

namespace cafe::verify {
namespace {

using Real = long double;

std::vector<std::size_t> layer_widths(const ReferenceProblem& p) {
  std::vector<std::size_t> widths{p.input_dim};
  widths.insert(widths.end(), p.hidden.begin(), p.hidden.end());
  widths.push_back(p.backbone_width ? p.backbone_width : p.channels);
  return widths;
}

Real log_softmax_at(const std::vector<Real>& z, std::size_t label) {
  Real top = z[0];
  for (Real v : z) top = std::max(top, v);
  Real sum = 0;
  for (Real v : z) sum += std::exp(v - top);
  return z[label] - top - std::log(sum);
}

}  // namespace

std::size_t reference_parameter_count(const ReferenceProblem& p) {
  const auto widths = layer_widths(p);
  std::size_t n = 0;
  for (std::size_t k = 0; p.use_mask && k + 1 < widths.size(); ++k) n += widths[k + 1] * widths[k] + widths[k + 1];
  n += p.classes * p.channels;
  if (p.fc_bias) n += p.classes;
  return n;
}

ReferenceLosses reference_losses(const ReferenceProblem& p, std::span<const double> params) {
  if (params.size() != reference_parameter_count(p)) throw ArgumentError("reference_losses: parameter count");
  const std::size_t rows = p.labels.size();
  const std::size_t c = p.channels;
  const std::size_t l = p.classes;
  if (rows == 0 || l == 0 || c < l) throw ArgumentError("reference_losses: bad problem");
  const auto widths = layer_widths(p);

  // Piece bounds: floor(C/L) each, remainder on the last piece.
  std::vector<std::size_t> begin(l), end(l);
  for (std::size_t j = 0; j < l; ++j) {
    begin[j] = j * (c / l);
    end[j] = j + 1 == l ? c : (j + 1) * (c / l);
  }
  const Real c_norm = static_cast<Real>(p.c_norm ? p.c_norm : c / l);

  ReferenceLosses out;
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<Real> masked(c);
    for (std::size_t ch = 0; ch < c; ++ch) masked[ch] = p.frozen(i, ch);

    if (p.use_mask) {
      std::vector<Real> act(p.input_dim);
      for (std::size_t d = 0; d < p.input_dim; ++d) act[d] = p.inputs(i, d);
      std::size_t at = 0;
      for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const std::size_t in = widths[k];
        const std::size_t out_w = widths[k + 1];
        const std::size_t bias_at = at + out_w * in;
        std::vector<Real> next(out_w);
        for (std::size_t o = 0; o < out_w; ++o) {
          Real s = params[bias_at + o];
          for (std::size_t q = 0; q < in; ++q) s += static_cast<Real>(params[at + o * in + q]) * act[q];
          const bool last = k + 2 == widths.size();
          next[o] = last ? s : std::max<Real>(s, 0);
        }
        at = bias_at + out_w;
        act = std::move(next);
      }
      // Window means when the backbone is wider than C.
      if (act.size() != c) {
        const std::size_t w = (act.size() + c - 1) / c;
        if (act.size() / w + (act.size() % w != 0) != c) throw ArgumentError("reference_losses: window");
        std::vector<Real> pooled(c, 0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t lo = ch * w;
          const std::size_t hi = std::min(lo + w, act.size());
          for (std::size_t q = lo; q < hi; ++q) pooled[ch] += act[q];
          pooled[ch] /= static_cast<Real>(hi - lo);
        }
        act = std::move(pooled);
      }
      for (std::size_t ch = 0; ch < c; ++ch) masked[ch] *= 1 / (1 + std::exp(-act[ch]));
    }

    const std::size_t fc_at = params.size() - l * c - (p.fc_bias ? l : 0);
    std::vector<Real> logits(l);
    for (std::size_t k = 0; k < l; ++k) {
      Real s = p.fc_bias ? static_cast<Real>(params[fc_at + l * c + k]) : 0;
      for (std::size_t ch = 0; ch < c; ++ch) s += static_cast<Real>(params[fc_at + k * c + ch]) * masked[ch];
      logits[k] = s;
    }
    out.cls -= log_softmax_at(logits, p.labels[i]);

    if (p.sep_on) {
      std::vector<Real> sep(l);
      for (std::size_t j = 0; j < l; ++j) {
        Real best = -std::numeric_limits<Real>::infinity();
        for (std::size_t ch = begin[j]; ch < end[j]; ++ch) {
          if (p.keep.empty() || p.keep[ch]) best = std::max(best, masked[ch]);
        }
        sep[j] = best;
      }
      out.sep -= log_softmax_at(sep, p.labels[i]);
    }
    if (p.div_on) {
      for (std::size_t j = 0; j < l; ++j) {
        out.div += *std::max_element(masked.begin() + static_cast<std::ptrdiff_t>(begin[j]),
                                     masked.begin() + static_cast<std::ptrdiff_t>(end[j]));
      }
    }
  }
  const Real b = static_cast<Real>(rows);
  out.cls /= b;
  out.sep /= b;
  out.div = p.div_on ? 1 - out.div / (b * c_norm) : 0;
  out.total = out.cls + static_cast<Real>(p.lambda) * out.sep + static_cast<Real>(p.beta) * out.div;
  return out;
}

}  // namespace cafe::verify
