#include "danet/model.hpp"

#include <cmath>
#include <stdexcept>

#include "danet/rng.hpp"

namespace danet::model {

namespace {
constexpr double kNormEps = 1e-12;

int conv_out(int n) { return (n - 1) / 2 + 1; }  // 3x3, stride 2, pad 1

void conv_forward(const Param& w, const Param& b, const Tensor& in, Tensor& preact) {
  const int in_c = in.shape[0], h = in.shape[1], wd = in.shape[2];
  const int out_c = w.value.shape[0];
  const int oh = conv_out(h), ow = conv_out(wd);
  preact = Tensor({out_c, oh, ow});
  for (int oc = 0; oc < out_c; ++oc) {
    const std::size_t w_base = static_cast<std::size_t>(oc) * in_c * 9;
    for (int orow = 0; orow < oh; ++orow) {
      for (int ocol = 0; ocol < ow; ++ocol) {
        double acc = b.value.data[oc];
        for (int ic = 0; ic < in_c; ++ic) {
          const std::size_t in_base = static_cast<std::size_t>(ic) * h * wd;
          const std::size_t k_base = w_base + static_cast<std::size_t>(ic) * 9;
          for (int kr = 0; kr < 3; ++kr) {
            const int r = orow * 2 - 1 + kr;
            if (r < 0 || r >= h) continue;
            for (int kc = 0; kc < 3; ++kc) {
              const int c = ocol * 2 - 1 + kc;
              if (c < 0 || c >= wd) continue;
              acc += static_cast<double>(w.value.data[k_base + kr * 3 + kc]) *
                     in.data[in_base + static_cast<std::size_t>(r) * wd + c];
            }
          }
        }
        preact.data[(static_cast<std::size_t>(oc) * oh + orow) * ow + ocol] =
            static_cast<double>(acc);
      }
    }
  }
}

// grad_out is with respect to the pre-activation. Accumulates w/b grads and
// fills grad_in (dL/d input) when requested.
void conv_backward(Param& w, Param& b, const Tensor& in, const Tensor& grad_out,
                   Tensor* grad_in) {
  const int in_c = in.shape[0], h = in.shape[1], wd = in.shape[2];
  const int out_c = grad_out.shape[0], oh = grad_out.shape[1], ow = grad_out.shape[2];
  if (grad_in) *grad_in = Tensor(in.shape);
  for (int oc = 0; oc < out_c; ++oc) {
    const std::size_t w_base = static_cast<std::size_t>(oc) * in_c * 9;
    for (int orow = 0; orow < oh; ++orow) {
      for (int ocol = 0; ocol < ow; ++ocol) {
        const double g = grad_out.data[(static_cast<std::size_t>(oc) * oh + orow) * ow + ocol];
        if (g == 0.0) continue;
        b.grad.data[oc] += g;
        for (int ic = 0; ic < in_c; ++ic) {
          const std::size_t in_base = static_cast<std::size_t>(ic) * h * wd;
          const std::size_t k_base = w_base + static_cast<std::size_t>(ic) * 9;
          for (int kr = 0; kr < 3; ++kr) {
            const int r = orow * 2 - 1 + kr;
            if (r < 0 || r >= h) continue;
            for (int kc = 0; kc < 3; ++kc) {
              const int c = ocol * 2 - 1 + kc;
              if (c < 0 || c >= wd) continue;
              const std::size_t in_idx = in_base + static_cast<std::size_t>(r) * wd + c;
              w.grad.data[k_base + kr * 3 + kc] += g * in.data[in_idx];
              if (grad_in) {
                grad_in->data[in_idx] += g * w.value.data[k_base + kr * 3 + kc];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

PrototypicalHead init_head(int dim, int num_classes, std::uint64_t seed, double tau) {
  if (dim < 1 || num_classes < 2) {
    throw std::invalid_argument("init_head: need dim >= 1 and num_classes >= 2");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("init_head: temperature must be positive");
  PrototypicalHead head;
  head.tau = tau;
  head.W = Param("head.W", {num_classes, dim});
  Rng rng(seed);
  for (auto& v : head.W.value.data) v = static_cast<double>(0.01 * rng.normal());
  return head;
}

HeadCache head_forward_cached(const PrototypicalHead& head, const std::vector<double>& f) {
  const int d = head.dim(), c = head.num_classes();
  if (static_cast<int>(f.size()) != d) {
    throw std::invalid_argument("head_forward: feature dimension " +
                                std::to_string(f.size()) + " != " + std::to_string(d));
  }
  HeadCache cache;
  cache.feature = f;
  double sq = 0.0;
  for (double v : f) {
    if (!std::isfinite(v)) throw std::invalid_argument("head_forward: non-finite feature");
    sq += static_cast<double>(v) * v;
  }
  cache.norm = std::sqrt(sq);
  cache.fhat.resize(d);
  for (int i = 0; i < d; ++i) cache.fhat[i] = f[i] / (cache.norm + kNormEps);

  cache.logits.resize(c);
  double max_logit = -1e300;
  for (int k = 0; k < c; ++k) {
    double dot = 0.0;
    double row_sq = 0.0;
    for (int i = 0; i < d; ++i) {
      const double wk = head.W.value.data[static_cast<std::size_t>(k) * d + i];
      dot += wk * cache.fhat[i];
      row_sq += wk * wk;
    }
    if (head.normalize_prototypes) dot /= std::sqrt(row_sq) + kNormEps;
    cache.logits[k] = dot / head.tau;
    max_logit = std::max(max_logit, cache.logits[k]);
  }
  cache.probs.resize(c);
  double z = 0.0;
  for (int k = 0; k < c; ++k) {
    cache.probs[k] = std::exp(cache.logits[k] - max_logit);
    z += cache.probs[k];
  }
  for (int k = 0; k < c; ++k) cache.probs[k] /= z;
  return cache;
}

std::vector<double> head_forward(const PrototypicalHead& head, const std::vector<double>& f) {
  return head_forward_cached(head, f).probs;
}

std::vector<double> head_backward(PrototypicalHead& head, const HeadCache& cache,
                                 const std::vector<double>& grad_logits,
                                 bool accumulate_prototypes) {
  const int d = head.dim(), c = head.num_classes();
  std::vector<double> grad_fhat(d, 0.0);
  for (int k = 0; k < c; ++k) {
    const double gz = grad_logits[k] / head.tau;
    const std::size_t row = static_cast<std::size_t>(k) * d;
    if (!head.normalize_prototypes) {
      for (int i = 0; i < d; ++i) {
        grad_fhat[i] += gz * head.W.value.data[row + i];
        if (accumulate_prototypes) {
          head.W.grad.data[row + i] += static_cast<double>(gz * cache.fhat[i]);
        }
      }
    } else {
      double row_sq = 0.0, dot = 0.0;
      for (int i = 0; i < d; ++i) {
        const double wk = head.W.value.data[row + i];
        row_sq += wk * wk;
        dot += wk * cache.fhat[i];
      }
      const double rn = std::sqrt(row_sq) + kNormEps;
      for (int i = 0; i < d; ++i) {
        const double wk = head.W.value.data[row + i];
        grad_fhat[i] += gz * wk / rn;
        if (accumulate_prototypes) {
          // d(dot/rn)/dw_i through both numerator and the row norm.
          const double g = gz * (cache.fhat[i] / rn -
                                 dot * wk / (std::sqrt(row_sq) * rn * rn + kNormEps));
          head.W.grad.data[row + i] += static_cast<double>(g);
        }
      }
    }
  }
  // Through the normalization f_hat = f / (||f|| + eps).
  const double denom = cache.norm + kNormEps;
  double dot = 0.0;
  for (int i = 0; i < d; ++i) dot += grad_fhat[i] * cache.feature[i];
  std::vector<double> grad_f(d, 0.0);
  for (int i = 0; i < d; ++i) {
    double g = grad_fhat[i] / denom;
    if (cache.norm > 0.0) {
      g -= cache.feature[i] * dot / (cache.norm * denom * denom);
    }
    grad_f[i] = static_cast<double>(g);
  }
  return grad_f;
}

DeskEncoder::DeskEncoder(int in_channels, std::vector<int> widths, std::uint64_t seed)
    : in_channels_(in_channels), widths_(std::move(widths)) {
  if (in_channels_ < 1 || widths_.empty()) {
    throw std::invalid_argument("DeskEncoder: bad architecture");
  }
  Rng rng(seed);
  int prev = in_channels_;
  for (std::size_t l = 0; l < widths_.size(); ++l) {
    const int out = widths_[l];
    const std::string tag = "conv" + std::to_string(l + 1);
    Param w(tag + ".weight", {out, prev, 3, 3});
    // He initialization for the ReLU stack.
    const double stddev = std::sqrt(2.0 / (prev * 9.0));
    for (auto& v : w.value.data) v = static_cast<double>(stddev * rng.normal());
    params_.push_back(std::move(w));
    // Small random biases keep pre-activations off the exact ReLU kink even
    // for all-zero receptive fields (zero-padded rows, dead patches).
    Param bias(tag + ".bias", {out});
    for (auto& v : bias.value.data) v = 0.01 * rng.normal();
    params_.push_back(std::move(bias));
    prev = out;
  }
}

std::vector<double> DeskEncoder::forward(const Tensor& x, Cache* cache) const {
  if (x.shape.size() != 3 || x.shape[0] != in_channels_) {
    throw std::invalid_argument("DeskEncoder::forward: expected " +
                                std::to_string(in_channels_) + " x H x W input");
  }
  Tensor cur = x;
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  for (std::size_t l = 0; l < widths_.size(); ++l) {
    const Param& w = params_[2 * l];
    const Param& b = params_[2 * l + 1];
    Tensor preact;
    conv_forward(w, b, cur, preact);
    if (cache) {
      cache->inputs.push_back(std::move(cur));
      cache->preacts.push_back(preact);
    }
    cur = std::move(preact);
    for (auto& v : cur.data) v = v > 0.0 ? v : 0.0;  // ReLU
  }
  const int c = cur.shape[0], h = cur.shape[1], wd = cur.shape[2];
  if (cache) {
    cache->pooled_h = h;
    cache->pooled_w = wd;
  }
  std::vector<double> feature(c, 0.0);
  const double inv = 1.0 / (static_cast<double>(h) * wd);
  for (int k = 0; k < c; ++k) {
    double acc = 0.0;
    const std::size_t base = static_cast<std::size_t>(k) * h * wd;
    for (int i = 0; i < h * wd; ++i) acc += cur.data[base + i];
    feature[k] = static_cast<double>(acc * inv);
  }
  return feature;
}

void DeskEncoder::backward(const Cache& cache, const std::vector<double>& grad_feature) {
  const int layers = static_cast<int>(widths_.size());
  const int c = widths_.back();
  const int h = cache.pooled_h, wd = cache.pooled_w;
  // Global average pool backward, fused with the last ReLU mask below.
  Tensor grad(cache.preacts.back().shape);
  const double inv = 1.0 / static_cast<double>(h * wd);
  for (int k = 0; k < c; ++k) {
    const double g = grad_feature[k] * inv;
    const std::size_t base = static_cast<std::size_t>(k) * h * wd;
    for (int i = 0; i < h * wd; ++i) grad.data[base + i] = g;
  }
  for (int l = layers - 1; l >= 0; --l) {
    const Tensor& preact = cache.preacts[l];
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      if (preact.data[i] <= 0.0) grad.data[i] = 0.0;
    }
    Tensor grad_in;
    conv_backward(params_[2 * l], params_[2 * l + 1], cache.inputs[l], grad,
                  l > 0 ? &grad_in : nullptr);
    if (l > 0) grad = std::move(grad_in);
  }
}

void DeskEncoder::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<double> encode(const DeskEncoder& enc, const Tensor& x) {
  return enc.forward(x);
}

}  // namespace danet::model
