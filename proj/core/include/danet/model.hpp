#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "danet/tensor.hpp"

namespace danet::model {

// Softmax over W f_hat / tau (feature-normalized prototype scores).
// Rows of W are per-class prototypes. Feature normalization only by
// default; row normalization is a config toggle.
struct PrototypicalHead {
  Param W;  // num_classes x dim
  double tau = 0.05;
  bool normalize_prototypes = false;

  int num_classes() const { return W.value.shape[0]; }
  int dim() const { return W.value.shape[1]; }
};

PrototypicalHead init_head(int dim, int num_classes, std::uint64_t seed,
                           double tau = 0.05);

struct HeadCache {
  std::vector<double> feature;   // raw input f
  double norm = 0.0;            // ||f||
  std::vector<double> fhat;     // f / (||f|| + eps)
  std::vector<double> logits;
  std::vector<double> probs;
};

// Class probabilities for one feature vector. Throws on dimension mismatch
// or non-finite input.
std::vector<double> head_forward(const PrototypicalHead& head,
                                 const std::vector<double>& f);
HeadCache head_forward_cached(const PrototypicalHead& head,
                              const std::vector<double>& f);

// Backpropagates a gradient with respect to the logits. Accumulates into
// head.W.grad when accumulate_prototypes is set, and returns dL/df.
std::vector<double> head_backward(PrototypicalHead& head, const HeadCache& cache,
                                 const std::vector<double>& grad_logits,
                                 bool accumulate_prototypes);

// Small convolutional encoder: 3x3 stride-2 convolutions with ReLU, then
// global average pooling. Default widths 16/32/64 give d = 64; tests use
// narrower instances for finite-difference sweeps.
class DeskEncoder {
 public:
  DeskEncoder(int in_channels, std::vector<int> widths, std::uint64_t seed);

  static DeskEncoder desk(int in_channels, std::uint64_t seed) {
    return DeskEncoder(in_channels, {16, 32, 64}, seed);
  }

  int in_channels() const { return in_channels_; }
  int feature_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }

  struct Cache {
    std::vector<Tensor> inputs;    // input of each conv layer
    std::vector<Tensor> preacts;   // pre-ReLU outputs
    int pooled_h = 0, pooled_w = 0;
  };

  // Feature vector for one channels x H x W input. Throws on channel
  // mismatch. Pass a cache to enable backward().
  std::vector<double> forward(const Tensor& x, Cache* cache = nullptr) const;

  // Accumulates parameter gradients for dL/df into params()[...].grad.
  void backward(const Cache& cache, const std::vector<double>& grad_feature);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  void zero_grad();

 private:
  int in_channels_;
  std::vector<int> widths_;
  std::vector<Param> params_;  // convN.weight (out,in,3,3), convN.bias (out)
};

std::vector<double> encode(const DeskEncoder& enc, const Tensor& x);

}  // namespace danet::model
