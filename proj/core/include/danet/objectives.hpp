#pragma once

#include <functional>
#include <string>
#include <vector>

#include "danet/model.hpp"
#include "danet/tensor.hpp"

namespace danet::objectives {

// Scalar losses for one batch. psi_h is minimized by the encoder step,
// psi_c by the classifier step.
struct LossReport {
  double ce = 0.0;
  double eu = 0.0;
  double psi_h = 0.0;
  double psi_c = 0.0;
  double lambda = 0.0;
};

// Mean negative log-likelihood over a labeled batch; probabilities are
// clamped at 1e-12 before the log.
double cross_entropy(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels);

// Mean Shannon entropy of the predicted distributions, with 0 ln 0 := 0.
double unlabeled_entropy(const std::vector<std::vector<double>>& probs);

LossReport combined_losses(double ce, double eu, double lambda);

// One batch of model inputs: labeled samples from both domains plus the
// unlabeled target sub-batch.
struct BatchTensors {
  std::vector<Tensor> labeled_inputs;
  std::vector<int> labels;
  std::vector<Tensor> unlabeled_inputs;
};

// Single shared forward pass, two gradient views:
//   - encoder parameter grads accumulate d(psi_h)/d(theta) with the head
//     treated as constant;
//   - head prototype grads accumulate d(psi_c)/dW with the encoder
//     treated as constant.
// Throws on non-finite activations, naming the offending tensor.
LossReport compute_gradients(const BatchTensors& batch, model::DeskEncoder& encoder,
                             model::PrototypicalHead& head, double lambda);

// Losses only (no gradient accumulation); used by finite differences and
// descent checks.
LossReport forward_losses(const BatchTensors& batch, const model::DeskEncoder& encoder,
                          const model::PrototypicalHead& head, double lambda);

// Feature-level analogue for instances where raw feature vectors stand in
// for encoder outputs. Accumulates head grads for psi_c and returns
// d(psi_h)/d(feature) per sample (labeled then unlabeled).
struct FeatureBatch {
  std::vector<std::vector<double>> labeled_features;
  std::vector<int> labels;
  std::vector<std::vector<double>> unlabeled_features;
};
LossReport feature_gradients(const FeatureBatch& batch, model::PrototypicalHead& head,
                             double lambda,
                             std::vector<std::vector<double>>* grad_features = nullptr);
LossReport feature_losses(const FeatureBatch& batch, const model::PrototypicalHead& head,
                          double lambda);

// --- Finite-difference verification -------------------------------------

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;
  std::size_t checked = 0;
  std::size_t retried = 0;  // coordinates re-judged with a smaller window
};

// Central differences (L(x+d) - L(x-d)) / 2d over every entry of every
// parameter, compared to grads already accumulated by compute_grads().
// compute_grads must zero and refill the grad buffers; loss must be a pure
// function of the parameter values.
GradCheckReport grad_check(const std::vector<Param*>& params,
                           const std::function<double()>& loss,
                           const std::function<void()>& compute_grads,
                           double delta = 1e-4, double tolerance = 1e-4);

// Randomized verification battery over small instances: raw-feature head
// instances and tiny encoder instances, cycling lambda through 0 (pure
// cross-entropy), intermediate values, and an unlabeled-only case (pure
// entropy). Checks encoder gradients of psi_h and prototype gradients of
// psi_c against central differences.
struct BatteryReport {
  bool pass = true;
  double max_rel_error = 0.0;
  std::size_t instances = 0;
  std::size_t gradients_checked = 0;
  std::vector<GradCheckReport> reports;
};

BatteryReport gradcheck_battery(int n_instances, double delta, double tolerance,
                                std::uint64_t seed);

}  // namespace danet::objectives
