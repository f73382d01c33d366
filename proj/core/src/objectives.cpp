#include "danet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "danet/rng.hpp"

namespace danet::objectives {

namespace {
constexpr double kLogClamp = 1e-12;

// dH/dz for one distribution, H = -sum p ln p over softmax logits z.
std::vector<double> entropy_logit_grad(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double lp = p[k] > 0.0 ? std::log(p[k]) : std::log(kLogClamp);
    g[k] = -p[k] * (lp + h);
  }
  return g;
}

void check_finite(const std::vector<double>& v, const std::string& what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error("non-finite activation in " + what);
    }
  }
}

}  // namespace

double cross_entropy(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels) {
  if (probs.empty()) throw std::invalid_argument("cross_entropy: empty batch");
  if (probs.size() != labels.size()) {
    throw std::invalid_argument("cross_entropy: probs/labels length mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= static_cast<int>(probs[i].size())) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
    total -= std::log(std::max(probs[i][y], kLogClamp));
  }
  return total / static_cast<double>(probs.size());
}

double unlabeled_entropy(const std::vector<std::vector<double>>& probs) {
  if (probs.empty()) throw std::invalid_argument("unlabeled_entropy: empty batch");
  double total = 0.0;
  for (const auto& p : probs) {
    for (double v : p) {
      if (v > 0.0) total -= v * std::log(v);
    }
  }
  return total / static_cast<double>(probs.size());
}

LossReport combined_losses(double ce, double eu, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("combined_losses: lambda must be >= 0");
  LossReport r;
  r.ce = ce;
  r.eu = eu;
  r.lambda = lambda;
  r.psi_h = ce + lambda * eu;
  r.psi_c = ce - lambda * eu;
  return r;
}

LossReport compute_gradients(const BatchTensors& batch, model::DeskEncoder& encoder,
                             model::PrototypicalHead& head, double lambda) {
  const std::size_t n_lab = batch.labeled_inputs.size();
  const std::size_t n_unl = batch.unlabeled_inputs.size();
  if (batch.labels.size() != n_lab) {
    throw std::invalid_argument("compute_gradients: labels/inputs length mismatch");
  }

  double ce = 0.0, eu = 0.0;
  const double inv_lab = n_lab > 0 ? 1.0 / static_cast<double>(n_lab) : 0.0;
  const double inv_unl = n_unl > 0 ? 1.0 / static_cast<double>(n_unl) : 0.0;

  for (std::size_t i = 0; i < n_lab; ++i) {
    model::DeskEncoder::Cache enc_cache;
    const auto f = encoder.forward(batch.labeled_inputs[i], &enc_cache);
    check_finite(f, "labeled feature " + std::to_string(i));
    const auto hc = model::head_forward_cached(head, f);
    const int y = batch.labels[i];
    if (y < 0 || y >= head.num_classes()) {
      throw std::invalid_argument("compute_gradients: label out of range");
    }
    ce -= std::log(std::max(hc.probs[y], kLogClamp)) * inv_lab;

    // Shared cross-entropy term of psi_h and psi_c.
    std::vector<double> gz(hc.probs);
    gz[y] -= 1.0;
    for (auto& g : gz) g *= inv_lab;
    const auto grad_f = model::head_backward(head, hc, gz, /*accumulate_prototypes=*/true);
    encoder.backward(enc_cache, grad_f);
  }

  for (std::size_t i = 0; i < n_unl; ++i) {
    model::DeskEncoder::Cache enc_cache;
    const auto f = encoder.forward(batch.unlabeled_inputs[i], &enc_cache);
    check_finite(f, "unlabeled feature " + std::to_string(i));
    const auto hc = model::head_forward_cached(head, f);
    for (double p : hc.probs) {
      if (p > 0.0) eu -= p * std::log(p) * inv_unl;
    }
    const auto gh = entropy_logit_grad(hc.probs);

    // Encoder view: +lambda * dE_u/dz.
    std::vector<double> gz_enc(gh);
    for (auto& g : gz_enc) g *= lambda * inv_unl;
    const auto grad_f = model::head_backward(head, hc, gz_enc, /*accumulate_prototypes=*/false);
    encoder.backward(enc_cache, grad_f);

    // Classifier view: -lambda * dE_u/dz into the prototype grads.
    std::vector<double> gz_head(gh);
    for (auto& g : gz_head) g *= -lambda * inv_unl;
    model::head_backward(head, hc, gz_head, /*accumulate_prototypes=*/true);
  }

  return combined_losses(ce, eu, lambda);
}

LossReport forward_losses(const BatchTensors& batch, const model::DeskEncoder& encoder,
                          const model::PrototypicalHead& head, double lambda) {
  const std::size_t n_lab = batch.labeled_inputs.size();
  double ce = 0.0, eu = 0.0;
  for (std::size_t i = 0; i < n_lab; ++i) {
    const auto f = encoder.forward(batch.labeled_inputs[i]);
    const auto p = model::head_forward(head, f);
    ce -= std::log(std::max(p[batch.labels[i]], kLogClamp));
  }
  if (n_lab > 0) ce /= static_cast<double>(n_lab);
  for (const auto& x : batch.unlabeled_inputs) {
    const auto f = encoder.forward(x);
    const auto p = model::head_forward(head, f);
    for (double v : p) {
      if (v > 0.0) eu -= v * std::log(v);
    }
  }
  if (!batch.unlabeled_inputs.empty()) eu /= static_cast<double>(batch.unlabeled_inputs.size());
  return combined_losses(ce, eu, lambda);
}

LossReport feature_gradients(const FeatureBatch& batch, model::PrototypicalHead& head,
                             double lambda,
                             std::vector<std::vector<double>>* grad_features) {
  const std::size_t n_lab = batch.labeled_features.size();
  const std::size_t n_unl = batch.unlabeled_features.size();
  const double inv_lab = n_lab > 0 ? 1.0 / static_cast<double>(n_lab) : 0.0;
  const double inv_unl = n_unl > 0 ? 1.0 / static_cast<double>(n_unl) : 0.0;
  if (grad_features) grad_features->clear();

  double ce = 0.0, eu = 0.0;
  for (std::size_t i = 0; i < n_lab; ++i) {
    const auto hc = model::head_forward_cached(head, batch.labeled_features[i]);
    const int y = batch.labels[i];
    ce -= std::log(std::max(hc.probs[y], kLogClamp)) * inv_lab;
    std::vector<double> gz(hc.probs);
    gz[y] -= 1.0;
    for (auto& g : gz) g *= inv_lab;
    const auto grad_f = model::head_backward(head, hc, gz, true);
    if (grad_features) grad_features->push_back(grad_f);
  }
  for (std::size_t i = 0; i < n_unl; ++i) {
    const auto hc = model::head_forward_cached(head, batch.unlabeled_features[i]);
    for (double p : hc.probs) {
      if (p > 0.0) eu -= p * std::log(p) * inv_unl;
    }
    const auto gh = entropy_logit_grad(hc.probs);
    std::vector<double> gz_enc(gh);
    for (auto& g : gz_enc) g *= lambda * inv_unl;
    const auto grad_f = model::head_backward(head, hc, gz_enc, false);
    if (grad_features) grad_features->push_back(grad_f);
    std::vector<double> gz_head(gh);
    for (auto& g : gz_head) g *= -lambda * inv_unl;
    model::head_backward(head, hc, gz_head, true);
  }
  return combined_losses(ce, eu, lambda);
}

LossReport feature_losses(const FeatureBatch& batch, const model::PrototypicalHead& head,
                          double lambda) {
  double ce = 0.0, eu = 0.0;
  for (std::size_t i = 0; i < batch.labeled_features.size(); ++i) {
    const auto p = model::head_forward(head, batch.labeled_features[i]);
    ce -= std::log(std::max(p[batch.labels[i]], kLogClamp));
  }
  if (!batch.labeled_features.empty()) ce /= static_cast<double>(batch.labeled_features.size());
  for (const auto& f : batch.unlabeled_features) {
    const auto p = model::head_forward(head, f);
    for (double v : p) {
      if (v > 0.0) eu -= v * std::log(v);
    }
  }
  if (!batch.unlabeled_features.empty()) {
    eu /= static_cast<double>(batch.unlabeled_features.size());
  }
  return combined_losses(ce, eu, lambda);
}

GradCheckReport grad_check(const std::vector<Param*>& params,
                           const std::function<double()>& loss,
                           const std::function<void()>& compute_grads,
                           double delta, double tolerance) {
  compute_grads();
  GradCheckReport report;
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + delta;
      const double lp = loss();
      p->value.data[i] = saved - delta;
      const double lm = loss();
      p->value.data[i] = saved;

      GradCheckEntry entry;
      entry.param = p->name;
      entry.index = i;
      entry.analytic = p->grad.data[i];
      entry.numeric = (lp - lm) / (2.0 * delta);
      auto rel = [&entry] {
        const double denom = std::max(std::abs(entry.analytic), std::abs(entry.numeric));
        const double diff = std::abs(entry.analytic - entry.numeric);
        return denom > 1e-8 ? diff / denom : diff;
      };
      entry.rel_error = rel();
      if (entry.rel_error > tolerance) {
        // A ReLU kink inside the +-delta window corrupts the central
        // difference; shrink the window and re-judge at the same tolerance.
        for (const double div : {16.0, 100.0, 1000.0, 10000.0}) {
          const double d2 = delta / div;
          p->value.data[i] = saved + d2;
          const double lp2 = loss();
          p->value.data[i] = saved - d2;
          const double lm2 = loss();
          p->value.data[i] = saved;
          const double numeric2 = (lp2 - lm2) / (2.0 * d2);
          GradCheckEntry retry = entry;
          retry.numeric = numeric2;
          const double denom =
              std::max(std::abs(retry.analytic), std::abs(retry.numeric));
          const double diff = std::abs(retry.analytic - retry.numeric);
          retry.rel_error = denom > 1e-8 ? diff / denom : diff;
          if (retry.rel_error < entry.rel_error) entry = retry;
          if (entry.rel_error <= tolerance) break;
        }
        ++report.retried;
      }
      ++report.checked;
      if (entry.rel_error > report.max_rel_error) {
        report.max_rel_error = entry.rel_error;
        report.worst = entry;
      }
      if (entry.rel_error > tolerance) {
        report.pass = false;
        report.failures.push_back(entry);
      }
    }
  }
  return report;
}

namespace {

void merge_report(BatteryReport& battery, GradCheckReport&& report) {
  battery.pass = battery.pass && report.pass;
  battery.max_rel_error = std::max(battery.max_rel_error, report.max_rel_error);
  battery.gradients_checked += report.checked;
  battery.reports.push_back(std::move(report));
}

}  // namespace

BatteryReport gradcheck_battery(int n_instances, double delta, double tolerance,
                                std::uint64_t seed) {
  BatteryReport battery;
  Rng rng(seed);
  for (int inst = 0; inst < n_instances; ++inst) {
    // lambda cycle: pure cross-entropy, defaults, strong coupling, and an
    // unlabeled-only pure-entropy case.
    const double lambda = (inst % 4 == 0) ? 0.0 : (inst % 4 == 1) ? 0.1 : (inst % 4 == 2) ? 0.5 : 1.0;
    const bool unlabeled_only = inst % 4 == 3;
    const int n_lab = unlabeled_only ? 0 : 4;  // N_s = N_t = 2
    const int n_unl = 4;

    if (inst % 2 == 0) {
      // Raw-feature instance, d = 8, C = 2.
      const int d = 8;
      auto head = model::init_head(d, 2, rng.next_u64());
      head.tau = 0.5;
      for (auto& w : head.W.value.data) w = rng.normal();

      std::vector<Param> feature_params;
      FeatureBatch batch;
      for (int i = 0; i < n_lab + n_unl; ++i) {
        Param p("feature" + std::to_string(i), {d});
        for (auto& v : p.value.data) v = rng.normal();
        feature_params.push_back(std::move(p));
      }
      auto rebuild = [&] {
        batch.labeled_features.clear();
        batch.labels.clear();
        batch.unlabeled_features.clear();
        for (int i = 0; i < n_lab; ++i) {
          batch.labeled_features.push_back(feature_params[i].value.data);
          batch.labels.push_back(i % 2);
        }
        for (int i = n_lab; i < n_lab + n_unl; ++i) {
          batch.unlabeled_features.push_back(feature_params[i].value.data);
        }
      };

      // psi_c with respect to the prototypes.
      merge_report(battery, grad_check(
          {&head.W},
          [&] { rebuild(); return feature_losses(batch, head, lambda).psi_c; },
          [&] { rebuild(); head.W.zero_grad(); feature_gradients(batch, head, lambda); },
          delta, tolerance));

      // psi_h with respect to the features (the encoder-side view).
      std::vector<Param*> ptrs;
      for (auto& p : feature_params) ptrs.push_back(&p);
      merge_report(battery, grad_check(
          ptrs,
          [&] { rebuild(); return feature_losses(batch, head, lambda).psi_h; },
          [&] {
            rebuild();
            for (auto& p : feature_params) p.zero_grad();
            head.W.zero_grad();
            std::vector<std::vector<double>> grads;
            feature_gradients(batch, head, lambda, &grads);
            for (std::size_t i = 0; i < grads.size(); ++i) {
              feature_params[i].grad.data = grads[i];
            }
          },
          delta, tolerance));
    } else {
      // Tiny encoder instance on 8x8 inputs, d = 8.
      model::DeskEncoder encoder(1, {4, 6, 8}, rng.next_u64());
      auto head = model::init_head(8, 2, rng.next_u64());
      head.tau = 0.5;
      for (auto& w : head.W.value.data) w = 0.5 * rng.normal();

      BatchTensors batch;
      for (int i = 0; i < n_lab; ++i) {
        Tensor x({1, 8, 8});
        for (auto& v : x.data) v = rng.uniform();
        batch.labeled_inputs.push_back(std::move(x));
        batch.labels.push_back(i % 2);
      }
      for (int i = 0; i < n_unl; ++i) {
        Tensor x({1, 8, 8});
        for (auto& v : x.data) v = rng.uniform();
        batch.unlabeled_inputs.push_back(std::move(x));
      }

      std::vector<Param*> enc_ptrs;
      for (auto& p : encoder.params()) enc_ptrs.push_back(&p);
      auto grads = [&] {
        encoder.zero_grad();
        head.W.zero_grad();
        compute_gradients(batch, encoder, head, lambda);
      };
      merge_report(battery, grad_check(
          enc_ptrs,
          [&] { return forward_losses(batch, encoder, head, lambda).psi_h; },
          grads, delta, tolerance));
      merge_report(battery, grad_check(
          {&head.W},
          [&] { return forward_losses(batch, encoder, head, lambda).psi_c; },
          grads, delta, tolerance));
    }
    ++battery.instances;
  }
  return battery;
}

}  // namespace danet::objectives
