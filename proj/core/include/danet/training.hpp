#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "danet/datasets.hpp"
#include "danet/imaging.hpp"
#include "danet/model.hpp"
#include "danet/objectives.hpp"

namespace danet::training {

struct TrainConfig {
  double lambda = 0.1;
  double tau = 0.05;
  int k = 3;                    // shots per class
  int batch_size = 12;          // B, even
  int unlabeled_per_batch = -1; // U; -1 means U = B
  double lr0 = 1e-4;
  double nu = 0.001;
  double p = 0.75;
  int batch_budget = 400;
  int validation_interval = 10;
  std::uint64_t seed = 0;
  int channels = 3;
  int num_classes = 2;
  std::vector<int> encoder_widths = {16, 32, 64};
  bool normalize_prototypes = false;
  imaging::AugmentConfig augment;

  int effective_unlabeled() const {
    return unlabeled_per_batch >= 0 ? unlabeled_per_batch : batch_size;
  }
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& m);
};

// Inverse decay from the fixed initial value: lr0 * (1 + nu*b)^(-p).
double lr_schedule(double lr0, double nu, double p, long b);

// Adam over one parameter group; moments persist across alternations.
class Adam {
 public:
  explicit Adam(std::vector<Param*> params);

  void step(double lr);
  long step_count() const { return t_; }

  // Checkpoint plumbing.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(const std::vector<Tensor>& m, const std::vector<Tensor>& v, long t);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

// Versioned binary container: named tensors plus string metadata.
struct Checkpoint {
  std::map<std::string, std::string> metadata;  // includes the config snapshot
  std::map<std::string, Tensor> tensors;

  long batch_index() const;
  double val_accuracy() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct TrainLogEntry {
  long b = 0;
  double lr = 0.0;
  double ce = 0.0, eu = 0.0, psi_h = 0.0, psi_c = 0.0;
  std::optional<double> val_accuracy;
};

std::string log_entry_to_json(const TrainLogEntry& e);

struct TrainResult {
  Checkpoint best;
  std::vector<TrainLogEntry> log;
};

// Decoded-image cache keyed by path; canonical PNGs only.
class ImageCache {
 public:
  explicit ImageCache(int channels) : channels_(channels) {}
  const imaging::CanonicalImage& get(const std::string& path);

 private:
  int channels_;
  std::unordered_map<std::string, imaging::CanonicalImage> cache_;
};

// The alternating optimization loop. One step = one Adam update of the
// prototypes minimizing psi_c (encoder frozen), then one Adam update of
// the encoder minimizing psi_h (prototypes frozen), both from gradients
// of a single shared forward pass.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const data::EpisodeSplit& split);

  objectives::LossReport step(const data::TrainingBatch& batch);

  // Runs from the current batch index to stop_after (default: the full
  // budget). Restores from resume_from when given; writes a resumable
  // snapshot to latest_path after the last executed batch when given.
  TrainResult run(std::optional<long> stop_after = std::nullopt,
                  const std::optional<std::string>& resume_from = std::nullopt,
                  const std::optional<std::string>& latest_path = std::nullopt);

  double validation_accuracy();

  model::DeskEncoder& encoder() { return encoder_; }
  model::PrototypicalHead& head() { return head_; }
  long batch_index() const { return batch_index_; }

  // Full resumable state (parameters, moments, best-so-far snapshot).
  Checkpoint snapshot() const;
  Checkpoint best_checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  Checkpoint pack_state(bool include_best) const;
  objectives::BatchTensors materialize(const data::TrainingBatch& batch);

  TrainConfig cfg_;
  const data::EpisodeSplit& split_;
  model::DeskEncoder encoder_;
  model::PrototypicalHead head_;
  Adam adam_encoder_, adam_head_;
  data::BalancedBatchSampler sampler_;
  ImageCache cache_;
  long batch_index_ = 0;

  bool has_best_ = false;
  double best_val_acc_ = -1.0;
  long best_batch_ = -1;
  std::map<std::string, Tensor> best_tensors_;
  std::map<std::string, std::string> best_counters_;
};

TrainResult train_loop(const TrainConfig& cfg, const data::EpisodeSplit& split,
                       const std::optional<std::string>& log_path = std::nullopt);

}  // namespace danet::training
