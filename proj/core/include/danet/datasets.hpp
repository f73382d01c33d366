#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "danet/imaging.hpp"
#include "danet/rng.hpp"

namespace danet::data {

inline constexpr int kUnlabeled = -1;

enum class Domain { kSource, kTarget };

struct SampleRecord {
  std::string path;
  int label = kUnlabeled;  // class index, or kUnlabeled
  Domain domain = Domain::kSource;
};

// CSV manifest, one "path,label,domain" record per line. Extra columns
// (preprocessing metadata written by prep) are tolerated and ignored.
// Labels: "covid" = 0, "non-covid" = 1, "unlabeled", or a bare class index.
std::vector<SampleRecord> load_manifest(const std::string& path);
void save_manifest(const std::vector<SampleRecord>& records, const std::string& path,
                   const std::vector<std::string>& extra_columns = {});

std::string label_to_string(int label);

// Ground-truth labels of the unlabeled pool, sealed during training. Any
// read before unseal() throws; final scoring unseals explicitly.
class HiddenLabels {
 public:
  HiddenLabels() = default;
  explicit HiddenLabels(std::unordered_map<std::string, int> labels)
      : labels_(std::move(labels)) {}

  void unseal() { sealed_ = false; }
  bool sealed() const { return sealed_; }

  int label_of(const std::string& path) const {
    if (sealed_) {
      throw std::logic_error("HiddenLabels: sealed label read for " + path);
    }
    const auto it = labels_.find(path);
    if (it == labels_.end()) {
      throw std::out_of_range("HiddenLabels: no label for " + path);
    }
    return it->second;
  }

 private:
  std::unordered_map<std::string, int> labels_;
  bool sealed_ = true;
};

// The four-way data partition driving one adaptation run.
struct EpisodeSplit {
  std::vector<SampleRecord> source_labeled;
  std::vector<SampleRecord> target_labeled;     // K per class
  std::vector<SampleRecord> target_validation;  // K per class, disjoint
  std::vector<SampleRecord> target_unlabeled;   // labels hidden
  HiddenLabels hidden_labels;
  int k = 0;
  int num_classes = 2;
  std::uint64_t seed = 0;
};

// Deterministic K-shot split. Labeled target records are partitioned per
// class into K training shots, K validation shots, and the unlabeled
// remainder; already-unlabeled target records join the unlabeled pool.
EpisodeSplit make_episode(const std::vector<SampleRecord>& source,
                          const std::vector<SampleRecord>& target, int k,
                          int num_classes, std::uint64_t seed);

struct BatchSample {
  SampleRecord record;
  bool augment = false;
  std::uint64_t augment_seed = 0;
};

struct TrainingBatch {
  std::vector<BatchSample> labeled_source;
  std::vector<BatchSample> labeled_target;
  std::vector<BatchSample> unlabeled_target;
};

// Balanced batch stream: B/2 source samples without replacement per pass,
// B/2 target-labeled samples cycled so each pool element appears before
// any repeat, U unlabeled samples without replacement per pass. Target
// labeled samples carry per-sample augmentation seeds.
class BalancedBatchSampler {
 public:
  BalancedBatchSampler(const EpisodeSplit& split, int batch_size, int unlabeled_per_batch,
                       Rng rng);

  TrainingBatch next();

 private:
  const EpisodeSplit& split_;
  int half_batch_;
  int unlabeled_per_batch_;
  Rng rng_;
  std::vector<std::size_t> source_order_, target_order_, unlabeled_order_;
  std::size_t source_pos_ = 0, target_pos_ = 0, unlabeled_pos_ = 0;
};

// --- Synthetic two-domain generator --------------------------------------

struct SynthConfig {
  int per_class_per_domain = 100;
  double shift = 0.3;       // target-domain intensity offset
  int side = 64;            // canonical side for the generated corpus
  int channels = 3;
  int raw_min = 96, raw_max = 160;  // raw square sizes before canonicalization
  std::string out_dir;
};

struct SynthResult {
  std::string source_manifest;
  std::string target_manifest;
};

// Renders a two-class corpus (filled disc vs annulus on noisy background)
// for both domains. The target domain applies a mean shift of cfg.shift
// and a matching contrast reduction before canonicalization.
SynthResult synth_domains(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace danet::data
