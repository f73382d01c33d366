#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "danet/datasets.hpp"
#include "danet/model.hpp"
#include "danet/training.hpp"

namespace danet::eval {

struct ConfusionMatrix {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

// Class 0 (covid) is the positive class by convention.
ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels,
                          int positive_class = 0);

double accuracy(const ConfusionMatrix& cm);

struct EvalResult {
  ConfusionMatrix cm;
  double accuracy = 0.0;
};

// Argmax classification over canonicalized, non-augmented images.
EvalResult evaluate(const model::DeskEncoder& encoder, const model::PrototypicalHead& head,
                    const std::vector<data::SampleRecord>& samples,
                    training::ImageCache& cache);

// Rebuilds a model pair from a checkpoint's config snapshot and tensors.
struct LoadedModel {
  model::DeskEncoder encoder;
  model::PrototypicalHead head;
  training::TrainConfig config;
};
LoadedModel model_from_checkpoint(const training::Checkpoint& ckpt);

// Restores hidden labels post-training and returns the whole labeled
// target set (K-shot, validation and unlabeled pools) for final scoring.
std::vector<data::SampleRecord> unseal_target_set(data::EpisodeSplit& split);

// --- Cross-dataset scenario runner ---------------------------------------

struct ScenarioSpec {
  std::string name;
  std::string source_manifest;
  std::string target_manifest;
  std::vector<int> k_values = {3, 5, 10};
  int repeats = 5;
};

struct CellResult {
  int k = 0;  // 0 = source-only baseline
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_accuracy;
  double mean = 0.0;
  double stdev = 0.0;
  bool failed = false;
  std::string error;
};

struct ScenarioRow {
  std::string name;
  CellResult baseline;
  std::vector<CellResult> cells;
};

struct ScenarioReport {
  std::vector<ScenarioRow> rows;
};

ScenarioReport run_scenarios(const std::vector<ScenarioSpec>& specs,
                             const training::TrainConfig& cfg);

// JSON document with a documentation block carrying the published
// reference accuracies for the four CT cross-dataset scenarios
// (informational, never asserted).
std::string report_to_json(const ScenarioReport& report);
std::string report_to_table(const ScenarioReport& report);

// --- Ablation ------------------------------------------------------------

struct AblationPoint {
  double value = 0.0;
  double accuracy = 0.0;
};

struct AblationCurve {
  std::string parameter;  // "lambda" or "tau"
  std::vector<AblationPoint> points;
  double best_value = 0.0;
};

// Trains once per value with a fixed seed and scores on the full target
// set of the episode.
AblationCurve ablation_sweep(const std::string& parameter, const std::vector<double>& values,
                             training::TrainConfig cfg, data::EpisodeSplit& split);

std::string ablation_to_csv(const AblationCurve& curve);

}  // namespace danet::eval
