#include "danet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace danet::eval {

namespace {

std::uint64_t cell_seed(std::uint64_t base, std::size_t scenario, int k, int repeat) {
  const std::uint64_t tag = (static_cast<std::uint64_t>(scenario) * 100 + k) * 100 +
                            static_cast<std::uint64_t>(repeat) + 1000;
  return Rng(base).fork(tag).next_u64();
}

void finalize_cell(CellResult& cell) {
  const auto& xs = cell.per_seed_accuracy;
  if (xs.empty()) return;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  cell.mean = mean;
  cell.stdev = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
}

// One training run scored on the whole target set.
double run_cell(const training::TrainConfig& cfg, const std::vector<data::SampleRecord>& source,
                const std::vector<data::SampleRecord>& target) {
  auto episode = data::make_episode(source, target, cfg.k, cfg.num_classes, cfg.seed);
  const auto result = training::train_loop(cfg, episode);
  auto loaded = model_from_checkpoint(result.best);
  training::ImageCache cache(cfg.channels);
  const auto eval_set = unseal_target_set(episode);
  return evaluate(loaded.encoder, loaded.head, eval_set, cache).accuracy;
}

// Published reference accuracies (percent) for the four CT cross-dataset
// scenarios; carried in reports for context, never asserted.
const nlohmann::json kReferenceResults = nlohmann::json::array({
    {{"source", "SARS-CoV-2-CT"}, {"target", "COVID19-CT-train"},
     {"prior_art", 59.12}, {"k3", 62.22}, {"k5", 63.52}, {"k10", 66.11}},
    {{"source", "SARS-CoV-2-CT"}, {"target", "COVID19-CT-test"},
     {"prior_art", 56.16}, {"k3", 67.71}, {"k5", 69.17}, {"k10", 73.50}},
    {{"source", "SARS-CoV-2-CT"}, {"target", "COVID19-CT-train-test"},
     {"prior_art", 58.31}, {"k3", 61.42}, {"k5", 62.48}, {"k10", 63.71}},
    {{"source", "COVID19-CT-train-test"}, {"target", "SARS-CoV-2-CT"},
     {"prior_art", 45.25}, {"k3", 56.03}, {"k5", 60.12}, {"k10", 65.17}},
});

}  // namespace

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels,
                          int positive_class) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("confusion: predictions/labels length mismatch");
  }
  if (predictions.empty()) {
    throw std::invalid_argument("confusion: empty input");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_pos = predictions[i] == positive_class;
    const bool true_pos = labels[i] == positive_class;
    if (pred_pos && true_pos) ++cm.tp;
    else if (!pred_pos && !true_pos) ++cm.tn;
    else if (pred_pos && !true_pos) ++cm.fp;
    else ++cm.fn;
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

EvalResult evaluate(const model::DeskEncoder& encoder, const model::PrototypicalHead& head,
                    const std::vector<data::SampleRecord>& samples,
                    training::ImageCache& cache) {
  std::vector<int> predictions, labels;
  predictions.reserve(samples.size());
  labels.reserve(samples.size());
  for (const auto& rec : samples) {
    if (rec.label == data::kUnlabeled) {
      throw std::invalid_argument("evaluate: unlabeled sample " + rec.path);
    }
    const auto f = encoder.forward(imaging::to_tensor(cache.get(rec.path)));
    const auto probs = model::head_forward(head, f);
    predictions.push_back(
        static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
    labels.push_back(rec.label);
  }
  EvalResult result;
  result.cm = confusion(predictions, labels);
  result.accuracy = accuracy(result.cm);
  return result;
}

LoadedModel model_from_checkpoint(const training::Checkpoint& ckpt) {
  std::map<std::string, std::string> cfg_map;
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.rfind("config.", 0) == 0) cfg_map[k.substr(7)] = v;
  }
  auto cfg = training::TrainConfig::from_map(cfg_map);
  LoadedModel loaded{
      model::DeskEncoder(cfg.channels, cfg.encoder_widths, 0),
      model::init_head(cfg.encoder_widths.back(), cfg.num_classes, 0, cfg.tau),
      cfg};
  loaded.head.normalize_prototypes = cfg.normalize_prototypes;
  for (auto& p : loaded.encoder.params()) p.value = ckpt.tensors.at(p.name);
  loaded.head.W.value = ckpt.tensors.at("head.W");
  return loaded;
}

std::vector<data::SampleRecord> unseal_target_set(data::EpisodeSplit& split) {
  split.hidden_labels.unseal();
  std::vector<data::SampleRecord> all;
  all.insert(all.end(), split.target_labeled.begin(), split.target_labeled.end());
  all.insert(all.end(), split.target_validation.begin(), split.target_validation.end());
  for (const auto& rec : split.target_unlabeled) {
    data::SampleRecord scored = rec;
    scored.label = split.hidden_labels.label_of(rec.path);
    all.push_back(std::move(scored));
  }
  return all;
}

ScenarioReport run_scenarios(const std::vector<ScenarioSpec>& specs,
                             const training::TrainConfig& cfg) {
  ScenarioReport report;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& spec = specs[s];
    ScenarioRow row;
    row.name = spec.name;

    const auto source = data::load_manifest(spec.source_manifest);
    const auto target = data::load_manifest(spec.target_manifest);

    // Source-only baseline: lambda = 0, K = 0, no unlabeled data.
    row.baseline.k = 0;
    for (int r = 0; r < spec.repeats; ++r) {
      auto cell_cfg = cfg;
      cell_cfg.lambda = 0.0;
      cell_cfg.k = 0;
      cell_cfg.unlabeled_per_batch = 0;
      cell_cfg.seed = cell_seed(cfg.seed, s, 0, r);
      row.baseline.seeds.push_back(cell_cfg.seed);
      try {
        row.baseline.per_seed_accuracy.push_back(run_cell(cell_cfg, source, target));
      } catch (const std::exception& e) {
        row.baseline.failed = true;
        row.baseline.error = e.what();
      }
    }
    finalize_cell(row.baseline);

    for (int k : spec.k_values) {
      CellResult cell;
      cell.k = k;
      for (int r = 0; r < spec.repeats; ++r) {
        auto cell_cfg = cfg;
        cell_cfg.k = k;
        cell_cfg.seed = cell_seed(cfg.seed, s, k, r);
        cell.seeds.push_back(cell_cfg.seed);
        try {
          cell.per_seed_accuracy.push_back(run_cell(cell_cfg, source, target));
        } catch (const std::exception& e) {
          cell.failed = true;
          cell.error = e.what();
        }
      }
      finalize_cell(cell);
      row.cells.push_back(std::move(cell));
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

nlohmann::json cell_to_json(const CellResult& cell) {
  nlohmann::json j;
  j["k"] = cell.k;
  j["seeds"] = cell.seeds;
  j["per_seed_accuracy"] = cell.per_seed_accuracy;
  j["mean"] = cell.mean;
  j["stdev"] = cell.stdev;
  if (cell.failed) j["error"] = cell.error;
  return j;
}

}  // namespace

std::string report_to_json(const ScenarioReport& report) {
  nlohmann::json j;
  j["documentation"] = {
      {"note",
       "Published reference accuracies (percent) for the four CT cross-dataset "
       "scenarios, shown for context only; this run's numbers come from the "
       "configured corpora and are not compared against them."},
      {"reference_results", kReferenceResults},
  };
  j["scenarios"] = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json r;
    r["name"] = row.name;
    r["baseline"] = cell_to_json(row.baseline);
    r["cells"] = nlohmann::json::array();
    for (const auto& cell : row.cells) r["cells"].push_back(cell_to_json(cell));
    j["scenarios"].push_back(std::move(r));
  }
  return j.dump(2);
}

std::string report_to_table(const ScenarioReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(28) << "scenario" << std::right << std::setw(12) << "baseline";
  if (!report.rows.empty()) {
    for (const auto& cell : report.rows.front().cells) {
      out << std::setw(11) << ("K=" + std::to_string(cell.k));
    }
  }
  out << '\n';
  for (const auto& row : report.rows) {
    out << std::left << std::setw(28) << row.name << std::right;
    auto print_cell = [&out](const CellResult& cell) {
      if (cell.failed && cell.per_seed_accuracy.empty()) {
        out << std::setw(12) << "failed";
      } else {
        std::ostringstream v;
        v << std::fixed << std::setprecision(2) << 100.0 * cell.mean << "%";
        out << std::setw(12) << v.str();
      }
    };
    print_cell(row.baseline);
    for (const auto& cell : row.cells) {
      out << ' ';
      print_cell(cell);
    }
    out << '\n';
  }
  return out.str();
}

AblationCurve ablation_sweep(const std::string& parameter, const std::vector<double>& values,
                             training::TrainConfig cfg, data::EpisodeSplit& split) {
  if (values.empty()) throw std::invalid_argument("ablation_sweep: empty value list");
  if (parameter != "lambda" && parameter != "tau") {
    throw std::invalid_argument("ablation_sweep: parameter must be lambda or tau");
  }
  AblationCurve curve;
  curve.parameter = parameter;
  const auto eval_set = unseal_target_set(split);
  for (double v : values) {
    auto run_cfg = cfg;
    if (parameter == "lambda") run_cfg.lambda = v;
    else run_cfg.tau = v;
    const auto result = training::train_loop(run_cfg, split);
    auto loaded = model_from_checkpoint(result.best);
    training::ImageCache cache(run_cfg.channels);
    const double acc = evaluate(loaded.encoder, loaded.head, eval_set, cache).accuracy;
    curve.points.push_back({v, acc});
  }
  curve.best_value =
      std::max_element(curve.points.begin(), curve.points.end(),
                       [](const AblationPoint& a, const AblationPoint& b) {
                         return a.accuracy < b.accuracy;
                       })
          ->value;
  return curve;
}

std::string ablation_to_csv(const AblationCurve& curve) {
  std::ostringstream out;
  out << curve.parameter << ",accuracy\n";
  for (const auto& p : curve.points) {
    out << p.value << ',' << p.accuracy << '\n';
  }
  return out.str();
}

}  // namespace danet::eval
