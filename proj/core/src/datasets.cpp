#include "danet/datasets.hpp"

#include "danet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace danet::data {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

int parse_label(const std::string& s, int line_no) {
  if (s == "covid") return 0;
  if (s == "non-covid") return 1;
  if (s == "unlabeled") return kUnlabeled;
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(c); })) {
    return std::stoi(s);
  }
  throw std::runtime_error("manifest line " + std::to_string(line_no) +
                           ": unknown label \"" + s + "\"");
}

Domain parse_domain(const std::string& s, int line_no) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw std::runtime_error("manifest line " + std::to_string(line_no) +
                           ": unknown domain \"" + s + "\"");
}

}  // namespace

std::string label_to_string(int label) {
  if (label == 0) return "covid";
  if (label == 1) return "non-covid";
  if (label == kUnlabeled) return "unlabeled";
  return std::to_string(label);
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
  std::vector<SampleRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() < 3 || fields[0].empty()) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": expected path,label,domain");
    }
    SampleRecord rec;
    rec.path = fields[0];
    rec.label = parse_label(fields[1], line_no);
    rec.domain = parse_domain(fields[2], line_no);
    if (!seen.insert(rec.path).second) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) +
                               ": duplicate path " + rec.path);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_manifest(const std::vector<SampleRecord>& records, const std::string& path,
                   const std::vector<std::string>& extra_columns) {
  if (!extra_columns.empty() && extra_columns.size() != records.size()) {
    throw std::invalid_argument("save_manifest: extra_columns length mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << records[i].path << ',' << label_to_string(records[i].label) << ','
        << (records[i].domain == Domain::kSource ? "source" : "target");
    if (!extra_columns.empty()) out << ',' << extra_columns[i];
    out << '\n';
  }
}

EpisodeSplit make_episode(const std::vector<SampleRecord>& source,
                          const std::vector<SampleRecord>& target, int k,
                          int num_classes, std::uint64_t seed) {
  if (k < 0) throw std::invalid_argument("make_episode: K must be >= 0");
  EpisodeSplit split;
  split.k = k;
  split.num_classes = num_classes;
  split.seed = seed;
  split.source_labeled = source;

  std::map<int, std::vector<SampleRecord>> by_class;
  std::vector<SampleRecord> already_unlabeled;
  for (const auto& rec : target) {
    if (rec.label == kUnlabeled) {
      already_unlabeled.push_back(rec);
    } else if (rec.label >= num_classes) {
      throw std::invalid_argument("make_episode: label " + std::to_string(rec.label) +
                                  " >= num_classes for " + rec.path);
    } else {
      by_class[rec.label].push_back(rec);
    }
  }

  Rng rng = Rng(seed).fork(stream_tag::kEpisode);
  std::unordered_map<std::string, int> hidden;
  for (int c = 0; c < num_classes; ++c) {
    auto& pool = by_class[c];
    if (static_cast<int>(pool.size()) < 2 * k) {
      throw std::runtime_error("make_episode: class " + label_to_string(c) + " has " +
                               std::to_string(pool.size()) + " labeled target samples, need " +
                               std::to_string(2 * k));
    }
    rng.shuffle(pool);
    for (int i = 0; i < k; ++i) split.target_labeled.push_back(pool[i]);
    for (int i = k; i < 2 * k; ++i) split.target_validation.push_back(pool[i]);
    for (std::size_t i = 2 * k; i < pool.size(); ++i) {
      hidden[pool[i].path] = pool[i].label;
      SampleRecord rec = pool[i];
      rec.label = kUnlabeled;
      split.target_unlabeled.push_back(std::move(rec));
    }
  }
  for (auto& rec : already_unlabeled) split.target_unlabeled.push_back(std::move(rec));
  split.hidden_labels = HiddenLabels(std::move(hidden));
  return split;
}

BalancedBatchSampler::BalancedBatchSampler(const EpisodeSplit& split, int batch_size,
                                           int unlabeled_per_batch, Rng rng)
    : split_(split),
      half_batch_(batch_size / 2),
      unlabeled_per_batch_(unlabeled_per_batch),
      rng_(rng) {
  if (batch_size % 2 != 0 || batch_size < 2) {
    throw std::invalid_argument("BalancedBatchSampler: batch size must be even and >= 2");
  }
  if (static_cast<std::size_t>(half_batch_) > split.source_labeled.size()) {
    throw std::invalid_argument("BalancedBatchSampler: B/2 exceeds source pool size");
  }
  if (unlabeled_per_batch_ < 0) {
    throw std::invalid_argument("BalancedBatchSampler: U must be >= 0");
  }
}

TrainingBatch BalancedBatchSampler::next() {
  TrainingBatch batch;

  // Source: without replacement per pass, reshuffled each pass.
  for (int i = 0; i < half_batch_; ++i) {
    if (source_pos_ >= source_order_.size()) {
      source_order_.resize(split_.source_labeled.size());
      for (std::size_t j = 0; j < source_order_.size(); ++j) source_order_[j] = j;
      rng_.shuffle(source_order_);
      source_pos_ = 0;
    }
    batch.labeled_source.push_back({split_.source_labeled[source_order_[source_pos_++]],
                                    /*augment=*/false, 0});
  }

  // Target labeled: shuffled cycle, each element used once per cycle.
  if (!split_.target_labeled.empty()) {
    for (int i = 0; i < half_batch_; ++i) {
      if (target_pos_ >= target_order_.size()) {
        target_order_.resize(split_.target_labeled.size());
        for (std::size_t j = 0; j < target_order_.size(); ++j) target_order_[j] = j;
        rng_.shuffle(target_order_);
        target_pos_ = 0;
      }
      BatchSample sample{split_.target_labeled[target_order_[target_pos_++]],
                         /*augment=*/true, rng_.next_u64()};
      batch.labeled_target.push_back(std::move(sample));
    }
  }

  // Unlabeled target: without replacement per pass.
  if (!split_.target_unlabeled.empty()) {
    for (int i = 0; i < unlabeled_per_batch_; ++i) {
      if (unlabeled_pos_ >= unlabeled_order_.size()) {
        unlabeled_order_.resize(split_.target_unlabeled.size());
        for (std::size_t j = 0; j < unlabeled_order_.size(); ++j) unlabeled_order_[j] = j;
        rng_.shuffle(unlabeled_order_);
        unlabeled_pos_ = 0;
      }
      const auto& rec = split_.target_unlabeled[unlabeled_order_[unlabeled_pos_++]];
      if (rec.label != kUnlabeled) {
        throw std::logic_error("BalancedBatchSampler: labeled record in unlabeled pool");
      }
      batch.unlabeled_target.push_back({rec, /*augment=*/false, 0});
    }
  }
  return batch;
}

SynthResult synth_domains(const SynthConfig& cfg, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (cfg.per_class_per_domain < 1 || cfg.raw_min < 8 || cfg.raw_max < cfg.raw_min) {
    throw std::invalid_argument("synth_domains: bad config");
  }
  Rng rng = Rng(seed).fork(stream_tag::kSynth);
  fs::create_directories(cfg.out_dir);

  SynthResult result;
  for (const bool is_target : {false, true}) {
    const std::string domain_name = is_target ? "target" : "source";
    std::vector<SampleRecord> records;
    for (int cls = 0; cls < 2; ++cls) {
      const fs::path dir = fs::path(cfg.out_dir) / domain_name / label_to_string(cls);
      fs::create_directories(dir);
      for (int i = 0; i < cfg.per_class_per_domain; ++i) {
        // Square raw image so canonicalization adds no zero-padding rows
        // and the domain mean shift survives intact.
        const int n = cfg.raw_min + static_cast<int>(rng.uniform_int(cfg.raw_max - cfg.raw_min + 1));
        imaging::RawImage raw;
        raw.width = raw.height = n;
        raw.pixels.assign(static_cast<std::size_t>(n) * n, 0.0);

        // Noisy background.
        for (auto& p : raw.pixels) p = 0.15 + 0.08 * rng.uniform();

        // Shape: class 0 filled disc, class 1 annulus.
        const double cx = n * (0.5 + 0.08 * (rng.uniform() - 0.5));
        const double cy = n * (0.5 + 0.08 * (rng.uniform() - 0.5));
        const double radius = n * rng.uniform(0.22, 0.3);
        const double thickness = radius * 0.4;
        const double fg = 0.5 + 0.1 * rng.uniform();
        for (int r = 0; r < n; ++r) {
          for (int c = 0; c < n; ++c) {
            const double dist = std::hypot(r - cy, c - cx);
            const bool inside = cls == 0 ? dist <= radius
                                         : (dist <= radius && dist >= radius - thickness);
            if (inside) raw.at(r, c) = fg + 0.05 * rng.uniform();
          }
        }

        if (is_target && cfg.shift != 0.0) {
          // Mean-preserving contrast reduction plus the configured offset:
          // the global mean moves by exactly cfg.shift before clamping.
          double mean = 0.0;
          for (double p : raw.pixels) mean += p;
          mean /= static_cast<double>(raw.pixels.size());
          const double contrast = 1.0 - 0.5 * cfg.shift;
          for (auto& p : raw.pixels) {
            p = std::clamp(contrast * (p - mean) + mean + cfg.shift, 0.0, 1.0);
          }
        }

        const auto canonical = imaging::canonicalize(raw, cfg.side, cfg.channels);
        const fs::path file = dir / (std::to_string(i) + ".png");
        imaging::write_png(canonical, file.string());
        records.push_back({file.string(), cls,
                           is_target ? Domain::kTarget : Domain::kSource});
      }
    }
    const fs::path manifest = fs::path(cfg.out_dir) / (domain_name + "_manifest.csv");
    save_manifest(records, manifest.string());
    (is_target ? result.target_manifest : result.source_manifest) = manifest.string();
  }
  return result;
}

}  // namespace danet::data
