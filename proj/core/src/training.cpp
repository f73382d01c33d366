#include "danet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "danet/image_io.hpp"

namespace danet::training {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::map<std::string, std::string>& m, const std::string& key) {
  return std::stod(m.at(key));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return Rng(seed).fork(tag).next_u64();
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
  if (!(tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be positive");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw std::invalid_argument("TrainConfig: batch size must be even and >= 2");
  }
  if (!(lr0 > 0.0) || nu < 0.0 || !(p > 0.0)) {
    throw std::invalid_argument("TrainConfig: rates must be positive");
  }
  if (batch_budget < 1) throw std::invalid_argument("TrainConfig: batch_budget must be >= 1");
  if (validation_interval < 1) {
    throw std::invalid_argument("TrainConfig: validation_interval must be >= 1");
  }
  if (k < 0) throw std::invalid_argument("TrainConfig: K must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["lambda"] = fmt_double(lambda);
  m["tau"] = fmt_double(tau);
  m["k"] = std::to_string(k);
  m["batch_size"] = std::to_string(batch_size);
  m["unlabeled_per_batch"] = std::to_string(unlabeled_per_batch);
  m["lr0"] = fmt_double(lr0);
  m["nu"] = fmt_double(nu);
  m["p"] = fmt_double(p);
  m["batch_budget"] = std::to_string(batch_budget);
  m["validation_interval"] = std::to_string(validation_interval);
  m["seed"] = std::to_string(seed);
  m["channels"] = std::to_string(channels);
  m["num_classes"] = std::to_string(num_classes);
  m["normalize_prototypes"] = normalize_prototypes ? "1" : "0";
  m["flip_probability"] = fmt_double(augment.flip_probability);
  m["scale_low"] = fmt_double(augment.scale_low);
  m["scale_high"] = fmt_double(augment.scale_high);
  std::ostringstream widths;
  for (std::size_t i = 0; i < encoder_widths.size(); ++i) {
    if (i) widths << ':';
    widths << encoder_widths[i];
  }
  m["encoder_widths"] = widths.str();
  return m;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& m) {
  TrainConfig cfg;
  cfg.lambda = parse_double(m, "lambda");
  cfg.tau = parse_double(m, "tau");
  cfg.k = std::stoi(m.at("k"));
  cfg.batch_size = std::stoi(m.at("batch_size"));
  cfg.unlabeled_per_batch = std::stoi(m.at("unlabeled_per_batch"));
  cfg.lr0 = parse_double(m, "lr0");
  cfg.nu = parse_double(m, "nu");
  cfg.p = parse_double(m, "p");
  cfg.batch_budget = std::stoi(m.at("batch_budget"));
  cfg.validation_interval = std::stoi(m.at("validation_interval"));
  cfg.seed = std::stoull(m.at("seed"));
  cfg.channels = std::stoi(m.at("channels"));
  cfg.num_classes = std::stoi(m.at("num_classes"));
  cfg.normalize_prototypes = m.at("normalize_prototypes") == "1";
  cfg.augment.flip_probability = parse_double(m, "flip_probability");
  cfg.augment.scale_low = parse_double(m, "scale_low");
  cfg.augment.scale_high = parse_double(m, "scale_high");
  cfg.encoder_widths.clear();
  std::stringstream ss(m.at("encoder_widths"));
  std::string part;
  while (std::getline(ss, part, ':')) cfg.encoder_widths.push_back(std::stoi(part));
  return cfg;
}

double lr_schedule(double lr0, double nu, double p, long b) {
  return lr0 * std::pow(1.0 + nu * static_cast<double>(b), -p);
}

Adam::Adam(std::vector<Param*> params) : params_(std::move(params)) {
  for (const Param* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m_[i].data[j] = kBeta1 * m_[i].data[j] + (1.0 - kBeta1) * g;
      v_[i].data[j] = kBeta2 * v_[i].data[j] + (1.0 - kBeta2) * g * g;
      const double mhat = m_[i].data[j] / bc1;
      const double vhat = v_[i].data[j] / bc2;
      p.value.data[j] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

void Adam::restore(const std::vector<Tensor>& m, const std::vector<Tensor>& v, long t) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw std::invalid_argument("Adam::restore: moment count mismatch");
  }
  m_ = m;
  v_ = v;
  t_ = t;
}

long Checkpoint::batch_index() const { return std::stol(metadata.at("batch_index")); }
double Checkpoint::val_accuracy() const { return std::stod(metadata.at("val_accuracy")); }

namespace {

constexpr char kMagic[4] = {'D', 'A', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::uint32_t len = 0;
  read_pod(in, len);
  if (len > (1u << 28)) throw std::runtime_error("checkpoint: corrupt string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    write_string(out, k);
    write_string(out, v);
  }
  write_pod(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(out, name);
    write_pod(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod(out, static_cast<std::int32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
  }
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  }
  Checkpoint ckpt;
  std::uint32_t nmeta = 0;
  read_pod(in, nmeta);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    auto k = read_string(in);
    ckpt.metadata[k] = read_string(in);
  }
  std::uint32_t ntensors = 0;
  read_pod(in, ntensors);
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    const std::string name = read_string(in);
    std::uint32_t ndims = 0;
    read_pod(in, ndims);
    if (ndims > 8) throw std::runtime_error("load_checkpoint: corrupt tensor rank");
    std::vector<int> shape(ndims);
    for (auto& d : shape) {
      std::int32_t v = 0;
      read_pod(in, v);
      d = v;
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data");
    ckpt.tensors[name] = std::move(t);
  }
  return ckpt;
}

std::string log_entry_to_json(const TrainLogEntry& e) {
  std::ostringstream out;
  out << "{\"b\":" << e.b << ",\"lr\":" << fmt_double(e.lr) << ",\"ce\":" << fmt_double(e.ce)
      << ",\"eu\":" << fmt_double(e.eu) << ",\"psi_h\":" << fmt_double(e.psi_h)
      << ",\"psi_c\":" << fmt_double(e.psi_c);
  if (e.val_accuracy) out << ",\"val_acc\":" << fmt_double(*e.val_accuracy);
  out << "}";
  return out.str();
}

const imaging::CanonicalImage& ImageCache::get(const std::string& path) {
  auto it = cache_.find(path);
  if (it == cache_.end()) {
    it = cache_.emplace(path, imaging::read_canonical_png(path, channels_)).first;
  }
  return it->second;
}

Trainer::Trainer(TrainConfig cfg, const data::EpisodeSplit& split)
    : cfg_(std::move(cfg)),
      split_(split),
      encoder_(cfg_.channels, cfg_.encoder_widths, derive_seed(cfg_.seed, stream_tag::kEncoderInit)),
      head_(model::init_head(encoder_.feature_dim(), cfg_.num_classes,
                             derive_seed(cfg_.seed, stream_tag::kHeadInit), cfg_.tau)),
      adam_encoder_([this] {
        std::vector<Param*> ps;
        for (auto& p : encoder_.params()) ps.push_back(&p);
        return ps;
      }()),
      adam_head_({&head_.W}),
      sampler_(split, cfg_.batch_size, cfg_.effective_unlabeled(),
               Rng(derive_seed(cfg_.seed, stream_tag::kSampler))),
      cache_(cfg_.channels) {
  cfg_.validate();
  head_.normalize_prototypes = cfg_.normalize_prototypes;
}

objectives::BatchTensors Trainer::materialize(const data::TrainingBatch& batch) {
  objectives::BatchTensors tensors;
  for (const auto& s : batch.labeled_source) {
    if (s.record.label == data::kUnlabeled) {
      throw std::logic_error("materialize: unlabeled record in labeled source pool");
    }
    tensors.labeled_inputs.push_back(imaging::to_tensor(cache_.get(s.record.path)));
    tensors.labels.push_back(s.record.label);
  }
  for (const auto& s : batch.labeled_target) {
    if (s.record.label == data::kUnlabeled) {
      throw std::logic_error("materialize: unlabeled record in labeled target pool");
    }
    const auto& img = cache_.get(s.record.path);
    if (s.augment) {
      Rng rng(s.augment_seed);
      tensors.labeled_inputs.push_back(imaging::to_tensor(imaging::augment(img, cfg_.augment, rng)));
    } else {
      tensors.labeled_inputs.push_back(imaging::to_tensor(img));
    }
    tensors.labels.push_back(s.record.label);
  }
  for (const auto& s : batch.unlabeled_target) {
    tensors.unlabeled_inputs.push_back(imaging::to_tensor(cache_.get(s.record.path)));
  }
  return tensors;
}

objectives::LossReport Trainer::step(const data::TrainingBatch& batch) {
  const auto tensors = materialize(batch);
  encoder_.zero_grad();
  head_.W.zero_grad();
  const auto report = objectives::compute_gradients(tensors, encoder_, head_, cfg_.lambda);
  if (!std::isfinite(report.psi_h) || !std::isfinite(report.psi_c)) {
    std::ostringstream msg;
    msg << "train_step: non-finite loss at batch " << batch_index_ << "; batch paths:";
    for (const auto& s : batch.labeled_source) msg << ' ' << s.record.path;
    for (const auto& s : batch.labeled_target) msg << ' ' << s.record.path;
    for (const auto& s : batch.unlabeled_target) msg << ' ' << s.record.path;
    throw std::runtime_error(msg.str());
  }
  const double lr = lr_schedule(cfg_.lr0, cfg_.nu, cfg_.p, batch_index_);
  adam_head_.step(lr);     // psi_c step, encoder frozen
  adam_encoder_.step(lr);  // psi_h step, prototypes frozen
  ++batch_index_;
  return report;
}

double Trainer::validation_accuracy() {
  if (split_.target_validation.empty()) {
    throw std::logic_error("validation_accuracy: empty validation set");
  }
  std::size_t correct = 0;
  for (const auto& rec : split_.target_validation) {
    const auto f = encoder_.forward(imaging::to_tensor(cache_.get(rec.path)));
    const auto probs = model::head_forward(head_, f);
    const int pred = static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                                      probs.begin());
    if (pred == rec.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split_.target_validation.size());
}

Checkpoint Trainer::pack_state(bool include_best) const {
  Checkpoint ckpt;
  for (const auto& [k, v] : cfg_.to_map()) ckpt.metadata["config." + k] = v;
  ckpt.metadata["batch_index"] = std::to_string(batch_index_);
  ckpt.metadata["val_accuracy"] = has_best_ ? fmt_double(best_val_acc_) : "-1";
  ckpt.metadata["adam.encoder.t"] = std::to_string(adam_encoder_.step_count());
  ckpt.metadata["adam.head.t"] = std::to_string(adam_head_.step_count());
  for (const auto& p : encoder_.params()) ckpt.tensors[p.name] = p.value;
  ckpt.tensors["head.W"] = head_.W.value;
  const auto& enc_params = encoder_.params();
  for (std::size_t i = 0; i < enc_params.size(); ++i) {
    ckpt.tensors["adam.m." + enc_params[i].name] = adam_encoder_.first_moments()[i];
    ckpt.tensors["adam.v." + enc_params[i].name] = adam_encoder_.second_moments()[i];
  }
  ckpt.tensors["adam.m.head.W"] = adam_head_.first_moments()[0];
  ckpt.tensors["adam.v.head.W"] = adam_head_.second_moments()[0];
  if (include_best && has_best_) {
    ckpt.metadata["best.batch"] = std::to_string(best_batch_);
    ckpt.metadata["best.val_accuracy"] = fmt_double(best_val_acc_);
    for (const auto& [k, v] : best_counters_) ckpt.metadata["best." + k] = v;
    for (const auto& [name, t] : best_tensors_) ckpt.tensors["best." + name] = t;
  }
  return ckpt;
}

Checkpoint Trainer::snapshot() const { return pack_state(/*include_best=*/true); }

Checkpoint Trainer::best_checkpoint() const {
  if (!has_best_) {
    // K = 0 or no validation point reached: fall back to the final state.
    return pack_state(false);
  }
  Checkpoint ckpt;
  for (const auto& [k, v] : cfg_.to_map()) ckpt.metadata["config." + k] = v;
  ckpt.metadata["batch_index"] = std::to_string(best_batch_);
  ckpt.metadata["val_accuracy"] = fmt_double(best_val_acc_);
  for (const auto& [k, v] : best_counters_) ckpt.metadata[k] = v;
  ckpt.tensors = best_tensors_;
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  for (auto& p : encoder_.params()) p.value = ckpt.tensors.at(p.name);
  head_.W.value = ckpt.tensors.at("head.W");

  std::vector<Tensor> m, v;
  for (const auto& p : encoder_.params()) {
    m.push_back(ckpt.tensors.at("adam.m." + p.name));
    v.push_back(ckpt.tensors.at("adam.v." + p.name));
  }
  adam_encoder_.restore(m, v, std::stol(ckpt.metadata.at("adam.encoder.t")));
  adam_head_.restore({ckpt.tensors.at("adam.m.head.W")}, {ckpt.tensors.at("adam.v.head.W")},
                     std::stol(ckpt.metadata.at("adam.head.t")));

  if (ckpt.metadata.count("best.batch")) {
    has_best_ = true;
    best_batch_ = std::stol(ckpt.metadata.at("best.batch"));
    best_val_acc_ = std::stod(ckpt.metadata.at("best.val_accuracy"));
    best_tensors_.clear();
    best_counters_.clear();
    for (const auto& [name, t] : ckpt.tensors) {
      if (name.rfind("best.", 0) == 0) best_tensors_[name.substr(5)] = t;
    }
    for (const auto& [k, val] : ckpt.metadata) {
      if (k.rfind("best.adam.", 0) == 0) best_counters_[k.substr(5)] = val;
    }
  }

  // The batch stream is a pure function of the seed; replay it to the
  // saved position instead of serializing sampler internals.
  const long target = ckpt.batch_index();
  while (batch_index_ < target) {
    sampler_.next();
    ++batch_index_;
  }
}

TrainResult Trainer::run(std::optional<long> stop_after,
                         const std::optional<std::string>& resume_from,
                         const std::optional<std::string>& latest_path) {
  if (resume_from) restore(load_checkpoint(*resume_from));
  const long stop = std::min<long>(stop_after.value_or(cfg_.batch_budget), cfg_.batch_budget);
  const bool can_validate = !split_.target_validation.empty();

  TrainResult result;
  while (batch_index_ < stop) {
    const auto batch = sampler_.next();
    const long b = batch_index_;
    const double lr = lr_schedule(cfg_.lr0, cfg_.nu, cfg_.p, b);
    const auto report = step(batch);

    TrainLogEntry entry;
    entry.b = b;
    entry.lr = lr;
    entry.ce = report.ce;
    entry.eu = report.eu;
    entry.psi_h = report.psi_h;
    entry.psi_c = report.psi_c;
    if (can_validate && batch_index_ % cfg_.validation_interval == 0) {
      const double acc = validation_accuracy();
      entry.val_accuracy = acc;
      if (acc > best_val_acc_) {  // ties keep the earliest batch
        best_val_acc_ = acc;
        best_batch_ = batch_index_;
        has_best_ = true;
        best_tensors_.clear();
        for (const auto& p : encoder_.params()) best_tensors_[p.name] = p.value;
        best_tensors_["head.W"] = head_.W.value;
        const auto& enc_params = encoder_.params();
        for (std::size_t i = 0; i < enc_params.size(); ++i) {
          best_tensors_["adam.m." + enc_params[i].name] = adam_encoder_.first_moments()[i];
          best_tensors_["adam.v." + enc_params[i].name] = adam_encoder_.second_moments()[i];
        }
        best_tensors_["adam.m.head.W"] = adam_head_.first_moments()[0];
        best_tensors_["adam.v.head.W"] = adam_head_.second_moments()[0];
        best_counters_["adam.encoder.t"] = std::to_string(adam_encoder_.step_count());
        best_counters_["adam.head.t"] = std::to_string(adam_head_.step_count());
      }
    }
    result.log.push_back(std::move(entry));
  }

  if (!can_validate && batch_index_ >= cfg_.batch_budget) {
    std::cerr << "warning: no validation set (K=0); keeping the final-batch checkpoint\n";
  }
  if (latest_path) save_checkpoint(snapshot(), *latest_path);
  result.best = best_checkpoint();
  return result;
}

TrainResult train_loop(const TrainConfig& cfg, const data::EpisodeSplit& split,
                       const std::optional<std::string>& log_path) {
  Trainer trainer(cfg, split);
  auto result = trainer.run();
  if (log_path) {
    std::ofstream out(*log_path);
    if (!out) throw std::runtime_error("train_loop: cannot open log " + *log_path);
    for (const auto& entry : result.log) out << log_entry_to_json(entry) << '\n';
  }
  return result;
}

}  // namespace danet::training
