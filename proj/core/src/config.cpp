#include "danet/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace danet::config {

const std::vector<KeySpec>& Config::keys() {
  static const std::vector<KeySpec> specs = {
      {"lambda", "0.1", "trade-off weight between cross-entropy and unlabeled entropy"},
      {"tau", "0.05", "softmax temperature of the prototypical head"},
      {"k", "3", "labeled shots per class from the target domain"},
      {"batch_size", "12", "labeled batch size B; B/2 source + B/2 target"},
      {"unlabeled_per_batch", "-1", "unlabeled target samples per batch U; -1 means U = B"},
      {"lr0", "0.0001", "initial learning rate"},
      {"nu", "0.001", "learning-rate decay rate"},
      {"p", "0.75", "learning-rate decay exponent"},
      {"batch_budget", "400", "total training batches"},
      {"validation_interval", "10", "batches between validation evaluations"},
      {"seed", "0", "master seed; all randomness derives from it"},
      {"side", "256", "canonical image side in pixels"},
      {"channels", "3", "channels of the model input (grayscale replicated)"},
      {"num_classes", "2", "number of classes"},
      {"encoder_widths", "16:32:64", "conv channel widths of the desk encoder"},
      {"normalize_prototypes", "0", "also L2-normalize prototype rows (1/0)"},
      {"flip_probability", "0.5", "horizontal-flip probability for target augmentation"},
      {"scale_low", "0.8", "lower bound of the augmentation scale factor"},
      {"scale_high", "1.2", "upper bound of the augmentation scale factor"},
      {"source_manifest", "", "CSV manifest of the source dataset"},
      {"target_manifest", "", "CSV manifest of the target dataset"},
      {"out_dir", "out", "output directory"},
      {"verbose", "0", "verbose logging (1/0)"},
      {"synth_count", "100", "synthetic images per class per domain"},
      {"synth_shift", "0.3", "synthetic target-domain intensity shift"},
      {"synth_side", "64", "canonical side of the synthetic corpus"},
      {"synth_raw_min", "96", "minimum raw side of synthetic images"},
      {"synth_raw_max", "160", "maximum raw side of synthetic images"},
      {"scenarios_file", "", "JSON file listing scenario specs"},
      {"k_values", "3:5:10", "K values swept by the scenario runner"},
      {"repeats", "5", "seeds per scenario cell"},
      {"sweep", "", "ablation parameter (lambda or tau); empty disables"},
      {"sweep_values", "0.001:0.005:0.01:0.1:0.2:0.5:1.0", "ablation value grid"},
      {"gradcheck_instances", "20", "random instances for the gradient check"},
      {"gradcheck_delta", "0.0001", "finite-difference step"},
      {"gradcheck_tolerance", "0.0001", "maximum relative error accepted"},
  };
  return specs;
}

Config Config::defaults() {
  Config cfg;
  for (const auto& spec : keys()) cfg.values_[spec.name] = spec.default_value;
  return cfg;
}

std::string Config::help_text() {
  std::ostringstream out;
  out << "config keys (key=value, one per line in --config files):\n";
  for (const auto& spec : keys()) {
    out << "  " << spec.name << " (default: "
        << (spec.default_value.empty() ? "<empty>" : spec.default_value) << ")\n      "
        << spec.description << "\n";
  }
  return out.str();
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) {
    throw std::invalid_argument("unknown config key: " + key);
  }
  values_[key] = value;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key=value");
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown config key: " + key);
  return it->second;
}

double Config::get_double(const std::string& key) const { return std::stod(get(key)); }
int Config::get_int(const std::string& key) const { return std::stoi(get(key)); }
std::uint64_t Config::get_u64(const std::string& key) const { return std::stoull(get(key)); }
bool Config::get_bool(const std::string& key) const { return get(key) == "1" || get(key) == "true"; }

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string part;
  while (std::getline(ss, part, ':')) out.push_back(std::stoi(part));
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string part;
  while (std::getline(ss, part, ':')) out.push_back(std::stod(part));
  return out;
}

training::TrainConfig Config::train_config() const {
  training::TrainConfig cfg;
  cfg.lambda = get_double("lambda");
  cfg.tau = get_double("tau");
  cfg.k = get_int("k");
  cfg.batch_size = get_int("batch_size");
  cfg.unlabeled_per_batch = get_int("unlabeled_per_batch");
  cfg.lr0 = get_double("lr0");
  cfg.nu = get_double("nu");
  cfg.p = get_double("p");
  cfg.batch_budget = get_int("batch_budget");
  cfg.validation_interval = get_int("validation_interval");
  cfg.seed = get_u64("seed");
  cfg.channels = get_int("channels");
  cfg.num_classes = get_int("num_classes");
  cfg.encoder_widths = get_int_list("encoder_widths");
  cfg.normalize_prototypes = get_bool("normalize_prototypes");
  cfg.augment = augment_config();
  cfg.validate();
  return cfg;
}

imaging::AugmentConfig Config::augment_config() const {
  imaging::AugmentConfig cfg;
  cfg.flip_probability = get_double("flip_probability");
  cfg.scale_low = get_double("scale_low");
  cfg.scale_high = get_double("scale_high");
  return cfg;
}

data::SynthConfig Config::synth_config() const {
  data::SynthConfig cfg;
  cfg.per_class_per_domain = get_int("synth_count");
  cfg.shift = get_double("synth_shift");
  cfg.side = get_int("synth_side");
  cfg.channels = get_int("channels");
  cfg.raw_min = get_int("synth_raw_min");
  cfg.raw_max = get_int("synth_raw_max");
  cfg.out_dir = get("out_dir");
  return cfg;
}

}  // namespace danet::config
