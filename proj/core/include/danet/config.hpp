#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "danet/datasets.hpp"
#include "danet/imaging.hpp"
#include "danet/training.hpp"

namespace danet::config {

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string description;
};

// Flat key=value configuration with documented defaults. Unknown keys are
// rejected; precedence is flags > config file > defaults.
class Config {
 public:
  static const std::vector<KeySpec>& keys();
  static Config defaults();
  static std::string help_text();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;     // colon-separated
  std::vector<double> get_double_list(const std::string& key) const;

  training::TrainConfig train_config() const;
  imaging::AugmentConfig augment_config() const;
  data::SynthConfig synth_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace danet::config
