// danet: dataset preparation, synthesis, training, evaluation, scenario
// sweeps, and gradient checking for the domain-adaptation toolkit.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "danet/config.hpp"
#include "danet/datasets.hpp"
#include "danet/evaluation.hpp"
#include "danet/image_io.hpp"
#include "danet/imaging.hpp"
#include "danet/objectives.hpp"
#include "danet/training.hpp"

namespace fs = std::filesystem;
using danet::config::Config;

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed;
  std::string out;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "key=value config file");
  cmd->add_option("--set", opts.sets, "config override, key=value (repeatable)")
      ->type_name("KEY=VALUE");
  cmd->add_option("--seed", opts.seed, "master seed (overrides config)");
  cmd->add_option("--out", opts.out, "output directory (overrides config)");
  cmd->add_flag("--verbose", opts.verbose, "verbose logging");
}

// Precedence: flags > config file > defaults.
Config resolve(const CommonOpts& opts) {
  Config cfg = Config::defaults();
  if (!opts.config_file.empty()) cfg.load_file(opts.config_file);
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--set expects key=value, got: " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.seed.empty()) cfg.set("seed", opts.seed);
  if (!opts.out.empty()) cfg.set("out_dir", opts.out);
  if (opts.verbose) cfg.set("verbose", "1");
  return cfg;
}

danet::data::EpisodeSplit episode_from_config(const Config& cfg) {
  const auto source = danet::data::load_manifest(cfg.get("source_manifest"));
  const auto target = danet::data::load_manifest(cfg.get("target_manifest"));
  return danet::data::make_episode(source, target, cfg.get_int("k"),
                                   cfg.get_int("num_classes"), cfg.get_u64("seed"));
}

int cmd_prep(const std::string& in_dir, const Config& cfg) {
  const int side = cfg.get_int("side");
  const int channels = cfg.get_int("channels");
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);

  std::vector<danet::data::SampleRecord> records;
  std::vector<std::string> extra;
  int skipped = 0, count = 0;
  int min_w = 0, max_w = 0, min_h = 0, max_h = 0;

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  for (const auto& class_dir : class_dirs) {
    const std::string class_name = class_dir.filename().string();
    int label = danet::data::kUnlabeled;
    if (class_name == "covid") label = 0;
    else if (class_name == "non-covid") label = 1;
    else {
      std::cerr << "prep: skipping directory with unknown class name: " << class_name << "\n";
      continue;
    }
    fs::create_directories(out_dir / class_name);

    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(class_dir)) {
      if (f.is_regular_file()) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
      danet::imaging::RawImage raw;
      try {
        raw = danet::imaging::read_image(file.string());
      } catch (const std::exception& e) {
        std::cerr << "prep: skipping unreadable file " << file << ": " << e.what() << "\n";
        ++skipped;
        continue;
      }
      danet::imaging::CanonicalizeMeta meta;
      const auto canon = danet::imaging::canonicalize(raw, side, channels, meta);
      const fs::path out_path = out_dir / class_name / (file.stem().string() + ".png");
      danet::imaging::write_png(canon, out_path.string());

      if (count == 0) {
        min_w = max_w = raw.width;
        min_h = max_h = raw.height;
      }
      min_w = std::min(min_w, raw.width);
      max_w = std::max(max_w, raw.width);
      min_h = std::min(min_h, raw.height);
      max_h = std::max(max_h, raw.height);
      ++count;

      records.push_back({out_path.string(), label, danet::data::Domain::kSource});
      char meta_col[160];
      std::snprintf(meta_col, sizeof(meta_col),
                    "orig=%dx%d;scaled_h=%d;pad=%d/%d;crop=%d/%d", meta.original_width,
                    meta.original_height, meta.scaled_height, meta.pad_top, meta.pad_bottom,
                    meta.crop_top, meta.crop_bottom);
      extra.push_back(meta_col);
    }
  }

  const fs::path manifest = out_dir / "manifest.csv";
  danet::data::save_manifest(records, manifest.string(), extra);

  std::cout << "corpus statistics\n"
            << "  images    " << count << "\n"
            << "  rows      min " << min_h << "  max " << max_h << "\n"
            << "  columns   min " << min_w << "  max " << max_w << "\n"
            << "  output    " << side << "x" << side << " -> " << manifest.string() << "\n";
  if (skipped > 0) {
    std::cerr << "prep: " << skipped << " file(s) skipped\n";
    return 2;
  }
  return 0;
}

int cmd_synth(const Config& cfg) {
  auto synth = cfg.synth_config();
  fs::create_directories(synth.out_dir);
  const auto result = danet::data::synth_domains(synth, cfg.get_u64("seed"));
  std::cout << "source manifest: " << result.source_manifest << "\n"
            << "target manifest: " << result.target_manifest << "\n";
  return 0;
}

int cmd_train(const Config& cfg) {
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  auto split = episode_from_config(cfg);
  const auto tc = cfg.train_config();

  const auto result = danet::training::train_loop(tc, split,
                                                  (out_dir / "train_log.ndjson").string());
  const fs::path best_path = out_dir / "best.ckpt";
  danet::training::save_checkpoint(result.best, best_path.string());

  std::cout << "trained " << tc.batch_budget << " batches\n"
            << "best checkpoint: " << best_path.string() << " (batch "
            << result.best.batch_index() << ", val accuracy " << result.best.val_accuracy()
            << ")\n"
            << "log: " << (out_dir / "train_log.ndjson").string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, const Config& cfg) {
  auto loaded = danet::eval::model_from_checkpoint(
      danet::training::load_checkpoint(checkpoint));
  const auto samples = danet::data::load_manifest(manifest);
  danet::training::ImageCache cache(loaded.config.channels);
  const auto result = danet::eval::evaluate(loaded.encoder, loaded.head, samples, cache);

  nlohmann::json doc;
  doc["accuracy"] = result.accuracy;
  doc["confusion"] = {{"tp", result.cm.tp}, {"tn", result.cm.tn},
                      {"fp", result.cm.fp}, {"fn", result.cm.fn}};
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "eval.json") << doc.dump(2) << "\n";

  std::cout << "samples  " << result.cm.total() << "\n"
            << "accuracy " << result.accuracy << "\n"
            << "tp " << result.cm.tp << "  tn " << result.cm.tn << "  fp " << result.cm.fp
            << "  fn " << result.cm.fn << "\n";
  return 0;
}

std::vector<danet::eval::ScenarioSpec> scenarios_from_config(const Config& cfg) {
  std::vector<danet::eval::ScenarioSpec> specs;
  const std::string file = cfg.get("scenarios_file");
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open scenarios file: " + file);
    nlohmann::json doc;
    in >> doc;
    for (const auto& item : doc) {
      danet::eval::ScenarioSpec spec;
      spec.name = item.at("name").get<std::string>();
      spec.source_manifest = item.at("source_manifest").get<std::string>();
      spec.target_manifest = item.at("target_manifest").get<std::string>();
      if (item.contains("k_values")) spec.k_values = item["k_values"].get<std::vector<int>>();
      if (item.contains("repeats")) spec.repeats = item["repeats"].get<int>();
      specs.push_back(std::move(spec));
    }
  } else {
    danet::eval::ScenarioSpec spec;
    spec.name = "default";
    spec.source_manifest = cfg.get("source_manifest");
    spec.target_manifest = cfg.get("target_manifest");
    spec.k_values = cfg.get_int_list("k_values");
    spec.repeats = cfg.get_int("repeats");
    specs.push_back(std::move(spec));
  }
  return specs;
}

int cmd_scenarios(const Config& cfg) {
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  const auto tc = cfg.train_config();

  const std::string sweep = cfg.get("sweep");
  if (!sweep.empty()) {
    auto split = episode_from_config(cfg);
    const auto curve = danet::eval::ablation_sweep(sweep, cfg.get_double_list("sweep_values"),
                                                   tc, split);
    const fs::path csv = out_dir / ("ablation_" + sweep + ".csv");
    std::ofstream(csv) << danet::eval::ablation_to_csv(curve);
    std::cout << danet::eval::ablation_to_csv(curve)
              << "best " << sweep << ": " << curve.best_value << "\n"
              << "written: " << csv.string() << "\n";
    return 0;
  }

  const auto specs = scenarios_from_config(cfg);
  const auto report = danet::eval::run_scenarios(specs, tc);
  const fs::path json_path = out_dir / "scenarios.json";
  std::ofstream(json_path) << danet::eval::report_to_json(report) << "\n";
  std::cout << danet::eval::report_to_table(report) << "written: " << json_path.string()
            << "\n";
  for (const auto& row : report.rows) {
    if (row.baseline.failed) return 1;
    for (const auto& cell : row.cells) {
      if (cell.failed) return 1;
    }
  }
  return 0;
}

int cmd_gradcheck(const Config& cfg) {
  const auto report = danet::objectives::gradcheck_battery(
      cfg.get_int("gradcheck_instances"), cfg.get_double("gradcheck_delta"),
      cfg.get_double("gradcheck_tolerance"), cfg.get_u64("seed"));

  nlohmann::json doc;
  doc["pass"] = report.pass;
  doc["instances"] = report.instances;
  doc["gradients_checked"] = report.gradients_checked;
  doc["max_rel_error"] = report.max_rel_error;
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& check : report.reports) {
    for (const auto& f : check.failures) {
      fails.push_back({{"param", f.param}, {"index", f.index}, {"analytic", f.analytic},
                       {"numeric", f.numeric}, {"rel_error", f.rel_error}});
    }
  }
  doc["failures"] = fails;
  const fs::path out_dir = cfg.get("out_dir");
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "gradcheck.json") << doc.dump(2) << "\n";

  std::cout << (report.pass ? "PASS" : "FAIL") << "  instances " << report.instances
            << "  gradients " << report.gradients_checked << "  max rel error "
            << report.max_rel_error << "\n";
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised domain-adaptation toolkit"};
  app.require_subcommand(1);
  app.footer(Config::help_text());

  CommonOpts prep_opts, synth_opts, train_opts, eval_opts, scen_opts, grad_opts;
  std::string prep_in, eval_ckpt, eval_manifest;

  auto* prep = app.add_subcommand("prep", "canonicalize a class-foldered image corpus");
  prep->add_option("--in", prep_in, "input directory with class subdirectories")->required();
  add_common(prep, prep_opts);

  auto* synth = app.add_subcommand("synth", "generate the synthetic two-domain corpus");
  add_common(synth, synth_opts);

  auto* train = app.add_subcommand("train", "run the alternating adaptation loop");
  add_common(train, train_opts);

  auto* evalc = app.add_subcommand("eval", "score a checkpoint on a labeled manifest");
  evalc->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evalc->add_option("--manifest", eval_manifest, "labeled manifest to score")->required();
  add_common(evalc, eval_opts);

  auto* scen = app.add_subcommand("scenarios", "cross-dataset scenario grid or ablation sweep");
  add_common(scen, scen_opts);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(grad, grad_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) return cmd_prep(prep_in, resolve(prep_opts));
    if (synth->parsed()) return cmd_synth(resolve(synth_opts));
    if (train->parsed()) return cmd_train(resolve(train_opts));
    if (evalc->parsed()) return cmd_eval(eval_ckpt, eval_manifest, resolve(eval_opts));
    if (scen->parsed()) return cmd_scenarios(resolve(scen_opts));
    if (grad->parsed()) return cmd_gradcheck(resolve(grad_opts));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
