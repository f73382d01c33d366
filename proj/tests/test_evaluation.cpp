#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "danet/datasets.hpp"
#include "danet/evaluation.hpp"
#include "danet/training.hpp"

using namespace danet;
using namespace danet::eval;

namespace {

const data::SynthResult& eval_corpus() {
  static const data::SynthResult result = [] {
    data::SynthConfig cfg;
    cfg.per_class_per_domain = 10;
    cfg.side = 32;
    cfg.out_dir = "/tmp/danet_test_evalcorpus";
    return data::synth_domains(cfg, 501);
  }();
  return result;
}

training::TrainConfig fast_config() {
  training::TrainConfig cfg;
  cfg.batch_budget = 4;
  cfg.validation_interval = 2;
  cfg.encoder_widths = {4, 6, 8};
  cfg.batch_size = 8;
  cfg.k = 3;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("confusion matrix and accuracy against a hand count") {
  //                 predictions      labels
  const std::vector<int> pred = {0, 0, 1, 1, 0, 1, 0, 1};
  const std::vector<int> labels = {0, 1, 1, 0, 0, 1, 1, 1};
  const auto cm = confusion(pred, labels, /*positive_class=*/0);
  CHECK(cm.tp == 2);  // predicted 0, was 0
  CHECK(cm.tn == 3);  // predicted 1, was 1
  CHECK(cm.fp == 2);  // predicted 0, was 1
  CHECK(cm.fn == 1);  // predicted 1, was 0
  CHECK(cm.total() == 8);
  CHECK(accuracy(cm) == doctest::Approx(5.0 / 8.0).epsilon(1e-15));

  // Independent recount: accuracy equals the match fraction.
  int matches = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) matches += pred[i] == labels[i];
  CHECK(accuracy(cm) == doctest::Approx(static_cast<double>(matches) / pred.size()));

  CHECK_THROWS_AS((void)confusion({0}, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS((void)confusion({}, {}), std::invalid_argument);
  CHECK_THROWS_AS((void)accuracy(ConfusionMatrix{}), std::invalid_argument);
}

TEST_CASE("evaluate scores a manifest and never mutates the model") {
  const auto cfg = fast_config();
  model::DeskEncoder encoder(cfg.channels, cfg.encoder_widths, 21);
  auto head = model::init_head(encoder.feature_dim(), 2, 22, cfg.tau);
  const auto samples = data::load_manifest(eval_corpus().source_manifest);

  const auto w_before = head.W.value.data;
  const auto enc_before = encoder.params()[0].value.data;

  training::ImageCache cache(cfg.channels);
  const auto result = evaluate(encoder, head, samples, cache);
  CHECK(result.cm.total() == static_cast<long>(samples.size()));
  CHECK(result.accuracy >= 0.0);
  CHECK(result.accuracy <= 1.0);
  CHECK(head.W.value.data == w_before);
  CHECK(encoder.params()[0].value.data == enc_before);

  // Unlabeled records cannot be scored.
  auto unlabeled = samples;
  unlabeled[0].label = data::kUnlabeled;
  CHECK_THROWS_AS((void)evaluate(encoder, head, unlabeled, cache), std::invalid_argument);
}

TEST_CASE("checkpoint round trip rebuilds an equivalent model") {
  const auto cfg = fast_config();
  const auto source = data::load_manifest(eval_corpus().source_manifest);
  const auto target = data::load_manifest(eval_corpus().target_manifest);
  auto split = data::make_episode(source, target, cfg.k, cfg.num_classes, cfg.seed);
  training::Trainer trainer(cfg, split);
  trainer.run();

  const std::string path = "/tmp/danet_test_model_rt.bin";
  training::save_checkpoint(trainer.snapshot(), path);
  auto loaded = model_from_checkpoint(training::load_checkpoint(path));

  CHECK(loaded.config.tau == cfg.tau);
  CHECK(loaded.config.encoder_widths == cfg.encoder_widths);
  CHECK(loaded.head.W.value.data == trainer.head().W.value.data);
  training::ImageCache cache(cfg.channels);
  const auto a = evaluate(trainer.encoder(), trainer.head(), source, cache);
  const auto b = evaluate(loaded.encoder, loaded.head, source, cache);
  CHECK(a.accuracy == b.accuracy);
  std::remove(path.c_str());
}

TEST_CASE("unseal exposes the full labeled target set") {
  const auto cfg = fast_config();
  const auto source = data::load_manifest(eval_corpus().source_manifest);
  const auto target = data::load_manifest(eval_corpus().target_manifest);
  auto split = data::make_episode(source, target, 3, 2, 77);

  CHECK(split.hidden_labels.sealed());
  const auto full = unseal_target_set(split);
  CHECK(!split.hidden_labels.sealed());
  CHECK(full.size() == target.size());
  for (const auto& rec : full) CHECK(rec.label != data::kUnlabeled);
}

TEST_CASE("scenario report carries 12 DA cells, 4 baselines, and references") {
  auto cfg = fast_config();
  cfg.batch_budget = 2;
  cfg.validation_interval = 1;

  std::vector<ScenarioSpec> specs;
  for (int s = 0; s < 2; ++s) {
    ScenarioSpec spec;
    spec.name = "scenario" + std::to_string(s);
    spec.source_manifest =
        s == 0 ? eval_corpus().source_manifest : eval_corpus().target_manifest;
    spec.target_manifest =
        s == 0 ? eval_corpus().target_manifest : eval_corpus().source_manifest;
    spec.k_values = {3};
    spec.repeats = 1;
    specs.push_back(spec);
  }
  const auto report = run_scenarios(specs, cfg);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(!row.baseline.failed);
    CHECK(row.baseline.k == 0);
    REQUIRE(row.cells.size() == 1);
    CHECK(row.cells[0].k == 3);
    CHECK(row.cells[0].per_seed_accuracy.size() == 1);
  }

  const auto json_text = report_to_json(report);
  const auto doc = nlohmann::json::parse(json_text);
  REQUIRE(doc.contains("documentation"));
  CHECK(doc["documentation"]["note"].is_string());
  // All four published scenario rows are present in the reference block.
  CHECK(doc["documentation"]["reference_results"].size() == 4);

  const auto table = report_to_table(report);
  CHECK(table.find("scenario0") != std::string::npos);
  CHECK(table.find("baseline") != std::string::npos);
}

TEST_CASE("seed cells differ and repeated runs are stable") {
  auto cfg = fast_config();
  cfg.batch_budget = 2;
  ScenarioSpec spec;
  spec.name = "s";
  spec.source_manifest = eval_corpus().source_manifest;
  spec.target_manifest = eval_corpus().target_manifest;
  spec.k_values = {3};
  spec.repeats = 2;
  const auto r1 = run_scenarios({spec}, cfg);
  const auto r2 = run_scenarios({spec}, cfg);
  REQUIRE(r1.rows[0].cells[0].seeds.size() == 2);
  CHECK(r1.rows[0].cells[0].seeds[0] != r1.rows[0].cells[0].seeds[1]);
  CHECK(r1.rows[0].cells[0].per_seed_accuracy == r2.rows[0].cells[0].per_seed_accuracy);
}

TEST_CASE("ablation sweep trains per value and picks the best") {
  auto cfg = fast_config();
  cfg.batch_budget = 2;
  const auto source = data::load_manifest(eval_corpus().source_manifest);
  const auto target = data::load_manifest(eval_corpus().target_manifest);
  auto split = data::make_episode(source, target, cfg.k, cfg.num_classes, cfg.seed);

  const auto curve = ablation_sweep("lambda", {0.0, 0.1}, cfg, split);
  REQUIRE(curve.points.size() == 2);
  CHECK(curve.parameter == "lambda");
  double best_acc = -1.0;
  for (const auto& pt : curve.points) best_acc = std::max(best_acc, pt.accuracy);
  bool found = false;
  for (const auto& pt : curve.points) found = found || (pt.value == curve.best_value && pt.accuracy == best_acc);
  CHECK(found);

  const auto csv = ablation_to_csv(curve);
  CHECK(csv.find("lambda,accuracy") != std::string::npos);

  CHECK_THROWS_AS((void)ablation_sweep("dropout", {0.1}, cfg, split), std::invalid_argument);
  CHECK_THROWS_AS((void)ablation_sweep("lambda", {}, cfg, split), std::invalid_argument);
}
