#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "danet/datasets.hpp"
#include "danet/evaluation.hpp"
#include "danet/training.hpp"

using namespace danet;
using namespace danet::training;

namespace {

// Shared tiny synthetic corpus for loop-level tests.
const data::SynthResult& tiny_corpus() {
  static const data::SynthResult result = [] {
    data::SynthConfig cfg;
    cfg.per_class_per_domain = 12;
    cfg.side = 32;
    cfg.out_dir = "/tmp/danet_test_traincorpus";
    return data::synth_domains(cfg, 2024);
  }();
  return result;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.batch_budget = 12;
  cfg.validation_interval = 4;
  cfg.encoder_widths = {4, 6, 8};
  cfg.seed = 5;
  return cfg;
}

data::EpisodeSplit tiny_split(const TrainConfig& cfg) {
  const auto source = data::load_manifest(tiny_corpus().source_manifest);
  const auto target = data::load_manifest(tiny_corpus().target_manifest);
  return data::make_episode(source, target, cfg.k, cfg.num_classes, cfg.seed);
}

}  // namespace

TEST_CASE("inverse decay schedule matches an independent evaluation") {
  for (const long b : {0L, 1L, 100L, 400L}) {
    const double expected = 1e-4 * std::exp(-0.75 * std::log1p(0.001 * b));
    CHECK(std::abs(lr_schedule(1e-4, 0.001, 0.75, b) - expected) < 1e-12);
  }
  CHECK(lr_schedule(1e-4, 0.001, 0.75, 0) == doctest::Approx(1e-4).epsilon(1e-15));
  // High-precision reference for the default config at the budget end.
  CHECK(std::abs(lr_schedule(1e-4, 0.001, 0.75, 400) - 7.7696950424091227e-5) < 1e-15);
  CHECK(std::abs(lr_schedule(1e-4, 0.001, 0.75, 400) - 7.770e-5) < 5e-9);
  // Monotone decay.
  double prev = lr_schedule(1e-4, 0.001, 0.75, 0);
  for (long b = 1; b <= 1000; b += 37) {
    const double cur = lr_schedule(1e-4, 0.001, 0.75, b);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("adam reduces a quadratic") {
  Param p("x", {2});
  p.value.data = {1.0, -2.0};
  Adam adam({&p});
  for (int i = 0; i < 2000; ++i) {
    p.grad.data = {2.0 * p.value.data[0], 2.0 * p.value.data[1]};
    adam.step(0.01);
  }
  CHECK(std::abs(p.value.data[0]) < 1e-3);
  CHECK(std::abs(p.value.data[1]) < 1e-3);
  CHECK(adam.step_count() == 2000);
}

TEST_CASE("checkpoint round trip is exact") {
  Checkpoint ckpt;
  ckpt.metadata["batch_index"] = "37";
  ckpt.metadata["val_accuracy"] = "0.875";
  ckpt.metadata["config.lambda"] = "0.10000000000000001";
  Tensor t({2, 3});
  t.data = {0.1, -0.2, 0.3, 1e-17, -5.5, 7.0};
  ckpt.tensors["head.W"] = t;

  const std::string path = "/tmp/danet_test_ckpt.bin";
  save_checkpoint(ckpt, path);
  const auto back = load_checkpoint(path);
  CHECK(back.metadata == ckpt.metadata);
  REQUIRE(back.tensors.count("head.W") == 1);
  CHECK(back.tensors.at("head.W").shape == t.shape);
  CHECK(back.tensors.at("head.W").data == t.data);
  CHECK(back.batch_index() == 37);
  CHECK(back.val_accuracy() == doctest::Approx(0.875));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects truncation and bad magic") {
  Checkpoint ckpt;
  ckpt.metadata["batch_index"] = "1";
  ckpt.tensors["t"] = Tensor({4});
  const std::string path = "/tmp/danet_test_ckpt2.bin";
  save_checkpoint(ckpt, path);

  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size - 5);
  CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);

  std::ofstream(path, std::ios::binary) << "NOTADANETFILE";
  CHECK_THROWS_AS((void)load_checkpoint(path), std::runtime_error);
  CHECK_THROWS_AS((void)load_checkpoint("/tmp/danet_no_such_ckpt.bin"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("train config round trips through its string map") {
  TrainConfig cfg = tiny_config();
  cfg.lambda = 0.30000000000000004;
  cfg.unlabeled_per_batch = 7;
  const auto back = TrainConfig::from_map(cfg.to_map());
  CHECK(back.lambda == cfg.lambda);
  CHECK(back.tau == cfg.tau);
  CHECK(back.encoder_widths == cfg.encoder_widths);
  CHECK(back.unlabeled_per_batch == 7);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 13;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig();
  cfg.lambda = -0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig();
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig();
  cfg.k = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("one step reduces the objectives at a small learning rate") {
  auto cfg = tiny_config();
  cfg.lr0 = 1e-6;
  auto split = tiny_split(cfg);
  Trainer trainer(cfg, split);

  // Average over several batches: each Adam step at lr = 1e-6 should not
  // blow up the losses, and the first step must reduce its own batch loss.
  data::BalancedBatchSampler probe(split, cfg.batch_size, cfg.effective_unlabeled(),
                                   Rng(99));
  const auto batch = probe.next();
  const auto before = trainer.step(batch);
  // Re-evaluate the same batch after the parameter update.
  const auto after = trainer.step(batch);
  CHECK(after.psi_h <= before.psi_h + 1e-6);
}

TEST_CASE("identical seeds give bitwise identical checkpoints") {
  const auto cfg = tiny_config();
  auto split1 = tiny_split(cfg);
  auto split2 = tiny_split(cfg);

  Trainer a(cfg, split1), b(cfg, split2);
  a.run();
  b.run();

  const std::string pa = "/tmp/danet_test_det_a.bin", pb = "/tmp/danet_test_det_b.bin";
  save_checkpoint(a.snapshot(), pa);
  save_checkpoint(b.snapshot(), pb);

  std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  REQUIRE(!bytes_a.empty());
  CHECK(bytes_a == bytes_b);
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

TEST_CASE("interrupt and resume matches the uninterrupted run exactly") {
  const auto cfg = tiny_config();
  auto split1 = tiny_split(cfg);
  auto split2 = tiny_split(cfg);

  Trainer full(cfg, split1);
  full.run();

  const std::string latest = "/tmp/danet_test_latest.bin";
  Trainer part(cfg, split2);
  part.run(/*stop_after=*/6, std::nullopt, latest);
  CHECK(part.batch_index() == 6);

  auto split3 = tiny_split(cfg);
  Trainer resumed(cfg, split3);
  resumed.run(std::nullopt, latest);
  CHECK(resumed.batch_index() == cfg.batch_budget);

  const auto& fp = full.encoder().params();
  const auto& rp = resumed.encoder().params();
  REQUIRE(fp.size() == rp.size());
  for (std::size_t i = 0; i < fp.size(); ++i) {
    CHECK(fp[i].value.data == rp[i].value.data);
  }
  CHECK(full.head().W.value.data == resumed.head().W.value.data);
  std::remove(latest.c_str());
}

TEST_CASE("train_loop writes one NDJSON line per batch") {
  const auto cfg = tiny_config();
  auto split = tiny_split(cfg);
  const std::string log_path = "/tmp/danet_test_log.ndjson";
  const auto result = train_loop(cfg, split, log_path);
  CHECK(static_cast<int>(result.log.size()) == cfg.batch_budget);

  std::ifstream in(log_path);
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.find("\"b\":") != std::string::npos);
    CHECK(line.find("\"lr\":") != std::string::npos);
  }
  CHECK(lines == cfg.batch_budget);
  CHECK(result.best.metadata.count("config.lambda") == 1);
  std::remove(log_path.c_str());
}
