#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "danet/datasets.hpp"
#include "danet/image_io.hpp"

using namespace danet;
using namespace danet::data;

namespace {

std::vector<SampleRecord> toy_records(int per_class, Domain domain,
                                      const std::string& prefix) {
  std::vector<SampleRecord> recs;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < per_class; ++i) {
      recs.push_back({prefix + "/" + std::to_string(c) + "_" + std::to_string(i) + ".png",
                      c, domain});
    }
  }
  return recs;
}

std::string write_tmp(const std::string& contents) {
  const std::string path = "/tmp/danet_test_manifest.csv";
  std::ofstream(path) << contents;
  return path;
}

}  // namespace

TEST_CASE("manifest round trip with named and bare labels") {
  const auto path = write_tmp(
      "a.png,covid,source\n"
      "b.png,non-covid,target\n"
      "c.png,unlabeled,target\n"
      "d.png,1,source\n");
  const auto recs = load_manifest(path);
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].label == 0);
  CHECK(recs[1].label == 1);
  CHECK(recs[1].domain == Domain::kTarget);
  CHECK(recs[2].label == kUnlabeled);
  CHECK(recs[3].label == 1);

  save_manifest(recs, path);
  const auto again = load_manifest(path);
  REQUIRE(again.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(again[i].path == recs[i].path);
    CHECK(again[i].label == recs[i].label);
    CHECK(again[i].domain == recs[i].domain);
  }
  std::remove(path.c_str());
}

TEST_CASE("manifest errors carry line numbers and reject duplicates") {
  using doctest::Contains;
  CHECK_THROWS_WITH_AS((void)load_manifest(write_tmp("a.png,covid\n")), Contains("line 1"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS((void)load_manifest(write_tmp("a.png,covid,source\nb.png,plague,target\n")),
                       Contains("line 2"), std::runtime_error);
  CHECK_THROWS_WITH_AS(
      (void)load_manifest(write_tmp("a.png,covid,source\na.png,covid,source\n")),
      Contains("duplicate"), std::runtime_error);
  CHECK_THROWS_AS((void)load_manifest("/tmp/danet_no_such_manifest.csv"), std::runtime_error);
}

TEST_CASE("manifest tolerates extra metadata columns") {
  const auto path = write_tmp("a.png,covid,source,orig=300x400;pad=0/0\n");
  const auto recs = load_manifest(path);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].label == 0);
  std::remove(path.c_str());
}

TEST_CASE("episodes are deterministic, disjoint, and per-class exact") {
  const auto source = toy_records(20, Domain::kSource, "src");
  const auto target = toy_records(10, Domain::kTarget, "tgt");

  auto ep1 = make_episode(source, target, 3, 2, 42);
  auto ep2 = make_episode(source, target, 3, 2, 42);
  auto ep3 = make_episode(source, target, 3, 2, 43);

  REQUIRE(ep1.target_labeled.size() == 6);
  REQUIRE(ep1.target_validation.size() == 6);
  REQUIRE(ep1.target_unlabeled.size() == 8);
  CHECK(ep1.source_labeled.size() == source.size());

  for (std::size_t i = 0; i < ep1.target_labeled.size(); ++i) {
    CHECK(ep1.target_labeled[i].path == ep2.target_labeled[i].path);
  }
  bool differs = false;
  for (std::size_t i = 0; i < ep1.target_labeled.size(); ++i) {
    differs = differs || ep1.target_labeled[i].path != ep3.target_labeled[i].path;
  }
  CHECK(differs);

  // Disjoint pools covering the target set.
  std::set<std::string> seen;
  for (const auto* pool : {&ep1.target_labeled, &ep1.target_validation, &ep1.target_unlabeled}) {
    for (const auto& rec : *pool) {
      CHECK(seen.insert(rec.path).second);
    }
  }
  CHECK(seen.size() == target.size());

  // K per class in the shot and validation pools.
  for (const auto* pool : {&ep1.target_labeled, &ep1.target_validation}) {
    int per_class[2] = {0, 0};
    for (const auto& rec : *pool) ++per_class[rec.label];
    CHECK(per_class[0] == 3);
    CHECK(per_class[1] == 3);
  }
  // Unlabeled pool records carry no labels.
  for (const auto& rec : ep1.target_unlabeled) CHECK(rec.label == kUnlabeled);
}

TEST_CASE("episode construction names the deficient class") {
  const auto source = toy_records(5, Domain::kSource, "src");
  std::vector<SampleRecord> target;
  for (int i = 0; i < 10; ++i) target.push_back({"t" + std::to_string(i) + ".png", 0, Domain::kTarget});
  target.push_back({"lone.png", 1, Domain::kTarget});
  CHECK_THROWS_WITH_AS((void)make_episode(source, target, 3, 2, 1),
                       doctest::Contains("non-covid"), std::runtime_error);
}

TEST_CASE("hidden labels are sealed until unsealed") {
  const auto source = toy_records(5, Domain::kSource, "src");
  const auto target = toy_records(8, Domain::kTarget, "tgt");
  auto ep = make_episode(source, target, 2, 2, 7);
  REQUIRE(!ep.target_unlabeled.empty());
  CHECK(ep.hidden_labels.sealed());
  CHECK_THROWS_AS((void)ep.hidden_labels.label_of(ep.target_unlabeled[0].path),
                  std::logic_error);
  ep.hidden_labels.unseal();
  const int y = ep.hidden_labels.label_of(ep.target_unlabeled[0].path);
  CHECK((y == 0 || y == 1));
}

TEST_CASE("balanced sampler emits B/2 + B/2 with full shot coverage") {
  const auto source = toy_records(30, Domain::kSource, "src");
  const auto target = toy_records(12, Domain::kTarget, "tgt");
  auto ep = make_episode(source, target, 3, 2, 9);

  BalancedBatchSampler sampler(ep, 12, 12, Rng(101));
  for (int b = 0; b < 100; ++b) {
    const auto batch = sampler.next();
    REQUIRE(batch.labeled_source.size() == 6);
    REQUIRE(batch.labeled_target.size() == 6);
    REQUIRE(batch.unlabeled_target.size() == 12);
    // All six target shots in every batch (K=3, C=2).
    std::set<std::string> shots;
    for (const auto& s : batch.labeled_target) {
      shots.insert(s.record.path);
      CHECK(s.augment);
    }
    CHECK(shots.size() == 6);
    for (const auto& s : batch.labeled_source) CHECK(!s.augment);
  }
}

TEST_CASE("sampler cycles the source pool without replacement") {
  const auto source = toy_records(6, Domain::kSource, "src");  // 12 records
  const auto target = toy_records(8, Domain::kTarget, "tgt");
  auto ep = make_episode(source, target, 2, 2, 10);

  BalancedBatchSampler sampler(ep, 8, 0, Rng(55));
  std::map<std::string, int> counts;
  for (int b = 0; b < 12; ++b) {  // 12 batches x 4 source samples = 4 full passes
    for (const auto& s : sampler.next().labeled_source) ++counts[s.record.path];
  }
  REQUIRE(counts.size() == 12);
  for (const auto& [path, n] : counts) CHECK(n == 4);
}

TEST_CASE("sampler rejects invalid batch shapes") {
  const auto source = toy_records(4, Domain::kSource, "src");
  const auto target = toy_records(8, Domain::kTarget, "tgt");
  auto ep = make_episode(source, target, 2, 2, 3);
  CHECK_THROWS_AS(BalancedBatchSampler(ep, 7, 0, Rng(1)), std::invalid_argument);
  CHECK_THROWS_AS(BalancedBatchSampler(ep, 0, 0, Rng(1)), std::invalid_argument);
  CHECK_THROWS_AS(BalancedBatchSampler(ep, 32, 0, Rng(1)), std::invalid_argument);
  CHECK_THROWS_AS(BalancedBatchSampler(ep, 8, -1, Rng(1)), std::invalid_argument);
}

TEST_CASE("synthetic generator writes both domains with a measurable shift") {
  SynthConfig cfg;
  cfg.per_class_per_domain = 6;
  cfg.side = 32;
  cfg.out_dir = "/tmp/danet_test_synth";
  const auto result = synth_domains(cfg, 123);

  const auto source = load_manifest(result.source_manifest);
  const auto target = load_manifest(result.target_manifest);
  REQUIRE(source.size() == 12);
  REQUIRE(target.size() == 12);
  int per_class[2] = {0, 0};
  for (const auto& rec : source) {
    REQUIRE((rec.label == 0 || rec.label == 1));
    ++per_class[rec.label];
    CHECK(rec.domain == Domain::kSource);
  }
  CHECK(per_class[0] == 6);
  CHECK(per_class[1] == 6);
  for (const auto& rec : target) CHECK(rec.domain == Domain::kTarget);

  // Regenerating with the same seed is deterministic.
  const auto again = synth_domains(cfg, 123);
  const auto source2 = load_manifest(again.source_manifest);
  for (std::size_t i = 0; i < source.size(); ++i) CHECK(source[i].path == source2[i].path);

  // The domain shift is visible as a mean intensity offset near cfg.shift.
  auto corpus_mean = [](const std::vector<SampleRecord>& recs) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& rec : recs) {
      const auto img = imaging::read_canonical_png(rec.path, 1);
      for (double v : img.pixels) total += v;
      n += img.pixels.size();
    }
    return total / static_cast<double>(n);
  };
  const double delta = corpus_mean(target) - corpus_mean(source);
  CHECK(delta == doctest::Approx(cfg.shift).epsilon(0.15));
}
