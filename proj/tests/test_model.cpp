#include <doctest.h>

#include <cmath>

#include "danet/model.hpp"
#include "danet/rng.hpp"

using namespace danet;
using namespace danet::model;

namespace {

PrototypicalHead identity_head(double tau) {
  PrototypicalHead head;
  head.tau = tau;
  head.W = Param("head.W", {2, 2});
  head.W.value.data = {1.0, 0.0, 0.0, 1.0};
  return head;
}

}  // namespace

TEST_CASE("hand-computed head example: W=I, f=(3,4), tau=1") {
  const auto head = identity_head(1.0);
  const auto p = head_forward(head, {3.0, 4.0});
  REQUIRE(p.size() == 2);
  // f_hat = (0.6, 0.8); softmax(0.6, 0.8) = (1/(1+e^0.2), ...).
  CHECK(p[0] == doctest::Approx(0.45016600268752209).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(0.54983399731247791).epsilon(1e-10));
  CHECK(std::abs(p[0] - 0.4502) < 1e-4);
  CHECK(std::abs(p[1] - 0.5498) < 1e-4);
}

TEST_CASE("default temperature sharpens the same example") {
  const auto head = identity_head(0.05);
  const auto p = head_forward(head, {3.0, 4.0});
  // Logits (12, 16): p0 = 1/(1+e^4).
  CHECK(p[0] == doctest::Approx(0.017986209962091558).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(0.98201379003790844).epsilon(1e-10));
}

TEST_CASE("head is scale invariant in the feature") {
  auto head = init_head(16, 2, 77, 0.5);
  Rng rng(78);
  for (auto& w : head.W.value.data) w = rng.normal();
  std::vector<double> f(16);
  for (auto& v : f) v = rng.normal();
  const auto base = head_forward(head, f);
  for (const double c : {1e-3, 1.0, 1e3}) {
    auto scaled = f;
    for (auto& v : scaled) v *= c;
    const auto p = head_forward(head, scaled);
    for (std::size_t k = 0; k < p.size(); ++k) {
      CHECK(std::abs(p[k] - base[k]) < 1e-6);
    }
  }
}

TEST_CASE("probabilities form a simplex and survive extreme features") {
  auto head = init_head(8, 4, 5, 0.05);
  Rng rng(6);
  for (auto& w : head.W.value.data) w = rng.normal();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> f(8);
    const double mag = std::pow(10.0, rng.uniform(-6.0, 6.0));
    for (auto& v : f) v = mag * rng.normal();
    const auto p = head_forward(head, f);
    double total = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("head validates input") {
  const auto head = identity_head(1.0);
  CHECK_THROWS_AS((void)head_forward(head, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS((void)head_forward(head, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS((void)init_head(0, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)init_head(4, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)init_head(4, 2, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)init_head(4, 2, 1, -0.5), std::invalid_argument);
}

TEST_CASE("zero feature maps to a well-defined distribution") {
  const auto head = identity_head(1.0);
  const auto p = head_forward(head, {0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("encoder output shape and determinism by seed") {
  DeskEncoder a(3, {16, 32, 64}, 42);
  DeskEncoder b(3, {16, 32, 64}, 42);
  DeskEncoder c(3, {16, 32, 64}, 43);

  Tensor x({3, 64, 64});
  Rng rng(1);
  for (auto& v : x.data) v = rng.uniform();

  const auto fa = a.forward(x);
  const auto fb = b.forward(x);
  const auto fc = c.forward(x);
  REQUIRE(fa.size() == 64);
  CHECK(fa == fb);
  CHECK(fa != fc);

  CHECK_THROWS_AS((void)a.forward(Tensor({1, 64, 64})), std::invalid_argument);
}

TEST_CASE("encoder can consume the minimum canonical sizes") {
  DeskEncoder enc(1, {4, 6, 8}, 3);
  Tensor x({1, 8, 8});
  for (auto& v : x.data) v = 0.5;
  CHECK(enc.forward(x).size() == 8);
}
