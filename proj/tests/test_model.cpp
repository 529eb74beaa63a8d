#include <cmath>
#include <random>

#include "doctest.h"
#include "hierpose/error.hpp"
#include "hierpose/inference.hpp"
#include "hierpose/model.hpp"
#include "support.hpp"

using namespace hierpose;

TEST_CASE("linearity: <w, psi> equals the energy") {
  std::mt19937_64 gen(7);
  double worst = 0.0;
  int n = 0;
  for (int layers = 1; layers <= 3; ++layers) {
    const auto cfg = testing::small_config(layers, 4, 2, 2);
    const FeatureDims dims{12, 5};
    const WeightLayout layout(cfg, dims);
    const auto cands = enumerate_assignments(cfg);
    for (int t = 0; t < 40; ++t) {
      const auto bundle = testing::random_bundle(cfg, dims, gen);
      const auto w = testing::random_weights(layout, gen, 1.0, true);
      const auto& y = cands[gen() % cands.size()];
      const auto psi = joint_feature_map(layout, bundle.features, y, bundle.cnt_values(y));
      const double e = total_energy(bundle, y, w).total;
      worst = std::max(worst, std::fabs(dot(w.values, psi) - e));
      ++n;
    }
  }
  CHECK(n >= 100);
  CHECK(worst <= 1e-9);
}

TEST_CASE("background has zero feature map and energy") {
  std::mt19937_64 gen(3);
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const WeightLayout layout(cfg, {6, 3});
  const auto b = testing::random_bundle(cfg, {6, 3}, gen);
  const auto w = testing::random_weights(layout, gen);
  const auto psi = joint_feature_map(layout, b.features, LabelAssignment::background(), {});
  for (double v : psi) CHECK(v == 0.0);
  CHECK(total_energy(b, LabelAssignment::background(), w).total == 0.0);
}

TEST_CASE("weight layout sizes") {
  const auto cfg = testing::small_config(3, 8, 2, 2);
  const WeightLayout L(cfg, {576, 128});
  // det + 3 layers of (glb, loc) + cnt2 + cnt3 + vw(2) + sb(1)
  const size_t expect = 1 + 8 * 704 + 8 * 2 * 704 + 2 + 8 * 4 * 704 + 4 + 2 + 1;
  CHECK(L.size() == expect);
  CHECK(L.block("vw").frozen);
  CHECK(L.block("sb").frozen);
  CHECK_FALSE(L.block("glb3").frozen);
  const auto mask = L.learnable_mask();
  double frozen = 0;
  for (double v : mask) frozen += v == 0.0;
  CHECK(frozen == 3);
  CHECK_THROWS_AS(L.block("nope"), Error);

  const auto one = testing::small_config(1, 8, 2, 2);
  const WeightLayout L1(one, {576, 128});
  CHECK(L1.size() == 1 + 8 * 704);
  CHECK_FALSE(L1.has_block("cnt2"));
  CHECK(L1.config_hash() != L.config_hash());
}

TEST_CASE("template slots") {
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const WeightLayout L(cfg, {4, 2});
  const auto a = LabelAssignment::foreground(3, 3, 1, 2);
  CHECK(L.slot(1, a) == 3);
  CHECK(L.slot(2, a) == 3 * 2 + 1);
  CHECK(L.slot(3, a) == 3 * 4 + 2);
}

TEST_CASE("assignment validation") {
  const auto cfg = testing::small_config(3, 4, 2, 2);
  CHECK_FALSE(validate_assignment(LabelAssignment::background(), cfg));
  CHECK_FALSE(validate_assignment(LabelAssignment::foreground(3, 1, 1, 3), cfg));
  CHECK(validate_assignment(LabelAssignment::foreground(3, 1, 0, 3), cfg) == "finer membership");
  CHECK(validate_assignment(LabelAssignment::foreground(3, 4, 0, 0), cfg) == "viewpoint range");
  auto bad = LabelAssignment::foreground(3, 1, 0, 0);
  bad.v[2] = 2;
  CHECK(validate_assignment(bad, cfg) == "viewpoint consistency");
  bad = LabelAssignment::foreground(3, 1, 0, 0);
  bad.s[1] = 1;
  CHECK(validate_assignment(bad, cfg) == "sub-category consistency");
  auto bg = LabelAssignment::background();
  bg.v[0] = 0;
  CHECK(validate_assignment(bg, cfg) == "background purity");
  const auto two = testing::small_config(2, 4, 2, 2);
  CHECK(validate_assignment(LabelAssignment::foreground(3, 1, 0, 0), two) == "layer truncation");
}

TEST_CASE("config validation") {
  auto cfg = testing::small_config(3, 4, 2, 2);
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.finer_of(1) == std::vector<int>{2, 3});
  CHECK(cfg.finer_index("s1f0") == 2);
  auto c = cfg;
  c.layers = 4;
  CHECK_THROWS_AS(c.validate(), Error);
  c = cfg;
  c.azimuth_bins = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = cfg;
  c.svm_c = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = cfg;
  c.finer_subcat[0] = 5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = cfg;
  c.finer_subcat = {0, 0, 0, 0};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("weights serialize bit exactly") {
  std::mt19937_64 gen(11);
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const WeightLayout L(cfg, {10, 3});
  auto w = testing::random_weights(L, gen, 1e-3);
  w.values[0] = 1.0 / 3.0;
  w.values[1] = -0.0;
  w.values[2] = 5e-324;
  const auto back = WeightVector::deserialize(w.serialize());
  CHECK(back == w);
  CHECK(std::signbit(back.values[1]));

  testing::TempDir dir("weights");
  w.save(dir.path / "w.txt");
  CHECK(WeightVector::load(dir.path / "w.txt") == w);

  CHECK_THROWS_AS(WeightVector::deserialize("garbage"), Error);
  auto text = w.serialize();
  CHECK_THROWS_AS(WeightVector::deserialize(text.substr(0, text.size() / 2)), Error);
  CHECK_THROWS_AS(WeightVector::load(dir.path / "missing.txt"), Error);
}

TEST_CASE("feature dimension mismatch throws") {
  std::mt19937_64 gen(1);
  const auto cfg = testing::small_config(2, 4, 2, 2);
  const WeightLayout L(cfg, {10, 3});
  const auto b = testing::random_bundle(cfg, {9, 3}, gen);
  const auto y = LabelAssignment::foreground(2, 0, 0);
  CHECK_THROWS_AS(joint_feature_map(L, b.features, y, {}), Error);
  CHECK_THROWS_AS(total_energy(b, y, WeightVector(L)), Error);
}

TEST_CASE("bundle cnt lookups") {
  std::mt19937_64 gen(2);
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const auto b = testing::random_bundle(cfg, {4, 2}, gen);
  auto a = LabelAssignment::foreground(3, 2, 1, 3);
  const auto c = b.cnt_values(a);
  CHECK(c.layer2 == b.cnt2[2 * 2 + 1].value);
  CHECK(c.layer3 == b.cnt3[2 * 4 + 3].value);
  b.attach_viewpoints(a);
  REQUIRE(a.cv3);
  CHECK(a.cv3->azimuth == b.cnt3[2 * 4 + 3].best.azimuth);
  CHECK_THROWS_AS(b.cnt(1, 0, 0), Error);
  CHECK_THROWS_AS(b.cnt(3, 4, 0), Error);
}

TEST_CASE("rng is a pure function of seed, stream and counter") {
  CounterRng a(5, 9), b(5, 9), c(5, 10);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(a.next_u64() != c.next_u64());
  CounterRng n(1, 1);
  double s = 0, s2 = 0;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    const double v = n.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(std::fabs(s / N) < 0.03);
  CHECK(std::fabs(s2 / N - 1.0) < 0.05);
}
