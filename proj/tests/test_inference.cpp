#include <random>

#include "doctest.h"
#include "hierpose/error.hpp"
#include "hierpose/inference.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace hierpose;

TEST_CASE("inference matches the naive enumerator") {
  const auto st = testing::run_oracle(150, 2024);
  CHECK(st.instances == 150);
  CHECK(st.map_mismatch == 0);
  CHECK(st.aug_mismatch == 0);
  CHECK(st.max_energy_diff <= 1e-9);
  CHECK(st.foreground > 0);
}

TEST_CASE("enumeration counts") {
  CHECK(enumerate_assignments(testing::small_config(1, 8, 2, 2)).size() == 1 + 8);
  CHECK(enumerate_assignments(testing::small_config(2, 8, 2, 2)).size() == 1 + 8 * 2);
  CHECK(enumerate_assignments(testing::small_config(3, 8, 2, 2)).size() == 1 + 8 * 4);
  const auto cfg = testing::small_config(3, 4, 3, 2);
  const auto all = enumerate_assignments(cfg);
  CHECK(all.front().object == false);
  for (const auto& a : all) CHECK_FALSE(validate_assignment(a, cfg));
}

TEST_CASE("zero weights infer background") {
  std::mt19937_64 gen(1);
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const WeightLayout L(cfg, {6, 2});
  const auto b = testing::random_bundle(cfg, {6, 2}, gen);
  const auto d = infer(b, WeightVector(L), cfg);
  CHECK_FALSE(d.assignment.object);
  CHECK(d.energy == 0.0);
  CHECK_FALSE(d.viewpoint());
}

TEST_CASE("inference attaches the argmax viewpoints") {
  std::mt19937_64 gen(5);
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const WeightLayout L(cfg, {6, 2});
  const auto b = testing::random_bundle(cfg, {6, 2}, gen);
  WeightVector w(L);
  w.values[L.det()] = b.features.det > 0 ? 1.0 : -1.0;
  w.values[L.cnt(3, 3)] = 50.0;
  const auto d = infer(b, w, cfg);
  REQUIRE(d.assignment.object);
  CHECK(d.assignment.f == 3);
  CHECK(d.assignment.s[0] == 1);
  REQUIRE(d.assignment.cv3);
  CHECK(d.assignment.cv3->azimuth == b.cnt(3, d.assignment.v[0], 3).best.azimuth);
  REQUIRE(d.viewpoint());
  CHECK(d.viewpoint()->azimuth == d.assignment.cv3->azimuth);
  CHECK(d.energy == doctest::Approx(d.breakdown.sum()));
}

TEST_CASE("one-layer detections report the bin center") {
  std::mt19937_64 gen(6);
  const auto cfg = testing::small_config(1, 8, 2, 2);
  const WeightLayout L(cfg, {6, 2});
  const auto b = testing::random_bundle(cfg, {6, 2}, gen);
  WeightVector w(L);
  w.values[L.glb(1, 5)] = 100.0;
  const auto d = infer(b, w, cfg);
  REQUIRE(d.assignment.object);
  CHECK(d.assignment.v[0] == 5);
  REQUIRE(d.viewpoint());
  CHECK(d.viewpoint()->azimuth == bin_center(5, 8));
}

TEST_CASE("layer mismatch and bad truth throw") {
  std::mt19937_64 gen(7);
  const auto cfg3 = testing::small_config(3, 4, 2, 2);
  const auto cfg2 = testing::small_config(2, 4, 2, 2);
  const WeightLayout L(cfg2, {6, 2});
  const auto b = testing::random_bundle(cfg3, {6, 2}, gen);
  CHECK_THROWS_AS(infer(b, WeightVector(L), cfg3), Error);
  const WeightLayout L3(cfg3, {6, 2});
  auto bad = LabelAssignment::foreground(3, 0, 0, 3);
  CHECK_THROWS_AS(loss_augmented_infer(b, bad, WeightVector(L3), cfg3, {}), Error);
}

TEST_CASE("task loss fixtures") {
  const auto cfg = testing::small_config(3, 8, 2, 2);
  LossSpec L;
  L.subcat_counts = {3, 6};
  const auto t = LabelAssignment::foreground(3, 2, 1, 2);
  CHECK(task_loss(t, t, cfg, L) == 0.0);
  CHECK(task_loss(t, LabelAssignment::foreground(3, 3, 1, 2), cfg, L) == doctest::Approx(0.1));
  CHECK(task_loss(t, LabelAssignment::foreground(3, 2, 1, 3), cfg, L) == doctest::Approx(0.1));
  CHECK(task_loss(t, LabelAssignment::foreground(3, 2, 0, 0), cfg, L) == doctest::Approx(0.05 + 0.1));
  CHECK(task_loss(t, LabelAssignment::background(), cfg, L) == doctest::Approx(0.1 + 0.05 + 0.1));
  CHECK(task_loss(LabelAssignment::background(), LabelAssignment::foreground(3, 0, 0, 0), cfg, L) ==
        doctest::Approx(0.1 + 0.1 + 0.1));
  CHECK(task_loss(LabelAssignment::background(), LabelAssignment::background(), cfg, L) == 0.0);
  const auto one = testing::small_config(1, 8, 2, 2);
  CHECK(task_loss(LabelAssignment::foreground(1, 1), LabelAssignment::background(), one, L) ==
        doctest::Approx(0.1));
  LossSpec neg;
  neg.delta1 = -1;
  CHECK_THROWS_AS(neg.validate(), Error);
}

TEST_CASE("greedy nms fixtures") {
  const std::vector<Rect> boxes{{0, 0, 10, 10}, {1, 0, 10, 10}, {20, 20, 10, 10}, {5, 0, 10, 10}, {21, 20, 10, 10}};
  const std::vector<double> scores{0.5, 0.9, 0.3, 0.8, 0.4};
  // IoU(1,0)=0.818, IoU(1,3)=0.429, IoU(4,2)=0.818
  CHECK(greedy_nms(boxes, scores, 0.5) == std::vector<size_t>{1, 3, 4});
  CHECK(greedy_nms(boxes, scores, 0.4) == std::vector<size_t>{1, 4});
  CHECK(greedy_nms(boxes, scores, 0.9) == std::vector<size_t>{1, 3, 0, 4, 2});
  // equal scores keep input order
  const std::vector<double> flat(5, 1.0);
  CHECK(greedy_nms(boxes, flat, 0.5) == std::vector<size_t>{0, 2, 3});
  CHECK(greedy_nms({}, {}, 0.5).empty());
  CHECK_THROWS_AS(greedy_nms(boxes, std::vector<double>{1.0}, 0.5), Error);
}
