#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hierpose/error.hpp"
#include "hierpose/eval.hpp"
#include "support.hpp"

using namespace hierpose;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Detection det(const std::string& img, Rect r, double energy, int v, int s, int f, double az) {
  Detection d;
  d.image_id = img;
  d.region = r;
  d.energy = energy;
  d.azimuth_bins = 8;
  d.assignment = LabelAssignment::foreground(3, v, s, f);
  d.assignment.cv3 = ContinuousViewpoint{az, 0.3, 2.5, {}};
  return d;
}

GroundTruthObject gt(const std::string& img, Rect r, double az, int s, int f) {
  return {img, r, ContinuousViewpoint{az, 0.3, 2.5, {}}, s, f};
}

ContinuousViewpoint vp(double az_deg, double el_deg, double d) { return {az_deg * kDeg, el_deg * kDeg, d, {}}; }

}  // namespace

TEST_CASE("average precision hand fixture") {
  const std::vector<double> rec{0.5, 0.5, 1.0}, pre{1.0, 0.5, 2.0 / 3.0};
  CHECK(average_precision(rec, pre) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-15));
  CHECK(average_precision(std::vector<double>{}, std::vector<double>{}) == 0.0);
  const std::vector<double> perfect_r{0.25, 0.5, 0.75, 1.0}, perfect_p(4, 1.0);
  CHECK(average_precision(perfect_r, perfect_p) == 1.0);
  CHECK_THROWS_AS(average_precision(rec, std::vector<double>{1.0}), Error);
}

TEST_CASE("ap with duplicates and misses") {
  const std::vector<GroundTruthObject> truths{gt("a", {0, 0, 20, 20}, 0.0, 0, 0), gt("a", {50, 50, 20, 20}, 0.0, 0, 0),
                                              gt("b", {0, 0, 20, 20}, 0.0, 1, 2)};
  const std::vector<Detection> dets{det("a", {1, 1, 20, 20}, 2.0, 0, 0, 0, 0.0),    // duplicate, lower score
                                    det("a", {0, 0, 20, 20}, 3.0, 0, 0, 0, 0.0),    // tp
                                    det("a", {51, 50, 20, 20}, 1.0, 0, 0, 0, 0.0),  // tp
                                    det("c", {0, 0, 20, 20}, 0.5, 0, 0, 0, 0.0)};   // unknown image
  const auto m = match_detections(dets, truths, 0.5);
  CHECK(m == std::vector<int>{-1, 0, 1, -1});
  const auto p = evaluate_ap(dets, truths, MatchCriterion::bbox());
  CHECK(p.recall == std::vector<double>{1.0 / 3, 1.0 / 3, 2.0 / 3, 2.0 / 3});
  CHECK(p.precision[2] == doctest::Approx(2.0 / 3));
  REQUIRE(p.ap);
  CHECK(*p.ap == doctest::Approx(1.0 / 3 + 1.0 / 3 * 2.0 / 3).epsilon(1e-15));
  CHECK(p.true_positives == 2);
  CHECK(p.false_positives == 2);
  CHECK_FALSE(evaluate_ap(dets, std::vector<GroundTruthObject>{}, MatchCriterion::bbox()).ap);
}

TEST_CASE("a detection does not fall back to its second best truth") {
  const std::vector<GroundTruthObject> truths{gt("a", {0, 0, 20, 20}, 0.0, 0, 0), gt("a", {4, 0, 20, 20}, 0.0, 0, 0)};
  const std::vector<Detection> dets{det("a", {0, 0, 20, 20}, 2.0, 0, 0, 0, 0.0), det("a", {1, 0, 20, 20}, 1.0, 0, 0, 0, 0.0)};
  // second detection overlaps truth 0 best (0.905) and truth 1 less (0.73)
  CHECK(match_detections(dets, truths, 0.5) == std::vector<int>{0, -1});
  CHECK(match_detections(dets, truths, 0.95) == std::vector<int>{0, -1});
}

TEST_CASE("label criteria") {
  const auto t = gt("a", {0, 0, 20, 20}, 90 * kDeg, 1, 2);
  const auto good = det("a", {0, 0, 20, 20}, 1.0, 2, 1, 2, 95 * kDeg);
  CHECK(labels_correct(good, t, MatchCriterion::all(8)));
  const auto wrong_vp = det("a", {0, 0, 20, 20}, 1.0, 2, 1, 2, 125 * kDeg);
  CHECK_FALSE(labels_correct(wrong_vp, t, MatchCriterion::azimuth(8)));
  CHECK(labels_correct(wrong_vp, t, MatchCriterion::azimuth(4)));
  CHECK(labels_correct(wrong_vp, t, MatchCriterion::subcategory()));
  const auto wrong_f = det("a", {0, 0, 20, 20}, 1.0, 2, 1, 3, 95 * kDeg);
  CHECK(labels_correct(wrong_f, t, MatchCriterion::subcat_viewpoint(8)));
  CHECK_FALSE(labels_correct(wrong_f, t, MatchCriterion::all(8)));
  Detection bg;
  CHECK_FALSE(labels_correct(bg, t, MatchCriterion::bbox()));
  MatchCriterion bad = MatchCriterion::azimuth(0);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("pose rmse hand fixtures") {
  const std::vector<std::pair<ContinuousViewpoint, ContinuousViewpoint>> pairs{
      {vp(350, 20, 3.0), vp(10, 10, 2.0)},
      {vp(0, 30, 2.5), vp(90, 30, 3.0)},
  };
  const auto r = pose_rmse(pairs);
  CHECK(r.azimuth_deg == doctest::Approx(std::sqrt((400.0 + 8100.0) / 2)).epsilon(1e-12));
  CHECK(r.elevation_deg == doctest::Approx(std::sqrt(50.0)).epsilon(1e-12));
  CHECK(r.distance == doctest::Approx(std::sqrt(0.625)).epsilon(1e-15));
  const std::vector<std::pair<ContinuousViewpoint, ContinuousViewpoint>> exact{{vp(180, 10, 2), vp(180, 10, 2)}};
  CHECK(pose_rmse(exact).azimuth_deg == 0.0);
  const std::vector<std::pair<ContinuousViewpoint, ContinuousViewpoint>> opposite{{vp(0, 0, 2), vp(180, 0, 2)},
                                                                                  {vp(270, 0, 2), vp(90, 0, 2)}};
  CHECK(pose_rmse(opposite).azimuth_deg == doctest::Approx(180.0).epsilon(1e-12));
  CHECK_THROWS_AS(pose_rmse({}), Error);
}

TEST_CASE("nested criteria give ordered AP") {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<GroundTruthObject> truths;
    std::vector<Detection> dets;
    for (int i = 0; i < 20; ++i) {
      const std::string img = "im" + std::to_string(i);
      const int s = int(gen() % 2), f = 2 * s + int(gen() % 2);
      const double az = u(gen) * 2 * std::numbers::pi;
      truths.push_back(gt(img, {10, 10, 40, 40}, az, s, f));
      for (int k = 0; k < 2; ++k) {
        const int ps = u(gen) < 0.7 ? s : 1 - s;
        const int pf = 2 * ps + int(gen() % 2);
        const double paz = az + (u(gen) - 0.5) * 2.0;
        dets.push_back(det(img, {10 + int(gen() % 12), 10, 40, 40}, u(gen), azimuth_bin(paz, 8), ps, pf, paz));
      }
    }
    const auto r = evaluate(dets, truths, 8, 2);
    const double bbox = *r.column("Bounding Box").result.ap;
    const double all = *r.column("All").result.ap;
    const double svp = *r.column("Sub-category & Viewpoint").result.ap;
    const double sub = *r.column("Sub-category").result.ap;
    const double v = *r.column("Viewpoint").result.ap;
    CHECK(v >= svp);
    CHECK(svp >= all);
    CHECK(sub >= svp);
    CHECK(bbox >= v);
    CHECK(bbox >= sub);
  }
}

TEST_CASE("evaluate accuracies and confusion") {
  const std::vector<GroundTruthObject> truths{gt("a", {0, 0, 20, 20}, 0.1, 0, 1), gt("b", {0, 0, 20, 20}, 3.0, 1, 2)};
  const std::vector<Detection> dets{det("a", {0, 0, 20, 20}, 2.0, 0, 0, 1, 0.1),
                                    det("b", {0, 0, 20, 20}, 1.0, 0, 0, 0, 0.5)};
  const auto r = evaluate(dets, truths, 8, 2);
  CHECK(r.matched == 2);
  CHECK(r.azimuth_accuracy == 0.5);
  CHECK(r.subcat_accuracy == 0.5);
  CHECK(r.finer_accuracy == 0.5);
  CHECK(r.confusion == ConfusionMatrix{{1, 0}, {1, 0}});
  REQUIRE(r.rmse);
  CHECK(r.rmse->azimuth_deg == doctest::Approx(std::sqrt((2.5 * 2.5) / 2) / kDeg));
  CHECK(r.viewpoint_by_bins.size() == 4);
  CHECK_THROWS_AS(r.column("nope"), Error);

  std::ostringstream rep, csv;
  const std::vector<std::string> names{"s0", "s1"};
  write_report(rep, r, names);
  write_pr_csv(csv, r);
  CHECK(rep.str().find("Bounding Box") != std::string::npos);
  CHECK(rep.str().find("s1") != std::string::npos);
  CHECK(csv.str().rfind("criterion,recall,precision\n", 0) == 0);
}

TEST_CASE("confusion matrix skips out-of-range labels") {
  const std::vector<std::pair<int, int>> tp{{0, 0}, {0, 1}, {1, 1}, {1, -1}, {2, 0}};
  CHECK(confusion_matrix(tp, 2) == ConfusionMatrix{{1, 1}, {0, 1}});
  CHECK_THROWS_AS(confusion_matrix(tp, -1), Error);
}

TEST_CASE("segmentation iou") {
  CadRegistry cads;
  cads.finer = {normalize_mesh(testing::box_mesh({0, 0, 0}, {2, 1, 1}, "a")),
                normalize_mesh(testing::box_mesh({0, 0, 0}, {1, 1, 1}, "b"))};
  cads.merged = {cads.finer[0]};
  const auto t = GroundTruthObject{"img", {30, 30, 60, 50}, {0.7, 0.3, 2.6, {2.0, -1.5}}, 0, 0};
  Detection d;
  d.image_id = "img";
  d.region = t.box;
  d.assignment = LabelAssignment::foreground(3, 1, 0, 0);
  d.assignment.cv3 = t.viewpoint;
  SegmentationAssets a{&cads, &t, nullptr, 128, 128};
  CHECK(segmentation_iou(d, SegmentationMode::CadAlignment, a) == 1.0);
  d.assignment.f = 1;
  const double other = segmentation_iou(d, SegmentationMode::CadAlignment, a);
  CHECK(other < 1.0);
  CHECK(other > 0.2);

  const auto mask = render_in_image(cads.finer[0], t.viewpoint, t.box, 128, 128);
  a.mask = &mask;
  d.assignment.f = 0;
  CHECK(segmentation_iou(d, SegmentationMode::Mask2d, a) == 1.0);

  // two-layer result uses the merged model
  d.assignment = LabelAssignment::foreground(2, 1, 0);
  d.assignment.cv2 = t.viewpoint;
  CHECK(segmentation_iou(d, SegmentationMode::CadAlignment, a) == 1.0);

  Detection none;
  CHECK_THROWS_AS(segmentation_iou(none, SegmentationMode::CadAlignment, a), Error);
  a.truth = nullptr;
  CHECK_THROWS_AS(segmentation_iou(d, SegmentationMode::CadAlignment, a), Error);
}

TEST_CASE("render in image centers the projection on the region") {
  const auto cube = testing::unit_cube();
  const ContinuousViewpoint v{0.0, 0.0, 3.0, {}};
  const auto m = render_in_image(cube, v, Rect{20, 40, 30, 30}, 128, 128);
  const auto box = m.bounding_rect();
  REQUIRE(box);
  CHECK(box->center_x() == doctest::Approx(35.0).epsilon(0.02));
  CHECK(box->center_y() == doctest::Approx(55.0).epsilon(0.02));
  const auto shifted = render_in_image(cube, {0.0, 0.0, 3.0, {10.0, -5.0}}, Rect{20, 40, 30, 30}, 128, 128);
  const auto sb = shifted.bounding_rect();
  REQUIRE(sb);
  CHECK(sb->x == box->x + 10);
  CHECK(sb->y == box->y - 5);
}
