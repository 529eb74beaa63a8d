#include <cmath>
#include <random>

#include "doctest.h"
#include "hierpose/error.hpp"
#include "hierpose/potentials.hpp"
#include "support.hpp"

using namespace hierpose;

namespace {

ParticleSet grid_particles(int n_az, const std::vector<PixelShift>& shifts, double distance = 2.6) {
  ParticleSet set;
  for (int a = 0; a < n_az; ++a)
    for (const auto& s : shifts) set.particles.push_back({0.3 + 0.4 * a, 0.35, distance, s});
  return set;
}

struct Scene {
  GrayImage image;
  Rect region;
  CadModel cad;
};

Scene rendered_scene() {
  Scene s;
  s.cad = normalize_mesh(testing::box_mesh({0, 0, 0}, {2.0, 1.0, 0.6}, "car"));
  s.region = Rect{30, 34, 64, 52};
  s.image = GrayImage(128, 128, 0.2);
  const RegionRenderer r(128, 128, s.region);
  const auto m = r({1.1, 0.35, 2.6, {}}, s.cad);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.on(x, y)) s.image.at(s.region.x - 1 + x, s.region.y - 1 + y) = 0.9;
  return s;
}

}  // namespace

TEST_CASE("phi_cnt is the max normalized alignment over particles") {
  const auto sc = rendered_scene();
  const auto hog = compute_hog(sc.image, sc.region);
  const RegionRenderer r(128, 128, sc.region);
  const auto set = grid_particles(6, {{0, 0}, {4.4, -2.6}, {-7.0, 3.0}});
  double best = -1e300;
  int arg = -1;
  for (size_t i = 0; i < set.particles.size(); ++i) {
    const double v = contour_hog(r(set.particles[i], sc.cad), r.clip()).dot(hog) / 64.0;
    if (v > best) {
      best = v;
      arg = static_cast<int>(i);
    }
  }
  const auto generic = phi_cnt(hog, MaskMaker(r), r.clip(), set, sc.cad);
  CHECK(generic.value == best);
  CHECK(generic.argmax == arg);
  const auto fast = phi_cnt(hog, 128, 128, sc.region, set, sc.cad, nullptr);
  CHECK(fast.value == best);
  CHECK(fast.argmax == arg);
  // two non-negative unit-block descriptors: 0 <= value <= blocks / cells
  CHECK(best >= 0.0);
  CHECK(best <= 16.0 / 64.0);
}

TEST_CASE("phi_cnt peaks at the rendering pose") {
  const auto sc = rendered_scene();
  const auto hog = compute_hog(sc.image, sc.region);
  ParticleSet set;
  for (double az : {0.1, 0.6, 1.1, 1.6, 2.1, 2.6}) set.particles.push_back({az, 0.35, 2.6, {}});
  const auto r = phi_cnt(hog, 128, 128, sc.region, set, sc.cad, nullptr);
  CHECK(r.argmax == 2);
}

TEST_CASE("contour cache returns identical values") {
  const auto sc = rendered_scene();
  const auto hog = compute_hog(sc.image, sc.region);
  const auto set = grid_particles(4, {{0, 0}, {3.0, 1.0}});
  ContourHogCache cache;
  const auto cold = phi_cnt(hog, 128, 128, sc.region, set, sc.cad, &cache);
  CHECK(cache.hits() == 0);
  const auto warm = phi_cnt(hog, 128, 128, sc.region, set, sc.cad, &cache);
  CHECK(cache.hits() == set.particles.size());
  CHECK(cold.value == warm.value);
  CHECK(cold.argmax == warm.argmax);
  // same size region elsewhere reuses descriptors
  const auto moved = phi_cnt(hog, 128, 128, Rect{10, 10, 64, 52}, set, sc.cad, &cache);
  CHECK(moved.value == cold.value);

  ContourHogCache tiny(2);
  (void)phi_cnt(hog, 128, 128, sc.region, set, sc.cad, &tiny);
  (void)phi_cnt(hog, 128, 128, sc.region, set, sc.cad, &tiny);
  CHECK(tiny.hits() <= 2);
}

TEST_CASE("phi_cnt skips particles that fail to render") {
  const auto sc = rendered_scene();
  const auto hog = compute_hog(sc.image, sc.region);
  const RegionRenderer r(128, 128, sc.region);
  auto set = grid_particles(3, {{0, 0}});
  set.particles[1].distance = 0.1;  // camera inside the model
  const auto full = phi_cnt(hog, 128, 128, sc.region, set, sc.cad, nullptr);
  const auto generic = phi_cnt(hog, MaskMaker(r), r.clip(), set, sc.cad);
  CHECK(full.argmax != 1);
  CHECK(full.value == generic.value);

  ParticleSet bad;
  bad.particles.push_back({0.0, 0.3, 0.1, {}});
  CHECK_THROWS_AS(phi_cnt(hog, 128, 128, sc.region, bad, sc.cad, nullptr), Error);
  CHECK_THROWS_AS(phi_cnt(hog, MaskMaker(r), r.clip(), bad, sc.cad), Error);
  CHECK_THROWS_AS(phi_cnt(hog, 128, 128, sc.region, ParticleSet{}, sc.cad, nullptr), Error);
}

TEST_CASE("region renderer crop matches direct render") {
  const auto cad = testing::unit_cube();
  const RegionRenderer r(160, 120, Rect{20, 20, 50, 40});
  const CameraPose pose{0.7, 0.4, 2.5};
  const auto pad = r.padded(pose, cad, 9, 6);
  for (const PixelShift occ : {PixelShift{0, 0}, PixelShift{-8.6, 5.2}, PixelShift{9.0, -6.0}, PixelShift{2.4, 0.5}}) {
    CHECK(r.crop(pad, 9, 6, occ) == r({pose.azimuth, pose.elevation, pose.distance, occ}, cad));
  }
  // zero shift centers the projection on the region
  const auto m = r({0.7, 0.4, 2.5, {}}, cad);
  const auto box = m.bounding_rect();
  REQUIRE(box);
  CHECK(std::fabs(box->center_x() - 26.0) <= 1.0);
  CHECK(std::fabs(box->center_y() - 21.0) <= 1.0);
  CHECK_THROWS_AS(RegionRenderer(10, 10, Rect{0, 0, 0, 5}), Error);
}

TEST_CASE("logistic detector") {
  const LogisticDetector d({1.0, -2.0, 0.5}, 0.25);
  CHECK(d.logit(std::vector<double>{1.0, 1.0, 2.0}) == doctest::Approx(0.25));
  CHECK_THROWS_AS(d.logit(std::vector<double>{1.0}), Error);
  CHECK(LogisticDetector({}, 0.5).logit(std::vector<double>{9.0}) == 0.5);

  testing::TempDir dir("det");
  const LogisticDetector e({1.0 / 3.0, -1e-300}, -7.125);
  e.save(dir.path / "d.txt");
  const auto back = LogisticDetector::load(dir.path / "d.txt");
  CHECK(back.weights() == e.weights());
  CHECK(back.bias() == e.bias());
  CHECK_THROWS_AS(LogisticDetector::load(dir.path / "none.txt"), Error);
}

TEST_CASE("file score detector and phi_det") {
  RegionTable t;
  t.insert("a", {0, 0, 4, 4}, {2.5});
  t.insert("b", {0, 0, 4, 4}, {std::nan("")});
  const FileScoreDetector d(t);
  const GrayImage img(8, 8);
  CHECK(phi_det({"a", &img}, {0, 0, 4, 4}, d, {}) == 2.5);
  CHECK_THROWS_AS(phi_det({"b", &img}, {0, 0, 4, 4}, d, {}), Error);
  CHECK_THROWS_AS(phi_det({"c", &img}, {0, 0, 4, 4}, d, {}), Error);
  RegionTable wide;
  wide.insert("a", {0, 0, 4, 4}, {1.0, 2.0});
  CHECK_THROWS_AS(FileScoreDetector{wide}, Error);
}

TEST_CASE("energy breakdown terms") {
  std::mt19937_64 gen(4);
  const auto cfg = testing::small_config(3, 4, 2, 2);
  const WeightLayout L(cfg, {8, 3});
  const auto b = testing::random_bundle(cfg, {8, 3}, gen);
  const auto w = testing::random_weights(L, gen);
  const auto e = total_energy(b, LabelAssignment::foreground(3, 1, 1, 2), w);
  // det + 3x(glb, loc) + 2 cnt + 2 vw + 1 sb
  CHECK(e.terms.size() == 1 + 6 + 2 + 3);
  CHECK(e.total == e.sum());
  CHECK(e.terms.front().value == w.values[L.det()] * b.features.det);
}

TEST_CASE("bundle construction modes") {
  auto cfg = testing::small_config(3, 4, 2, 2);
  cfg.sample_counts = {2, 1, 1, 2};
  cfg.sigmas = default_sigmas(4, std::vector<double>{0.3, 0.4});
  std::vector<CadModel> finer;
  for (int f = 0; f < 4; ++f)
    finer.push_back(normalize_mesh(testing::box_mesh({0, 0, 0}, {1.0 + 0.3 * f, 1.0, 0.5 + 0.1 * f},
                                                     cfg.finer[f])));
  const auto cads = CadRegistry::build(cfg, finer, 16, 0.5);
  DistanceReference refs;
  refs.records = {{60, 50, 2.6}, {40, 40, 3.0}};
  const auto sc = rendered_scene();
  const FilterBankProvider fb;
  const LogisticDetector det;
  BundleContext ctx{&cfg, &cads, &refs, &det, &fb, 7, nullptr, CntMode::Full};
  const ImageRef ref{"img", &sc.image};

  const auto full = build_bundle(ref, sc.region, ctx);
  CHECK(full.cnt2.size() == 8);
  CHECK(full.cnt3.size() == 16);
  CHECK(full.features.hog.size() == 576);
  CHECK(full.features.app.values.size() == 128);
  const auto again = build_bundle(ref, sc.region, ctx);
  for (size_t i = 0; i < full.cnt3.size(); ++i) {
    CHECK(full.cnt3[i].value == again.cnt3[i].value);
    CHECK(full.cnt3[i].argmax == again.cnt3[i].argmax);
  }

  ctx.cnt_mode = CntMode::AnchorOnly;
  const auto anchor = build_bundle(ref, sc.region, ctx);
  for (int v = 0; v < 4; ++v)
    for (int f = 0; f < 4; ++f) {
      const auto& e = anchor.cnt(3, v, f);
      CHECK(e.argmax == 0);
      CHECK(e.best.azimuth == bin_center(v, 4));
      // particle 0 of the full set is the anchor, so the full max is at least as large
      CHECK(full.cnt(3, v, f).value >= e.value);
    }

  ctx.cnt_mode = CntMode::Ignore;
  const auto ign = build_bundle(ref, sc.region, ctx);
  for (const auto& e : ign.cnt2) CHECK(e.value == 0.0);

  BundleContext incomplete;
  CHECK_THROWS_AS(build_bundle(ref, sc.region, incomplete), Error);
  ctx.cads = nullptr;
  CHECK_THROWS_AS(build_bundle(ref, sc.region, ctx), Error);
}
