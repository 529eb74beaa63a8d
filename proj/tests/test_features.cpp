#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hierpose/error.hpp"
#include "hierpose/features.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace hierpose;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

SilhouetteMask disk(int w, int h, double cx, double cy, double r) {
  SilhouetteMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r) m.bits[size_t(y) * w + x] = 1;
  m.update_contour();
  return m;
}

}  // namespace

TEST_CASE("hog matches brute force reference") {
  for (unsigned seed = 1; seed <= 12; ++seed) {
    const auto img = testing::random_image(64, 64, seed);
    const auto d = hog_of_template(img);
    CHECK(d.size() == 576);
    CHECK(d.cells_x == 8);
    CHECK(d.bins == 9);
    CHECK(max_abs_diff(d.values, testing::brute_hog(img, 8, 9)) <= 1e-10);
  }
  // odd cell grid: trailing blocks are 1x2, 2x1, 1x1
  const auto odd = testing::random_image(40, 24, 99);
  CHECK(max_abs_diff(hog_of_template(odd, 8, 9).values, testing::brute_hog(odd, 8, 9)) <= 1e-10);
  CHECK(max_abs_diff(hog_of_template(odd, 4, 6).values, testing::brute_hog(odd, 4, 6)) <= 1e-10);
}

TEST_CASE("hog on structured images matches brute force") {
  GrayImage ramp(64, 64), checker(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      ramp.at(x, y) = 0.01 * x + 0.003 * y;
      checker.at(x, y) = ((x / 5 + y / 7) % 2) ? 1.0 : 0.0;
    }
  CHECK(max_abs_diff(hog_of_template(ramp).values, testing::brute_hog(ramp, 8, 9)) <= 1e-10);
  CHECK(max_abs_diff(hog_of_template(checker).values, testing::brute_hog(checker, 8, 9)) <= 1e-10);
}

TEST_CASE("hog of a constant image is zero") {
  CHECK(hog_of_template(GrayImage(64, 64, 0.4)).is_zero());
}

TEST_CASE("hog is invariant to intensity scale and offset") {
  const auto img = testing::random_image(64, 64, 5);
  GrayImage scaled = img;
  for (auto& v : scaled.pixels()) v = 3.0 * v + 0.25;
  CHECK(max_abs_diff(hog_of_template(img).values, hog_of_template(scaled).values) <= 1e-12);
}

TEST_CASE("block norms after L2-Hys") {
  const auto d = hog_of_template(testing::random_image(64, 64, 8));
  for (int by = 0; by < 8; by += 2)
    for (int bx = 0; bx < 8; bx += 2) {
      double n = 0.0;
      for (int j = by; j < by + 2; ++j)
        for (int i = bx; i < bx + 2; ++i)
          for (int b = 0; b < 9; ++b) n += std::pow(d.values[(size_t(j) * 8 + i) * 9 + b], 2);
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
    }
  // HOG descriptors of natural inputs have <d, d> = number of blocks
  CHECK(d.dot(d) == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("compute_hog resamples to the template") {
  const auto img = testing::random_image(100, 80, 3);
  const Rect r{10, 5, 48, 70};
  CHECK(compute_hog(img, r) == hog_of_template(img.resample(r, kTemplateSize, kTemplateSize)));
  CHECK_THROWS_AS(compute_hog(img, Rect{90, 0, 20, 20}), Error);
  CHECK_THROWS_AS(compute_hog(img, Rect{0, 0, 0, 20}), Error);
  CHECK_THROWS_AS(compute_hog(img, Rect{0, 0, 4, 20}), Error);
}

TEST_CASE("resample of the full image at native size is the identity") {
  const auto img = testing::random_image(33, 17, 4);
  CHECK(img.resample({0, 0, 33, 17}, 33, 17) == img);
  const GrayImage flat(20, 20, 0.7);
  const GrayImage up = flat.resample({3, 4, 9, 11}, 64, 64);
  for (double v : up.pixels()) CHECK(v == 0.7);
}

TEST_CASE("contour hog is shift equivariant") {
  const auto m = disk(96, 96, 40.0, 44.0, 18.0);
  const auto moved = disk(96, 96, 47.0, 39.0, 18.0);
  const auto a = contour_hog(m, Rect{16, 20, 48, 48});
  const auto b = contour_hog(moved, Rect{23, 15, 48, 48});
  CHECK(a == b);
  CHECK_FALSE(a.is_zero());
}

TEST_CASE("contour hog outside the raster or off the contour is zero") {
  const auto m = disk(64, 64, 32.0, 32.0, 10.0);
  const auto outside = contour_hog(m, Rect{100, 100, 32, 32});
  CHECK(outside.is_zero());
  CHECK(outside.size() == 576);
  CHECK(contour_hog(m, Rect{28, 28, 8, 8}).is_zero());  // interior only
  CHECK_THROWS_AS(contour_hog(m, Rect{0, 0, 4, 40}), Error);
}

TEST_CASE("contour image marks contour pixels") {
  const auto m = disk(32, 32, 16.0, 16.0, 8.0);
  const auto img = contour_image(m);
  long n = 0;
  for (double v : img.pixels()) n += v == 1.0;
  long c = 0;
  for (auto b : m.contour) c += b;
  CHECK(n == c);
  CHECK(n > 0);
}

TEST_CASE("region table round trip and lookups") {
  const auto t = RegionTable::parse("# comment\nimgA 1 2 3 4 2 0.5 -1\nimgB 0 0 10 10 2 1e-3 7\n");
  CHECK(t.size() == 2);
  CHECK(t.dim() == 2);
  CHECK(t.at("imgA", {1, 2, 3, 4}) == std::vector<double>{0.5, -1.0});
  CHECK(t.contains("imgB", {0, 0, 10, 10}));
  CHECK_FALSE(t.contains("imgB", {0, 0, 10, 11}));
  CHECK_THROWS_WITH_AS(t.at("imgC", {0, 0, 1, 1}), doctest::Contains("imgC"), Error);

  testing::TempDir dir("table");
  t.save(dir.path / "t.txt");
  const auto back = RegionTable::load(dir.path / "t.txt");
  CHECK(back.at("imgB", {0, 0, 10, 10}) == t.at("imgB", {0, 0, 10, 10}));

  CHECK_THROWS_AS(RegionTable::parse("a 1 2 3 4 2 0.5\n"), Error);
  CHECK_THROWS_AS(RegionTable::parse("a 1 2 3 4 1 0.5\nb 1 2 3 4 2 0.5 1\n"), Error);
  CHECK_THROWS_AS(RegionTable::parse("a 1 2 x\n"), Error);
  CHECK_THROWS_AS(RegionTable::load(dir.path / "missing.txt"), Error);
}

TEST_CASE("filter bank vector") {
  const FilterBankProvider fb;
  CHECK(fb.dim() == 128);
  const auto img = testing::random_image(80, 80, 11);
  const ImageRef ref{"x", &img};
  const auto v = fb.compute(ref, {4, 6, 50, 40});
  REQUIRE(v.values.size() == 128);
  double n = 0.0;
  for (double x : v.values) {
    CHECK(x >= 0.0);
    n += x * x;
  }
  CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(local_appearance(ref, {4, 6, 50, 40}, fb) == v);

  // constant patches respond with exactly zero
  const GrayImage flat(40, 40, 0.3);
  for (double x : fb.compute({"f", &flat}, {0, 0, 40, 40}).values) CHECK(x == 0.0);

  // invariance to a global offset and gain
  GrayImage shifted = img;
  for (auto& p : shifted.pixels()) p = 0.5 * p + 0.2;
  const auto w = fb.compute({"y", &shifted}, {4, 6, 50, 40});
  for (size_t i = 0; i < 128; ++i) CHECK(w.values[i] == doctest::Approx(v.values[i]).epsilon(1e-9));

  CHECK_THROWS_AS(fb.compute({"x", nullptr}, {0, 0, 4, 4}), Error);
  CHECK_THROWS_AS(fb.compute(ref, {70, 70, 20, 20}), Error);
}

TEST_CASE("file feature provider") {
  RegionTable t;
  t.insert("im", {1, 1, 5, 5}, {1.0, 2.0, 3.0});
  const FileFeatureProvider p(t, "tbl");
  CHECK(p.dim() == 3);
  CHECK(p.id() == "tbl");
  CHECK(p.compute({"im", nullptr}, {1, 1, 5, 5}).values == std::vector<double>{1.0, 2.0, 3.0});
  CHECK_THROWS_AS(p.compute({"im", nullptr}, {1, 1, 5, 6}), Error);
}

TEST_CASE("pgm round trip quantizes to 8 bits") {
  testing::TempDir dir("pgm");
  GrayImage img(5, 3);
  for (int i = 0; i < 15; ++i) img.pixels()[i] = i / 14.0;
  write_pgm(dir.path / "a.pgm", img);
  const auto back = read_pgm(dir.path / "a.pgm");
  REQUIRE(back.width() == 5);
  REQUIRE(back.height() == 3);
  for (int i = 0; i < 15; ++i) CHECK(back.pixels()[i] == std::lround(i / 14.0 * 255.0) / 255.0);
  CHECK_THROWS_AS(read_pgm(dir.path / "missing.pgm"), Error);
}

TEST_CASE("rect iou") {
  CHECK(iou({0, 0, 10, 10}, {5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {10, 0, 10, 10}) == 0.0);
  CHECK(iou({0, 0, 0, 10}, {0, 0, 10, 10}) == 0.0);
}
