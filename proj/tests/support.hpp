#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "hierpose/geometry.hpp"
#include "hierpose/image.hpp"
#include "hierpose/potentials.hpp"

namespace testing {

inline hierpose::CadModel box_mesh(const hierpose::Vec3& lo, const hierpose::Vec3& hi, const std::string& id = "box") {
  using hierpose::Vec3;
  hierpose::CadModel m;
  m.id = id;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

/// Unit-diagonal cube centered on the origin.
inline hierpose::CadModel unit_cube() { return hierpose::normalize_mesh(box_mesh({0, 0, 0}, {1, 1, 1}, "cube")); }

inline hierpose::GrayImage random_image(int w, int h, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  hierpose::GrayImage img(w, h);
  for (auto& v : img.pixels()) v = u(gen);
  return img;
}

/// m azimuth bins, n sub-categories with p finer models each.
inline hierpose::HierarchyConfig small_config(int layers, int m, int n, int p) {
  hierpose::HierarchyConfig c;
  c.layers = layers;
  c.azimuth_bins = m;
  for (int s = 0; s < n; ++s) {
    c.subcategories.push_back("s" + std::to_string(s));
    for (int f = 0; f < p; ++f) {
      c.finer.push_back("s" + std::to_string(s) + "f" + std::to_string(f));
      c.finer_subcat.push_back(s);
    }
  }
  return c;
}

/// Bundle with random features and random per-label cnt entries, as if each
/// cnt value were the max over `particles` random scores.
inline hierpose::PotentialBundle random_bundle(const hierpose::HierarchyConfig& c, hierpose::FeatureDims d,
                                               std::mt19937_64& gen, int particles = 12) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  hierpose::PotentialBundle b;
  b.bins = c.azimuth_bins;
  b.subcats = c.subcategory_count();
  b.finer = c.finer_count();
  b.features.det = g(gen);
  b.features.hog.cells_x = d.hog;
  b.features.hog.cells_y = 1;
  b.features.hog.bins = 1;
  for (int i = 0; i < d.hog; ++i) b.features.hog.values.push_back(u(gen));
  for (int i = 0; i < d.app; ++i) b.features.app.values.push_back(g(gen));
  auto entry = [&] {
    hierpose::CntEntry e;
    e.value = -1e300;
    for (int k = 0; k < particles; ++k) {
      const double v = u(gen);
      if (v > e.value) {
        e.value = v;
        e.argmax = k;
      }
    }
    e.best.azimuth = u(gen) * 6.28;
    e.best.distance = 2.0 + u(gen);
    return e;
  };
  if (c.layers >= 2)
    for (int i = 0; i < b.bins * b.subcats; ++i) b.cnt2.push_back(entry());
  if (c.layers >= 3)
    for (int i = 0; i < b.bins * b.finer; ++i) b.cnt3.push_back(entry());
  return b;
}

/// Random weights; frozen blocks stay zero unless `frozen_too`.
inline hierpose::WeightVector random_weights(const hierpose::WeightLayout& layout, std::mt19937_64& gen,
                                             double scale = 1.0, bool frozen_too = false) {
  std::normal_distribution<double> g(0.0, scale);
  hierpose::WeightVector w(layout);
  for (const auto& b : layout.blocks()) {
    if (b.frozen && !frozen_too) continue;
    for (size_t i = 0; i < b.length; ++i) w.values[b.offset + i] = g(gen);
  }
  return w;
}

/// Fresh directory under the system temp path, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("hierpose-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing
