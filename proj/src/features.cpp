#include "hierpose/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hierpose/error.hpp"

namespace hierpose {

namespace {

constexpr double kMinBlockNorm = 1e-10;

void normalize_block(std::span<double> v) {
  auto norm = [&] {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double n0 = norm();
  if (n0 < kMinBlockNorm) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  for (double& x : v) x = std::min(x / n0, kHogClip);
  const double n1 = norm();
  for (double& x : v) x /= n1;
}

}  // namespace

double HogDescriptor::dot(const HogDescriptor& other) const {
  if (other.values.size() != values.size()) throw Error("HogDescriptor::dot: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < values.size(); ++i) s += values[i] * other.values[i];
  return s;
}

bool HogDescriptor::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

HogDescriptor hog_of_template(const GrayImage& tmpl, int cell_px, int bins) {
  if (cell_px <= 0 || bins <= 0) throw Error("hog: cell size and bin count must be positive");
  if (tmpl.width() < cell_px || tmpl.height() < cell_px) throw Error("hog: template smaller than one cell");
  HogDescriptor d;
  d.cells_x = tmpl.width() / cell_px;
  d.cells_y = tmpl.height() / cell_px;
  d.bins = bins;
  d.values.assign(size_t(d.cells_x) * d.cells_y * bins, 0.0);

  const double bin_width = std::numbers::pi / bins;
  for (int y = 0; y < d.cells_y * cell_px; ++y) {
    for (int x = 0; x < d.cells_x * cell_px; ++x) {
      const double gx = tmpl.clamped(x + 1, y) - tmpl.clamped(x - 1, y);
      const double gy = tmpl.clamped(x, y + 1) - tmpl.clamped(x, y - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      const double pos = theta / bin_width;
      const int lo = static_cast<int>(std::floor(pos));
      const double frac = pos - lo;
      const size_t base = (size_t(y / cell_px) * d.cells_x + x / cell_px) * bins;
      d.values[base + (lo % bins)] += mag * (1.0 - frac);
      d.values[base + ((lo + 1) % bins)] += mag * frac;
    }
  }

  // Non-overlapping 2x2 blocks; a trailing odd row/column forms a smaller block.
  std::vector<double> block;
  for (int by = 0; by < d.cells_y; by += 2) {
    for (int bx = 0; bx < d.cells_x; bx += 2) {
      block.clear();
      std::vector<size_t> where;
      for (int cy = by; cy < std::min(by + 2, d.cells_y); ++cy)
        for (int cx = bx; cx < std::min(bx + 2, d.cells_x); ++cx) {
          const size_t base = (size_t(cy) * d.cells_x + cx) * bins;
          for (int b = 0; b < bins; ++b) {
            block.push_back(d.values[base + b]);
            where.push_back(base + b);
          }
        }
      normalize_block(block);
      for (size_t i = 0; i < block.size(); ++i) d.values[where[i]] = block[i];
    }
  }
  return d;
}

HogDescriptor compute_hog(const GrayImage& image, const Rect& region, int cell_px, int bins) {
  if (region.empty()) throw Error("compute_hog: empty region");
  if (!image.contains(region)) throw Error("compute_hog: region outside image");
  if (region.w < cell_px || region.h < cell_px) throw Error("compute_hog: region smaller than one cell");
  return hog_of_template(image.resample(region, kTemplateSize, kTemplateSize), cell_px, bins);
}

GrayImage contour_image(const SilhouetteMask& mask) {
  GrayImage img(mask.width, mask.height);
  for (size_t i = 0; i < mask.contour.size(); ++i) img.pixels()[i] = mask.contour[i] ? 1.0 : 0.0;
  return img;
}

HogDescriptor contour_hog(const SilhouetteMask& mask, const Rect& region, int cell_px, int bins) {
  if (region.empty()) throw Error("contour_hog: empty region");
  if (region.w < cell_px || region.h < cell_px) throw Error("contour_hog: region smaller than one cell");
  GrayImage crop(region.w, region.h);
  bool any = false;
  for (int y = 0; y < region.h; ++y) {
    const int my = region.y + y;
    if (my < 0 || my >= mask.height) continue;
    for (int x = 0; x < region.w; ++x) {
      const int mx = region.x + x;
      if (mx < 0 || mx >= mask.width || !mask.on_contour(mx, my)) continue;
      crop.at(x, y) = 1.0;
      any = true;
    }
  }
  if (!any) {
    HogDescriptor zero;
    zero.cells_x = kTemplateSize / cell_px;
    zero.cells_y = kTemplateSize / cell_px;
    zero.bins = bins;
    zero.values.assign(size_t(zero.cells_x) * zero.cells_y * bins, 0.0);
    return zero;
  }
  return compute_hog(crop, Rect{0, 0, region.w, region.h}, cell_px, bins);
}

// ---------------------------------------------------------------------------

RegionTable RegionTable::parse(const std::string& text, const std::string& source) {
  RegionTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string id;
    if (!(ls >> id) || id[0] == '#') continue;
    Rect r;
    int dim = 0;
    if (!(ls >> r.x >> r.y >> r.w >> r.h >> dim) || dim <= 0)
      throw Error(source + ":" + std::to_string(line_no) + ": malformed record header");
    std::vector<double> values(static_cast<size_t>(dim));
    for (auto& v : values) {
      if (!(ls >> v)) throw Error(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " values");
    }
    if (table.dim_ != 0 && dim != table.dim_)
      throw Error(source + ":" + std::to_string(line_no) + ": dimension " + std::to_string(dim) +
                  " differs from " + std::to_string(table.dim_));
    table.insert(id, r, std::move(values));
  }
  return table;
}

RegionTable RegionTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void RegionTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (const auto& [key, values] : rows_) {
    const auto& [id, x, y, w, h] = key;
    out << id << ' ' << x << ' ' << y << ' ' << w << ' ' << h << ' ' << values.size();
    for (double v : values) out << ' ' << v;
    out << '\n';
  }
}

void RegionTable::insert(const std::string& image_id, const Rect& r, std::vector<double> values) {
  if (dim_ == 0) dim_ = static_cast<int>(values.size());
  if (static_cast<int>(values.size()) != dim_) throw Error("RegionTable: dimension mismatch");
  rows_[Key{image_id, r.x, r.y, r.w, r.h}] = std::move(values);
}

bool RegionTable::contains(const std::string& image_id, const Rect& r) const {
  return rows_.count(Key{image_id, r.x, r.y, r.w, r.h}) != 0;
}

const std::vector<double>& RegionTable::at(const std::string& image_id, const Rect& r) const {
  auto it = rows_.find(Key{image_id, r.x, r.y, r.w, r.h});
  if (it == rows_.end()) {
    std::ostringstream msg;
    msg << "no record for key (" << image_id << ' ' << r.x << ' ' << r.y << ' ' << r.w << ' ' << r.h << ")";
    throw Error(msg.str());
  }
  return it->second;
}

// ---------------------------------------------------------------------------

FilterBankProvider::FilterBankProvider() {
  constexpr int kOrientations = 4;
  constexpr std::array<double, 2> kWavelengths{3.0, 6.0};
  constexpr double kSigma = 2.0;
  const int size = 2 * kRadius + 1;
  for (double lambda : kWavelengths) {
    for (int o = 0; o < kOrientations; ++o) {
      const double theta = o * std::numbers::pi / kOrientations;
      std::vector<double> k(size_t(size) * size);
      double mean = 0.0;
      for (int dy = -kRadius; dy <= kRadius; ++dy)
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
          const double u = dx * std::cos(theta) + dy * std::sin(theta);
          const double g = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
          const double v = g * std::cos(2 * std::numbers::pi * u / lambda);
          k[size_t(dy + kRadius) * size + (dx + kRadius)] = v;
          mean += v;
        }
      mean /= static_cast<double>(k.size());
      for (double& v : k) v -= mean;
      kernels_.push_back(std::move(k));
    }
  }
}

int FilterBankProvider::dim() const { return static_cast<int>(kernels_.size()) * kPool * kPool; }

AppearanceVector FilterBankProvider::compute(const ImageRef& image, const Rect& region) const {
  if (image.image == nullptr) throw Error("FilterBankProvider: missing image raster");
  if (!image.image->contains(region)) throw Error("FilterBankProvider: region outside image");
  const GrayImage patch = image.image->resample(region, kPatch, kPatch);
  const int size = 2 * kRadius + 1;
  const int cell = kPatch / kPool;
  AppearanceVector out;
  out.provider_id = id();
  out.values.assign(static_cast<size_t>(dim()), 0.0);
  for (size_t k = 0; k < kernels_.size(); ++k) {
    const auto& ker = kernels_[k];
    for (int y = 0; y < kPatch; ++y) {
      for (int x = 0; x < kPatch; ++x) {
        // Differences from the center pixel make constant patches respond
        // with exactly zero.
        const double center = patch.at(x, y);
        double r = 0.0;
        for (int dy = -kRadius; dy <= kRadius; ++dy)
          for (int dx = -kRadius; dx <= kRadius; ++dx)
            r += ker[size_t(dy + kRadius) * size + (dx + kRadius)] * (patch.clamped(x + dx, y + dy) - center);
        out.values[(k * kPool + y / cell) * kPool + x / cell] += std::abs(r);
      }
    }
  }
  double norm = 0.0;
  for (double& v : out.values) {
    v /= cell * cell;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm > 1e-12)
    for (double& v : out.values) v /= norm;
  else
    std::fill(out.values.begin(), out.values.end(), 0.0);
  return out;
}

FileFeatureProvider::FileFeatureProvider(RegionTable table, std::string name)
    : table_(std::move(table)), name_(std::move(name)) {}

FileFeatureProvider FileFeatureProvider::load(const std::filesystem::path& path) {
  return FileFeatureProvider(RegionTable::load(path), "file:" + path.filename().string());
}

AppearanceVector FileFeatureProvider::compute(const ImageRef& image, const Rect& region) const {
  return AppearanceVector{table_.at(image.id, region), name_};
}

AppearanceVector local_appearance(const ImageRef& image, const Rect& region,
                                  const AppearanceProvider& provider) {
  AppearanceVector v = provider.compute(image, region);
  if (static_cast<int>(v.values.size()) != provider.dim())
    throw Error("local_appearance: provider '" + provider.id() + "' returned wrong dimension");
  return v;
}

}  // namespace hierpose
