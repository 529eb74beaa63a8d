#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "hierpose/geometry.hpp"
#include "hierpose/image.hpp"

namespace hierpose {

/// Regions are resampled to this square template before any descriptor is
/// computed, so every descriptor (and weight block) has one length.
inline constexpr int kTemplateSize = 64;
inline constexpr int kDefaultCellPx = 8;
inline constexpr int kDefaultBins = 9;
inline constexpr double kHogClip = 0.2;

struct HogDescriptor {
  int cells_x = 0;
  int cells_y = 0;
  int bins = 0;
  /// Layout: ((cy * cells_x) + cx) * bins + bin.
  std::vector<double> values;

  [[nodiscard]] size_t size() const { return values.size(); }
  [[nodiscard]] double dot(const HogDescriptor& other) const;
  [[nodiscard]] bool is_zero() const;

  friend bool operator==(const HogDescriptor&, const HogDescriptor&) = default;
};

/// HOG of an already canonical template: central-difference gradients
/// (clamped border), unsigned orientation linearly split between the two
/// nearest bins (bin k centered at k*pi/bins), per-cell histograms and
/// non-overlapping 2x2 block L2-Hys normalization.
HogDescriptor hog_of_template(const GrayImage& tmpl, int cell_px = kDefaultCellPx,
                              int bins = kDefaultBins);

/// Resamples `region` to the canonical template and computes its HOG.
HogDescriptor compute_hog(const GrayImage& image, const Rect& region, int cell_px = kDefaultCellPx,
                          int bins = kDefaultBins);

/// HOG of the mask's contour drawn as a binary image, restricted to
/// `region`. Parts of the region outside the mask raster count as empty, and
/// an empty intersection yields the zero descriptor.
HogDescriptor contour_hog(const SilhouetteMask& mask, const Rect& region, int cell_px = kDefaultCellPx,
                          int bins = kDefaultBins);

/// Renders the contour of a mask as an image (1 on contour pixels).
GrayImage contour_image(const SilhouetteMask& mask);

struct AppearanceVector {
  std::vector<double> values;
  std::string provider_id;

  friend bool operator==(const AppearanceVector&, const AppearanceVector&) = default;
};

/// Table of per-region vectors keyed by (image id, rectangle). Text format,
/// one record per line: `image_id x y w h dim v1 ... vdim`.
class RegionTable {
public:
  using Key = std::tuple<std::string, int, int, int, int>;

  static RegionTable load(const std::filesystem::path& path);
  static RegionTable parse(const std::string& text, const std::string& source = "<string>");
  void save(const std::filesystem::path& path) const;

  void insert(const std::string& image_id, const Rect& r, std::vector<double> values);
  /// Throws naming the key when absent.
  [[nodiscard]] const std::vector<double>& at(const std::string& image_id, const Rect& r) const;
  [[nodiscard]] bool contains(const std::string& image_id, const Rect& r) const;
  [[nodiscard]] size_t size() const { return rows_.size(); }
  /// Dimension shared by all records; 0 when empty.
  [[nodiscard]] int dim() const { return dim_; }

private:
  std::map<Key, std::vector<double>> rows_;
  int dim_ = 0;
};

/// Source of the local-appearance feature vector for a region.
class AppearanceProvider {
public:
  virtual ~AppearanceProvider() = default;
  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual int dim() const = 0;
  [[nodiscard]] virtual AppearanceVector compute(const ImageRef& image, const Rect& region) const = 0;
};

/// Fixed bank of zero-mean oriented cosine-Gabor kernels applied to the
/// region resampled to 32x32, rectified and average-pooled over a 4x4 grid,
/// then L2 normalized.
class FilterBankProvider final : public AppearanceProvider {
public:
  FilterBankProvider();
  [[nodiscard]] std::string id() const override { return "filterbank"; }
  [[nodiscard]] int dim() const override;
  [[nodiscard]] AppearanceVector compute(const ImageRef& image, const Rect& region) const override;

  static constexpr int kPatch = 32;
  static constexpr int kPool = 4;
  static constexpr int kRadius = 3;

private:
  std::vector<std::vector<double>> kernels_;
};

/// Precomputed vectors read from a RegionTable file.
class FileFeatureProvider final : public AppearanceProvider {
public:
  explicit FileFeatureProvider(RegionTable table, std::string name = "file");
  static FileFeatureProvider load(const std::filesystem::path& path);

  [[nodiscard]] std::string id() const override { return name_; }
  [[nodiscard]] int dim() const override { return table_.dim(); }
  [[nodiscard]] AppearanceVector compute(const ImageRef& image, const Rect& region) const override;

private:
  RegionTable table_;
  std::string name_;
};

AppearanceVector local_appearance(const ImageRef& image, const Rect& region,
                                  const AppearanceProvider& provider);

}  // namespace hierpose
