#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierpose/features.hpp"
#include "hierpose/geometry.hpp"

namespace hierpose {

/// Label value meaning "background / not present" in every label set.
inline constexpr int kBackground = -1;

struct SampleCounts {
  int azimuth = 5;
  int elevation = 3;
  int distance = 2;
  int occlusion = 2;

  [[nodiscard]] int total() const { return azimuth * elevation * distance * occlusion; }
};

/// Spreads used when sampling continuous viewpoints around a discrete bin.
struct SamplingSigmas {
  double azimuth = 0.0;         ///< radians
  double elevation = 0.0;       ///< radians
  double mean_elevation = 0.0;  ///< radians
  double occlusion_fraction = 0.15;  ///< sigma_occ = fraction * max(w, h)
};

/// Label spaces of the three-layer hierarchy. Sub-categories and finer
/// sub-categories are indexed globally from 0; `finer_subcat[f]` names the
/// parent of finer sub-category f.
struct HierarchyConfig {
  int layers = 3;
  int azimuth_bins = 8;
  std::vector<std::string> subcategories;
  std::vector<std::string> finer;
  std::vector<int> finer_subcat;
  SampleCounts sample_counts;
  SamplingSigmas sigmas;
  double svm_c = 1.0;

  [[nodiscard]] int subcategory_count() const { return static_cast<int>(subcategories.size()); }
  [[nodiscard]] int finer_count() const { return static_cast<int>(finer.size()); }
  /// Finer indices belonging to sub-category s, ascending.
  [[nodiscard]] std::vector<int> finer_of(int s) const;
  [[nodiscard]] int subcategory_index(const std::string& name) const;
  [[nodiscard]] int finer_index(const std::string& name) const;
  void validate() const;
};

/// Finer-sub-category CAD models and the merged model per sub-category.
struct CadRegistry {
  std::vector<CadModel> finer;   ///< indexed like HierarchyConfig::finer
  std::vector<CadModel> merged;  ///< indexed like HierarchyConfig::subcategories

  /// Builds the merged models from normalized finer models.
  static CadRegistry build(const HierarchyConfig& config, std::vector<CadModel> finer_models,
                           int voxel_resolution = 32, double tau = 0.5);
};

struct ContinuousViewpoint {
  double azimuth = 0.0;
  double elevation = 0.0;
  double distance = 1.0;
  PixelShift occ;

  [[nodiscard]] CameraPose pose() const { return {azimuth, elevation, distance}; }
  void validate() const;
};

/// One joint hypothesis. Arrays are indexed by layer - 1.
struct LabelAssignment {
  bool object = false;
  std::array<int, 3> v{kBackground, kBackground, kBackground};
  std::array<int, 2> s{kBackground, kBackground};  ///< layers 2 and 3
  int f = kBackground;
  std::optional<ContinuousViewpoint> cv2;
  std::optional<ContinuousViewpoint> cv3;

  static LabelAssignment background() { return {}; }
  /// Consistent foreground labels for the first `layers` layers.
  static LabelAssignment foreground(int layers, int v, int s = kBackground, int f = kBackground);

  [[nodiscard]] int viewpoint() const { return v[0]; }
  [[nodiscard]] int subcategory() const { return s[1] != kBackground ? s[1] : s[0]; }
  /// Deepest available continuous viewpoint.
  [[nodiscard]] const std::optional<ContinuousViewpoint>& deepest_viewpoint() const {
    return cv3 ? cv3 : cv2;
  }
};

/// First violated invariant, or nullopt when the assignment is valid.
std::optional<std::string> validate_assignment(const LabelAssignment& a, const HierarchyConfig& config);

/// Per-region inputs of the feature map.
struct RegionFeatures {
  double det = 0.0;
  HogDescriptor hog;
  AppearanceVector app;
};

/// phi_cnt scalars selected by an assignment (layers 2 and 3).
struct CntValues {
  double layer2 = 0.0;
  double layer3 = 0.0;
};

struct FeatureDims {
  int hog = 0;
  int app = 0;
};

struct WeightBlock {
  std::string name;
  size_t offset = 0;
  size_t length = 0;
  bool frozen = false;

  friend bool operator==(const WeightBlock&, const WeightBlock&) = default;
};

/// Offsets of the blocked parameter vector:
///   det                      detector weight (w1)
///   glb1, loc1               per viewpoint HOG / appearance templates (w2, w3 layer 1)
///   glb2, loc2, cnt2         per (viewpoint, sub-category); cnt2 per sub-category
///   glb3, loc3, cnt3         per (viewpoint, finer); cnt3 per finer
///   vw, sb                   consistency weights (w5, w6), frozen at zero
class WeightLayout {
public:
  WeightLayout() = default;
  WeightLayout(const HierarchyConfig& config, FeatureDims dims);

  [[nodiscard]] size_t size() const { return size_; }
  [[nodiscard]] const std::vector<WeightBlock>& blocks() const { return blocks_; }
  [[nodiscard]] const WeightBlock& block(const std::string& name) const;
  [[nodiscard]] bool has_block(const std::string& name) const;
  [[nodiscard]] FeatureDims dims() const { return dims_; }
  [[nodiscard]] int layers() const { return layers_; }
  [[nodiscard]] uint64_t config_hash() const { return hash_; }

  // Offsets of individual templates.
  [[nodiscard]] size_t det() const { return det_; }
  [[nodiscard]] size_t glb(int layer, int slot) const;
  [[nodiscard]] size_t loc(int layer, int slot) const;
  [[nodiscard]] size_t cnt(int layer, int id) const;
  /// Template slot of an assignment at a layer: v, v*n+s, or v*P+f.
  [[nodiscard]] int slot(int layer, const LabelAssignment& a) const;

  /// 1 for learnable coordinates, 0 for frozen ones.
  [[nodiscard]] std::vector<double> learnable_mask() const;

  friend bool operator==(const WeightLayout& a, const WeightLayout& b) {
    return a.blocks_ == b.blocks_ && a.hash_ == b.hash_;
  }

private:
  friend struct WeightVector;
  size_t add(const std::string& name, size_t length, bool frozen = false);

  std::vector<WeightBlock> blocks_;
  size_t size_ = 0;
  FeatureDims dims_;
  int layers_ = 0;
  int bins_ = 0;
  int subcats_ = 0;
  int finer_ = 0;
  uint64_t hash_ = 0;
  size_t det_ = 0;
  std::array<size_t, 3> glb_{};
  std::array<size_t, 3> loc_{};
  std::array<size_t, 3> cnt_{};
};

/// Identity of a configuration for weight-file compatibility checks.
uint64_t config_hash(const HierarchyConfig& config, FeatureDims dims);

struct WeightVector {
  WeightLayout layout;
  std::vector<double> values;

  WeightVector() = default;
  explicit WeightVector(WeightLayout l) : layout(std::move(l)), values(layout.size(), 0.0) {}

  [[nodiscard]] std::span<const double> block(const std::string& name) const;
  std::span<double> block(const std::string& name);

  /// Self-describing text container (see docs/formats.md); floats are
  /// written as hexadecimal literals so the round trip is bit-exact.
  [[nodiscard]] std::string serialize() const;
  static WeightVector deserialize(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static WeightVector load(const std::filesystem::path& path);

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

/// Adds scale * psi(x, y) into `out` (length layout.size()). Background
/// assignments contribute nothing.
void accumulate_joint_feature(std::span<double> out, double scale, const WeightLayout& layout,
                              const RegionFeatures& x, const LabelAssignment& y, const CntValues& cnt);

/// psi(x, y): the vector with E(x, y; w) = <w, psi(x, y)>.
std::vector<double> joint_feature_map(const WeightLayout& layout, const RegionFeatures& x,
                                      const LabelAssignment& y, const CntValues& cnt);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace hierpose
