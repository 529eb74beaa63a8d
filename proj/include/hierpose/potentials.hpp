#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hierpose/features.hpp"
#include "hierpose/model.hpp"
#include "hierpose/sampling.hpp"

namespace hierpose {

// --- detector (phi_det) ------------------------------------------------------

class Detector {
public:
  virtual ~Detector() = default;
  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual double score(const ImageRef& image, const Rect& region,
                                     const AppearanceVector& app) const = 0;
};

/// Linear logistic model over the appearance vector; the score is the logit.
class LogisticDetector final : public Detector {
public:
  LogisticDetector() = default;
  LogisticDetector(std::vector<double> weights, double bias) : weights_(std::move(weights)), bias_(bias) {}

  [[nodiscard]] std::string id() const override { return "logistic"; }
  [[nodiscard]] double score(const ImageRef& image, const Rect& region,
                             const AppearanceVector& app) const override;
  [[nodiscard]] double logit(std::span<const double> x) const;

  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] double bias() const { return bias_; }

  /// Text: `logistic <dim>` then bias then weights, hex floats.
  void save(const std::filesystem::path& path) const;
  static LogisticDetector load(const std::filesystem::path& path);

private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

/// Scores read from a RegionTable file with dim = 1.
class FileScoreDetector final : public Detector {
public:
  explicit FileScoreDetector(RegionTable table);
  static FileScoreDetector load(const std::filesystem::path& path);
  [[nodiscard]] std::string id() const override { return "file"; }
  [[nodiscard]] double score(const ImageRef& image, const Rect& region,
                             const AppearanceVector& app) const override;

private:
  RegionTable table_;
};

double phi_det(const ImageRef& image, const Rect& region, const Detector& detector,
               const AppearanceVector& app);

// --- continuous viewpoint term (phi_cnt) ---------------------------------------

/// Renders a CAD model for a particle into some raster.
using MaskMaker = std::function<SilhouetteMask(const ContinuousViewpoint&, const CadModel&)>;

/// Default mask maker for a proposal: renders into a local raster covering
/// the region plus a one-pixel margin with the focal length of the full
/// image. The projection center (see projection_center) lands on the region
/// center, then the silhouette moves by the particle's occ rounded to whole
/// pixels. `clip()` is the region inside that raster.
class RegionRenderer {
public:
  RegionRenderer(int image_width, int image_height, const Rect& region);
  SilhouetteMask operator()(const ContinuousViewpoint& vp, const CadModel& cad) const;
  /// Unshifted raster padded for shifts up to (pad_x, pad_y); crop() then
  /// yields exactly operator() for any such occ.
  [[nodiscard]] SilhouetteMask padded(const CameraPose& pose, const CadModel& cad, int pad_x, int pad_y) const;
  [[nodiscard]] SilhouetteMask crop(const SilhouetteMask& padded, int pad_x, int pad_y, PixelShift occ) const;
  [[nodiscard]] Rect clip() const { return {1, 1, region_.w, region_.h}; }
  [[nodiscard]] double focal() const { return focal_; }

private:
  Rect region_;
  double focal_;
};

/// Memo of contour descriptors keyed by (cad id, quantized particle, region
/// size). Safe for concurrent use; cleared wholesale when full.
class ContourHogCache {
public:
  explicit ContourHogCache(size_t capacity = 200000) : capacity_(capacity) {}

  struct Key {
    std::string cad;
    int64_t azimuth, elevation, distance;
    int occ_x, occ_y, w, h;
    int64_t focal;
    bool operator==(const Key&) const = default;
  };
  static Key make_key(const std::string& cad, const ContinuousViewpoint& vp, const Rect& region,
                      double focal);

  HogDescriptor get_or_compute(const Key& key, const std::function<HogDescriptor()>& compute);
  /// Counts a hit or a miss.
  std::optional<HogDescriptor> find(const Key& key);
  void insert(const Key& key, const HogDescriptor& d);
  [[nodiscard]] size_t hits() const;
  [[nodiscard]] size_t misses() const;

private:
  struct KeyHash {
    size_t operator()(const Key& k) const;
  };
  mutable std::mutex mutex_;
  std::unordered_map<Key, HogDescriptor, KeyHash> map_;
  size_t capacity_;
  size_t hits_ = 0;
  size_t misses_ = 0;
};

struct CntResult {
  double value = 0.0;
  int argmax = 0;
};

/// Max over particles of <contour HOG, region HOG> / |R|, where |R| is the
/// number of HOG cells. Particles that fail to render are skipped; throws
/// only if every particle fails.
CntResult phi_cnt(const HogDescriptor& region_hog, const MaskMaker& maker, const Rect& clip,
                  const ParticleSet& particles, const CadModel& cad);

/// Same as above with the default RegionRenderer for `region` of an
/// image_width x image_height image, memoizing contour descriptors in `cache`.
CntResult phi_cnt(const HogDescriptor& region_hog, int image_width, int image_height, const Rect& region,
                  const ParticleSet& particles, const CadModel& cad, ContourHogCache* cache);

// --- bundles and energy ----------------------------------------------------------

struct CntEntry {
  double value = 0.0;
  int argmax = 0;
  ContinuousViewpoint best;
};

/// Every potential of one proposal region, for every discrete label.
struct PotentialBundle {
  RegionFeatures features;
  int bins = 0;
  int subcats = 0;
  int finer = 0;
  std::vector<CntEntry> cnt2;  ///< [v * subcats + s], merged sub-category CAD
  std::vector<CntEntry> cnt3;  ///< [v * finer + f], finer CAD

  /// Throws when the entry was not computed.
  [[nodiscard]] const CntEntry& cnt(int layer, int v, int id) const;
  [[nodiscard]] CntValues cnt_values(const LabelAssignment& a) const;
  /// Attaches the argmax particles of the assignment's labels as cv2 / cv3.
  void attach_viewpoints(LabelAssignment& a) const;
};

enum class CntMode {
  Full,        ///< sample all particles
  AnchorOnly,  ///< particle 0 only
  Ignore,      ///< no rendering: value 0, viewpoint = anchor particle
};

struct BundleContext {
  const HierarchyConfig* config = nullptr;
  const CadRegistry* cads = nullptr;
  const DistanceReference* refs = nullptr;
  const Detector* detector = nullptr;
  const AppearanceProvider* provider = nullptr;
  uint64_t seed = 0;
  ContourHogCache* cache = nullptr;
  CntMode cnt_mode = CntMode::Full;
};

/// Seed of the particle sets of one image.
uint64_t image_seed(uint64_t seed, const std::string& image_id);

PotentialBundle build_bundle(const ImageRef& image, const Rect& region, const BundleContext& ctx);

struct EnergyTerm {
  std::string name;
  int layer = 0;
  double value = 0.0;
};

struct EnergyBreakdown {
  std::vector<EnergyTerm> terms;
  double total = 0.0;
  [[nodiscard]] double sum() const;
};

/// E = w1 phi_det + sum_l (w2^l . phi_glb + w3^l . phi_loc) + sum_{l=2,3} w4^l phi_cnt
/// (+ frozen consistency terms); background is 0.
EnergyBreakdown total_energy(const PotentialBundle& bundle, const LabelAssignment& a, const WeightVector& w);

}  // namespace hierpose
