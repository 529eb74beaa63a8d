#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hierpose/eval.hpp"
#include "hierpose/image.hpp"
#include "hierpose/model.hpp"
#include "hierpose/sampling.hpp"

namespace hierpose {

struct ImageRecord {
  std::string id;
  std::string path;  ///< relative to the manifest directory unless absolute
  int width = 0;
  int height = 0;
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// Annotated region. Sub-category and finer labels are names; negatives
/// (object = false) carry "-" and bin -1.
struct AnnotationRecord {
  std::string image_id;
  Rect box;
  bool object = true;
  int vbin = kBackground;
  ContinuousViewpoint viewpoint;
  std::string subcat = "-";
  std::string finer = "-";
  friend bool operator==(const AnnotationRecord& a, const AnnotationRecord& b) {
    return a.image_id == b.image_id && a.box == b.box && a.object == b.object && a.vbin == b.vbin &&
           a.viewpoint.azimuth == b.viewpoint.azimuth && a.viewpoint.elevation == b.viewpoint.elevation &&
           a.viewpoint.distance == b.viewpoint.distance && a.viewpoint.occ.dx == b.viewpoint.occ.dx &&
           a.viewpoint.occ.dy == b.viewpoint.occ.dy && a.subcat == b.subcat && a.finer == b.finer;
  }
};

struct ProposalRecord {
  std::string image_id;
  Rect box;
  std::optional<double> score;
  friend bool operator==(const ProposalRecord&, const ProposalRecord&) = default;
};

struct CadRecord {
  std::string finer;
  std::string subcat;
  std::string path;
  friend bool operator==(const CadRecord&, const CadRecord&) = default;
};

/// Line-oriented dataset description:
///   IMG  id path width height
///   ANN  image_id x y w h o vbin azimuth elevation distance occ_dx occ_dy subcat finer
///   PROP image_id x y w h [score]
///   CAD  finer subcat path
/// Blank lines and lines starting with '#' are ignored.
struct DatasetManifest {
  std::filesystem::path root;  ///< directory relative paths resolve against
  std::vector<ImageRecord> images;
  std::vector<AnnotationRecord> annotations;
  std::vector<ProposalRecord> proposals;
  std::vector<CadRecord> cads;

  /// Throws on the first record violating the invariants.
  void validate() const;
  [[nodiscard]] const ImageRecord& image(const std::string& id) const;
  [[nodiscard]] std::filesystem::path resolve(const std::string& path) const;
  [[nodiscard]] std::vector<Rect> proposals_of(const std::string& image_id) const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.images == b.images && a.annotations == b.annotations && a.proposals == b.proposals &&
           a.cads == b.cads;
  }
};

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& root,
                               const std::string& source = "<manifest>");
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Sub-categories in order of first CAD record, finer ids in CAD order.
HierarchyConfig hierarchy_from_manifest(const DatasetManifest& manifest, int layers, int azimuth_bins);

/// Reads and normalizes the CAD models and builds the merged models.
CadRegistry load_cads(const DatasetManifest& manifest, const HierarchyConfig& config, int voxel_resolution = 32,
                      double tau = 0.5);

DistanceReference distance_reference(const DatasetManifest& manifest);
std::vector<double> training_elevations(const DatasetManifest& manifest);
std::vector<GroundTruthObject> ground_truth(const DatasetManifest& manifest, const HierarchyConfig& config);

/// Label assignment of an annotation truncated to config.layers.
LabelAssignment annotation_labels(const AnnotationRecord& ann, const HierarchyConfig& config);

/// Sliding windows of each square scale at the matching stride, clipped to
/// the image. A scale with no full placement yields one box at the origin.
std::vector<Rect> grid_proposals(int width, int height, std::span<const int> scales, std::span<const int> strides);

struct SynthSpec {
  int scenes = 50;
  int image_width = 128;
  int image_height = 128;
  double elevation_min = 0.10;  ///< radians
  double elevation_max = 0.60;
  double distance_min = 2.3;
  double distance_max = 3.0;
  int center_jitter = 8;  ///< max principal-point offset from the image center, px
  int jitter_proposals = 1;
  int negative_proposals = 2;
  double noise = 0.03;
  double background_contrast = 1.0;  ///< scale of the value-noise texture
  uint64_t seed = 1;
  std::string prefix = "scene";
  int workers = 1;

  void validate() const;
};

/// The built-in shape library: two sub-categories with two finer models
/// each, unnormalized. Independent of any seed.
std::vector<std::pair<CadRecord, CadModel>> synthetic_shapes();

/// Renders `spec.scenes` single-object scenes into `out_dir` (images/,
/// masks/, cads/, manifest.txt) and returns the manifest.
DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Lambert-shaded z-buffered render; pixels outside the silhouette keep the
/// value already in `canvas`. Coverage equals render_silhouette.
void render_shaded(GrayImage& canvas, const CadModel& model, const CameraPose& pose, double focal, double cx,
                   double cy, const Vec3& light);

}  // namespace hierpose
