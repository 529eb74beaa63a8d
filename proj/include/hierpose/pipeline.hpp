#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hierpose/dataset.hpp"
#include "hierpose/learning.hpp"

namespace hierpose {

/// Rasters of every manifest image, keyed by id.
using ImageStore = std::map<std::string, GrayImage>;
ImageStore load_images(const DatasetManifest& manifest, int workers = 1);
ImageRef image_ref(const ImageStore& store, const std::string& id);

/// Everything besides the weights that inference needs.
struct ModelAssets {
  HierarchyConfig config;
  CadRegistry cads;
  std::vector<std::string> cad_paths;  ///< absolute, indexed like config.finer
  DistanceReference refs;
  int voxel_resolution = 32;
  double tau = 0.5;
  uint64_t seed = 0;
  CntMode cnt_mode = CntMode::Full;
  std::shared_ptr<const AppearanceProvider> provider;
  std::shared_ptr<const Detector> detector;
  std::string feature_table;  ///< empty for the built-in filter bank
  std::string score_table;    ///< empty for the trained logistic detector

  [[nodiscard]] BundleContext context() const;
};

struct TrainOptions {
  int layers = 3;
  int azimuth_bins = 8;
  int voxel_resolution = 32;
  double tau = 0.5;
  uint64_t seed = 0;
  int workers = 1;
  CntMode cnt_mode = CntMode::Full;
  double negative_iou = 0.3;  ///< proposals below this overlap with every object are negatives
  SsvmOptions ssvm;
  LogisticOptions logistic;
  std::string feature_table;
  std::string score_table;
  std::function<void(const std::string&)> log;
};

struct TrainOutput {
  ModelAssets assets;
  WeightVector weights;
  SsvmResult ssvm;
  int positives = 0;
  int negatives = 0;
};

/// Builds config, CADs and detector from the manifest, then trains the
/// structured model on annotated boxes (positives) and low-overlap
/// proposals (negatives).
TrainOutput train_model(const DatasetManifest& manifest, const TrainOptions& options,
                        const ImageStore* images = nullptr);

/// Directory with model.json, weights.txt and (for the logistic detector)
/// detector.txt.
void save_model(const std::filesystem::path& dir, const ModelAssets& assets, const WeightVector& weights);
std::pair<ModelAssets, WeightVector> load_model(const std::filesystem::path& dir);

/// detect_image over every manifest image with its proposals.
std::vector<Detection> run_inference(const ModelAssets& assets, const WeightVector& weights,
                                     const DatasetManifest& manifest, const ImageStore& images, int workers = 1,
                                     double nms_overlap = 0.5);

/// One line per detection:
///   image_id x y w h energy v_bin azimuth elevation distance occ_dx occ_dy subcat finer
/// Labels are names, '-' when the model has no such layer.
void write_detections(const std::filesystem::path& path, std::span<const Detection> detections,
                      const HierarchyConfig& config);
std::vector<Detection> read_detections(const std::filesystem::path& path, const HierarchyConfig& config);

/// Mean cad-alignment IoU over bbox-matched detections (nullopt if none).
std::optional<double> mean_cad_alignment_iou(std::span<const Detection> detections,
                                             std::span<const GroundTruthObject> truths, const CadRegistry& cads,
                                             const DatasetManifest& manifest);

std::string cnt_mode_name(CntMode mode);
CntMode parse_cnt_mode(const std::string& name);

}  // namespace hierpose
