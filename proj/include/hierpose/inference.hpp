#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierpose/loss.hpp"
#include "hierpose/potentials.hpp"

namespace hierpose {

struct Detection {
  std::string image_id;
  Rect region;
  LabelAssignment assignment;
  double energy = 0.0;
  EnergyBreakdown breakdown;
  int azimuth_bins = 0;

  /// Deepest continuous viewpoint; a one-layer model only knows its bin, so
  /// the bin center is reported with zero elevation and unit distance.
  [[nodiscard]] std::optional<ContinuousViewpoint> viewpoint() const;
};

/// All candidates in search order: background first, then by viewpoint,
/// sub-category and finer-sub-category (consistent assignments only).
std::vector<LabelAssignment> enumerate_assignments(const HierarchyConfig& config);

/// Exhaustive MAP over consistent assignments; ties go to the earliest
/// candidate, so an all-zero model returns background.
Detection infer(const PotentialBundle& bundle, const WeightVector& w, const HierarchyConfig& config);

/// Computes the bundle for (image, region) and runs infer on it.
Detection infer(const ImageRef& image, const Rect& region, const WeightVector& w, const BundleContext& ctx);

struct AugmentedResult {
  LabelAssignment assignment;
  double energy = 0.0;
  double loss = 0.0;
  [[nodiscard]] double score() const { return energy + loss; }
};

/// argmax_y E(x, y) + Delta(truth, y) over the same candidates as infer.
AugmentedResult loss_augmented_infer(const PotentialBundle& bundle, const LabelAssignment& truth,
                                     const WeightVector& w, const HierarchyConfig& config,
                                     const LossSpec& losses);

/// Greedy non-maximum suppression; returns kept indices by descending score.
std::vector<size_t> greedy_nms(std::span<const Rect> boxes, std::span<const double> scores, double overlap);

/// Runs infer on each proposal, drops background results, applies greedy NMS
/// at `nms_overlap` IoU and sorts by energy (descending).
std::vector<Detection> detect_image(const ImageRef& image, std::span<const Rect> proposals,
                                    const WeightVector& w, const BundleContext& ctx, double nms_overlap = 0.5,
                                    int workers = 1);

}  // namespace hierpose
