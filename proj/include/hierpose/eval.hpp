#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierpose/inference.hpp"

namespace hierpose {

/// Which label components a bbox-matched detection must get right.
struct MatchCriterion {
  bool viewpoint = false;
  int bins = 8;
  bool subcat = false;
  bool finer = false;

  static MatchCriterion bbox() { return {}; }
  static MatchCriterion azimuth(int bins) { return {true, bins, false, false}; }
  static MatchCriterion subcategory() { return {false, 8, true, false}; }
  static MatchCriterion subcat_viewpoint(int bins) { return {true, bins, true, false}; }
  static MatchCriterion all(int bins) { return {true, bins, true, true}; }
  void validate() const;
};

struct GroundTruthObject {
  std::string image_id;
  Rect box;
  ContinuousViewpoint viewpoint;
  int subcat = kBackground;
  int finer = kBackground;
};

struct PrAp {
  std::vector<double> recall;
  std::vector<double> precision;
  std::optional<double> ap;  ///< absent when there is no ground truth
  int true_positives = 0;
  int false_positives = 0;
  int ground_truths = 0;
};

/// PASCAL-style greedy matching in descending energy order. Each detection
/// takes its best-overlapping ground truth in the same image; it is matched
/// when the IoU exceeds `overlap` and that ground truth is still free.
/// Returns, per detection (input order), the matched ground truth or -1.
std::vector<int> match_detections(std::span<const Detection> detections,
                                  std::span<const GroundTruthObject> truths, double overlap = 0.5);

/// Whether the labels of `det` satisfy `criterion` against `truth`.
bool labels_correct(const Detection& det, const GroundTruthObject& truth, const MatchCriterion& criterion);

/// Precision/recall curve and all-point interpolated AP.
PrAp evaluate_ap(std::span<const Detection> detections, std::span<const GroundTruthObject> truths,
                 const MatchCriterion& criterion, double overlap = 0.5);

/// All-point interpolated area under a PR curve.
double average_precision(std::span<const double> recall, std::span<const double> precision);

struct PoseRmse {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  double distance = 0.0;
};

/// (predicted, true) pairs; azimuth error is circular.
PoseRmse pose_rmse(std::span<const std::pair<ContinuousViewpoint, ContinuousViewpoint>> pairs);

/// Silhouette of `cad` in image coordinates for a viewpoint anchored at
/// `region`: the projection center sits at the region center plus `vp.occ`.
SilhouetteMask render_in_image(const CadModel& cad, const ContinuousViewpoint& vp, const Rect& region,
                               int image_width, int image_height);

enum class SegmentationMode { CadAlignment, Mask2d };

struct SegmentationAssets {
  const CadRegistry* cads = nullptr;
  const GroundTruthObject* truth = nullptr;  ///< needed for CadAlignment
  const SilhouetteMask* mask = nullptr;      ///< needed for Mask2d
  int image_width = 0;
  int image_height = 0;
};

/// Estimated CAD (finer model, or merged model for a 2-layer result) at the
/// estimated viewpoint against the reference silhouette.
double segmentation_iou(const Detection& det, SegmentationMode mode, const SegmentationAssets& assets);

/// rows = true sub-category, columns = predicted.
using ConfusionMatrix = std::vector<std::vector<long>>;
ConfusionMatrix confusion_matrix(std::span<const std::pair<int, int>> true_pred, int n);

/// Summary over one detection set. Accuracies are over bbox-matched
/// detections.
struct EvalReport {
  struct Column {
    std::string name;
    MatchCriterion criterion;
    PrAp result;
  };
  std::vector<Column> columns;  ///< Bounding Box, All, Sub-category & Viewpoint, Sub-category, Viewpoint
  std::vector<std::pair<int, PrAp>> viewpoint_by_bins;  ///< 4, 8, 16, 24
  int matched = 0;
  double azimuth_accuracy = 0.0;
  double subcat_accuracy = 0.0;
  double finer_accuracy = 0.0;
  std::optional<PoseRmse> rmse;
  ConfusionMatrix confusion;

  [[nodiscard]] const Column& column(const std::string& name) const;
};

EvalReport evaluate(std::span<const Detection> detections, std::span<const GroundTruthObject> truths,
                    int azimuth_bins, int subcategories, double overlap = 0.5);

/// Plain-text table.
void write_report(std::ostream& out, const EvalReport& report, std::span<const std::string> subcat_names = {});
/// criterion,recall,precision rows for every curve.
void write_pr_csv(std::ostream& out, const EvalReport& report);

}  // namespace hierpose
