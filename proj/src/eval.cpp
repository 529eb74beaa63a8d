#include "hierpose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "hierpose/error.hpp"
#include "hierpose/sampling.hpp"

namespace hierpose {

void MatchCriterion::validate() const {
  if (viewpoint && bins < 1) throw Error("MatchCriterion: bin count must be positive");
}

namespace {

std::vector<size_t> by_energy(std::span<const Detection> dets) {
  std::vector<size_t> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return dets[a].energy > dets[b].energy; });
  return order;
}

}  // namespace

std::vector<int> match_detections(std::span<const Detection> detections,
                                  std::span<const GroundTruthObject> truths, double overlap) {
  std::map<std::string, std::vector<int>> per_image;
  for (size_t g = 0; g < truths.size(); ++g) per_image[truths[g].image_id].push_back(static_cast<int>(g));
  std::vector<char> taken(truths.size(), 0);
  std::vector<int> match(detections.size(), -1);
  for (size_t d : by_energy(detections)) {
    auto it = per_image.find(detections[d].image_id);
    if (it == per_image.end()) continue;
    int best = -1;
    double best_iou = -1.0;
    for (int g : it->second) {
      const double o = iou(detections[d].region, truths[g].box);
      if (o > best_iou) {
        best_iou = o;
        best = g;
      }
    }
    if (best >= 0 && best_iou > overlap && !taken[best]) {
      taken[best] = 1;
      match[d] = best;
    }
  }
  return match;
}

bool labels_correct(const Detection& det, const GroundTruthObject& truth, const MatchCriterion& c) {
  const auto& a = det.assignment;
  if (!a.object) return false;
  if (c.viewpoint) {
    const auto vp = det.viewpoint();
    if (!vp || azimuth_bin(vp->azimuth, c.bins) != azimuth_bin(truth.viewpoint.azimuth, c.bins)) return false;
  }
  if (c.subcat && (a.subcategory() == kBackground || a.subcategory() != truth.subcat)) return false;
  if (c.finer && (a.f == kBackground || a.f != truth.finer)) return false;
  return true;
}

double average_precision(std::span<const double> recall, std::span<const double> precision) {
  if (recall.size() != precision.size()) throw Error("average_precision: curve length mismatch");
  std::vector<double> mrec{0.0}, mpre{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mpre.insert(mpre.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mpre.push_back(0.0);
  for (size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
  double ap = 0.0;
  for (size_t i = 1; i < mrec.size(); ++i)
    if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
  return ap;
}

PrAp evaluate_ap(std::span<const Detection> detections, std::span<const GroundTruthObject> truths,
                 const MatchCriterion& criterion, double overlap) {
  criterion.validate();
  PrAp out;
  out.ground_truths = static_cast<int>(truths.size());
  const auto match = match_detections(detections, truths, overlap);
  int tp = 0, fp = 0;
  for (size_t d : by_energy(detections)) {
    if (match[d] >= 0 && labels_correct(detections[d], truths[match[d]], criterion))
      ++tp;
    else
      ++fp;
    if (!truths.empty()) {
      out.recall.push_back(double(tp) / truths.size());
      out.precision.push_back(double(tp) / (tp + fp));
    }
  }
  out.true_positives = tp;
  out.false_positives = fp;
  if (!truths.empty()) out.ap = average_precision(out.recall, out.precision);
  return out;
}

PoseRmse pose_rmse(std::span<const std::pair<ContinuousViewpoint, ContinuousViewpoint>> pairs) {
  if (pairs.empty()) throw Error("pose_rmse: no matched pairs");
  constexpr double deg = 180.0 / std::numbers::pi;
  double sa = 0.0, se = 0.0, sd = 0.0;
  for (const auto& [pred, truth] : pairs) {
    const double da = circular_distance(pred.azimuth, truth.azimuth) * deg;
    const double de = (pred.elevation - truth.elevation) * deg;
    const double dd = pred.distance - truth.distance;
    sa += da * da;
    se += de * de;
    sd += dd * dd;
  }
  const double n = static_cast<double>(pairs.size());
  return {std::sqrt(sa / n), std::sqrt(se / n), std::sqrt(sd / n)};
}

SilhouetteMask render_in_image(const CadModel& cad, const ContinuousViewpoint& vp, const Rect& region,
                               int image_width, int image_height) {
  const double focal = default_focal(image_width, image_height);
  const PixelShift c = projection_center(cad, vp.pose(), focal);
  return render_silhouette(cad, vp.pose(), focal, region.center_x() + vp.occ.dx - c.dx,
                           region.center_y() + vp.occ.dy - c.dy, image_width, image_height);
}

double segmentation_iou(const Detection& det, SegmentationMode mode, const SegmentationAssets& assets) {
  if (assets.cads == nullptr) throw Error("segmentation_iou: no CAD registry");
  const auto& a = det.assignment;
  const auto vp = a.deepest_viewpoint();
  if (!a.object || !vp) throw Error("segmentation_iou: detection carries no continuous viewpoint");
  const CadModel* cad = nullptr;
  if (a.f != kBackground) {
    if (a.f >= static_cast<int>(assets.cads->finer.size())) throw Error("segmentation_iou: finer id out of range");
    cad = &assets.cads->finer[a.f];
  } else {
    const int s = a.subcategory();
    if (s < 0 || s >= static_cast<int>(assets.cads->merged.size()))
      throw Error("segmentation_iou: sub-category id out of range");
    cad = &assets.cads->merged[s];
  }
  const SilhouetteMask est = render_in_image(*cad, *vp, det.region, assets.image_width, assets.image_height);
  if (mode == SegmentationMode::Mask2d) {
    if (assets.mask == nullptr) throw Error("segmentation_iou: missing mask for image '" + det.image_id + "'");
    if (assets.mask->width != est.width || assets.mask->height != est.height)
      throw Error("segmentation_iou: mask size does not match the image");
    return mask_iou(est, *assets.mask);
  }
  const GroundTruthObject* t = assets.truth;
  if (t == nullptr) throw Error("segmentation_iou: cad-alignment needs the ground truth");
  if (t->finer < 0 || t->finer >= static_cast<int>(assets.cads->finer.size()))
    throw Error("segmentation_iou: ground-truth finer id out of range");
  const SilhouetteMask ref =
      render_in_image(assets.cads->finer[t->finer], t->viewpoint, t->box, assets.image_width, assets.image_height);
  return mask_iou(est, ref);
}

ConfusionMatrix confusion_matrix(std::span<const std::pair<int, int>> true_pred, int n) {
  if (n < 0) throw Error("confusion_matrix: negative size");
  ConfusionMatrix m(n, std::vector<long>(n, 0));
  for (const auto& [t, p] : true_pred) {
    if (t < 0 || t >= n || p < 0 || p >= n) continue;
    ++m[t][p];
  }
  return m;
}

const EvalReport::Column& EvalReport::column(const std::string& name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  throw Error("EvalReport: no column '" + name + "'");
}

EvalReport evaluate(std::span<const Detection> detections, std::span<const GroundTruthObject> truths,
                    int azimuth_bins, int subcategories, double overlap) {
  EvalReport r;
  const std::pair<const char*, MatchCriterion> cols[] = {
      {"Bounding Box", MatchCriterion::bbox()},
      {"All", MatchCriterion::all(azimuth_bins)},
      {"Sub-category & Viewpoint", MatchCriterion::subcat_viewpoint(azimuth_bins)},
      {"Sub-category", MatchCriterion::subcategory()},
      {"Viewpoint", MatchCriterion::azimuth(azimuth_bins)},
  };
  for (const auto& [name, c] : cols) r.columns.push_back({name, c, evaluate_ap(detections, truths, c, overlap)});
  for (int bins : {4, 8, 16, 24})
    r.viewpoint_by_bins.emplace_back(bins, evaluate_ap(detections, truths, MatchCriterion::azimuth(bins), overlap));

  const auto match = match_detections(detections, truths, overlap);
  int az = 0, sc = 0, fi = 0;
  std::vector<std::pair<ContinuousViewpoint, ContinuousViewpoint>> pairs;
  std::vector<std::pair<int, int>> tp_labels;
  for (size_t d = 0; d < detections.size(); ++d) {
    if (match[d] < 0) continue;
    const auto& det = detections[d];
    const auto& t = truths[match[d]];
    ++r.matched;
    az += labels_correct(det, t, MatchCriterion::azimuth(azimuth_bins));
    sc += labels_correct(det, t, MatchCriterion::subcategory());
    fi += det.assignment.f != kBackground && det.assignment.f == t.finer;
    if (auto vp = det.viewpoint()) pairs.emplace_back(*vp, t.viewpoint);
    tp_labels.emplace_back(t.subcat, det.assignment.subcategory());
  }
  if (r.matched > 0) {
    r.azimuth_accuracy = double(az) / r.matched;
    r.subcat_accuracy = double(sc) / r.matched;
    r.finer_accuracy = double(fi) / r.matched;
  }
  if (!pairs.empty()) r.rmse = pose_rmse(pairs);
  r.confusion = confusion_matrix(tp_labels, subcategories);
  return r;
}

namespace {

std::string fmt_ap(const PrAp& p) {
  if (!p.ap) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *p.ap;
  return s.str();
}

}  // namespace

void write_report(std::ostream& out, const EvalReport& r, std::span<const std::string> names) {
  out << std::left;
  for (const auto& c : r.columns) out << std::setw(26) << c.name;
  out << '\n';
  for (const auto& c : r.columns) out << std::setw(26) << fmt_ap(c.result);
  out << "\n\nviewpoint AP by azimuth bins\n";
  for (const auto& [bins, p] : r.viewpoint_by_bins) out << "  " << std::setw(4) << bins << fmt_ap(p) << '\n';
  out << std::fixed << std::setprecision(4);
  out << "\nmatched boxes       " << r.matched << '\n'
      << "azimuth accuracy    " << r.azimuth_accuracy << '\n'
      << "sub-cat accuracy    " << r.subcat_accuracy << '\n'
      << "finer accuracy      " << r.finer_accuracy << '\n';
  if (r.rmse)
    out << "pose RMSE           azimuth " << r.rmse->azimuth_deg << " deg, elevation " << r.rmse->elevation_deg
        << " deg, distance " << r.rmse->distance << '\n';
  out << "\nconfusion (rows true, columns predicted)\n";
  for (size_t i = 0; i < r.confusion.size(); ++i) {
    out << "  " << std::setw(12) << (i < names.size() ? names[i] : std::to_string(i));
    for (long v : r.confusion[i]) out << ' ' << std::setw(6) << v;
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_pr_csv(std::ostream& out, const EvalReport& r) {
  out << "criterion,recall,precision\n";
  auto dump = [&](const std::string& name, const PrAp& p) {
    for (size_t i = 0; i < p.recall.size(); ++i) out << name << ',' << p.recall[i] << ',' << p.precision[i] << '\n';
  };
  for (const auto& c : r.columns) dump(c.name, c.result);
  for (const auto& [bins, p] : r.viewpoint_by_bins) dump("Viewpoint@" + std::to_string(bins), p);
}

}  // namespace hierpose
