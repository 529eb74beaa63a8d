#include "hierpose/inference.hpp"

#include <algorithm>
#include <numeric>

#include "hierpose/error.hpp"
#include "hierpose/parallel.hpp"

namespace hierpose {

std::optional<ContinuousViewpoint> Detection::viewpoint() const {
  if (!assignment.object) return std::nullopt;
  if (const auto& cv = assignment.deepest_viewpoint()) return cv;
  if (azimuth_bins <= 0) return std::nullopt;
  return ContinuousViewpoint{bin_center(assignment.v[0], azimuth_bins), 0.0, 1.0, {}};
}

std::vector<LabelAssignment> enumerate_assignments(const HierarchyConfig& config) {
  config.validate();
  std::vector<LabelAssignment> out{LabelAssignment::background()};
  for (int v = 0; v < config.azimuth_bins; ++v) {
    if (config.layers == 1) {
      out.push_back(LabelAssignment::foreground(1, v));
      continue;
    }
    for (int s = 0; s < config.subcategory_count(); ++s) {
      if (config.layers == 2) {
        out.push_back(LabelAssignment::foreground(2, v, s));
        continue;
      }
      for (int f : config.finer_of(s)) out.push_back(LabelAssignment::foreground(3, v, s, f));
    }
  }
  return out;
}

namespace {

// Per-label term values; candidate energies are summed in the same order as
// total_energy so both routes agree bit for bit.
class CandidateScorer {
public:
  CandidateScorer(const PotentialBundle& b, const WeightVector& w, const HierarchyConfig& cfg)
      : bundle_(b), w_(w), layout_(w.layout), cfg_(cfg) {
    const FeatureDims d = layout_.dims();
    const auto& x = b.features;
    if (static_cast<int>(x.hog.size()) != d.hog || static_cast<int>(x.app.values.size()) != d.app)
      throw Error("infer: feature dimensions do not match the weights");
    if (layout_.layers() != cfg.layers) throw Error("infer: weight layers do not match the configuration");
    det_ = w.values[layout_.det()] * x.det;
    const int m = cfg.azimuth_bins;
    const int slots[3] = {m, m * (cfg.layers >= 2 ? cfg.subcategory_count() : 0),
                          m * (cfg.layers >= 3 ? cfg.finer_count() : 0)};
    for (int l = 1; l <= cfg.layers; ++l) {
      glb_[l - 1].resize(size_t(slots[l - 1]));
      loc_[l - 1].resize(size_t(slots[l - 1]));
      for (int slot = 0; slot < slots[l - 1]; ++slot) {
        const double* g = w.values.data() + layout_.glb(l, slot);
        const double* a = w.values.data() + layout_.loc(l, slot);
        double sg = 0.0, sa = 0.0;
        for (int i = 0; i < d.hog; ++i) sg += g[i] * x.hog.values[i];
        for (int i = 0; i < d.app; ++i) sa += a[i] * x.app.values[i];
        glb_[l - 1][size_t(slot)] = sg;
        loc_[l - 1][size_t(slot)] = sa;
      }
    }
    if (layout_.has_block("vw")) {
      const auto& blk = layout_.block("vw");
      consistency_.assign(w.values.begin() + long(blk.offset), w.values.begin() + long(blk.offset + blk.length));
    }
    if (layout_.has_block("sb")) consistency_.push_back(w.values[layout_.block("sb").offset]);
  }

  [[nodiscard]] double energy(const LabelAssignment& a) const {
    if (!a.object) return 0.0;
    double e = 0.0;
    e += det_;
    for (int l = 1; l <= cfg_.layers; ++l) {
      const auto slot = size_t(layout_.slot(l, a));
      e += glb_[l - 1][slot];
      e += loc_[l - 1][slot];
    }
    if (cfg_.layers >= 2) e += w_.values[layout_.cnt(2, a.s[0])] * bundle_.cnt(2, a.v[1], a.s[0]).value;
    if (cfg_.layers >= 3) e += w_.values[layout_.cnt(3, a.f)] * bundle_.cnt(3, a.v[2], a.f).value;
    for (double c : consistency_) e += c;
    return e;
  }

private:
  const PotentialBundle& bundle_;
  const WeightVector& w_;
  const WeightLayout& layout_;
  const HierarchyConfig& cfg_;
  double det_ = 0.0;
  std::vector<double> glb_[3];
  std::vector<double> loc_[3];
  std::vector<double> consistency_;
};

}  // namespace

Detection infer(const PotentialBundle& bundle, const WeightVector& w, const HierarchyConfig& config) {
  const CandidateScorer scorer(bundle, w, config);
  const auto candidates = enumerate_assignments(config);
  size_t best = 0;
  double best_energy = 0.0;
  for (size_t i = 1; i < candidates.size(); ++i) {
    const double e = scorer.energy(candidates[i]);
    if (e > best_energy) {
      best_energy = e;
      best = i;
    }
  }
  Detection det;
  det.assignment = candidates[best];
  bundle.attach_viewpoints(det.assignment);
  det.breakdown = total_energy(bundle, det.assignment, w);
  det.energy = det.breakdown.total;
  det.azimuth_bins = config.azimuth_bins;
  return det;
}

Detection infer(const ImageRef& image, const Rect& region, const WeightVector& w, const BundleContext& ctx) {
  Detection det = infer(build_bundle(image, region, ctx), w, *ctx.config);
  det.image_id = image.id;
  det.region = region;
  return det;
}

AugmentedResult loss_augmented_infer(const PotentialBundle& bundle, const LabelAssignment& truth,
                                     const WeightVector& w, const HierarchyConfig& config,
                                     const LossSpec& losses) {
  if (auto bad = validate_assignment(truth, config)) throw Error("loss_augmented_infer: ground truth violates " + *bad);
  const CandidateScorer scorer(bundle, w, config);
  const auto candidates = enumerate_assignments(config);
  AugmentedResult best;
  best.assignment = candidates[0];
  best.energy = 0.0;
  best.loss = task_loss(truth, candidates[0], config, losses);
  for (size_t i = 1; i < candidates.size(); ++i) {
    const double e = scorer.energy(candidates[i]);
    const double loss = task_loss(truth, candidates[i], config, losses);
    if (e + loss > best.score()) best = {candidates[i], e, loss};
  }
  bundle.attach_viewpoints(best.assignment);
  return best;
}

std::vector<size_t> greedy_nms(std::span<const Rect> boxes, std::span<const double> scores, double overlap) {
  if (boxes.size() != scores.size()) throw Error("greedy_nms: size mismatch");
  std::vector<size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (size_t i : order) {
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (size_t j : order)
      if (!suppressed[j] && j != i && iou(boxes[i], boxes[j]) > overlap) suppressed[j] = true;
  }
  return kept;
}

std::vector<Detection> detect_image(const ImageRef& image, std::span<const Rect> proposals,
                                    const WeightVector& w, const BundleContext& ctx, double nms_overlap,
                                    int workers) {
  std::vector<Detection> all(proposals.size());
  parallel_for(proposals.size(), workers, [&](size_t i) { all[i] = infer(image, proposals[i], w, ctx); });
  std::vector<Detection> fg;
  for (auto& d : all)
    if (d.assignment.object) fg.push_back(std::move(d));
  std::vector<Rect> boxes;
  std::vector<double> scores;
  for (const auto& d : fg) {
    boxes.push_back(d.region);
    scores.push_back(d.energy);
  }
  std::vector<Detection> out;
  for (size_t i : greedy_nms(boxes, scores, nms_overlap)) out.push_back(fg[i]);
  return out;
}

}  // namespace hierpose
