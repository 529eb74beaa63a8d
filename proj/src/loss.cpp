#include "hierpose/loss.hpp"

#include "hierpose/error.hpp"

namespace hierpose {

double LossSpec::delta2(int s) const {
  if (s < 0 || subcat_counts.empty()) return delta2_base;
  if (s >= static_cast<int>(subcat_counts.size())) throw Error("LossSpec: sub-category index out of range");
  const int k = subcat_counts[static_cast<size_t>(s)];
  return k > 0 ? delta2_base / k : delta2_base;
}

void LossSpec::validate() const {
  if (delta1 < 0 || delta2_base < 0 || delta3 < 0) throw Error("LossSpec: losses must be non-negative");
  for (int k : subcat_counts)
    if (k < 0) throw Error("LossSpec: negative sub-category count");
}

double task_loss(const LabelAssignment& truth, const LabelAssignment& y, const HierarchyConfig& config,
                 const LossSpec& losses) {
  const int L = config.layers;
  if (!truth.object && !y.object) return 0.0;
  if (truth.object != y.object) {
    // Wrong on every layer.
    const int s = truth.object ? truth.s[0] : y.s[0];
    double d = losses.delta1;
    if (L >= 2) d += losses.delta2(s);
    if (L >= 3) d += losses.delta3;
    return d;
  }
  double d = 0.0;
  if (y.v[0] != truth.v[0]) d += losses.delta1;
  if (L >= 2 && y.s[0] != truth.s[0]) d += losses.delta2(truth.s[0]);
  if (L >= 3 && y.f != truth.f) d += losses.delta3;
  return d;
}

}  // namespace hierpose
