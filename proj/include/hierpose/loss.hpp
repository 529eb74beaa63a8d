#pragma once

#include <vector>

#include "hierpose/model.hpp"

namespace hierpose {

/// Per-layer task losses. The sub-category loss of sub-category s is
/// delta2_base / K_s with K_s its training-instance count.
struct LossSpec {
  double delta1 = 0.1;
  double delta2_base = 0.3;
  double delta3 = 0.1;
  std::vector<int> subcat_counts;  ///< empty: K = 1 for every sub-category

  [[nodiscard]] double delta2(int s) const;
  void validate() const;
};

/// Delta(truth, y): each layer present in the hierarchy adds its loss when
/// its label is wrong. A background prediction on a positive, or any
/// foreground prediction on a negative, is wrong on every layer (the
/// sub-category term uses the annotated, respectively predicted, class).
double task_loss(const LabelAssignment& truth, const LabelAssignment& y, const HierarchyConfig& config,
                 const LossSpec& losses);

}  // namespace hierpose
