#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hierpose/inference.hpp"
#include "hierpose/loss.hpp"
#include "hierpose/potentials.hpp"

namespace hierpose {

/// One 1-slack cutting plane: <w, g> >= loss - xi.
struct Constraint {
  std::vector<double> g;
  double loss = 0.0;
};

struct QpSolution {
  std::vector<double> w;
  double xi = 0.0;
  std::vector<double> alpha;  ///< dual multipliers, sum <= C
  double primal = 0.0;
  double dual = 0.0;
  [[nodiscard]] double gap() const { return primal - dual; }
  int iterations = 0;
};

/// Solves  min 1/2 |w|^2 + C xi  s.t. <w, g_j> >= L_j - xi, xi >= 0
/// through its dual  max sum a_j L_j - 1/2 |sum a_j g_j|^2, a >= 0, sum a <= C
/// by pairwise coordinate ascent until the duality gap is <= tol.
/// `warm_start` may hold multipliers of a prefix of the constraints.
QpSolution solve_qp(std::span<const Constraint> constraints, double C, double tol = 1e-8,
                    std::span<const double> warm_start = {}, int max_iter = 1000000);

struct TrainingSample {
  PotentialBundle bundle;
  LabelAssignment truth;  ///< background for negatives
};

struct CuttingPlaneState {
  std::vector<Constraint> constraints;
  WeightVector w;
  double xi = 0.0;
  int iteration = 0;
  std::vector<double> dual_trace;
  std::vector<double> violation_trace;
  std::vector<double> alpha;
};

struct SsvmOptions {
  double C = 1.0;
  double epsilon = 1e-3;
  int max_iter = 200;
  LossSpec losses;
  int workers = 1;
  double qp_tol = 1e-8;
};

struct SsvmResult {
  WeightVector w;
  CuttingPlaneState state;
  bool converged = false;
};

/// psi(x_i, truth_i) - psi(x_i, y) with frozen coordinates zeroed, added
/// into `out` with the given scale.
void accumulate_margin_feature(std::span<double> out, double scale, const TrainingSample& sample,
                               const LabelAssignment& y, const WeightLayout& layout,
                               std::span<const double> learnable);

/// The 1-slack constraint of the most violating labels at the current w:
/// g = mean_i dpsi_i, loss = mean_i Delta_i.
Constraint most_violated_constraint(std::span<const TrainingSample> samples, const WeightVector& w,
                                    const HierarchyConfig& config, const LossSpec& losses, int workers = 1);

/// 1-slack margin-rescaling cutting-plane training. Stops when the most
/// violated constraint exceeds the current slack by at most epsilon, or after
/// max_iter iterations (converged = false).
SsvmResult train_ssvm(std::span<const TrainingSample> samples, const HierarchyConfig& config,
                      const WeightLayout& layout, const SsvmOptions& options);

struct LogisticOptions {
  double lambda = 1e-4;
  double grad_tol = 1e-6;
  int max_iter = 200000;
};

/// Objective (mean log-loss + lambda/2 |w|^2, bias unregularized) and its
/// gradient, weights packed as [w..., bias].
double logistic_objective(std::span<const std::vector<double>> positives,
                          std::span<const std::vector<double>> negatives, std::span<const double> params,
                          double lambda, std::vector<double>* gradient = nullptr);

/// L2-regularized logistic regression by gradient descent with backtracking.
LogisticDetector train_detector(std::span<const std::vector<double>> positives,
                                std::span<const std::vector<double>> negatives,
                                const LogisticOptions& options = {});

}  // namespace hierpose
