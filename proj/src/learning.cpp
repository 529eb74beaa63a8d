#include "hierpose/learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hierpose/error.hpp"
#include "hierpose/parallel.hpp"

namespace hierpose {

namespace {

struct DualState {
  std::vector<double> alpha;  // index 0 is the slack multiplier (g = 0, L = 0)
  std::vector<double> grad;   // L_j - (K alpha)_j
};

double gram(const std::vector<std::vector<double>>& K, size_t i, size_t j) {
  if (i == 0 || j == 0) return 0.0;
  return K[i - 1][j - 1];
}

void recompute_gradient(DualState& s, std::span<const Constraint> cons, const std::vector<std::vector<double>>& K) {
  const size_t n = s.alpha.size();
  s.grad.assign(n, 0.0);
  for (size_t i = 1; i < n; ++i) {
    double ka = 0.0;
    for (size_t j = 1; j < n; ++j) ka += K[i - 1][j - 1] * s.alpha[j];
    s.grad[i] = cons[i - 1].loss - ka;
  }
}

double duality_gap(const DualState& s, double C) {
  double gmax = 0.0, weighted = 0.0;
  for (size_t i = 0; i < s.alpha.size(); ++i) {
    gmax = std::max(gmax, s.grad[i]);
    weighted += s.alpha[i] * s.grad[i];
  }
  return C * gmax - weighted;
}

}  // namespace

QpSolution solve_qp(std::span<const Constraint> constraints, double C, double tol,
                    std::span<const double> warm_start, int max_iter) {
  if (!(C > 0.0)) throw Error("solve_qp: C must be positive");
  QpSolution sol;
  const size_t k = constraints.size();
  if (k == 0) return sol;
  const size_t dim = constraints[0].g.size();
  for (const auto& c : constraints)
    if (c.g.size() != dim) throw Error("solve_qp: constraint dimension mismatch");

  std::vector<std::vector<double>> K(k, std::vector<double>(k));
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j <= i; ++j) K[i][j] = K[j][i] = dot(constraints[i].g, constraints[j].g);

  DualState s;
  s.alpha.assign(k + 1, 0.0);
  if (warm_start.size() > k) throw Error("solve_qp: warm start longer than constraint list");
  double used = 0.0;
  for (size_t i = 0; i < warm_start.size(); ++i) {
    s.alpha[i + 1] = std::max(0.0, warm_start[i]);
    used += s.alpha[i + 1];
  }
  if (used > C) {
    for (size_t i = 1; i <= k; ++i) s.alpha[i] *= C / used;
    used = C;
  }
  s.alpha[0] = C - used;
  recompute_gradient(s, constraints, K);

  int it = 0;
  for (; it < max_iter; ++it) {
    if (it % 256 == 0) recompute_gradient(s, constraints, K);
    if (duality_gap(s, C) <= tol) {
      recompute_gradient(s, constraints, K);
      if (duality_gap(s, C) <= tol) break;
    }
    // Maximal violating pair: move mass from the worst active multiplier to
    // the best direction.
    size_t up = 0, down = 0;
    double gup = -std::numeric_limits<double>::infinity();
    double gdown = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i <= k; ++i) {
      if (s.grad[i] > gup) {
        gup = s.grad[i];
        up = i;
      }
      if (s.alpha[i] > 0.0 && s.grad[i] < gdown) {
        gdown = s.grad[i];
        down = i;
      }
    }
    if (up == down || gup - gdown <= 0.0) break;
    const double eta = gram(K, up, up) + gram(K, down, down) - 2.0 * gram(K, up, down);
    double delta = eta > 1e-300 ? (gup - gdown) / eta : s.alpha[down];
    delta = std::min(delta, s.alpha[down]);
    if (delta <= 0.0) break;
    s.alpha[up] += delta;
    s.alpha[down] -= delta;
    if (s.alpha[down] < 1e-300) s.alpha[down] = 0.0;
    for (size_t i = 1; i <= k; ++i) s.grad[i] -= delta * (gram(K, i, up) - gram(K, i, down));
  }
  recompute_gradient(s, constraints, K);
  sol.iterations = it;

  sol.alpha.assign(s.alpha.begin() + 1, s.alpha.end());
  sol.w.assign(dim, 0.0);
  for (size_t i = 0; i < k; ++i) {
    if (sol.alpha[i] == 0.0) continue;
    for (size_t d = 0; d < dim; ++d) sol.w[d] += sol.alpha[i] * constraints[i].g[d];
  }
  const double wnorm2 = dot(sol.w, sol.w);
  double xi = 0.0, lin = 0.0;
  for (size_t i = 0; i < k; ++i) {
    xi = std::max(xi, constraints[i].loss - dot(sol.w, constraints[i].g));
    lin += sol.alpha[i] * constraints[i].loss;
  }
  sol.xi = xi;
  sol.primal = 0.5 * wnorm2 + C * xi;
  sol.dual = lin - 0.5 * wnorm2;
  return sol;
}

void accumulate_margin_feature(std::span<double> out, double scale, const TrainingSample& sample,
                               const LabelAssignment& y, const WeightLayout& layout,
                               std::span<const double> learnable) {
  accumulate_joint_feature(out, scale, layout, sample.bundle.features, sample.truth,
                           sample.bundle.cnt_values(sample.truth));
  accumulate_joint_feature(out, -scale, layout, sample.bundle.features, y, sample.bundle.cnt_values(y));
  for (size_t i = 0; i < out.size(); ++i)
    if (learnable[i] == 0.0) out[i] = 0.0;
}

Constraint most_violated_constraint(std::span<const TrainingSample> samples, const WeightVector& w,
                                    const HierarchyConfig& config, const LossSpec& losses, int workers) {
  if (samples.empty()) throw Error("most_violated_constraint: no samples");
  std::vector<AugmentedResult> worst(samples.size());
  parallel_for(samples.size(), workers, [&](size_t i) {
    worst[i] = loss_augmented_infer(samples[i].bundle, samples[i].truth, w, config, losses);
  });
  const auto learnable = w.layout.learnable_mask();
  const double scale = 1.0 / static_cast<double>(samples.size());
  Constraint c;
  c.g.assign(w.layout.size(), 0.0);
  for (size_t i = 0; i < samples.size(); ++i) {
    accumulate_joint_feature(c.g, scale, w.layout, samples[i].bundle.features, samples[i].truth,
                             samples[i].bundle.cnt_values(samples[i].truth));
    accumulate_joint_feature(c.g, -scale, w.layout, samples[i].bundle.features, worst[i].assignment,
                             samples[i].bundle.cnt_values(worst[i].assignment));
    c.loss += scale * worst[i].loss;
  }
  for (size_t i = 0; i < c.g.size(); ++i)
    if (learnable[i] == 0.0) c.g[i] = 0.0;
  return c;
}

SsvmResult train_ssvm(std::span<const TrainingSample> samples, const HierarchyConfig& config,
                      const WeightLayout& layout, const SsvmOptions& options) {
  options.losses.validate();
  if (samples.empty()) throw Error("train_ssvm: no training samples");
  const bool has_pos = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return s.truth.object; });
  const bool has_neg = std::any_of(samples.begin(), samples.end(), [](const auto& s) { return !s.truth.object; });
  if (!has_pos || !has_neg) throw Error("train_ssvm: need at least one positive and one negative example");
  for (const auto& s : samples)
    if (auto bad = validate_assignment(s.truth, config)) throw Error("train_ssvm: ground truth violates " + *bad);

  SsvmResult result;
  CuttingPlaneState& st = result.state;
  st.w = WeightVector(layout);
  for (st.iteration = 1; st.iteration <= options.max_iter; ++st.iteration) {
    Constraint c = most_violated_constraint(samples, st.w, config, options.losses, options.workers);
    const double violation = c.loss - dot(st.w.values, c.g) - st.xi;
    st.violation_trace.push_back(violation);
    if (violation <= options.epsilon) {
      result.converged = true;
      break;
    }
    st.constraints.push_back(std::move(c));
    const QpSolution qp = solve_qp(st.constraints, options.C, options.qp_tol, st.alpha);
    st.alpha = qp.alpha;
    st.w.values = qp.w;
    st.xi = qp.xi;
    st.dual_trace.push_back(qp.dual);
  }
  if (st.iteration > options.max_iter) st.iteration = options.max_iter;
  result.w = st.w;
  return result;
}

// ---------------------------------------------------------------------------

double logistic_objective(std::span<const std::vector<double>> positives,
                          std::span<const std::vector<double>> negatives, std::span<const double> params,
                          double lambda, std::vector<double>* gradient) {
  const size_t dim = params.size() - 1;
  const double n = static_cast<double>(positives.size() + negatives.size());
  if (gradient) gradient->assign(params.size(), 0.0);
  double obj = 0.0;
  auto visit = [&](const std::vector<double>& x, double label) {
    if (x.size() != dim) throw Error("logistic: feature dimension mismatch");
    double z = params[dim];
    for (size_t i = 0; i < dim; ++i) z += params[i] * x[i];
    const double m = label * z;
    // log(1 + exp(-m)), stable for both signs
    obj += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    if (gradient) {
      const double sig = m > 0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
      const double coef = -label * sig / n;
      for (size_t i = 0; i < dim; ++i) (*gradient)[i] += coef * x[i];
      (*gradient)[dim] += coef;
    }
  };
  for (const auto& x : positives) visit(x, 1.0);
  for (const auto& x : negatives) visit(x, -1.0);
  obj /= n;
  double reg = 0.0;
  for (size_t i = 0; i < dim; ++i) reg += params[i] * params[i];
  obj += 0.5 * lambda * reg;
  if (gradient)
    for (size_t i = 0; i < dim; ++i) (*gradient)[i] += lambda * params[i];
  return obj;
}

LogisticDetector train_detector(std::span<const std::vector<double>> positives,
                                std::span<const std::vector<double>> negatives, const LogisticOptions& options) {
  if (positives.empty() || negatives.empty()) throw Error("train_detector: both classes must be non-empty");
  const size_t dim = positives.front().size();
  std::vector<double> params(dim + 1, 0.0), grad, trial(dim + 1), trial_grad;
  double obj = logistic_objective(positives, negatives, params, options.lambda, &grad);
  double step = 1.0;
  for (int it = 0; it < options.max_iter; ++it) {
    const double gnorm2 = dot(grad, grad);
    if (std::sqrt(gnorm2) <= options.grad_tol) break;
    // Armijo backtracking; the step grows again after each accepted move.
    step *= 2.0;
    while (true) {
      for (size_t i = 0; i <= dim; ++i) trial[i] = params[i] - step * grad[i];
      const double t = logistic_objective(positives, negatives, trial, options.lambda, &trial_grad);
      if (t <= obj - 0.5 * step * gnorm2 || step < 1e-12) {
        params.swap(trial);
        grad.swap(trial_grad);
        obj = t;
        break;
      }
      step *= 0.5;
    }
  }
  const double bias = params.back();
  params.pop_back();
  return LogisticDetector(std::move(params), bias);
}

}  // namespace hierpose
