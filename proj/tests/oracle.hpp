#pragma once

#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "hierpose/inference.hpp"
#include "hierpose/learning.hpp"
#include "hierpose/model.hpp"
#include "support.hpp"

namespace testing {

struct NaiveResult {
  hierpose::LabelAssignment assignment;
  double energy = 0.0;
  double loss = 0.0;
};

/// Loss written out per case: background vs object is wrong everywhere.
inline double naive_loss(const hierpose::LabelAssignment& t, const hierpose::LabelAssignment& y,
                         const hierpose::HierarchyConfig& c, const hierpose::LossSpec& L) {
  auto d2 = [&](int s) {
    if (L.subcat_counts.empty() || s < 0) return L.delta2_base;
    const int k = L.subcat_counts[size_t(s)];
    return k > 0 ? L.delta2_base / k : L.delta2_base;
  };
  if (!t.object && !y.object) return 0.0;
  double out = 0.0;
  const bool flip = t.object != y.object;
  const int s_ref = t.object ? t.s[0] : y.s[0];
  if (flip || t.v[0] != y.v[0]) out += L.delta1;
  if (c.layers >= 2 && (flip || t.s[0] != y.s[0])) out += d2(s_ref);
  if (c.layers >= 3 && (flip || t.f != y.f)) out += L.delta3;
  return out;
}

/// Scans every raw label tuple (including inconsistent ones), keeps the
/// valid assignments and scores them through <w, psi>. With `truth` the
/// score is energy + loss. Ties keep the first valid tuple that attains the
/// maximum, background first.
inline NaiveResult naive_map(const hierpose::PotentialBundle& b, const hierpose::WeightVector& w,
                             const hierpose::HierarchyConfig& c,
                             const std::optional<hierpose::LabelAssignment>& truth = std::nullopt,
                             const hierpose::LossSpec& losses = {}) {
  using hierpose::kBackground;
  using hierpose::LabelAssignment;
  NaiveResult best;
  best.assignment = LabelAssignment::background();
  best.loss = truth ? naive_loss(*truth, best.assignment, c, losses) : 0.0;
  double best_score = best.loss;
  const int m = c.azimuth_bins, n = c.subcategory_count(), P = c.finer_count();
  auto range = [](int layer_present, int count) {
    std::vector<int> r{kBackground};
    if (layer_present)
      for (int i = 0; i < count; ++i) r.push_back(i);
    return r;
  };
  for (int v1 : range(1, m))
    for (int v2 : range(c.layers >= 2, m))
      for (int v3 : range(c.layers >= 3, m))
        for (int s2 : range(c.layers >= 2, n))
          for (int s3 : range(c.layers >= 3, n))
            for (int f : range(c.layers >= 3, P)) {
              LabelAssignment a;
              a.object = true;
              a.v = {v1, v2, v3};
              a.s = {s2, s3};
              a.f = f;
              if (hierpose::validate_assignment(a, c)) continue;
              const auto psi = hierpose::joint_feature_map(w.layout, b.features, a, b.cnt_values(a));
              const double e = hierpose::dot(w.values, psi);
              const double loss = truth ? naive_loss(*truth, a, c, losses) : 0.0;
              if (e + loss > best_score) {
                best_score = e + loss;
                best = {a, e, loss};
              }
            }
  return best;
}

inline bool same_labels(const hierpose::LabelAssignment& a, const hierpose::LabelAssignment& b) {
  return a.object == b.object && a.v == b.v && a.s == b.s && a.f == b.f;
}

struct OracleStats {
  int instances = 0;
  int map_mismatch = 0;
  int aug_mismatch = 0;
  double max_energy_diff = 0.0;
  int foreground = 0;
};

/// Random small instances (m=4, n=2, p=2, 12-particle cnt values) checked
/// against the naive enumerator for MAP and loss-augmented inference.
inline OracleStats run_oracle(int instances, uint64_t seed) {
  std::mt19937_64 gen(seed);
  OracleStats st;
  const hierpose::FeatureDims dims{10, 4};
  for (int t = 0; t < instances; ++t) {
    const int layers = 1 + t % 3;
    const auto c = small_config(layers, 4, 2, 2);
    const hierpose::WeightLayout layout(c, dims);
    const auto b = random_bundle(c, dims, gen, 12);
    const auto w = random_weights(layout, gen, 0.3);
    hierpose::LossSpec losses;
    if (t % 2) losses.subcat_counts = {int(1 + gen() % 5), int(1 + gen() % 5)};
    const auto cands = hierpose::enumerate_assignments(c);
    const auto truth = cands[gen() % cands.size()];

    const auto fast = hierpose::infer(b, w, c);
    const auto slow = naive_map(b, w, c);
    if (!same_labels(fast.assignment, slow.assignment)) ++st.map_mismatch;
    st.max_energy_diff = std::max(st.max_energy_diff, std::fabs(fast.energy - slow.energy));
    st.foreground += fast.assignment.object;

    const auto aug = hierpose::loss_augmented_infer(b, truth, w, c, losses);
    const auto aug_slow = naive_map(b, w, c, truth, losses);
    if (!same_labels(aug.assignment, aug_slow.assignment)) ++st.aug_mismatch;
    st.max_energy_diff = std::max(st.max_energy_diff, std::fabs(aug.energy - aug_slow.energy));
    st.max_energy_diff = std::max(st.max_energy_diff, std::fabs(aug.loss - aug_slow.loss));
    ++st.instances;
  }
  return st;
}

struct ToyProblem {
  hierpose::HierarchyConfig config;
  hierpose::WeightLayout layout;
  std::vector<hierpose::TrainingSample> samples;
};

/// Two positives and two negatives over m=4, n=2, p=2.
inline ToyProblem toy_problem(uint64_t seed) {
  std::mt19937_64 gen(seed);
  ToyProblem t;
  t.config = small_config(3, 4, 2, 2);
  const hierpose::FeatureDims dims{6, 2};
  t.layout = hierpose::WeightLayout(t.config, dims);
  const hierpose::LabelAssignment truths[4] = {hierpose::LabelAssignment::foreground(3, 1, 0, 1),
                                               hierpose::LabelAssignment::foreground(3, 3, 1, 2),
                                               hierpose::LabelAssignment::background(),
                                               hierpose::LabelAssignment::background()};
  for (const auto& y : truths) t.samples.push_back({random_bundle(t.config, dims, gen, 12), y});
  return t;
}

struct ExhaustiveCheck {
  long constraints = 0;
  double worst_excess = -1e300;  ///< max over label tuples of L - <w, g> - xi
};

/// Enumerates every joint labeling of the samples and evaluates its 1-slack
/// constraint with explicit mean feature differences.
inline ExhaustiveCheck check_all_constraints(const ToyProblem& t, const hierpose::WeightVector& w, double xi,
                                             const hierpose::LossSpec& losses) {
  const auto cands = hierpose::enumerate_assignments(t.config);
  const size_t n = t.samples.size(), K = cands.size(), D = t.layout.size();
  const auto learnable = t.layout.learnable_mask();
  // per-sample, per-label margin features and losses
  std::vector<std::vector<std::vector<double>>> dpsi(n, std::vector<std::vector<double>>(K));
  std::vector<std::vector<double>> loss(n, std::vector<double>(K));
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < K; ++k) {
      dpsi[i][k].assign(D, 0.0);
      hierpose::accumulate_margin_feature(dpsi[i][k], 1.0, t.samples[i], cands[k], t.layout, learnable);
      loss[i][k] = naive_loss(t.samples[i].truth, cands[k], t.config, losses);
    }
  ExhaustiveCheck out;
  std::vector<size_t> idx(n, 0);
  std::vector<double> g(D);
  while (true) {
    std::fill(g.begin(), g.end(), 0.0);
    double L = 0.0;
    for (size_t i = 0; i < n; ++i) {
      for (size_t d = 0; d < D; ++d) g[d] += dpsi[i][idx[i]][d] / double(n);
      L += loss[i][idx[i]] / double(n);
    }
    out.worst_excess = std::max(out.worst_excess, L - hierpose::dot(w.values, g) - xi);
    ++out.constraints;
    size_t pos = 0;
    while (pos < n && ++idx[pos] == K) idx[pos++] = 0;
    if (pos == n) break;
  }
  return out;
}

/// Random constraint sets; returns the largest duality gap reached.
inline double random_qp_gap(int sets, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int s = 0; s < sets; ++s) {
    const int k = 1 + int(gen() % 30), dim = 1 + int(gen() % 20);
    std::vector<hierpose::Constraint> cons(static_cast<size_t>(k));
    for (auto& c : cons) {
      for (int d = 0; d < dim; ++d) c.g.push_back(g(gen));
      c.loss = u(gen);
    }
    const double C = std::pow(10.0, -2.0 + 4.0 * u(gen));
    const auto sol = hierpose::solve_qp(cons, C, 1e-9);
    worst = std::max(worst, sol.gap());
  }
  return worst;
}

}  // namespace testing
