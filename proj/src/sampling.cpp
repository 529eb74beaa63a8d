#include "hierpose/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hierpose/error.hpp"

namespace hierpose {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double wrap_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

double circular_distance(double a, double b) {
  const double d = std::fabs(wrap_angle(a - b));
  return std::min(d, kTwoPi - d);
}

double bin_center(int bin, int bins) { return kTwoPi * bin / bins; }

int azimuth_bin(double azimuth, int bins) {
  const double width = kTwoPi / bins;
  const int b = static_cast<int>(std::floor(wrap_angle(azimuth + 0.5 * width) / width));
  return std::clamp(b, 0, bins - 1);
}

void DistanceReference::validate() const {
  if (records.empty()) throw Error("distance reference is empty");
  for (const auto& r : records)
    if (!(r.distance > 0.0)) throw Error("distance reference: distances must be > 0");
}

std::vector<double> distance_weights(const DistanceReference& refs, const Rect& region) {
  refs.validate();
  if (region.empty()) throw Error("distance_weights: empty region");
  const double L = std::max(region.w, region.h);
  std::vector<double> w;
  w.reserve(refs.records.size());
  for (const auto& r : refs.records)
    w.push_back(std::exp(-(std::fabs(r.width - region.w) + std::fabs(r.height - region.h)) / L));
  return w;
}

DistanceSampler::DistanceSampler(const DistanceReference& refs, const Rect& region) : refs_(&refs) {
  const auto w = distance_weights(refs, region);
  cumulative_.resize(w.size());
  std::partial_sum(w.begin(), w.end(), cumulative_.begin());
  mode_ = static_cast<size_t>(std::max_element(w.begin(), w.end()) - w.begin());
}

double DistanceSampler::draw(CounterRng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return refs_->records[static_cast<size_t>(it - cumulative_.begin())].distance;
}

double DistanceSampler::mode_distance() const { return refs_->records[mode_].distance; }

ParticleSet sample_particles(int bin, const Rect& region, const DistanceReference& refs,
                             const HierarchyConfig& config, uint64_t seed, bool anchor_only) {
  const int m = config.azimuth_bins;
  if (bin < 0 || bin >= m) throw Error("sample_particles: bin " + std::to_string(bin) + " out of range");
  refs.validate();
  const SamplingSigmas& sig = config.sigmas;
  const SampleCounts counts = anchor_only ? SampleCounts{1, 1, 1, 1} : config.sample_counts;

  uint64_t stream = hash_combine(static_cast<uint64_t>(bin), static_cast<uint64_t>(region.x));
  stream = hash_combine(stream, static_cast<uint64_t>(region.y));
  stream = hash_combine(stream, static_cast<uint64_t>(region.w));
  stream = hash_combine(stream, static_cast<uint64_t>(region.h));
  CounterRng rng(seed, stream);

  const double center = bin_center(bin, m);
  std::vector<double> az{center};
  while (static_cast<int>(az.size()) < counts.azimuth) {
    // Truncated at 3 sigma (circular) around the bin center.
    double a = rng.normal(center, sig.azimuth);
    int tries = 0;
    while (circular_distance(a, center) > 3.0 * sig.azimuth && ++tries < 64) a = rng.normal(center, sig.azimuth);
    if (circular_distance(a, center) > 3.0 * sig.azimuth) a = center;
    az.push_back(wrap_angle(a));
  }

  const double half_pi = std::numbers::pi / 2;
  const double mu_e = std::clamp(sig.mean_elevation, 0.0, half_pi);
  std::vector<double> el{mu_e};
  while (static_cast<int>(el.size()) < counts.elevation)
    el.push_back(std::clamp(rng.normal(sig.mean_elevation, sig.elevation), 0.0, half_pi));

  const DistanceSampler dist_sampler(refs, region);
  std::vector<double> dist{dist_sampler.mode_distance()};
  while (static_cast<int>(dist.size()) < counts.distance) dist.push_back(dist_sampler.draw(rng));

  const double sr = occlusion_sigma(sig, region);
  std::vector<PixelShift> occ{PixelShift{0.0, 0.0}};
  while (static_cast<int>(occ.size()) < counts.occlusion) {
    const double dx = rng.normal(0.0, sr);
    const double dy = rng.normal(0.0, sr);
    occ.push_back({dx, dy});
  }

  ParticleSet set;
  set.seed = seed;
  set.source_bin = bin;
  set.particles.reserve(static_cast<size_t>(counts.total()));
  for (double a : az)
    for (double e : el)
      for (double d : dist)
        for (const auto& o : occ) set.particles.push_back({a, e, d, o});
  return set;
}

SamplingSigmas default_sigmas(int bins, std::span<const double> training_elevations) {
  if (bins < 1) throw Error("default_sigmas: bins must be positive");
  SamplingSigmas s;
  s.azimuth = (kTwoPi / bins) / 3.0;
  if (!training_elevations.empty()) {
    const double n = static_cast<double>(training_elevations.size());
    const double mean = std::accumulate(training_elevations.begin(), training_elevations.end(), 0.0) / n;
    double var = 0.0;
    for (double e : training_elevations) var += (e - mean) * (e - mean);
    s.mean_elevation = mean;
    s.elevation = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  }
  s.occlusion_fraction = 0.15;
  return s;
}

double occlusion_sigma(const SamplingSigmas& sigmas, const Rect& region) {
  return sigmas.occlusion_fraction * std::max(region.w, region.h);
}

}  // namespace hierpose
