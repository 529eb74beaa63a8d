#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hierpose/image.hpp"
#include "hierpose/model.hpp"
#include "hierpose/rng.hpp"

namespace hierpose {

/// Center angle of azimuth bin `bin` (0-based); bin 0 is centered on 0.
double bin_center(int bin, int bins);
/// Bin whose sector [center - pi/m, center + pi/m) contains the azimuth.
int azimuth_bin(double azimuth, int bins);
/// Wraps an angle into [0, 2pi).
double wrap_angle(double a);
/// Absolute circular difference, in [0, pi].
double circular_distance(double a, double b);

struct DistanceRecord {
  double width = 0.0;
  double height = 0.0;
  double distance = 0.0;
};

/// Box sizes and camera distances of annotated training instances.
struct DistanceReference {
  std::vector<DistanceRecord> records;
  void validate() const;
};

/// Relative sampling weights exp(-(|dw| + |dh|) / L), L = max(w, h) of the
/// region. Not normalized.
std::vector<double> distance_weights(const DistanceReference& refs, const Rect& region);

/// Draws reference distances proportionally to distance_weights.
class DistanceSampler {
public:
  DistanceSampler(const DistanceReference& refs, const Rect& region);
  [[nodiscard]] double draw(CounterRng& rng) const;
  /// Index of the highest-weight record (lowest index on ties).
  [[nodiscard]] size_t mode_index() const { return mode_; }
  [[nodiscard]] double mode_distance() const;

private:
  const DistanceReference* refs_;
  std::vector<double> cumulative_;
  size_t mode_ = 0;
};

struct ParticleSet {
  std::vector<ContinuousViewpoint> particles;
  uint64_t seed = 0;
  int source_bin = 0;
};

/// Continuous viewpoints around discrete bin `bin`. Per-axis draws are
/// combined as a Cartesian product in (azimuth, elevation, distance, occ)
/// order; the first draw on each axis is the anchor (bin center, mean
/// elevation, highest-weight distance, zero shift), so particle 0 is the
/// discrete hypothesis. With `anchor_only` only particle 0 is produced.
ParticleSet sample_particles(int bin, const Rect& region, const DistanceReference& refs,
                             const HierarchyConfig& config, uint64_t seed, bool anchor_only = false);

/// sigma_a = one third of an azimuth section; elevation mean and sample
/// standard deviation from training elevations; occlusion fraction 0.15.
SamplingSigmas default_sigmas(int bins, std::span<const double> training_elevations);

/// Per-axis spread of the occlusion shift for a region, in pixels.
double occlusion_sigma(const SamplingSigmas& sigmas, const Rect& region);

}  // namespace hierpose
