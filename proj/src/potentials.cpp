#include "hierpose/potentials.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hierpose/error.hpp"
#include "hierpose/rng.hpp"

namespace hierpose {

double LogisticDetector::logit(std::span<const double> x) const {
  if (weights_.empty()) return bias_;
  if (x.size() != weights_.size()) throw Error("LogisticDetector: feature dimension mismatch");
  double s = bias_;
  for (size_t i = 0; i < x.size(); ++i) s += weights_[i] * x[i];
  return s;
}

double LogisticDetector::score(const ImageRef&, const Rect&, const AppearanceVector& app) const {
  return logit(app.values);
}

void LogisticDetector::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  auto hex = [](double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
    return std::string(buf, r.ptr);
  };
  out << "logistic " << weights_.size() << '\n' << hex(bias_) << '\n';
  for (double w : weights_) out << hex(w) << '\n';
}

LogisticDetector LogisticDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string tag;
  size_t n = 0;
  if (!(in >> tag >> n) || tag != "logistic") throw Error(path.string() + ": not a logistic detector file");
  auto parse = [&](const std::string& tok) {
    double v = 0.0;
    auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v, std::chars_format::hex);
    if (r.ec != std::errc()) throw Error(path.string() + ": bad number '" + tok + "'");
    return v;
  };
  std::string tok;
  if (!(in >> tok)) throw Error(path.string() + ": missing bias");
  const double bias = parse(tok);
  std::vector<double> w(n);
  for (auto& v : w) {
    if (!(in >> tok)) throw Error(path.string() + ": truncated weights");
    v = parse(tok);
  }
  return LogisticDetector(std::move(w), bias);
}

FileScoreDetector::FileScoreDetector(RegionTable table) : table_(std::move(table)) {
  if (table_.size() > 0 && table_.dim() != 1) throw Error("detector score file must have dim = 1");
}

FileScoreDetector FileScoreDetector::load(const std::filesystem::path& path) {
  return FileScoreDetector(RegionTable::load(path));
}

double FileScoreDetector::score(const ImageRef& image, const Rect& region, const AppearanceVector&) const {
  return table_.at(image.id, region).front();
}

double phi_det(const ImageRef& image, const Rect& region, const Detector& detector,
               const AppearanceVector& app) {
  const double s = detector.score(image, region, app);
  if (!std::isfinite(s)) throw Error("detector '" + detector.id() + "' returned a non-finite score");
  return s;
}

// ---------------------------------------------------------------------------

RegionRenderer::RegionRenderer(int image_width, int image_height, const Rect& region)
    : region_(region), focal_(default_focal(image_width, image_height)) {
  if (region.empty()) throw Error("RegionRenderer: empty region");
}

SilhouetteMask RegionRenderer::operator()(const ContinuousViewpoint& vp, const CadModel& cad) const {
  const int pad_x = std::abs(static_cast<int>(std::lround(vp.occ.dx)));
  const int pad_y = std::abs(static_cast<int>(std::lround(vp.occ.dy)));
  return crop(padded(vp.pose(), cad, pad_x, pad_y), pad_x, pad_y, vp.occ);
}

SilhouetteMask RegionRenderer::padded(const CameraPose& pose, const CadModel& cad, int pad_x, int pad_y) const {
  const PixelShift c = projection_center(cad, pose, focal_);
  return rasterize_padded(cad, pose, region_.w + 2, region_.h + 2, focal_, pad_x, pad_y, {-c.dx, -c.dy});
}

SilhouetteMask RegionRenderer::crop(const SilhouetteMask& padded, int pad_x, int pad_y, PixelShift occ) const {
  return crop_shifted(padded, pad_x, pad_y, static_cast<int>(std::lround(occ.dx)),
                      static_cast<int>(std::lround(occ.dy)), region_.w + 2, region_.h + 2);
}

ContourHogCache::Key ContourHogCache::make_key(const std::string& cad, const ContinuousViewpoint& vp,
                                               const Rect& region, double focal) {
  auto q = [](double v) { return static_cast<int64_t>(std::llround(v * 1e6)); };
  return Key{cad,
             q(vp.azimuth),
             q(vp.elevation),
             q(vp.distance),
             static_cast<int>(std::lround(vp.occ.dx)),
             static_cast<int>(std::lround(vp.occ.dy)),
             region.w,
             region.h,
             q(focal)};
}

size_t ContourHogCache::KeyHash::operator()(const Key& k) const {
  uint64_t h = hash_string(k.cad);
  for (int64_t v : {k.azimuth, k.elevation, k.distance, int64_t(k.occ_x), int64_t(k.occ_y), int64_t(k.w),
                    int64_t(k.h), k.focal})
    h = hash_combine(h, static_cast<uint64_t>(v));
  return static_cast<size_t>(h);
}

HogDescriptor ContourHogCache::get_or_compute(const Key& key, const std::function<HogDescriptor()>& compute) {
  {
    std::lock_guard lock(mutex_);
    auto it = map_.find(key);
    if (it != map_.end()) {
      ++hits_;
      return it->second;
    }
    ++misses_;
  }
  HogDescriptor d = compute();
  std::lock_guard lock(mutex_);
  if (map_.size() >= capacity_) map_.clear();
  map_.emplace(key, d);
  return d;
}

std::optional<HogDescriptor> ContourHogCache::find(const Key& key) {
  std::lock_guard lock(mutex_);
  auto it = map_.find(key);
  if (it == map_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void ContourHogCache::insert(const Key& key, const HogDescriptor& d) {
  std::lock_guard lock(mutex_);
  if (map_.size() >= capacity_) map_.clear();
  map_.emplace(key, d);
}

size_t ContourHogCache::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

size_t ContourHogCache::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

namespace {

/// descriptor(i) returns the contour descriptor of particle i or nullopt
/// when it cannot be rendered.
template <typename DescriptorFn>
CntResult max_alignment(const HogDescriptor& region_hog, const ParticleSet& particles, DescriptorFn&& descriptor,
                        const std::string& failure) {
  if (particles.particles.empty()) throw Error("phi_cnt: empty particle set");
  const double cells = static_cast<double>(region_hog.cells_x) * region_hog.cells_y;
  CntResult best{-std::numeric_limits<double>::infinity(), -1};
  for (size_t i = 0; i < particles.particles.size(); ++i) {
    const std::optional<HogDescriptor> d = descriptor(i);
    if (!d) continue;
    const double value = d->dot(region_hog) / cells;
    if (value > best.value) best = {value, static_cast<int>(i)};
  }
  if (best.argmax < 0) throw Error("phi_cnt: every particle failed to render (" + failure + ")");
  return best;
}

}  // namespace

CntResult phi_cnt(const HogDescriptor& region_hog, const MaskMaker& maker, const Rect& clip,
                  const ParticleSet& particles, const CadModel& cad) {
  std::string failure;
  return max_alignment(
      region_hog, particles,
      [&](size_t i) -> std::optional<HogDescriptor> {
        try {
          return contour_hog(maker(particles.particles[i], cad), clip, kTemplateSize / region_hog.cells_x,
                             region_hog.bins);
        } catch (const Error& e) {
          failure = e.what();
          return std::nullopt;
        }
      },
      failure);
}

CntResult phi_cnt(const HogDescriptor& region_hog, int image_width, int image_height, const Rect& region,
                  const ParticleSet& particles, const CadModel& cad, ContourHogCache* cache) {
  const RegionRenderer renderer(image_width, image_height, region);
  const int cell_px = kTemplateSize / region_hog.cells_x;
  const auto& ps = particles.particles;
  std::vector<std::optional<HogDescriptor>> desc(ps.size());
  std::vector<char> done(ps.size(), 0);
  std::string failure;
  auto key = [&](size_t i) { return ContourHogCache::make_key(cad.id, ps[i], region, renderer.focal()); };
  if (cache != nullptr) {
    for (size_t i = 0; i < ps.size(); ++i) {
      if (auto hit = cache->find(key(i))) {
        desc[i] = std::move(*hit);
        done[i] = 1;
      }
    }
  }
  // Particles differing only in occ share one padded rasterization.
  for (size_t i = 0; i < ps.size(); ++i) {
    if (done[i]) continue;
    std::vector<size_t> group;
    int pad_x = 0, pad_y = 0;
    for (size_t j = i; j < ps.size(); ++j) {
      if (done[j] || ps[j].azimuth != ps[i].azimuth || ps[j].elevation != ps[i].elevation ||
          ps[j].distance != ps[i].distance)
        continue;
      group.push_back(j);
      pad_x = std::max(pad_x, std::abs(static_cast<int>(std::lround(ps[j].occ.dx))));
      pad_y = std::max(pad_y, std::abs(static_cast<int>(std::lround(ps[j].occ.dy))));
    }
    std::optional<SilhouetteMask> canvas;
    try {
      canvas = renderer.padded(ps[i].pose(), cad, pad_x, pad_y);
    } catch (const Error& e) {
      failure = e.what();
    }
    for (size_t j : group) {
      done[j] = 1;
      if (!canvas) continue;
      desc[j] = contour_hog(renderer.crop(*canvas, pad_x, pad_y, ps[j].occ), renderer.clip(), cell_px,
                            region_hog.bins);
      if (cache != nullptr) cache->insert(key(j), *desc[j]);
    }
  }
  return max_alignment(
      region_hog, particles, [&](size_t i) { return desc[i]; }, failure);
}

// ---------------------------------------------------------------------------

const CntEntry& PotentialBundle::cnt(int layer, int v, int id) const {
  if (layer == 2) {
    if (cnt2.empty() || v < 0 || v >= bins || id < 0 || id >= subcats)
      throw Error("bundle: no layer-2 cnt entry for (v=" + std::to_string(v) + ", s=" + std::to_string(id) + ")");
    return cnt2[size_t(v) * subcats + id];
  }
  if (layer == 3) {
    if (cnt3.empty() || v < 0 || v >= bins || id < 0 || id >= finer)
      throw Error("bundle: no layer-3 cnt entry for (v=" + std::to_string(v) + ", f=" + std::to_string(id) + ")");
    return cnt3[size_t(v) * finer + id];
  }
  throw Error("bundle: phi_cnt exists only on layers 2 and 3");
}

CntValues PotentialBundle::cnt_values(const LabelAssignment& a) const {
  CntValues c;
  if (!a.object) return c;
  if (a.s[0] != kBackground) c.layer2 = cnt(2, a.v[1], a.s[0]).value;
  if (a.f != kBackground) c.layer3 = cnt(3, a.v[2], a.f).value;
  return c;
}

void PotentialBundle::attach_viewpoints(LabelAssignment& a) const {
  if (!a.object) return;
  if (a.s[0] != kBackground) a.cv2 = cnt(2, a.v[1], a.s[0]).best;
  if (a.f != kBackground) a.cv3 = cnt(3, a.v[2], a.f).best;
}

uint64_t image_seed(uint64_t seed, const std::string& image_id) { return hash_combine(seed, hash_string(image_id)); }

PotentialBundle build_bundle(const ImageRef& image, const Rect& region, const BundleContext& ctx) {
  if (!ctx.config || !ctx.provider || !ctx.detector) throw Error("build_bundle: incomplete context");
  const HierarchyConfig& cfg = *ctx.config;
  if (image.image == nullptr) throw Error("build_bundle: missing image raster for '" + image.id + "'");
  PotentialBundle b;
  b.bins = cfg.azimuth_bins;
  b.features.app = local_appearance(image, region, *ctx.provider);
  b.features.det = phi_det(image, region, *ctx.detector, b.features.app);
  b.features.hog = compute_hog(*image.image, region);
  if (cfg.layers < 2) return b;
  if (!ctx.cads || !ctx.refs) throw Error("build_bundle: CAD registry and distance reference required");
  b.subcats = cfg.subcategory_count();
  b.finer = cfg.layers >= 3 ? cfg.finer_count() : 0;
  b.cnt2.resize(size_t(b.bins) * b.subcats);
  b.cnt3.resize(size_t(b.bins) * b.finer);
  if (static_cast<int>(ctx.cads->merged.size()) < b.subcats ||
      static_cast<int>(ctx.cads->finer.size()) < b.finer)
    throw Error("build_bundle: CAD registry does not cover the hierarchy");

  const uint64_t seed = image_seed(ctx.seed, image.id);
  const int W = image.image->width(), H = image.image->height();
  for (int v = 0; v < b.bins; ++v) {
    // One particle set per (region, bin), shared by layers 2 and 3.
    const ParticleSet particles =
        sample_particles(v, region, *ctx.refs, cfg, seed, ctx.cnt_mode != CntMode::Full);
    auto evaluate = [&](const CadModel& cad) {
      CntEntry e;
      if (ctx.cnt_mode == CntMode::Ignore) {
        e.best = particles.particles.front();
        return e;
      }
      const CntResult r = phi_cnt(b.features.hog, W, H, region, particles, cad, ctx.cache);
      e.value = r.value;
      e.argmax = r.argmax;
      e.best = particles.particles[size_t(r.argmax)];
      return e;
    };
    for (int s = 0; s < b.subcats; ++s) b.cnt2[size_t(v) * b.subcats + s] = evaluate(ctx.cads->merged[s]);
    for (int f = 0; f < b.finer; ++f) b.cnt3[size_t(v) * b.finer + f] = evaluate(ctx.cads->finer[f]);
  }
  return b;
}

double EnergyBreakdown::sum() const {
  double s = 0.0;
  for (const auto& t : terms) s += t.value;
  return s;
}

EnergyBreakdown total_energy(const PotentialBundle& bundle, const LabelAssignment& a, const WeightVector& w) {
  EnergyBreakdown e;
  if (!a.object) return e;
  const WeightLayout& L = w.layout;
  const auto& x = bundle.features;
  const FeatureDims d = L.dims();
  if (static_cast<int>(x.hog.size()) != d.hog || static_cast<int>(x.app.values.size()) != d.app)
    throw Error("total_energy: feature dimensions do not match the weights");
  const double* wv = w.values.data();
  e.terms.push_back({"det", 0, wv[L.det()] * x.det});
  for (int l = 1; l <= L.layers(); ++l) {
    const int slot = L.slot(l, a);
    const size_t g = L.glb(l, slot), o = L.loc(l, slot);
    double glb = 0.0, loc = 0.0;
    for (int i = 0; i < d.hog; ++i) glb += wv[g + i] * x.hog.values[i];
    for (int i = 0; i < d.app; ++i) loc += wv[o + i] * x.app.values[i];
    e.terms.push_back({"glb", l, glb});
    e.terms.push_back({"loc", l, loc});
  }
  const CntValues c = bundle.cnt_values(a);
  if (L.layers() >= 2) e.terms.push_back({"cnt", 2, wv[L.cnt(2, a.s[0])] * c.layer2});
  if (L.layers() >= 3) e.terms.push_back({"cnt", 3, wv[L.cnt(3, a.f)] * c.layer3});
  if (L.has_block("vw")) {
    const auto& b = L.block("vw");
    for (size_t i = 0; i < b.length; ++i) e.terms.push_back({"vw", static_cast<int>(i) + 1, wv[b.offset + i]});
  }
  if (L.has_block("sb")) e.terms.push_back({"sb", 2, wv[L.block("sb").offset]});
  e.total = e.sum();
  return e;
}

}  // namespace hierpose
