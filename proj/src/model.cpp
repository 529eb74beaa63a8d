#include "hierpose/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hierpose/error.hpp"
#include "hierpose/rng.hpp"

namespace hierpose {

std::vector<int> HierarchyConfig::finer_of(int s) const {
  std::vector<int> out;
  for (int f = 0; f < finer_count(); ++f)
    if (finer_subcat[f] == s) out.push_back(f);
  return out;
}

int HierarchyConfig::subcategory_index(const std::string& name) const {
  auto it = std::find(subcategories.begin(), subcategories.end(), name);
  if (it == subcategories.end()) throw Error("unknown sub-category '" + name + "'");
  return static_cast<int>(it - subcategories.begin());
}

int HierarchyConfig::finer_index(const std::string& name) const {
  auto it = std::find(finer.begin(), finer.end(), name);
  if (it == finer.end()) throw Error("unknown finer-sub-category '" + name + "'");
  return static_cast<int>(it - finer.begin());
}

void HierarchyConfig::validate() const {
  if (layers < 1 || layers > 3) throw Error("config: layers must be 1, 2 or 3");
  if (azimuth_bins < 2) throw Error("config: need at least 2 azimuth bins");
  if (layers >= 2 && subcategories.empty()) throw Error("config: no sub-categories");
  if (finer.size() != finer_subcat.size()) throw Error("config: finer parent table size mismatch");
  for (int s : finer_subcat)
    if (s < 0 || s >= subcategory_count()) throw Error("config: finer parent out of range");
  if (layers == 3) {
    for (int s = 0; s < subcategory_count(); ++s)
      if (finer_of(s).empty()) throw Error("config: sub-category '" + subcategories[s] + "' has no finer");
  }
  const auto& c = sample_counts;
  if (c.azimuth < 1 || c.elevation < 1 || c.distance < 1 || c.occlusion < 1)
    throw Error("config: sample counts must be positive");
  if (!(svm_c > 0.0)) throw Error("config: C must be positive");
}

CadRegistry CadRegistry::build(const HierarchyConfig& config, std::vector<CadModel> finer_models,
                               int voxel_resolution, double tau) {
  if (static_cast<int>(finer_models.size()) != config.finer_count())
    throw Error("CadRegistry: need exactly one CAD model per finer-sub-category");
  CadRegistry reg;
  reg.finer = std::move(finer_models);
  for (int s = 0; s < config.subcategory_count(); ++s) {
    std::vector<CadModel> members;
    for (int f : config.finer_of(s)) members.push_back(reg.finer[f]);
    if (members.empty()) throw Error("CadRegistry: sub-category '" + config.subcategories[s] + "' has no models");
    reg.merged.push_back(merge_cad_models(members, voxel_resolution, tau, config.subcategories[s]));
  }
  return reg;
}

void ContinuousViewpoint::validate() const {
  pose().validate();
  if (!(azimuth >= 0.0 && azimuth < 2 * std::numbers::pi)) throw Error("viewpoint: azimuth outside [0, 2pi)");
}

LabelAssignment LabelAssignment::foreground(int layers, int v, int s, int f) {
  LabelAssignment a;
  a.object = true;
  for (int l = 0; l < layers; ++l) a.v[l] = v;
  if (layers >= 2) a.s[0] = s;
  if (layers >= 3) {
    a.s[1] = s;
    a.f = f;
  }
  return a;
}

std::optional<std::string> validate_assignment(const LabelAssignment& a, const HierarchyConfig& config) {
  if (!a.object) {
    const bool pure = std::all_of(a.v.begin(), a.v.end(), [](int x) { return x == kBackground; }) &&
                      a.s[0] == kBackground && a.s[1] == kBackground && a.f == kBackground && !a.cv2 && !a.cv3;
    if (!pure) return "background purity";
    return std::nullopt;
  }
  for (int l = 0; l < 3; ++l) {
    const bool present = l < config.layers;
    if (!present && a.v[l] != kBackground) return "layer truncation";
    if (present && (a.v[l] < 0 || a.v[l] >= config.azimuth_bins)) return "viewpoint range";
  }
  for (int l = 1; l < config.layers; ++l)
    if (a.v[l] != a.v[0]) return "viewpoint consistency";
  if (config.layers < 2 && (a.s[0] != kBackground || a.cv2)) return "layer truncation";
  if (config.layers < 3 && (a.s[1] != kBackground || a.f != kBackground || a.cv3)) return "layer truncation";
  if (config.layers >= 2 && (a.s[0] < 0 || a.s[0] >= config.subcategory_count())) return "sub-category range";
  if (config.layers >= 3) {
    if (a.s[1] != a.s[0]) return "sub-category consistency";
    if (a.f < 0 || a.f >= config.finer_count()) return "finer range";
    if (config.finer_subcat[a.f] != a.s[1]) return "finer membership";
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

uint64_t config_hash(const HierarchyConfig& config, FeatureDims dims) {
  uint64_t h = hash_string("hierpose-layout-v1");
  auto mix_int = [&h](long v) { h = hash_combine(h, static_cast<uint64_t>(v)); };
  mix_int(config.layers);
  mix_int(config.azimuth_bins);
  mix_int(dims.hog);
  mix_int(dims.app);
  for (const auto& s : config.subcategories) h = hash_combine(h, hash_string(s));
  for (size_t f = 0; f < config.finer.size(); ++f) {
    h = hash_combine(h, hash_string(config.finer[f]));
    mix_int(config.finer_subcat[f]);
  }
  return h;
}

size_t WeightLayout::add(const std::string& name, size_t length, bool frozen) {
  blocks_.push_back({name, size_, length, frozen});
  size_ += length;
  return blocks_.back().offset;
}

WeightLayout::WeightLayout(const HierarchyConfig& config, FeatureDims dims)
    : dims_(dims), layers_(config.layers), bins_(config.azimuth_bins) {
  config.validate();
  if (dims.hog <= 0 || dims.app < 0) throw Error("WeightLayout: invalid feature dimensions");
  subcats_ = layers_ >= 2 ? config.subcategory_count() : 0;
  finer_ = layers_ >= 3 ? config.finer_count() : 0;
  hash_ = hierpose::config_hash(config, dims);
  const size_t H = dims.hog, A = dims.app, m = bins_;
  det_ = add("det", 1);
  glb_[0] = add("glb1", m * H);
  loc_[0] = add("loc1", m * A);
  if (layers_ >= 2) {
    glb_[1] = add("glb2", m * subcats_ * H);
    loc_[1] = add("loc2", m * subcats_ * A);
    cnt_[1] = add("cnt2", subcats_);
  }
  if (layers_ >= 3) {
    glb_[2] = add("glb3", m * finer_ * H);
    loc_[2] = add("loc3", m * finer_ * A);
    cnt_[2] = add("cnt3", finer_);
  }
  if (layers_ >= 2) add("vw", layers_ - 1, true);
  if (layers_ >= 3) add("sb", 1, true);
}

const WeightBlock& WeightLayout::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw Error("WeightLayout: no block '" + name + "'");
}

bool WeightLayout::has_block(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const WeightBlock& b) { return b.name == name; });
}

size_t WeightLayout::glb(int layer, int slot) const { return glb_[layer - 1] + size_t(slot) * dims_.hog; }
size_t WeightLayout::loc(int layer, int slot) const { return loc_[layer - 1] + size_t(slot) * dims_.app; }
size_t WeightLayout::cnt(int layer, int id) const { return cnt_[layer - 1] + size_t(id); }

int WeightLayout::slot(int layer, const LabelAssignment& a) const {
  const int v = a.v[layer - 1];
  switch (layer) {
    case 1: return v;
    case 2: return v * subcats_ + a.s[0];
    default: return v * finer_ + a.f;
  }
}

std::vector<double> WeightLayout::learnable_mask() const {
  std::vector<double> mask(size_, 1.0);
  for (const auto& b : blocks_)
    if (b.frozen) std::fill_n(mask.begin() + static_cast<long>(b.offset), b.length, 0.0);
  return mask;
}

std::span<const double> WeightVector::block(const std::string& name) const {
  const auto& b = layout.block(name);
  return std::span<const double>(values).subspan(b.offset, b.length);
}

std::span<double> WeightVector::block(const std::string& name) {
  const auto& b = layout.block(name);
  return std::span<double>(values).subspan(b.offset, b.length);
}

void accumulate_joint_feature(std::span<double> out, double scale, const WeightLayout& layout,
                              const RegionFeatures& x, const LabelAssignment& y, const CntValues& cnt) {
  if (out.size() != layout.size()) throw Error("joint_feature_map: output length mismatch");
  if (!y.object) return;
  const FeatureDims d = layout.dims();
  if (static_cast<int>(x.hog.size()) != d.hog)
    throw Error("joint_feature_map: HOG length " + std::to_string(x.hog.size()) + " != " + std::to_string(d.hog));
  if (static_cast<int>(x.app.values.size()) != d.app)
    throw Error("joint_feature_map: appearance length " + std::to_string(x.app.values.size()) +
                " != " + std::to_string(d.app));
  out[layout.det()] += scale * x.det;
  for (int l = 1; l <= layout.layers(); ++l) {
    const int slot = layout.slot(l, y);
    double* g = out.data() + layout.glb(l, slot);
    for (int i = 0; i < d.hog; ++i) g[i] += scale * x.hog.values[i];
    double* a = out.data() + layout.loc(l, slot);
    for (int i = 0; i < d.app; ++i) a[i] += scale * x.app.values[i];
  }
  if (layout.layers() >= 2) out[layout.cnt(2, y.s[0])] += scale * cnt.layer2;
  if (layout.layers() >= 3) out[layout.cnt(3, y.f)] += scale * cnt.layer3;
  // Consistency potentials take value 1 on every enumerated (consistent)
  // assignment.
  if (layout.has_block("vw")) {
    const auto& b = layout.block("vw");
    for (size_t i = 0; i < b.length; ++i) out[b.offset + i] += scale;
  }
  if (layout.has_block("sb")) out[layout.block("sb").offset] += scale;
}

std::vector<double> joint_feature_map(const WeightLayout& layout, const RegionFeatures& x,
                                      const LabelAssignment& y, const CntValues& cnt) {
  std::vector<double> psi(layout.size(), 0.0);
  accumulate_joint_feature(psi, 1.0, layout, x, y, cnt);
  return psi;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("dot: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Weight file

namespace {

std::string hex_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
  return std::string(buf, res.ptr);
}

double parse_hex_double(const std::string& s) {
  double v = 0.0;
  std::string_view sv(s);
  bool neg = false;
  if (!sv.empty() && sv[0] == '-') {
    neg = true;
    sv.remove_prefix(1);
  }
  auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v, std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != sv.data() + sv.size()) throw Error("weights: bad number '" + s + "'");
  return neg ? -v : v;
}

}  // namespace

std::string WeightVector::serialize() const {
  std::ostringstream out;
  const FeatureDims d = layout.dims();
  out << "hierpose-weights 1\n";
  out << "config_hash " << std::hex << layout.config_hash() << std::dec << '\n';
  out << "layers " << layout.layers() << '\n';
  out << "dims " << d.hog << ' ' << d.app << '\n';
  out << "blocks " << layout.blocks().size() << '\n';
  for (const auto& b : layout.blocks())
    out << b.name << ' ' << b.offset << ' ' << b.length << ' ' << (b.frozen ? 1 : 0) << '\n';
  out << "values " << values.size() << '\n';
  for (double v : values) out << hex_double(v) << '\n';
  return out.str();
}

WeightVector WeightVector::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "hierpose-weights" || version != 1)
    throw Error("weights: missing 'hierpose-weights 1' header");
  auto expect = [&in](const char* name) {
    std::string t;
    if (!(in >> t) || t != name) throw Error(std::string("weights: expected '") + name + "'");
  };
  WeightVector w;
  WeightLayout& l = w.layout;
  expect("config_hash");
  in >> std::hex >> l.hash_ >> std::dec;
  expect("layers");
  in >> l.layers_;
  expect("dims");
  in >> l.dims_.hog >> l.dims_.app;
  expect("blocks");
  size_t nblocks = 0;
  in >> nblocks;
  for (size_t i = 0; i < nblocks; ++i) {
    WeightBlock b;
    int frozen = 0;
    if (!(in >> b.name >> b.offset >> b.length >> frozen)) throw Error("weights: truncated block table");
    b.frozen = frozen != 0;
    if (b.offset != l.size_) throw Error("weights: block '" + b.name + "' is not contiguous");
    l.blocks_.push_back(b);
    l.size_ += b.length;
    if (b.name == "det") l.det_ = b.offset;
    for (int layer = 1; layer <= 3; ++layer) {
      const std::string sfx = std::to_string(layer);
      if (b.name == "glb" + sfx) l.glb_[layer - 1] = b.offset;
      if (b.name == "loc" + sfx) l.loc_[layer - 1] = b.offset;
      if (b.name == "cnt" + sfx) l.cnt_[layer - 1] = b.offset;
    }
  }
  // Recover the label-space sizes from block lengths.
  const auto& g1 = l.block("glb1");
  l.bins_ = static_cast<int>(g1.length / std::max(1, l.dims_.hog));
  if (l.layers_ >= 2) l.subcats_ = static_cast<int>(l.block("cnt2").length);
  if (l.layers_ >= 3) l.finer_ = static_cast<int>(l.block("cnt3").length);
  expect("values");
  size_t n = 0;
  in >> n;
  if (n != l.size_) throw Error("weights: value count does not match block table");
  w.values.resize(n);
  std::string tok;
  for (size_t i = 0; i < n; ++i) {
    if (!(in >> tok)) throw Error("weights: truncated value array");
    w.values[i] = parse_hex_double(tok);
  }
  return w;
}

void WeightVector::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize();
}

WeightVector WeightVector::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace hierpose
