#include "hierpose/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "hierpose/error.hpp"
#include "hierpose/parallel.hpp"
#include "hierpose/rng.hpp"

namespace hierpose {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// manifest text

namespace {

struct LineReader {
  std::string source;
  int line = 0;
  std::vector<std::string> tok;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(source + ":" + std::to_string(line) + ": " + msg);
  }
  template <class T>
  T num(size_t i, const char* what) const {
    const std::string& s = tok[i];
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(std::string("bad ") + what + " '" + s + "'");
    return v;
  }
  void arity(size_t lo, size_t hi) const {
    if (tok.size() < lo || tok.size() > hi)
      fail(tok[0] + " record expects " + std::to_string(lo - 1) +
           (hi != lo ? "-" + std::to_string(hi - 1) : std::string()) + " fields, got " +
           std::to_string(tok.size() - 1));
  }
  Rect rect(size_t i) const {
    Rect r{num<int>(i, "x"), num<int>(i + 1, "y"), num<int>(i + 2, "width"), num<int>(i + 3, "height")};
    if (r.empty()) fail("empty rectangle");
    return r;
  }
};

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

DatasetManifest parse_manifest(const std::string& text, const fs::path& root, const std::string& source) {
  DatasetManifest m;
  m.root = root;
  std::istringstream in(text);
  std::string raw;
  LineReader r{source};
  while (std::getline(in, raw)) {
    ++r.line;
    std::istringstream ls(raw);
    r.tok.clear();
    for (std::string t; ls >> t;) r.tok.push_back(t);
    if (r.tok.empty() || r.tok[0][0] == '#') continue;
    const std::string& tag = r.tok[0];
    if (tag == "IMG") {
      r.arity(5, 5);
      ImageRecord img{r.tok[1], r.tok[2], r.num<int>(3, "width"), r.num<int>(4, "height")};
      if (img.width <= 0 || img.height <= 0) r.fail("image size must be positive");
      m.images.push_back(img);
    } else if (tag == "ANN") {
      r.arity(15, 15);
      AnnotationRecord a;
      a.image_id = r.tok[1];
      a.box = r.rect(2);
      const int o = r.num<int>(6, "object flag");
      if (o != 0 && o != 1) r.fail("object flag must be 0 or 1");
      a.object = o == 1;
      a.vbin = r.num<int>(7, "viewpoint bin");
      a.viewpoint.azimuth = r.num<double>(8, "azimuth");
      a.viewpoint.elevation = r.num<double>(9, "elevation");
      a.viewpoint.distance = r.num<double>(10, "distance");
      a.viewpoint.occ = {r.num<double>(11, "occ_dx"), r.num<double>(12, "occ_dy")};
      a.subcat = r.tok[13];
      a.finer = r.tok[14];
      if (a.object) {
        if (a.vbin < 0) r.fail("positive annotation needs a viewpoint bin");
        try {
          a.viewpoint.validate();
        } catch (const Error& e) {
          r.fail(e.what());
        }
      } else if (a.vbin != kBackground || a.subcat != "-" || a.finer != "-") {
        r.fail("negative annotation must carry bin -1 and '-' labels");
      }
      m.annotations.push_back(a);
    } else if (tag == "PROP") {
      r.arity(6, 7);
      ProposalRecord p{r.tok[1], r.rect(2), std::nullopt};
      if (r.tok.size() == 7) p.score = r.num<double>(6, "score");
      m.proposals.push_back(p);
    } else if (tag == "CAD") {
      r.arity(4, 4);
      m.cads.push_back({r.tok[1], r.tok[2], r.tok[3]});
    } else {
      r.fail("unknown record tag '" + tag + "'");
    }
  }
  m.validate();
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path(), path.string());
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  for (const auto& c : m.cads) out << "CAD " << c.finer << ' ' << c.subcat << ' ' << c.path << '\n';
  for (const auto& i : m.images) out << "IMG " << i.id << ' ' << i.path << ' ' << i.width << ' ' << i.height << '\n';
  for (const auto& a : m.annotations) {
    out << "ANN " << a.image_id << ' ' << a.box.x << ' ' << a.box.y << ' ' << a.box.w << ' ' << a.box.h << ' '
        << (a.object ? 1 : 0) << ' ' << a.vbin << ' ' << fmt(a.viewpoint.azimuth) << ' '
        << fmt(a.viewpoint.elevation) << ' ' << fmt(a.viewpoint.distance) << ' ' << fmt(a.viewpoint.occ.dx) << ' '
        << fmt(a.viewpoint.occ.dy) << ' ' << a.subcat << ' ' << a.finer << '\n';
  }
  for (const auto& p : m.proposals) {
    out << "PROP " << p.image_id << ' ' << p.box.x << ' ' << p.box.y << ' ' << p.box.w << ' ' << p.box.h;
    if (p.score) out << ' ' << fmt(*p.score);
    out << '\n';
  }
  if (!out) throw Error("failed writing manifest " + path.string());
}

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& i : images)
    if (!ids.insert(i.id).second) throw Error("manifest: duplicate image id '" + i.id + "'");
  std::map<std::string, std::string> finer_parent;
  for (const auto& c : cads) {
    if (c.finer == "-" || c.subcat == "-") throw Error("manifest: CAD labels may not be '-'");
    if (!finer_parent.emplace(c.finer, c.subcat).second)
      throw Error("manifest: duplicate CAD record for finer id '" + c.finer + "'");
  }
  for (const auto& a : annotations) {
    if (!ids.count(a.image_id)) throw Error("manifest: annotation references unknown image id '" + a.image_id + "'");
    if (!a.object) continue;
    auto it = finer_parent.find(a.finer);
    if (it == finer_parent.end()) throw Error("manifest: annotation references unknown finer id '" + a.finer + "'");
    if (it->second != a.subcat)
      throw Error("manifest: finer id '" + a.finer + "' belongs to sub-category '" + it->second + "', not '" +
                  a.subcat + "'");
  }
  for (const auto& p : proposals)
    if (!ids.count(p.image_id)) throw Error("manifest: proposal references unknown image id '" + p.image_id + "'");
}

const ImageRecord& DatasetManifest::image(const std::string& id) const {
  for (const auto& i : images)
    if (i.id == id) return i;
  throw Error("manifest: no image '" + id + "'");
}

fs::path DatasetManifest::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : root / p;
}

std::vector<Rect> DatasetManifest::proposals_of(const std::string& image_id) const {
  std::vector<Rect> out;
  for (const auto& p : proposals)
    if (p.image_id == image_id) out.push_back(p.box);
  return out;
}

// ---------------------------------------------------------------------------
// derived views

HierarchyConfig hierarchy_from_manifest(const DatasetManifest& m, int layers, int azimuth_bins) {
  HierarchyConfig c;
  c.layers = layers;
  c.azimuth_bins = azimuth_bins;
  for (const auto& cad : m.cads) {
    auto it = std::find(c.subcategories.begin(), c.subcategories.end(), cad.subcat);
    if (it == c.subcategories.end()) {
      c.subcategories.push_back(cad.subcat);
      it = c.subcategories.end() - 1;
    }
    c.finer.push_back(cad.finer);
    c.finer_subcat.push_back(static_cast<int>(it - c.subcategories.begin()));
  }
  c.sigmas = default_sigmas(azimuth_bins, training_elevations(m));
  c.validate();
  return c;
}

CadRegistry load_cads(const DatasetManifest& m, const HierarchyConfig& config, int voxel_resolution, double tau) {
  std::vector<CadModel> models;
  for (const auto& name : config.finer) {
    auto it = std::find_if(m.cads.begin(), m.cads.end(), [&](const CadRecord& c) { return c.finer == name; });
    if (it == m.cads.end()) throw Error("load_cads: no CAD record for finer id '" + name + "'");
    models.push_back(normalize_mesh(read_obj(m.resolve(it->path), name)));
  }
  return CadRegistry::build(config, std::move(models), voxel_resolution, tau);
}

DistanceReference distance_reference(const DatasetManifest& m) {
  DistanceReference refs;
  for (const auto& a : m.annotations)
    if (a.object) refs.records.push_back({double(a.box.w), double(a.box.h), a.viewpoint.distance});
  return refs;
}

std::vector<double> training_elevations(const DatasetManifest& m) {
  std::vector<double> out;
  for (const auto& a : m.annotations)
    if (a.object) out.push_back(a.viewpoint.elevation);
  return out;
}

LabelAssignment annotation_labels(const AnnotationRecord& ann, const HierarchyConfig& config) {
  if (!ann.object) return LabelAssignment::background();
  const int v = azimuth_bin(ann.viewpoint.azimuth, config.azimuth_bins);
  const int s = config.layers >= 2 ? config.subcategory_index(ann.subcat) : kBackground;
  const int f = config.layers >= 3 ? config.finer_index(ann.finer) : kBackground;
  return LabelAssignment::foreground(config.layers, v, s, f);
}

std::vector<GroundTruthObject> ground_truth(const DatasetManifest& m, const HierarchyConfig& config) {
  std::vector<GroundTruthObject> out;
  for (const auto& a : m.annotations) {
    if (!a.object) continue;
    out.push_back({a.image_id, a.box, a.viewpoint, config.subcategory_index(a.subcat), config.finer_index(a.finer)});
  }
  return out;
}

std::vector<Rect> grid_proposals(int width, int height, std::span<const int> scales, std::span<const int> strides) {
  if (width <= 0 || height <= 0) throw Error("grid_proposals: image size must be positive");
  if (scales.size() != strides.size()) throw Error("grid_proposals: one stride per scale required");
  std::vector<Rect> out;
  for (size_t k = 0; k < scales.size(); ++k) {
    if (scales[k] <= 0 || strides[k] <= 0) throw Error("grid_proposals: scales and strides must be positive");
    const int bw = std::min(scales[k], width), bh = std::min(scales[k], height);
    for (int y = 0; y + bh <= height; y += strides[k])
      for (int x = 0; x + bw <= width; x += strides[k]) out.push_back({x, y, bw, bh});
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic scenes

void SynthSpec::validate() const {
  if (scenes < 0) throw Error("synth: scene count must be non-negative");
  if (image_width < 32 || image_height < 32) throw Error("synth: images must be at least 32x32");
  if (!(elevation_min >= 0.0 && elevation_min <= elevation_max && elevation_max <= std::numbers::pi / 2))
    throw Error("synth: elevation range must lie within [0, pi/2]");
  if (!(distance_min > 0.5 && distance_min <= distance_max)) throw Error("synth: distance range must exceed 0.5");
  if (center_jitter < 0 || jitter_proposals < 0 || negative_proposals < 0 || noise < 0.0 ||
      background_contrast < 0.0)
    throw Error("synth: negative jitter, proposal count, noise or contrast");
}

namespace {

struct Box {
  Vec3 lo, hi;
};

/// Closed box surface with faces split into a grid no coarser than `step`,
/// wound counter-clockwise seen from outside.
void add_box(CadModel& mesh, const Box& b, double step) {
  auto segs = [step](double len) { return std::max(1, static_cast<int>(std::ceil(len / step))); };
  const Vec3 size = b.hi - b.lo;
  // origin, two spanning edges; (u x v) points outward.
  struct FaceSpec {
    Vec3 o, u, v;
  };
  const Vec3 X{size.x, 0, 0}, Y{0, size.y, 0}, Z{0, 0, size.z};
  const FaceSpec faces[6] = {
      {b.lo, Y, X},                  // bottom (-z)
      {b.lo + Z, X, Y},              // top (+z)
      {b.lo, X, Z},                  // -y
      {b.lo + Y, Z, X},              // +y
      {b.lo, Z, Y},                  // -x
      {b.lo + X, Y, Z},              // +x
  };
  for (const auto& f : faces) {
    const int nu = segs(f.u.norm()), nv = segs(f.v.norm());
    const int base = static_cast<int>(mesh.vertices.size());
    for (int j = 0; j <= nv; ++j)
      for (int i = 0; i <= nu; ++i) mesh.vertices.push_back(f.o + f.u * (double(i) / nu) + f.v * (double(j) / nv));
    auto at = [&](int i, int j) { return base + j * (nu + 1) + i; };
    for (int j = 0; j < nv; ++j)
      for (int i = 0; i < nu; ++i) {
        mesh.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
        mesh.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
      }
  }
}

CadModel box_union(const std::string& id, const std::vector<Box>& boxes) {
  std::vector<Vec3> corners;
  for (const auto& b : boxes) {
    corners.push_back(b.lo);
    corners.push_back(b.hi);
  }
  // Vertex spacing below one voxel of the default 32^3 grid after
  // normalization.
  const double step = bounding_box(corners).diagonal() / 32.0;
  CadModel m;
  m.id = id;
  for (const auto& b : boxes) add_box(m, b, step);
  return m;
}

}  // namespace

std::vector<std::pair<CadRecord, CadModel>> synthetic_shapes() {
  // +x is the front of every shape.
  std::vector<std::pair<CadRecord, CadModel>> out;
  out.push_back({{"sedan", "car", "cads/sedan.obj"},
                 box_union("sedan", {{{-2.2, -0.9, 0.3}, {2.2, 0.9, 1.1}},
                                     {{-1.3, -0.8, 1.1}, {0.5, 0.8, 1.6}},
                                     {{-2.2, -0.9, 0.0}, {-1.5, 0.9, 0.3}},
                                     {{1.3, -0.9, 0.0}, {2.0, 0.9, 0.3}}})});
  out.push_back({{"wagon", "car", "cads/wagon.obj"},
                 box_union("wagon", {{{-2.0, -0.85, 0.3}, {2.0, 0.85, 1.2}},
                                     {{-2.0, -0.8, 1.2}, {0.9, 0.8, 2.0}},
                                     {{-1.8, -0.85, 0.0}, {-1.1, 0.85, 0.3}},
                                     {{1.1, -0.85, 0.0}, {1.8, 0.85, 0.3}}})});
  out.push_back({{"jet", "plane", "cads/jet.obj"},
                 box_union("jet", {{{-2.5, -0.3, -0.3}, {2.5, 0.3, 0.3}},
                                   {{-1.2, -2.3, -0.1}, {0.2, 2.3, 0.05}},
                                   {{-2.5, -0.08, 0.3}, {-1.7, 0.08, 1.4}},
                                   {{-2.5, -0.9, 0.2}, {-2.0, 0.9, 0.3}}})});
  out.push_back({{"prop", "plane", "cads/prop.obj"},
                 box_union("prop", {{{-2.0, -0.35, -0.35}, {2.0, 0.35, 0.35}},
                                    {{0.3, -2.8, 0.25}, {1.1, 2.8, 0.4}},
                                    {{-2.0, -0.08, 0.35}, {-1.5, 0.08, 1.0}},
                                    {{-2.0, -1.2, -0.05}, {-1.4, 1.2, 0.05}},
                                    {{2.0, -0.15, -0.15}, {2.3, 0.15, 0.15}}})});
  return out;
}

void render_shaded(GrayImage& canvas, const CadModel& model, const CameraPose& pose, double focal, double cx,
                   double cy, const Vec3& light) {
  pose.validate();
  model.validate();
  const PinholeCamera cam(pose, focal, cx, cy);
  const int W = canvas.width(), H = canvas.height();
  std::vector<std::array<double, 2>> px(model.vertices.size());
  std::vector<double> depth(model.vertices.size());
  for (size_t i = 0; i < model.vertices.size(); ++i) {
    depth[i] = cam.depth(model.vertices[i]);
    if (depth[i] < 1e-2) throw Error("render_shaded: model crosses the image plane");
    px[i] = cam.project(model.vertices[i]);
  }
  std::vector<double> zbuf(size_t(W) * H, std::numeric_limits<double>::infinity());
  const double ln = light.norm();
  for (const auto& f : model.faces) {
    const Vec3 n = (model.vertices[f[1]] - model.vertices[f[0]]).cross(model.vertices[f[2]] - model.vertices[f[0]]);
    const double nn = n.norm();
    const double lambert = nn > 0.0 ? std::max(0.0, n.dot(light) / (nn * ln)) : 0.0;
    const double shade = 0.15 + 0.8 * lambert;
    const auto &a = px[f[0]], &b = px[f[1]], &c = px[f[2]];
    const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    scan_triangle(0, 0, W, H, a, b, c, [&](int row, int col0, int col1) {
      const double yc = row + 0.5;
      for (int col = col0; col <= col1; ++col) {
        double z = depth[f[0]];
        if (std::abs(det) > 1e-12) {
          const double xc = col + 0.5;
          const double l1 = ((xc - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (yc - a[1])) / det;
          const double l2 = ((b[0] - a[0]) * (yc - a[1]) - (xc - a[0]) * (b[1] - a[1])) / det;
          z = depth[f[0]] + l1 * (depth[f[1]] - depth[f[0]]) + l2 * (depth[f[2]] - depth[f[0]]);
        }
        double& zb = zbuf[size_t(row) * W + col];
        if (z < zb) {
          zb = z;
          canvas.at(col, row) = shade;
        }
      }
    });
  }
}

namespace {

GrayImage noise_background(int W, int H, double contrast, CounterRng& rng) {
  GrayImage img(W, H);
  const int grids[2] = {6, 15};
  const double amps[2] = {0.22, 0.10};
  for (int o = 0; o < 2; ++o) {
    const int g = grids[o];
    std::vector<double> lattice(size_t(g + 1) * (g + 1));
    for (auto& v : lattice) v = rng.uniform() * 2.0 - 1.0;
    for (int y = 0; y < H; ++y) {
      const double fy = (y + 0.5) / H * g;
      const int iy = std::min(static_cast<int>(fy), g - 1);
      const double ty = fy - iy;
      for (int x = 0; x < W; ++x) {
        const double fx = (x + 0.5) / W * g;
        const int ix = std::min(static_cast<int>(fx), g - 1);
        const double tx = fx - ix;
        auto L = [&](int i, int j) { return lattice[size_t(j) * (g + 1) + i]; };
        const double top = L(ix, iy) + tx * (L(ix + 1, iy) - L(ix, iy));
        const double bot = L(ix, iy + 1) + tx * (L(ix + 1, iy + 1) - L(ix, iy + 1));
        img.at(x, y) += contrast * amps[o] * (top + ty * (bot - top));
      }
    }
  }
  for (auto& v : img.pixels()) v += 0.5;
  return img;
}

Rect random_box_near(const Rect& gt, int W, int H, CounterRng& rng) {
  const double s = 0.15;
  const int w = std::max(8, static_cast<int>(std::lround(gt.w * (1.0 + s * (2 * rng.uniform() - 1)))));
  const int h = std::max(8, static_cast<int>(std::lround(gt.h * (1.0 + s * (2 * rng.uniform() - 1)))));
  int x = static_cast<int>(std::lround(gt.x + s * gt.w * (2 * rng.uniform() - 1)));
  int y = static_cast<int>(std::lround(gt.y + s * gt.h * (2 * rng.uniform() - 1)));
  x = std::clamp(x, 0, std::max(0, W - w));
  y = std::clamp(y, 0, std::max(0, H - h));
  return {x, y, std::min(w, W), std::min(h, H)};
}

Rect random_box(const Rect& gt, int W, int H, CounterRng& rng) {
  const int lo = std::max(16, std::min(gt.w, gt.h) / 2);
  const int hi = std::max(lo, std::min({W, H, std::max(gt.w, gt.h) + 8}));
  const int w = lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
  const int h = std::clamp(static_cast<int>(std::lround(w * (0.6 + 0.8 * rng.uniform()))), 8, H);
  const int x = static_cast<int>(rng.uniform() * (W - std::min(w, W) + 1));
  const int y = static_cast<int>(rng.uniform() * (H - h + 1));
  return {x, y, std::min(w, W), h};
}

struct Scene {
  ImageRecord image;
  AnnotationRecord ann;
  std::vector<ProposalRecord> proposals;
};

}  // namespace

DatasetManifest generate_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  spec.validate();
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / "cads");

  DatasetManifest m;
  m.root = out_dir;
  std::vector<CadModel> models;
  std::vector<std::string> subcat_of;
  for (auto& [rec, mesh] : synthetic_shapes()) {
    write_obj(out_dir / rec.path, normalize_mesh(mesh));
    // Render exactly what a reader of the manifest will load.
    models.push_back(normalize_mesh(read_obj(out_dir / rec.path, rec.finer)));
    subcat_of.push_back(rec.subcat);
    m.cads.push_back(rec);
  }

  const int W = spec.image_width, H = spec.image_height;
  const double focal = default_focal(W, H);
  const Vec3 light{0.45, 0.3, 0.84};
  std::vector<Scene> scenes(spec.scenes);
  parallel_for(scenes.size(), spec.workers, [&](size_t k) {
    CounterRng rng(spec.seed, hash_combine(hash_string("synth-scene"), k));
    Scene& sc = scenes[k];
    char name[64];
    std::snprintf(name, sizeof name, "%s%05zu", spec.prefix.c_str(), k);
    const std::string id = name;
    const int f = static_cast<int>(rng.uniform() * models.size()) % static_cast<int>(models.size());

    ContinuousViewpoint vp;
    SilhouetteMask mask;
    Rect box;
    double px = 0.0, py = 0.0;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw Error("synth: could not place an object inside the image");
      vp.azimuth = wrap_angle(rng.uniform() * 2.0 * std::numbers::pi);
      vp.elevation = spec.elevation_min + rng.uniform() * (spec.elevation_max - spec.elevation_min);
      vp.distance = spec.distance_min + rng.uniform() * (spec.distance_max - spec.distance_min);
      const int jx = static_cast<int>(std::floor(rng.uniform() * (2 * spec.center_jitter + 1))) - spec.center_jitter;
      const int jy = static_cast<int>(std::floor(rng.uniform() * (2 * spec.center_jitter + 1))) - spec.center_jitter;
      px = W / 2 + jx;
      py = H / 2 + jy;
      mask = render_silhouette(models[f], vp.pose(), focal, px, py, W, H);
      auto r = mask.bounding_rect();
      if (!r || r->x == 0 || r->y == 0 || r->x + r->w == W || r->y + r->h == H || r->w < 12 || r->h < 12) continue;
      box = *r;
      break;
    }
    const PixelShift pc = projection_center(models[f], vp.pose(), focal);
    vp.occ = {px + pc.dx - box.center_x(), py + pc.dy - box.center_y()};

    GrayImage img = noise_background(W, H, spec.background_contrast, rng);
    render_shaded(img, models[f], vp.pose(), focal, px, py, light);
    for (auto& v : img.pixels()) v = std::clamp(v + spec.noise * rng.normal(), 0.0, 1.0);
    write_pgm(out_dir / "images" / (id + ".pgm"), img);
    GrayImage mimg(W, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) mimg.at(x, y) = mask.on(x, y) ? 1.0 : 0.0;
    write_pgm(out_dir / "masks" / (id + ".pgm"), mimg);

    sc.image = {id, "images/" + id + ".pgm", W, H};
    sc.ann.image_id = id;
    sc.ann.box = box;
    sc.ann.object = true;
    sc.ann.vbin = azimuth_bin(vp.azimuth, 8);
    sc.ann.viewpoint = vp;
    sc.ann.finer = m.cads[f].finer;
    sc.ann.subcat = subcat_of[f];

    sc.proposals.push_back({id, box, std::nullopt});
    for (int j = 0; j < spec.jitter_proposals; ++j) {
      Rect r = box;
      for (int t = 0; t < 200; ++t) {
        const Rect c = random_box_near(box, W, H, rng);
        if (iou(c, box) >= 0.6 && !(c == box)) {
          r = c;
          break;
        }
      }
      sc.proposals.push_back({id, r, std::nullopt});
    }
    for (int j = 0; j < spec.negative_proposals; ++j) {
      for (int t = 0; t < 500; ++t) {
        const Rect c = random_box(box, W, H, rng);
        if (!c.empty() && iou(c, box) < 0.3) {
          sc.proposals.push_back({id, c, std::nullopt});
          break;
        }
      }
    }
  });
  for (auto& sc : scenes) {
    m.images.push_back(sc.image);
    m.annotations.push_back(sc.ann);
    m.proposals.insert(m.proposals.end(), sc.proposals.begin(), sc.proposals.end());
  }
  m.validate();
  save_manifest(out_dir / "manifest.txt", m);
  return m;
}

}  // namespace hierpose
