#include "hierpose/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "hierpose/error.hpp"

namespace hierpose {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNearPlane = 1e-2;

// Wraps into [0, 2pi) and snaps to a 2^-30 rad lattice so that a and a + 2pi
// produce the same trigonometric inputs.
double canonical_azimuth(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0) w += kTwoPi;
  constexpr double kGrid = 1073741824.0;
  w = std::nearbyint(w * kGrid) / kGrid;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

}  // namespace

double Vec3::norm() const { return std::sqrt(dot(*this)); }

void CadModel::validate() const {
  if (vertices.size() < 3) throw Error("CadModel '" + id + "': fewer than 3 vertices");
  const int n = static_cast<int>(vertices.size());
  for (const auto& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= n)
        throw Error("CadModel '" + id + "': face index " + std::to_string(idx) + " out of range");
    }
  }
}

BoundingBox bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw Error("bounding_box: no points");
  BoundingBox box{points[0], points[0]};
  for (const auto& p : points) {
    box.lo = {std::min(box.lo.x, p.x), std::min(box.lo.y, p.y), std::min(box.lo.z, p.z)};
    box.hi = {std::max(box.hi.x, p.x), std::max(box.hi.y, p.y), std::max(box.hi.z, p.z)};
  }
  return box;
}

CadModel normalize_mesh(const CadModel& model) {
  model.validate();
  const BoundingBox box = bounding_box(model.vertices);
  const double diag = box.diagonal();
  if (!(diag > 0.0) || !std::isfinite(diag))
    throw Error("normalize_mesh: degenerate mesh '" + model.id + "' (zero extent)");
  const Vec3 c = box.center();
  CadModel out = model;
  for (auto& v : out.vertices) v = (v - c) * (1.0 / diag);
  return out;
}

void CameraPose::validate() const {
  if (!std::isfinite(azimuth)) throw Error("CameraPose: non-finite azimuth");
  if (!(elevation >= 0.0 && elevation <= std::numbers::pi / 2 + 1e-12))
    throw Error("CameraPose: elevation outside [0, pi/2]");
  if (!(distance > 0.0) || !std::isfinite(distance)) throw Error("CameraPose: distance must be > 0");
}

double default_focal(int width, int height) { return 1.5 * std::min(width, height); }

PinholeCamera::PinholeCamera(const CameraPose& pose, double focal, double cx, double cy)
    : focal_(focal), cx_(cx), cy_(cy) {
  const double a = canonical_azimuth(pose.azimuth);
  const double e = pose.elevation;
  const double ca = std::cos(a), sa = std::sin(a), ce = std::cos(e), se = std::sin(e);
  eye_ = Vec3{ce * ca, ce * sa, se} * pose.distance;
  forward_ = Vec3{-ce * ca, -ce * sa, -se};
  right_ = Vec3{-sa, ca, 0.0};
  up_ = right_.cross(forward_);
}

double PinholeCamera::depth(const Vec3& p) const { return (p - eye_).dot(forward_); }

std::array<double, 2> PinholeCamera::project(const Vec3& p) const {
  const Vec3 rel = p - eye_;
  const double z = rel.dot(forward_);
  return {cx_ + focal_ * rel.dot(right_) / z, cy_ - focal_ * rel.dot(up_) / z};
}

Vec3 PinholeCamera::to_camera(const Vec3& v) const {
  return {v.dot(right_), v.dot(up_), v.dot(forward_)};
}

long SilhouetteMask::area() const { return std::count(bits.begin(), bits.end(), uint8_t{1}); }

std::optional<Rect> SilhouetteMask::bounding_rect() const {
  int x0 = width, y0 = height, x1 = -1, y1 = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!on(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

void SilhouetteMask::update_contour() {
  contour.assign(bits.size(), 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!on(x, y)) continue;
      const bool boundary = x == 0 || y == 0 || x == width - 1 || y == height - 1 || !on(x - 1, y) ||
                            !on(x + 1, y) || !on(x, y - 1) || !on(x, y + 1);
      if (boundary) contour[size_t(y) * width + x] = 1;
    }
  }
}

double mask_iou(const SilhouetteMask& a, const SilhouetteMask& b) {
  if (a.width != b.width || a.height != b.height) throw Error("mask_iou: size mismatch");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]);
    uni += (a.bits[i] || b.bits[i]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void fill_triangle(SilhouetteMask& mask, const std::array<double, 2>& a,
                   const std::array<double, 2>& b, const std::array<double, 2>& c) {
  scan_triangle(0, 0, mask.width, mask.height, a, b, c, [&](int row, int col0, int col1) {
    std::fill(mask.bits.begin() + size_t(row) * mask.width + col0,
              mask.bits.begin() + size_t(row) * mask.width + col1 + 1, uint8_t{1});
  });
}

namespace {

std::vector<std::array<double, 2>> project_vertices(const CadModel& model, const CameraPose& pose, double focal,
                                                    double cx, double cy) {
  pose.validate();
  model.validate();
  const PinholeCamera cam(pose, focal, cx, cy);
  std::vector<std::array<double, 2>> px(model.vertices.size());
  for (size_t i = 0; i < model.vertices.size(); ++i) {
    if (cam.depth(model.vertices[i]) < kNearPlane)
      throw Error("project_mesh: distance " + std::to_string(pose.distance) +
                  " puts the model across the image plane");
    px[i] = cam.project(model.vertices[i]);
  }
  return px;
}

}  // namespace

SilhouetteMask rasterize_padded(const CadModel& model, const CameraPose& pose, int width, int height,
                                double focal, int pad_x, int pad_y, PixelShift principal) {
  if (width <= 0 || height <= 0) throw Error("rasterize_padded: empty viewport");
  if (pad_x < 0 || pad_y < 0) throw Error("rasterize_padded: negative padding");
  if (focal <= 0.0) focal = default_focal(width, height);
  const auto px = project_vertices(model, pose, focal, 0.5 * width + principal.dx, 0.5 * height + principal.dy);
  SilhouetteMask canvas(width + 2 * pad_x, height + 2 * pad_y);
  for (const auto& f : model.faces)
    scan_triangle(-pad_x, -pad_y, width + pad_x, height + pad_y, px[f[0]], px[f[1]], px[f[2]],
                  [&](int row, int col0, int col1) {
                    auto base = canvas.bits.begin() + size_t(row + pad_y) * canvas.width + pad_x;
                    std::fill(base + col0, base + col1 + 1, uint8_t{1});
                  });
  return canvas;
}

PixelShift projection_center(const CadModel& model, const CameraPose& pose, double focal) {
  if (!(focal > 0.0)) throw Error("projection_center: focal length must be positive");
  const auto px = project_vertices(model, pose, focal, 0.0, 0.0);
  if (px.empty()) throw Error("projection_center: model has no vertices");
  double x0 = px[0][0], x1 = x0, y0 = px[0][1], y1 = y0;
  for (const auto& p : px) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
}

SilhouetteMask crop_shifted(const SilhouetteMask& padded, int pad_x, int pad_y, int dx, int dy, int width,
                            int height) {
  SilhouetteMask mask(width, height);
  for (int y = 0; y < height; ++y) {
    const int cy = y - dy + pad_y;
    if (cy < 0 || cy >= padded.height) continue;
    for (int x = 0; x < width; ++x) {
      const int cx = x - dx + pad_x;
      if (cx >= 0 && cx < padded.width) mask.bits[size_t(y) * width + x] = padded.bits[size_t(cy) * padded.width + cx];
    }
  }
  mask.update_contour();
  return mask;
}

SilhouetteMask project_mesh(const CadModel& model, const CameraPose& pose, PixelShift occ, int width,
                            int height, double focal) {
  if (width < 8 || height < 8) throw Error("project_mesh: viewport must be at least 8x8");
  const int dx = static_cast<int>(std::lround(occ.dx));
  const int dy = static_cast<int>(std::lround(occ.dy));
  // Padding by the shift keeps geometry that `occ` moves into the viewport.
  const int pad_x = std::abs(dx), pad_y = std::abs(dy);
  return crop_shifted(rasterize_padded(model, pose, width, height, focal, pad_x, pad_y), pad_x, pad_y, dx, dy,
                      width, height);
}

SilhouetteMask render_silhouette(const CadModel& model, const CameraPose& pose, double focal, double cx,
                                 double cy, int width, int height) {
  if (width <= 0 || height <= 0) throw Error("render_silhouette: empty viewport");
  if (!(focal > 0.0)) throw Error("render_silhouette: focal length must be positive");
  const auto px = project_vertices(model, pose, focal, cx, cy);
  SilhouetteMask mask(width, height);
  for (const auto& f : model.faces) fill_triangle(mask, px[f[0]], px[f[1]], px[f[2]]);
  mask.update_contour();
  return mask;
}

long VoxelGrid::occupied_count() const {
  return std::count(occupancy.begin(), occupancy.end(), uint8_t{1});
}

std::array<int, 3> VoxelGrid::cell_of(const Vec3& p) const {
  auto axis = [this](double v) {
    const int c = static_cast<int>(std::floor((v + 0.5) * resolution));
    return std::clamp(c, 0, resolution - 1);
  };
  return {axis(p.x), axis(p.y), axis(p.z)};
}

VoxelGrid superimpose(std::span<const CadModel> models, int resolution, double tau) {
  if (resolution < 2) throw Error("voxelize: resolution must be >= 2");
  if (models.empty()) throw Error("superimpose: no models");
  if (!(tau > 0.0 && tau <= 1.0)) throw Error("superimpose: tau must lie in (0, 1]");
  VoxelGrid grid;
  grid.resolution = resolution;
  grid.model_count = static_cast<int>(models.size());
  const size_t cells = size_t(resolution) * resolution * resolution;
  grid.counts.assign(cells, 0);
  grid.occupancy.assign(cells, 0);
  std::vector<uint8_t> seen(cells);
  for (const auto& m : models) {
    if (m.vertices.empty()) throw Error("voxelize: model '" + m.id + "' has no vertices");
    std::fill(seen.begin(), seen.end(), uint8_t{0});
    for (const auto& v : m.vertices) {
      const auto c = grid.cell_of(v);
      seen[grid.index(c[0], c[1], c[2])] = 1;
    }
    for (size_t i = 0; i < cells; ++i) grid.counts[i] += seen[i];
  }
  // Small slack so tau * K landing on an integer is not rounded up by error.
  const int need = std::max(1, static_cast<int>(std::ceil(tau * grid.model_count - 1e-9)));
  for (size_t i = 0; i < cells; ++i) grid.occupancy[i] = grid.counts[i] >= need ? 1 : 0;
  return grid;
}

VoxelGrid voxelize(const CadModel& model, int resolution) {
  return superimpose(std::span<const CadModel>(&model, 1), resolution, 1.0);
}

CadModel voxel_surface(const VoxelGrid& grid, const std::string& id) {
  const int r = grid.resolution;
  CadModel mesh;
  mesh.id = id;
  std::map<std::array<int, 3>, int> corner_index;
  auto corner = [&](int x, int y, int z) {
    const std::array<int, 3> key{x, y, z};
    auto it = corner_index.find(key);
    if (it != corner_index.end()) return it->second;
    const int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back({x / double(r) - 0.5, y / double(r) - 0.5, z / double(r) - 0.5});
    corner_index.emplace(key, idx);
    return idx;
  };
  auto occupied = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= r || y >= r || z >= r) return false;
    return grid.occupied(x, y, z);
  };
  auto quad = [&](std::array<int, 3> a, std::array<int, 3> b, std::array<int, 3> c, std::array<int, 3> d) {
    const int ia = corner(a[0], a[1], a[2]), ib = corner(b[0], b[1], b[2]);
    const int ic = corner(c[0], c[1], c[2]), id_ = corner(d[0], d[1], d[2]);
    mesh.faces.push_back({ia, ib, ic});
    mesh.faces.push_back({ia, ic, id_});
  };
  for (int z = 0; z < r; ++z) {
    for (int y = 0; y < r; ++y) {
      for (int x = 0; x < r; ++x) {
        if (!grid.occupied(x, y, z)) continue;
        // Counter-clockwise when seen from outside the cell.
        if (!occupied(x - 1, y, z)) quad({x, y, z}, {x, y, z + 1}, {x, y + 1, z + 1}, {x, y + 1, z});
        if (!occupied(x + 1, y, z))
          quad({x + 1, y, z}, {x + 1, y + 1, z}, {x + 1, y + 1, z + 1}, {x + 1, y, z + 1});
        if (!occupied(x, y - 1, z)) quad({x, y, z}, {x + 1, y, z}, {x + 1, y, z + 1}, {x, y, z + 1});
        if (!occupied(x, y + 1, z))
          quad({x, y + 1, z}, {x, y + 1, z + 1}, {x + 1, y + 1, z + 1}, {x + 1, y + 1, z});
        if (!occupied(x, y, z - 1)) quad({x, y, z}, {x, y + 1, z}, {x + 1, y + 1, z}, {x + 1, y, z});
        if (!occupied(x, y, z + 1))
          quad({x, y, z + 1}, {x + 1, y, z + 1}, {x + 1, y + 1, z + 1}, {x, y + 1, z + 1});
      }
    }
  }
  return mesh;
}

CadModel merge_cad_models(std::span<const CadModel> models, int resolution, double tau,
                          const std::string& id) {
  const VoxelGrid grid = superimpose(models, resolution, tau);
  if (grid.occupied_count() == 0)
    throw Error("merge_cad_models: no voxel is shared by the required fraction " + std::to_string(tau) +
                " of " + std::to_string(models.size()) + " models");
  return voxel_surface(grid, id);
}

CadModel parse_obj(const std::string& text, const std::string& id) {
  CadModel model;
  model.id = id;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        throw Error("OBJ '" + id + "' line " + std::to_string(line_no) + ": malformed vertex");
      model.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int i = 0;
        const auto [end, ec] = std::from_chars(head.data(), head.data() + head.size(), i);
        if (ec != std::errc() || end != head.data() + head.size() || i == 0)
          throw Error("OBJ '" + id + "' line " + std::to_string(line_no) + ": bad face index '" + tok + "'");
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(model.vertices.size()) + i);
      }
      if (idx.size() < 3)
        throw Error("OBJ '" + id + "' line " + std::to_string(line_no) + ": face with < 3 vertices");
      for (size_t k = 1; k + 1 < idx.size(); ++k) model.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  model.validate();
  return model;
}

CadModel read_obj(const std::filesystem::path& path, const std::string& id) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_obj(ss.str(), id);
}

void write_obj(const std::filesystem::path& path, const CadModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "# " << model.id << '\n';
  for (const auto& v : model.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : model.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void write_voxels(const std::filesystem::path& path, const VoxelGrid& grid) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "resolution " << grid.resolution << '\n';
  const int r = grid.resolution;
  for (int z = 0; z < r; ++z)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        if (grid.occupied(x, y, z)) out << x << ' ' << y << ' ' << z << '\n';
}

VoxelGrid read_voxels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string tag;
  VoxelGrid grid;
  if (!(in >> tag >> grid.resolution) || tag != "resolution" || grid.resolution < 2)
    throw Error(path.string() + ": missing resolution header");
  const size_t cells = size_t(grid.resolution) * grid.resolution * grid.resolution;
  grid.occupancy.assign(cells, 0);
  grid.counts.assign(cells, 0);
  grid.model_count = 1;
  int x, y, z;
  while (in >> x >> y >> z) {
    if (x < 0 || y < 0 || z < 0 || x >= grid.resolution || y >= grid.resolution || z >= grid.resolution)
      throw Error(path.string() + ": cell outside grid");
    grid.occupancy[grid.index(x, y, z)] = 1;
    grid.counts[grid.index(x, y, z)] = 1;
  }
  return grid;
}

}  // namespace hierpose
