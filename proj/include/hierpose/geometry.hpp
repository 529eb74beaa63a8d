#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hierpose/image.hpp"

namespace hierpose {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  [[nodiscard]] double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  [[nodiscard]] Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  [[nodiscard]] double norm() const;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

using Face = std::array<int, 3>;

/// Triangle mesh in object units. `id` names the finer-sub-category (or the
/// sub-category for merged models).
struct CadModel {
  std::string id;
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  /// Throws if a face index is out of range or there are fewer than 3 vertices.
  void validate() const;

  friend bool operator==(const CadModel&, const CadModel&) = default;
};

struct BoundingBox {
  Vec3 lo;
  Vec3 hi;
  [[nodiscard]] Vec3 center() const { return (lo + hi) * 0.5; }
  [[nodiscard]] double diagonal() const { return (hi - lo).norm(); }
};

BoundingBox bounding_box(std::span<const Vec3> points);

/// Translates the bounding-box center to the origin and scales the
/// bounding-box diagonal to 1. Orientation is left untouched.
CadModel normalize_mesh(const CadModel& model);

/// Camera on a sphere of radius `distance` around the origin, z up.
/// Azimuth is measured in the xy-plane from +x toward +y; elevation from the
/// xy-plane toward +z.
struct CameraPose {
  double azimuth = 0.0;    ///< radians, [0, 2pi)
  double elevation = 0.0;  ///< radians, [0, pi/2]
  double distance = 1.0;   ///< object-diagonal units, > 0

  void validate() const;
};

/// Pixel-space translation of a projected silhouette.
struct PixelShift {
  double dx = 0.0;
  double dy = 0.0;
};

/// Default focal length in pixels: a unit-diagonal object at distance 3
/// spans half of the shorter viewport side.
double default_focal(int width, int height);

/// Pinhole projection of a single camera pose. Image y grows downward.
class PinholeCamera {
public:
  PinholeCamera(const CameraPose& pose, double focal, double cx, double cy);

  /// Depth along the viewing axis (positive in front of the camera).
  [[nodiscard]] double depth(const Vec3& p) const;
  /// Pixel coordinates (continuous; pixel i spans [i, i+1)).
  [[nodiscard]] std::array<double, 2> project(const Vec3& p) const;
  /// Camera-space direction of a world vector (right, up, forward).
  [[nodiscard]] Vec3 to_camera(const Vec3& v) const;

private:
  Vec3 eye_;
  Vec3 right_;
  Vec3 up_;
  Vec3 forward_;
  double focal_;
  double cx_;
  double cy_;
};

/// Binary silhouette and its 4-neighbourhood boundary.
struct SilhouetteMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;
  std::vector<uint8_t> contour;

  SilhouetteMask() = default;
  SilhouetteMask(int w, int h) : width(w), height(h), bits(size_t(w) * h, 0), contour(size_t(w) * h, 0) {}

  [[nodiscard]] bool on(int x, int y) const { return bits[size_t(y) * width + x] != 0; }
  [[nodiscard]] bool on_contour(int x, int y) const { return contour[size_t(y) * width + x] != 0; }
  [[nodiscard]] long area() const;
  /// Tight bounding rectangle of the set bits, nullopt when empty.
  [[nodiscard]] std::optional<Rect> bounding_rect() const;
  /// Recomputes `contour`: set pixels with at least one 4-neighbour that is
  /// unset or outside the raster.
  void update_contour();

  friend bool operator==(const SilhouetteMask&, const SilhouetteMask&) = default;
};

/// Intersection over union of two equally sized masks (0 when both empty).
double mask_iou(const SilhouetteMask& a, const SilhouetteMask& b);

/// Calls span(row, col0, col1) for each run of pixels whose centers the
/// triangle covers, clipped to columns [x_lo, x_hi) and rows [y_lo, y_hi).
template <typename Span>
void scan_triangle(int x_lo, int y_lo, int x_hi, int y_hi, const std::array<double, 2>& a,
                   const std::array<double, 2>& b, const std::array<double, 2>& c, Span&& span) {
  const std::array<const std::array<double, 2>*, 3> v{&a, &b, &c};
  const double ymin = std::min({a[1], b[1], c[1]});
  const double ymax = std::max({a[1], b[1], c[1]});
  const int row0 = std::max(y_lo, static_cast<int>(std::ceil(ymin - 0.5)));
  const int row1 = std::min(y_hi - 1, static_cast<int>(std::floor(ymax - 0.5)));
  for (int row = row0; row <= row1; ++row) {
    const double yc = row + 0.5;
    double xl = std::numeric_limits<double>::infinity();
    double xr = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      const auto& p = *v[k];
      const auto& q = *v[(k + 1) % 3];
      if (p[1] == q[1]) {
        if (p[1] == yc) {
          xl = std::min({xl, p[0], q[0]});
          xr = std::max({xr, p[0], q[0]});
        }
        continue;
      }
      if ((yc - p[1]) * (yc - q[1]) > 0.0) continue;
      const double x = p[0] + (yc - p[1]) * (q[0] - p[0]) / (q[1] - p[1]);
      xl = std::min(xl, x);
      xr = std::max(xr, x);
    }
    if (!(xl <= xr)) continue;
    const int col0 = std::max(x_lo, static_cast<int>(std::ceil(xl - 0.5)));
    const int col1 = std::min(x_hi - 1, static_cast<int>(std::floor(xr - 0.5)));
    if (col0 <= col1) span(row, col0, col1);
  }
}

/// Fills a projected triangle (pixel-center sampling, either winding).
void fill_triangle(SilhouetteMask& mask, const std::array<double, 2>& a,
                   const std::array<double, 2>& b, const std::array<double, 2>& c);

/// Perspective silhouette of a normalized model. The principal point sits at
/// the viewport center; the rasterized silhouette is then translated by
/// `occ` (rounded to whole pixels). `focal` <= 0 selects default_focal.
/// Throws when any vertex lies within the near plane.
SilhouetteMask project_mesh(const CadModel& model, const CameraPose& pose, PixelShift occ,
                            int width, int height, double focal = 0.0);

/// Unshifted silhouette for a width x height viewport (principal point at its
/// center plus `principal`) rasterized over the viewport grown by pad_x /
/// pad_y pixels on each side: raster pixel (x, y) is viewport pixel
/// (x - pad_x, y - pad_y). The coverage of a viewport pixel does not depend
/// on the padding.
SilhouetteMask rasterize_padded(const CadModel& model, const CameraPose& pose, int width, int height,
                                double focal, int pad_x, int pad_y, PixelShift principal = {});

/// Center of the bounding rectangle of the projected vertices, relative to
/// the principal point.
PixelShift projection_center(const CadModel& model, const CameraPose& pose, double focal);

/// The width x height viewport of a padded raster translated by (dx, dy).
/// Pixels brought in from beyond the padding are empty.
SilhouetteMask crop_shifted(const SilhouetteMask& padded, int pad_x, int pad_y, int dx, int dy, int width,
                            int height);

/// Silhouette with an explicit (possibly fractional) principal point.
SilhouetteMask render_silhouette(const CadModel& model, const CameraPose& pose, double focal, double cx,
                                 double cy, int width, int height);

/// Occupancy over the cube [-0.5, 0.5]^3 split into resolution^3 cells.
struct VoxelGrid {
  int resolution = 0;
  int model_count = 0;
  std::vector<uint8_t> occupancy;
  std::vector<int> counts;

  [[nodiscard]] size_t index(int x, int y, int z) const {
    return (size_t(z) * resolution + y) * resolution + x;
  }
  [[nodiscard]] bool occupied(int x, int y, int z) const { return occupancy[index(x, y, z)] != 0; }
  [[nodiscard]] long occupied_count() const;
  /// Cell containing a point (clamped to the grid).
  [[nodiscard]] std::array<int, 3> cell_of(const Vec3& p) const;

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

/// Marks every cell containing at least one vertex of the model.
VoxelGrid voxelize(const CadModel& model, int resolution);

/// Superimposes the models' vertex occupancies; a cell is kept when at least
/// ceil(tau * models.size()) models put a vertex in it.
VoxelGrid superimpose(std::span<const CadModel> models, int resolution, double tau);

/// Surface mesh of the occupied cells: one quad (two triangles) per face
/// shared with an unoccupied cell or the grid border.
CadModel voxel_surface(const VoxelGrid& grid, const std::string& id);

/// Coarse model for a sub-category built from its finer models.
/// Throws when no cell survives the threshold.
CadModel merge_cad_models(std::span<const CadModel> models, int resolution, double tau,
                          const std::string& id = "merged");

/// ASCII OBJ subset: `v x y z` and `f i j k ...` (1-based, fan-split).
/// Other lines are ignored. Face tokens like `3/1/2` use the vertex index.
CadModel read_obj(const std::filesystem::path& path, const std::string& id);
CadModel parse_obj(const std::string& text, const std::string& id);
void write_obj(const std::filesystem::path& path, const CadModel& model);

/// Text voxel export: `resolution N` then one `x y z` line per occupied cell.
void write_voxels(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_voxels(const std::filesystem::path& path);

}  // namespace hierpose
