#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hierpose {

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  [[nodiscard]] bool empty() const { return w <= 0 || h <= 0; }
  [[nodiscard]] long area() const { return empty() ? 0 : static_cast<long>(w) * h; }
  [[nodiscard]] double center_x() const { return x + 0.5 * w; }
  [[nodiscard]] double center_y() const { return y + 0.5 * h; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Intersection over union of two rectangles, 0 when either is empty.
double iou(const Rect& a, const Rect& b);

/// Row-major grayscale raster, intensities nominally in [0, 1].
class GrayImage {
public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] bool empty() const { return pixels_.empty(); }

  double& at(int x, int y) { return pixels_[static_cast<size_t>(y) * width_ + x]; }
  [[nodiscard]] double at(int x, int y) const {
    return pixels_[static_cast<size_t>(y) * width_ + x];
  }
  /// Clamp-to-edge access.
  [[nodiscard]] double clamped(int x, int y) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  [[nodiscard]] const std::vector<double>& pixels() const { return pixels_; }
  std::vector<double>& pixels() { return pixels_; }

  [[nodiscard]] bool contains(const Rect& r) const {
    return !r.empty() && r.x >= 0 && r.y >= 0 && r.x + r.w <= width_ && r.y + r.h <= height_;
  }

  /// Bilinear resampling of `region` onto an out_w x out_h grid, sampling
  /// source coordinates at target pixel centers (clamped at the border).
  [[nodiscard]] GrayImage resample(const Rect& region, int out_w, int out_h) const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
};

/// An image together with the identifier used to key precomputed data.
struct ImageRef {
  std::string id;
  const GrayImage* image = nullptr;
};

/// Binary 8-bit PGM (P5). Values are quantized to [0, 255].
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace hierpose
