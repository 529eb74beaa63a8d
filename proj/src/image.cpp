#include "hierpose/image.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hierpose/error.hpp"

namespace hierpose {

double iou(const Rect& a, const Rect& b) {
  if (a.empty() || b.empty()) return 0.0;
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  const long inter = (x1 > x0 && y1 > y0) ? static_cast<long>(x1 - x0) * (y1 - y0) : 0;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height), pixels_(static_cast<size_t>(width) * height, fill) {
  if (width < 0 || height < 0) throw Error("GrayImage: negative size");
}

GrayImage GrayImage::resample(const Rect& region, int out_w, int out_h) const {
  if (region.empty()) throw Error("resample: empty region");
  if (!contains(region)) throw Error("resample: region outside image");
  // Samples are clamped to the region itself, so the result depends only on
  // pixels inside it.
  const int x_lo = region.x, x_hi = region.x + region.w - 1;
  const int y_lo = region.y, y_hi = region.y + region.h - 1;
  GrayImage out(out_w, out_h);
  const double sx = static_cast<double>(region.w) / out_w;
  const double sy = static_cast<double>(region.h) / out_h;
  for (int j = 0; j < out_h; ++j) {
    // Source coordinate of the target pixel center, in pixel-index space.
    const double fy = region.y + (j + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    for (int i = 0; i < out_w; ++i) {
      const double fx = region.x + (i + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      const int xa = std::clamp(x0, x_lo, x_hi), xb = std::clamp(x0 + 1, x_lo, x_hi);
      const int ya = std::clamp(y0, y_lo, y_hi), yb = std::clamp(y0 + 1, y_lo, y_hi);
      const double a = at(xa, ya);
      const double b = at(xb, ya);
      const double c = at(xa, yb);
      const double d = at(xb, yb);
      // lerp form keeps constant patches exactly constant
      const double top = a + tx * (b - a);
      const double bot = c + tx * (d - c);
      out.at(i, j) = top + ty * (bot - top);
    }
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> bytes(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), bytes.begin(), [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  return {};
}

int next_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = next_token(in);
  int v = 0;
  const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || end != tok.data() + tok.size())
    throw Error(path.string() + ": bad PGM token '" + tok + "'");
  return v;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P5" && magic != "P2") throw Error(path.string() + ": not a PGM file");
  const int w = next_int(in, path);
  const int h = next_int(in, path);
  const int maxval = next_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw Error(path.string() + ": unsupported PGM header");
  GrayImage img(w, h);
  if (magic == "P5") {
    in.get();
    std::vector<unsigned char> bytes(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
      throw Error(path.string() + ": truncated PGM data");
    for (size_t i = 0; i < bytes.size(); ++i) img.pixels()[i] = bytes[i] / static_cast<double>(maxval);
  } else {
    for (auto& v : img.pixels()) v = next_int(in, path) / static_cast<double>(maxval);
  }
  return img;
}

}  // namespace hierpose
