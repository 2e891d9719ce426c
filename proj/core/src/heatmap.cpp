#include "nips/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace nips {

namespace {

void check_2d(const Tensor& f) {
  if (f.shape.size() != 2 || f.size() == 0)
    throw DimensionError("heatmap: expected a nonempty 2-D field");
}

int gray_level(double v, double lo, double hi) {
  if (hi <= lo) return 0;
  const double t = (v - lo) / (hi - lo);
  return static_cast<int>(std::llround(255.0 * std::clamp(t, 0.0, 1.0)));
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& field) {
  check_2d(field);
  const int rows = field.shape[0], cols = field.shape[1];
  double lo = field.data()[0], hi = field.data()[0];
  for (std::size_t i = 0; i < field.size(); ++i) {
    lo = std::min(lo, field.data()[i]);
    hi = std::max(hi, field.data()[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f << "P5\n" << cols << " " << rows << "\n255\n";
  for (std::size_t i = 0; i < field.size(); ++i)
    f.put(static_cast<char>(gray_level(field.data()[i], lo, hi)));
  if (!f) throw Error("write failed: " + path);
}

void write_svg(const std::string& path, const Tensor& field, int cell_px) {
  check_2d(field);
  const int rows = field.shape[0], cols = field.shape[1];
  double lo = field.data()[0], hi = field.data()[0];
  for (std::size_t i = 0; i < field.size(); ++i) {
    lo = std::min(lo, field.data()[i]);
    hi = std::max(hi, field.data()[i]);
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell_px
    << "\" height=\"" << rows * cell_px << "\" viewBox=\"0 0 " << cols * cell_px
    << " " << rows * cell_px << "\">\n";
  char color[16];
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const int g =
          gray_level(field.data()[static_cast<std::size_t>(i) * cols + j], lo, hi);
      std::snprintf(color, sizeof(color), "#%02x%02x%02x", g, g, g);
      f << "<rect x=\"" << j * cell_px << "\" y=\"" << i * cell_px
        << "\" width=\"" << cell_px << "\" height=\"" << cell_px
        << "\" fill=\"" << color << "\"/>\n";
    }
  f << "</svg>\n";
  if (!f) throw Error("write failed: " + path);
}

}  // namespace nips
