#pragma once

#include <string>

#include "nips/tensor.hpp"

namespace nips {

/// 8-bit grayscale PGM (binary P5) of a 2-D field, min-max normalized;
/// constant fields map to black. Byte-stable for identical input.
void write_pgm(const std::string& path, const Tensor& field);

/// SVG heatmap of a 2-D field with one rect per cell, same normalization.
void write_svg(const std::string& path, const Tensor& field,
               int cell_px = 16);

}  // namespace nips
