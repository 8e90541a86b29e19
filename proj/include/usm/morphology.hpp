#pragma once

#include <cstdint>

#include "usm/grid.hpp"

namespace usm {

using BinaryGrid = Grid<std::uint8_t>;

enum class Connectivity { Four, Eight };

/// Dilation with a (2r+1)^2 square; pixels outside the grid count as background.
BinaryGrid dilate_square(const BinaryGrid& mask, int radius);

/// Erosion with a (2r+1)^2 square; pixels outside the grid are ignored, so
/// erode(dilate(x)) never removes a pixel of x at the border.
BinaryGrid erode_square(const BinaryGrid& mask, int radius);

BinaryGrid close_square(const BinaryGrid& mask, int radius);

/// Zhang-Suen thinning to a one-pixel-wide skeleton.
///
/// Candidates are selected in parallel per sub-iteration as in the classic
/// algorithm, then removed in raster order only if they are still simple
/// points (2 <= B <= 6, A == 1) on the partially updated image. This keeps the
/// 8-connected component count unchanged, including for 2x2 blocks that the
/// purely parallel rule would erase.
BinaryGrid zhang_suen_thin(const BinaryGrid& mask);

/// Exact Euclidean distance from each foreground pixel to the nearest
/// background pixel, where everything outside the grid is background.
/// Background pixels get 0.
Grid<double> distance_transform(const BinaryGrid& mask);

/// Connected-component labels 1..n (0 for background).
struct Components {
    Grid<int> labels;
    int count = 0;
};
Components label_components(const BinaryGrid& mask, Connectivity conn);

}  // namespace usm
