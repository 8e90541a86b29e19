#pragma once

// Stage I structure: prompt placement, mask filtering, conflict-aware
// compositing, closing, coverage filling and skeleton-based width division.

#include <cstdint>
#include <vector>

#include "usm/types.hpp"

namespace usm {

enum class PromptMode { JitteredGrid, PoissonDisk };

struct Point {
    int row = 0;
    int col = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

struct PromptSet {
    std::vector<Point> points;
    int spacing = 0;
    double jitter = 0.0;
    std::uint64_t seed = 0;
    /// Set when spacing exceeds the shorter tile side; points is then empty.
    bool spacing_too_large = false;
};

struct ProposalConfig {
    int min_area = 32;
    float min_saliency = 0.5f;
    double iou_threshold = 0.5;
    int closing_radius = 1;
    double elongation_threshold = 4.0;
    /// Skeleton pixels with radius below split_ratio * (max skeleton radius) are cut points.
    double split_ratio = 0.5;
    int prompt_spacing = 32;
    double prompt_jitter = 0.5;

    void validate() const;
};

PromptSet sample_prompts(int height, int width, int spacing, double jitter, PromptMode mode, std::uint64_t seed);

/// Keeps masks with area >= min_area and saliency >= min_saliency, in input order.
MaskSet filter_masks(const MaskSet& masks, const ProposalConfig& cfg);

/// Paints masks in descending saliency (ties: larger area, then input order).
/// A mask whose IoU with the painted foreground reaches iou_threshold is
/// skipped; otherwise its uncovered pixels get the next region id.
RegionMap composite_masks(const MaskSet& masks, const ProposalConfig& cfg);

/// Per-region square closing that only claims uncovered pixels. A pixel
/// claimed by several regions goes to the one with more 8-neighbours in it,
/// ties to the lower id.
RegionMap close_regions(const RegionMap& regions, int radius);

struct FillResult {
    RegionMap regions;
    bool no_coverage = false;
};
/// Multi-source 4-connected BFS from painted pixels; equidistant ties go to the lower id.
FillResult fill_coverage(const RegionMap& regions);

/// Shape statistics used by divide_elongated, exposed for inspection and tests.
struct SkeletonInfo {
    std::size_t skeleton_length = 0;
    double mean_radius = 0.0;
    double max_radius = 0.0;
    double elongation = 0.0;
};
SkeletonInfo skeleton_info(const RegionMap& regions, std::uint32_t id);

/// Splits regions whose skeleton is long relative to its width at narrow
/// necks; every pixel of a split region goes to its geodesically nearest
/// skeleton branch. Output ids are dense.
RegionMap divide_elongated(const RegionMap& regions, const ProposalConfig& cfg);

/// Full structural chain: filter, composite, close, fill, one radius-1
/// growing pass, width division.
RegionMap build_region_map(const MaskSet& masks, const ProposalConfig& cfg);

}  // namespace usm
