#pragma once

// Region-to-grid supervision: per-region class proportions, the hard/soft
// confidence gate and patch pooling into dense targets.

#include <cstdint>
#include <string>
#include <vector>

#include "usm/types.hpp"

namespace usm {

struct RegionStats {
    std::uint32_t region_id = 0;
    std::vector<double> p;
    int dominant = 0;
    double confidence = 0.0;
    std::size_t area = 0;

    friend bool operator==(const RegionStats&, const RegionStats&) = default;
};

struct AlignConfig {
    double B = 3.0;
    int K = 5;
    int patch = 8;
    bool erosion_band = true;
    /// Width of the excluded boundary ring when erosion_band is set.
    int erosion_width = 1;
    /// When false every element keeps its soft distribution.
    bool tau_gate = true;

    void validate() const;
};

struct TargetMap {
    int grid_h = 0;
    int grid_w = 0;
    int K = 0;
    /// grid_h * grid_w * K, channel-last.
    std::vector<double> y;
    std::vector<double> confidence;
    std::vector<std::uint8_t> hard;

    std::size_t element_count() const noexcept {
        return static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w);
    }
    const double* target(std::size_t u) const noexcept { return y.data() + u * static_cast<std::size_t>(K); }

    friend bool operator==(const TargetMap&, const TargetMap&) = default;
};

double tau_high(double B, int K);

/// One entry per region id 1..max_id, in id order. Every pixel must carry a region.
std::vector<RegionStats> region_stats(const LabelMap& p, const RegionMap& regions, int K);

/// Gives uncovered pixels fresh region ids from the 8-connected components of
/// equal label within them; covered pixels keep their ids.
RegionMap complete_regions(const RegionMap& regions, const LabelMap& labels);

TargetMap build_targets(const std::vector<RegionStats>& stats, const RegionMap& regions, const AlignConfig& cfg);

/// True iff both lists hold identical (p, dominant, confidence) tuples.
bool scale_check(const std::vector<RegionStats>& before, const std::vector<RegionStats>& after);

/// Tab-separated table: id, area, dominant, confidence, then K proportions, printed with %.17g.
std::string format_region_stats(const std::vector<RegionStats>& stats);

}  // namespace usm
