#include "usm/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace usm {

FeatureMap::FeatureMap(int grid_h, int grid_w, int dim)
    : FeatureMap(grid_h, grid_w, dim,
                 std::vector<float>(static_cast<std::size_t>(std::max(0, grid_h)) *
                                    static_cast<std::size_t>(std::max(0, grid_w)) *
                                    static_cast<std::size_t>(std::max(0, dim)))) {}

FeatureMap::FeatureMap(int grid_h, int grid_w, int dim, std::vector<float> values)
    : grid_h_(grid_h), grid_w_(grid_w), dim_(dim), values_(std::move(values)) {
    if (grid_h < 0 || grid_w < 0 || dim < 0) throw std::invalid_argument("FeatureMap: negative dimension");
    const auto expected = static_cast<std::size_t>(grid_h) * static_cast<std::size_t>(grid_w) *
                          static_cast<std::size_t>(dim);
    if (values_.size() != expected)
        throw std::invalid_argument("FeatureMap: expected " + std::to_string(expected) + " values, got " +
                                    std::to_string(values_.size()));
}

void FeatureMap::validate() const {
    if (grid_h_ < 1 || grid_w_ < 1 || dim_ < 1) throw std::invalid_argument("FeatureMap: empty grid");
    for (float v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("FeatureMap: non-finite value");
}

void LabelMap::validate() const {
    if (num_classes < 1) throw std::invalid_argument("LabelMap: num_classes must be >= 1");
    for (auto v : labels)
        if (v >= num_classes)
            throw std::invalid_argument("LabelMap: label " + std::to_string(v) + " >= num_classes " +
                                        std::to_string(num_classes));
}

std::uint32_t RegionMap::max_id() const noexcept {
    std::uint32_t m = 0;
    for (auto v : ids) m = std::max(m, v);
    return m;
}

std::size_t RegionMap::uncovered_count() const noexcept {
    return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), 0u));
}

std::vector<std::size_t> RegionMap::areas() const {
    std::vector<std::size_t> a(static_cast<std::size_t>(max_id()) + 1, 0);
    for (auto v : ids) ++a[v];
    return a;
}

bool RegionMap::is_dense() const {
    const auto a = areas();
    for (std::size_t id = 1; id < a.size(); ++id)
        if (a[id] == 0) return false;
    return true;
}

RegionMap densify(const RegionMap& regions) {
    const auto a = regions.areas();
    std::vector<std::uint32_t> remap(a.size(), 0);
    std::uint32_t next = 1;
    for (std::size_t id = 1; id < a.size(); ++id)
        if (a[id] > 0) remap[id] = next++;
    RegionMap out(regions.height(), regions.width());
    for (std::size_t i = 0; i < regions.ids.size(); ++i) out.ids[i] = remap[regions.ids[i]];
    return out;
}

std::size_t Mask::area() const noexcept {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

void MaskSet::validate() const {
    for (const auto& m : masks) {
        if (!m.bits.same_shape(height, width)) throw std::invalid_argument("MaskSet: mask dimensions differ from tile");
        if (!std::isfinite(m.saliency) || m.saliency < 0.0f || m.saliency > 1.0f)
            throw std::invalid_argument("MaskSet: saliency outside [0,1]");
    }
}

}  // namespace usm
