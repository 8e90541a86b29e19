#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "usm/grid.hpp"

namespace usm {

/// 8-bit grayscale tile.
struct ImageTile {
    Grid<std::uint8_t> pixels;

    int height() const noexcept { return pixels.rows(); }
    int width() const noexcept { return pixels.cols(); }

    friend bool operator==(const ImageTile&, const ImageTile&) = default;
};

/// Dense patch features, channel-last: values[(r * grid_w + c) * dim + k].
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int grid_h, int grid_w, int dim);
    FeatureMap(int grid_h, int grid_w, int dim, std::vector<float> values);

    int grid_h() const noexcept { return grid_h_; }
    int grid_w() const noexcept { return grid_w_; }
    int dim() const noexcept { return dim_; }
    std::size_t element_count() const noexcept {
        return static_cast<std::size_t>(grid_h_) * static_cast<std::size_t>(grid_w_);
    }

    std::span<const float> at(int r, int c) const noexcept { return element(index(r, c)); }
    std::span<float> at(int r, int c) noexcept { return element(index(r, c)); }
    std::span<const float> element(std::size_t u) const noexcept {
        return std::span<const float>(values_).subspan(u * static_cast<std::size_t>(dim_), dim_);
    }
    std::span<float> element(std::size_t u) noexcept {
        return std::span<float>(values_).subspan(u * static_cast<std::size_t>(dim_), dim_);
    }
    std::span<const float> values() const noexcept { return values_; }

    /// Throws std::invalid_argument if any value is non-finite or a dimension is zero.
    void validate() const;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    std::size_t index(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(grid_w_) + static_cast<std::size_t>(c);
    }

    int grid_h_ = 0;
    int grid_w_ = 0;
    int dim_ = 0;
    std::vector<float> values_;
};

/// Per-pixel (or per-patch) class ids; every label < num_classes.
struct LabelMap {
    Grid<std::uint16_t> labels;
    int num_classes = 0;

    LabelMap() = default;
    LabelMap(int height, int width, int num_classes, std::uint16_t fill = 0)
        : labels(height, width, fill), num_classes(num_classes) {}
    LabelMap(Grid<std::uint16_t> labels, int num_classes) : labels(std::move(labels)), num_classes(num_classes) {}

    int height() const noexcept { return labels.rows(); }
    int width() const noexcept { return labels.cols(); }

    void validate() const;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Region identifiers; 0 marks uncovered pixels.
struct RegionMap {
    Grid<std::uint32_t> ids;

    RegionMap() = default;
    RegionMap(int height, int width) : ids(height, width, 0u) {}
    explicit RegionMap(Grid<std::uint32_t> ids) : ids(std::move(ids)) {}

    int height() const noexcept { return ids.rows(); }
    int width() const noexcept { return ids.cols(); }

    std::uint32_t max_id() const noexcept;
    std::size_t uncovered_count() const noexcept;
    /// Pixel count per id, indexed 0..max_id.
    std::vector<std::size_t> areas() const;
    /// True when ids form {0..max} or {1..max} with every nonzero id present.
    bool is_dense() const;

    friend bool operator==(const RegionMap&, const RegionMap&) = default;
};

/// Renumbers nonzero ids to 1..R, preserving their relative order.
RegionMap densify(const RegionMap& regions);

struct Mask {
    Grid<std::uint8_t> bits;
    float saliency = 0.0f;

    std::size_t area() const noexcept;

    friend bool operator==(const Mask&, const Mask&) = default;
};

struct MaskSet {
    int height = 0;
    int width = 0;
    std::vector<Mask> masks;

    void validate() const;

    friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

}  // namespace usm
