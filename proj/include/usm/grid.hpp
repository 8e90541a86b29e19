#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace usm {

/// Dense row-major 2-D grid.
template <typename T>
class Grid {
public:
    Grid() = default;

    Grid(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative dimension");
        data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
    }

    Grid(int rows, int cols, std::vector<T> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative dimension");
        if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
            throw std::invalid_argument("Grid: value count does not match dimensions");
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool in_bounds(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }
    std::size_t index(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }

    T& operator()(int r, int c) noexcept {
        assert(in_bounds(r, c));
        return data_[index(r, c)];
    }
    const T& operator()(int r, int c) const noexcept {
        assert(in_bounds(r, c));
        return data_[index(r, c)];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(int rows, int cols) const noexcept { return rows_ == rows && cols_ == cols; }
    template <typename U>
    bool same_shape(const Grid<U>& other) const noexcept {
        return rows_ == other.rows() && cols_ == other.cols();
    }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

/// Nearest-neighbour upsampling by an integer factor in both axes.
template <typename T>
Grid<T> upsample_nearest(const Grid<T>& g, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
    Grid<T> out(g.rows() * factor, g.cols() * factor);
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c) out(r, c) = g(r / factor, c / factor);
    return out;
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace usm
