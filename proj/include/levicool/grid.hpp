#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace levicool {

/// Row-major 2-D array; rows run along the axial (z) direction, columns along x.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
    const T& operator()(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

}  // namespace levicool
