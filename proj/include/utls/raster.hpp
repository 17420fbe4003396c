#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace utls {

/// Every module reports failures with this type; the message is the
/// diagnostic the CLI prints verbatim.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major 2-D array.
template <class T>
class Raster {
public:
    Raster() = default;
    Raster(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw Error("raster dimensions must be non-negative");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::span<T> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const T> row(int r) const {
        return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }

    bool operator==(const Raster&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using GrayImage = Raster<std::uint8_t>;
/// Binary image, 0 or 1 per pixel.
using Mask = Raster<std::uint8_t>;
/// 0 = background, k >= 1 = region k.
using LabelImage = Raster<std::uint16_t>;

struct RgbImage {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> rgb;  ///< interleaved R, G, B
};

}  // namespace utls
