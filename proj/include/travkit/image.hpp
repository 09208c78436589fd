#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "travkit/errors.hpp"

namespace travkit {

// Dense row-major H x W grid. The workhorse container for masks, depth
// images, label images and per-pixel feature planes.
template <typename T>
class Image {
  public:
    Image() = default;
    Image(int height, int width, T fill = T{})
        : height_(height), width_(width), data_(static_cast<size_t>(height) * width, fill) {}

    int height() const { return height_; }
    int width() const { return width_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool in_bounds(int v, int u) const { return v >= 0 && v < height_ && u >= 0 && u < width_; }

    T& at(int v, int u) { return data_[static_cast<size_t>(v) * width_ + u]; }
    const T& at(int v, int u) const { return data_[static_cast<size_t>(v) * width_ + u]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_size(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    size_t count(T value) const {
        return static_cast<size_t>(std::count(data_.begin(), data_.end(), value));
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
    }

  private:
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using MaskImage = Image<uint8_t>;

inline void require_same_size(const auto& a, const auto& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width())
        throw ShapeError(std::string(what) + ": size mismatch");
}

}  // namespace travkit
