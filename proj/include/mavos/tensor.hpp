#pragma once

#include <cstddef>
#include <vector>

namespace mavos {

// Planar channel-major (C x H x W) map of values.
template <class T>
struct FeatureMap {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, T fill = T(0))
      : c(channels), h(height), w(width),
        data(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const FeatureMap& o) const { return c == o.c && h == o.h && w == o.w; }

  T* channel(int ch) { return data.data() + ch * plane(); }
  const T* channel(int ch) const { return data.data() + ch * plane(); }
  T& at(int ch, int y, int x) { return data[(ch * static_cast<std::size_t>(h) + y) * w + x]; }
  const T& at(int ch, int y, int x) const { return data[(ch * static_cast<std::size_t>(h) + y) * w + x]; }

  template <class U>
  FeatureMap<U> cast() const {
    FeatureMap<U> out(c, h, w);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace mavos
