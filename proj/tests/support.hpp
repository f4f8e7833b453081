#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "mavos/image.hpp"
#include "mavos/tensor.hpp"

namespace testing {

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("mavos_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

template <class T>
mavos::FeatureMap<T> random_map(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  mavos::FeatureMap<T> m(c, h, w);
  for (auto& v : m.data) v = static_cast<T>(d(rng));
  return m;
}

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

inline mavos::BinaryMask random_mask(int h, int w, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution d(p);
  mavos::BinaryMask m(h, w);
  for (auto& v : m.pixels) v = d(rng) ? 1 : 0;
  return m;
}

inline mavos::BinaryMask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
  mavos::BinaryMask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

inline mavos::ImageRGB random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  mavos::ImageRGB img(h, w);
  for (auto& v : img.pixels) v = d(rng);
  return img;
}

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testing
