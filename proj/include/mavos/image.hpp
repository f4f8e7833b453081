#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mavos/tensor.hpp"

namespace mavos {

// RGB image with values in [0, 1], stored planar (3 x H x W).
struct ImageRGB {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  ImageRGB() = default;
  ImageRGB(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(3) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int ch, int y, int x) { return pixels[ch * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int ch, int y, int x) const { return pixels[ch * plane() + static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }

  FeatureMap<float> as_map() const;
  static ImageRGB from_map(const FeatureMap<float>& m);
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  BinaryMask() = default;
  BinaryMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool is_binary() const;
};

// How an 8-bit annotation is mapped to {0, 1}.
enum class MaskRule {
  kAnyNonzero,     // label maps (VOS annotations)
  kHalfThreshold,  // grayscale saliency maps: value / 255 > 0.5
};

ImageRGB read_image(const std::filesystem::path& path);
void write_image_png(const ImageRGB& image, const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path, MaskRule rule);
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

// Bicubic resize followed by clamping to [0, 1].
ImageRGB resize_bicubic(const ImageRGB& image, int height, int width);
BinaryMask resize_nearest(const BinaryMask& mask, int height, int width);
// Bicubic resize of a {0,1} mask, then quantization at value > 0.5.
BinaryMask resize_bicubic_quantized(const BinaryMask& mask, int height, int width);
// Bicubic resize of a single real-valued plane without clamping.
std::vector<float> resize_plane_bicubic(const std::vector<float>& plane, int h, int w, int out_h,
                                        int out_w);

ImageRGB flip_horizontal(const ImageRGB& image);

}  // namespace mavos
