#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "mavos/image.hpp"

namespace mavos {

// Dense displacement field in pixels/frame from source_frame to target_frame.
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<float> u;
  std::vector<float> v;
  int source_frame = 0;
  int target_frame = 0;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), u(static_cast<std::size_t>(h) * w, 0.0f),
        v(static_cast<std::size_t>(h) * w, 0.0f) {}

  std::size_t size() const { return u.size(); }
  float max_magnitude() const;
};

// Forward pairing with the previous frame substituted for the last one.
// Throws UsageError when T < 2 or t is outside [0, T).
std::pair<int, int> pair_frames(int t, int T);

// Middlebury .flo: "PIEH", int32 width, int32 height, then H*W (u, v)
// float32 pairs, all little-endian.
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_flo(const FlowField& flow);
FlowField decode_flo(const std::vector<std::uint8_t>& bytes, std::string_view origin = "<memory>");

// Middlebury 55-bin colour wheel (RY 15, YG 6, GC 4, CB 11, BM 13, MR 6),
// entries in [0, 255].
const std::vector<std::array<float, 3>>& color_wheel();

struct WheelSample {
  double position;  // fractional index into the colour wheel, in [0, ncols - 1]
  double radius;    // magnitude / normaliser
};
WheelSample wheel_sample(double u, double v, double normaliser);

inline constexpr double kFlowMagnitudeFloor = 1e-6;

// Colour-wheel rendering. Without max_mag the field is normalised by its own
// maximum magnitude (floored at kFlowMagnitudeFloor).
ImageRGB flow_to_rgb(const FlowField& flow, std::optional<double> max_mag = std::nullopt);

enum class Corruption { kNoise, kZero, kShuffle };
Corruption parse_corruption(std::string_view name);

// noise: i.i.d. Gaussian per component with sigma = strength * max magnitude.
// zero: all vectors zeroed. shuffle: seeded spatial permutation of vectors.
FlowField corrupt_flow(const FlowField& flow, Corruption mode, double strength, std::mt19937_64& rng);

}  // namespace mavos
