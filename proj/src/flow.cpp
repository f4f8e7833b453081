#include "mavos/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>

#include "mavos/error.hpp"

namespace mavos {
namespace {

constexpr char kMagic[4] = {'P', 'I', 'E', 'H'};
constexpr std::int64_t kMaxPixels = std::int64_t{1} << 28;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

template <class T>
T get_le(const std::uint8_t* p) {
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::vector<std::array<float, 3>> build_wheel() {
  constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<float, 3>> wheel;
  wheel.reserve(RY + YG + GC + CB + BM + MR);
  auto ramp = [](int i, int n) { return std::floor(255.0f * i / n); };
  for (int i = 0; i < RY; ++i) wheel.push_back({255.0f, ramp(i, RY), 0.0f});
  for (int i = 0; i < YG; ++i) wheel.push_back({255.0f - ramp(i, YG), 255.0f, 0.0f});
  for (int i = 0; i < GC; ++i) wheel.push_back({0.0f, 255.0f, ramp(i, GC)});
  for (int i = 0; i < CB; ++i) wheel.push_back({0.0f, 255.0f - ramp(i, CB), 255.0f});
  for (int i = 0; i < BM; ++i) wheel.push_back({ramp(i, BM), 0.0f, 255.0f});
  for (int i = 0; i < MR; ++i) wheel.push_back({255.0f, 0.0f, 255.0f - ramp(i, MR)});
  return wheel;
}

}  // namespace

float FlowField::max_magnitude() const {
  float best = 0.0f;
  for (std::size_t i = 0; i < u.size(); ++i) best = std::max(best, std::hypot(u[i], v[i]));
  return best;
}

std::pair<int, int> pair_frames(int t, int T) {
  if (T < 2) throw UsageError("frame pairing needs at least 2 frames, got " + std::to_string(T));
  if (t < 0 || t >= T)
    throw UsageError("frame index " + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
  return t < T - 1 ? std::pair{t, t + 1} : std::pair{t, t - 1};
}

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
  if (flow.height <= 0 || flow.width <= 0) throw UsageError("cannot encode an empty flow field");
  std::vector<std::uint8_t> out;
  out.reserve(12 + flow.size() * 8);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::int32_t>(out, flow.width);
  put_le<std::int32_t>(out, flow.height);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    put_le<float>(out, flow.u[i]);
    put_le<float>(out, flow.v[i]);
  }
  return out;
}

FlowField decode_flo(const std::vector<std::uint8_t>& bytes, std::string_view origin) {
  const std::string where(origin);
  if (bytes.size() < 12) throw DataError(where + ": truncated .flo header (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError(where + ": bad .flo magic (expected PIEH)");
  const auto width = get_le<std::int32_t>(bytes.data() + 4);
  const auto height = get_le<std::int32_t>(bytes.data() + 8);
  if (width <= 0 || height <= 0)
    throw DataError(where + ": nonpositive .flo dimensions " + std::to_string(width) + "x" + std::to_string(height));
  if (static_cast<std::int64_t>(width) * height > kMaxPixels) throw DataError(where + ": .flo dimensions too large");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  const std::size_t expected = 12 + n * 8;
  if (bytes.size() < expected)
    throw DataError(where + ": truncated .flo payload (" + std::to_string(bytes.size()) + " of " +
                    std::to_string(expected) + " bytes)");
  if (bytes.size() > expected) throw DataError(where + ": trailing bytes after .flo payload");
  FlowField flow(height, width);
  const std::uint8_t* p = bytes.data() + 12;
  for (std::size_t i = 0; i < n; ++i, p += 8) {
    flow.u[i] = get_le<float>(p);
    flow.v[i] = get_le<float>(p + 4);
  }
  return flow;
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open flow file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flo(bytes, path.string());
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
  const auto bytes = encode_flo(flow);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write flow file: " + path.string());
}

const std::vector<std::array<float, 3>>& color_wheel() {
  static const auto wheel = build_wheel();
  return wheel;
}

WheelSample wheel_sample(double u, double v, double normaliser) {
  const double fx = u / normaliser;
  const double fy = v / normaliser;
  const double ncols = static_cast<double>(color_wheel().size());
  const double a = std::atan2(-fy, -fx) / M_PI;
  return {(a + 1.0) / 2.0 * (ncols - 1.0), std::sqrt(fx * fx + fy * fy)};
}

ImageRGB flow_to_rgb(const FlowField& flow, std::optional<double> max_mag) {
  const auto& wheel = color_wheel();
  const int ncols = static_cast<int>(wheel.size());
  const double normaliser =
      std::max(max_mag.value_or(static_cast<double>(flow.max_magnitude())), kFlowMagnitudeFloor);
  ImageRGB out(flow.height, flow.width);
  const std::size_t plane = out.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    const WheelSample s = wheel_sample(flow.u[i], flow.v[i], normaliser);
    const int k0 = std::min(static_cast<int>(s.position), ncols - 1);
    const int k1 = (k0 + 1) % ncols;
    const double f = s.position - k0;
    for (int c = 0; c < 3; ++c) {
      double col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
      if (s.radius <= 1.0) {
        col = 1.0 - s.radius * (1.0 - col);
      } else {
        col *= 0.75;
      }
      out.pixels[c * plane + i] = static_cast<float>(std::clamp(col, 0.0, 1.0));
    }
  }
  return out;
}

Corruption parse_corruption(std::string_view name) {
  if (name == "noise") return Corruption::kNoise;
  if (name == "zero") return Corruption::kZero;
  if (name == "shuffle") return Corruption::kShuffle;
  throw UsageError("unknown flow corruption mode '" + std::string(name) + "' (expected noise|zero|shuffle)");
}

FlowField corrupt_flow(const FlowField& flow, Corruption mode, double strength, std::mt19937_64& rng) {
  if (!(strength >= 0.0)) throw UsageError("corruption strength must be >= 0");
  FlowField out = flow;
  switch (mode) {
    case Corruption::kNoise: {
      const double sigma = strength * flow.max_magnitude();
      if (sigma == 0.0) break;
      std::normal_distribution<double> noise(0.0, sigma);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.u[i] = static_cast<float>(out.u[i] + noise(rng));
        out.v[i] = static_cast<float>(out.v[i] + noise(rng));
      }
      break;
    }
    case Corruption::kZero:
      std::fill(out.u.begin(), out.u.end(), 0.0f);
      std::fill(out.v.begin(), out.v.end(), 0.0f);
      break;
    case Corruption::kShuffle: {
      std::vector<std::size_t> order(flow.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < order.size(); ++i) {
        out.u[i] = flow.u[order[i]];
        out.v[i] = flow.v[order[i]];
      }
      break;
    }
  }
  return out;
}

}  // namespace mavos
