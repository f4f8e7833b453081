#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mavos/error.hpp"
#include "mavos/flow.hpp"
#include "support.hpp"

using namespace mavos;

namespace {

FlowField random_flow(int h, int w, std::mt19937_64& rng, double scale = 5.0) {
  FlowField f(h, w);
  std::normal_distribution<float> d(0.0f, static_cast<float>(scale));
  for (auto& x : f.u) x = d(rng);
  for (auto& x : f.v) x = d(rng);
  return f;
}

bool same_bits(float a, float b) {
  std::uint32_t x, y;
  std::memcpy(&x, &a, 4);
  std::memcpy(&y, &b, 4);
  return x == y;
}

}  // namespace

TEST_CASE("frame pairing uses the next frame, or the previous one at the end") {
  CHECK(pair_frames(3, 5) == std::pair{3, 4});
  CHECK(pair_frames(4, 5) == std::pair{4, 3});
  CHECK(pair_frames(0, 2) == std::pair{0, 1});
  CHECK(pair_frames(1, 2) == std::pair{1, 0});
  for (int T = 2; T < 8; ++T)
    for (int t = 0; t < T; ++t) {
      auto [s, d] = pair_frames(t, T);
      CHECK(s == t);
      CHECK(std::abs(d - s) == 1);
      CHECK(d >= 0);
      CHECK(d < T);
    }
  CHECK_THROWS_AS(pair_frames(0, 1), UsageError);
  CHECK_THROWS_AS(pair_frames(5, 5), UsageError);
  CHECK_THROWS_AS(pair_frames(-1, 5), UsageError);
}

TEST_CASE(".flo layout and size") {
  FlowField f(4, 8);  // H = 4, W = 8
  f.u[1] = 1.5f;
  f.v[1] = -2.0f;
  const auto bytes = encode_flo(f);
  CHECK(bytes.size() == 268u);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PIEH");
  std::int32_t w, h;
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  CHECK(w == 8);
  CHECK(h == 4);
  float u1, v1;
  std::memcpy(&u1, bytes.data() + 12 + 8, 4);
  std::memcpy(&v1, bytes.data() + 12 + 12, 4);
  CHECK(u1 == 1.5f);
  CHECK(v1 == -2.0f);
}

TEST_CASE(".flo round trip is bit exact") {
  std::mt19937_64 rng(9);
  testing::TempDir tmp;
  FlowField f = random_flow(16, 16, rng);
  f.u[0] = -0.0f;
  f.v[0] = 0.0f;
  f.u[1] = std::numeric_limits<float>::denorm_min();
  f.v[1] = std::numeric_limits<float>::max();
  write_flo(f, tmp / "a.flo");
  const FlowField g = read_flo(tmp / "a.flo");
  REQUIRE(g.height == 16);
  REQUIRE(g.width == 16);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(same_bits(f.u[i], g.u[i]));
    CHECK(same_bits(f.v[i], g.v[i]));
  }
  CHECK(std::signbit(g.u[0]));
}

TEST_CASE("malformed .flo files are data errors") {
  FlowField f(2, 3);
  auto good = encode_flo(f);
  auto bad_magic = good;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK_THROWS_AS(decode_flo(bad_magic), DataError);
  CHECK_THROWS_AS(decode_flo(std::vector<std::uint8_t>(good.begin(), good.end() - 1)), DataError);
  CHECK_THROWS_AS(decode_flo(std::vector<std::uint8_t>(good.begin(), good.begin() + 7)), DataError);
  auto extra = good;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_flo(extra), DataError);
  auto zero_w = good;
  std::int32_t zero = 0;
  std::memcpy(zero_w.data() + 4, &zero, 4);
  CHECK_THROWS_AS(decode_flo(zero_w), DataError);
  auto neg_h = good;
  std::int32_t neg = -3;
  std::memcpy(neg_h.data() + 8, &neg, 4);
  CHECK_THROWS_AS(decode_flo(neg_h), DataError);
  testing::TempDir tmp;
  CHECK_THROWS_AS(read_flo(tmp / "missing.flo"), DataError);
}

TEST_CASE("colour wheel has the 55 Middlebury bins") {
  const auto& wheel = color_wheel();
  REQUIRE(wheel.size() == 55u);
  CHECK(wheel[0] == std::array<float, 3>{255, 0, 0});
  CHECK(wheel[15] == std::array<float, 3>{255, 255, 0});  // RY ends at yellow
  CHECK(wheel[21] == std::array<float, 3>{0, 255, 0});
  CHECK(wheel[25] == std::array<float, 3>{0, 255, 255});
  CHECK(wheel[36] == std::array<float, 3>{0, 0, 255});
  CHECK(wheel[49] == std::array<float, 3>{255, 0, 255});
}

TEST_CASE("flow rendering") {
  std::mt19937_64 rng(4);
  SUBCASE("zero flow renders white") {
    const ImageRGB img = flow_to_rgb(FlowField(5, 7));
    for (float v : img.pixels) CHECK(v == 1.0f);
  }
  SUBCASE("per-frame normalisation is scale invariant") {
    const FlowField f = random_flow(6, 6, rng);
    FlowField g = f;
    for (auto& x : g.u) x *= 4.0f;
    for (auto& x : g.v) x *= 4.0f;
    const ImageRGB a = flow_to_rgb(f), b = flow_to_rgb(g);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) CHECK(a.pixels[i] == doctest::Approx(b.pixels[i]).epsilon(1e-5));
  }
  SUBCASE("magnitude equal to max_mag is fully saturated") {
    // A pure wheel colour has at least one zero channel; at radius 1 the
    // rendering reproduces it exactly.
    FlowField f(1, 1);
    f.u[0] = -3.0f;  // atan2(0, 3) = 0 -> wheel position 27
    const ImageRGB img = flow_to_rgb(f, 3.0);
    const auto& col = color_wheel()[27];
    for (int c = 0; c < 3; ++c) CHECK(img.at(c, 0, 0) == doctest::Approx(col[c] / 255.0).epsilon(1e-6));
    CHECK(*std::min_element(img.pixels.begin(), img.pixels.end()) < 1e-6f);
  }
  SUBCASE("negated flow rotates the hue by half a turn") {
    for (int i = 0; i < 200; ++i) {
      std::uniform_real_distribution<double> d(-4, 4);
      const double u = d(rng), v = d(rng);
      const WheelSample a = wheel_sample(u, v, 5.0), b = wheel_sample(-u, -v, 5.0);
      CHECK(a.radius == doctest::Approx(b.radius));
      CHECK(std::abs(a.position - b.position) == doctest::Approx(27.0));
    }
  }
  SUBCASE("output stays in the unit cube") {
    const FlowField f = random_flow(8, 8, rng, 30.0);
    for (double mm : {0.5, 10.0, 1000.0})
      for (float v : flow_to_rgb(f, mm).pixels) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
  }
}

TEST_CASE("flow corruption") {
  std::mt19937_64 rng(12);
  const FlowField f = random_flow(8, 8, rng);
  SUBCASE("zero-strength noise leaves the field unchanged") {
    const FlowField g = corrupt_flow(f, Corruption::kNoise, 0.0, rng);
    CHECK(g.u == f.u);
    CHECK(g.v == f.v);
  }
  SUBCASE("noise scales with the frame maximum") {
    const FlowField g = corrupt_flow(f, Corruption::kNoise, 1.0, rng);
    double ss = 0;
    for (std::size_t i = 0; i < f.size(); ++i) ss += std::pow(g.u[i] - f.u[i], 2) + std::pow(g.v[i] - f.v[i], 2);
    const double sigma = std::sqrt(ss / (2.0 * f.size()));
    CHECK(sigma == doctest::Approx(f.max_magnitude()).epsilon(0.25));
  }
  SUBCASE("zero") {
    const FlowField g = corrupt_flow(f, Corruption::kZero, 1.0, rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CHECK(g.u[i] == 0.0f);
      CHECK(g.v[i] == 0.0f);
    }
  }
  SUBCASE("shuffle preserves the multiset of vectors") {
    const FlowField g = corrupt_flow(f, Corruption::kShuffle, 1.0, rng);
    std::vector<std::pair<float, float>> a, b;
    for (std::size_t i = 0; i < f.size(); ++i) {
      a.emplace_back(f.u[i], f.v[i]);
      b.emplace_back(g.u[i], g.v[i]);
    }
    CHECK(a != b);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  SUBCASE("same seed, same corruption") {
    std::mt19937_64 r1(77), r2(77);
    CHECK(corrupt_flow(f, Corruption::kNoise, 0.5, r1).u == corrupt_flow(f, Corruption::kNoise, 0.5, r2).u);
  }
  CHECK_THROWS_AS(parse_corruption("blur"), UsageError);
  CHECK(parse_corruption("shuffle") == Corruption::kShuffle);
  CHECK_THROWS_AS(corrupt_flow(f, Corruption::kNoise, -1.0, rng), UsageError);
}
