#include <cmath>
#include <random>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mavos/error.hpp"
#include "mavos/metrics.hpp"
#include "support.hpp"

using namespace mavos;
namespace fs = std::filesystem;

namespace {

std::set<std::pair<int, int>> pixel_set(const BinaryMask& m) {
  std::set<std::pair<int, int>> s;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) s.emplace(y, x);
  return s;
}

BinaryMask shift_x(const BinaryMask& m, int dx) {
  BinaryMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x) && x + dx >= 0 && x + dx < m.width) out.at(y, x + dx) = 1;
  return out;
}

BinaryMask flip_x(const BinaryMask& m) {
  BinaryMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.at(y, m.width - 1 - x) = m.at(y, x);
  return out;
}

}  // namespace

TEST_CASE("jaccard fixtures") {
  const BinaryMask block = testing::rect_mask(4, 4, 1, 0, 3, 2);
  const BinaryMask shifted = testing::rect_mask(4, 4, 1, 1, 3, 3);
  CHECK(jaccard(block, shifted) == 1.0 / 3.0);
  CHECK(jaccard(block, block) == 1.0);
  CHECK(jaccard(block, testing::rect_mask(4, 4, 0, 3, 1, 4)) == 0.0);
  CHECK(jaccard(BinaryMask(4, 4), BinaryMask(4, 4)) == 1.0);
  CHECK_THROWS_AS(jaccard(block, BinaryMask(4, 5)), UsageError);
}

TEST_CASE("jaccard equals set counting on random masks") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const BinaryMask a = testing::random_mask(16, 16, rng, 0.3);
    const BinaryMask b = testing::random_mask(16, 16, rng, 0.6);
    const auto sa = pixel_set(a), sb = pixel_set(b);
    std::set<std::pair<int, int>> inter, uni = sa;
    for (const auto& p : sb) {
      if (sa.count(p)) inter.insert(p);
      uni.insert(p);
    }
    CHECK(jaccard(a, b) == static_cast<double>(inter.size()) / static_cast<double>(uni.size()));
    CHECK(jaccard(a, b) == jaccard(b, a));
  }
}

TEST_CASE("boundary extraction") {
  const BinaryMask square = testing::rect_mask(6, 6, 1, 1, 5, 5);
  const BinaryMask b = boundary_map(square);
  CHECK(b.count() == 12u);  // 4x4 block minus its 2x2 interior
  CHECK(b.at(2, 2) == 0);
  // The image edge counts as background.
  const BinaryMask full(3, 3, 1);
  CHECK(boundary_map(full).count() == 8u);
  CHECK(default_boundary_tolerance(480, 854) == 8);
  CHECK(default_boundary_tolerance(64, 64) == 1);
}

TEST_CASE("boundary F") {
  const BinaryMask square = testing::rect_mask(32, 32, 8, 8, 24, 24);
  const auto same = boundary_f(square, square);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f == 1.0);
  CHECK(boundary_f(BinaryMask(8, 8), BinaryMask(8, 8)).f == 1.0);
  CHECK(boundary_f(BinaryMask(8, 8), testing::rect_mask(8, 8, 2, 2, 4, 4)).f == 0.0);
  CHECK(boundary_f(testing::rect_mask(8, 8, 2, 2, 4, 4), BinaryMask(8, 8)).f == 0.0);

  // A one-pixel-wide stripe is all boundary, so a horizontal shift moves
  // every boundary pixel by exactly the shift.
  const int tol = 2;
  const BinaryMask stripe = testing::rect_mask(32, 32, 4, 10, 28, 11);
  CHECK(boundary_f(stripe, shift_x(stripe, tol), tol).f == 1.0);
  CHECK(boundary_f(stripe, shift_x(stripe, -tol), tol).f == 1.0);
  CHECK(boundary_f(stripe, shift_x(stripe, tol + 2), tol).f == 0.0);
  CHECK(boundary_f(stripe, shift_x(stripe, tol + 1), tol).f == 0.0);
  CHECK_THROWS_AS(boundary_f(stripe, BinaryMask(32, 31)), UsageError);
}

TEST_CASE("metric invariants on random masks") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    BinaryMask a = testing::random_mask(20, 20, rng, 0.5);
    BinaryMask b = testing::random_mask(20, 20, rng, 0.5);
    const auto ab = boundary_f(a, b), ba = boundary_f(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    CHECK(ab.f == doctest::Approx(ba.f).epsilon(1e-15));
    for (double v : {ab.precision, ab.recall, ab.f, jaccard(a, b)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(jaccard(flip_x(a), flip_x(b)) == jaccard(a, b));
    CHECK(boundary_f(flip_x(a), flip_x(b)).f == doctest::Approx(ab.f).epsilon(1e-15));
    if (a.count()) {
      CHECK(jaccard(a, a) == 1.0);
      CHECK(boundary_f(a, a).f == 1.0);
    }
  }
}

TEST_CASE("aggregation is the mean of sequence means") {
  std::vector<FrameScore> frames;
  // Sequence a: 3 frames averaging J = 0.4; sequence b: 1 frame with J = 0.8.
  frames.push_back({"a", "0", 0.2, 1.0, 0.0});
  frames.push_back({"a", "1", 0.4, 1.0, 0.0});
  frames.push_back({"a", "2", 0.6, 1.0, 0.0});
  frames.push_back({"b", "0", 0.8, 0.5, 0.0});
  const EvalReport r = aggregate_scores(frames);
  REQUIRE(r.per_sequence.size() == 2u);
  CHECK(r.per_sequence[0].j == doctest::Approx(0.4));
  CHECK(r.per_sequence[1].j == doctest::Approx(0.8));
  CHECK(r.j == doctest::Approx(0.6));
  CHECK(r.f == doctest::Approx(0.75));
  CHECK(r.g == doctest::Approx((r.j + r.f) / 2));
  for (const auto& s : r.per_sequence) CHECK(s.g == doctest::Approx((s.j + s.f) / 2));
}

TEST_CASE("group-by prefix") {
  std::vector<FrameScore> frames = {
      {"car-01", "0", 0.2, 0.2, 0}, {"car-02", "0", 0.4, 0.4, 0}, {"dog-01", "0", 1.0, 1.0, 0}};
  EvalOptions opts;
  opts.group_delimiter = '-';
  const EvalReport r = aggregate_scores(frames, opts);
  REQUIRE(r.per_group.size() == 2u);
  CHECK(r.per_group.at("car").j == doctest::Approx(0.3));
  CHECK(r.per_group.at("car").frames == 2);
  CHECK(r.per_group.at("dog").g == doctest::Approx(1.0));
  CHECK(r.to_json().contains("groups"));
}

TEST_CASE("dataset evaluation from disk") {
  testing::TempDir tmp;
  std::mt19937_64 rng(3);
  std::vector<BinaryMask> gt;
  for (int t = 0; t < 4; ++t) {
    gt.push_back(testing::random_mask(16, 16, rng));
    fs::create_directories(tmp / "pred/seq");
    write_mask_png(gt.back(), tmp / ("pred/seq/0000" + std::to_string(t) + ".png"));
  }
  // Sparse annotation: only frames 0 and 2 have ground truth.
  fs::create_directories(tmp / "gt/Annotations/seq");
  write_mask_png(gt[0], tmp / "gt/Annotations/seq/00000.png");
  write_mask_png(gt[2], tmp / "gt/Annotations/seq/00002.png");
  const EvalReport r = evaluate_dataset(tmp / "pred", tmp / "gt");
  CHECK(r.per_frame.size() == 2u);
  CHECK(r.j == 1.0);
  CHECK(r.f == 1.0);
  CHECK(r.g == 1.0);
  r.write_json(tmp / "report.json");
  r.write_csv(tmp / "report.csv");
  const auto j = nlohmann::json::parse(std::ifstream(tmp / "report.json"));
  CHECK(j["dataset"]["G"] == 1.0);
  CHECK(j["sequences"]["seq"]["frames"].size() == 2u);

  // A plain directory of sequences also works as ground truth.
  CHECK(evaluate_dataset(tmp / "pred", tmp / "gt/Annotations").per_frame.size() == 2u);

  fs::remove(tmp / "pred/seq/00002.png");
  try {
    evaluate_dataset(tmp / "pred", tmp / "gt");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("seq/00002") != std::string::npos);
  }
}
