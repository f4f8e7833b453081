#include <cmath>
#include <random>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "doctest.h"
#include "mavos/data.hpp"
#include "mavos/error.hpp"
#include "support.hpp"

using namespace mavos;
namespace fs = std::filesystem;

namespace {

SyntheticDataset small_synthetic(int seqs, int frames, int sod, std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.n_sequences = seqs;
  cfg.frames_per_seq = frames;
  cfg.n_sod = sod;
  std::mt19937_64 rng(seed);
  return generate_synthetic_dataset(cfg, rng);
}

}  // namespace

TEST_CASE("VOS dataset round trip through disk") {
  testing::TempDir tmp;
  const auto ds = small_synthetic(2, 5, 0);
  write_vos_dataset(ds.vos, tmp.path);
  const auto loaded = load_vos_dataset(tmp.path);
  REQUIRE(loaded.size() == 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(loaded[s].name == ds.vos[s].name);
    REQUIRE(loaded[s].frames.size() == 5u);
    for (std::size_t t = 0; t < 5; ++t) {
      const Sample& a = ds.vos[s].frames[t];
      const Sample& b = loaded[s].frames[t];
      CHECK(b.validity == 1);
      CHECK(b.mask.pixels == a.mask.pixels);
      CHECK(b.flow->u == a.flow->u);
      CHECK(b.flow_rgb.has_value());
      // Synthetic images are already 8-bit quantised.
      for (std::size_t i = 0; i < a.image.pixels.size(); ++i) REQUIRE(b.image.pixels[i] == a.image.pixels[i]);
    }
  }
}

TEST_CASE("VOS loader errors") {
  testing::TempDir tmp;
  CHECK_THROWS_AS(load_vos_dataset(tmp / "nothing"), DataError);
  fs::create_directories(tmp / "empty/JPEGImages");
  CHECK_THROWS_AS(load_vos_dataset(tmp / "empty"), DataError);

  const auto ds = small_synthetic(1, 3, 0);
  write_vos_dataset(ds.vos, tmp / "ds");
  fs::remove(tmp / "ds/Flows/synth_000/00001.flo");
  try {
    load_vos_dataset(tmp / "ds");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("synth_000/00001") != std::string::npos);
  }
}

TEST_CASE("VOS annotations binarise any nonzero label") {
  testing::TempDir tmp;
  cv::Mat m(4, 4, CV_8UC1, cv::Scalar(0));
  m.at<std::uint8_t>(0, 0) = 255;
  m.at<std::uint8_t>(1, 1) = 1;
  m.at<std::uint8_t>(2, 2) = 128;
  cv::imwrite((tmp / "m.png").string(), m);
  const BinaryMask any = read_mask(tmp / "m.png", MaskRule::kAnyNonzero);
  CHECK(any.count() == 3u);
  CHECK(any.is_binary());
  const BinaryMask half = read_mask(tmp / "m.png", MaskRule::kHalfThreshold);
  CHECK(half.count() == 2u);  // 128/255 > 0.5, 1/255 is not
}

TEST_CASE("SOD dataset loading") {
  testing::TempDir tmp;
  const auto ds = small_synthetic(0, 2, 10);
  write_sod_dataset(ds.sod, tmp.path);
  const auto loaded = load_sod_dataset(tmp.path);
  REQUIRE(loaded.size() == 10u);
  for (const auto& s : loaded) {
    CHECK(s.validity == 0);
    CHECK_FALSE(s.flow.has_value());
    const ImageRGB m = motion_slot(s);
    CHECK(m.height == s.image.height);
    for (float v : m.pixels) REQUIRE(v == 0.0f);
  }
  fs::remove(tmp / "Masks/00003.png");
  try {
    load_sod_dataset(tmp.path);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("00003") != std::string::npos);
  }
}

TEST_CASE("resize rules") {
  std::mt19937_64 rng(3);
  Sample s;
  s.image = testing::random_image(40, 40, rng);
  s.mask = testing::random_mask(40, 40, rng);
  SUBCASE("identity resize") {
    s.validity = 0;
    const Sample r = resize_sample(s, 40);
    CHECK(r.mask.pixels == s.mask.pixels);
    for (std::size_t i = 0; i < s.image.pixels.size(); ++i)
      CHECK(std::abs(r.image.pixels[i] - s.image.pixels[i]) <= 1e-6f);
  }
  SUBCASE("VOS masks stay binary at any size") {
    s.validity = 1;
    s.flow_rgb = testing::random_image(40, 40, rng);
    for (int res : {16, 33, 64, 97}) {
      const Sample r = resize_sample(s, res);
      CHECK(r.mask.is_binary());
      CHECK(r.mask.height == res);
      for (float v : r.image.pixels) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
      }
    }
  }
  SUBCASE("VOS masks use nearest sampling") {
    s.validity = 1;
    s.mask = testing::rect_mask(40, 40, 0, 0, 20, 40);
    const Sample r = resize_sample(s, 20);
    CHECK(r.mask.pixels == testing::rect_mask(20, 20, 0, 0, 10, 20).pixels);
  }
  SUBCASE("SOD masks are bicubically resized then thresholded at 0.5") {
    s.validity = 0;
    s.mask = testing::rect_mask(40, 40, 10, 10, 30, 30);
    const Sample r = resize_sample(s, 64);
    CHECK(r.mask.is_binary());
    const BinaryMask direct = resize_bicubic_quantized(s.mask, 64, 64);
    CHECK(r.mask.pixels == direct.pixels);
    const double area = static_cast<double>(r.mask.count());
    CHECK(area == doctest::Approx(32.0 * 32.0).epsilon(0.1));
  }
  SUBCASE("raw flow vectors scale with the resize") {
    s.validity = 1;
    s.flow = FlowField(40, 40);
    for (auto& u : s.flow->u) u = 2.0f;
    s.flow_rgb = flow_to_rgb(*s.flow);
    const Sample r = resize_sample(s, 80);
    for (float u : r.flow->u) CHECK(u == doctest::Approx(4.0f));
  }
  CHECK_THROWS_AS(resize_sample(s, 15), UsageError);
}

TEST_CASE("motion inputs follow the indexing trick") {
  const int B = 3;
  const std::size_t row = 6;
  std::mt19937_64 rng(1);
  const auto flows = testing::random_vec<float>(B * row, rng);
  const auto images = testing::random_vec<float>(B * row, rng);
  const std::vector<float> idx = {1.0f, 0.0f, 1.0f};
  const auto m = assemble_motion_inputs(flows, images, idx, B, row);
  for (int b = 0; b < B; ++b)
    for (std::size_t j = 0; j < row; ++j) {
      const float expect = idx[b] == 1.0f ? flows[b * row + j] : images[b * row + j];
      CHECK(m[b * row + j] == expect);
    }
}

TEST_CASE("batch sampler") {
  const auto ds = small_synthetic(3, 4, 5);
  SUBCASE("p_sod = 0 gives flow everywhere") {
    std::mt19937_64 rng(2);
    const TrainingBatch b = sample_training_batch(ds.vos, ds.sod, 0.0, 6, 32, rng);
    for (int i = 0; i < 6; ++i) {
      CHECK(b.indices[i] == 1.0f);
      const FeatureMap<float> m = b.motion_input(i);
      const std::size_t n = 3 * b.plane();
      CHECK(std::equal(m.data.begin(), m.data.end(), b.flows.begin() + i * n));
    }
  }
  SUBCASE("image-only slots reuse the image") {
    std::mt19937_64 rng(3);
    const TrainingBatch b = sample_training_batch(ds.vos, ds.sod, 1.0, 4, 32, rng);
    for (int i = 0; i < 4; ++i) {
      CHECK(b.indices[i] == 0.0f);
      CHECK(b.motion_input(i).data == b.image(i).data);
      CHECK(b.provenance[i].rfind("sod/", 0) == 0);
    }
    CHECK(b.sod_fraction() == 1.0);
  }
  SUBCASE("same seed, same batch") {
    std::mt19937_64 r1(9), r2(9);
    const TrainingBatch a = sample_training_batch(ds.vos, ds.sod, 0.5, 5, 32, r1);
    const TrainingBatch b = sample_training_batch(ds.vos, ds.sod, 0.5, 5, 32, r2);
    CHECK(a.provenance == b.provenance);
    CHECK(a.motion_inputs == b.motion_inputs);
  }
  SUBCASE("errors") {
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(sample_training_batch(ds.vos, ds.sod, 0.5, 0, 32, rng), UsageError);
    CHECK_THROWS_AS(sample_training_batch(ds.vos, ds.sod, 1.5, 2, 32, rng), UsageError);
    CHECK_THROWS_AS(sample_training_batch(ds.vos, {}, 0.5, 2, 32, rng), UsageError);
  }
}

TEST_CASE("sampler SOD fraction stays inside the binomial band") {
  const auto ds = small_synthetic(2, 2, 2);
  std::mt19937_64 rng(0);
  // Only the Bernoulli choice matters here; a 1-sample batch per draw at the
  // smallest size keeps this fast.
  int sod = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) sod += sample_training_batch(ds.vos, ds.sod, 0.75, 1, 16, rng).indices[0] == 0.0f;
  const double band = 3.0 * std::sqrt(0.75 * 0.25 / n);
  CHECK(band == doctest::Approx(0.013).epsilon(0.01));
  const double frac = static_cast<double>(sod) / n;
  CHECK(frac >= 0.737);
  CHECK(frac <= 0.763);
}

TEST_CASE("synthetic generator") {
  SUBCASE("disk moving right carries its velocity inside the support") {
    ShapeTrack disk{ShapeKind::kDisk, 20.0, 24.0, 8.0, 8.0, 2.0, 0.0, 1.0f, 0.0f, 0.0f};
    const std::vector<double> bg(3 * 13, 0.0);  // flat black background
    for (int t : {0, 3}) {
      const Sample s = render_synthetic_frame({disk}, bg, 48, t, 6, 0.0, 0.0);
      int inside = 0;
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * 48 + x;
          if (s.mask.at(y, x)) {
            ++inside;
            REQUIRE(s.flow->u[i] == 2.0f);
            REQUIRE(s.flow->v[i] == 0.0f);
          } else {
            REQUIRE(s.flow->u[i] == 0.0f);
          }
        }
      CHECK(inside > 0);
    }
    // Last frame pairs with its predecessor, so the displacement reverses.
    const Sample last = render_synthetic_frame({disk}, bg, 48, 5, 6, 0.0, 0.0);
    CHECK(last.flow->target_frame == 4);
    const std::size_t c = static_cast<std::size_t>(24) * 48 + 30;
    CHECK(last.flow->u[c] == -2.0f);
  }
  SUBCASE("static scene has zero flow") {
    SynthConfig cfg;
    cfg.speed_min = cfg.speed_max = 0.0;
    std::mt19937_64 rng(5);
    const auto ds = generate_synthetic_dataset(cfg, rng);
    for (const auto& seq : ds.vos)
      for (const auto& f : seq.frames) {
        for (float u : f.flow->u) REQUIRE(u == 0.0f);
        for (float v : f.flow->v) REQUIRE(v == 0.0f);
      }
  }
  SUBCASE("mask area is within the perimeter of the analytic area") {
    const auto ds = small_synthetic(12, 3, 0, 17);
    for (std::size_t s = 0; s < ds.vos.size(); ++s) {
      if (ds.tracks[s].size() != 1) continue;
      const ShapeTrack& shape = ds.tracks[s][0];
      for (const auto& f : ds.vos[s].frames)
        CHECK(std::abs(static_cast<double>(f.mask.count()) - shape.area()) <= shape.perimeter());
    }
  }
  SUBCASE("seeded and sized") {
    const auto a = small_synthetic(2, 3, 2, 8), b = small_synthetic(2, 3, 2, 8);
    CHECK(a.vos[1].frames[2].image.pixels == b.vos[1].frames[2].image.pixels);
    CHECK(a.sod[1].mask.pixels == b.sod[1].mask.pixels);
    CHECK(a.vos.size() == 2u);
    CHECK(a.sod.size() == 2u);
    for (const auto& seq : a.vos) {
      CHECK(seq.frames.size() == 3u);
      for (const auto& f : seq.frames) {
        CHECK(f.validity == 1);
        CHECK(f.mask.count() > 0u);
      }
    }
    for (const auto& s : a.sod) CHECK(s.validity == 0);
  }
  SynthConfig bad;
  bad.resolution = 16;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(generate_synthetic_dataset(bad, rng), UsageError);
}
