#include <cmath>
#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "mavos/error.hpp"
#include "mavos/selection.hpp"
#include "support.hpp"

using namespace mavos;

namespace {

double phi_oracle(double w, double h) {
  if (w < h) return h - w;
  if (w > 1 - h) return w - 1 + h;
  return 0.0;
}

FeatureMap<float> logits_from_omega(const std::vector<double>& omega, int h, int w) {
  FeatureMap<float> l(2, h, w);
  for (std::size_t i = 0; i < omega.size(); ++i) l.data[omega.size() + i] = static_cast<float>(std::log(omega[i] / (1 - omega[i])));
  return l;
}

Model<float> small_model(std::uint64_t seed = 3) {
  NetworkConfig cfg;
  Model<float> m(cfg);
  m.initialize(seed);
  return m;
}

Sequence small_sequence(int res = 64, std::uint64_t seed = 4) {
  SynthConfig cfg;
  cfg.n_sequences = 1;
  cfg.frames_per_seq = 3;
  cfg.resolution = res;
  std::mt19937_64 rng(seed);
  return generate_synthetic_dataset(cfg, rng).vos[0];
}

}  // namespace

TEST_CASE("foreground map") {
  FeatureMap<double> l(2, 1, 4);
  l.data = {0.0, 0.0, 0.0, 0.0, 0.0, std::log(9.0), -1000.0, 1000.0};
  const auto w = foreground_map(l);
  CHECK(w[0] == 0.5);
  CHECK(w[1] == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(w[2] == 0.0);
  CHECK(w[3] == 1.0);
  for (double v : w) CHECK(std::isfinite(v));
  std::mt19937_64 rng(1);
  auto r = testing::random_map<double>(2, 4, 4, rng, -5, 5);
  const auto base = foreground_map(r);
  for (std::size_t i = 0; i < r.plane(); ++i) {
    r.data[i] += 123.25;
    r.data[r.plane() + i] += 123.25;
  }
  const auto shifted = foreground_map(r);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(shifted[i] - base[i]) <= 1e-6);
}

TEST_CASE("confidence map and score") {
  const double h = 0.05;
  const auto phi = confidence_map({0.5, 0.02, 0.98, 0.05, 0.95}, h);
  CHECK(phi[0] == 0.0);
  CHECK(phi[1] == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(phi[2] == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(phi[3] == 0.0);
  CHECK(phi[4] == 0.0);
  CHECK(confidence_score(std::vector<double>(9, 0.0)) == 0.0);

  const auto p = make_prediction({0.01, 0.99, 0.5, 0.96}, 2, 2, h, Source::kFlow);
  CHECK(p.phi[0] == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(p.phi[1] == doctest::Approx(0.04).epsilon(1e-12));
  CHECK(p.phi[2] == 0.0);
  CHECK(p.phi[3] == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(std::abs(p.alpha - 0.09) <= 1e-9);

  const auto sure = make_prediction({0.0, 1.0, 1.0, 0.0, 1.0, 0.0}, 2, 3, h, Source::kImage);
  CHECK(sure.alpha == doctest::Approx(h * 6).epsilon(1e-12));

  CHECK_THROWS_AS(confidence_map({0.5}, 0.6), UsageError);
  CHECK_THROWS_AS(confidence_map({0.5}, -0.01), UsageError);
  CHECK_THROWS_AS(make_prediction({0.5}, 1, 1, 0.7, Source::kFlow), UsageError);
}

TEST_CASE("confidence matches the oracle and obeys its bounds") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double h = 0.5 * u(rng);
    auto omega = testing::random_vec<double>(64, rng, 0, 1);
    const auto p = make_prediction(omega, 8, 8, h, Source::kFlow);
    double sum = 0;
    for (std::size_t i = 0; i < omega.size(); ++i) {
      CHECK(std::abs(p.phi[i] - phi_oracle(omega[i], h)) <= 1e-12);
      CHECK(p.phi[i] >= 0.0);
      CHECK(p.phi[i] <= h);
      sum += p.phi[i];
    }
    CHECK(std::abs(p.alpha - sum) <= 1e-9);
    CHECK(p.alpha >= 0.0);
    CHECK(p.alpha <= h * 64);
    // Moving a pixel towards 0 or 1 never lowers alpha.
    const std::size_t k = trial % 64;
    omega[k] = omega[k] < 0.5 ? omega[k] * 0.5 : 1 - (1 - omega[k]) * 0.5;
    CHECK(make_prediction(omega, 8, 8, h, Source::kFlow).alpha >= p.alpha - 1e-12);
  }
}

TEST_CASE("output selection") {
  auto pred = [](double alpha, Source s) {
    PredictionOutput p;
    p.height = p.width = 2;
    p.omega = {0.1, 0.2, 0.3, 0.4};
    p.alpha = alpha;
    p.source = s;
    return p;
  };
  CHECK(select_output(pred(0.09, Source::kImage), pred(0.12, Source::kFlow)).source == Source::kFlow);
  CHECK(select_output(pred(0.12, Source::kImage), pred(0.09, Source::kFlow)).source == Source::kImage);
  CHECK(select_output(pred(0.1, Source::kImage), pred(0.1, Source::kFlow)).source == Source::kFlow);
  PredictionOutput odd = pred(0.1, Source::kFlow);
  odd.width = 3;
  CHECK_THROWS_AS(select_output(pred(0.1, Source::kImage), odd), UsageError);
  odd = pred(0.1, Source::kFlow);
  odd.h = 0.1;
  CHECK_THROWS_AS(select_output(pred(0.1, Source::kImage), odd), UsageError);
}

TEST_CASE("quantisation") {
  CHECK(quantize({0.5}, 1, 1).pixels[0] == 0);
  CHECK(quantize({0.5000001}, 1, 1).pixels[0] == 1);
  CHECK(quantize({0.0, 1.0, 1.0, 0.0}, 2, 2).pixels == std::vector<std::uint8_t>{0, 1, 1, 0});
  std::mt19937_64 rng(3);
  const auto w = testing::random_vec<double>(100, rng, 0, 1);
  const auto m = quantize(w, 10, 10, 0.3);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(m.pixels[i] == (w[i] > 0.3 ? 1 : 0));
  CHECK_THROWS_AS(quantize({0.5}, 1, 1, 1.0), UsageError);
  CHECK_THROWS_AS(quantize({0.5}, 1, 1, 0.0), UsageError);
}

TEST_CASE("mode names round trip") {
  CHECK(all_inference_modes().size() == 6u);
  for (auto m : all_inference_modes()) CHECK(parse_inference_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_inference_mode("sum"), UsageError);
}

TEST_CASE("fusion baselines") {
  const Model<float> model = small_model();
  std::mt19937_64 rng(5);
  const ImageRGB img = testing::random_image(64, 64, rng);
  const ImageRGB flo = testing::random_image(64, 64, rng);
  const auto single = make_prediction(model.forward(img.as_map(), img.as_map()), kDefaultConfidenceThreshold, Source::kImage);
  SUBCASE("flow equal to image reduces every mode to single-source inference") {
    for (FusionMode mode : {FusionMode::kInput, FusionMode::kFeature, FusionMode::kOutput}) {
      const auto f = fuse_baseline(mode, model, img, img);
      REQUIRE(f.logits.has_value());
      for (std::size_t i = 0; i < f.logits->size(); ++i)
        REQUIRE(f.logits->data[i] == doctest::Approx(single.logits->data[i]).epsilon(1e-5));
      CHECK(f.source == Source::kFused);
    }
  }
  SUBCASE("input fusion averages the motion inputs") {
    const auto f = fuse_baseline(FusionMode::kInput, model, img, flo);
    ImageRGB avg(64, 64);
    for (std::size_t i = 0; i < avg.pixels.size(); ++i) avg.pixels[i] = (img.pixels[i] + flo.pixels[i]) / 2.0f;
    const auto direct = model.forward(img.as_map(), avg.as_map());
    for (std::size_t i = 0; i < direct.size(); ++i) REQUIRE(f.logits->data[i] == doctest::Approx(direct.data[i]).epsilon(1e-5));
  }
  SUBCASE("output fusion averages logits") {
    const auto f = fuse_baseline(FusionMode::kOutput, model, img, flo);
    const auto a = model.forward(img.as_map(), img.as_map());
    const auto b = model.forward(img.as_map(), flo.as_map());
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE(f.logits->data[i] == doctest::Approx((a.data[i] + b.data[i]) / 2).epsilon(1e-5));
  }
  CHECK_THROWS_AS(fuse_baseline(FusionMode::kInput, model, img, testing::random_image(32, 32, rng)), UsageError);
}

TEST_CASE("test-time augmentation") {
  const Model<float> model = small_model();
  std::mt19937_64 rng(6);
  const ImageRGB img = testing::random_image(64, 64, rng);
  const ImageRGB mot = testing::random_image(64, 64, rng);
  SUBCASE("single scale without flip is plain inference") {
    const auto plain = plain_predictor(model)(img, mot);
    const auto tta = tta_infer(model, img, mot, TtaOptions{{64}, false});
    CHECK(tta == plain);
  }
  SUBCASE("mirror-symmetric input: the flip member is the mirrored plain member") {
    ImageRGB sym = img, sym_m = mot;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 64; ++y)
        for (int x = 32; x < 64; ++x) {
          sym.at(c, y, x) = sym.at(c, y, 63 - x);
          sym_m.at(c, y, x) = sym_m.at(c, y, 63 - x);
        }
    const auto a = tta_infer(model, sym, sym_m, TtaOptions{{64}, false});
    const auto b = tta_infer(model, sym, sym_m, TtaOptions{{64}, true});
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double mirrored = (a[y * 64 + x] + a[y * 64 + 63 - x]) / 2.0;
        REQUIRE(b[y * 64 + x] == doctest::Approx(mirrored).epsilon(1e-6));
        REQUIRE(b[y * 64 + x] == doctest::Approx(b[y * 64 + 63 - x]).epsilon(1e-6));
      }
  }
  SUBCASE("averages stay in [0, 1]") {
    const auto w = tta_infer(model, img, mot, TtaOptions{{32, 64, 96}, true});
    CHECK(w.size() == 64u * 64u);
    for (double v : w) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("scales are rounded to the encoder multiple") {
    // 50 rounds to 64, so this equals the single-scale run at 64.
    CHECK(tta_infer(model, img, mot, TtaOptions{{50}, false}) == tta_infer(model, img, mot, TtaOptions{{64}, false}));
  }
  SUBCASE("desk-scale scale set") {
    CHECK(tta_options_for(384, 32).scales == std::vector<int>{288, 384, 672});
    CHECK(tta_options_for(64, 32).scales == std::vector<int>{64, 128});
  }
}

TEST_CASE("sequence inference") {
  const Model<float> model = small_model();
  const Sequence seq = small_sequence();
  InferenceOptions opts;
  opts.mode = InferenceMode::kSelect;
  const auto sel = infer_sequence(model, seq, opts);
  opts.mode = InferenceMode::kFlowOnly;
  const auto flow = infer_sequence(model, seq, opts);
  opts.mode = InferenceMode::kImageOnly;
  const auto image = infer_sequence(model, seq, opts);
  REQUIRE(sel.masks.size() == 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& f = sel.log.frames[t];
    REQUIRE(f.alpha_image.has_value());
    REQUIRE(f.alpha_flow.has_value());
    CHECK(f.alpha_flow == flow.log.frames[t].alpha_flow);
    CHECK(f.alpha_image == image.log.frames[t].alpha_image);
    const bool image_wins = *f.alpha_image > *f.alpha_flow;
    CHECK(f.chosen == (image_wins ? Source::kImage : Source::kFlow));
    CHECK(sel.masks[t].pixels == (image_wins ? image.masks[t] : flow.masks[t]).pixels);
    CHECK(sel.masks[t].height == 64);
  }
  double total = 0;
  for (const auto& [_, v] : sel.log.ratios()) total += v;
  CHECK(total == doctest::Approx(100.0));

  SUBCASE("threads do not change results") {
    opts.mode = InferenceMode::kSelect;
    opts.jobs = 3;
    const auto par = infer_sequence(model, seq, opts);
    for (std::size_t t = 0; t < 3; ++t) CHECK(par.masks[t].pixels == sel.masks[t].pixels);
  }
  SUBCASE("masks come back at the original resolution") {
    const Sequence big = small_sequence(96);
    opts.mode = InferenceMode::kOutputFusion;
    const auto out = infer_sequence(model, big, opts);
    CHECK(out.masks[0].height == 96);
    CHECK(out.log.frames[0].chosen == Source::kFused);
  }
  SUBCASE("flow modes need flow") {
    Sequence no_flow = seq;
    for (auto& f : no_flow.frames) {
      f.flow.reset();
      f.flow_rgb.reset();
    }
    opts.mode = InferenceMode::kSelect;
    CHECK_THROWS_AS(infer_sequence(model, no_flow, opts), DataError);
    opts.mode = InferenceMode::kImageOnly;
    CHECK_NOTHROW(infer_sequence(model, no_flow, opts));
  }
}

TEST_CASE("selection log files") {
  testing::TempDir tmp;
  SelectionLog log;
  log.frames.push_back({"a", "00000", 1.5, 2.0, Source::kFlow});
  log.frames.push_back({"a", "00001", 3.0, 2.0, Source::kImage});
  log.frames.push_back({"b", "00000", 1.0, 4.0, Source::kFlow});
  log.frames.push_back({"b", "00001", 1.0, 4.0, Source::kFlow});
  const auto r = log.ratios();
  CHECK(r.at("flow") == 75.0);
  CHECK(r.at("image") == 25.0);
  log.write_csv(tmp / "log.csv");
  log.write_summary_json(tmp / "summary.json");
  log.write_alpha_difference_csv(tmp / "diff.csv");
  std::ifstream csv(tmp / "log.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "frame,alpha_image,alpha_flow,chosen");
  std::getline(csv, line);
  CHECK(line == "a/00000,1.5,2,flow");
  const auto j = nlohmann::json::parse(std::ifstream(tmp / "summary.json"));
  CHECK(j["selection_ratio"]["image"] == 25.0);
  CHECK(j["frames"] == 4);
}

TEST_CASE("flow corruption picks an exact fraction of frames") {
  SynthConfig cfg;
  cfg.n_sequences = 4;
  cfg.frames_per_seq = 5;
  std::mt19937_64 gen(1);
  auto seqs = generate_synthetic_dataset(cfg, gen).vos;
  const auto clean = seqs;
  std::mt19937_64 rng(2);
  const auto ids = corrupt_sequences(seqs, Corruption::kZero, 1.0, 0.5, rng);
  CHECK(ids.size() == 10u);
  int changed = 0;
  for (std::size_t s = 0; s < seqs.size(); ++s)
    for (std::size_t t = 0; t < seqs[s].frames.size(); ++t) {
      const bool listed = std::find(ids.begin(), ids.end(), seqs[s].frames[t].id) != ids.end();
      const bool differs = seqs[s].frames[t].flow_rgb->pixels != clean[s].frames[t].flow_rgb->pixels;
      CHECK(listed == differs);
      changed += differs;
      CHECK(seqs[s].frames[t].image.pixels == clean[s].frames[t].image.pixels);
    }
  CHECK(changed == 10);
}
