#include "mavos/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "mavos/error.hpp"
#include "mavos/kernels.hpp"
#include "mavos/layers.hpp"

namespace mavos {
namespace {

ImageRGB average_images(const ImageRGB& a, const ImageRGB& b) {
  ImageRGB out(a.height, a.width);
  for (std::size_t i = 0; i < a.pixels.size(); ++i) out.pixels[i] = (a.pixels[i] + b.pixels[i]) / 2.0f;
  return out;
}

int round_to_multiple(int value, int multiple) {
  const int r = static_cast<int>(std::lround(static_cast<double>(value) / multiple)) * multiple;
  return std::max(r, multiple);
}

std::vector<double> flip_plane(const std::vector<double>& plane, int h, int w) {
  std::vector<double> out(plane.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = plane[static_cast<std::size_t>(y) * w + (w - 1 - x)];
  return out;
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

}  // namespace

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kImage:
      return "image";
    case Source::kFlow:
      return "flow";
    case Source::kFused:
      return "fused";
  }
  return "unknown";
}

template <class T>
std::vector<double> foreground_map(const FeatureMap<T>& logits) {
  if (logits.c != 2) throw UsageError("foreground_map expects 2-channel logits");
  const std::size_t n = logits.plane();
  std::vector<double> omega(n);
  const T* bg = logits.channel(0);
  const T* fg = logits.channel(1);
  for (std::size_t i = 0; i < n; ++i) {
    // exp(fg) / (exp(bg) + exp(fg)) with the larger logit factored out.
    const double d = static_cast<double>(fg[i]) - static_cast<double>(bg[i]);
    omega[i] = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  }
  return omega;
}

std::vector<double> confidence_map(const std::vector<double>& omega, double h) {
  if (!(h >= 0.0 && h <= 0.5)) throw UsageError("confidence threshold h must lie in [0, 0.5]");
  std::vector<double> phi(omega.size());
  kernels::active().confidence(omega.data(), h, phi.data(), omega.size());
  return phi;
}

double confidence_score(const std::vector<double>& phi) {
  return std::accumulate(phi.begin(), phi.end(), 0.0);
}

PredictionOutput make_prediction(std::vector<double> omega, int height, int width, double h, Source source) {
  PredictionOutput out;
  out.height = height;
  out.width = width;
  out.h = h;
  out.source = source;
  if (!(h >= 0.0 && h <= 0.5)) throw UsageError("confidence threshold h must lie in [0, 0.5]");
  out.phi.resize(omega.size());
  out.alpha = kernels::active().confidence(omega.data(), h, out.phi.data(), omega.size());
  out.omega = std::move(omega);
  return out;
}

PredictionOutput make_prediction(FeatureMap<float> logits, double h, Source source) {
  PredictionOutput out = make_prediction(foreground_map(logits), logits.h, logits.w, h, source);
  out.logits = std::move(logits);
  return out;
}

PredictionOutput select_output(const PredictionOutput& out_image, const PredictionOutput& out_flow) {
  if (out_image.height != out_flow.height || out_image.width != out_flow.width)
    throw UsageError("select_output: outputs differ in size");
  if (out_image.h != out_flow.h) throw UsageError("select_output: outputs use different confidence thresholds");
  return out_image.alpha > out_flow.alpha ? out_image : out_flow;
}

BinaryMask quantize(const std::vector<double>& omega, int height, int width, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("quantization threshold must lie in (0, 1)");
  if (omega.size() != static_cast<std::size_t>(height) * width) throw UsageError("quantize: size mismatch");
  BinaryMask mask(height, width);
  for (std::size_t i = 0; i < omega.size(); ++i) mask.pixels[i] = omega[i] > threshold ? 1 : 0;
  return mask;
}

InferenceMode parse_inference_mode(std::string_view name) {
  for (auto m : all_inference_modes())
    if (mode_name(m) == name) return m;
  throw UsageError("unknown inference mode '" + std::string(name) +
                   "' (expected flow_only|image_only|select|input|feature|output)");
}

std::string_view mode_name(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::kFlowOnly:
      return "flow_only";
    case InferenceMode::kImageOnly:
      return "image_only";
    case InferenceMode::kSelect:
      return "select";
    case InferenceMode::kInputFusion:
      return "input";
    case InferenceMode::kFeatureFusion:
      return "feature";
    case InferenceMode::kOutputFusion:
      return "output";
  }
  return "unknown";
}

const std::vector<InferenceMode>& all_inference_modes() {
  static const std::vector<InferenceMode> modes{InferenceMode::kFlowOnly,     InferenceMode::kImageOnly,
                                                InferenceMode::kSelect,       InferenceMode::kInputFusion,
                                                InferenceMode::kFeatureFusion, InferenceMode::kOutputFusion};
  return modes;
}

namespace {

FeatureMap<float> fused_logits(FusionMode mode, const Model<float>& model, const ImageRGB& image,
                               const ImageRGB& flow_render) {
  const FeatureMap<float> img = image.as_map();
  const FeatureMap<float> flo = flow_render.as_map();
  switch (mode) {
    case FusionMode::kInput:
      return model.forward(img, average_images(image, flow_render).as_map());
    case FusionMode::kFeature: {
      const auto a = model.encode(img, Stream::kAppearance);
      const auto mi = model.encode(img, Stream::kMotion);
      const auto mf = model.encode(flo, Stream::kMotion);
      FeaturePyramid<float> m;
      for (int k = 0; k < mi.depth(); ++k) {
        FeatureMap<float> lvl(mi.levels[k].c, mi.levels[k].h, mi.levels[k].w);
        for (std::size_t i = 0; i < lvl.size(); ++i) lvl.data[i] = (mi.levels[k].data[i] + mf.levels[k].data[i]) / 2.0f;
        m.levels.push_back(std::move(lvl));
      }
      return model.decode(fuse(a, m), image.height, image.width);
    }
    case FusionMode::kOutput: {
      const auto si = model.forward(img, img);
      const auto sf = model.forward(img, flo);
      FeatureMap<float> s(2, si.h, si.w);
      for (std::size_t i = 0; i < s.size(); ++i) s.data[i] = (si.data[i] + sf.data[i]) / 2.0f;
      return s;
    }
  }
  throw UsageError("unknown fusion mode");
}

}  // namespace

PredictionOutput fuse_baseline(FusionMode mode, const Model<float>& model, const ImageRGB& image,
                               const ImageRGB& flow_render, double h) {
  if (image.height != flow_render.height || image.width != flow_render.width)
    throw UsageError("fuse_baseline: image and flow rendering differ in size");
  return make_prediction(fused_logits(mode, model, image, flow_render), h, Source::kFused);
}

Predictor plain_predictor(const Model<float>& model) {
  return [&model](const ImageRGB& image, const ImageRGB& motion) {
    return foreground_map(model.forward(image.as_map(), motion.as_map()));
  };
}

std::vector<double> resize_probability(const std::vector<double>& plane, int h, int w, int out_h, int out_w) {
  if (h == out_h && w == out_w) return plane;
  FeatureMap<double> m(1, h, w);
  m.data = plane;
  return nn::resize_bilinear(m, out_h, out_w).data;
}

std::vector<double> tta_average(const Predictor& predict, const ImageRGB& image, const ImageRGB& motion,
                                const TtaOptions& options) {
  if (options.scales.empty()) throw UsageError("test-time augmentation needs at least one scale");
  const int H = image.height;
  const int W = image.width;
  std::vector<double> sum(static_cast<std::size_t>(H) * W, 0.0);
  int variants = 0;
  for (int scale : options.scales) {
    const ImageRGB img = resize_bicubic(image, scale, scale);
    const ImageRGB mot = resize_bicubic(motion, scale, scale);
    for (int flip = 0; flip < (options.flip ? 2 : 1); ++flip) {
      std::vector<double> omega = flip ? predict(flip_horizontal(img), flip_horizontal(mot)) : predict(img, mot);
      if (flip) omega = flip_plane(omega, scale, scale);
      omega = resize_probability(omega, scale, scale, H, W);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += omega[i];
      ++variants;
    }
  }
  if (variants == 1) return sum;
  for (double& v : sum) v /= variants;
  return sum;
}

TtaOptions tta_options_for(int resolution, int multiple) {
  TtaOptions out;
  std::vector<int> scales;
  for (int s : TtaOptions{}.scales) {
    const int r = round_to_multiple(static_cast<int>(std::lround(s * resolution / 384.0)), multiple);
    if (std::find(scales.begin(), scales.end(), r) == scales.end()) scales.push_back(r);
  }
  out.scales = scales;
  return out;
}

std::vector<double> tta_infer(const Model<float>& model, const ImageRGB& image, const ImageRGB& motion,
                              const TtaOptions& options) {
  TtaOptions rounded = options;
  for (int& s : rounded.scales) s = round_to_multiple(s, model.config().encoder.size_multiple());
  return tta_average(plain_predictor(model), image, motion, rounded);
}

std::map<std::string, double> SelectionLog::ratios() const {
  std::map<std::string, double> out;
  if (frames.empty()) return out;
  for (const auto& f : frames) out[std::string(source_name(f.chosen))] += 1.0;
  for (auto& [_, v] : out) v = 100.0 * v / static_cast<double>(frames.size());
  return out;
}

void SelectionLog::append(const SelectionLog& other) {
  frames.insert(frames.end(), other.frames.begin(), other.frames.end());
}

void SelectionLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write selection log: " + path.string());
  out << "frame,alpha_image,alpha_flow,chosen\n";
  for (const auto& f : frames)
    out << f.sequence << '/' << f.frame << ',' << csv_number(f.alpha_image) << ',' << csv_number(f.alpha_flow) << ','
        << source_name(f.chosen) << '\n';
}

void SelectionLog::write_summary_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["mode"] = std::string(mode_name(mode));
  j["frames"] = frames.size();
  j["selection_ratio"] = ratios();
  std::map<std::string, SelectionLog> per_seq;
  for (const auto& f : frames) per_seq[f.sequence].frames.push_back(f);
  nlohmann::ordered_json seqs = nlohmann::ordered_json::object();
  for (const auto& [name, log] : per_seq) seqs[name] = {{"frames", log.frames.size()}, {"selection_ratio", log.ratios()}};
  j["sequences"] = seqs;
  nlohmann::ordered_json diff = nlohmann::ordered_json::array();
  for (const auto& f : frames)
    if (f.alpha_image && f.alpha_flow)
      diff.push_back({{"sequence", f.sequence}, {"frame", f.frame}, {"alpha_difference", *f.alpha_image - *f.alpha_flow}});
  j["alpha_difference"] = diff;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write selection summary: " + path.string());
  out << j.dump(2) << '\n';
}

void SelectionLog::write_alpha_difference_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write alpha difference trace: " + path.string());
  out << "sequence,frame,alpha_difference\n";
  for (const auto& f : frames)
    if (f.alpha_image && f.alpha_flow)
      out << f.sequence << ',' << f.frame << ',' << csv_number(*f.alpha_image - *f.alpha_flow) << '\n';
}

namespace {

struct FrameResult {
  BinaryMask mask;
  FrameSelection selection;
};

FrameResult infer_frame(const Model<float>& model, const Sequence& sequence, std::size_t t,
                        const InferenceOptions& options) {
  const Sample& original = sequence.frames[t];
  const int res = model.config().resolution;
  const Sample s = resize_sample(original, res);
  const bool needs_flow = options.mode != InferenceMode::kImageOnly;
  if (needs_flow && !s.flow_rgb) throw DataError("frame " + original.id + " has no flow but mode " +
                                                 std::string(mode_name(options.mode)) + " needs it");

  auto run = [&](const Predictor& predict, const ImageRGB& motion, Source source) {
    if (options.tta) {
      TtaOptions rounded = options.tta_options;
      for (int& sc : rounded.scales) sc = round_to_multiple(sc, model.config().encoder.size_multiple());
      return make_prediction(tta_average(predict, s.image, motion, rounded), res, res, options.h, source);
    }
    return make_prediction(predict(s.image, motion), res, res, options.h, source);
  };
  const Predictor plain = plain_predictor(model);
  auto fusion = [&](FusionMode mode) -> Predictor {
    return [&model, mode](const ImageRGB& image, const ImageRGB& flow) {
      return foreground_map(fused_logits(mode, model, image, flow));
    };
  };

  FrameSelection sel;
  sel.sequence = sequence.name;
  const auto slash = original.id.rfind('/');
  sel.frame = slash == std::string::npos ? original.id : original.id.substr(slash + 1);
  PredictionOutput chosen;
  switch (options.mode) {
    case InferenceMode::kFlowOnly:
      chosen = run(plain, *s.flow_rgb, Source::kFlow);
      sel.alpha_flow = chosen.alpha;
      break;
    case InferenceMode::kImageOnly:
      chosen = run(plain, s.image, Source::kImage);
      sel.alpha_image = chosen.alpha;
      break;
    case InferenceMode::kSelect: {
      const PredictionOutput from_image = run(plain, s.image, Source::kImage);
      const PredictionOutput from_flow = run(plain, *s.flow_rgb, Source::kFlow);
      sel.alpha_image = from_image.alpha;
      sel.alpha_flow = from_flow.alpha;
      chosen = select_output(from_image, from_flow);
      break;
    }
    case InferenceMode::kInputFusion:
      chosen = run(fusion(FusionMode::kInput), *s.flow_rgb, Source::kFused);
      break;
    case InferenceMode::kFeatureFusion:
      chosen = run(fusion(FusionMode::kFeature), *s.flow_rgb, Source::kFused);
      break;
    case InferenceMode::kOutputFusion:
      chosen = run(fusion(FusionMode::kOutput), *s.flow_rgb, Source::kFused);
      break;
  }
  sel.chosen = chosen.source;
  const auto omega = resize_probability(chosen.omega, res, res, original.image.height, original.image.width);
  return {quantize(omega, original.image.height, original.image.width, options.threshold), sel};
}

}  // namespace

SequenceInference infer_sequence(const Model<float>& model, const Sequence& sequence, const InferenceOptions& options) {
  const std::size_t T = sequence.frames.size();
  std::vector<FrameResult> results(T);
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(T)));
  if (jobs == 1) {
    for (std::size_t t = 0; t < T; ++t) results[t] = infer_frame(model, sequence, t, options);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (int j = 0; j < jobs; ++j) {
      workers.emplace_back([&, j] {
        try {
          for (std::size_t t = j; t < T; t += jobs) results[t] = infer_frame(model, sequence, t, options);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  SequenceInference out;
  out.log.mode = options.mode;
  for (auto& r : results) {
    out.masks.push_back(std::move(r.mask));
    out.log.frames.push_back(std::move(r.selection));
  }
  return out;
}

std::vector<std::string> corrupt_sequences(std::vector<Sequence>& sequences, Corruption mode, double strength,
                                           double fraction, std::mt19937_64& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw UsageError("corruption fraction must lie in [0, 1]");
  std::vector<Sample*> frames;
  for (auto& seq : sequences)
    for (auto& f : seq.frames)
      if (f.flow) frames.push_back(&f);
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(frames.size())));
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<std::string> ids;
  for (std::size_t idx : order) {
    Sample& s = *frames[idx];
    s.flow = corrupt_flow(*s.flow, mode, strength, rng);
    s.flow_rgb = flow_to_rgb(*s.flow);
    ids.push_back(s.id);
  }
  return ids;
}

template std::vector<double> foreground_map(const FeatureMap<float>&);
template std::vector<double> foreground_map(const FeatureMap<double>&);

}  // namespace mavos
