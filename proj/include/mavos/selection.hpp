#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mavos/data.hpp"
#include "mavos/network.hpp"

namespace mavos {

inline constexpr double kDefaultConfidenceThreshold = 0.05;
inline constexpr double kDefaultQuantizeThreshold = 0.5;

// Which motion input produced an output.
enum class Source { kImage, kFlow, kFused };
std::string_view source_name(Source s);

struct PredictionOutput {
  int height = 0;
  int width = 0;
  std::optional<FeatureMap<float>> logits;  // absent for test-time-augmented outputs
  std::vector<double> omega;                // foreground probability
  std::vector<double> phi;                  // confidence margin in [0, h]
  double alpha = 0.0;                       // sum of phi
  double h = kDefaultConfidenceThreshold;
  Source source = Source::kFlow;
};

// Per-pixel softmax foreground probability of 2-channel (BG, FG) logits.
template <class T>
std::vector<double> foreground_map(const FeatureMap<T>& logits);

// h - w below h, w - 1 + h above 1 - h, 0 otherwise. Requires 0 <= h <= 0.5.
std::vector<double> confidence_map(const std::vector<double>& omega, double h);
double confidence_score(const std::vector<double>& phi);

PredictionOutput make_prediction(std::vector<double> omega, int height, int width, double h, Source source);
PredictionOutput make_prediction(FeatureMap<float> logits, double h, Source source);

// Higher alpha wins; ties go to the flow output.
PredictionOutput select_output(const PredictionOutput& out_image, const PredictionOutput& out_flow);

// 1 where omega > threshold. Requires 0 < threshold < 1.
BinaryMask quantize(const std::vector<double>& omega, int height, int width,
                    double threshold = kDefaultQuantizeThreshold);

enum class InferenceMode { kFlowOnly, kImageOnly, kSelect, kInputFusion, kFeatureFusion, kOutputFusion };
InferenceMode parse_inference_mode(std::string_view name);
std::string_view mode_name(InferenceMode mode);
const std::vector<InferenceMode>& all_inference_modes();

enum class FusionMode { kInput, kFeature, kOutput };

// Averaging baselines: motion input, motion pyramid, or logits of the image
// and flow variants.
PredictionOutput fuse_baseline(FusionMode mode, const Model<float>& model, const ImageRGB& image,
                               const ImageRGB& flow_render, double h = kDefaultConfidenceThreshold);

struct TtaOptions {
  std::vector<int> scales{288, 384, 672};
  bool flip = true;
};

// The default scale set rescaled from 384 px to `resolution`, rounded to
// multiples of `multiple` and de-duplicated.
TtaOptions tta_options_for(int resolution, int multiple);

// Foreground map at the input's resolution for a given (image, motion) pair.
using Predictor = std::function<std::vector<double>(const ImageRGB& image, const ImageRGB& motion)>;

Predictor plain_predictor(const Model<float>& model);

// Mean foreground map over every (scale, flip) variant, each mapped back to
// the input resolution before averaging.
std::vector<double> tta_average(const Predictor& predict, const ImageRGB& image, const ImageRGB& motion,
                                const TtaOptions& options);
std::vector<double> tta_infer(const Model<float>& model, const ImageRGB& image, const ImageRGB& motion,
                              const TtaOptions& options = {});

// Bilinear resampling of a single probability plane.
std::vector<double> resize_probability(const std::vector<double>& plane, int h, int w, int out_h, int out_w);

struct FrameSelection {
  std::string sequence;
  std::string frame;
  std::optional<double> alpha_image;
  std::optional<double> alpha_flow;
  Source chosen = Source::kFlow;
};

struct SelectionLog {
  InferenceMode mode = InferenceMode::kSelect;
  std::vector<FrameSelection> frames;

  // Percentage of frames per chosen source; sums to 100 when non-empty.
  std::map<std::string, double> ratios() const;
  void append(const SelectionLog& other);
  void write_csv(const std::filesystem::path& path) const;
  void write_summary_json(const std::filesystem::path& path) const;
  void write_alpha_difference_csv(const std::filesystem::path& path) const;
};

struct InferenceOptions {
  InferenceMode mode = InferenceMode::kSelect;
  bool tta = false;
  TtaOptions tta_options;
  double h = kDefaultConfidenceThreshold;
  double threshold = kDefaultQuantizeThreshold;
  int jobs = 1;
};

struct SequenceInference {
  std::vector<BinaryMask> masks;  // original resolution
  SelectionLog log;
};

// Frame-by-frame inference at the model's processing resolution; foreground
// maps are resized back to each frame's size before quantisation.
SequenceInference infer_sequence(const Model<float>& model, const Sequence& sequence, const InferenceOptions& options);

// Corrupts the flow of round(fraction * frames) frames picked by a seeded
// shuffle and re-renders it. Returns the ids of the corrupted frames.
std::vector<std::string> corrupt_sequences(std::vector<Sequence>& sequences, Corruption mode, double strength,
                                           double fraction, std::mt19937_64& rng);

}  // namespace mavos
