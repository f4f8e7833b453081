#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mavos/flow.hpp"
#include "mavos/image.hpp"
#include "mavos/tensor.hpp"

namespace mavos {

// One training or inference unit. validity = 1 marks a sample whose motion
// slot holds a real flow rendering; validity = 0 marks an image-only sample.
struct Sample {
  std::string id;
  ImageRGB image;
  std::optional<FlowField> flow;
  std::optional<ImageRGB> flow_rgb;
  BinaryMask mask;
  int validity = 0;
};

// Flow rendering for valid samples, an all-zero map of the image size otherwise.
ImageRGB motion_slot(const Sample& sample);

struct Sequence {
  std::string name;
  std::vector<Sample> frames;
};

struct LoadOptions {
  // Global colour-wheel normaliser; per-frame maximum when absent.
  std::optional<double> flow_max_magnitude;
};

// <root>/JPEGImages/<seq>/<frame>.{jpg,png}, Annotations/<seq>/<frame>.png,
// Flows/<seq>/<frame>.flo.
std::vector<Sequence> load_vos_dataset(const std::filesystem::path& root, const LoadOptions& options = {});
// <root>/Images/<stem>.{jpg,png} paired with <root>/Masks/<stem>.png.
std::vector<Sample> load_sod_dataset(const std::filesystem::path& root);

void write_vos_dataset(const std::vector<Sequence>& sequences, const std::filesystem::path& root);
void write_sod_dataset(const std::vector<Sample>& samples, const std::filesystem::path& root);

// Bicubic image/flow-rendering resize; VOS masks nearest, SOD masks bicubic
// then quantised. res >= 16.
Sample resize_sample(const Sample& sample, int res);

// B x C x H x W batches stored contiguously.
struct TrainingBatch {
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<float> images;         // B x 3 x H x W
  std::vector<float> flows;          // B x 3 x H x W, void rows for image-only samples
  std::vector<float> motion_inputs;  // B x 3 x H x W
  std::vector<float> masks;          // B x 1 x H x W
  std::vector<float> indices;        // B x 1 x 1 x 1
  std::vector<std::string> provenance;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  FeatureMap<float> image(int b) const;
  FeatureMap<float> motion_input(int b) const;
  BinaryMask mask(int b) const;
  double sod_fraction() const;
};

// m = i * flow + (1 - i) * image, broadcast over channels and pixels.
std::vector<float> assemble_motion_inputs(const std::vector<float>& flows, const std::vector<float>& images,
                                          const std::vector<float>& indices, int batch, std::size_t row_size);

// Draws each slot from the SOD pool with probability p_sod, else uniformly
// from all VOS frames, and resizes to res x res.
TrainingBatch sample_training_batch(const std::vector<Sequence>& vos, const std::vector<Sample>& sod, double p_sod,
                                    int batch_size, int res, std::mt19937_64& rng);

enum class ShapeKind { kRectangle, kDisk };

struct ShapeTrack {
  ShapeKind kind;
  double cx, cy;            // centre at frame 0, pixel units
  double half_w, half_h;    // rectangle half extents; disk uses half_w as radius
  double vx, vy;            // pixels per frame
  float r, g, b;

  double area() const;
  double perimeter() const;
  bool contains(double px, double py, int t) const;
};

struct SynthConfig {
  int n_sequences = 4;
  int frames_per_seq = 8;
  int resolution = 64;
  double speed_min = 1.0;
  double speed_max = 3.0;
  int n_sod = 0;
  double background_vx = 0.0;
  double background_vy = 0.0;
  int min_shapes = 1;
  int max_shapes = 2;
};

struct SyntheticDataset {
  std::vector<Sequence> vos;
  std::vector<Sample> sod;
  std::vector<std::vector<ShapeTrack>> tracks;  // per VOS sequence, bottom to top
};

// Rigid rectangles and disks translating over a smooth textured background,
// with exact masks and exact per-pixel displacement under forward pairing.
SyntheticDataset generate_synthetic_dataset(const SynthConfig& cfg, std::mt19937_64& rng);

// Renders one frame of a track set; exposed for tests.
Sample render_synthetic_frame(const std::vector<ShapeTrack>& shapes, const std::vector<double>& background, int res,
                              int t, int frames, double bg_vx, double bg_vy);

}  // namespace mavos
