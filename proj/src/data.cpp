#include "mavos/data.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "mavos/error.hpp"

namespace fs = std::filesystem;

namespace mavos {
namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", i);
  return buf;
}

void append_map(std::vector<float>& dst, const ImageRGB& img) {
  dst.insert(dst.end(), img.pixels.begin(), img.pixels.end());
}

}  // namespace

ImageRGB motion_slot(const Sample& sample) {
  if (sample.validity == 1) {
    if (!sample.flow_rgb) throw DataError("sample " + sample.id + " is marked valid but has no flow rendering");
    return *sample.flow_rgb;
  }
  return ImageRGB(sample.image.height, sample.image.width, 0.0f);
}

std::vector<Sequence> load_vos_dataset(const fs::path& root, const LoadOptions& options) {
  const fs::path images = root / "JPEGImages";
  const fs::path annotations = root / "Annotations";
  const fs::path flows = root / "Flows";
  if (!fs::is_directory(images)) throw DataError("VOS root has no JPEGImages directory: " + root.string());
  std::vector<Sequence> out;
  for (const auto& seq_dir : sorted_entries(images, true)) {
    Sequence seq;
    seq.name = seq_dir.filename().string();
    std::vector<fs::path> frames;
    for (const auto& f : sorted_entries(seq_dir, false))
      if (is_image_file(f)) frames.push_back(f);
    const int T = static_cast<int>(frames.size());
    for (int t = 0; t < T; ++t) {
      const std::string stem = frames[t].stem().string();
      const std::string frame_id = seq.name + "/" + stem;
      const fs::path mask_path = annotations / seq.name / (stem + ".png");
      const fs::path flow_path = flows / seq.name / (stem + ".flo");
      if (!fs::exists(mask_path)) throw DataError("missing annotation for frame " + frame_id + " (" + mask_path.string() + ")");
      if (!fs::exists(flow_path)) throw DataError("missing flow for frame " + frame_id + " (" + flow_path.string() + ")");
      Sample s;
      s.id = frame_id;
      s.image = read_image(frames[t]);
      s.mask = read_mask(mask_path, MaskRule::kAnyNonzero);
      FlowField flow = read_flo(flow_path);
      if (s.mask.height != s.image.height || s.mask.width != s.image.width)
        throw DataError("annotation size differs from image for frame " + frame_id);
      if (flow.height != s.image.height || flow.width != s.image.width)
        throw DataError("flow size differs from image for frame " + frame_id);
      if (T >= 2) std::tie(flow.source_frame, flow.target_frame) = pair_frames(t, T);
      s.flow_rgb = flow_to_rgb(flow, options.flow_max_magnitude);
      s.flow = std::move(flow);
      s.validity = 1;
      seq.frames.push_back(std::move(s));
    }
    if (!seq.frames.empty()) out.push_back(std::move(seq));
  }
  if (out.empty()) throw DataError("VOS root contains no sequences: " + root.string());
  return out;
}

std::vector<Sample> load_sod_dataset(const fs::path& root) {
  const fs::path images = root / "Images";
  const fs::path masks = root / "Masks";
  if (!fs::is_directory(images) || !fs::is_directory(masks))
    throw DataError("SOD root needs Images and Masks directories: " + root.string());
  std::map<std::string, fs::path> image_by_stem, mask_by_stem;
  for (const auto& f : sorted_entries(images, false))
    if (is_image_file(f)) image_by_stem[f.stem().string()] = f;
  for (const auto& f : sorted_entries(masks, false))
    if (is_image_file(f)) mask_by_stem[f.stem().string()] = f;
  for (const auto& [stem, _] : image_by_stem)
    if (!mask_by_stem.count(stem)) throw DataError("SOD image without mask: " + stem);
  for (const auto& [stem, _] : mask_by_stem)
    if (!image_by_stem.count(stem)) throw DataError("SOD mask without image: " + stem);
  std::vector<Sample> out;
  for (const auto& [stem, path] : image_by_stem) {
    Sample s;
    s.id = "sod/" + stem;
    s.image = read_image(path);
    s.mask = read_mask(mask_by_stem[stem], MaskRule::kHalfThreshold);
    if (s.mask.height != s.image.height || s.mask.width != s.image.width)
      throw DataError("SOD mask size differs from image: " + stem);
    s.validity = 0;
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("SOD root contains no samples: " + root.string());
  return out;
}

void write_vos_dataset(const std::vector<Sequence>& sequences, const fs::path& root) {
  for (const auto& seq : sequences) {
    fs::create_directories(root / "JPEGImages" / seq.name);
    fs::create_directories(root / "Annotations" / seq.name);
    fs::create_directories(root / "Flows" / seq.name);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      const auto& s = seq.frames[t];
      const std::string stem = frame_name(static_cast<int>(t));
      write_image_png(s.image, root / "JPEGImages" / seq.name / (stem + ".png"));
      write_mask_png(s.mask, root / "Annotations" / seq.name / (stem + ".png"));
      if (!s.flow) throw DataError("cannot write VOS frame without flow: " + s.id);
      write_flo(*s.flow, root / "Flows" / seq.name / (stem + ".flo"));
    }
  }
}

void write_sod_dataset(const std::vector<Sample>& samples, const fs::path& root) {
  fs::create_directories(root / "Images");
  fs::create_directories(root / "Masks");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = frame_name(static_cast<int>(i));
    write_image_png(samples[i].image, root / "Images" / (stem + ".png"));
    write_mask_png(samples[i].mask, root / "Masks" / (stem + ".png"));
  }
}

Sample resize_sample(const Sample& sample, int res) {
  if (res < 16) throw UsageError("resize target must be at least 16, got " + std::to_string(res));
  Sample out;
  out.id = sample.id;
  out.validity = sample.validity;
  out.image = resize_bicubic(sample.image, res, res);
  if (sample.flow_rgb) out.flow_rgb = resize_bicubic(*sample.flow_rgb, res, res);
  if (sample.flow) {
    const FlowField& f = *sample.flow;
    if (f.height == res && f.width == res) {
      out.flow = f;
    } else {
      FlowField r(res, res);
      r.source_frame = f.source_frame;
      r.target_frame = f.target_frame;
      const float sx = static_cast<float>(res) / f.width;
      const float sy = static_cast<float>(res) / f.height;
      r.u = resize_plane_bicubic(f.u, f.height, f.width, res, res);
      r.v = resize_plane_bicubic(f.v, f.height, f.width, res, res);
      for (auto& x : r.u) x *= sx;
      for (auto& y : r.v) y *= sy;
      out.flow = std::move(r);
    }
  }
  out.mask = sample.validity == 1 ? resize_nearest(sample.mask, res, res)
                                  : resize_bicubic_quantized(sample.mask, res, res);
  return out;
}

FeatureMap<float> TrainingBatch::image(int b) const {
  FeatureMap<float> m(3, height, width);
  const auto begin = images.begin() + static_cast<std::ptrdiff_t>(b * 3 * plane());
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(3 * plane()), m.data.begin());
  return m;
}

FeatureMap<float> TrainingBatch::motion_input(int b) const {
  FeatureMap<float> m(3, height, width);
  const auto begin = motion_inputs.begin() + static_cast<std::ptrdiff_t>(b * 3 * plane());
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(3 * plane()), m.data.begin());
  return m;
}

BinaryMask TrainingBatch::mask(int b) const {
  BinaryMask m(height, width);
  for (std::size_t i = 0; i < plane(); ++i) m.pixels[i] = masks[b * plane() + i] > 0.5f;
  return m;
}

double TrainingBatch::sod_fraction() const {
  if (batch == 0) return 0.0;
  return static_cast<double>(std::count(indices.begin(), indices.end(), 0.0f)) / batch;
}

std::vector<float> assemble_motion_inputs(const std::vector<float>& flows, const std::vector<float>& images,
                                          const std::vector<float>& indices, int batch, std::size_t row_size) {
  std::vector<float> m(flows.size());
  for (int b = 0; b < batch; ++b) {
    const float i = indices[b];
    for (std::size_t j = b * row_size; j < (b + 1) * row_size; ++j) m[j] = i * flows[j] + (1.0f - i) * images[j];
  }
  return m;
}

TrainingBatch sample_training_batch(const std::vector<Sequence>& vos, const std::vector<Sample>& sod, double p_sod,
                                    int batch_size, int res, std::mt19937_64& rng) {
  if (batch_size <= 0) throw UsageError("batch size must be positive, got " + std::to_string(batch_size));
  if (!(p_sod >= 0.0 && p_sod <= 1.0)) throw UsageError("p_sod must lie in [0, 1]");
  std::vector<const Sample*> vos_frames;
  for (const auto& seq : vos)
    for (const auto& s : seq.frames) vos_frames.push_back(&s);
  if (p_sod < 1.0 && vos_frames.empty()) throw UsageError("VOS dataset is empty");
  if (p_sod > 0.0 && sod.empty()) throw UsageError("SOD dataset is empty");

  TrainingBatch batch;
  batch.batch = batch_size;
  batch.height = res;
  batch.width = res;
  std::bernoulli_distribution from_sod(p_sod);
  for (int b = 0; b < batch_size; ++b) {
    const Sample* picked = nullptr;
    if (from_sod(rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, sod.size() - 1);
      picked = &sod[pick(rng)];
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, vos_frames.size() - 1);
      picked = vos_frames[pick(rng)];
    }
    const Sample s = resize_sample(*picked, res);
    append_map(batch.images, s.image);
    append_map(batch.flows, motion_slot(s));
    for (auto v : s.mask.pixels) batch.masks.push_back(static_cast<float>(v));
    batch.indices.push_back(static_cast<float>(s.validity));
    batch.provenance.push_back(s.id);
  }
  batch.motion_inputs = assemble_motion_inputs(batch.flows, batch.images, batch.indices, batch_size, 3 * batch.plane());
  return batch;
}

}  // namespace mavos
