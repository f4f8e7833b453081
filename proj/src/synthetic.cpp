#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mavos/data.hpp"
#include "mavos/error.hpp"

namespace mavos {
namespace {

// Per channel: base level followed by (amplitude, fx, fy, phase) for each wave.
constexpr int kWaves = 3;
constexpr int kBackgroundStride = 1 + 4 * kWaves;

std::vector<double> random_background(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> base(0.30, 0.55);
  std::uniform_real_distribution<double> amp(0.03, 0.07);
  std::uniform_real_distribution<double> freq(-0.35, 0.35);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::vector<double> bg;
  for (int c = 0; c < 3; ++c) {
    bg.push_back(base(rng));
    for (int k = 0; k < kWaves; ++k) {
      bg.push_back(amp(rng));
      bg.push_back(freq(rng));
      bg.push_back(freq(rng));
      bg.push_back(phase(rng));
    }
  }
  return bg;
}

double background_at(const std::vector<double>& bg, int c, double x, double y) {
  const double* p = bg.data() + c * kBackgroundStride;
  double v = p[0];
  for (int k = 0; k < kWaves; ++k) {
    const double* w = p + 1 + 4 * k;
    v += w[0] * std::sin(w[1] * x + w[2] * y + w[3]);
  }
  return v;
}

void hsv_to_rgb(double h, double s, double v, float& r, float& g, float& b) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double rr = 0, gg = 0, bb = 0;
  if (hp < 1) { rr = c; gg = x; }
  else if (hp < 2) { rr = x; gg = c; }
  else if (hp < 3) { gg = c; bb = x; }
  else if (hp < 4) { gg = x; bb = c; }
  else if (hp < 5) { rr = x; bb = c; }
  else { rr = c; bb = x; }
  const double m = v - c;
  r = static_cast<float>(rr + m);
  g = static_cast<float>(gg + m);
  b = static_cast<float>(bb + m);
}

float quantize8(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
}

ShapeTrack random_shape(int res, int frames, double speed_min, double speed_max, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ShapeTrack s{};
  s.kind = unit(rng) < 0.5 ? ShapeKind::kRectangle : ShapeKind::kDisk;
  s.half_w = res * (0.10 + 0.12 * unit(rng));
  s.half_h = s.kind == ShapeKind::kDisk ? s.half_w : res * (0.10 + 0.12 * unit(rng));
  const double speed = speed_min + (speed_max - speed_min) * unit(rng);
  const double angle = 2.0 * M_PI * unit(rng);
  s.vx = speed * std::cos(angle);
  s.vy = speed * std::sin(angle);
  // Keep the whole trajectory inside the frame, slowing down if needed.
  const double span = std::max(frames - 1, 0);
  auto fit = [&](double half, double& v) {
    const double room = res - 2.0 * half - 2.0;
    if (std::fabs(v) * span > room) v = std::copysign(room / std::max(span, 1.0), v);
  };
  fit(s.half_w, s.vx);
  fit(s.half_h, s.vy);
  auto place = [&](double half, double v) {
    const double lo = half + 1.0 + std::max(0.0, -v * span);
    const double hi = res - half - 1.0 - std::max(0.0, v * span);
    return lo + (hi - lo) * unit(rng);
  };
  s.cx = place(s.half_w, s.vx);
  s.cy = place(s.half_h, s.vy);
  hsv_to_rgb(unit(rng), 0.75 + 0.25 * unit(rng), 0.80 + 0.20 * unit(rng), s.r, s.g, s.b);
  return s;
}

}  // namespace

double ShapeTrack::area() const {
  return kind == ShapeKind::kDisk ? M_PI * half_w * half_w : 4.0 * half_w * half_h;
}

double ShapeTrack::perimeter() const {
  return kind == ShapeKind::kDisk ? 2.0 * M_PI * half_w : 4.0 * (half_w + half_h);
}

bool ShapeTrack::contains(double px, double py, int t) const {
  const double dx = px - (cx + vx * t);
  const double dy = py - (cy + vy * t);
  if (kind == ShapeKind::kDisk) return dx * dx + dy * dy <= half_w * half_w;
  return std::fabs(dx) <= half_w && std::fabs(dy) <= half_h;
}

Sample render_synthetic_frame(const std::vector<ShapeTrack>& shapes, const std::vector<double>& background, int res,
                              int t, int frames, double bg_vx, double bg_vy) {
  Sample s;
  s.image = ImageRGB(res, res);
  s.mask = BinaryMask(res, res);
  const bool has_flow = frames >= 2;
  double sign = 1.0;
  if (has_flow) {
    const auto [src, dst] = pair_frames(t, frames);
    sign = dst > src ? 1.0 : -1.0;
    s.flow = FlowField(res, res);
    s.flow->source_frame = src;
    s.flow->target_frame = dst;
  }
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      const ShapeTrack* top = nullptr;
      for (const auto& shape : shapes)
        if (shape.contains(px, py, t)) top = &shape;
      double rgb[3];
      if (top) {
        const double lx = px - (top->cx + top->vx * t);
        const double shade = 0.05 * std::sin(0.8 * lx);
        rgb[0] = top->r + shade;
        rgb[1] = top->g + shade;
        rgb[2] = top->b + shade;
      } else {
        for (int c = 0; c < 3; ++c) rgb[c] = background_at(background, c, px - bg_vx * t, py - bg_vy * t);
      }
      for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = quantize8(rgb[c]);
      s.mask.at(y, x) = top ? 1 : 0;
      if (has_flow) {
        const std::size_t i = static_cast<std::size_t>(y) * res + x;
        s.flow->u[i] = static_cast<float>(sign * (top ? top->vx : bg_vx));
        s.flow->v[i] = static_cast<float>(sign * (top ? top->vy : bg_vy));
      }
    }
  }
  if (has_flow) s.flow_rgb = flow_to_rgb(*s.flow);
  s.validity = has_flow ? 1 : 0;
  return s;
}

SyntheticDataset generate_synthetic_dataset(const SynthConfig& cfg, std::mt19937_64& rng) {
  if (cfg.resolution < 32) throw UsageError("synthetic resolution must be at least 32");
  if (cfg.frames_per_seq < 2) throw UsageError("synthetic sequences need at least 2 frames");
  if (cfg.n_sequences < 0 || cfg.n_sod < 0) throw UsageError("synthetic counts must be nonnegative");
  if (cfg.min_shapes < 1 || cfg.max_shapes < cfg.min_shapes) throw UsageError("invalid shape count range");
  if (cfg.speed_min < 0 || cfg.speed_max < cfg.speed_min) throw UsageError("invalid speed range");
  SyntheticDataset out;
  std::uniform_int_distribution<int> shape_count(cfg.min_shapes, cfg.max_shapes);
  for (int n = 0; n < cfg.n_sequences; ++n) {
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%03d", n);
    const auto background = random_background(rng);
    std::vector<ShapeTrack> shapes;
    const int count = shape_count(rng);
    for (int k = 0; k < count; ++k)
      shapes.push_back(random_shape(cfg.resolution, cfg.frames_per_seq, cfg.speed_min, cfg.speed_max, rng));
    Sequence seq;
    seq.name = name;
    for (int t = 0; t < cfg.frames_per_seq; ++t) {
      Sample s = render_synthetic_frame(shapes, background, cfg.resolution, t, cfg.frames_per_seq, cfg.background_vx,
                                        cfg.background_vy);
      char frame[16];
      std::snprintf(frame, sizeof(frame), "%05d", t);
      s.id = seq.name + "/" + frame;
      seq.frames.push_back(std::move(s));
    }
    out.vos.push_back(std::move(seq));
    out.tracks.push_back(std::move(shapes));
  }
  for (int n = 0; n < cfg.n_sod; ++n) {
    const auto background = random_background(rng);
    std::vector<ShapeTrack> shapes;
    const int count = shape_count(rng);
    for (int k = 0; k < count; ++k) shapes.push_back(random_shape(cfg.resolution, 1, 0.0, 0.0, rng));
    Sample s = render_synthetic_frame(shapes, background, cfg.resolution, 0, 1, 0.0, 0.0);
    char id[32];
    std::snprintf(id, sizeof(id), "sod/%05d", n);
    s.id = id;
    out.sod.push_back(std::move(s));
  }
  return out;
}

}  // namespace mavos
