#include "mavos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mavos/error.hpp"

namespace fs = std::filesystem;

namespace mavos {
namespace {

void check_shapes(const BinaryMask& gt, const BinaryMask& pred) {
  if (gt.height != pred.height || gt.width != pred.width)
    throw UsageError("mask shape mismatch: " + std::to_string(gt.height) + "x" + std::to_string(gt.width) + " vs " +
                     std::to_string(pred.height) + "x" + std::to_string(pred.width));
}

BinaryMask dilate_disk(const BinaryMask& m, int radius) {
  if (radius <= 0) return m;
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dy, dx);
  BinaryMask out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (auto [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < m.height && xx >= 0 && xx < m.width) out.at(yy, xx) = 1;
      }
    }
  return out;
}

std::size_t count_and(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) n += (a.pixels[i] && b.pixels[i]);
  return n;
}

double mean(double sum, int n) { return n ? sum / n : 0.0; }

}  // namespace

double jaccard(const BinaryMask& gt, const BinaryMask& pred) {
  check_shapes(gt, pred);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.pixels.size(); ++i) {
    const bool a = gt.pixels[i] != 0, b = pred.pixels[i] != 0;
    inter += (a && b);
    uni += (a || b);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask boundary_map(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  auto fg = [&](int y, int x) {
    return y >= 0 && y < mask.height && x >= 0 && x < mask.width && mask.at(y, x) != 0;
  };
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1))) out.at(y, x) = 1;
  return out;
}

int default_boundary_tolerance(int height, int width) {
  return static_cast<int>(std::ceil(0.008 * std::sqrt(static_cast<double>(height) * height +
                                                      static_cast<double>(width) * width)));
}

BoundaryScore boundary_f(const BinaryMask& gt, const BinaryMask& pred, std::optional<int> tol_px) {
  check_shapes(gt, pred);
  const int radius = tol_px.value_or(default_boundary_tolerance(gt.height, gt.width));
  if (radius < 0) throw UsageError("boundary tolerance must be nonnegative");
  const BinaryMask gt_b = boundary_map(gt);
  const BinaryMask pred_b = boundary_map(pred);
  const std::size_t n_gt = gt_b.count();
  const std::size_t n_pred = pred_b.count();
  if (n_gt == 0 && n_pred == 0) return {1.0, 1.0, 1.0};
  if (n_gt == 0 || n_pred == 0) return {n_pred == 0 ? 1.0 : 0.0, n_gt == 0 ? 1.0 : 0.0, 0.0};
  BoundaryScore s;
  s.precision = static_cast<double>(count_and(pred_b, dilate_disk(gt_b, radius))) / static_cast<double>(n_pred);
  s.recall = static_cast<double>(count_and(gt_b, dilate_disk(pred_b, radius))) / static_cast<double>(n_gt);
  s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

EvalReport aggregate_scores(std::vector<FrameScore> frames, const EvalOptions& options) {
  EvalReport report;
  report.per_frame = std::move(frames);
  std::map<std::string, SequenceScore> by_seq;
  std::vector<std::string> order;
  for (const auto& f : report.per_frame) {
    auto [it, inserted] = by_seq.try_emplace(f.sequence);
    if (inserted) {
      it->second.name = f.sequence;
      order.push_back(f.sequence);
    }
    it->second.frames += 1;
    it->second.j += f.j;
    it->second.f += f.f;
  }
  double sj = 0, sf = 0;
  for (const auto& name : order) {
    auto s = by_seq[name];
    s.j = mean(s.j, s.frames);
    s.f = mean(s.f, s.frames);
    s.g = (s.j + s.f) / 2.0;
    sj += s.j;
    sf += s.f;
    report.per_sequence.push_back(s);
    if (options.group_delimiter) {
      const auto cut = name.find(*options.group_delimiter);
      const std::string key = cut == std::string::npos ? name : name.substr(0, cut);
      auto& grp = report.per_group[key];
      grp.name = key;
      grp.frames += 1;  // counts sequences for groups
      grp.j += s.j;
      grp.f += s.f;
    }
  }
  for (auto& [_, grp] : report.per_group) {
    grp.j = mean(grp.j, grp.frames);
    grp.f = mean(grp.f, grp.frames);
    grp.g = (grp.j + grp.f) / 2.0;
  }
  const int n = static_cast<int>(report.per_sequence.size());
  report.j = mean(sj, n);
  report.f = mean(sf, n);
  report.g = (report.j + report.f) / 2.0;
  return report;
}

EvalReport evaluate_pairs(const std::vector<FramePair>& pairs, const EvalOptions& options) {
  std::vector<FrameScore> frames;
  frames.reserve(pairs.size());
  for (const auto& p : pairs) {
    FrameScore s{p.sequence, p.frame, jaccard(p.gt, p.pred), boundary_f(p.gt, p.pred, options.boundary_tolerance).f, 0.0};
    s.g = (s.j + s.f) / 2.0;
    frames.push_back(std::move(s));
  }
  return aggregate_scores(std::move(frames), options);
}

EvalReport evaluate_dataset(const fs::path& pred_root, const fs::path& gt_root, const EvalOptions& options) {
  const fs::path gt_dir = fs::is_directory(gt_root / "Annotations") ? gt_root / "Annotations" : gt_root;
  if (!fs::is_directory(gt_dir)) throw DataError("ground-truth directory not found: " + gt_root.string());
  if (!fs::is_directory(pred_root)) throw DataError("prediction directory not found: " + pred_root.string());
  std::vector<fs::path> seqs;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_directory()) seqs.push_back(e.path());
  std::sort(seqs.begin(), seqs.end());
  if (seqs.empty()) throw DataError("no ground-truth sequences under " + gt_dir.string());
  std::vector<FramePair> pairs;
  for (const auto& seq : seqs) {
    std::vector<fs::path> frames;
    for (const auto& e : fs::directory_iterator(seq))
      if (e.is_regular_file() && e.path().extension() == ".png") frames.push_back(e.path());
    std::sort(frames.begin(), frames.end());
    const std::string name = seq.filename().string();
    for (const auto& f : frames) {
      const fs::path pred_path = pred_root / name / f.filename();
      if (!fs::exists(pred_path))
        throw DataError("missing prediction for annotated frame " + name + "/" + f.stem().string());
      FramePair p{name, f.stem().string(), read_mask(f, MaskRule::kAnyNonzero), read_mask(pred_path, MaskRule::kAnyNonzero)};
      if (p.gt.height != p.pred.height || p.gt.width != p.pred.width)
        throw DataError("prediction size differs from ground truth for frame " + name + "/" + p.frame);
      pairs.push_back(std::move(p));
    }
  }
  return evaluate_pairs(pairs, options);
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = {{"J", this->j}, {"F", f}, {"G", g}, {"sequences", per_sequence.size()}, {"frames", per_frame.size()}};
  nlohmann::ordered_json seqs = nlohmann::ordered_json::object();
  for (const auto& s : per_sequence) {
    nlohmann::ordered_json frames = nlohmann::ordered_json::array();
    for (const auto& fr : per_frame)
      if (fr.sequence == s.name) frames.push_back({{"frame", fr.frame}, {"J", fr.j}, {"F", fr.f}, {"G", fr.g}});
    seqs[s.name] = {{"J", s.j}, {"F", s.f}, {"G", s.g}, {"frames", frames}};
  }
  j["sequences"] = seqs;
  if (!per_group.empty()) {
    nlohmann::ordered_json groups = nlohmann::ordered_json::object();
    for (const auto& [key, grp] : per_group)
      groups[key] = {{"J", grp.j}, {"F", grp.f}, {"G", grp.g}, {"sequences", grp.frames}};
    j["groups"] = groups;
  }
  if (selection_stats) j["selection"] = *selection_stats;
  return j;
}

void EvalReport::write_json(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << to_json().dump(2) << '\n';
}

void EvalReport::write_csv(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out.precision(9);
  out << "sequence,frame,J,F,G\n";
  for (const auto& f : per_frame) out << f.sequence << ',' << f.frame << ',' << f.j << ',' << f.f << ',' << f.g << '\n';
}

}  // namespace mavos
