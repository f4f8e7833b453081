#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mavos/image.hpp"

namespace mavos {

// |gt & pred| / |gt | pred|, 1 when both masks are empty.
double jaccard(const BinaryMask& gt, const BinaryMask& pred);

// Foreground pixels with at least one background 4-neighbour; pixels outside
// the image count as background.
BinaryMask boundary_map(const BinaryMask& mask);

// ceil(0.8% of the image diagonal).
int default_boundary_tolerance(int height, int width);

struct BoundaryScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// Boundary F-measure with disk-dilation matching of radius tol_px.
BoundaryScore boundary_f(const BinaryMask& gt, const BinaryMask& pred, std::optional<int> tol_px = std::nullopt);

struct FrameScore {
  std::string sequence;
  std::string frame;
  double j = 0.0;
  double f = 0.0;
  double g = 0.0;
};

struct SequenceScore {
  std::string name;
  int frames = 0;
  double j = 0.0;
  double f = 0.0;
  double g = 0.0;
};

struct EvalReport {
  std::vector<FrameScore> per_frame;
  std::vector<SequenceScore> per_sequence;
  std::map<std::string, SequenceScore> per_group;  // mean of sequence scores per name prefix
  double j = 0.0;
  double f = 0.0;
  double g = 0.0;
  std::optional<nlohmann::ordered_json> selection_stats;

  nlohmann::ordered_json to_json() const;
  void write_json(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct EvalOptions {
  std::optional<int> boundary_tolerance;
  // When set, sequences are grouped by the text before the first occurrence.
  std::optional<char> group_delimiter;
};

// Aggregates frame scores: sequence = mean of its frames, dataset = mean of
// sequences, G = (J + F) / 2 at every level.
EvalReport aggregate_scores(std::vector<FrameScore> frames, const EvalOptions& options = {});

struct FramePair {
  std::string sequence;
  std::string frame;
  BinaryMask gt;
  BinaryMask pred;
};
EvalReport evaluate_pairs(const std::vector<FramePair>& pairs, const EvalOptions& options = {});

// gt_root: either a dataset root with Annotations/<seq>/<frame>.png or a
// directory of <seq>/<frame>.png. pred_root: <seq>/<frame>.png. Only frames
// with ground truth are scored.
EvalReport evaluate_dataset(const std::filesystem::path& pred_root, const std::filesystem::path& gt_root,
                            const EvalOptions& options = {});

}  // namespace mavos
