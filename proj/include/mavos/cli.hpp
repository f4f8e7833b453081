#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mavos/metrics.hpp"
#include "mavos/selection.hpp"
#include "mavos/training.hpp"

namespace mavos {

enum class ValueType { kInt, kFloat, kBool, kString, kIntList };

struct ConfigKey {
  std::string name;
  ValueType type;
  std::string help;
};

// Every key accepted by RunConfig.
const std::vector<ConfigKey>& config_registry();

using ConfigValue = std::variant<std::int64_t, double, bool, std::string, std::vector<int>>;

// Flat `key = value` configuration; `#` starts a comment.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_float(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback = {}) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  // Keys absent from the file keep the desk-scale defaults. Relative paths
  // resolve against base_dir.
  TrainConfig train_config(const std::filesystem::path& base_dir = {}) const;

 private:
  std::map<std::string, ConfigValue> values_;
};

struct SynthArgs {
  std::filesystem::path out;
  int sequences = 4;
  int frames = 8;
  int resolution = 64;
  std::uint64_t seed = 0;
  int sod = 0;
  bool force = false;
};
void cmd_synth(const SynthArgs& args, std::ostream& log);

void cmd_train(const std::filesystem::path& config_path, std::ostream& log);

struct CorruptionArgs {
  std::optional<Corruption> mode;
  double strength = 1.0;
  double fraction = 0.5;
  std::uint64_t seed = 0;
};

struct InferArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  InferenceMode mode = InferenceMode::kSelect;
  std::filesystem::path out;
  bool tta = false;
  int jobs = 1;
  double h = kDefaultConfidenceThreshold;
  CorruptionArgs corruption;
};

struct InferSummary {
  SelectionLog log;
  std::vector<std::string> corrupted;
};

// Writes <out>/<seq>/<frame>.png, selection_log.csv, selection_summary.json
// and alpha_difference.csv.
InferSummary cmd_infer(const InferArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path pred;
  std::filesystem::path gt;
  std::filesystem::path out;
  std::optional<char> group_delimiter;
};
EvalReport cmd_eval(const EvalArgs& args, std::ostream& log);

struct AblationRow {
  InferenceMode mode;
  double j, f, g;
  std::map<std::string, double> ratios;
};

struct AblateArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  bool tta = false;
  int jobs = 1;
  CorruptionArgs corruption;
};

// One row per inference mode; writes ablation.csv and ablation.txt plus the
// per-mode inference outputs under <out>/<mode>/.
std::vector<AblationRow> cmd_ablate(const AblateArgs& args, std::ostream& log);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace mavos
