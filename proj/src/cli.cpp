#include "mavos/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "mavos/error.hpp"

namespace fs = std::filesystem;

namespace mavos {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_registry())
    if (k.name == name) return &k;
  return nullptr;
}

std::string_view type_name(ValueType t) {
  switch (t) {
    case ValueType::kInt: return "integer";
    case ValueType::kFloat: return "number";
    case ValueType::kBool: return "boolean";
    case ValueType::kString: return "string";
    case ValueType::kIntList: return "comma-separated integers";
  }
  return "?";
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_float(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

ConfigValue parse_value(const ConfigKey& key, const std::string& raw, const std::string& where) {
  auto bad = [&]() -> UsageError {
    return UsageError(where + ": value '" + raw + "' for '" + key.name + "' is not a " +
                      std::string(type_name(key.type)));
  };
  switch (key.type) {
    case ValueType::kInt:
      if (auto v = parse_int(raw)) return *v;
      throw bad();
    case ValueType::kFloat:
      if (auto v = parse_float(raw)) return *v;
      throw bad();
    case ValueType::kBool:
      if (raw == "true" || raw == "1") return true;
      if (raw == "false" || raw == "0") return false;
      throw bad();
    case ValueType::kString:
      if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return raw.substr(1, raw.size() - 2);
      return raw;
    case ValueType::kIntList: {
      std::vector<int> out;
      std::stringstream ss(raw);
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto v = parse_int(trim(item));
        if (!v) throw bad();
        out.push_back(static_cast<int>(*v));
      }
      if (out.empty()) throw bad();
      return out;
    }
  }
  throw bad();
}

void ensure_empty_or_force(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("output path is not a directory: " + dir.string());
  if (fs::is_directory(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory is not empty: " + dir.string() + " (use --force to overwrite)");
    fs::remove_all(dir);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

fs::path vos_root(const fs::path& data) {
  return fs::is_directory(data / "VOS") ? data / "VOS" : data;
}

// Loads a dataset and applies the optional flow corruption.
std::vector<Sequence> load_for_inference(const fs::path& data, const CorruptionArgs& c,
                                         std::vector<std::string>& corrupted) {
  auto seqs = load_vos_dataset(vos_root(data));
  if (c.mode) {
    std::mt19937_64 rng(c.seed);
    corrupted = corrupt_sequences(seqs, *c.mode, c.strength, c.fraction, rng);
  }
  return seqs;
}

void write_masks(const fs::path& out, const Sequence& seq, const SequenceInference& res) {
  fs::create_directories(out / seq.name);
  for (std::size_t t = 0; t < seq.frames.size(); ++t)
    write_mask_png(res.masks[t], out / seq.name / (res.log.frames[t].frame + ".png"));
}

InferSummary run_inference(const Model<float>& model, const std::vector<Sequence>& seqs, const fs::path& out,
                           const InferenceOptions& opts) {
  InferSummary summary;
  summary.log.mode = opts.mode;
  fs::create_directories(out);
  for (const auto& seq : seqs) {
    const SequenceInference res = infer_sequence(model, seq, opts);
    write_masks(out, seq, res);
    summary.log.append(res.log);
  }
  summary.log.write_csv(out / "selection_log.csv");
  summary.log.write_summary_json(out / "selection_summary.json");
  summary.log.write_alpha_difference_csv(out / "alpha_difference.csv");
  return summary;
}

}  // namespace

const std::vector<ConfigKey>& config_registry() {
  static const std::vector<ConfigKey> keys = {
      {"vos_root", ValueType::kString, "VOS dataset root (JPEGImages/, Annotations/, Flows/)"},
      {"sod_root", ValueType::kString, "SOD dataset root (Images/, Masks/)"},
      {"out_dir", ValueType::kString, "checkpoint and log directory"},
      {"resolution", ValueType::kInt, "square training size"},
      {"encoder_channels", ValueType::kIntList, "channels per encoder block"},
      {"decoder_width", ValueType::kInt, "decoder channel width"},
      {"cbam_reduction", ValueType::kInt, "attention MLP reduction ratio"},
      {"spatial_kernel", ValueType::kInt, "spatial attention kernel size"},
      {"batch_size", ValueType::kInt, "samples per step"},
      {"learning_rate", ValueType::kFloat, "Adam step size"},
      {"steps", ValueType::kInt, "collaborative training steps"},
      {"pretrain_sod_steps", ValueType::kInt, "image-only steps before collaborative training"},
      {"p_sod", ValueType::kFloat, "probability of drawing an image-only sample"},
      {"seed", ValueType::kInt, "seed for initialisation and sampling"},
      {"freeze_norm", ValueType::kBool, "keep normalisation layers fixed"},
      {"adam_beta1", ValueType::kFloat, "first-moment decay"},
      {"adam_beta2", ValueType::kFloat, "second-moment decay"},
      {"adam_epsilon", ValueType::kFloat, "denominator epsilon"},
      {"checkpoint_every", ValueType::kInt, "steps between checkpoints, 0 for steps/10"},
  };
  return keys;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string raw = trim(body.substr(eq + 1));
    const ConfigKey* spec = find_key(key);
    if (!spec) throw UsageError(where + ": unknown key '" + key + "'");
    if (cfg.values_.count(key)) throw UsageError(where + ": duplicate key '" + key + "'");
    if (raw.empty()) throw UsageError(where + ": missing value for '" + key + "'");
    cfg.values_[key] = parse_value(*spec, raw, where);
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::get<std::int64_t>(it->second);
}

double RunConfig::get_float(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::get<double>(it->second);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::get<bool>(it->second);
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::get<std::string>(it->second);
}

std::vector<int> RunConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : std::get<std::vector<int>>(it->second);
}

TrainConfig RunConfig::train_config(const fs::path& base_dir) const {
  TrainConfig c = TrainConfig::desk_scale();
  auto narrow = [](std::int64_t v, const char* key) {
    if (v < INT32_MIN || v > INT32_MAX) throw UsageError(std::string(key) + " is out of range");
    return static_cast<int>(v);
  };
  c.network.resolution = narrow(get_int("resolution", c.network.resolution), "resolution");
  c.network.encoder.channels = get_int_list("encoder_channels", c.network.encoder.channels);
  c.network.decoder_width = narrow(get_int("decoder_width", c.network.decoder_width), "decoder_width");
  c.network.cbam_reduction = narrow(get_int("cbam_reduction", c.network.cbam_reduction), "cbam_reduction");
  c.network.spatial_kernel = narrow(get_int("spatial_kernel", c.network.spatial_kernel), "spatial_kernel");
  c.batch_size = narrow(get_int("batch_size", c.batch_size), "batch_size");
  c.learning_rate = get_float("learning_rate", c.learning_rate);
  c.steps = narrow(get_int("steps", c.steps), "steps");
  c.pretrain_sod_steps = narrow(get_int("pretrain_sod_steps", c.pretrain_sod_steps), "pretrain_sod_steps");
  c.p_sod = get_float("p_sod", c.p_sod);
  const auto seed = get_int("seed", 0);
  if (seed < 0) throw UsageError("seed must be nonnegative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.freeze_norm = get_bool("freeze_norm", c.freeze_norm);
  c.adam.beta1 = get_float("adam_beta1", c.adam.beta1);
  c.adam.beta2 = get_float("adam_beta2", c.adam.beta2);
  c.adam.epsilon = get_float("adam_epsilon", c.adam.epsilon);
  c.checkpoint_every = narrow(get_int("checkpoint_every", c.checkpoint_every), "checkpoint_every");
  c.out_dir = resolve(base_dir, get_string("out_dir"));
  c.validate();
  return c;
}

void cmd_synth(const SynthArgs& args, std::ostream& log) {
  EncoderConfig enc;
  if (args.resolution <= 0 || args.resolution % enc.size_multiple() != 0)
    throw UsageError("resolution " + std::to_string(args.resolution) + " must be a positive multiple of " +
                     std::to_string(enc.size_multiple()) + " so every encoder level k sits at 1/2^(k+1)");
  if (args.sequences < 1) throw UsageError("--sequences must be at least 1");
  if (args.frames < 2) throw UsageError("--frames must be at least 2 (flow needs a frame pair)");
  if (args.sod < 0) throw UsageError("--sod must be nonnegative");
  ensure_empty_or_force(args.out, args.force);

  SynthConfig cfg;
  cfg.n_sequences = args.sequences;
  cfg.frames_per_seq = args.frames;
  cfg.resolution = args.resolution;
  cfg.n_sod = args.sod;
  std::mt19937_64 rng(args.seed);
  const SyntheticDataset ds = generate_synthetic_dataset(cfg, rng);
  write_vos_dataset(ds.vos, args.out / "VOS");
  if (!ds.sod.empty()) write_sod_dataset(ds.sod, args.out / "SOD");

  nlohmann::ordered_json manifest;
  manifest["root"] = args.out.string();
  manifest["seed"] = args.seed;
  manifest["resolution"] = args.resolution;
  manifest["vos"] = {{"path", (args.out / "VOS").string()}, {"sequences", ds.vos.size()},
                     {"frames", static_cast<std::size_t>(args.sequences) * args.frames}};
  manifest["sod"] = {{"path", ds.sod.empty() ? "" : (args.out / "SOD").string()}, {"images", ds.sod.size()}};
  std::ofstream(args.out / "manifest.json") << manifest.dump(2) << '\n';
  log << manifest.dump(2) << '\n';
}

void cmd_train(const fs::path& config_path, std::ostream& log) {
  const RunConfig rc = RunConfig::load(config_path);
  const fs::path base = config_path.parent_path();
  const TrainConfig cfg = rc.train_config(base);
  if (!rc.has("vos_root")) throw UsageError(config_path.string() + ": vos_root is required");
  const auto vos = load_vos_dataset(resolve(base, rc.get_string("vos_root")));
  std::vector<Sample> sod;
  if (rc.has("sod_root")) sod = load_sod_dataset(resolve(base, rc.get_string("sod_root")));
  if (sod.empty() && (cfg.p_sod > 0.0 || cfg.pretrain_sod_steps > 0))
    throw UsageError("p_sod > 0 or pretrain_sod_steps > 0 needs sod_root");
  const int report_every = std::max(1, (cfg.steps + cfg.pretrain_sod_steps) / 20);
  const TrainResult res = train(cfg, vos, sod, [&](const LossLogRow& row) {
    if (row.step % report_every == 0 || row.step == 1)
      log << "step " << row.step << " loss " << row.loss << " sod_fraction " << row.sod_fraction << '\n';
  });
  if (res.final_checkpoint.empty()) {
    log << "training finished (no out_dir set, nothing written)\n";
  } else {
    log << "checkpoint: " << res.final_checkpoint.string() << '\n';
  }
}

InferSummary cmd_infer(const InferArgs& args, std::ostream& log) {
  const Model<float> model = load_checkpoint(args.checkpoint);
  InferSummary summary;
  const auto seqs = load_for_inference(args.data, args.corruption, summary.corrupted);
  InferenceOptions opts;
  opts.mode = args.mode;
  opts.tta = args.tta;
  opts.tta_options = tta_options_for(model.config().resolution, model.config().encoder.size_multiple());
  opts.jobs = args.jobs;
  opts.h = args.h;
  InferSummary run = run_inference(model, seqs, args.out, opts);
  run.corrupted = std::move(summary.corrupted);
  if (!run.corrupted.empty()) {
    std::ofstream out(args.out / "corrupted_frames.txt");
    for (const auto& id : run.corrupted) out << id << '\n';
  }
  log << "mode " << mode_name(args.mode) << ": " << run.log.frames.size() << " frames -> " << args.out.string() << '\n';
  for (const auto& [src, pct] : run.log.ratios()) log << "  " << src << " " << pct << "%\n";
  return run;
}

EvalReport cmd_eval(const EvalArgs& args, std::ostream& log) {
  EvalOptions opts;
  opts.group_delimiter = args.group_delimiter;
  EvalReport report = evaluate_dataset(args.pred, vos_root(args.gt), opts);
  const fs::path summary = args.pred / "selection_summary.json";
  if (fs::exists(summary)) {
    std::ifstream in(summary);
    try {
      report.selection_stats = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed " + summary.string() + ": " + e.what());
    }
  }
  if (!args.out.empty()) {
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    report.write_json(args.out);
    fs::path csv = args.out;
    csv.replace_extension(".csv");
    report.write_csv(csv);
  }
  log << std::fixed << std::setprecision(4) << "J " << report.j << "  F " << report.f << "  G " << report.g << '\n';
  log.unsetf(std::ios::floatfield);
  return report;
}

std::vector<AblationRow> cmd_ablate(const AblateArgs& args, std::ostream& log) {
  const Model<float> model = load_checkpoint(args.checkpoint);
  std::vector<std::string> corrupted;
  const auto seqs = load_for_inference(args.data, args.corruption, corrupted);
  fs::create_directories(args.out);
  std::vector<AblationRow> rows;
  for (InferenceMode mode : all_inference_modes()) {
    InferenceOptions opts;
    opts.mode = mode;
    opts.tta = args.tta;
    opts.tta_options = tta_options_for(model.config().resolution, model.config().encoder.size_multiple());
    opts.jobs = args.jobs;
    const fs::path dir = args.out / std::string(mode_name(mode));
    const InferSummary run = run_inference(model, seqs, dir, opts);
    const EvalReport report = evaluate_dataset(dir, vos_root(args.data));
    report.write_json(dir / "report.json");
    rows.push_back({mode, report.j, report.f, report.g, run.log.ratios()});
  }
  std::ofstream csv(args.out / "ablation.csv");
  csv.precision(9);
  csv << "mode,J,F,G,ratio_image,ratio_flow,ratio_fused\n";
  auto ratio = [](const AblationRow& r, const char* key) {
    auto it = r.ratios.find(key);
    return it == r.ratios.end() ? 0.0 : it->second;
  };
  for (const auto& r : rows)
    csv << mode_name(r.mode) << ',' << r.j << ',' << r.f << ',' << r.g << ',' << ratio(r, "image") << ','
        << ratio(r, "flow") << ',' << ratio(r, "fused") << '\n';
  const std::string table = format_ablation_table(rows);
  std::ofstream(args.out / "ablation.txt") << table;
  log << table;
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "mode" << std::right << std::setw(8) << "J" << std::setw(8) << "F"
      << std::setw(8) << "G" << std::setw(10) << "image%" << std::setw(10) << "flow%" << std::setw(10) << "fused%"
      << '\n';
  out << std::fixed;
  for (const auto& r : rows) {
    auto pct = [&](const char* key) {
      auto it = r.ratios.find(key);
      return it == r.ratios.end() ? 0.0 : it->second;
    };
    out << std::left << std::setw(12) << mode_name(r.mode) << std::right << std::setprecision(3) << std::setw(8)
        << r.j << std::setw(8) << r.f << std::setw(8) << r.g << std::setprecision(1) << std::setw(10) << pct("image")
        << std::setw(10) << pct("flow") << std::setw(10) << pct("fused") << '\n';
  }
  return out.str();
}

}  // namespace mavos
