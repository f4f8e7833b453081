#include "mavos/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mavos/error.hpp"

namespace mavos {

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.network.resolution = 384;
  c.batch_size = 16;
  c.learning_rate = 1e-5;
  return c;
}

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.network.resolution = 64;
  c.batch_size = 8;
  c.learning_rate = 1e-3;
  c.steps = 2000;
  return c;
}

void TrainConfig::validate() const {
  network.validate();
  if (batch_size <= 0) throw UsageError("batch_size must be positive");
  if (steps < 1) throw UsageError("steps must be at least 1");
  if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be nonnegative");
  if (!(p_sod >= 0.0 && p_sod <= 1.0)) throw UsageError("p_sod must lie in [0, 1]");
  if (pretrain_sod_steps < 0) throw UsageError("pretrain_sod_steps must be nonnegative");
  if (checkpoint_every < 0) throw UsageError("checkpoint_every must be nonnegative");
}

template <class T>
double cross_entropy_loss(const FeatureMap<T>& logits, const BinaryMask& mask, FeatureMap<T>* dlogits) {
  if (logits.c != 2) throw UsageError("cross entropy expects 2-channel logits");
  if (logits.h != mask.height || logits.w != mask.width) throw UsageError("cross entropy: logits and mask differ in size");
  if (!mask.is_binary()) throw UsageError("cross entropy: mask is not binary");
  const std::size_t n = logits.plane();
  const T* bg = logits.channel(0);
  const T* fg = logits.channel(1);
  if (dlogits) *dlogits = FeatureMap<T>(2, logits.h, logits.w);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double b = bg[i];
    const double f = fg[i];
    const double hi = std::max(b, f);
    const double lse = hi + std::log(std::exp(b - hi) + std::exp(f - hi));
    const bool is_fg = mask.pixels[i] != 0;
    total += lse - (is_fg ? f : b);
    if (dlogits) {
      const double p_fg = std::exp(f - lse);
      const double p_bg = std::exp(b - lse);
      dlogits->data[i] = static_cast<T>((p_bg - (is_fg ? 0.0 : 1.0)) * inv_n);
      dlogits->data[n + i] = static_cast<T>((p_fg - (is_fg ? 1.0 : 0.0)) * inv_n);
    }
  }
  return total * inv_n;
}

template <class T>
std::vector<bool> trainable_mask(const ParamStore<T>& params, bool freeze_norm) {
  std::vector<bool> mask(params.total(), false);
  for (const auto& e : params.entries()) {
    bool on = false;
    switch (e.role) {
      case ParamRole::kWeight:
      case ParamRole::kBias:
        on = true;
        break;
      case ParamRole::kNormScale:
      case ParamRole::kNormShift:
        on = !freeze_norm;
        break;
      case ParamRole::kNormMean:
      case ParamRole::kNormVar:
        on = false;
        break;
    }
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(e.offset), e.size, on);
  }
  return mask;
}

namespace {

template <class T>
FeatureMap<T> to_model_type(const FeatureMap<float>& m) {
  if constexpr (std::is_same_v<T, float>) {
    return m;
  } else {
    return m.template cast<T>();
  }
}

// Per-channel first and second moments of every normalisation input.
template <class T>
struct NormMoments {
  std::vector<double> sum, sq;
  double count = 0;
};

std::string describe(const TrainingBatch& batch) {
  std::ostringstream os;
  for (std::size_t i = 0; i < batch.provenance.size(); ++i) os << (i ? "," : "") << batch.provenance[i];
  return os.str();
}

template <class T>
double run_batch(const Model<T>& model, const TrainingBatch& batch, std::vector<T>& grad,
                 std::vector<NormMoments<T>>* moments) {
  grad.assign(model.params().total(), T(0));
  double loss = 0.0;
  for (int b = 0; b < batch.batch; ++b) {
    ForwardTrace<T> trace;
    const FeatureMap<T> logits =
        model.forward(to_model_type<T>(batch.image(b)), to_model_type<T>(batch.motion_input(b)), &trace);
    FeatureMap<T> dlogits;
    loss += cross_entropy_loss(logits, batch.mask(b), &dlogits);
    model.backward(trace, dlogits, grad);
    if (moments) {
      std::size_t slot = 0;
      for (const auto* enc : {&trace.appearance, &trace.motion})
        for (const auto& blk : enc->blocks)
          for (const auto* z : {&blk.conv1, &blk.conv2}) {
            auto& mo = (*moments)[slot++];
            if (mo.sum.empty()) {
              mo.sum.assign(z->c, 0.0);
              mo.sq.assign(z->c, 0.0);
            }
            for (int c = 0; c < z->c; ++c) {
              const T* p = z->channel(c);
              for (std::size_t i = 0; i < z->plane(); ++i) {
                mo.sum[c] += p[i];
                mo.sq[c] += static_cast<double>(p[i]) * p[i];
              }
            }
            mo.count += static_cast<double>(z->plane());
          }
    }
  }
  const T inv = T(1) / static_cast<T>(batch.batch);
  for (T& g : grad) g *= inv;
  return loss / batch.batch;
}

}  // namespace

template <class T>
double batch_loss_and_gradient(const Model<T>& model, const TrainingBatch& batch, std::vector<T>& grad) {
  return run_batch<T>(model, batch, grad, nullptr);
}

template <class T>
double train_step(Model<T>& model, const TrainingBatch& batch, AdamState<T>& state, const StepOptions& options) {
  auto& params = model.params();
  const std::size_t n = params.total();
  if (state.m.size() != n) {
    state.m.assign(n, T(0));
    state.v.assign(n, T(0));
  }
  std::vector<T> grad;
  std::vector<NormMoments<T>> moments;
  const int norm_layers = 4 * model.config().encoder.blocks();
  if (!options.freeze_norm) moments.resize(norm_layers);
  const double loss = run_batch(model, batch, grad, options.freeze_norm ? nullptr : &moments);
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(options.step_index) + " (batch: " +
                       describe(batch) + ")");
  }

  state.step += 1;
  const auto mask = trainable_mask(params, options.freeze_norm);
  const double b1 = options.adam.beta1;
  const double b2 = options.adam.beta2;
  const T lr = static_cast<T>(options.learning_rate);
  const T c1 = static_cast<T>(1.0 - std::pow(b1, static_cast<double>(state.step)));
  const T c2 = static_cast<T>(1.0 - std::pow(b2, static_cast<double>(state.step)));
  const T eps = static_cast<T>(options.adam.epsilon);
  auto& values = params.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const T g = grad[i];
    state.m[i] = static_cast<T>(b1) * state.m[i] + static_cast<T>(1.0 - b1) * g;
    state.v[i] = static_cast<T>(b2) * state.v[i] + static_cast<T>(1.0 - b2) * g * g;
    const T mhat = state.m[i] / c1;
    const T vhat = state.v[i] / c2;
    values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  if (!options.freeze_norm) {
    // Running statistics follow an exponential average of batch moments.
    std::size_t slot = 0;
    const T mom = static_cast<T>(options.norm_momentum);
    for (const std::string stream : {"app", "mot"})
      for (int b = 1; b <= model.config().encoder.blocks(); ++b)
        for (int j = 1; j <= 2; ++j) {
          const std::string prefix = stream + ".block" + std::to_string(b) + ".norm" + std::to_string(j);
          T* mean = params.data(params.index(prefix + ".running_mean"));
          T* var = params.data(params.index(prefix + ".running_var"));
          const auto& mo = moments[slot++];
          for (std::size_t c = 0; c < mo.sum.size(); ++c) {
            const double mu = mo.sum[c] / mo.count;
            const double va = std::max(0.0, mo.sq[c] / mo.count - mu * mu);
            mean[c] = (T(1) - mom) * mean[c] + mom * static_cast<T>(mu);
            var[c] = (T(1) - mom) * var[c] + mom * static_cast<T>(va);
          }
        }
  }
  return loss;
}

void write_loss_log(const std::vector<LossLogRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss log: " + path.string());
  out << "step,loss,sod_fraction\n";
  out.precision(9);
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.sod_fraction << '\n';
  if (!out) throw DataError("cannot write loss log: " + path.string());
}

TrainResult train(const TrainConfig& cfg, const std::vector<Sequence>& vos, const std::vector<Sample>& sod,
                  const std::function<void(const LossLogRow&)>& on_step) {
  cfg.validate();
  Model<float> model(cfg.network);
  model.initialize(cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  AdamState<float> state;
  TrainResult result{model, {}, {}};
  const int total_steps = cfg.pretrain_sod_steps + cfg.steps;
  const int every = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : std::max(cfg.steps / 10, 1);
  const bool to_disk = !cfg.out_dir.empty();
  if (to_disk) std::filesystem::create_directories(cfg.out_dir);

  double sod_seen = 0.0;
  double seen = 0.0;
  for (int step = 1; step <= total_steps; ++step) {
    const double p = step <= cfg.pretrain_sod_steps ? 1.0 : cfg.p_sod;
    const TrainingBatch batch = sample_training_batch(vos, sod, p, cfg.batch_size, cfg.network.resolution, rng);
    StepOptions opts;
    opts.learning_rate = cfg.learning_rate;
    opts.adam = cfg.adam;
    opts.freeze_norm = cfg.freeze_norm;
    opts.step_index = step;
    const double loss = train_step(model, batch, state, opts);
    sod_seen += batch.sod_fraction() * batch.batch;
    seen += batch.batch;
    const LossLogRow row{step, loss, sod_seen / seen};
    result.log.push_back(row);
    if (on_step) on_step(row);
    if (to_disk && (step % every == 0 || step == total_steps)) {
      char name[40];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", step);
      save_checkpoint(model, cfg.out_dir / name);
      write_loss_log(result.log, cfg.out_dir / "loss_log.csv");
    }
  }
  if (to_disk) {
    result.final_checkpoint = cfg.out_dir / "model.ckpt";
    save_checkpoint(model, result.final_checkpoint);
    write_loss_log(result.log, cfg.out_dir / "loss_log.csv");
  }
  result.model = std::move(model);
  return result;
}

template double cross_entropy_loss(const FeatureMap<float>&, const BinaryMask&, FeatureMap<float>*);
template double cross_entropy_loss(const FeatureMap<double>&, const BinaryMask&, FeatureMap<double>*);
template std::vector<bool> trainable_mask(const ParamStore<float>&, bool);
template std::vector<bool> trainable_mask(const ParamStore<double>&, bool);
template double batch_loss_and_gradient(const Model<float>&, const TrainingBatch&, std::vector<float>&);
template double batch_loss_and_gradient(const Model<double>&, const TrainingBatch&, std::vector<double>&);
template double train_step(Model<float>&, const TrainingBatch&, AdamState<float>&, const StepOptions&);
template double train_step(Model<double>&, const TrainingBatch&, AdamState<double>&, const StepOptions&);

}  // namespace mavos
