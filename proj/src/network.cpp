#include "mavos/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mavos/error.hpp"
#include "mavos/kernels.hpp"

namespace mavos {

void EncoderConfig::validate() const {
  if (blocks() < 2) throw UsageError("encoder needs at least 2 blocks");
  for (int c : channels)
    if (c <= 0) throw UsageError("encoder channel counts must be positive");
}

void NetworkConfig::validate() const {
  encoder.validate();
  if (decoder_width <= 0) throw UsageError("decoder width must be positive");
  if (cbam_reduction <= 0 || decoder_width / cbam_reduction < 1)
    throw UsageError("attention reduction must leave at least one hidden unit");
  if (spatial_kernel <= 0 || spatial_kernel % 2 == 0) throw UsageError("spatial attention kernel must be odd");
  if (resolution <= 0 || resolution % encoder.size_multiple() != 0)
    throw UsageError("resolution " + std::to_string(resolution) + " is not divisible by 2^(K+1) = " +
                     std::to_string(encoder.size_multiple()));
}

template <class T>
std::size_t ParamStore<T>::add(std::string name, std::vector<int> shape, ParamRole role) {
  if (by_name_.count(name)) throw UsageError("duplicate parameter name " + name);
  std::size_t size = 1;
  for (int d : shape) size *= static_cast<std::size_t>(d);
  entries_.push_back({name, std::move(shape), role, values_.size(), size});
  by_name_.emplace(std::move(name), entries_.size() - 1);
  values_.resize(values_.size() + size, T(0));
  return entries_.size() - 1;
}

template <class T>
std::size_t ParamStore<T>::index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UsageError("unknown parameter " + name);
  return it->second;
}

template <class T>
FeaturePyramid<T> fuse(const FeaturePyramid<T>& appearance, const FeaturePyramid<T>& motion) {
  if (appearance.depth() != motion.depth())
    throw UsageError("fuse: pyramids have different depths (" + std::to_string(appearance.depth()) + " vs " +
                     std::to_string(motion.depth()) + ")");
  FeaturePyramid<T> out;
  out.levels.reserve(appearance.levels.size());
  const auto& ew = kernels::elementwise<T>();
  for (int k = 0; k < appearance.depth(); ++k) {
    const auto& a = appearance.levels[k];
    const auto& m = motion.levels[k];
    if (!a.same_shape(m)) throw UsageError("fuse: level " + std::to_string(k + 1) + " shape mismatch");
    FeatureMap<T> x(a.c, a.h, a.w);
    ew.add(a.data.data(), m.data.data(), x.data.data(), a.size());
    out.levels.push_back(std::move(x));
  }
  return out;
}

template <class T>
Model<T>::Model(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& ch = config_.encoder.channels;
  const int K = config_.encoder.blocks();
  for (int pass = 0; pass < 2; ++pass) {
    const std::string stream = pass == 0 ? "app" : "mot";
    auto& blocks = pass == 0 ? app_ : mot_;
    for (int b = 0; b < K; ++b) {
      const std::string prefix = stream + ".block" + std::to_string(b + 1);
      const int cin = b == 0 ? 3 : ch[b - 1];
      BlockIds ids{};
      ids.down = b == 0 ? 4 : 2;
      ids.conv1 = add_conv(prefix + ".conv1", cin, ch[b], 3);
      ids.norm1 = add_norm(prefix + ".norm1", ch[b]);
      ids.conv2 = add_conv(prefix + ".conv2", ch[b], ch[b], 3);
      ids.norm2 = add_norm(prefix + ".norm2", ch[b]);
      blocks.push_back(ids);
    }
  }
  const int dw = config_.decoder_width;
  const int hidden = dw / config_.cbam_reduction;
  for (int k = 1; k <= K; ++k) {
    const std::string prefix = "dec.psi" + std::to_string(k);
    const int cin = k == 1 ? ch[K - 1] : dw + ch[K - k];
    PsiIds p{};
    p.blend = add_conv(prefix + ".blend", cin, dw, 3);
    p.fc1_w = params_.add(prefix + ".cbam.fc1.weight", {hidden, dw}, ParamRole::kWeight);
    p.fc1_b = params_.add(prefix + ".cbam.fc1.bias", {hidden}, ParamRole::kBias);
    p.fc2_w = params_.add(prefix + ".cbam.fc2.weight", {dw, hidden}, ParamRole::kWeight);
    p.fc2_b = params_.add(prefix + ".cbam.fc2.bias", {dw}, ParamRole::kBias);
    p.spatial = add_conv(prefix + ".cbam.spatial", 2, 1, config_.spatial_kernel);
    psi_.push_back(p);
  }
  head_ = add_conv("dec.head", dw, 2, 1);
  // Identity normalisation until initialised or loaded.
  for (std::size_t i = 0; i < params_.entries().size(); ++i) {
    const auto role = params_.entry(i).role;
    if (role == ParamRole::kNormScale || role == ParamRole::kNormVar)
      std::fill_n(params_.data(i), params_.entry(i).size, T(1));
  }
}

template <class T>
typename Model<T>::ConvIds Model<T>::add_conv(const std::string& prefix, int cin, int cout, int k) {
  ConvIds ids{};
  ids.weight = params_.add(prefix + ".weight", {cout, cin, k, k}, ParamRole::kWeight);
  ids.bias = params_.add(prefix + ".bias", {cout}, ParamRole::kBias);
  ids.cin = cin;
  ids.cout = cout;
  ids.k = k;
  return ids;
}

template <class T>
typename Model<T>::NormIds Model<T>::add_norm(const std::string& prefix, int c) {
  NormIds ids{};
  ids.scale = params_.add(prefix + ".scale", {c}, ParamRole::kNormScale);
  ids.shift = params_.add(prefix + ".shift", {c}, ParamRole::kNormShift);
  ids.mean = params_.add(prefix + ".running_mean", {c}, ParamRole::kNormMean);
  ids.var = params_.add(prefix + ".running_var", {c}, ParamRole::kNormVar);
  return ids;
}

template <class T>
void Model<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](std::size_t id, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    T* p = params_.data(id);
    for (std::size_t i = 0; i < params_.entry(id).size; ++i) p[i] = static_cast<T>(dist(rng));
  };
  auto fan_in = [&](std::size_t id) {
    const auto& shape = params_.entry(id).shape;
    int f = 1;
    for (std::size_t d = 1; d < shape.size(); ++d) f *= shape[d];
    return static_cast<double>(f);
  };
  for (std::size_t i = 0; i < params_.entries().size(); ++i) {
    const auto& e = params_.entry(i);
    T* p = params_.data(i);
    switch (e.role) {
      case ParamRole::kWeight: {
        // ReLU-followed layers get the He bound, gates and the head LeCun.
        const bool rectified = e.name.find(".blend.") != std::string::npos ||
                               e.name.find(".conv") != std::string::npos ||
                               e.name.find(".fc1.") != std::string::npos;
        fill_uniform(i, std::sqrt((rectified ? 6.0 : 3.0) / fan_in(i)));
        break;
      }
      case ParamRole::kBias:
      case ParamRole::kNormShift:
      case ParamRole::kNormMean:
        std::fill_n(p, e.size, T(0));
        break;
      case ParamRole::kNormScale:
      case ParamRole::kNormVar:
        std::fill_n(p, e.size, T(1));
        break;
    }
  }
}

template <class T>
void Model<T>::check_input(int height, int width) const {
  const int m = config_.encoder.size_multiple();
  if (height <= 0 || width <= 0 || height % m != 0 || width % m != 0)
    throw UsageError("input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^(K+1) = " + std::to_string(m) + "; pad or resize the input");
}

template <class T>
FeaturePyramid<T> Model<T>::encode(const FeatureMap<T>& input, Stream stream, EncoderTrace<T>* trace) const {
  if (input.c != 3) throw UsageError("encoder expects a 3-channel input");
  check_input(input.h, input.w);
  const auto& ids = blocks(stream);
  FeaturePyramid<T> out;
  if (trace) trace->blocks.assign(ids.size(), {});
  const FeatureMap<T>* x = &input;
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const auto& blk = ids[b];
    EncoderBlockTrace<T> local;
    auto& t = trace ? trace->blocks[b] : local;
    t.pooled = nn::avg_pool(*x, blk.down);
    t.conv1 = nn::conv2d(t.pooled, params_.data(blk.conv1.weight), params_.data(blk.conv1.bias), blk.conv1.cout, 3);
    t.act1 = nn::channel_norm(t.conv1, params_.data(blk.norm1.scale), params_.data(blk.norm1.shift),
                              params_.data(blk.norm1.mean), params_.data(blk.norm1.var));
    nn::relu_inplace(t.act1);
    t.conv2 = nn::conv2d(t.act1, params_.data(blk.conv2.weight), params_.data(blk.conv2.bias), blk.conv2.cout, 3);
    t.act2 = nn::channel_norm(t.conv2, params_.data(blk.norm2.scale), params_.data(blk.norm2.shift),
                              params_.data(blk.norm2.mean), params_.data(blk.norm2.var));
    nn::relu_inplace(t.act2);
    out.levels.push_back(t.act2);
    x = &out.levels.back();
  }
  return out;
}

template <class T>
nn::CbamShape Model<T>::cbam_shape() const {
  return {config_.decoder_width, config_.decoder_width / config_.cbam_reduction, config_.spatial_kernel};
}

template <class T>
nn::CbamWeights<T> Model<T>::cbam_weights(const PsiIds& p) const {
  return {params_.data(p.fc1_w), params_.data(p.fc1_b), params_.data(p.fc2_w),
          params_.data(p.fc2_b), params_.data(p.spatial.weight), params_.data(p.spatial.bias)};
}

template <class T>
nn::CbamGrads<T> Model<T>::cbam_grads(const PsiIds& p, std::vector<T>& grad) const {
  auto at = [&](std::size_t id) { return grad.data() + params_.entry(id).offset; };
  return {at(p.fc1_w), at(p.fc1_b), at(p.fc2_w), at(p.fc2_b), at(p.spatial.weight), at(p.spatial.bias)};
}

template <class T>
FeatureMap<T> Model<T>::decode(const FeaturePyramid<T>& fused, int out_h, int out_w, DecoderTrace<T>* trace) const {
  const int K = config_.encoder.blocks();
  if (fused.depth() != K) throw UsageError("decode: pyramid depth does not match the model");
  for (int k = 0; k < K; ++k) {
    const auto& lvl = fused.levels[k];
    if (lvl.c != config_.encoder.channels[k])
      throw UsageError("decode: level " + std::to_string(k + 1) + " has " + std::to_string(lvl.c) +
                       " channels, model expects " + std::to_string(config_.encoder.channels[k]));
    if (k > 0 && (lvl.h * 2 != fused.levels[k - 1].h || lvl.w * 2 != fused.levels[k - 1].w))
      throw UsageError("decode: pyramid violates the 2x scale contract at level " + std::to_string(k + 1));
  }
  if (trace) trace->blocks.assign(K, {});
  FeatureMap<T> d;
  for (int k = 1; k <= K; ++k) {
    const auto& p = psi_[k - 1];
    DecoderBlockTrace<T> local;
    auto& t = trace ? trace->blocks[k - 1] : local;
    t.input = k == 1 ? fused.levels[K - 1] : nn::concat_channels(d, fused.levels[K - k]);
    t.blend = nn::conv2d(t.input, params_.data(p.blend.weight), params_.data(p.blend.bias), p.blend.cout, 3);
    nn::relu_inplace(t.blend);
    t.attended = nn::cbam(t.blend, cbam_shape(), cbam_weights(p), trace ? &t.attention : nullptr);
    d = nn::resize_bilinear(t.attended, t.attended.h * 2, t.attended.w * 2);
  }
  FeatureMap<T> head = nn::conv2d(d, params_.data(head_.weight), params_.data(head_.bias), 2, 1);
  FeatureMap<T> logits = nn::resize_bilinear(head, out_h, out_w);
  if (trace) {
    trace->head_input = std::move(d);
    trace->head = std::move(head);
  }
  return logits;
}

template <class T>
FeatureMap<T> Model<T>::forward(const FeatureMap<T>& image, const FeatureMap<T>& motion, ForwardTrace<T>* trace) const {
  if (image.h != motion.h || image.w != motion.w)
    throw UsageError("forward: image and motion input differ in size");
  FeaturePyramid<T> a = encode(image, Stream::kAppearance, trace ? &trace->appearance : nullptr);
  FeaturePyramid<T> m = encode(motion, Stream::kMotion, trace ? &trace->motion : nullptr);
  FeaturePyramid<T> x = fuse(a, m);
  FeatureMap<T> logits = decode(x, image.h, image.w, trace ? &trace->decoder : nullptr);
  if (trace) trace->fused = std::move(x);
  return logits;
}

template <class T>
void Model<T>::encoder_backward(const EncoderTrace<T>& trace, Stream stream, std::vector<FeatureMap<T>> dlevels,
                                std::vector<T>& grad) const {
  const auto& ids = blocks(stream);
  auto g = [&](std::size_t id) { return grad.data() + params_.entry(id).offset; };
  for (int b = static_cast<int>(ids.size()) - 1; b >= 0; --b) {
    const auto& blk = ids[b];
    const auto& t = trace.blocks[b];
    FeatureMap<T> d = std::move(dlevels[b]);
    nn::relu_backward_inplace(t.act2, d);
    d = nn::channel_norm_backward(t.conv2, d, params_.data(blk.norm2.scale), params_.data(blk.norm2.mean),
                                  params_.data(blk.norm2.var), g(blk.norm2.scale), g(blk.norm2.shift));
    FeatureMap<T> dact1;
    nn::conv2d_backward(t.act1, params_.data(blk.conv2.weight), blk.conv2.cout, 3, d, &dact1, g(blk.conv2.weight),
                        g(blk.conv2.bias));
    nn::relu_backward_inplace(t.act1, dact1);
    d = nn::channel_norm_backward(t.conv1, dact1, params_.data(blk.norm1.scale), params_.data(blk.norm1.mean),
                                  params_.data(blk.norm1.var), g(blk.norm1.scale), g(blk.norm1.shift));
    FeatureMap<T> dpooled;
    nn::conv2d_backward(t.pooled, params_.data(blk.conv1.weight), blk.conv1.cout, 3, d, b > 0 ? &dpooled : nullptr,
                        g(blk.conv1.weight), g(blk.conv1.bias));
    if (b > 0) {
      FeatureMap<T> dprev = nn::avg_pool_backward(dpooled, blk.down);
      kernels::elementwise<T>().axpy(T(1), dprev.data.data(), dlevels[b - 1].data.data(), dprev.size());
    }
  }
}

template <class T>
void Model<T>::backward(const ForwardTrace<T>& trace, const FeatureMap<T>& dlogits, std::vector<T>& grad) const {
  if (grad.size() != params_.total()) throw UsageError("backward: gradient buffer has the wrong size");
  const int K = config_.encoder.blocks();
  auto g = [&](std::size_t id) { return grad.data() + params_.entry(id).offset; };
  const auto& dec = trace.decoder;

  FeatureMap<T> dhead = nn::resize_bilinear_backward(dlogits, dec.head.h, dec.head.w);
  FeatureMap<T> dd;
  nn::conv2d_backward(dec.head_input, params_.data(head_.weight), 2, 1, dhead, &dd, g(head_.weight), g(head_.bias));

  std::vector<FeatureMap<T>> dx(K);
  for (int k = 0; k < K; ++k) {
    const auto& lvl = trace.fused.levels[k];
    dx[k] = FeatureMap<T>(lvl.c, lvl.h, lvl.w);
  }
  for (int k = K; k >= 1; --k) {
    const auto& p = psi_[k - 1];
    const auto& t = dec.blocks[k - 1];
    FeatureMap<T> dattended = nn::resize_bilinear_backward(dd, t.attended.h, t.attended.w);
    FeatureMap<T> dblend = nn::cbam_backward(t.attention, cbam_shape(), cbam_weights(p), dattended, cbam_grads(p, grad));
    nn::relu_backward_inplace(t.blend, dblend);
    FeatureMap<T> dinput;
    nn::conv2d_backward(t.input, params_.data(p.blend.weight), p.blend.cout, 3, dblend, &dinput, g(p.blend.weight),
                        g(p.blend.bias));
    if (k == 1) {
      kernels::elementwise<T>().axpy(T(1), dinput.data.data(), dx[K - 1].data.data(), dinput.size());
    } else {
      FeatureMap<T> dskip;
      nn::split_channels(dinput, config_.decoder_width, dd, dskip);
      kernels::elementwise<T>().axpy(T(1), dskip.data.data(), dx[K - k].data.data(), dskip.size());
    }
  }
  encoder_backward(trace.appearance, Stream::kAppearance, dx, grad);
  encoder_backward(trace.motion, Stream::kMotion, std::move(dx), grad);
}

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  Model<U> out(config_);
  for (std::size_t i = 0; i < params_.total(); ++i) out.params_.values()[i] = static_cast<U>(params_.values()[i]);
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;
template FeaturePyramid<float> fuse(const FeaturePyramid<float>&, const FeaturePyramid<float>&);
template FeaturePyramid<double> fuse(const FeaturePyramid<double>&, const FeaturePyramid<double>&);

}  // namespace mavos
