#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "mavos/layers.hpp"
#include "mavos/tensor.hpp"

namespace mavos {

struct EncoderConfig {
  std::vector<int> channels{16, 32, 64, 128};

  int blocks() const { return static_cast<int>(channels.size()); }
  // Input sides must be multiples of this (2^(K+1)).
  int size_multiple() const { return 1 << (blocks() + 1); }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct NetworkConfig {
  EncoderConfig encoder;
  int decoder_width = 32;
  int cbam_reduction = 4;
  int spatial_kernel = 7;
  // Square processing resolution used for training and inference.
  int resolution = 64;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

enum class Stream { kAppearance, kMotion };

enum class ParamRole { kWeight, kBias, kNormScale, kNormShift, kNormMean, kNormVar };

struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  ParamRole role;
  std::size_t offset;
  std::size_t size;
};

// All parameters of a model in one flat buffer, addressed by canonical name.
template <class T>
class ParamStore {
 public:
  std::size_t add(std::string name, std::vector<int> shape, ParamRole role);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  T* data(std::size_t i) { return values_.data() + entries_[i].offset; }
  const T* data(std::size_t i) const { return values_.data() + entries_[i].offset; }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }
  std::size_t total() const { return values_.size(); }

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::vector<T> values_;
};

template <class T>
struct FeaturePyramid {
  std::vector<FeatureMap<T>> levels;  // levels[k-1] holds block k
  int depth() const { return static_cast<int>(levels.size()); }
};

// X_k = A_k + M_k for every level. Throws UsageError on shape mismatch.
template <class T>
FeaturePyramid<T> fuse(const FeaturePyramid<T>& appearance, const FeaturePyramid<T>& motion);

// Intermediate activations of one encoder block.
template <class T>
struct EncoderBlockTrace {
  FeatureMap<T> pooled;
  FeatureMap<T> conv1, act1;  // conv1 is the normalisation input
  FeatureMap<T> conv2, act2;
};

template <class T>
struct EncoderTrace {
  std::vector<EncoderBlockTrace<T>> blocks;
};

template <class T>
struct DecoderBlockTrace {
  FeatureMap<T> input;  // D_{k-1} (+) X_{K-k+1}, or X_K for the first block
  FeatureMap<T> blend;  // post-ReLU
  nn::CbamCache<T> attention;
  FeatureMap<T> attended;
};

template <class T>
struct DecoderTrace {
  std::vector<DecoderBlockTrace<T>> blocks;
  FeatureMap<T> head_input;  // D_K
  FeatureMap<T> head;        // 2 channels at half resolution
};

template <class T>
struct ForwardTrace {
  EncoderTrace<T> appearance, motion;
  FeaturePyramid<T> fused;
  DecoderTrace<T> decoder;
};

// Two architecture-identical, parameter-independent encoders whose pyramids
// are summed level-wise and decoded by attention-refined upsampling blocks.
template <class T>
class Model {
 public:
  explicit Model(NetworkConfig config);

  // Fan-in scaled uniform weights, zero biases, identity normalisation.
  void initialize(std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Throws UsageError when the input sides are not multiples of 2^(K+1).
  void check_input(int height, int width) const;

  FeaturePyramid<T> encode(const FeatureMap<T>& input, Stream stream, EncoderTrace<T>* trace = nullptr) const;
  FeatureMap<T> decode(const FeaturePyramid<T>& fused, int out_h, int out_w,
                       DecoderTrace<T>* trace = nullptr) const;
  FeatureMap<T> forward(const FeatureMap<T>& image, const FeatureMap<T>& motion,
                        ForwardTrace<T>* trace = nullptr) const;

  // Accumulates d(loss)/d(params) into grad (size params().total()) given
  // d(loss)/d(logits).
  void backward(const ForwardTrace<T>& trace, const FeatureMap<T>& dlogits, std::vector<T>& grad) const;

  template <class U>
  Model<U> cast() const;

 private:
  struct ConvIds {
    std::size_t weight, bias;
    int cin, cout, k;
  };
  struct NormIds {
    std::size_t scale, shift, mean, var;
  };
  struct BlockIds {
    int down;
    ConvIds conv1, conv2;
    NormIds norm1, norm2;
  };
  struct PsiIds {
    ConvIds blend;
    std::size_t fc1_w, fc1_b, fc2_w, fc2_b;
    ConvIds spatial;
  };

  ConvIds add_conv(const std::string& prefix, int cin, int cout, int k);
  NormIds add_norm(const std::string& prefix, int c);
  nn::CbamWeights<T> cbam_weights(const PsiIds& p) const;
  nn::CbamGrads<T> cbam_grads(const PsiIds& p, std::vector<T>& grad) const;
  nn::CbamShape cbam_shape() const;
  const std::vector<BlockIds>& blocks(Stream s) const { return s == Stream::kAppearance ? app_ : mot_; }
  void encoder_backward(const EncoderTrace<T>& trace, Stream stream, std::vector<FeatureMap<T>> dlevels,
                        std::vector<T>& grad) const;

  NetworkConfig config_;
  ParamStore<T> params_;
  std::vector<BlockIds> app_, mot_;
  std::vector<PsiIds> psi_;
  ConvIds head_{};

  template <class U>
  friend class Model;
};

// Flat archive: magic "MAVC", version, network config header, then named
// little-endian float32 tensors with shapes.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace mavos
