#pragma once

// Building blocks of the segmentation network with hand-written backward
// passes. Gradients of parameters are accumulated (+=) into caller buffers;
// input gradients are returned or written fresh.

#include <cstddef>
#include <vector>

#include "mavos/tensor.hpp"

namespace mavos::nn {

// Stride-1 convolution with a square k x k kernel and "same" zero padding
// (k odd). weight is [cout][cin][k][k], bias is [cout].
template <class T>
FeatureMap<T> conv2d(const FeatureMap<T>& x, const T* weight, const T* bias, int cout, int k);

// dx may be null when the input gradient is not needed.
template <class T>
void conv2d_backward(const FeatureMap<T>& x, const T* weight, int cout, int k, const FeatureMap<T>& dy,
                     FeatureMap<T>* dx, T* dweight, T* dbias);

template <class T>
FeatureMap<T> avg_pool(const FeatureMap<T>& x, int factor);
template <class T>
FeatureMap<T> avg_pool_backward(const FeatureMap<T>& dy, int factor);

// Bilinear resampling with half-pixel centres (align_corners = false).
template <class T>
FeatureMap<T> resize_bilinear(const FeatureMap<T>& x, int out_h, int out_w);
template <class T>
FeatureMap<T> resize_bilinear_backward(const FeatureMap<T>& dy, int in_h, int in_w);

template <class T>
void relu_inplace(FeatureMap<T>& x);
// Zeroes dy where the forward output was not positive.
template <class T>
void relu_backward_inplace(const FeatureMap<T>& out, FeatureMap<T>& dy);

inline constexpr double kNormEpsilon = 1e-5;

// Per-channel normalisation with stored statistics:
// y = scale * (x - mean) / sqrt(var + eps) + shift.
template <class T>
FeatureMap<T> channel_norm(const FeatureMap<T>& x, const T* scale, const T* shift, const T* mean,
                           const T* var);
template <class T>
FeatureMap<T> channel_norm_backward(const FeatureMap<T>& x, const FeatureMap<T>& dy, const T* scale,
                                    const T* mean, const T* var, T* dscale, T* dshift);

template <class T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b);
template <class T>
void split_channels(const FeatureMap<T>& d, int first_channels, FeatureMap<T>& da, FeatureMap<T>& db);

// Channel-then-spatial attention gate.
struct CbamShape {
  int channels;
  int hidden;
  int spatial_kernel;
};

template <class T>
struct CbamWeights {
  const T* fc1_w;  // [hidden][channels]
  const T* fc1_b;  // [hidden]
  const T* fc2_w;  // [channels][hidden]
  const T* fc2_b;  // [channels]
  const T* sp_w;   // [1][2][k][k]
  const T* sp_b;   // [1]
};

template <class T>
struct CbamGrads {
  T* fc1_w;
  T* fc1_b;
  T* fc2_w;
  T* fc2_b;
  T* sp_w;
  T* sp_b;
};

template <class T>
struct CbamCache {
  FeatureMap<T> x;
  std::vector<T> avg, max;
  std::vector<std::size_t> max_index;
  std::vector<T> hidden_avg, hidden_max;  // post-ReLU
  std::vector<T> channel_gate;            // sigmoid output
  FeatureMap<T> gated;                    // x * channel_gate
  FeatureMap<T> pooled;                   // [mean_c, max_c]
  std::vector<int> pooled_argmax;
  std::vector<T> spatial_gate;            // sigmoid output, H*W
};

template <class T>
FeatureMap<T> cbam(const FeatureMap<T>& x, const CbamShape& shape, const CbamWeights<T>& w,
                   CbamCache<T>* cache);
template <class T>
FeatureMap<T> cbam_backward(const CbamCache<T>& cache, const CbamShape& shape, const CbamWeights<T>& w,
                            const FeatureMap<T>& dy, const CbamGrads<T>& g);

}  // namespace mavos::nn
