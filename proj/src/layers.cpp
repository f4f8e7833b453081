#include "mavos/layers.hpp"

#include <algorithm>
#include <cmath>

#include "mavos/error.hpp"
#include "mavos/kernels.hpp"

namespace mavos::nn {
namespace {

template <class T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

// Column buffer [cin*k*k][h*w] for a same-padded stride-1 convolution.
template <class T>
std::vector<T> im2col(const FeatureMap<T>& x, int k) {
  const int pad = k / 2;
  const std::size_t hw = x.plane();
  std::vector<T> col(static_cast<std::size_t>(x.c) * k * k * hw, T(0));
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src = x.channel(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(x.w, x.w - dx);
        for (int y = 0; y < x.h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= x.h || x_lo >= x_hi) continue;
          std::copy(src + static_cast<std::size_t>(sy) * x.w + x_lo + dx,
                    src + static_cast<std::size_t>(sy) * x.w + x_hi + dx,
                    dst + static_cast<std::size_t>(y) * x.w + x_lo);
        }
      }
    }
  }
  return col;
}

template <class T>
void col2im_add(const std::vector<T>& col, int k, FeatureMap<T>& dx) {
  const int pad = k / 2;
  const std::size_t hw = dx.plane();
  for (int ci = 0; ci < dx.c; ++ci) {
    T* dst = dx.channel(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int ddx = kx - pad;
        const int x_lo = std::max(0, -ddx);
        const int x_hi = std::min(dx.w, dx.w - ddx);
        for (int y = 0; y < dx.h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= dx.h) continue;
          T* d = dst + static_cast<std::size_t>(sy) * dx.w + ddx;
          const T* s = src + static_cast<std::size_t>(y) * dx.w;
          for (int xx = x_lo; xx < x_hi; ++xx) d[xx] += s[xx];
        }
      }
    }
  }
}

struct LinearTaps {
  std::vector<int> i0, i1;
  std::vector<double> frac;
};

LinearTaps linear_taps(int in, int out) {
  LinearTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = std::min(static_cast<int>(src), in - 1);
    t.i0[o] = i0;
    t.i1[o] = i0 < in - 1 ? i0 + 1 : i0;
    t.frac[o] = src - i0;
  }
  return t;
}

}  // namespace

template <class T>
FeatureMap<T> conv2d(const FeatureMap<T>& x, const T* weight, const T* bias, int cout, int k) {
  if (k % 2 == 0) throw UsageError("conv2d expects an odd kernel size");
  const int kk = x.c * k * k;
  const int hw = static_cast<int>(x.plane());
  FeatureMap<T> y(cout, x.h, x.w);
  const auto& gemm = kernels::gemm<T>();
  if (k == 1) {
    gemm.nn(cout, hw, kk, weight, kk, x.data.data(), hw, y.data.data(), hw, false);
  } else {
    const auto col = im2col(x, k);
    gemm.nn(cout, hw, kk, weight, kk, col.data(), hw, y.data.data(), hw, false);
  }
  if (bias) {
    for (int co = 0; co < cout; ++co) {
      T* row = y.channel(co);
      const T b = bias[co];
      for (int i = 0; i < hw; ++i) row[i] += b;
    }
  }
  return y;
}

template <class T>
void conv2d_backward(const FeatureMap<T>& x, const T* weight, int cout, int k, const FeatureMap<T>& dy,
                     FeatureMap<T>* dx, T* dweight, T* dbias) {
  const int kk = x.c * k * k;
  const int hw = static_cast<int>(x.plane());
  const auto& gemm = kernels::gemm<T>();
  if (dbias) {
    for (int co = 0; co < cout; ++co) {
      const T* row = dy.channel(co);
      T acc = 0;
      for (int i = 0; i < hw; ++i) acc += row[i];
      dbias[co] += acc;
    }
  }
  if (k == 1) {
    if (dweight) gemm.nt(cout, kk, hw, dy.data.data(), hw, x.data.data(), hw, dweight, kk, true);
    if (dx) {
      *dx = FeatureMap<T>(x.c, x.h, x.w);
      gemm.tn(kk, hw, cout, weight, kk, dy.data.data(), hw, dx->data.data(), hw, false);
    }
    return;
  }
  if (dweight) {
    const auto col = im2col(x, k);
    gemm.nt(cout, kk, hw, dy.data.data(), hw, col.data(), hw, dweight, kk, true);
  }
  if (dx) {
    std::vector<T> dcol(static_cast<std::size_t>(kk) * hw);
    gemm.tn(kk, hw, cout, weight, kk, dy.data.data(), hw, dcol.data(), hw, false);
    *dx = FeatureMap<T>(x.c, x.h, x.w);
    col2im_add(dcol, k, *dx);
  }
}

template <class T>
FeatureMap<T> avg_pool(const FeatureMap<T>& x, int factor) {
  if (x.h % factor != 0 || x.w % factor != 0) throw UsageError("avg_pool: size not divisible by factor");
  FeatureMap<T> y(x.c, x.h / factor, x.w / factor);
  const T inv = T(1) / static_cast<T>(factor * factor);
  for (int c = 0; c < x.c; ++c)
    for (int oy = 0; oy < y.h; ++oy)
      for (int ox = 0; ox < y.w; ++ox) {
        T acc = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) acc += x.at(c, oy * factor + dy, ox * factor + dx);
        y.at(c, oy, ox) = acc * inv;
      }
  return y;
}

template <class T>
FeatureMap<T> avg_pool_backward(const FeatureMap<T>& dy, int factor) {
  FeatureMap<T> dx(dy.c, dy.h * factor, dy.w * factor);
  const T inv = T(1) / static_cast<T>(factor * factor);
  for (int c = 0; c < dx.c; ++c)
    for (int y = 0; y < dx.h; ++y)
      for (int x = 0; x < dx.w; ++x) dx.at(c, y, x) = dy.at(c, y / factor, x / factor) * inv;
  return dx;
}

template <class T>
FeatureMap<T> resize_bilinear(const FeatureMap<T>& x, int out_h, int out_w) {
  if (x.h == out_h && x.w == out_w) return x;
  const auto ty = linear_taps(x.h, out_h);
  const auto tx = linear_taps(x.w, out_w);
  FeatureMap<T> y(x.c, out_h, out_w);
  for (int c = 0; c < x.c; ++c)
    for (int oy = 0; oy < out_h; ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      for (int ox = 0; ox < out_w; ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const T top = (T(1) - fx) * x.at(c, ty.i0[oy], tx.i0[ox]) + fx * x.at(c, ty.i0[oy], tx.i1[ox]);
        const T bot = (T(1) - fx) * x.at(c, ty.i1[oy], tx.i0[ox]) + fx * x.at(c, ty.i1[oy], tx.i1[ox]);
        y.at(c, oy, ox) = (T(1) - fy) * top + fy * bot;
      }
    }
  return y;
}

template <class T>
FeatureMap<T> resize_bilinear_backward(const FeatureMap<T>& dy, int in_h, int in_w) {
  if (dy.h == in_h && dy.w == in_w) return dy;
  const auto ty = linear_taps(in_h, dy.h);
  const auto tx = linear_taps(in_w, dy.w);
  FeatureMap<T> dx(dy.c, in_h, in_w);
  for (int c = 0; c < dy.c; ++c)
    for (int oy = 0; oy < dy.h; ++oy) {
      const T fy = static_cast<T>(ty.frac[oy]);
      for (int ox = 0; ox < dy.w; ++ox) {
        const T fx = static_cast<T>(tx.frac[ox]);
        const T g = dy.at(c, oy, ox);
        dx.at(c, ty.i0[oy], tx.i0[ox]) += (T(1) - fy) * (T(1) - fx) * g;
        dx.at(c, ty.i0[oy], tx.i1[ox]) += (T(1) - fy) * fx * g;
        dx.at(c, ty.i1[oy], tx.i0[ox]) += fy * (T(1) - fx) * g;
        dx.at(c, ty.i1[oy], tx.i1[ox]) += fy * fx * g;
      }
    }
  return dx;
}

template <class T>
void relu_inplace(FeatureMap<T>& x) {
  for (T& v : x.data) v = v > T(0) ? v : T(0);
}

template <class T>
void relu_backward_inplace(const FeatureMap<T>& out, FeatureMap<T>& dy) {
  for (std::size_t i = 0; i < dy.data.size(); ++i)
    if (!(out.data[i] > T(0))) dy.data[i] = T(0);
}

template <class T>
FeatureMap<T> channel_norm(const FeatureMap<T>& x, const T* scale, const T* shift, const T* mean,
                           const T* var) {
  FeatureMap<T> y(x.c, x.h, x.w);
  const std::size_t hw = x.plane();
  for (int c = 0; c < x.c; ++c) {
    const T inv = T(1) / std::sqrt(var[c] + static_cast<T>(kNormEpsilon));
    const T a = scale[c] * inv;
    const T b = shift[c] - mean[c] * a;
    const T* src = x.channel(c);
    T* dst = y.channel(c);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = a * src[i] + b;
  }
  return y;
}

template <class T>
FeatureMap<T> channel_norm_backward(const FeatureMap<T>& x, const FeatureMap<T>& dy, const T* scale,
                                    const T* mean, const T* var, T* dscale, T* dshift) {
  FeatureMap<T> dx(x.c, x.h, x.w);
  const std::size_t hw = x.plane();
  for (int c = 0; c < x.c; ++c) {
    const T inv = T(1) / std::sqrt(var[c] + static_cast<T>(kNormEpsilon));
    const T a = scale[c] * inv;
    const T* g = dy.channel(c);
    const T* src = x.channel(c);
    T* d = dx.channel(c);
    T ds = 0, db = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      d[i] = a * g[i];
      ds += g[i] * (src[i] - mean[c]) * inv;
      db += g[i];
    }
    if (dscale) dscale[c] += ds;
    if (dshift) dshift[c] += db;
  }
  return dx;
}

template <class T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  if (a.h != b.h || a.w != b.w) throw UsageError("concat_channels: spatial size mismatch");
  FeatureMap<T> out(a.c + b.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

template <class T>
void split_channels(const FeatureMap<T>& d, int first_channels, FeatureMap<T>& da, FeatureMap<T>& db) {
  da = FeatureMap<T>(first_channels, d.h, d.w);
  db = FeatureMap<T>(d.c - first_channels, d.h, d.w);
  std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(da.size()), da.data.begin());
  std::copy(d.data.begin() + static_cast<std::ptrdiff_t>(da.size()), d.data.end(), db.data.begin());
}

template <class T>
FeatureMap<T> cbam(const FeatureMap<T>& x, const CbamShape& shape, const CbamWeights<T>& w,
                   CbamCache<T>* cache) {
  const int C = x.c;
  const int H = shape.hidden;
  const std::size_t hw = x.plane();
  CbamCache<T> local;
  CbamCache<T>& k = cache ? *cache : local;
  k.x = x;
  k.avg.assign(C, T(0));
  k.max.assign(C, T(0));
  k.max_index.assign(C, 0);
  for (int c = 0; c < C; ++c) {
    const T* src = x.channel(c);
    T acc = 0;
    T best = src[0];
    std::size_t arg = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      acc += src[i];
      if (src[i] > best) {
        best = src[i];
        arg = i;
      }
    }
    k.avg[c] = acc / static_cast<T>(hw);
    k.max[c] = best;
    k.max_index[c] = arg;
  }
  auto mlp = [&](const std::vector<T>& d, std::vector<T>& hidden, std::vector<T>& out) {
    hidden.assign(H, T(0));
    for (int j = 0; j < H; ++j) {
      T acc = w.fc1_b[j];
      for (int c = 0; c < C; ++c) acc += w.fc1_w[j * C + c] * d[c];
      hidden[j] = acc > T(0) ? acc : T(0);
    }
    for (int c = 0; c < C; ++c) {
      T acc = w.fc2_b[c];
      for (int j = 0; j < H; ++j) acc += w.fc2_w[c * H + j] * hidden[j];
      out[c] += acc;
    }
  };
  std::vector<T> logits(C, T(0));
  mlp(k.avg, k.hidden_avg, logits);
  mlp(k.max, k.hidden_max, logits);
  k.channel_gate.resize(C);
  for (int c = 0; c < C; ++c) k.channel_gate[c] = sigmoid(logits[c]);

  k.gated = FeatureMap<T>(C, x.h, x.w);
  for (int c = 0; c < C; ++c) {
    const T g = k.channel_gate[c];
    const T* src = x.channel(c);
    T* dst = k.gated.channel(c);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * g;
  }

  k.pooled = FeatureMap<T>(2, x.h, x.w);
  k.pooled_argmax.assign(hw, 0);
  for (std::size_t i = 0; i < hw; ++i) {
    T acc = 0;
    T best = k.gated.data[i];
    int arg = 0;
    for (int c = 0; c < C; ++c) {
      const T v = k.gated.data[c * hw + i];
      acc += v;
      if (v > best) {
        best = v;
        arg = c;
      }
    }
    k.pooled.data[i] = acc / static_cast<T>(C);
    k.pooled.data[hw + i] = best;
    k.pooled_argmax[i] = arg;
  }
  const FeatureMap<T> z = conv2d(k.pooled, w.sp_w, w.sp_b, 1, shape.spatial_kernel);
  k.spatial_gate.resize(hw);
  for (std::size_t i = 0; i < hw; ++i) k.spatial_gate[i] = sigmoid(z.data[i]);

  FeatureMap<T> y(C, x.h, x.w);
  for (int c = 0; c < C; ++c) {
    const T* src = k.gated.channel(c);
    T* dst = y.channel(c);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * k.spatial_gate[i];
  }
  return y;
}

template <class T>
FeatureMap<T> cbam_backward(const CbamCache<T>& k, const CbamShape& shape, const CbamWeights<T>& w,
                            const FeatureMap<T>& dy, const CbamGrads<T>& g) {
  const int C = k.x.c;
  const int H = shape.hidden;
  const std::size_t hw = k.x.plane();

  FeatureMap<T> dgated(C, k.x.h, k.x.w);
  FeatureMap<T> dz(1, k.x.h, k.x.w);
  for (std::size_t i = 0; i < hw; ++i) {
    const T s = k.spatial_gate[i];
    T acc = 0;
    for (int c = 0; c < C; ++c) {
      const std::size_t idx = c * hw + i;
      dgated.data[idx] = dy.data[idx] * s;
      acc += dy.data[idx] * k.gated.data[idx];
    }
    dz.data[i] = acc * s * (T(1) - s);
  }
  FeatureMap<T> dpooled;
  conv2d_backward(k.pooled, w.sp_w, 1, shape.spatial_kernel, dz, &dpooled, g.sp_w, g.sp_b);
  const T inv_c = T(1) / static_cast<T>(C);
  for (std::size_t i = 0; i < hw; ++i) {
    const T dmean = dpooled.data[i] * inv_c;
    for (int c = 0; c < C; ++c) dgated.data[c * hw + i] += dmean;
    dgated.data[k.pooled_argmax[i] * hw + i] += dpooled.data[hw + i];
  }

  FeatureMap<T> dx(C, k.x.h, k.x.w);
  std::vector<T> dlogit(C);
  for (int c = 0; c < C; ++c) {
    const T gate = k.channel_gate[c];
    const T* dg = dgated.channel(c);
    const T* src = k.x.channel(c);
    T* d = dx.channel(c);
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      d[i] = dg[i] * gate;
      acc += dg[i] * src[i];
    }
    dlogit[c] = acc * gate * (T(1) - gate);
  }

  auto mlp_back = [&](const std::vector<T>& d, const std::vector<T>& hidden) {
    std::vector<T> dh(H, T(0));
    for (int c = 0; c < C; ++c) {
      g.fc2_b[c] += dlogit[c];
      for (int j = 0; j < H; ++j) {
        g.fc2_w[c * H + j] += dlogit[c] * hidden[j];
        dh[j] += w.fc2_w[c * H + j] * dlogit[c];
      }
    }
    std::vector<T> dd(C, T(0));
    for (int j = 0; j < H; ++j) {
      if (!(hidden[j] > T(0))) continue;
      g.fc1_b[j] += dh[j];
      for (int c = 0; c < C; ++c) {
        g.fc1_w[j * C + c] += dh[j] * d[c];
        dd[c] += w.fc1_w[j * C + c] * dh[j];
      }
    }
    return dd;
  };
  const auto davg = mlp_back(k.avg, k.hidden_avg);
  const auto dmax = mlp_back(k.max, k.hidden_max);
  const T inv_hw = T(1) / static_cast<T>(hw);
  for (int c = 0; c < C; ++c) {
    T* d = dx.channel(c);
    const T da = davg[c] * inv_hw;
    for (std::size_t i = 0; i < hw; ++i) d[i] += da;
    d[k.max_index[c]] += dmax[c];
  }
  return dx;
}

#define MAVOS_INSTANTIATE_LAYERS(T)                                                                 \
  template FeatureMap<T> conv2d(const FeatureMap<T>&, const T*, const T*, int, int);                \
  template void conv2d_backward(const FeatureMap<T>&, const T*, int, int, const FeatureMap<T>&,     \
                                FeatureMap<T>*, T*, T*);                                            \
  template FeatureMap<T> avg_pool(const FeatureMap<T>&, int);                                       \
  template FeatureMap<T> avg_pool_backward(const FeatureMap<T>&, int);                              \
  template FeatureMap<T> resize_bilinear(const FeatureMap<T>&, int, int);                           \
  template FeatureMap<T> resize_bilinear_backward(const FeatureMap<T>&, int, int);                  \
  template void relu_inplace(FeatureMap<T>&);                                                       \
  template void relu_backward_inplace(const FeatureMap<T>&, FeatureMap<T>&);                        \
  template FeatureMap<T> channel_norm(const FeatureMap<T>&, const T*, const T*, const T*, const T*); \
  template FeatureMap<T> channel_norm_backward(const FeatureMap<T>&, const FeatureMap<T>&, const T*, \
                                               const T*, const T*, T*, T*);                         \
  template FeatureMap<T> concat_channels(const FeatureMap<T>&, const FeatureMap<T>&);               \
  template void split_channels(const FeatureMap<T>&, int, FeatureMap<T>&, FeatureMap<T>&);          \
  template FeatureMap<T> cbam(const FeatureMap<T>&, const CbamShape&, const CbamWeights<T>&,        \
                              CbamCache<T>*);                                                       \
  template FeatureMap<T> cbam_backward(const CbamCache<T>&, const CbamShape&, const CbamWeights<T>&, \
                                       const FeatureMap<T>&, const CbamGrads<T>&);

MAVOS_INSTANTIATE_LAYERS(float)
MAVOS_INSTANTIATE_LAYERS(double)

#undef MAVOS_INSTANTIATE_LAYERS

}  // namespace mavos::nn
