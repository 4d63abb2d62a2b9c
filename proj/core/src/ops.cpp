#include "tvlab/ops.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#ifdef __AVX512F__
#include <immintrin.h>
extern "C" __m512 _ZGVeN16v_tanhf(__m512);  // glibc libmvec
#endif

namespace tvlab::ops {

namespace {

constexpr float kGeluCoef = 0.044715f;
const float kSqrt2OverPi = std::sqrt(2.0f / 3.14159265358979323846f);

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

Shape with_last(const Shape& s, int n) {
  Shape out = s;
  out.back() = n;
  return out;
}

// Bulk tanh. The vector path evaluates 16 lanes at a time; forward and
// backward both route through here with the same length, so they see
// identical values lane for lane.
void tanh_block(const float* in, float* out, size_t n) {
  size_t i = 0;
#ifdef __AVX512F__
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(out + i, _ZGVeN16v_tanhf(_mm512_loadu_ps(in + i)));
#endif
  for (; i < n; ++i) out[i] = std::tanh(in[i]);
}

}  // namespace

namespace {

// 4x32 register-blocked panel: the accumulator tile lives in registers for
// the whole reduction. Each output element still sums its k terms in plain
// ascending order with a single accumulator, so the result is bit-identical
// to the naive triple loop.
inline void gemm_nn_panel(const float* a, const float* b, float* c, int k, int n) {
  float acc[4][32];
  for (int r = 0; r < 4; ++r)
    for (int j = 0; j < 32; ++j) acc[r][j] = 0.0f;
  for (int p = 0; p < k; ++p) {
    const float* brow = b + static_cast<size_t>(p) * n;
    for (int r = 0; r < 4; ++r) {
      const float v = a[static_cast<size_t>(r) * k + p];
      for (int j = 0; j < 32; ++j) acc[r][j] += v * brow[j];
    }
  }
  for (int r = 0; r < 4; ++r) {
    float* crow = c + static_cast<size_t>(r) * n;
    for (int j = 0; j < 32; ++j) crow[j] = acc[r][j];
  }
}

}  // namespace

void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const float* atile = a + static_cast<size_t>(i) * k;
    float* ctile = c + static_cast<size_t>(i) * n;
    int j0 = 0;
    for (; j0 + 32 <= n; j0 += 32) gemm_nn_panel(atile, b + j0, ctile + j0, k, n);
    if (j0 < n) {
      // ragged right edge, same accumulation order
      for (int r = 0; r < 4; ++r) {
        const float* arow = atile + static_cast<size_t>(r) * k;
        float* crow = ctile + static_cast<size_t>(r) * n;
        for (int j = j0; j < n; ++j) crow[j] = 0.0f;
        for (int p = 0; p < k; ++p) {
          const float v = arow[p];
          const float* brow = b + static_cast<size_t>(p) * n;
          for (int j = j0; j < n; ++j) crow[j] += v * brow[j];
        }
      }
    }
  }
  for (; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) crow[j] = 0.0f;
    for (int p = 0; p < k; ++p) {
      const float v = arow[p];
      const float* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

namespace {

#ifdef __AVX512F__

// Horizontal sum of the 16 stripes with a fixed pairwise tree: high half
// into low half twice, then lanes 2/3 into 0/1, then 0+1.
inline float nt_reduce(__m512 v, float tail) {
  __m256 h8 = _mm256_add_ps(_mm512_castps512_ps256(v), _mm512_extractf32x8_ps(v, 1));
  __m128 h4 = _mm_add_ps(_mm256_castps256_ps128(h8), _mm256_extractf128_ps(h8, 1));
  __m128 h2 = _mm_add_ps(h4, _mm_movehl_ps(h4, h4));
  const float e0 = _mm_cvtss_f32(h2);
  const float e1 = _mm_cvtss_f32(_mm_shuffle_ps(h2, h2, 1));
  return (e0 + e1) + tail;
}

// Striped dot product; the accumulation order depends only on k, never on
// the data, and matches the tiled kernel below stripe for stripe so the
// same logical dot product is bit-identical on either path.
inline float nt_dot(const float* arow, const float* brow, int k) {
  __m512 s = _mm512_setzero_ps();
  int p = 0;
  for (; p + 16 <= k; p += 16)
    s = _mm512_fmadd_ps(_mm512_loadu_ps(arow + p), _mm512_loadu_ps(brow + p), s);
  float tail = 0.0f;
  for (; p < k; ++p) tail = std::fma(arow[p], brow[p], tail);
  return nt_reduce(s, tail);
}

#else

// 16 striped partial sums per dot product, combined in a fixed order.
inline float nt_dot(const float* arow, const float* brow, int k) {
  float acc[16] = {};
  int p = 0;
  for (; p + 16 <= k; p += 16)
    for (int q = 0; q < 16; ++q) acc[q] += arow[p + q] * brow[p + q];
  float tail = 0.0f;
  for (; p < k; ++p) tail += arow[p] * brow[p];
  for (int q = 8; q < 16; ++q) acc[q - 8] += acc[q];
  for (int q = 4; q < 8; ++q) acc[q - 4] += acc[q];
  acc[0] += acc[2];
  acc[1] += acc[3];
  return (acc[0] + acc[1]) + tail;
}

#endif

}  // namespace

#ifdef __AVX512F__

void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n) {
  // 4x4 output tiles with explicit 16-lane accumulators; stripe order and
  // the reduction tree match nt_dot exactly, so tiling changes nothing
  // bitwise.
  int i0 = 0;
  for (; i0 + 4 <= m; i0 += 4) {
    const float* a0 = a + static_cast<size_t>(i0) * k;
    const float* a1 = a0 + k;
    const float* a2 = a1 + k;
    const float* a3 = a2 + k;
    int j0 = 0;
    for (; j0 + 4 <= n; j0 += 4) {
      const float* b0 = b + static_cast<size_t>(j0) * k;
      const float* b1 = b0 + k;
      const float* b2 = b1 + k;
      const float* b3 = b2 + k;
      __m512 s00 = _mm512_setzero_ps(), s01 = s00, s02 = s00, s03 = s00;
      __m512 s10 = s00, s11 = s00, s12 = s00, s13 = s00;
      __m512 s20 = s00, s21 = s00, s22 = s00, s23 = s00;
      __m512 s30 = s00, s31 = s00, s32 = s00, s33 = s00;
      int p = 0;
      for (; p + 16 <= k; p += 16) {
        const __m512 va0 = _mm512_loadu_ps(a0 + p);
        const __m512 va1 = _mm512_loadu_ps(a1 + p);
        const __m512 va2 = _mm512_loadu_ps(a2 + p);
        const __m512 va3 = _mm512_loadu_ps(a3 + p);
        const __m512 vb0 = _mm512_loadu_ps(b0 + p);
        const __m512 vb1 = _mm512_loadu_ps(b1 + p);
        const __m512 vb2 = _mm512_loadu_ps(b2 + p);
        const __m512 vb3 = _mm512_loadu_ps(b3 + p);
        s00 = _mm512_fmadd_ps(va0, vb0, s00);
        s01 = _mm512_fmadd_ps(va0, vb1, s01);
        s02 = _mm512_fmadd_ps(va0, vb2, s02);
        s03 = _mm512_fmadd_ps(va0, vb3, s03);
        s10 = _mm512_fmadd_ps(va1, vb0, s10);
        s11 = _mm512_fmadd_ps(va1, vb1, s11);
        s12 = _mm512_fmadd_ps(va1, vb2, s12);
        s13 = _mm512_fmadd_ps(va1, vb3, s13);
        s20 = _mm512_fmadd_ps(va2, vb0, s20);
        s21 = _mm512_fmadd_ps(va2, vb1, s21);
        s22 = _mm512_fmadd_ps(va2, vb2, s22);
        s23 = _mm512_fmadd_ps(va2, vb3, s23);
        s30 = _mm512_fmadd_ps(va3, vb0, s30);
        s31 = _mm512_fmadd_ps(va3, vb1, s31);
        s32 = _mm512_fmadd_ps(va3, vb2, s32);
        s33 = _mm512_fmadd_ps(va3, vb3, s33);
      }
      const float* ar[4] = {a0, a1, a2, a3};
      const float* br[4] = {b0, b1, b2, b3};
      float tails[4][4] = {};
      for (int pp = p; pp < k; ++pp)
        for (int r = 0; r < 4; ++r)
          for (int s = 0; s < 4; ++s) tails[r][s] = std::fma(ar[r][pp], br[s][pp], tails[r][s]);
      float* c0 = c + static_cast<size_t>(i0) * n + j0;
      float* c1 = c0 + n;
      float* c2 = c1 + n;
      float* c3 = c2 + n;
      c0[0] = nt_reduce(s00, tails[0][0]);
      c0[1] = nt_reduce(s01, tails[0][1]);
      c0[2] = nt_reduce(s02, tails[0][2]);
      c0[3] = nt_reduce(s03, tails[0][3]);
      c1[0] = nt_reduce(s10, tails[1][0]);
      c1[1] = nt_reduce(s11, tails[1][1]);
      c1[2] = nt_reduce(s12, tails[1][2]);
      c1[3] = nt_reduce(s13, tails[1][3]);
      c2[0] = nt_reduce(s20, tails[2][0]);
      c2[1] = nt_reduce(s21, tails[2][1]);
      c2[2] = nt_reduce(s22, tails[2][2]);
      c2[3] = nt_reduce(s23, tails[2][3]);
      c3[0] = nt_reduce(s30, tails[3][0]);
      c3[1] = nt_reduce(s31, tails[3][1]);
      c3[2] = nt_reduce(s32, tails[3][2]);
      c3[3] = nt_reduce(s33, tails[3][3]);
    }
    for (; j0 < n; ++j0)
      for (int r = 0; r < 4; ++r)
        c[static_cast<size_t>(i0 + r) * n + j0] = nt_dot(
            a + static_cast<size_t>(i0 + r) * k, b + static_cast<size_t>(j0) * k, k);
  }
  for (; i0 < m; ++i0)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i0) * n + j] =
          nt_dot(a + static_cast<size_t>(i0) * k, b + static_cast<size_t>(j) * k, k);
}

#else

void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      c[static_cast<size_t>(i) * n + j] =
          nt_dot(a + static_cast<size_t>(i) * k, b + static_cast<size_t>(j) * k, k);
}

#endif

void gemm_tn_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  // register-blocked like gemm_nn: a 4x32 tile of C accumulates across the
  // whole m reduction before touching memory; per-element term order is the
  // plain ascending-r order either way.
  int p0 = 0;
  for (; p0 + 4 <= k; p0 += 4) {
    int j0 = 0;
    for (; j0 + 32 <= n; j0 += 32) {
      float acc[4][32];
      for (int t = 0; t < 4; ++t)
        for (int j = 0; j < 32; ++j)
          acc[t][j] = c[static_cast<size_t>(p0 + t) * n + j0 + j];
      for (int r = 0; r < m; ++r) {
        const float* ap = a + static_cast<size_t>(r) * k + p0;
        const float* brow = b + static_cast<size_t>(r) * n + j0;
        for (int t = 0; t < 4; ++t) {
          const float v = ap[t];
          for (int j = 0; j < 32; ++j) acc[t][j] += v * brow[j];
        }
      }
      for (int t = 0; t < 4; ++t)
        for (int j = 0; j < 32; ++j)
          c[static_cast<size_t>(p0 + t) * n + j0 + j] = acc[t][j];
    }
    for (; j0 < n; ++j0) {
      for (int t = 0; t < 4; ++t) {
        float s = c[static_cast<size_t>(p0 + t) * n + j0];
        for (int r = 0; r < m; ++r)
          s += a[static_cast<size_t>(r) * k + p0 + t] * b[static_cast<size_t>(r) * n + j0];
        c[static_cast<size_t>(p0 + t) * n + j0] = s;
      }
    }
  }
  for (; p0 < k; ++p0) {
    for (int j = 0; j < n; ++j) {
      float s = c[static_cast<size_t>(p0) * n + j];
      for (int r = 0; r < m; ++r)
        s += a[static_cast<size_t>(r) * k + p0] * b[static_cast<size_t>(r) * n + j];
      c[static_cast<size_t>(p0) * n + j] = s;
    }
  }
}

int argmax(const float* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

Tensor matmul(const Tensor& a, const Tensor& b, GradTape* tape) {
  require(b.ndim() == 2, "matmul: rhs must be 2-D");
  const int k = a.last_dim();
  require(k == b.dim(0), "matmul: inner dimensions do not match");
  const int m = a.rows2d();
  const int n = b.dim(1);
  Tensor out = Tensor::zeros(with_last(a.shape, n));
  gemm_nn(a.data(), b.data(), out.data(), m, k, n);
  check_finite(out, "matmul");
  if (tape && (a.tracked() || b.tracked())) {
    Tensor ac = a, bc = b;
    out.node = tape->record(out.numel(), [ac, bc, m, k, n](GradTape& t, int self) {
      const float* dc = t.grad_buf(self).data();
      if (ac.tracked()) {
        std::vector<float> da(static_cast<size_t>(m) * k);
        gemm_nt(dc, bc.data(), da.data(), m, n, k);
        t.accumulate(ac.node, da.data(), da.size());
      }
      if (bc.tracked()) {
        auto& db = t.grad_buf(bc.node);
        gemm_tn_acc(ac.data(), dc, db.data(), m, k, n);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, GradTape* tape) {
  const bool bias = (b.ndim() == 1 && a.last_dim() == b.dim(0) && a.shape != b.shape);
  require(bias || a.shape == b.shape, "add: shape mismatch");
  Tensor out = Tensor::zeros(a.shape);
  const size_t n = a.numel();
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  if (bias) {
    const size_t d = static_cast<size_t>(b.dim(0));
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i % d];
  } else {
    for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  }
  check_finite(out, "add");
  if (tape && (a.tracked() || b.tracked())) {
    const int an = a.node, bn = b.node;
    const size_t d = bias ? static_cast<size_t>(b.dim(0)) : 0;
    out.node = tape->record(n, [an, bn, n, d, bias](GradTape& t, int self) {
      const auto& g = t.grad_buf(self);
      if (an >= 0) t.accumulate(an, g.data(), n);
      if (bn >= 0) {
        if (bias) {
          auto& gb = t.grad_buf(bn);
          for (size_t i = 0; i < n; ++i) gb[i % d] += g[i];
        } else {
          t.accumulate(bn, g.data(), n);
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, GradTape* tape) {
  require(a.shape == b.shape, "mul: shape mismatch");
  Tensor out = Tensor::zeros(a.shape);
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  check_finite(out, "mul");
  if (tape && (a.tracked() || b.tracked())) {
    Tensor ac = a, bc = b;
    out.node = tape->record(n, [ac, bc, n](GradTape& t, int self) {
      const auto& g = t.grad_buf(self);
      if (ac.tracked()) {
        auto& ga = t.grad_buf(ac.node);
        for (size_t i = 0; i < n; ++i) ga[i] += g[i] * bc.data()[i];
      }
      if (bc.tracked()) {
        auto& gb = t.grad_buf(bc.node);
        for (size_t i = 0; i < n; ++i) gb[i] += g[i] * ac.data()[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float c, GradTape* tape) {
  Tensor out = Tensor::zeros(a.shape);
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  check_finite(out, "scale");
  if (tape && a.tracked()) {
    const int an = a.node;
    out.node = tape->record(n, [an, c, n](GradTape& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& ga = t.grad_buf(an);
      for (size_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor sum(const Tensor& a, GradTape* tape) {
  double acc = 0.0;
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) acc += a.data()[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  check_finite(out, "sum");
  if (tape && a.tracked()) {
    const int an = a.node;
    out.node = tape->record(1, [an, n](GradTape& t, int self) {
      const float g = t.grad_buf(self)[0];
      auto& ga = t.grad_buf(an);
      for (size_t i = 0; i < n; ++i) ga[i] += g;
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, GradTape* tape) {
  const int d = x.last_dim();
  const int rows = x.rows2d();
  Tensor out = Tensor::zeros(x.shape);
  for (int r = 0; r < rows; ++r) {
    const float* in = x.data() + static_cast<size_t>(r) * d;
    float* o = out.data() + static_cast<size_t>(r) * d;
    float mx = in[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    float denom = 0.0f;
    for (int j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    const float inv = 1.0f / denom;
    for (int j = 0; j < d; ++j) o[j] *= inv;
  }
  check_finite(out, "softmax");
  if (tape && x.tracked()) {
    Tensor y = out;
    const int xn = x.node;
    out.node = tape->record(out.numel(), [y, xn, rows, d](GradTape& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& gx = t.grad_buf(xn);
      for (int r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r) * d;
        const float* yr = y.data() + off;
        float dot = 0.0f;
        for (int j = 0; j < d; ++j) dot += yr[j] * g[off + j];
        for (int j = 0; j < d; ++j) gx[off + j] += yr[j] * (g[off + j] - dot);
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x, GradTape* tape) {
  Tensor out = Tensor::zeros(x.shape);
  const size_t n = x.numel();
  std::vector<float> u(n), th(n);
  for (size_t i = 0; i < n; ++i) {
    const float v = x.data()[i];
    u[i] = kSqrt2OverPi * (v + kGeluCoef * v * v * v);
  }
  tanh_block(u.data(), th.data(), n);
  for (size_t i = 0; i < n; ++i) out.data()[i] = 0.5f * x.data()[i] * (1.0f + th[i]);
  check_finite(out, "gelu");
  if (tape && x.tracked()) {
    Tensor xc = x;
    out.node = tape->record(n, [xc, n](GradTape& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& gx = t.grad_buf(xc.node);
      std::vector<float> u(n), th(n);
      for (size_t i = 0; i < n; ++i) {
        const float v = xc.data()[i];
        u[i] = kSqrt2OverPi * (v + kGeluCoef * v * v * v);
      }
      tanh_block(u.data(), th.data(), n);
      for (size_t i = 0; i < n; ++i) {
        const float v = xc.data()[i];
        const float du = kSqrt2OverPi * (1.0f + 3.0f * kGeluCoef * v * v);
        gx[i] += g[i] * (0.5f * (1.0f + th[i]) + 0.5f * v * (1.0f - th[i] * th[i]) * du);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps,
                  GradTape* tape) {
  const int d = x.last_dim();
  require(gain.ndim() == 1 && gain.dim(0) == d, "layer_norm: gain shape mismatch");
  require(bias.ndim() == 1 && bias.dim(0) == d, "layer_norm: bias shape mismatch");
  const int rows = x.rows2d();
  Tensor out = Tensor::zeros(x.shape);
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r) * d;
    const float* in = x.data() + off;
    float mean = 0.0f;
    for (int j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (int j = 0; j < d; ++j) {
      const float c = in[j] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float istd = 1.0f / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = istd;
    for (int j = 0; j < d; ++j) {
      const float h = (in[j] - mean) * istd;
      (*xhat)[off + j] = h;
      out.data()[off + j] = h * gain.data()[j] + bias.data()[j];
    }
  }
  check_finite(out, "layer_norm");
  if (tape && (x.tracked() || gain.tracked() || bias.tracked())) {
    const int xn = x.node, gn = gain.node, bn = bias.node;
    Tensor gc = gain;
    out.node =
        tape->record(out.numel(), [xhat, inv_std, gc, xn, gn, bn, rows, d](GradTape& t, int self) {
          const auto& g = t.grad_buf(self);
          for (int r = 0; r < rows; ++r) {
            const size_t off = static_cast<size_t>(r) * d;
            const float istd = (*inv_std)[static_cast<size_t>(r)];
            if (gn >= 0) {
              auto& gg = t.grad_buf(gn);
              for (int j = 0; j < d; ++j) gg[j] += g[off + j] * (*xhat)[off + j];
            }
            if (bn >= 0) {
              auto& gb = t.grad_buf(bn);
              for (int j = 0; j < d; ++j) gb[j] += g[off + j];
            }
            if (xn >= 0) {
              auto& gx = t.grad_buf(xn);
              float m1 = 0.0f, m2 = 0.0f;
              for (int j = 0; j < d; ++j) {
                const float gy = g[off + j] * gc.data()[j];
                m1 += gy;
                m2 += gy * (*xhat)[off + j];
              }
              m1 /= static_cast<float>(d);
              m2 /= static_cast<float>(d);
              for (int j = 0; j < d; ++j) {
                const float gy = g[off + j] * gc.data()[j];
                gx[off + j] += (gy - m1 - (*xhat)[off + j] * m2) * istd;
              }
            }
          }
        });
  }
  return out;
}

Tensor row_select(const Tensor& table, const std::vector<int>& rows, GradTape* tape) {
  require(table.ndim() == 2, "row_select: table must be 2-D");
  const int d = table.dim(1);
  const int nrows = table.dim(0);
  for (int r : rows)
    if (r < 0 || r >= nrows) throw DimensionError("row_select: row index out of range");
  Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.data() + i * d, table.data() + static_cast<size_t>(rows[i]) * d,
                sizeof(float) * static_cast<size_t>(d));
  check_finite(out, "row_select");
  if (tape && table.tracked()) {
    const int tn = table.node;
    auto idx = std::make_shared<std::vector<int>>(rows);
    out.node = tape->record(out.numel(), [tn, idx, d](GradTape& t, int self) {
      const auto& g = t.grad_buf(self);
      auto& gt = t.grad_buf(tn);
      for (size_t i = 0; i < idx->size(); ++i) {
        float* dst = gt.data() + static_cast<size_t>((*idx)[i]) * d;
        const float* src = g.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     Reduction reduction, GradTape* tape) {
  require(logits.ndim() == 2, "cross_entropy: logits must be [rows, V]");
  const int rows = logits.dim(0);
  const int v = logits.dim(1);
  require(static_cast<int>(targets.size()) == rows, "cross_entropy: target count mismatch");
  for (int t : targets)
    if (t < 0 || t >= v) throw DimensionError("cross_entropy: target id out of range");
  auto probs = std::make_shared<std::vector<float>>(logits.numel());
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const size_t off = static_cast<size_t>(r) * v;
    const float* in = logits.data() + off;
    float mx = in[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < v; ++j) {
      const float e = std::exp(in[j] - mx);
      (*probs)[off + j] = e;
      denom += e;
    }
    const float inv = static_cast<float>(1.0 / denom);
    for (int j = 0; j < v; ++j) (*probs)[off + j] *= inv;
    total += -(static_cast<double>(in[targets[static_cast<size_t>(r)]]) - mx - std::log(denom));
  }
  const float norm = (reduction == Reduction::Mean) ? 1.0f / static_cast<float>(rows) : 1.0f;
  Tensor out = Tensor::scalar(static_cast<float>(total) * norm);
  check_finite(out, "cross_entropy");
  if (tape && logits.tracked()) {
    const int ln = logits.node;
    auto tgt = std::make_shared<std::vector<int>>(targets);
    out.node = tape->record(1, [ln, probs, tgt, rows, v, norm](GradTape& t, int self) {
      const float g = t.grad_buf(self)[0] * norm;
      auto& gl = t.grad_buf(ln);
      for (int r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r) * v;
        for (int j = 0; j < v; ++j) gl[off + j] += g * (*probs)[off + j];
        gl[off + (*tgt)[static_cast<size_t>(r)]] -= g;
      }
    });
  }
  return out;
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int batch,
                        int seq_len, int n_heads, const std::vector<uint8_t>* blocked_keys,
                        GradTape* tape) {
  const int d = q.last_dim();
  require(q.shape == k.shape && q.shape == v.shape, "attention: q/k/v shape mismatch");
  require(d % n_heads == 0, "attention: d_model not divisible by n_heads");
  require(q.rows2d() == batch * seq_len, "attention: rows != batch*seq_len");
  if (blocked_keys)
    require(static_cast<int>(blocked_keys->size()) == batch * seq_len,
            "attention: blocked_keys length mismatch");
  const int hd = d / n_heads;
  const float scl = 1.0f / std::sqrt(static_cast<float>(hd));

  Tensor out = Tensor::zeros(q.shape);
  // probs[b][h] is a [T,T] row-causal matrix; kept for backward.
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<size_t>(batch) * n_heads * seq_len * seq_len, 0.0f);

  auto allowed = [&](int b, int i, int j) {
    if (j > i) return false;
    if (!blocked_keys) return true;
    const size_t base = static_cast<size_t>(b) * seq_len;
    return !(*blocked_keys)[base + j] || (*blocked_keys)[base + i];
  };

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      const size_t hoff = static_cast<size_t>(h) * hd;
      float* pmat = probs->data() +
                    (static_cast<size_t>(b) * n_heads + h) * seq_len * seq_len;
      for (int i = 0; i < seq_len; ++i) {
        const float* qi = q.data() + (static_cast<size_t>(b) * seq_len + i) * d + hoff;
        float* prow = pmat + static_cast<size_t>(i) * seq_len;
        // scores over permitted keys only; loop bounds depend only on i.
        float mx = -1e30f;
        for (int j = 0; j <= i; ++j) {
          if (!allowed(b, i, j)) continue;
          const float* kj = k.data() + (static_cast<size_t>(b) * seq_len + j) * d + hoff;
          float s = 0.0f;
          for (int p = 0; p < hd; ++p) s += qi[p] * kj[p];
          s *= scl;
          prow[j] = s;
          mx = std::max(mx, s);
        }
        float denom = 0.0f;
        for (int j = 0; j <= i; ++j) {
          if (!allowed(b, i, j)) continue;
          prow[j] = std::exp(prow[j] - mx);
          denom += prow[j];
        }
        const float inv = 1.0f / denom;
        float* oi = out.data() + (static_cast<size_t>(b) * seq_len + i) * d + hoff;
        for (int j = 0; j <= i; ++j) {
          if (!allowed(b, i, j)) {
            prow[j] = 0.0f;
            continue;
          }
          prow[j] *= inv;
          const float* vj = v.data() + (static_cast<size_t>(b) * seq_len + j) * d + hoff;
          const float pj = prow[j];
          for (int p = 0; p < hd; ++p) oi[p] += pj * vj[p];
        }
      }
    }
  }
  check_finite(out, "causal_attention");

  if (tape && (q.tracked() || k.tracked() || v.tracked())) {
    Tensor qc = q, kc = k, vc = v;
    out.node = tape->record(
        out.numel(), [qc, kc, vc, probs, batch, seq_len, n_heads, hd, d, scl](GradTape& t,
                                                                              int self) {
          const auto& g = t.grad_buf(self);
          std::vector<float>* gq = qc.tracked() ? &t.grad_buf(qc.node) : nullptr;
          std::vector<float>* gk = kc.tracked() ? &t.grad_buf(kc.node) : nullptr;
          std::vector<float>* gv = vc.tracked() ? &t.grad_buf(vc.node) : nullptr;
          std::vector<float> dp(static_cast<size_t>(seq_len));
          for (int b = 0; b < batch; ++b) {
            for (int h = 0; h < n_heads; ++h) {
              const size_t hoff = static_cast<size_t>(h) * hd;
              const float* pmat = probs->data() +
                                  (static_cast<size_t>(b) * n_heads + h) * seq_len * seq_len;
              for (int i = 0; i < seq_len; ++i) {
                const float* go = g.data() + (static_cast<size_t>(b) * seq_len + i) * d + hoff;
                const float* prow = pmat + static_cast<size_t>(i) * seq_len;
                // dP = dO V^T ; dV += P^T dO
                float pdot = 0.0f;
                for (int j = 0; j <= i; ++j) {
                  const size_t jr = (static_cast<size_t>(b) * seq_len + j) * d + hoff;
                  const float* vj = vc.data() + jr;
                  float acc = 0.0f;
                  for (int p = 0; p < hd; ++p) acc += go[p] * vj[p];
                  dp[static_cast<size_t>(j)] = acc;
                  pdot += acc * prow[j];
                  if (gv) {
                    float* gvj = gv->data() + jr;
                    const float pj = prow[j];
                    for (int p = 0; p < hd; ++p) gvj[p] += pj * go[p];
                  }
                }
                // dS = P * (dP - sum(P*dP)); dQ += dS K * scl; dK += dS^T Q * scl
                const size_t ir = (static_cast<size_t>(b) * seq_len + i) * d + hoff;
                const float* qi = qc.data() + ir;
                for (int j = 0; j <= i; ++j) {
                  const float ds = prow[j] * (dp[static_cast<size_t>(j)] - pdot) * scl;
                  if (ds == 0.0f) continue;
                  const size_t jr = (static_cast<size_t>(b) * seq_len + j) * d + hoff;
                  const float* kj = kc.data() + jr;
                  if (gq) {
                    float* gqi = gq->data() + ir;
                    for (int p = 0; p < hd; ++p) gqi[p] += ds * kj[p];
                  }
                  if (gk) {
                    float* gkj = gk->data() + jr;
                    for (int p = 0; p < hd; ++p) gkj[p] += ds * qi[p];
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

}  // namespace tvlab::ops
