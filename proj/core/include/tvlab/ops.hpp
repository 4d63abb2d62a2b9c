#pragma once

#include <cstdint>
#include <vector>

#include "tvlab/tensor.hpp"

namespace tvlab::ops {

/// Deterministic GEMM kernels. For every output element the accumulation
/// order over the contraction index is fixed and independent of the other
/// matrix dimensions, which makes row i of a*b bit-identical no matter how
/// many rows follow it. All model math (forward and backward) goes through
/// these three.
void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n);   // c = a[m,k] * b[k,n]
void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n);   // c = a[m,k] * b[n,k]^T
void gemm_tn_acc(const float* a, const float* b, float* c, int m, int k, int n);  // c[k,n] += a[m,k]^T * b[m,n]

enum class Reduction { Mean, Sum };

/// a viewed as [rows, k] times b[k, n]. Recorded on tape when either input
/// is tracked.
Tensor matmul(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

/// Same-shape elementwise add, or bias broadcast when b has shape [n] and a
/// is viewed as [rows, n].
Tensor add(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

/// Elementwise product (same shape).
Tensor mul(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

Tensor scale(const Tensor& a, float c, GradTape* tape = nullptr);

/// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& a, GradTape* tape = nullptr);

/// Numerically stabilized softmax over the last axis.
Tensor softmax(const Tensor& x, GradTape* tape = nullptr);

/// Tanh-approximation GELU, elementwise.
Tensor gelu(const Tensor& x, GradTape* tape = nullptr);

/// Per-row normalization over the last axis, then affine by gain/bias [d].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = 1e-5f, GradTape* tape = nullptr);

/// Gathers rows of table; backward scatter-adds. Doubles as the embedding
/// lookup (table = embedding matrix, rows = token ids).
Tensor row_select(const Tensor& table, const std::vector<int>& rows,
                  GradTape* tape = nullptr);

/// Mean (or sum) negative log-softmax probability of targets.
/// logits: [rows, V], targets.size() == rows, each id in [0, V).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     Reduction reduction = Reduction::Mean, GradTape* tape = nullptr);

/// Fused multi-head causal self-attention core: softmax(QK^T/sqrt(hd))V per
/// (sequence, head). q,k,v have shape [batch*seq_len, d]. When blocked_keys
/// is given (length batch*seq_len), key j is additionally masked for query i
/// unless i is itself blocked (so a blocked span stays internally coherent
/// while being invisible from outside).
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int batch, int seq_len, int n_heads,
                        const std::vector<uint8_t>* blocked_keys = nullptr,
                        GradTape* tape = nullptr);

int argmax(const float* row, int n);

}  // namespace tvlab::ops
