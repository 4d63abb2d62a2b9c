#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "tvlab/errors.hpp"

namespace tvlab {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

/// Dense row-major float32 tensor. Values are immutable once published by an
/// operation; `node` links the tensor into a GradTape when it is tracked.
/// Storage is shared, so copies are cheap and backward closures can retain
/// forward values without duplication.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<float>> store;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> values)
      : shape(std::move(s)), store(std::make_shared<std::vector<float>>(std::move(values))) {
    if (shape_numel(shape) != store->size())
      throw DimensionError("tensor data length does not match shape");
  }

  static Tensor zeros(Shape s) {
    size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<float>(n, 0.0f));
  }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  size_t numel() const { return store ? store->size() : 0; }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int last_dim() const { return shape.back(); }
  /// Number of rows when viewed as a [rows, last_dim] matrix.
  int rows2d() const { return static_cast<int>(numel() / static_cast<size_t>(last_dim())); }

  const float* data() const { return store->data(); }
  float* data() { return store->data(); }
  float item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor");
    return (*store)[0];
  }
  bool tracked() const { return node >= 0; }
};

/// Runtime toggle for NaN/Inf checking after public operations. Defaults to
/// on in debug builds, off in release; tests flip it on explicitly.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
/// Throws ContractError if any element of t is NaN/Inf (when checks are on).
void check_finite(const Tensor& t, const char* op_name);

/// Reverse-mode gradient tape. Operations append nodes in execution order
/// (hence already topologically sorted); backward() walks them in reverse.
/// Single-owner: one tape per forward/backward execution.
class GradTape {
 public:
  /// Registers a leaf (parameter or input) and assigns it a node id.
  int leaf(Tensor& t);

  /// Records an interior node. `back` receives this tape and must read the
  /// node's own gradient via grad_buf(id) and accumulate into its parents.
  int record(size_t numel, std::function<void(GradTape&, int self)> back);

  /// Runs reverse-mode accumulation from a scalar loss.
  void backward(const Tensor& loss);

  /// Gradient of a node after backward(); empty if the node was unreachable
  /// from the loss.
  const std::vector<float>& grad(int node) const;
  bool has_grad(int node) const;

  /// Accumulation buffer for `node`, allocated on first touch.
  std::vector<float>& grad_buf(int node);
  void accumulate(int node, const float* g, size_t n);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    size_t numel;
    std::function<void(GradTape&, int)> back;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
  static const std::vector<float> kEmpty;
};

}  // namespace tvlab
