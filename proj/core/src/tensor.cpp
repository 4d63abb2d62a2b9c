#include "tvlab/tensor.hpp"

#include <cmath>
#include <string>

namespace tvlab {

namespace {
#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

void check_finite(const Tensor& t, const char* op_name) {
  if (!g_finite_checks) return;
  const float* p = t.data();
  const size_t n = t.numel();
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw ContractError(std::string("non-finite value produced by ") + op_name +
                          " at flat index " + std::to_string(i));
  }
}

const std::vector<float> GradTape::kEmpty{};

int GradTape::leaf(Tensor& t) {
  if (t.tracked()) return t.node;
  nodes_.push_back(Node{t.numel(), nullptr});
  grads_.emplace_back();
  t.node = static_cast<int>(nodes_.size()) - 1;
  return t.node;
}

int GradTape::record(size_t numel, std::function<void(GradTape&, int)> back) {
  nodes_.push_back(Node{numel, std::move(back)});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<float>& GradTape::grad_buf(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(nodes_[static_cast<size_t>(node)].numel, 0.0f);
  return g;
}

void GradTape::accumulate(int node, const float* g, size_t n) {
  auto& buf = grad_buf(node);
  if (buf.size() != n) throw DimensionError("gradient shape mismatch in accumulate");
  for (size_t i = 0; i < n; ++i) buf[i] += g[i];
}

bool GradTape::has_grad(int node) const {
  return node >= 0 && !grads_[static_cast<size_t>(node)].empty();
}

const std::vector<float>& GradTape::grad(int node) const {
  if (node < 0 || static_cast<size_t>(node) >= grads_.size()) return kEmpty;
  return grads_[static_cast<size_t>(node)];
}

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) throw ContractError("backward() requires a scalar loss");
  if (!loss.tracked()) throw ContractError("backward() requires a tape-tracked loss");
  grad_buf(loss.node)[0] = 1.0f;
  for (int i = loss.node; i >= 0; --i) {
    const auto& node = nodes_[static_cast<size_t>(i)];
    if (!node.back) continue;               // leaf
    if (grads_[static_cast<size_t>(i)].empty()) continue;  // unreachable from loss
    node.back(*this, i);
  }
}

}  // namespace tvlab
