#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tvlab/model.hpp"
#include "tvlab/rng.hpp"
#include "tvlab/tasks.hpp"

#include "testutil.hpp"

using namespace tvlab;

namespace {

ModelConfig small_config(uint64_t seed = 42) {
  ModelConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.max_seq_len = 16;
  cfg.seed = seed;
  return cfg;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool same_floats(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = small_config();
  cfg.n_heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(TransformerModel{cfg}, ConfigError);
  cfg = small_config();
  cfg.d_model = 0;
  CHECK_THROWS_AS(TransformerModel{cfg}, ConfigError);
}

TEST_CASE("init determinism and seed sensitivity") {
  TransformerModel m1(small_config(42));
  TransformerModel m2(small_config(42));
  TransformerModel m3(small_config(43));
  auto p1 = m1.parameters(), p2 = m2.parameters(), p3 = m3.parameters();
  bool all_same = true, any_differ = false;
  for (size_t i = 0; i < p1.size(); ++i) {
    all_same = all_same && same_floats(*p1[i].tensor, *p2[i].tensor);
    any_differ = any_differ || !same_floats(*p1[i].tensor, *p3[i].tensor);
  }
  CHECK(all_same);
  CHECK(any_differ);
}

TEST_CASE("weight standard deviation near 0.02 for large matrices") {
  ModelConfig cfg;  // defaults: d_model=128
  TransformerModel m(cfg);
  for (auto& [name, t] : m.parameters()) {
    if (name != "tok_emb" && name != "unembed") continue;
    double mean = 0.0, var = 0.0;
    for (size_t i = 0; i < t->numel(); ++i) mean += t->data()[i];
    mean /= static_cast<double>(t->numel());
    for (size_t i = 0; i < t->numel(); ++i)
      var += (t->data()[i] - mean) * (t->data()[i] - mean);
    const double std = std::sqrt(var / static_cast<double>(t->numel()));
    CHECK(std > 0.015);
    CHECK(std < 0.025);
  }
}

TEST_CASE("forward trace shape contract") {
  TransformerModel m(small_config());
  ForwardTrace tr = m.forward({1, 2, 3});
  CHECK(tr.hidden.size() == 3);  // n_layers + 1
  CHECK(tr.logits.dim(0) == 3);
  CHECK(tr.logits.dim(1) == 54);
  CHECK_THROWS_AS(m.forward({}), ContractError);
  CHECK_THROWS_AS(m.forward(std::vector<int>(17, 0)), DimensionError);
  CHECK_THROWS_AS(m.forward({54}), DimensionError);
}

TEST_CASE("causality: appending a token leaves earlier logits bit-identical") {
  TransformerModel m(small_config());
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> tokens;
    const int len = 2 + rng.uniform_int(8);
    for (int i = 0; i < len; ++i) tokens.push_back(rng.uniform_int(54));
    ForwardTrace base = m.forward(tokens);
    std::vector<int> longer = tokens;
    longer.push_back(rng.uniform_int(54));
    ForwardTrace ext = m.forward(longer);
    for (int p = 0; p < len; ++p)
      for (int v = 0; v < 54; ++v)
        CHECK(base.logits.data()[p * 54 + v] == ext.logits.data()[p * 54 + v]);
  }
}

TEST_CASE("forward matches the 64-bit straight-line oracle") {
  TransformerModel m(small_config(7));
  const std::vector<int> tokens = {3, 52, 9};
  ForwardTrace tr = m.forward(tokens);
  const testutil::dvec oracle = testutil::shadow_forward(m, tokens);
  for (size_t i = 0; i < tr.logits.numel(); ++i)
    CHECK(tr.logits.data()[i] == doctest::Approx(oracle[i]).epsilon(1e-4));
}

TEST_CASE("read_hidden at layer 0 equals embedding plus position") {
  TransformerModel m(small_config());
  const std::vector<int> tokens = {5, 11, 52};
  ForwardTrace tr = m.forward(tokens);
  auto params = m.parameters();
  const Tensor* tok = nullptr;
  const Tensor* pos = nullptr;
  for (auto& [name, t] : params) {
    if (name == "tok_emb") tok = t;
    if (name == "pos_emb") pos = t;
  }
  for (int p = 0; p < 3; ++p) {
    const auto h = read_hidden(tr, 0, p);
    for (int j = 0; j < 16; ++j)
      CHECK(h[static_cast<size_t>(j)] ==
            tok->data()[tokens[static_cast<size_t>(p)] * 16 + j] + pos->data()[p * 16 + j]);
  }
  CHECK_THROWS_AS(read_hidden(tr, 3, 0), DimensionError);
  CHECK_THROWS_AS(read_hidden(tr, 0, 3), DimensionError);
}

TEST_CASE("patch round-trip reproduces logits bit-exactly") {
  TransformerModel m(small_config());
  const std::vector<int> tokens = {1, 52, 8, 53, 2, 52};
  ForwardTrace base = m.forward(tokens);
  for (int layer = 1; layer <= 2; ++layer) {
    PatchSpec patch{layer, 5, read_hidden(base, layer, 5)};
    ForwardTrace patched = m.forward_with_patch(tokens, patch);
    for (size_t i = 0; i < base.logits.numel(); ++i)
      CHECK(base.logits.data()[i] == patched.logits.data()[i]);
  }
}

TEST_CASE("patch at the final layer fully determines final logits") {
  TransformerModel m(small_config());
  Rng rng(13);
  std::vector<float> value(16);
  for (auto& v : value) v = static_cast<float>(rng.normal());

  const std::vector<int> tokens_a = {1, 52};
  const std::vector<int> tokens_b = {40, 7};
  PatchSpec patch{2, 1, value};
  ForwardTrace a = m.forward_with_patch(tokens_a, patch);
  ForwardTrace b = m.forward_with_patch(tokens_b, patch);
  for (int v = 0; v < 54; ++v)
    CHECK(a.logits.data()[54 + v] == b.logits.data()[54 + v]);
}

TEST_CASE("patch changes downstream state but not hidden[0]") {
  TransformerModel m(small_config());
  const std::vector<int> tokens = {4, 9};
  ForwardTrace base = m.forward(tokens);
  PatchSpec patch{1, 0, std::vector<float>(16, 0.0f)};
  ForwardTrace patched = m.forward_with_patch(tokens, patch);
  CHECK(same_floats(base.hidden[0], patched.hidden[0]));
  bool changed = false;
  for (int v = 0; v < 54; ++v)
    changed = changed || base.logits.data()[54 + v] != patched.logits.data()[54 + v];
  CHECK(changed);
}

TEST_CASE("patch dominance: downstream state depends on the patch value") {
  TransformerModel m(small_config());
  const std::vector<int> tokens = {4, 9, 52};
  PatchSpec p1{1, 2, std::vector<float>(16, 0.5f)};
  PatchSpec p2{1, 2, std::vector<float>(16, -0.5f)};
  ForwardTrace a = m.forward_with_patch(tokens, p1);
  ForwardTrace b = m.forward_with_patch(tokens, p2);
  CHECK_FALSE(same_floats(a.hidden[2], b.hidden[2]));
  // positions before the patch are untouched
  for (int p = 0; p < 2; ++p)
    for (int v = 0; v < 54; ++v)
      CHECK(a.logits.data()[p * 54 + v] == b.logits.data()[p * 54 + v]);
}

TEST_CASE("patch validation") {
  TransformerModel m(small_config());
  const std::vector<int> tokens = {4, 9};
  CHECK_THROWS_AS(m.forward_with_patch(tokens, {0, 0, std::vector<float>(16, 0.f)}),
                  DimensionError);
  CHECK_THROWS_AS(m.forward_with_patch(tokens, {3, 0, std::vector<float>(16, 0.f)}),
                  DimensionError);
  CHECK_THROWS_AS(m.forward_with_patch(tokens, {1, 2, std::vector<float>(16, 0.f)}),
                  DimensionError);
  CHECK_THROWS_AS(m.forward_with_patch(tokens, {1, 0, std::vector<float>(8, 0.f)}),
                  DimensionError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  TransformerModel m(small_config(77));
  const std::string path = temp_path("tvlab_test_model.tvl");
  save_checkpoint(m, path);

  TransformerModel loaded = load_checkpoint(path);
  CHECK(loaded.config() == m.config());
  auto pa = m.parameters(), pb = loaded.parameters();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(same_floats(*pa[i].tensor, *pb[i].tensor));

  const std::vector<int> tokens = {1, 2, 3};
  ForwardTrace ta = m.forward(tokens);
  ForwardTrace tb = loaded.forward(tokens);
  for (size_t i = 0; i < ta.logits.numel(); ++i)
    CHECK(ta.logits.data()[i] == tb.logits.data()[i]);

  // file size = header bytes + 4 bytes per parameter
  std::ifstream in(path, std::ios::binary);
  in.seekg(4);
  uint32_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 4);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<size_t>(in.tellg());
  CHECK(file_size == 8 + header_len + 4 * m.parameter_count());

  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoint magic is rejected") {
  TransformerModel m(small_config());
  const std::string path = temp_path("tvlab_test_corrupt.tvl");
  save_checkpoint(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);  // missing file
}

TEST_CASE("blocked span is invisible to outside queries") {
  TransformerModel m(small_config());
  // tokens: [a -> b , X Y ->]; block the query span {4,5}
  std::vector<int> t1 = {0, 52, 1, 53, 7, 8, 52};
  std::vector<int> t2 = {0, 52, 1, 53, 20, 21, 52};
  ForwardTrace a = m.forward_blocked(t1, 4, 6);
  ForwardTrace b = m.forward_blocked(t2, 4, 6);
  // final arrow (outside the span) cannot see the differing span tokens
  for (int v = 0; v < 54; ++v)
    CHECK(a.logits.data()[6 * 54 + v] == b.logits.data()[6 * 54 + v]);
  // inside the span the computation does differ
  bool differs = false;
  for (int v = 0; v < 54; ++v)
    differs = differs || a.logits.data()[4 * 54 + v] != b.logits.data()[4 * 54 + v];
  CHECK(differs);
  CHECK_THROWS_AS(m.forward_blocked(t1, 5, 5), ContractError);
}
