#include <benchmark/benchmark.h>

#include <vector>

#include "tvlab/hypothesis.hpp"
#include "tvlab/model.hpp"
#include "tvlab/ops.hpp"
#include "tvlab/optim.hpp"
#include "tvlab/rng.hpp"
#include "tvlab/tasks.hpp"

using namespace tvlab;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  for (size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<float>(rng.normal()) * 0.05f;
  return t;
}

TransformerModel default_model() {
  ModelConfig cfg;
  cfg.seed = 7;
  return TransformerModel(cfg);
}

void BM_gemm_nn(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tensor c = ops::matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(BM_gemm_nn)->Arg(64)->Arg(128)->Arg(256);

void BM_forward_pass(benchmark::State& state) {
  TransformerModel model = default_model();
  auto tasks = builtin_tasks();
  Episode ep = sample_episode(tasks[0], 5, 3);
  const auto prompt = render_prompt(ep.demos, ep.query);
  for (auto _ : state) {
    ForwardTrace tr = model.forward(prompt);
    benchmark::DoNotOptimize(tr.logits.data());
  }
}
BENCHMARK(BM_forward_pass);

void BM_train_step(benchmark::State& state) {
  TransformerModel model = default_model();
  AdamState adam;
  auto tasks = builtin_tasks();
  const int batch = 16;
  Episode ep = sample_episode(tasks[0], 5, 3);
  const auto prompt = render_prompt(ep.demos, ep.query);
  const int seq = static_cast<int>(prompt.size());
  std::vector<int> flat;
  std::vector<int> final_pos, targets;
  for (int i = 0; i < batch; ++i) {
    flat.insert(flat.end(), prompt.begin(), prompt.end());
    final_pos.push_back(seq - 1);
    targets.push_back(ep.gold);
  }
  for (auto _ : state) {
    GradTape tape;
    model.track_parameters(tape);
    Tensor logits = model.train_logits(flat, batch, seq, final_pos, tape);
    Tensor loss = ops::cross_entropy(logits, targets, ops::Reduction::Mean, &tape);
    tape.backward(loss);
    auto params = model.parameters();
    std::vector<Tensor*> ts;
    std::vector<const std::vector<float>*> gs;
    for (auto& p : params) {
      ts.push_back(p.tensor);
      gs.push_back(&tape.grad(p.tensor->node));
    }
    adam_step(ts, gs, adam, 3e-4f);
    benchmark::DoNotOptimize(loss.data());
  }
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

void BM_extract_and_apply(benchmark::State& state) {
  TransformerModel model = default_model();
  auto tasks = builtin_tasks();
  Episode ep = sample_episode(tasks[0], 5, 3);
  Rng rng(9);
  std::vector<SymbolSeq> exclude;
  for (const auto& d : ep.demos) exclude.push_back(d.input);
  exclude.push_back(ep.query);
  const SymbolSeq dummy = sample_input_excluding(tasks[0], rng, exclude);
  for (auto _ : state) {
    TaskVector tv = extract_task_vector(model, ep.demos, dummy, 4, tasks[0].name);
    const int out = apply_task_vector(model, ep.query, tv);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_extract_and_apply);

}  // namespace

BENCHMARK_MAIN();
