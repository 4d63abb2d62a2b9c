#include "tvlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tvlab/optim.hpp"
#include "tvlab/rng.hpp"

namespace tvlab {

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const std::vector<float>*>& grads, AdamState& state, float lr,
               float beta1, float beta2, float eps) {
  if (params.size() != grads.size())
    throw ContractError("adam_step: params/grads size mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->numel(), 0.0f);
      state.v[i].assign(params[i]->numel(), 0.0f);
    }
  }
  state.step += 1;
  const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(state.step));
  const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw ContractError("adam_step: state shape mismatch");
    const std::vector<float>* g = grads[i];
    if (g && g->size() != p.numel()) throw ContractError("adam_step: grad shape mismatch");
    for (size_t j = 0; j < p.numel(); ++j) {
      const float gj = g ? (*g)[j] : 0.0f;
      m[j] = beta1 * m[j] + (1.0f - beta1) * gj;
      v[j] = beta2 * v[j] + (1.0f - beta2) * gj * gj;
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      p.data()[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void TrainConfig::validate(int max_seq_len) const {
  if (steps < 0) throw ConfigError("train config: steps must be >= 0");
  if (batch_size <= 0) throw ConfigError("train config: batch_size must be positive");
  if (lr <= 0.0f) throw ConfigError("train config: lr must be positive");
  if (k_min < 1 || k_max < k_min) throw ConfigError("train config: bad k_range");
  // longest rendered prompt: list task, input_len 3 -> per demo 8 tokens, query 6
  const int longest = k_max * 8 + 6;
  if (longest > max_seq_len)
    throw ConfigError("train config: k_max exceeds the prompt-length budget");
}

uint64_t episode_seed(uint64_t root, const std::string& task_name, int index) {
  return mix_seed(mix_seed(root, fnv1a_str(task_name)), static_cast<uint64_t>(index));
}

std::vector<std::pair<std::string, double>> evaluate_regular_with(
    const Predictor& predict, const std::vector<TaskSpec>& tasks, int n_episodes, int k,
    uint64_t seed) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& task : tasks) {
    int hits = 0;
    for (int i = 0; i < n_episodes; ++i) {
      Episode ep = sample_episode(task, k, episode_seed(seed, task.name, i));
      const auto prompt = render_prompt(ep.demos, ep.query);
      if (predict(ep, prompt) == ep.gold) ++hits;
    }
    out.emplace_back(task.name, static_cast<double>(hits) / n_episodes);
  }
  return out;
}

std::vector<std::pair<std::string, double>> evaluate_regular(const TransformerModel& model,
                                                             const std::vector<TaskSpec>& tasks,
                                                             int n_episodes, int k,
                                                             uint64_t seed) {
  return evaluate_regular_with(
      [&model](const Episode&, const std::vector<int>& prompt) {
        ForwardTrace tr = model.forward(prompt);
        const int v = tr.logits.last_dim();
        const float* row = tr.logits.data() + (prompt.size() - 1) * static_cast<size_t>(v);
        return ops::argmax(row, v);
      },
      tasks, n_episodes, k, seed);
}

namespace {

struct Bucket {
  int seq_len = 0;
  std::vector<int> flat_ids;
  std::vector<int> final_pos;
  std::vector<int> targets;
};

double mean_of(const std::vector<std::pair<std::string, double>>& accs) {
  if (accs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [n, a] : accs) s += a;
  return s / static_cast<double>(accs.size());
}

}  // namespace

TrainReport train(TransformerModel& model, const std::vector<TaskSpec>& mixture,
                  const TrainConfig& cfg, std::ostream* log) {
  if (mixture.empty()) throw ContractError("train: empty task mixture");
  cfg.validate(model.config().max_seq_len);
  std::vector<double> cum_weight;
  if (!cfg.mixture_weights.empty()) {
    if (cfg.mixture_weights.size() != mixture.size())
      throw ContractError("train: mixture_weights size does not match task mixture");
    double total = 0.0;
    for (float w : cfg.mixture_weights) {
      if (!(w > 0.0f)) throw ContractError("train: mixture weights must be positive");
      total += static_cast<double>(w);
      cum_weight.push_back(total);
    }
  }

  std::vector<TaskSpec> dev_builtin, dev_bijection;
  for (const auto& t : mixture) {
    if (t.category == TaskSpec::Category::Algorithmic)
      dev_builtin.push_back(t);
    else if (static_cast<int>(dev_bijection.size()) < cfg.dev_bijections)
      dev_bijection.push_back(t);
  }

  TrainReport report;
  AdamState adam;
  const auto t0 = std::chrono::steady_clock::now();
  const float lr_min = cfg.lr * cfg.lr_min_factor;

  auto run_dev = [&](int step) {
    DevPoint pt;
    pt.step = step;
    const uint64_t dev_seed = mix_seed(cfg.seed, 0x64657600ULL + static_cast<uint64_t>(step));
    auto acc_b = evaluate_regular(model, dev_builtin, cfg.dev_episodes, cfg.dev_k, dev_seed);
    auto acc_j = evaluate_regular(model, dev_bijection, cfg.dev_episodes, cfg.dev_k, dev_seed);
    pt.mean_builtin = mean_of(acc_b);
    pt.mean_bijection = mean_of(acc_j);
    pt.per_task = acc_b;
    pt.per_task.insert(pt.per_task.end(), acc_j.begin(), acc_j.end());
    report.acc_curve.push_back(pt);
    if (log)
      *log << "step " << step << " dev: algorithmic " << pt.mean_builtin << " bijection "
           << pt.mean_bijection << "\n";
    return cfg.early_stop && pt.mean_builtin >= cfg.gate_builtin &&
           (dev_bijection.empty() || pt.mean_bijection >= cfg.gate_bijection);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    // sample one batch of episodes, bucketed by padded length
    std::map<int, Bucket> buckets;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Rng er(mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(step)), static_cast<uint64_t>(b)));
      size_t ti;
      if (cum_weight.empty()) {
        ti = static_cast<size_t>(er.uniform_int(static_cast<int>(mixture.size())));
      } else {
        const double u = er.uniform01() * cum_weight.back();
        ti = static_cast<size_t>(std::upper_bound(cum_weight.begin(), cum_weight.end(), u) -
                                 cum_weight.begin());
        if (ti >= mixture.size()) ti = mixture.size() - 1;
      }
      const TaskSpec& task = mixture[ti];
      const int k = cfg.k_min + er.uniform_int(cfg.k_max - cfg.k_min + 1);
      const uint64_t es = (static_cast<uint64_t>(er.next_u32()) << 32) | er.next_u32();
      Episode ep = sample_episode(task, k, es);
      const auto prompt = render_prompt(ep.demos, ep.query);
      const int len = static_cast<int>(prompt.size());
      int padded = ((len + 7) / 8) * 8;
      padded = std::min(padded, model.config().max_seq_len);
      Bucket& bk = buckets[padded];
      bk.seq_len = padded;
      bk.flat_ids.insert(bk.flat_ids.end(), prompt.begin(), prompt.end());
      bk.flat_ids.resize(bk.flat_ids.size() + static_cast<size_t>(padded - len), Vocab::kSep);
      bk.final_pos.push_back(len - 1);
      bk.targets.push_back(ep.gold);
    }

    GradTape tape;
    model.track_parameters(tape);
    Tensor total;
    for (auto& [len, bk] : buckets) {
      const int nb = static_cast<int>(bk.final_pos.size());
      Tensor logits = model.train_logits(bk.flat_ids, nb, bk.seq_len, bk.final_pos, tape);
      Tensor loss = ops::cross_entropy(logits, bk.targets, ops::Reduction::Sum, &tape);
      total = total.store ? ops::add(total, loss, &tape) : loss;
    }
    total = ops::scale(total, 1.0f / static_cast<float>(cfg.batch_size), &tape);

    const float loss_val = total.item();
    if (!std::isfinite(loss_val))
      throw ContractError("training diverged (non-finite loss) at step " + std::to_string(step));
    report.loss_curve.emplace_back(step, loss_val);

    tape.backward(total);

    std::vector<Tensor*> params;
    std::vector<const std::vector<float>*> grads;
    for (auto& r : model.parameters()) {
      params.push_back(r.tensor);
      grads.push_back(tape.has_grad(r.tensor->node) ? &tape.grad(r.tensor->node) : nullptr);
    }
    const float prog = cfg.steps > 1 ? static_cast<float>(step) / static_cast<float>(cfg.steps - 1)
                                     : 1.0f;
    const float lr_t =
        lr_min + 0.5f * (cfg.lr - lr_min) *
                     (1.0f + std::cos(3.14159265358979323846f * prog));
    adam_step(params, grads, adam, lr_t);

    report.steps_run = step + 1;
    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps) {
      if (log && (step + 1) % cfg.eval_every == 0)
        *log << "step " << (step + 1) << " loss " << loss_val << "\n";
      if (run_dev(step + 1)) {
        report.gate_reached = true;
        break;
      }
    }
  }
  if (!report.gate_reached && report.steps_run > 0 && report.acc_curve.empty()) run_dev(report.steps_run);
  if (!report.acc_curve.empty() && !report.gate_reached) {
    const auto& last = report.acc_curve.back();
    report.gate_reached = last.mean_builtin >= cfg.gate_builtin &&
                          (dev_bijection.empty() || last.mean_bijection >= cfg.gate_bijection);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string train_report_json(const TrainReport& report) {
  nlohmann::json j;
  j["steps_run"] = report.steps_run;
  j["gate_reached"] = report.gate_reached;
  j["wall_seconds"] = report.wall_seconds;
  j["checkpoint"] = report.checkpoint_path;
  if (!report.loss_curve.empty()) j["final_loss"] = report.loss_curve.back().second;
  nlohmann::json dev = nlohmann::json::array();
  for (const auto& pt : report.acc_curve) {
    nlohmann::json e;
    e["step"] = pt.step;
    e["mean_algorithmic"] = pt.mean_builtin;
    e["mean_bijection"] = pt.mean_bijection;
    for (const auto& [name, acc] : pt.per_task) e["per_task"][name] = acc;
    dev.push_back(e);
  }
  j["dev_curve"] = dev;
  return j.dump(2);
}

std::string loss_curve_csv(const TrainReport& report) {
  std::ostringstream os;
  os << "step,loss\n";
  for (const auto& [s, l] : report.loss_curve) os << s << "," << l << "\n";
  return os.str();
}

std::string accuracy_curve_csv(const TrainReport& report) {
  std::ostringstream os;
  os << "step,mean_algorithmic,mean_bijection\n";
  for (const auto& pt : report.acc_curve)
    os << pt.step << "," << pt.mean_builtin << "," << pt.mean_bijection << "\n";
  return os.str();
}

}  // namespace tvlab
