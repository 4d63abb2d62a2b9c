#include "tvlab/tasks.hpp"

#include <algorithm>

#include "tvlab/errors.hpp"

namespace tvlab {

std::string Vocab::token_text(int id) {
  if (is_lower(id)) return std::string(1, static_cast<char>('a' + id));
  if (is_upper(id)) return std::string(1, static_cast<char>('A' + id - kNumSymbols));
  if (id == kArrow) return "→";
  if (id == kSep) return ",";
  throw DimensionError("token id out of range");
}

namespace {

SymbolSeq single_lower_sampler(Rng& rng) { return {Vocab::lower(rng.uniform_int(26))}; }
SymbolSeq single_upper_sampler(Rng& rng) { return {Vocab::upper(rng.uniform_int(26))}; }

SymbolSeq list3_sampler(Rng& rng) {
  SymbolSeq out;
  while (out.size() < 3) {
    int s = Vocab::lower(rng.uniform_int(26));
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

int require_single_lower(const SymbolSeq& in) {
  if (in.size() != 1 || !Vocab::is_lower(in[0]))
    throw ContractError("task input must be a single lower symbol");
  return in[0];
}

}  // namespace

std::vector<TaskSpec> builtin_tasks() {
  std::vector<TaskSpec> out;

  TaskSpec next;
  next.name = "next_symbol";
  next.input_space = "lower";
  next.apply = [](const SymbolSeq& in) { return (require_single_lower(in) + 1) % 26; };
  next.input_sampler = single_lower_sampler;
  out.push_back(next);

  TaskSpec prev;
  prev.name = "prev_symbol";
  prev.input_space = "lower";
  prev.apply = [](const SymbolSeq& in) { return (require_single_lower(in) + 25) % 26; };
  prev.input_sampler = single_lower_sampler;
  out.push_back(prev);

  TaskSpec first;
  first.name = "list_first";
  first.input_space = "lower_list3";
  first.input_len = 3;
  first.apply = [](const SymbolSeq& in) {
    if (in.size() != 3) throw ContractError("list task input must have 3 symbols");
    return in.front();
  };
  first.input_sampler = list3_sampler;
  out.push_back(first);

  TaskSpec last;
  last.name = "list_last";
  last.input_space = "lower_list3";
  last.input_len = 3;
  last.apply = [](const SymbolSeq& in) {
    if (in.size() != 3) throw ContractError("list task input must have 3 symbols");
    return in.back();
  };
  last.input_sampler = list3_sampler;
  out.push_back(last);

  TaskSpec toupper;
  toupper.name = "to_upper";
  toupper.input_space = "lower";
  toupper.apply = [](const SymbolSeq& in) { return Vocab::upper(require_single_lower(in)); };
  toupper.input_sampler = single_lower_sampler;
  out.push_back(toupper);

  TaskSpec tolower;
  tolower.name = "to_lower";
  tolower.input_space = "upper";
  tolower.apply = [](const SymbolSeq& in) {
    if (in.size() != 1 || !Vocab::is_upper(in[0]))
      throw ContractError("to_lower input must be a single upper symbol");
    return in[0] - Vocab::kNumSymbols;
  };
  tolower.input_sampler = single_upper_sampler;
  out.push_back(tolower);

  return out;
}

TaskSpec bijection_task_from_permutation(const std::array<int, Vocab::kNumSymbols>& perm,
                                         const std::string& name) {
  std::array<bool, Vocab::kNumSymbols> seen{};
  for (int v : perm) {
    if (!Vocab::is_lower(v) || seen[static_cast<size_t>(v)])
      throw ContractError("bijection table is not a permutation of the lower symbols");
    seen[static_cast<size_t>(v)] = true;
  }
  TaskSpec t;
  t.name = name;
  t.category = TaskSpec::Category::Bijection;
  t.input_space = "lower";
  t.apply = [perm](const SymbolSeq& in) { return perm[static_cast<size_t>(require_single_lower(in))]; };
  t.input_sampler = single_lower_sampler;
  return t;
}

TaskSpec random_bijection_task(uint64_t seed) {
  std::array<int, Vocab::kNumSymbols> perm{};
  for (int i = 0; i < Vocab::kNumSymbols; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng(mix_seed(0x626a6563ULL /* "bjec" */, seed));
  for (int i = Vocab::kNumSymbols - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.uniform_int(i + 1))]);
  return bijection_task_from_permutation(perm, "bijection:" + std::to_string(seed));
}

TaskSpec task_by_name(const std::string& name) {
  for (auto& t : builtin_tasks())
    if (t.name == name) return t;
  const std::string prefix = "bijection:";
  if (name.rfind(prefix, 0) == 0) {
    try {
      return random_bijection_task(std::stoull(name.substr(prefix.size())));
    } catch (const std::logic_error&) {
      throw ConfigError("bad bijection seed in task name: " + name);
    }
  }
  throw ConfigError("unknown task: " + name);
}

Episode sample_episode(const TaskSpec& task, int k, uint64_t seed) {
  if (k < 1) throw ContractError("sample_episode: k must be >= 1");
  if (task.input_len == 1 && k + 1 > Vocab::kNumSymbols)
    throw ContractError("sample_episode: not enough distinct inputs for k demos + query");
  Rng rng(mix_seed(0x65706973ULL /* "epis" */, seed));
  Episode ep;
  ep.task = task;
  ep.seed = seed;
  std::vector<SymbolSeq> used;
  for (int i = 0; i < k; ++i) {
    SymbolSeq in = sample_input_excluding(task, rng, used);
    used.push_back(in);
    ep.demos.push_back({in, task.apply(in)});
  }
  ep.query = sample_input_excluding(task, rng, used);
  ep.gold = task.apply(ep.query);
  return ep;
}

SymbolSeq sample_input_excluding(const TaskSpec& task, Rng& rng,
                                 const std::vector<SymbolSeq>& exclude) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    SymbolSeq in = task.input_sampler(rng);
    if (std::find(exclude.begin(), exclude.end(), in) == exclude.end()) return in;
  }
  throw ContractError("sample_input_excluding: input space exhausted");
}

std::vector<int> render_prompt(const std::vector<Demonstration>& demos, const SymbolSeq& query) {
  std::vector<int> out;
  auto push_input = [&out](const SymbolSeq& in) {
    for (size_t i = 0; i < in.size(); ++i) {
      if (i > 0) out.push_back(Vocab::kSep);
      out.push_back(in[i]);
    }
  };
  for (const auto& d : demos) {
    push_input(d.input);
    out.push_back(Vocab::kArrow);
    out.push_back(d.output);
    out.push_back(Vocab::kSep);
  }
  push_input(query);
  out.push_back(Vocab::kArrow);
  return out;
}

std::vector<int> render_query_only(const SymbolSeq& query) {
  return render_prompt({}, query);
}

std::string render_text(const std::vector<int>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += Vocab::token_text(tokens[i]);
  }
  return out;
}

}  // namespace tvlab
