#include "tvlab/model.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "tvlab/checkpoint.hpp"
#include "tvlab/rng.hpp"

namespace tvlab {

void ModelConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || vocab_size <= 0 ||
      max_seq_len <= 0)
    throw ConfigError("model config: all dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("model config: d_model must be divisible by n_heads");
}

namespace {

Tensor normal_init(Rng& rng, Shape shape, float stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = stddev * static_cast<float>(rng.normal());
  return t;
}

Tensor const_init(Shape shape, float v) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = v;
  return t;
}

}  // namespace

TransformerModel::TransformerModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const float s = 0.02f;
  const float s_res = s / std::sqrt(2.0f * static_cast<float>(cfg_.n_layers));
  const int d = cfg_.d_model;
  tok_emb_ = normal_init(rng, {cfg_.vocab_size, d}, s);
  pos_emb_ = normal_init(rng, {cfg_.max_seq_len, d}, s);
  layers_.reserve(static_cast<size_t>(cfg_.n_layers));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    LayerWeights w;
    w.ln1_g = const_init({d}, 1.0f);
    w.ln1_b = const_init({d}, 0.0f);
    w.wq = normal_init(rng, {d, d}, s);
    w.bq = const_init({d}, 0.0f);
    w.wk = normal_init(rng, {d, d}, s);
    w.bk = const_init({d}, 0.0f);
    w.wv = normal_init(rng, {d, d}, s);
    w.bv = const_init({d}, 0.0f);
    w.wo = normal_init(rng, {d, d}, s_res);
    w.bo = const_init({d}, 0.0f);
    w.ln2_g = const_init({d}, 1.0f);
    w.ln2_b = const_init({d}, 0.0f);
    w.w1 = normal_init(rng, {d, cfg_.d_ff}, s);
    w.b1 = const_init({cfg_.d_ff}, 0.0f);
    w.w2 = normal_init(rng, {cfg_.d_ff, d}, s_res);
    w.b2 = const_init({d}, 0.0f);
    layers_.push_back(std::move(w));
  }
  lnf_g_ = const_init({d}, 1.0f);
  lnf_b_ = const_init({d}, 0.0f);
  unembed_ = normal_init(rng, {d, cfg_.vocab_size}, s);
}

std::vector<TransformerModel::ParamRef> TransformerModel::parameters() {
  std::vector<ParamRef> out;
  out.push_back({"tok_emb", &tok_emb_});
  out.push_back({"pos_emb", &pos_emb_});
  for (int l = 0; l < cfg_.n_layers; ++l) {
    auto& w = layers_[static_cast<size_t>(l)];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "ln1.g", &w.ln1_g});
    out.push_back({p + "ln1.b", &w.ln1_b});
    out.push_back({p + "attn.wq", &w.wq});
    out.push_back({p + "attn.bq", &w.bq});
    out.push_back({p + "attn.wk", &w.wk});
    out.push_back({p + "attn.bk", &w.bk});
    out.push_back({p + "attn.wv", &w.wv});
    out.push_back({p + "attn.bv", &w.bv});
    out.push_back({p + "attn.wo", &w.wo});
    out.push_back({p + "attn.bo", &w.bo});
    out.push_back({p + "ln2.g", &w.ln2_g});
    out.push_back({p + "ln2.b", &w.ln2_b});
    out.push_back({p + "mlp.w1", &w.w1});
    out.push_back({p + "mlp.b1", &w.b1});
    out.push_back({p + "mlp.w2", &w.w2});
    out.push_back({p + "mlp.b2", &w.b2});
  }
  out.push_back({"ln_f.g", &lnf_g_});
  out.push_back({"ln_f.b", &lnf_b_});
  out.push_back({"unembed", &unembed_});
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> TransformerModel::parameters() const {
  auto refs = const_cast<TransformerModel*>(this)->parameters();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(refs.size());
  for (auto& r : refs) out.emplace_back(r.name, r.tensor);
  return out;
}

size_t TransformerModel::parameter_count() const {
  size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t->numel();
  return n;
}

void TransformerModel::track_parameters(GradTape& tape) {
  for (auto& r : parameters()) {
    r.tensor->node = -1;  // ids from any previous tape are void
    tape.leaf(*r.tensor);
  }
}

ForwardTrace TransformerModel::forward_impl(const std::vector<int>& tokens,
                                            const PatchSpec* patch,
                                            const std::vector<uint8_t>* blocked) const {
  const int t_len = static_cast<int>(tokens.size());
  if (t_len == 0) throw ContractError("forward: empty token sequence");
  if (t_len > cfg_.max_seq_len)
    throw DimensionError("forward: sequence longer than max_seq_len");
  for (int id : tokens)
    if (id < 0 || id >= cfg_.vocab_size) throw DimensionError("forward: token id out of range");
  if (patch) {
    if (patch->layer < 1 || patch->layer > cfg_.n_layers)
      throw DimensionError("patch: layer out of range");
    if (patch->position < 0 || patch->position >= t_len)
      throw DimensionError("patch: position out of range");
    if (static_cast<int>(patch->value.size()) != cfg_.d_model)
      throw DimensionError("patch: value length != d_model");
  }

  std::vector<int> positions(static_cast<size_t>(t_len));
  for (int i = 0; i < t_len; ++i) positions[static_cast<size_t>(i)] = i;

  ForwardTrace trace;
  trace.tokens = tokens;
  trace.hidden.reserve(static_cast<size_t>(cfg_.n_layers) + 1);

  Tensor h = ops::add(ops::row_select(tok_emb_, tokens), ops::row_select(pos_emb_, positions));
  trace.hidden.push_back(h);

  auto apply_patch_if = [&](int layer_idx, Tensor& cur) {
    if (!patch || patch->layer != layer_idx) return;
    Tensor replaced = Tensor::zeros(cur.shape);
    std::memcpy(replaced.data(), cur.data(), cur.numel() * sizeof(float));
    std::memcpy(replaced.data() + static_cast<size_t>(patch->position) * cfg_.d_model,
                patch->value.data(), sizeof(float) * static_cast<size_t>(cfg_.d_model));
    cur = replaced;
  };

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& w = layers_[static_cast<size_t>(l)];
    Tensor a = ops::layer_norm(h, w.ln1_g, w.ln1_b);
    Tensor q = ops::add(ops::matmul(a, w.wq), w.bq);
    Tensor k = ops::add(ops::matmul(a, w.wk), w.bk);
    Tensor v = ops::add(ops::matmul(a, w.wv), w.bv);
    Tensor att = ops::causal_attention(q, k, v, 1, t_len, cfg_.n_heads, blocked);
    h = ops::add(h, ops::add(ops::matmul(att, w.wo), w.bo));
    Tensor m = ops::layer_norm(h, w.ln2_g, w.ln2_b);
    m = ops::add(ops::matmul(ops::gelu(ops::add(ops::matmul(m, w.w1), w.b1)), w.w2), w.b2);
    h = ops::add(h, m);
    apply_patch_if(l + 1, h);
    trace.hidden.push_back(h);
  }

  trace.logits = ops::matmul(ops::layer_norm(h, lnf_g_, lnf_b_), unembed_);
  return trace;
}

ForwardTrace TransformerModel::forward(const std::vector<int>& tokens) const {
  return forward_impl(tokens, nullptr, nullptr);
}

ForwardTrace TransformerModel::forward_with_patch(const std::vector<int>& tokens,
                                                  const PatchSpec& patch) const {
  return forward_impl(tokens, &patch, nullptr);
}

ForwardTrace TransformerModel::forward_blocked(const std::vector<int>& tokens, int block_begin,
                                               int block_end) const {
  const int t_len = static_cast<int>(tokens.size());
  if (block_begin < 0 || block_end > t_len || block_begin >= block_end)
    throw ContractError("forward_blocked: bad span");
  std::vector<uint8_t> blocked(static_cast<size_t>(t_len), 0);
  for (int i = block_begin; i < block_end; ++i) blocked[static_cast<size_t>(i)] = 1;
  return forward_impl(tokens, nullptr, &blocked);
}

Tensor TransformerModel::train_logits(const std::vector<int>& flat_ids, int batch, int seq_len,
                                      const std::vector<int>& final_pos, GradTape& tape) const {
  if (static_cast<int>(flat_ids.size()) != batch * seq_len)
    throw DimensionError("train_logits: flat_ids size != batch*seq_len");
  if (static_cast<int>(final_pos.size()) != batch)
    throw DimensionError("train_logits: final_pos size != batch");
  if (seq_len > cfg_.max_seq_len) throw DimensionError("train_logits: seq_len > max_seq_len");

  std::vector<int> positions(flat_ids.size());
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < seq_len; ++i)
      positions[static_cast<size_t>(b * seq_len + i)] = i;

  GradTape* tp = &tape;
  Tensor h = ops::add(ops::row_select(tok_emb_, flat_ids, tp),
                      ops::row_select(pos_emb_, positions, tp), tp);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& w = layers_[static_cast<size_t>(l)];
    Tensor a = ops::layer_norm(h, w.ln1_g, w.ln1_b, 1e-5f, tp);
    Tensor q = ops::add(ops::matmul(a, w.wq, tp), w.bq, tp);
    Tensor k = ops::add(ops::matmul(a, w.wk, tp), w.bk, tp);
    Tensor v = ops::add(ops::matmul(a, w.wv, tp), w.bv, tp);
    Tensor att = ops::causal_attention(q, k, v, batch, seq_len, cfg_.n_heads, nullptr, tp);
    h = ops::add(h, ops::add(ops::matmul(att, w.wo, tp), w.bo, tp), tp);
    Tensor m = ops::layer_norm(h, w.ln2_g, w.ln2_b, 1e-5f, tp);
    m = ops::add(ops::matmul(ops::gelu(ops::add(ops::matmul(m, w.w1, tp), w.b1, tp), tp), w.w2, tp),
                 w.b2, tp);
    h = ops::add(h, m, tp);
  }
  std::vector<int> rows(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    if (final_pos[static_cast<size_t>(b)] < 0 || final_pos[static_cast<size_t>(b)] >= seq_len)
      throw DimensionError("train_logits: final position out of range");
    rows[static_cast<size_t>(b)] = b * seq_len + final_pos[static_cast<size_t>(b)];
  }
  Tensor fin = ops::row_select(h, rows, tp);
  return ops::matmul(ops::layer_norm(fin, lnf_g_, lnf_b_, 1e-5f, tp), unembed_, tp);
}

std::vector<float> TransformerModel::project_to_vocab(const std::vector<float>& hidden) const {
  if (static_cast<int>(hidden.size()) != cfg_.d_model)
    throw DimensionError("project_to_vocab: vector length != d_model");
  Tensor h({1, cfg_.d_model}, std::vector<float>(hidden));
  Tensor probs = ops::softmax(ops::matmul(ops::layer_norm(h, lnf_g_, lnf_b_), unembed_));
  return {probs.data(), probs.data() + probs.numel()};
}

std::vector<float> read_hidden(const ForwardTrace& trace, int layer, int position) {
  if (layer < 0 || layer >= static_cast<int>(trace.hidden.size()))
    throw DimensionError("read_hidden: layer out of range");
  const Tensor& h = trace.hidden[static_cast<size_t>(layer)];
  const int t_len = h.dim(0);
  if (position < 0 || position >= t_len)
    throw DimensionError("read_hidden: position out of range");
  const int d = h.dim(1);
  const float* row = h.data() + static_cast<size_t>(position) * d;
  return {row, row + d};
}

void save_checkpoint(const TransformerModel& model, const std::string& path) {
  const auto& cfg = model.config();
  nlohmann::json meta;
  meta["kind"] = "model";
  meta["config"] = {{"n_layers", cfg.n_layers},   {"d_model", cfg.d_model},
                    {"n_heads", cfg.n_heads},     {"d_ff", cfg.d_ff},
                    {"vocab_size", cfg.vocab_size}, {"max_seq_len", cfg.max_seq_len},
                    {"seed", cfg.seed}};
  std::vector<ContainerEntry> entries;
  for (const auto& [name, t] : model.parameters())
    entries.push_back({name, t->shape, *t->store});
  write_container(path, meta, entries);
}

TransformerModel load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  const auto& meta = *c.meta;
  if (!meta.contains("kind") || meta["kind"] != "model")
    throw IoError("not a model checkpoint: " + path);
  ModelConfig cfg;
  const auto& j = meta.at("config");
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  TransformerModel model(cfg);
  auto refs = model.parameters();
  if (refs.size() != c.entries.size())
    throw IoError("checkpoint manifest does not match architecture: " + path);
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& e = c.entries[i];
    if (e.name != refs[i].name || e.shape != refs[i].tensor->shape)
      throw IoError("checkpoint entry mismatch at '" + e.name + "' in " + path);
    *refs[i].tensor->store = e.data;
  }
  return model;
}

}  // namespace tvlab
