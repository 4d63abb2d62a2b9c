#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tvlab/ops.hpp"
#include "tvlab/tensor.hpp"

namespace tvlab {

struct ModelConfig {
  int n_layers = 8;
  int d_model = 128;
  int n_heads = 4;
  int d_ff = 512;
  int vocab_size = 54;
  int max_seq_len = 64;
  uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Residual-stream snapshots of one forward pass. hidden[l] is the stream
/// after block l (hidden[0] = token + positional embeddings), each [T, d].
struct ForwardTrace {
  std::vector<int> tokens;
  std::vector<Tensor> hidden;  // n_layers + 1 entries
  Tensor logits;               // [T, vocab_size]
};

/// Wholesale replacement of the residual-stream vector at (layer, position),
/// applied after block `layer` runs and before block layer+1 reads it.
struct PatchSpec {
  int layer = 1;  // 1..n_layers
  int position = 0;
  std::vector<float> value;
};

struct LayerWeights {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

/// Pre-norm decoder-only transformer with a hookable residual stream.
/// Immutable during inference; training mutates weights through parameters().
class TransformerModel {
 public:
  explicit TransformerModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  ForwardTrace forward(const std::vector<int>& tokens) const;
  ForwardTrace forward_with_patch(const std::vector<int>& tokens, const PatchSpec& patch) const;
  /// Forward pass where positions in [block_begin, block_end) are invisible
  /// (as attention keys) to positions outside that span.
  ForwardTrace forward_blocked(const std::vector<int>& tokens, int block_begin,
                               int block_end) const;

  /// Batched tape-tracked forward for training. flat_ids is B sequences of
  /// length T (right-padded); returns logits [B, vocab_size] taken at each
  /// sequence's final_pos. Call track_parameters(tape) first.
  Tensor train_logits(const std::vector<int>& flat_ids, int batch, int seq_len,
                      const std::vector<int>& final_pos, GradTape& tape) const;

  /// Registers every parameter as a fresh leaf on `tape`.
  void track_parameters(GradTape& tape);

  struct ParamRef {
    std::string name;
    Tensor* tensor;
  };
  /// All parameters in fixed manifest order (checkpoint order).
  std::vector<ParamRef> parameters();
  std::vector<std::pair<std::string, const Tensor*>> parameters() const;
  size_t parameter_count() const;

  const Tensor& unembedding() const { return unembed_; }
  const Tensor& final_norm_gain() const { return lnf_g_; }
  const Tensor& final_norm_bias() const { return lnf_b_; }

  /// Logit-lens projection: softmax(unembed(final_layer_norm(h))).
  std::vector<float> project_to_vocab(const std::vector<float>& hidden) const;

 private:
  ForwardTrace forward_impl(const std::vector<int>& tokens, const PatchSpec* patch,
                            const std::vector<uint8_t>* blocked) const;

  ModelConfig cfg_;
  Tensor tok_emb_, pos_emb_;
  std::vector<LayerWeights> layers_;
  Tensor lnf_g_, lnf_b_;
  Tensor unembed_;
};

/// Copy of the residual-stream vector at (layer, position) of a trace.
std::vector<float> read_hidden(const ForwardTrace& trace, int layer, int position);

void save_checkpoint(const TransformerModel& model, const std::string& path);
TransformerModel load_checkpoint(const std::string& path);

}  // namespace tvlab
