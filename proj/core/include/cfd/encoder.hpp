#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cfd/autograd.hpp"
#include "cfd/tensor.hpp"

namespace cfd {

enum class Mode { kTrain, kEval };

struct ModelConfig {
  int num_layers = 4;
  int num_heads = 4;
  int model_dim = 128;
  int ffn_dim = 256;
  int max_len = 64;
  double dropout = 0.1;
  // conv stack over the concatenated attention tensor
  int conv1_channels = 16;
  int conv2_channels = 32;
  int conv_kernel = 3;
  int conv_stride = 2;
  int attention_embed_dim = 64;
  int feature_dim = 128;
  int vocab_size = 0;  // set once the vocabulary is built

  int head_dim() const { return model_dim / num_heads; }
  int conv_in_channels() const { return 3 * num_heads; }
  int conv1_grid() const { return (max_len + conv_stride - 1) / conv_stride; }
  int conv2_grid() const { return (conv1_grid() + conv_stride - 1) / conv_stride; }
  int conv_flat_dim() const { return conv2_channels * conv2_grid() * conv2_grid(); }
  int fused_width() const { return 3 * model_dim + attention_embed_dim; }

  // Throws on invalid combinations (fewer than three layers, indivisible
  // head width, out-of-range dropout, ...).
  void validate() const;
};

// Per-layer contextual embeddings (T x d) and attention stacks (H x T x T,
// axes: head, query position, key position). Rows of every attention matrix
// sum to one over the unpadded keys; padded key columns are exactly zero.
struct EncoderOutput {
  std::vector<Tensor> layer_embeddings;
  std::vector<Tensor> layer_attention;
  int true_len = 0;
};

struct Last3Concat {
  Tensor embeddings;  // T x 3d
  Tensor attention;   // 3H x T x T, head order: layer L-2, L-1, L
};

// Concatenates the embeddings / attention stacks of the last three layers.
Last3Concat last3_concat(const EncoderOutput& out);

// Graph-side counterpart of EncoderOutput.
struct EncoderGraph {
  std::vector<ag::NodePtr> layer_embeddings;
  std::vector<ag::NodePtr> layer_attention;
  int true_len = 0;
};

// Pre-norm transformer encoder with learned token and position embeddings.
// Exposes, per layer, both the residual-stream output and the post-softmax
// attention weights of every head.
class TransformerEncoder {
 public:
  TransformerEncoder(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng);

  // Builds the forward graph for one padded id sequence. `ids` must have
  // exactly max_len entries and true_len of them must be real (>= 1).
  EncoderGraph build(const std::vector<int>& ids, int true_len, Mode mode,
                     Rng* dropout_rng) const;

  // Value-level wrapper around build(); validates parameters first.
  EncoderOutput encode(const std::vector<int>& ids, int true_len, Mode mode,
                       Rng* dropout_rng = nullptr) const;

  static std::pair<ag::NodePtr, ag::NodePtr> last3_nodes(const EncoderGraph& graph);

  const ModelConfig& config() const { return cfg_; }

 private:
  struct LayerParams {
    ag::NodePtr ln1_gain, ln1_bias;
    ag::NodePtr wq, bq, wk, bk, wv, bv, wo, bo;
    ag::NodePtr ln2_gain, ln2_bias;
    ag::NodePtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  ModelConfig cfg_;
  ag::ParameterStore* store_;
  ag::NodePtr tok_emb_;
  ag::NodePtr pos_emb_;
  std::vector<LayerParams> layers_;
};

}  // namespace cfd
