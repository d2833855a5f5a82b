#pragma once

#include <vector>

#include "cfd/autograd.hpp"
#include "cfd/encoder.hpp"
#include "cfd/tensor.hpp"

namespace cfd {

// Arithmetic mean over the first true_len rows.
Tensor pool(const Tensor& embeddings, int true_len);

// Zero-pads (or truncates) the token axes of a [C x T x T] stack to
// [C x grid x grid]. The attention mass at padded positions is already zero,
// so zero padding is exact.
Tensor pad_attention_grid(const Tensor& attention, int grid);

// Conv + linear feature path over the concatenated attention tensor, plus
// the layer-normalized fusion of pooled and attention embeddings.
//
// Layout: two conv blocks (conv 3x3 stride 2 SAME -> batch norm -> ReLU ->
// dropout) taking 3H channels to conv1_channels to conv2_channels, a flatten,
// and one linear block down to attention_embed_dim. Fusion concatenates the
// pooled embedding (3d) with the attention embedding, layer-normalizes with
// learned gain/bias, and applies one linear block to feature_dim.
class FusionNet {
 public:
  FusionNet(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng);

  // Batch version: one [3H x S x S] node per sample. Batch normalization uses
  // batch statistics in train mode (updating the running buffers) whenever the
  // batch has at least two samples; otherwise it falls back to the running
  // statistics.
  std::vector<ag::NodePtr> attention_embed_batch(const std::vector<ag::NodePtr>& attention,
                                                 Mode mode, Rng* dropout_rng);

  ag::NodePtr pool_node(ag::NodePtr embeddings, int true_len) const;
  ag::NodePtr fuse_node(ag::NodePtr pooled, ag::NodePtr attention_embedding, Mode mode,
                        Rng* dropout_rng) const;

  // Value-level single-sample wrappers.
  Tensor attention_embed(const Tensor& attention, Mode mode, Rng* dropout_rng = nullptr);
  Tensor fuse(const Tensor& pooled, const Tensor& attention_embedding, Mode mode,
              Rng* dropout_rng = nullptr) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  ag::ParameterStore* store_;
  ag::NodePtr conv1_w_, conv1_b_, bn1_gain_, bn1_bias_;
  ag::NodePtr conv2_w_, conv2_b_, bn2_gain_, bn2_bias_;
  ag::NodePtr attnfc_w_, attnfc_b_;
  ag::NodePtr fuse_ln_gain_, fuse_ln_bias_;
  ag::NodePtr fuse_fc_w_, fuse_fc_b_;
};

}  // namespace cfd
