#include "cfd/fusion.hpp"

namespace cfd {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;
}  // namespace

Tensor pool(const Tensor& embeddings, int true_len) {
  check(embeddings.rank() == 2, "pool: expects a rank-2 embedding matrix");
  check(true_len >= 1, "pool: true_len must be >= 1");
  check(true_len <= embeddings.dim(0), "pool: true_len exceeds row count");
  const int cols = embeddings.dim(1);
  Tensor out({1, cols});
  for (int i = 0; i < true_len; ++i)
    for (int j = 0; j < cols; ++j) out.at(0, j) += embeddings.at(i, j);
  for (int j = 0; j < cols; ++j) out.at(0, j) /= true_len;
  return out;
}

Tensor pad_attention_grid(const Tensor& attention, int grid) {
  check(attention.rank() == 3, "pad_attention_grid: expects rank-3 stack");
  check(attention.dim(1) == attention.dim(2), "pad_attention_grid: token axes must be square");
  const int c = attention.dim(0);
  const int t = std::min(attention.dim(1), grid);
  Tensor out({c, grid, grid});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < t; ++j) out.at(ch, i, j) = attention.at(ch, i, j);
  return out;
}

FusionNet::FusionNet(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng)
    : cfg_(cfg), store_(&store) {
  const int c_in = cfg_.conv_in_channels();
  const int c1 = cfg_.conv1_channels, c2 = cfg_.conv2_channels, k = cfg_.conv_kernel;
  conv1_w_ = store.create("fusion.conv1.weight", {c1, c_in, k, k}, ag::Init::kTruncNormal,
                          init_rng);
  conv1_b_ = store.create("fusion.conv1.bias", {c1}, ag::Init::kZeros, init_rng);
  bn1_gain_ = store.create("fusion.bn1.gain", {c1}, ag::Init::kOnes, init_rng);
  bn1_bias_ = store.create("fusion.bn1.bias", {c1}, ag::Init::kZeros, init_rng);
  store.buffer("fusion.bn1.running_mean", {c1}, 0.0);
  store.buffer("fusion.bn1.running_var", {c1}, 1.0);
  conv2_w_ = store.create("fusion.conv2.weight", {c2, c1, k, k}, ag::Init::kTruncNormal,
                          init_rng);
  conv2_b_ = store.create("fusion.conv2.bias", {c2}, ag::Init::kZeros, init_rng);
  bn2_gain_ = store.create("fusion.bn2.gain", {c2}, ag::Init::kOnes, init_rng);
  bn2_bias_ = store.create("fusion.bn2.bias", {c2}, ag::Init::kZeros, init_rng);
  store.buffer("fusion.bn2.running_mean", {c2}, 0.0);
  store.buffer("fusion.bn2.running_var", {c2}, 1.0);
  attnfc_w_ = store.create("fusion.attnfc.weight", {cfg_.conv_flat_dim(), cfg_.attention_embed_dim},
                           ag::Init::kTruncNormal, init_rng);
  attnfc_b_ = store.create("fusion.attnfc.bias", {1, cfg_.attention_embed_dim}, ag::Init::kZeros,
                           init_rng);
  fuse_ln_gain_ = store.create("fusion.ln.gain", {cfg_.fused_width()}, ag::Init::kOnes, init_rng);
  fuse_ln_bias_ = store.create("fusion.ln.bias", {cfg_.fused_width()}, ag::Init::kZeros, init_rng);
  fuse_fc_w_ = store.create("fusion.fc.weight", {cfg_.fused_width(), cfg_.feature_dim},
                            ag::Init::kTruncNormal, init_rng);
  fuse_fc_b_ = store.create("fusion.fc.bias", {1, cfg_.feature_dim}, ag::Init::kZeros, init_rng);
}

std::vector<ag::NodePtr> FusionNet::attention_embed_batch(
    const std::vector<ag::NodePtr>& attention, Mode mode, Rng* dropout_rng) {
  check(!attention.empty(), "attention_embed: empty batch");
  const int c_in = cfg_.conv_in_channels();
  for (const auto& a : attention) {
    check(a->value.rank() == 3, "attention_embed: expects rank-3 stacks");
    check(a->value.dim(1) == a->value.dim(2), "attention_embed: token axes must be square");
    check(a->value.dim(0) == c_in, "attention_embed: channel count mismatch");
    check(a->value.dim(1) == cfg_.max_len, "attention_embed: token axes must equal max_len");
  }
  const bool train = mode == Mode::kTrain;
  const bool drop = train && cfg_.dropout > 0.0;
  if (drop) check(dropout_rng != nullptr, "attention_embed: train mode needs a dropout rng");
  const int n = static_cast<int>(attention.size());

  std::vector<ag::NodePtr> stage(attention);
  // conv block 1
  for (auto& s : stage) s = ag::conv2d_same(s, conv1_w_, conv1_b_, cfg_.conv_stride);
  ag::NodePtr bn1 = ag::batch_norm(stage, bn1_gain_, bn1_bias_,
                                   store_->buffer("fusion.bn1.running_mean"),
                                   store_->buffer("fusion.bn1.running_var"), train,
                                   kBatchNormMomentum, kBatchNormEps);
  for (int i = 0; i < n; ++i) {
    ag::NodePtr s = ag::relu(ag::select_sample(bn1, i));
    if (drop) s = ag::dropout(s, cfg_.dropout, *dropout_rng);
    stage[static_cast<size_t>(i)] = s;
  }
  // conv block 2
  for (auto& s : stage) s = ag::conv2d_same(s, conv2_w_, conv2_b_, cfg_.conv_stride);
  ag::NodePtr bn2 = ag::batch_norm(stage, bn2_gain_, bn2_bias_,
                                   store_->buffer("fusion.bn2.running_mean"),
                                   store_->buffer("fusion.bn2.running_var"), train,
                                   kBatchNormMomentum, kBatchNormEps);
  for (int i = 0; i < n; ++i) {
    ag::NodePtr s = ag::relu(ag::select_sample(bn2, i));
    if (drop) s = ag::dropout(s, cfg_.dropout, *dropout_rng);
    // linear block to the attention embedding
    s = ag::relu(ag::add_row(ag::matmul(ag::flatten(s), attnfc_w_), attnfc_b_));
    if (drop) s = ag::dropout(s, cfg_.dropout, *dropout_rng);
    stage[static_cast<size_t>(i)] = s;
  }
  return stage;
}

ag::NodePtr FusionNet::pool_node(ag::NodePtr embeddings, int true_len) const {
  check(true_len >= 1, "pool: true_len must be >= 1");
  check(true_len <= embeddings->value.dim(0), "pool: true_len exceeds row count");
  return ag::mean_rows(embeddings, true_len);
}

ag::NodePtr FusionNet::fuse_node(ag::NodePtr pooled, ag::NodePtr attention_embedding, Mode mode,
                                 Rng* dropout_rng) const {
  check(pooled->value.rank() == 2 && pooled->value.dim(0) == 1, "fuse: pooled must be [1 x 3d]");
  check(attention_embedding->value.rank() == 2 && attention_embedding->value.dim(0) == 1,
        "fuse: attention embedding must be [1 x a]");
  check(pooled->value.dim(1) + attention_embedding->value.dim(1) == cfg_.fused_width(),
        "fuse: width mismatch");
  const bool drop = mode == Mode::kTrain && cfg_.dropout > 0.0;
  if (drop) check(dropout_rng != nullptr, "fuse: train mode needs a dropout rng");

  ag::NodePtr combined = ag::concat_cols(pooled, attention_embedding);
  ag::NodePtr normed = ag::layer_norm_rows(combined, fuse_ln_gain_, fuse_ln_bias_, kLayerNormEps);
  ag::NodePtr feature = ag::relu(ag::add_row(ag::matmul(normed, fuse_fc_w_), fuse_fc_b_));
  if (drop) feature = ag::dropout(feature, cfg_.dropout, *dropout_rng);
  return feature;
}

Tensor FusionNet::attention_embed(const Tensor& attention, Mode mode, Rng* dropout_rng) {
  auto out = attention_embed_batch({ag::constant(attention)}, mode, dropout_rng);
  return out[0]->value;
}

Tensor FusionNet::fuse(const Tensor& pooled, const Tensor& attention_embedding, Mode mode,
                       Rng* dropout_rng) const {
  return fuse_node(ag::constant(pooled), ag::constant(attention_embedding), mode, dropout_rng)
      ->value;
}

}  // namespace cfd
