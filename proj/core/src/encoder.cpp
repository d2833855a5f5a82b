#include "cfd/encoder.hpp"

#include <cmath>

namespace cfd {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

void ModelConfig::validate() const {
  check(num_layers >= 3, "model: num_layers must be >= 3 (last-three-layer concatenation)");
  check(num_heads >= 1, "model: num_heads must be >= 1");
  check(model_dim % num_heads == 0, "model: model_dim must be divisible by num_heads");
  check(ffn_dim >= 1, "model: ffn_dim must be >= 1");
  check(max_len >= 2, "model: max_len must be >= 2");
  check(dropout >= 0.0 && dropout < 1.0, "model: dropout must be in [0, 1)");
  check(conv1_channels >= 1 && conv2_channels >= 1, "model: conv channels must be >= 1");
  check(conv_kernel >= 1 && conv_stride >= 1, "model: conv kernel/stride must be >= 1");
  check(attention_embed_dim >= 1, "model: attention_embed_dim must be >= 1");
  check(feature_dim >= 1, "model: feature_dim must be >= 1");
  check(vocab_size >= 4, "model: vocab_size must cover the reserved ids");
}

Last3Concat last3_concat(const EncoderOutput& out) {
  const int layers = static_cast<int>(out.layer_embeddings.size());
  check(layers >= 3, "last3_concat: needs at least three layers");
  check(out.layer_attention.size() == out.layer_embeddings.size(),
        "last3_concat: layer list mismatch");

  const Tensor& e0 = out.layer_embeddings[static_cast<size_t>(layers - 3)];
  const int t = e0.dim(0), d = e0.dim(1);
  Last3Concat result;
  result.embeddings = Tensor({t, 3 * d});
  for (int k = 0; k < 3; ++k) {
    const Tensor& e = out.layer_embeddings[static_cast<size_t>(layers - 3 + k)];
    check(e.dim(0) == t && e.dim(1) == d, "last3_concat: embedding shape mismatch");
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < d; ++j) result.embeddings.at(i, k * d + j) = e.at(i, j);
  }

  const Tensor& a0 = out.layer_attention[static_cast<size_t>(layers - 3)];
  const int h = a0.dim(0);
  check(a0.dim(1) == t && a0.dim(2) == t, "last3_concat: attention shape mismatch");
  result.attention = Tensor({3 * h, t, t});
  for (int k = 0; k < 3; ++k) {
    const Tensor& a = out.layer_attention[static_cast<size_t>(layers - 3 + k)];
    check(a.dim(0) == h && a.dim(1) == t && a.dim(2) == t,
          "last3_concat: attention shape mismatch");
    for (int hh = 0; hh < h; ++hh)
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) result.attention.at(k * h + hh, i, j) = a.at(hh, i, j);
  }
  return result;
}

TransformerEncoder::TransformerEncoder(const ModelConfig& cfg, ag::ParameterStore& store,
                                       Rng& init_rng)
    : cfg_(cfg), store_(&store) {
  cfg_.validate();
  const int d = cfg_.model_dim;
  tok_emb_ = store.create("embed.token.weight", {cfg_.vocab_size, d}, ag::Init::kTruncNormal,
                          init_rng);
  pos_emb_ = store.create("embed.pos.weight", {cfg_.max_len, d}, ag::Init::kTruncNormal,
                          init_rng);
  layers_.reserve(static_cast<size_t>(cfg_.num_layers));
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l) + ".";
    LayerParams lp;
    lp.ln1_gain = store.create(p + "ln1.gain", {d}, ag::Init::kOnes, init_rng);
    lp.ln1_bias = store.create(p + "ln1.bias", {d}, ag::Init::kZeros, init_rng);
    lp.wq = store.create(p + "attn.q.weight", {d, d}, ag::Init::kTruncNormal, init_rng);
    lp.bq = store.create(p + "attn.q.bias", {1, d}, ag::Init::kZeros, init_rng);
    lp.wk = store.create(p + "attn.k.weight", {d, d}, ag::Init::kTruncNormal, init_rng);
    lp.bk = store.create(p + "attn.k.bias", {1, d}, ag::Init::kZeros, init_rng);
    lp.wv = store.create(p + "attn.v.weight", {d, d}, ag::Init::kTruncNormal, init_rng);
    lp.bv = store.create(p + "attn.v.bias", {1, d}, ag::Init::kZeros, init_rng);
    lp.wo = store.create(p + "attn.out.weight", {d, d}, ag::Init::kTruncNormal, init_rng);
    lp.bo = store.create(p + "attn.out.bias", {1, d}, ag::Init::kZeros, init_rng);
    lp.ln2_gain = store.create(p + "ln2.gain", {d}, ag::Init::kOnes, init_rng);
    lp.ln2_bias = store.create(p + "ln2.bias", {d}, ag::Init::kZeros, init_rng);
    lp.ffn_w1 = store.create(p + "ffn.fc1.weight", {d, cfg_.ffn_dim}, ag::Init::kTruncNormal,
                             init_rng);
    lp.ffn_b1 = store.create(p + "ffn.fc1.bias", {1, cfg_.ffn_dim}, ag::Init::kZeros, init_rng);
    lp.ffn_w2 = store.create(p + "ffn.fc2.weight", {cfg_.ffn_dim, d}, ag::Init::kTruncNormal,
                             init_rng);
    lp.ffn_b2 = store.create(p + "ffn.fc2.bias", {1, d}, ag::Init::kZeros, init_rng);
    layers_.push_back(std::move(lp));
  }
}

EncoderGraph TransformerEncoder::build(const std::vector<int>& ids, int true_len, Mode mode,
                                       Rng* dropout_rng) const {
  check(static_cast<int>(ids.size()) == cfg_.max_len,
        "encode: id sequence must be padded to max_len");
  check(true_len >= 1, "encode: true_len must be >= 1");
  check(true_len <= cfg_.max_len, "encode: true_len exceeds max_len");
  const bool drop = mode == Mode::kTrain && cfg_.dropout > 0.0;
  if (drop) check(dropout_rng != nullptr, "encode: train mode needs a dropout rng");

  const int d = cfg_.model_dim;
  const int heads = cfg_.num_heads;
  const int hd = cfg_.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  ag::NodePtr x = ag::add(ag::gather_rows(tok_emb_, ids), pos_emb_);
  if (drop) x = ag::dropout(x, cfg_.dropout, *dropout_rng);

  EncoderGraph graph;
  graph.true_len = true_len;
  for (const LayerParams& lp : layers_) {
    // attention sublayer
    ag::NodePtr xn = ag::layer_norm_rows(x, lp.ln1_gain, lp.ln1_bias, kLayerNormEps);
    ag::NodePtr q = ag::add_row(ag::matmul(xn, lp.wq), lp.bq);
    ag::NodePtr k = ag::add_row(ag::matmul(xn, lp.wk), lp.bk);
    ag::NodePtr v = ag::add_row(ag::matmul(xn, lp.wv), lp.bv);
    std::vector<ag::NodePtr> probs_per_head;
    ag::NodePtr heads_out;
    probs_per_head.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      ag::NodePtr qh = ag::slice_cols(q, h * hd, hd);
      ag::NodePtr kh = ag::slice_cols(k, h * hd, hd);
      ag::NodePtr vh = ag::slice_cols(v, h * hd, hd);
      ag::NodePtr scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), att_scale);
      ag::NodePtr probs = ag::row_softmax_masked(scores, true_len);
      probs_per_head.push_back(probs);
      ag::NodePtr oh = ag::matmul(probs, vh);
      heads_out = h == 0 ? oh : ag::concat_cols(heads_out, oh);
    }
    ag::NodePtr att_out = ag::add_row(ag::matmul(heads_out, lp.wo), lp.bo);
    if (drop) att_out = ag::dropout(att_out, cfg_.dropout, *dropout_rng);
    x = ag::add(x, att_out);

    // feed-forward sublayer
    ag::NodePtr xn2 = ag::layer_norm_rows(x, lp.ln2_gain, lp.ln2_bias, kLayerNormEps);
    ag::NodePtr h1 = ag::relu(ag::add_row(ag::matmul(xn2, lp.ffn_w1), lp.ffn_b1));
    if (drop) h1 = ag::dropout(h1, cfg_.dropout, *dropout_rng);
    ag::NodePtr h2 = ag::add_row(ag::matmul(h1, lp.ffn_w2), lp.ffn_b2);
    if (drop) h2 = ag::dropout(h2, cfg_.dropout, *dropout_rng);
    x = ag::add(x, h2);

    graph.layer_embeddings.push_back(x);
    graph.layer_attention.push_back(ag::stack_mats(probs_per_head));
  }
  (void)d;
  return graph;
}

EncoderOutput TransformerEncoder::encode(const std::vector<int>& ids, int true_len, Mode mode,
                                         Rng* dropout_rng) const {
  check(store_->all_finite(), "encode: non-finite parameter detected");
  EncoderGraph graph = build(ids, true_len, mode, dropout_rng);
  EncoderOutput out;
  out.true_len = graph.true_len;
  for (const auto& e : graph.layer_embeddings) out.layer_embeddings.push_back(e->value);
  for (const auto& a : graph.layer_attention) out.layer_attention.push_back(a->value);
  return out;
}

std::pair<ag::NodePtr, ag::NodePtr> TransformerEncoder::last3_nodes(const EncoderGraph& graph) {
  const int layers = static_cast<int>(graph.layer_embeddings.size());
  check(layers >= 3, "last3_nodes: needs at least three layers");
  const size_t base = static_cast<size_t>(layers - 3);
  ag::NodePtr emb = ag::concat_cols(
      ag::concat_cols(graph.layer_embeddings[base], graph.layer_embeddings[base + 1]),
      graph.layer_embeddings[base + 2]);
  ag::NodePtr att = ag::concat_stacks(
      ag::concat_stacks(graph.layer_attention[base], graph.layer_attention[base + 1]),
      graph.layer_attention[base + 2]);
  return {emb, att};
}

}  // namespace cfd
