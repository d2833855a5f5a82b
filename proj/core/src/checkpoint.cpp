#include "cfd/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace cfd {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'C', 'K'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  check(in.good(), "checkpoint: truncated file");
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_pod<uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  check(in.good(), "checkpoint: truncated string");
  return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(t.rank()));
  for (int d : t.dims()) write_pod<uint32_t>(out, static_cast<uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * static_cast<int64_t>(sizeof(double))));
}

Tensor read_tensor(std::istream& in) {
  const auto rank = read_pod<uint32_t>(in);
  check(rank <= 4, "checkpoint: unsupported tensor rank");
  std::vector<int> dims(rank);
  for (auto& d : dims) d = static_cast<int>(read_pod<uint32_t>(in));
  Tensor t(dims);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * static_cast<int64_t>(sizeof(double))));
  check(in.good(), "checkpoint: truncated tensor data");
  return t;
}

void write_model_config(std::ostream& out, const ModelConfig& m) {
  write_pod<int32_t>(out, m.num_layers);
  write_pod<int32_t>(out, m.num_heads);
  write_pod<int32_t>(out, m.model_dim);
  write_pod<int32_t>(out, m.ffn_dim);
  write_pod<int32_t>(out, m.max_len);
  write_pod<double>(out, m.dropout);
  write_pod<int32_t>(out, m.conv1_channels);
  write_pod<int32_t>(out, m.conv2_channels);
  write_pod<int32_t>(out, m.conv_kernel);
  write_pod<int32_t>(out, m.conv_stride);
  write_pod<int32_t>(out, m.attention_embed_dim);
  write_pod<int32_t>(out, m.feature_dim);
  write_pod<int32_t>(out, m.vocab_size);
}

ModelConfig read_model_config(std::istream& in) {
  ModelConfig m;
  m.num_layers = read_pod<int32_t>(in);
  m.num_heads = read_pod<int32_t>(in);
  m.model_dim = read_pod<int32_t>(in);
  m.ffn_dim = read_pod<int32_t>(in);
  m.max_len = read_pod<int32_t>(in);
  m.dropout = read_pod<double>(in);
  m.conv1_channels = read_pod<int32_t>(in);
  m.conv2_channels = read_pod<int32_t>(in);
  m.conv_kernel = read_pod<int32_t>(in);
  m.conv_stride = read_pod<int32_t>(in);
  m.attention_embed_dim = read_pod<int32_t>(in);
  m.feature_dim = read_pod<int32_t>(in);
  m.vocab_size = read_pod<int32_t>(in);
  return m;
}

void write_train_config(std::ostream& out, const TrainConfig& t) {
  write_pod<double>(out, t.learning_rate);
  write_pod<double>(out, t.weight_decay);
  write_pod<double>(out, t.beta1);
  write_pod<double>(out, t.beta2);
  write_pod<double>(out, t.adam_eps);
  write_pod<int32_t>(out, t.batch_size);
  write_pod<int32_t>(out, t.epochs);
  write_pod<uint64_t>(out, t.seed);
  write_string(out, t.early_stop_metric);
}

TrainConfig read_train_config(std::istream& in) {
  TrainConfig t;
  t.learning_rate = read_pod<double>(in);
  t.weight_decay = read_pod<double>(in);
  t.beta1 = read_pod<double>(in);
  t.beta2 = read_pod<double>(in);
  t.adam_eps = read_pod<double>(in);
  t.batch_size = read_pod<int32_t>(in);
  t.epochs = read_pod<int32_t>(in);
  t.seed = read_pod<uint64_t>(in);
  t.early_stop_metric = read_string(in);
  return t;
}

void fnv_mix(uint64_t& hash, const void* bytes, size_t len) {
  const auto* b = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < len; ++i) {
    hash ^= b[i];
    hash *= 1099511628211ULL;
  }
}

}  // namespace

uint64_t Checkpoint::base_digest() const {
  uint64_t hash = 14695981039346656037ULL;
  for (const auto& [name, tensor] : tensors) {
    if (name.rfind("head.", 0) == 0) continue;
    fnv_mix(hash, name.data(), name.size());
    for (int d : tensor.dims()) fnv_mix(hash, &d, sizeof(d));
    fnv_mix(hash, tensor.data(), static_cast<size_t>(tensor.size()) * sizeof(double));
  }
  return hash;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), "checkpoint: cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kFormatVersion);
  write_string(out, stage);
  write_model_config(out, model);
  write_train_config(out, train);
  write_pod<uint32_t>(out, static_cast<uint32_t>(vocab_tokens.size()));
  for (const auto& tok : vocab_tokens) write_string(out, tok);
  write_pod<uint32_t>(out, static_cast<uint32_t>(metric_history.size()));
  for (double v : metric_history) write_pod<double>(out, v);
  write_pod<int32_t>(out, best_epoch);
  write_pod<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    write_string(out, name);
    write_tensor(out, tensor);
  }
  check(out.good(), "checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "checkpoint: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  check(in.good() && std::memcmp(magic, kMagic, 4) == 0,
        "checkpoint: not a checkpoint file: " + path);
  const auto version = read_pod<uint32_t>(in);
  check(version == kFormatVersion,
        "checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.stage = read_string(in);
  check(ckpt.stage == "stage1" || ckpt.stage == "stage2",
        "checkpoint: unknown stage tag '" + ckpt.stage + "'");
  ckpt.model = read_model_config(in);
  ckpt.train = read_train_config(in);
  const auto vocab_n = read_pod<uint32_t>(in);
  ckpt.vocab_tokens.reserve(vocab_n);
  for (uint32_t i = 0; i < vocab_n; ++i) ckpt.vocab_tokens.push_back(read_string(in));
  const auto hist_n = read_pod<uint32_t>(in);
  ckpt.metric_history.reserve(hist_n);
  for (uint32_t i = 0; i < hist_n; ++i) ckpt.metric_history.push_back(read_pod<double>(in));
  ckpt.best_epoch = read_pod<int32_t>(in);
  const auto tensor_n = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < tensor_n; ++i) {
    std::string name = read_string(in);
    ckpt.tensors[name] = read_tensor(in);
  }
  ckpt.model.validate();
  check(static_cast<int>(ckpt.vocab_tokens.size()) == ckpt.model.vocab_size,
        "checkpoint: vocabulary size mismatch");
  return ckpt;
}

}  // namespace cfd
