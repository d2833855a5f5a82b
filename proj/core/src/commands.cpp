#include "cfd/commands.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "cfd/analysis.hpp"
#include "cfd/config.hpp"
#include "cfd/losses.hpp"
#include "cfd/metrics.hpp"
#include "cfd/model.hpp"
#include "cfd/spans.hpp"
#include "cfd/trainer.hpp"

namespace fs = std::filesystem;

namespace cfd {

namespace {

// Shortest round-trip decimal representation.
std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc(), "fmt_double: conversion failed");
  return std::string(buf, ptr);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), "cannot write " + path);
  out << content;
  check(out.good(), "write failed for " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  check(!ec && fs::is_directory(dir), "cannot create directory " + dir);
}

std::string sanitize_id(const std::string& id) {
  std::string out;
  for (char c : id) {
    const bool ok = (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') ||
                    (c >= 'a' && c <= 'z') || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out.empty() ? "statement" : out;
}

// Statements from any CSV that carries sentenceID and sentence columns.
std::vector<Statement> read_statements(const std::string& path) {
  const auto rows = read_csv(path);
  check(!rows.empty(), "empty file: " + path);
  int id_col = -1, text_col = -1;
  for (size_t i = 0; i < rows[0].size(); ++i) {
    if (rows[0][i] == "sentenceID") id_col = static_cast<int>(i);
    if (rows[0][i] == "sentence") text_col = static_cast<int>(i);
  }
  check(id_col >= 0 && text_col >= 0,
        "input CSV needs sentenceID and sentence columns: " + path);
  std::vector<Statement> out;
  out.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    check(static_cast<int>(rows[r].size()) > std::max(id_col, text_col),
          "row " + std::to_string(r + 1) + ": too few fields");
    const std::string& text = rows[r][static_cast<size_t>(text_col)];
    const int length = count_code_points(text);
    check(length >= 1, "row " + std::to_string(r + 1) + ": empty sentence");
    out.push_back(Statement{rows[r][static_cast<size_t>(id_col)], text, length});
  }
  return out;
}

EncodedSequence encode_statement(const Statement& st, const Vocab& vocab, int max_len) {
  return encode_ids(tokenize(st.text), vocab, max_len);
}

Vocab build_vocab_from(const std::vector<Statement>& statements, int min_freq, int max_size) {
  std::vector<std::vector<TokenSpan>> docs;
  docs.reserve(statements.size());
  for (const auto& st : statements) docs.push_back(tokenize(st.text));
  return Vocab::build(docs, min_freq, max_size);
}

nlohmann::json epochs_json(const std::vector<EpochRecord>& epochs,
                           const std::string& metric_key) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rec : epochs) {
    arr.push_back({{"epoch", rec.epoch},
                   {"train_loss", rec.train_loss},
                   {metric_key, rec.dev_metric}});
  }
  return arr;
}

struct LoadedModel {
  Checkpoint ckpt;
  std::unique_ptr<CfdModel> model;
  Vocab vocab;
};

LoadedModel load_model(const std::string& checkpoint_path) {
  LoadedModel lm;
  lm.ckpt = Checkpoint::load(checkpoint_path);
  const Stage stage = lm.ckpt.stage == "stage1" ? Stage::kStage1 : Stage::kStage2;
  lm.model = std::make_unique<CfdModel>(lm.ckpt.model, stage, lm.ckpt.train.seed);
  lm.model->load_tensors(lm.ckpt, /*include_head=*/true);
  lm.vocab = Vocab::from_tokens(lm.ckpt.vocab_tokens);
  return lm;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int train_detect(const RunConfig& cfg, const std::string& ckpt_dir,
                 const std::string& report_dir) {
  check(!cfg.detect_data.empty(), "config: [paths] detect_data is required for train detect");
  const auto data = load_detection_data(cfg.detect_data);
  auto [train_rows, dev_rows] = split(data, cfg.split_ratio, cfg.train.seed);

  std::vector<Statement> train_statements;
  train_statements.reserve(train_rows.size());
  for (const auto& [st, label] : train_rows) train_statements.push_back(st);
  const Vocab vocab = build_vocab_from(train_statements, cfg.vocab_min_freq, cfg.vocab_max_size);

  ModelConfig mcfg = cfg.model;
  mcfg.vocab_size = vocab.size();
  TrainConfig tcfg = cfg.train;
  tcfg.epochs = cfg.epochs_stage1;

  auto encode_all = [&](const std::vector<std::pair<Statement, BinaryLabel>>& rows) {
    std::vector<DetectSample> samples;
    samples.reserve(rows.size());
    for (const auto& [st, label] : rows) {
      samples.push_back(DetectSample{encode_statement(st, vocab, mcfg.max_len), label.value});
    }
    return samples;
  };
  const auto train_samples = encode_all(train_rows);
  const auto dev_samples = encode_all(dev_rows);

  TrainResult result = train_stage1(train_samples, dev_samples, mcfg, tcfg, vocab,
                                    cfg.threshold);

  const std::string ckpt_path = (fs::path(ckpt_dir) / "stage1.ckpt").string();
  result.best.save(ckpt_path);

  nlohmann::json log{{"stage", "stage1"},
                     {"task", "detect"},
                     {"seed", cfg.train.seed},
                     {"train_size", train_samples.size()},
                     {"dev_size", dev_samples.size()},
                     {"epochs", epochs_json(result.epochs, "dev_f1")},
                     {"best_epoch", result.best_epoch},
                     {"best_dev_f1", result.best_metric},
                     {"checkpoint", ckpt_path}};
  write_file((fs::path(report_dir) / "train_detect_log.json").string(), log.dump(2) + "\n");
  std::cout << "stage-1 training done: best dev F1 " << fmt_double(result.best_metric)
            << " at epoch " << result.best_epoch << "; checkpoint " << ckpt_path << "\n";
  return 0;
}

int train_spans(const RunConfig& cfg, const TrainOptions& options, const std::string& ckpt_dir,
                const std::string& report_dir) {
  check(!cfg.span_data.empty(), "config: [paths] span_data is required for train spans");
  check(!options.from_checkpoint.empty() || options.cold_start,
        "train spans needs --from-checkpoint <stage1.ckpt> (two-stage protocol: the base is "
        "first trained on detection), or --cold-start to skip the transfer explicitly");
  check(options.from_checkpoint.empty() || !options.cold_start,
        "train spans: --from-checkpoint and --cold-start are mutually exclusive");

  const auto data = load_span_data(cfg.span_data);
  auto [train_rows, dev_rows] = split(data, cfg.split_ratio, cfg.train.seed);

  Checkpoint donor;
  const Checkpoint* donor_ptr = nullptr;
  Vocab vocab;
  ModelConfig mcfg = cfg.model;
  if (!options.from_checkpoint.empty()) {
    donor = Checkpoint::load(options.from_checkpoint);
    check(donor.stage == "stage1",
          "train spans: --from-checkpoint must name a stage-1 checkpoint");
    vocab = Vocab::from_tokens(donor.vocab_tokens);
    mcfg.vocab_size = donor.model.vocab_size;
    donor_ptr = &donor;
  } else {
    std::vector<Statement> train_statements;
    train_statements.reserve(train_rows.size());
    for (const auto& [st, quad] : train_rows) train_statements.push_back(st);
    vocab = build_vocab_from(train_statements, cfg.vocab_min_freq, cfg.vocab_max_size);
    mcfg.vocab_size = vocab.size();
  }
  TrainConfig tcfg = cfg.train;
  tcfg.epochs = cfg.epochs_stage2;

  auto encode_all = [&](const std::vector<std::pair<Statement, SpanQuad>>& rows) {
    std::vector<SpanSample> samples;
    samples.reserve(rows.size());
    for (const auto& [st, quad] : rows) {
      SpanSample s;
      s.seq = encode_statement(st, vocab, mcfg.max_len);
      s.target = normalize(quad, st.length);
      s.gold = quad;
      s.length = st.length;
      samples.push_back(std::move(s));
    }
    return samples;
  };
  const auto train_samples = encode_all(train_rows);
  const auto dev_samples = encode_all(dev_rows);

  TrainResult result = train_stage2(donor_ptr, train_samples, dev_samples, mcfg, tcfg, vocab);

  const std::string ckpt_path = (fs::path(ckpt_dir) / "stage2.ckpt").string();
  result.best.save(ckpt_path);

  nlohmann::json log{{"stage", "stage2"},
                     {"task", "spans"},
                     {"seed", cfg.train.seed},
                     {"train_size", train_samples.size()},
                     {"dev_size", dev_samples.size()},
                     {"cold_start", donor_ptr == nullptr},
                     {"epochs", epochs_json(result.epochs, "dev_smooth_l1")},
                     {"best_epoch", result.best_epoch},
                     {"best_dev_smooth_l1", result.best_metric},
                     {"checkpoint", ckpt_path}};
  if (donor_ptr != nullptr) {
    std::ostringstream dd, di;
    dd << std::hex << result.donor_base_digest;
    di << std::hex << result.initial_base_digest;
    log["donor_base_digest"] = dd.str();
    log["initial_base_digest"] = di.str();
  }
  write_file((fs::path(report_dir) / "train_spans_log.json").string(), log.dump(2) + "\n");
  std::cout << "stage-2 training done: best dev Smooth L1 " << fmt_double(result.best_metric)
            << " at epoch " << result.best_epoch << "; checkpoint " << ckpt_path << "\n";
  return 0;
}

}  // namespace

int run_train(const TrainOptions& options) {
  return guarded([&]() -> int {
    check(options.task == "detect" || options.task == "spans",
          "train: task must be 'detect' or 'spans'");
    RunConfig cfg = parse_run_config(options.config_path);
    if (options.seed) cfg.train.seed = *options.seed;
    const std::string ckpt_dir =
        options.out_dir.empty() ? cfg.checkpoint_dir : options.out_dir;
    const std::string report_dir = options.out_dir.empty() ? cfg.report_dir : options.out_dir;
    ensure_dir(ckpt_dir);
    ensure_dir(report_dir);
    if (options.task == "detect") {
      check(options.from_checkpoint.empty() && !options.cold_start,
            "train detect does not take --from-checkpoint/--cold-start");
      return train_detect(cfg, ckpt_dir, report_dir);
    }
    return train_spans(cfg, options, ckpt_dir, report_dir);
  });
}

int run_eval(const EvalOptions& options) {
  return guarded([&]() -> int {
    check(options.task == "detect" || options.task == "spans",
          "eval: task must be 'detect' or 'spans'");
    LoadedModel lm = load_model(options.checkpoint_path);
    nlohmann::json report;
    std::ostringstream text;
    if (options.task == "detect") {
      check(lm.ckpt.stage == "stage1",
            "eval detect requires a stage-1 checkpoint, got " + lm.ckpt.stage);
      const auto data = load_detection_data(options.data_path);
      std::vector<std::pair<int, int>> pairs;
      pairs.reserve(data.size());
      for (const auto& [st, label] : data) {
        const double p = lm.model->predict_probability(
            encode_statement(st, lm.vocab, lm.ckpt.model.max_len));
        pairs.emplace_back(ClassifierHead::decide(p, options.threshold), label.value);
      }
      const BinaryMetrics m = binary_prf(pairs);
      report = {{"task", "detect"},      {"n", pairs.size()}, {"precision", m.precision},
                {"recall", m.recall},    {"f1", m.f1},        {"tp", m.tp},
                {"fp", m.fp},            {"fn", m.fn},        {"tn", m.tn},
                {"threshold", options.threshold}};
      text << "task: detect\nn: " << pairs.size() << "\nprecision: " << fmt_double(m.precision)
           << "\nrecall: " << fmt_double(m.recall) << "\nf1: " << fmt_double(m.f1)
           << "\ntp: " << m.tp << "\nfp: " << m.fp << "\nfn: " << m.fn << "\ntn: " << m.tn
           << "\n";
    } else {
      check(lm.ckpt.stage == "stage2",
            "eval spans requires a stage-2 checkpoint, got " + lm.ckpt.stage);
      const auto data = load_span_data(options.data_path);
      std::vector<SpanPair> pairs;
      pairs.reserve(data.size());
      for (const auto& [st, gold] : data) {
        const NormalizedSpanQuad q = lm.model->predict_quad(
            encode_statement(st, lm.vocab, lm.ckpt.model.max_len));
        pairs.push_back(SpanPair{denormalize(q, st.length), gold, st.length});
      }
      const SpanMetrics m = span_prf(pairs);
      report = {{"task", "spans"},        {"n", pairs.size()},
                {"precision", m.precision}, {"recall", m.recall},
                {"f1", m.f1},             {"exact_match", m.exact_match}};
      text << "task: spans\nn: " << pairs.size() << "\nprecision: " << fmt_double(m.precision)
           << "\nrecall: " << fmt_double(m.recall) << "\nf1: " << fmt_double(m.f1)
           << "\nexact_match: " << fmt_double(m.exact_match) << "\n";
    }
    std::cout << text.str();
    if (!options.out_path.empty()) {
      write_file(options.out_path, report.dump(2) + "\n");
    }
    return 0;
  });
}

int run_predict(const PredictOptions& options) {
  return guarded([&]() -> int {
    check(options.task == "detect" || options.task == "spans",
          "predict: task must be 'detect' or 'spans'");
    LoadedModel lm = load_model(options.checkpoint_path);
    const auto statements = read_statements(options.input_path);
    std::ostringstream out;
    if (options.task == "detect") {
      check(lm.ckpt.stage == "stage1",
            "predict detect requires a stage-1 checkpoint, got " + lm.ckpt.stage);
      out << "sentenceID,predicted_label,probability\n";
      for (const auto& st : statements) {
        const double p = lm.model->predict_probability(
            encode_statement(st, lm.vocab, lm.ckpt.model.max_len));
        out << csv_quote(st.id) << "," << ClassifierHead::decide(p, options.threshold) << ","
            << fmt_double(p) << "\n";
      }
    } else {
      check(lm.ckpt.stage == "stage2",
            "predict spans requires a stage-2 checkpoint, got " + lm.ckpt.stage);
      out << "sentenceID,antecedent_startid,antecedent_endid,consequent_startid,"
             "consequent_endid\n";
      for (const auto& st : statements) {
        const NormalizedSpanQuad q = lm.model->predict_quad(
            encode_statement(st, lm.vocab, lm.ckpt.model.max_len));
        const SpanQuad quad = denormalize(q, st.length);
        out << csv_quote(st.id) << "," << quad.antecedent_start << "," << quad.antecedent_end
            << ",";
        if (quad.consequent_present) {
          out << quad.consequent_start << "," << quad.consequent_end;
        } else {
          out << "-1,-1";
        }
        out << "\n";
      }
    }
    write_file(options.output_path, out.str());
    std::cout << "wrote " << statements.size() << " predictions to " << options.output_path
              << "\n";
    return 0;
  });
}

int run_analyze(const AnalyzeOptions& options) {
  return guarded([&]() -> int {
    LoadedModel lm = load_model(options.checkpoint_path);
    const auto statements = read_statements(options.input_path);
    ensure_dir(options.out_dir);
    const int max_len = lm.ckpt.model.max_len;

    for (const auto& st : statements) {
      const auto tokens = tokenize(st.text);
      const EncodedSequence seq = encode_statement(st, lm.vocab, max_len);
      const EncoderOutput enc = lm.model->encode_eval(seq);
      const Tensor& final_att = enc.layer_attention.back();

      const Tensor scores = received_attention(final_att, seq.true_len);
      const auto heads_by_position = top_heads(scores);

      // Position 0 is the sequence-start marker; tokens may have been
      // truncated by the encoder.
      const int used_tokens = seq.true_len - 1;
      std::vector<TokenSpan> used(tokens.begin(), tokens.begin() + used_tokens);
      std::vector<std::vector<int>> token_heads(heads_by_position.begin() + 1,
                                                heads_by_position.end());
      const auto tags = lexical_tags(used);

      std::optional<SpanQuad> predicted;
      if (lm.ckpt.stage == "stage2") {
        predicted = denormalize(lm.model->predict_quad(seq), st.length);
      }
      const AnnotatedReport report = annotate(st, used, token_heads, tags, predicted);

      const std::string base = sanitize_id(st.id);
      write_file((fs::path(options.out_dir) / (base + "_report.txt")).string(),
                 report.rendered);

      // Trimmed stack for the heatmap export: unpadded positions only.
      Tensor trimmed({final_att.dim(0), seq.true_len, seq.true_len});
      for (int h = 0; h < final_att.dim(0); ++h)
        for (int i = 0; i < seq.true_len; ++i)
          for (int j = 0; j < seq.true_len; ++j) trimmed.at(h, i, j) = final_att.at(h, i, j);
      std::vector<std::string> export_tokens{"<cls>"};
      for (const auto& tok : used) export_tokens.push_back(tok.surface);
      export_attention(trimmed, export_tokens,
                       (fs::path(options.out_dir) / (base + "_attention.json")).string());
    }
    std::cout << "analyzed " << statements.size() << " statements into " << options.out_dir
              << "\n";
    return 0;
  });
}

}  // namespace cfd
