#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "cfd/checkpoint.hpp"
#include "cfd/commands.hpp"
#include "cfd/config.hpp"
#include "cfd/model.hpp"
#include "test_support.hpp"

using namespace cfd;
namespace fs = std::filesystem;

namespace {

// Small but complete run configuration for fast end-to-end command tests.
std::string tiny_config_text(const std::string& detect_csv, const std::string& span_csv,
                             const std::string& out_base, uint64_t seed = 11) {
  return "# scaled-down run\n"
         "[paths]\n"
         "detect_data = \"" + detect_csv + "\"\n"
         "span_data = \"" + span_csv + "\"\n"
         "checkpoint_dir = \"" + out_base + "/ckpt\"\n"
         "report_dir = \"" + out_base + "/reports\"\n"
         "[model]\n"
         "num_layers = 3\n"
         "num_heads = 2\n"
         "model_dim = 16\n"
         "ffn_dim = 32\n"
         "max_len = 16\n"
         "dropout = 0.0\n"
         "attention_embed_dim = 16\n"
         "feature_dim = 16\n"
         "[vocab]\n"
         "min_freq = 1\n"
         "[train]\n"
         "learning_rate = 0.001\n"
         "batch_size = 8\n"
         "epochs_stage1 = 2\n"
         "epochs_stage2 = 2\n"
         "split_ratio = 0.75\n"
         "seed = " + std::to_string(seed) + "\n";
}

struct CliFixture {
  test::TempDir dir{"cli"};
  std::string config_path;

  CliFixture() {
    test::write_detection_csv(dir.file("detect.csv"), test::synthetic_detection_corpus());
    test::write_span_csv(dir.file("spans.csv"), test::synthetic_span_corpus());
    config_path = dir.file("run.toml");
    test::write_text(config_path,
                     tiny_config_text(dir.file("detect.csv"), dir.file("spans.csv"),
                                      dir.path()));
  }
};

}  // namespace

TEST_CASE("run config parsing and schema validation") {
  test::TempDir dir("cfg");
  const std::string path = dir.file("run.toml");

  SUBCASE("valid file with defaults") {
    test::write_text(path, "[train]\nseed = 7\n");
    const RunConfig cfg = parse_run_config(path);
    CHECK(cfg.train.seed == 7);
    CHECK(cfg.model.num_layers == 4);
    CHECK(cfg.split_ratio == doctest::Approx(0.9));
    CHECK(cfg.epochs_stage1 == 50);
    CHECK(cfg.epochs_stage2 == 100);
  }
  SUBCASE("seed is required") {
    test::write_text(path, "[model]\nnum_layers = 3\n");
    CHECK_THROWS_WITH_AS(parse_run_config(path), doctest::Contains("seed"),
                         std::runtime_error);
  }
  SUBCASE("unknown keys rejected with their location") {
    test::write_text(path, "[train]\nseed = 7\nlerning_rate = 0.1\n");
    CHECK_THROWS_WITH_AS(parse_run_config(path), doctest::Contains("unknown key"),
                         std::runtime_error);
  }
  SUBCASE("type errors rejected") {
    test::write_text(path, "[train]\nseed = 7\nlearning_rate = \"high\"\n");
    CHECK_THROWS(parse_run_config(path));
  }
  SUBCASE("structural invariants checked early") {
    test::write_text(path, "[train]\nseed = 7\n[model]\nnum_layers = 2\n");
    CHECK_THROWS_WITH_AS(parse_run_config(path), doctest::Contains("num_layers"),
                         std::runtime_error);
    test::write_text(path, "[train]\nseed = 7\nsplit_ratio = 1.5\n");
    CHECK_THROWS(parse_run_config(path));
    test::write_text(path, "[train]\nseed = 7\n[model]\nmodel_dim = 10\nnum_heads = 4\n");
    CHECK_THROWS(parse_run_config(path));
  }
  SUBCASE("comments and quoted hashes") {
    test::write_text(path, "[paths]\ndetect_data = \"a#b.csv\"  # trailing comment\n"
                           "[train]\nseed = 3\n");
    const RunConfig cfg = parse_run_config(path);
    CHECK(cfg.detect_data == "a#b.csv");
  }
}

TEST_CASE("train/eval/predict pipeline for detection") {
  CliFixture fx;
  TrainOptions train;
  train.task = "detect";
  train.config_path = fx.config_path;
  REQUIRE(run_train(train) == 0);

  const std::string ckpt = fx.dir.path() + "/ckpt/stage1.ckpt";
  CHECK(fs::exists(ckpt));
  const std::string log_path = fx.dir.path() + "/reports/train_detect_log.json";
  REQUIRE(fs::exists(log_path));
  const auto log = nlohmann::json::parse(test::read_text(log_path));
  CHECK(log["stage"] == "stage1");
  CHECK(log["epochs"].size() == 2);
  CHECK(log["epochs"][0].contains("train_loss"));
  CHECK(log["epochs"][0].contains("dev_f1"));

  SUBCASE("eval writes a report with the metric keys") {
    EvalOptions eval;
    eval.task = "detect";
    eval.checkpoint_path = ckpt;
    eval.data_path = fx.dir.file("detect.csv");
    eval.out_path = fx.dir.file("metrics.json");
    REQUIRE(run_eval(eval) == 0);
    const auto report = nlohmann::json::parse(test::read_text(eval.out_path));
    CHECK(report.contains("precision"));
    CHECK(report.contains("recall"));
    CHECK(report.contains("f1"));
    CHECK(report["task"] == "detect");
  }
  SUBCASE("eval task/stage mismatch is an error") {
    EvalOptions eval;
    eval.task = "spans";
    eval.checkpoint_path = ckpt;
    eval.data_path = fx.dir.file("spans.csv");
    CHECK(run_eval(eval) == 1);
  }
  SUBCASE("predict preserves rows and emits probabilities in (0,1)") {
    PredictOptions predict;
    predict.task = "detect";
    predict.checkpoint_path = ckpt;
    predict.input_path = fx.dir.file("detect.csv");
    predict.output_path = fx.dir.file("preds.csv");
    REQUIRE(run_predict(predict) == 0);
    const auto rows = read_csv(predict.output_path);
    REQUIRE(rows.size() == 33);  // header + 32 statements
    CHECK(rows[0] == std::vector<std::string>{"sentenceID", "predicted_label", "probability"});
    for (size_t r = 1; r < rows.size(); ++r) {
      const double p = std::stod(rows[r][2]);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      CHECK((rows[r][1] == "0" || rows[r][1] == "1"));
    }
  }
}

TEST_CASE("train spans enforces the two-stage protocol") {
  CliFixture fx;
  TrainOptions train;
  train.task = "spans";
  train.config_path = fx.config_path;
  // neither --from-checkpoint nor --cold-start
  CHECK(run_train(train) == 1);

  SUBCASE("cold start is allowed explicitly") {
    train.cold_start = true;
    REQUIRE(run_train(train) == 0);
    CHECK(fs::exists(fx.dir.path() + "/ckpt/stage2.ckpt"));
    const auto log = nlohmann::json::parse(
        test::read_text(fx.dir.path() + "/reports/train_spans_log.json"));
    CHECK(log["cold_start"] == true);
    CHECK(log["epochs"][0].contains("dev_smooth_l1"));
  }
  SUBCASE("warm start from stage 1 records matching digests") {
    TrainOptions detect;
    detect.task = "detect";
    detect.config_path = fx.config_path;
    REQUIRE(run_train(detect) == 0);
    train.from_checkpoint = fx.dir.path() + "/ckpt/stage1.ckpt";
    REQUIRE(run_train(train) == 0);
    const auto log = nlohmann::json::parse(
        test::read_text(fx.dir.path() + "/reports/train_spans_log.json"));
    CHECK(log["donor_base_digest"] == log["initial_base_digest"]);
    const Checkpoint ckpt = Checkpoint::load(fx.dir.path() + "/ckpt/stage2.ckpt");
    CHECK(ckpt.stage == "stage2");
  }
  SUBCASE("both flags together are rejected") {
    train.cold_start = true;
    train.from_checkpoint = "whatever.ckpt";
    CHECK(run_train(train) == 1);
  }
}

TEST_CASE("predict spans serializes absence as -1,-1") {
  test::TempDir dir("predict");
  // zeroed regression head guarantees (0,0,0,0) outputs -> absent consequent
  Vocab vocab = Vocab::from_tokens({"<pad>", "<unk>", "<cls>", "if", "i", "had"});
  ModelConfig mcfg;
  mcfg.num_layers = 3;
  mcfg.num_heads = 2;
  mcfg.model_dim = 8;
  mcfg.ffn_dim = 16;
  mcfg.max_len = 8;
  mcfg.dropout = 0.0;
  mcfg.attention_embed_dim = 8;
  mcfg.feature_dim = 8;
  mcfg.vocab_size = vocab.size();
  CfdModel model(mcfg, Stage::kStage2, 3);
  model.store().find("head.reg.weight")->value.fill(0.0);
  model.store().find("head.reg.bias")->value.fill(0.0);
  TrainConfig tcfg;
  Checkpoint ckpt = model.to_checkpoint(tcfg, vocab);
  ckpt.save(dir.file("stage2.ckpt"));

  test::write_text(dir.file("in.csv"), "sentenceID,sentence\nq1,if i had\nq2,had i\n");
  PredictOptions predict;
  predict.task = "spans";
  predict.checkpoint_path = dir.file("stage2.ckpt");
  predict.input_path = dir.file("in.csv");
  predict.output_path = dir.file("out.csv");
  REQUIRE(run_predict(predict) == 0);
  const auto rows = read_csv(predict.output_path);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "sentenceID");
  for (size_t r = 1; r < rows.size(); ++r) {
    CHECK(rows[r][1] == "0");   // antecedent collapses to (0,0)
    CHECK(rows[r][2] == "0");
    CHECK(rows[r][3] == "-1");  // absent consequent on disk
    CHECK(rows[r][4] == "-1");
  }
}

TEST_CASE("analyze writes one report and one heatmap per statement") {
  CliFixture fx;
  TrainOptions train;
  train.task = "spans";
  train.config_path = fx.config_path;
  train.cold_start = true;
  REQUIRE(run_train(train) == 0);

  test::write_text(fx.dir.file("an.csv"),
                   "sentenceID,sentence\n"
                   "a1,\"If I had a map, I would use it daily.\"\n"
                   "a2,\"The boat was cleaned by the crew.\"\n");
  AnalyzeOptions analyze;
  analyze.checkpoint_path = fx.dir.path() + "/ckpt/stage2.ckpt";
  analyze.input_path = fx.dir.file("an.csv");
  analyze.out_dir = fx.dir.path() + "/analysis";
  REQUIRE(run_analyze(analyze) == 0);

  for (const std::string id : {"a1", "a2"}) {
    CHECK(fs::exists(analyze.out_dir + "/" + id + "_report.txt"));
    CHECK(fs::exists(analyze.out_dir + "/" + id + "_attention.json"));
  }
  const auto doc = nlohmann::json::parse(
      test::read_text(analyze.out_dir + "/a1_attention.json"));
  CHECK(doc["tokens"][0] == "<cls>");
  CHECK(doc["heads"][0]["head"] == 1);  // 1-based indexing

  const std::string report = test::read_text(analyze.out_dir + "/a1_report.txt");
  CHECK(report.find("statement: a1") != std::string::npos);
  CHECK(report.find("heads") != std::string::npos);

  SUBCASE("outputs are byte-deterministic") {
    const std::string before = test::read_text(analyze.out_dir + "/a1_attention.json");
    AnalyzeOptions again = analyze;
    again.out_dir = fx.dir.path() + "/analysis2";
    REQUIRE(run_analyze(again) == 0);
    CHECK(test::read_text(again.out_dir + "/a1_attention.json") == before);
    CHECK(test::read_text(again.out_dir + "/a1_report.txt") ==
          test::read_text(analyze.out_dir + "/a1_report.txt"));
  }
}
