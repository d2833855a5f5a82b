// Command-line driver: train / eval / predict / analyze for the
// counterfactual detection and span extraction pipeline.

#include <CLI11.hpp>

#include "cfd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"counterfactual detection and antecedent/consequent span extraction"};
  app.require_subcommand(1);

  cfd::TrainOptions train_opts;
  uint64_t seed_value = 0;
  auto* train = app.add_subcommand("train", "train a stage (detect: stage 1, spans: stage 2)");
  train->add_option("task", train_opts.task, "detect | spans")->required();
  train->add_option("--config", train_opts.config_path, "run configuration file")->required();
  train->add_option("--from-checkpoint", train_opts.from_checkpoint,
                    "stage-1 checkpoint to fine-tune from (task = spans)");
  train->add_flag("--cold-start", train_opts.cold_start,
                  "train spans without a stage-1 checkpoint (ablation)");
  auto* seed_opt = train->add_option("--seed", seed_value, "override the config seed");
  train->add_option("--out", train_opts.out_dir,
                    "output directory for checkpoint and training log");

  cfd::EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on labelled data");
  eval->add_option("task", eval_opts.task, "detect | spans")->required();
  eval->add_option("--checkpoint", eval_opts.checkpoint_path, "checkpoint file")->required();
  eval->add_option("--data", eval_opts.data_path, "labelled CSV file")->required();
  eval->add_option("--out", eval_opts.out_path, "write the JSON report here");
  eval->add_option("--threshold", eval_opts.threshold, "decision threshold (default 0.5)");

  cfd::PredictOptions predict_opts;
  auto* predict = app.add_subcommand("predict", "write predictions for a statements CSV");
  predict->add_option("task", predict_opts.task, "detect | spans")->required();
  predict->add_option("--checkpoint", predict_opts.checkpoint_path, "checkpoint file")
      ->required();
  predict->add_option("--input", predict_opts.input_path, "input CSV of statements")
      ->required();
  predict->add_option("--output", predict_opts.output_path, "output CSV path")->required();
  predict->add_option("--threshold", predict_opts.threshold,
                      "decision threshold (default 0.5)");

  cfd::AnalyzeOptions analyze_opts;
  auto* analyze = app.add_subcommand(
      "analyze", "per-statement attention reports and heatmap exports");
  analyze->add_option("--checkpoint", analyze_opts.checkpoint_path, "checkpoint file")
      ->required();
  analyze->add_option("--input", analyze_opts.input_path, "input CSV of statements")
      ->required();
  analyze->add_option("--out-dir", analyze_opts.out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    if (seed_opt->count() > 0) train_opts.seed = seed_value;
    return cfd::run_train(train_opts);
  }
  if (eval->parsed()) return cfd::run_eval(eval_opts);
  if (predict->parsed()) return cfd::run_predict(predict_opts);
  if (analyze->parsed()) return cfd::run_analyze(analyze_opts);
  return 1;
}
