#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "easr/bench.hpp"
#include "easr/config.hpp"
#include "easr/cost_model.hpp"
#include "easr/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key = value config file");
  cmd->add_option("--out", flags.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", flags.seed, "training / model seed");
  cmd->add_option("--variant", flags.variant, "transformer or efficientasr")
      ->check(CLI::IsMember({"transformer", "efficientasr"}));
}

// Full-size model settings with a task that matches its vocabulary.
easr::ExperimentConfig full_scale_config() {
  easr::ExperimentConfig cfg;
  cfg.task.vocab_size = cfg.model.vocab_size;
  cfg.task.feature_dim = cfg.model.feature_dim;
  return cfg;
}

easr::ExperimentConfig resolve(const CommonFlags& flags, easr::ExperimentConfig fallback) {
  easr::ExperimentConfig cfg =
      flags.config_path.empty() ? std::move(fallback) : easr::ExperimentConfig::load(flags.config_path);
  if (flags.seed) cfg.train.seed = *flags.seed;
  if (flags.variant) cfg.model.variant = easr::parse_variant(*flags.variant);
  cfg.model.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EfficientASR reference implementation"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, cost_flags, bench_flags;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic train/dev splits as CSV");
  add_common(gen, gen_flags);

  auto* train = app.add_subcommand("train", "train on the synthetic task");
  add_common(train, train_flags);

  auto* eval = app.add_subcommand("eval", "greedy-decode the dev split with a checkpoint");
  add_common(eval, eval_flags);
  std::string checkpoint;
  eval->add_option("--checkpoint", checkpoint, "checkpoint path (default OUT/checkpoint.bin)");

  auto* cost = app.add_subcommand("cost-report", "parameter and FLOP report vs the baseline");
  add_common(cost, cost_flags);
  std::size_t cost_batch = 1, cost_steps = 100, cost_dec_steps = 0;
  cost->add_option("--batch", cost_batch, "batch size B")->capture_default_str();
  cost->add_option("--steps", cost_steps, "encoder length T")->capture_default_str();
  cost->add_option("--dec-steps", cost_dec_steps, "decoder length (0: same as T)")
      ->capture_default_str();

  auto* bench = app.add_subcommand("bench-memory", "peak live bytes vs sequence length");
  add_common(bench, bench_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto cfg = resolve(gen_flags, easr::copy_task_config());
      easr::run_gen_data(cfg, gen_flags.out);
      std::cout << "wrote train/dev CSVs to " << gen_flags.out << "\n";
    } else if (*train) {
      auto cfg = resolve(train_flags, easr::copy_task_config());
      cfg.validate();
      const auto result = easr::run_experiment(cfg, train_flags.out);
      std::cout << "steps: " << result.metrics.size() << "\n";
      if (!result.metrics.empty()) std::cout << "final loss: " << result.metrics.back().loss << "\n";
      if (result.final_dev_cer >= 0.0) std::cout << "dev CER: " << result.final_dev_cer << "\n";
      std::cout << "metrics: " << result.metrics_path << "\ncheckpoint: " << result.checkpoint_path
                << "\n";
    } else if (*eval) {
      if (checkpoint.empty()) checkpoint = (std::filesystem::path(eval_flags.out) / "checkpoint.bin").string();
      const auto result = easr::run_eval(checkpoint, eval_flags.out);
      std::cout << "dev CER: " << result.cer << " (" << result.exact << "/"
                << result.hypotheses.size() << " exact)\n";
    } else if (*cost) {
      const auto cfg = resolve(cost_flags, full_scale_config());
      easr::run_cost_report(cfg, cost_flags.out, cost_batch, cost_steps, cost_dec_steps);
      std::ifstream table(std::filesystem::path(cost_flags.out) / "cost_report.txt");
      std::cout << table.rdbuf();
    } else if (*bench) {
      const auto cfg = resolve(bench_flags, full_scale_config());
      const auto rows = easr::bench_memory(cfg.model, cfg.bench, cfg.train.seed);
      std::filesystem::create_directories(bench_flags.out);
      std::ofstream out(std::filesystem::path(bench_flags.out) / "bench_memory.csv");
      easr::write_bench_csv(out, rows);
      easr::write_bench_csv(std::cout, rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
