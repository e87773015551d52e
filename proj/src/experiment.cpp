#include "easr/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "easr/checkpoint.hpp"
#include "easr/cost_model.hpp"
#include "easr/errors.hpp"
#include "easr/metrics.hpp"
#include "easr/training.hpp"

namespace easr {
namespace {

namespace fs = std::filesystem;

std::string join_tokens(const std::vector<int>& seq) {
  std::string s;
  for (std::size_t i = 0; i < seq.size(); ++i) s += (i ? " " : "") + std::to_string(seq[i]);
  return s;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

void write_metric(std::ofstream& out, const MetricRow& r) {
  out << r.step << ',' << std::setprecision(10) << r.loss << ',' << r.ce << ',' << r.ctc << ','
      << r.lr << ',';
  if (r.dev_cer >= 0.0) out << r.dev_cer;
  out << '\n';
  out.flush();
}

// Epoch-wise shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t size, std::uint64_t seed) : order_(size), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle();
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    while (out.size() < count) {
      if (pos_ == order_.size()) shuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[rng_.next_u64() % i]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

void write_cost_files(const ModelConfig& cfg, const fs::path& dir, std::size_t B, std::size_t T,
                      std::size_t T_dec) {
  const CostReport report = model_cost_report(cfg, cfg.matched_baseline(), B, T, T_dec);
  auto csv = open_out(dir / "cost_report.csv");
  write_cost_csv(csv, report);
  auto txt = open_out(dir / "cost_report.txt");
  write_cost_table(txt, report);
}

}  // namespace

EvalResult evaluate(const Model& model, const Dataset& data, std::size_t max_len,
                    std::size_t batch_size) {
  EvalResult result;
  if (data.size() == 0) return result;
  if (max_len == 0) {
    for (const auto& ex : data.items) max_len = std::max(max_len, ex.tokens.size() + 2);
  }
  std::vector<std::vector<int>> refs;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const Batch batch = make_batch(data, begin, batch_size);
    auto hyps = model.greedy_decode(batch.features, batch.feature_lengths, max_len);
    for (std::size_t b = 0; b < hyps.size(); ++b) {
      if (hyps[b] == batch.targets[b]) ++result.exact;
      refs.push_back(batch.targets[b]);
      result.hypotheses.push_back(std::move(hyps[b]));
    }
  }
  result.cer = corpus_cer(result.hypotheses, refs);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    auto cfg_out = open_out(dir / "config.txt");
    cfg_out << config.to_text();
  }
  const SyntheticData data = gen_dataset(config.task);
  if (data.train.size() == 0) throw ConfigError("train_size must be positive");

  ExperimentResult result;
  result.metrics_path = (dir / "metrics.csv").string();
  result.checkpoint_path = (dir / "checkpoint.bin").string();
  auto metrics = open_out(result.metrics_path);
  metrics << "step,loss,ce,ctc,lr,dev_cer\n";
  metrics.flush();

  Model model(config.model, config.train.seed);
  Trainer trainer(model, config.train.seed ^ 0x5eedULL);
  BatchSampler sampler(data.train.size(), config.train.seed + 1);
  const TrainConfig& tc = config.train;
  const std::size_t max_len = tc.max_decode_len ? tc.max_decode_len : config.task.max_tokens + 2;
  for (std::size_t step = 1; step <= tc.steps; ++step) {
    const auto idx = sampler.next(std::min(tc.batch_size, data.train.size()));
    const Batch batch = make_batch(data.train, idx);
    MetricRow row;
    row.step = step;
    row.lr = warmup_lr(tc.lr, step - 1, tc.warmup_steps);
    const StepResult r = trainer.train_step(batch, row.lr);
    row.loss = r.loss;
    row.ce = r.ce;
    row.ctc = r.ctc;
    const bool eval_now = (tc.eval_every && step % tc.eval_every == 0) || step == tc.steps;
    if (eval_now && data.dev.size() > 0) {
      const EvalResult ev = evaluate(model, data.dev, max_len);
      row.dev_cer = ev.cer;
      result.final_dev_cer = ev.cer;
      result.dev_exact_fraction = static_cast<double>(ev.exact) / static_cast<double>(data.dev.size());
    }
    write_metric(metrics, row);
    result.metrics.push_back(row);
  }
  save_checkpoint(result.checkpoint_path, config, model);
  const std::size_t T = config.task.max_tokens * config.task.max_frames;
  write_cost_files(config.model, dir, 1, T, config.task.max_tokens + 1);
  return result;
}

EvalResult run_eval(const std::string& checkpoint_path, const std::string& out_dir) {
  const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  const SyntheticData data = gen_dataset(ckpt.config.task);
  const std::size_t max_len = ckpt.config.train.max_decode_len ? ckpt.config.train.max_decode_len
                                                               : ckpt.config.task.max_tokens + 2;
  EvalResult result = evaluate(ckpt.model, data.dev, max_len);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  auto out = open_out(dir / "eval.csv");
  out << "id,reference,hypothesis,cer\n" << std::setprecision(10);
  for (std::size_t i = 0; i < data.dev.size(); ++i) {
    const auto& ref = data.dev.items[i].tokens;
    out << i << ',' << join_tokens(ref) << ',' << join_tokens(result.hypotheses[i]) << ','
        << cer(result.hypotheses[i], ref) << '\n';
  }
  return result;
}

void run_gen_data(const ExperimentConfig& config, const std::string& out_dir) {
  const SyntheticData data = gen_dataset(config.task);
  write_dataset_csv(out_dir, "train", data.train);
  write_dataset_csv(out_dir, "dev", data.dev);
}

void run_cost_report(const ExperimentConfig& config, const std::string& out_dir, std::size_t batch,
                     std::size_t steps, std::size_t dec_steps) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_cost_files(config.model, dir, batch, steps, dec_steps);
}

}  // namespace easr
