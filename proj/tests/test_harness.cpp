#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "easr/bench.hpp"
#include "easr/checkpoint.hpp"
#include "easr/dataset.hpp"
#include "easr/errors.hpp"
#include "easr/experiment.hpp"
#include "easr/tensor.hpp"

using namespace easr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("easr_h_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig quick_config() {
  ExperimentConfig c = copy_task_config();
  c.model.d_model = 16;
  c.model.d_ff = 32;
  c.model.heads = 2;
  c.task.train_size = 32;
  c.task.dev_size = 4;
  c.train.steps = 3;
  c.train.batch_size = 4;
  c.train.eval_every = 2;
  return c;
}

ModelConfig bench_model() {
  ModelConfig c;
  c.d_model = 16;
  c.d_ff = 64;
  c.heads = 2;
  c.enc_layers = 3;
  c.dec_layers = 2;
  c.i_enc = 3;
  c.i_dec = 2;
  c.window = 2;
  c.feature_dim = 4;
  c.vocab_size = 9;
  return c;
}

}  // namespace

TEST(Dataset, SameSeedSameBytes) {
  TaskConfig t;
  t.train_size = 20;
  t.dev_size = 5;
  const auto a = gen_dataset(t);
  const auto b = gen_dataset(t);
  ASSERT_EQ(a.train.size(), 20u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train.items[i].tokens, b.train.items[i].tokens);
    EXPECT_EQ(a.train.items[i].features, b.train.items[i].features);
  }
  t.seed = 2;
  const auto c = gen_dataset(t);
  EXPECT_NE(a.train.items[0].features, c.train.items[0].features);
}

TEST(Dataset, StructureAndZeroNoise) {
  TaskConfig t;
  t.noise_std = 0.0;
  t.train_size = 30;
  t.dev_size = 3;
  const auto data = gen_dataset(t);
  for (const auto& ex : data.train.items) {
    ASSERT_EQ(ex.tokens.size(), ex.frames_per_token.size());
    EXPECT_GE(ex.tokens.size(), t.min_tokens);
    EXPECT_LE(ex.tokens.size(), t.max_tokens);
    std::size_t total = 0;
    for (std::size_t k : ex.frames_per_token) {
      EXPECT_GE(k, t.min_frames);
      EXPECT_LE(k, t.max_frames);
      total += k;
    }
    EXPECT_EQ(ex.frames(), total);
    EXPECT_EQ(ex.features.size(), total * t.feature_dim);
    std::size_t frame = 0;
    for (std::size_t u = 0; u < ex.tokens.size(); ++u) {
      EXPECT_GE(ex.tokens[u], kFirstSymbol);
      EXPECT_LT(ex.tokens[u], static_cast<int>(t.vocab_size));
      if (u) EXPECT_NE(ex.tokens[u], ex.tokens[u - 1]);
      const auto first = ex.features.begin() + static_cast<std::ptrdiff_t>(frame * t.feature_dim);
      for (std::size_t k = 1; k < ex.frames_per_token[u]; ++k) {
        const auto other = first + static_cast<std::ptrdiff_t>(k * t.feature_dim);
        EXPECT_TRUE(std::equal(first, first + static_cast<std::ptrdiff_t>(t.feature_dim), other));
      }
      frame += ex.frames_per_token[u];
    }
  }
}

TEST(Dataset, RejectsDegenerateVocabulary) {
  TaskConfig t;
  t.vocab_size = 3;
  EXPECT_THROW(gen_dataset(t), ConfigError);
  t.vocab_size = 4;
  t.min_tokens = 1;
  t.max_tokens = 1;
  EXPECT_NO_THROW(gen_dataset(t));
}

TEST(Dataset, BatchesArePadded) {
  TaskConfig t;
  t.train_size = 6;
  t.dev_size = 1;
  const auto data = gen_dataset(t);
  const Batch b = make_batch(data.train, 0, 3);
  std::size_t longest = 0;
  for (std::size_t i = 0; i < 3; ++i) longest = std::max(longest, data.train.items[i].frames());
  EXPECT_EQ(b.features.shape(), (Shape{3, longest, t.feature_dim}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.feature_lengths[i], data.train.items[i].frames());
    EXPECT_EQ(b.targets[i], data.train.items[i].tokens);
  }
}

TEST(Experiment, ZeroStepsWritesHeaderAndInitialCheckpoint) {
  ExperimentConfig c = quick_config();
  c.train.steps = 0;
  const fs::path dir = temp_dir("zero");
  const auto r = run_experiment(c, dir.string());
  EXPECT_EQ(slurp(dir / "metrics.csv"), "step,loss,ce,ctc,lr,dev_cer\n");
  EXPECT_TRUE(r.metrics.empty());
  const auto loaded = load_checkpoint((dir / "checkpoint.bin").string());
  const Model init(c.model, c.train.seed);
  const auto a = init.parameters();
  const auto b = loaded.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor.to_vector(), b[i].tensor.to_vector());
  EXPECT_TRUE(fs::exists(dir / "cost_report.csv"));
  EXPECT_TRUE(fs::exists(dir / "cost_report.txt"));
  EXPECT_TRUE(fs::exists(dir / "config.txt"));
}

TEST(Experiment, SameSeedSameMetrics) {
  const ExperimentConfig c = quick_config();
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  const auto ra = run_experiment(c, a.string());
  run_experiment(c, b.string());
  const std::string text = slurp(a / "metrics.csv");
  EXPECT_EQ(text, slurp(b / "metrics.csv"));
  ASSERT_EQ(ra.metrics.size(), 3u);
  EXPECT_LT(ra.metrics[0].dev_cer, 0.0);
  EXPECT_GE(ra.metrics[1].dev_cer, 0.0);
  EXPECT_GE(ra.metrics[2].dev_cer, 0.0);
  const auto ev = run_eval(ra.checkpoint_path, a.string());
  EXPECT_NEAR(ev.cer, ra.final_dev_cer, 1e-12);
  EXPECT_TRUE(fs::exists(a / "eval.csv"));
}

TEST(Experiment, GenDataWritesCsv) {
  ExperimentConfig c = quick_config();
  const fs::path dir = temp_dir("gen");
  run_gen_data(c, dir.string());
  for (const char* f : {"train_tokens.csv", "train_features.csv", "dev_tokens.csv", "dev_features.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const std::string tokens = slurp(dir / "train_tokens.csv");
  EXPECT_EQ(tokens.substr(0, tokens.find('\n')), "id,num_tokens,num_frames,tokens,frames_per_token");
}

TEST(Bench, DeterministicAndWithinEnvelope) {
  BenchConfig bc;
  bc.lengths = {16, 32, 64};
  const auto a = bench_memory(bench_model(), bc, 3);
  const auto b = bench_memory(bench_model(), bc, 3);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].peak_bytes, b[i].peak_bytes);
    EXPECT_EQ(a[i].status, "ok");
    const double ratio = static_cast<double>(a[i].peak_bytes) / static_cast<double>(a[i].analytic_bytes);
    EXPECT_GT(ratio, 0.8);
    EXPECT_LT(ratio, 1.2);
  }
  EXPECT_EQ(a[0].model, "transformer");
  EXPECT_EQ(a[3].model, "efficientasr");
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(a[3 + k].peak_bytes, a[k].peak_bytes);
  std::ostringstream csv;
  write_bench_csv(csv, a);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "model,T,T_dec,params_bytes,peak_bytes,analytic_bytes,score_bytes,status");
}

TEST(Bench, MemoryLimitRecordsOomAndContinues) {
  BenchConfig bc;
  bc.lengths = {8, 512};
  const auto free_run = bench_memory(bench_model(), bc, 4);
  // room for the small length but not the long one
  bc.memory_limit_bytes = MemoryTracker::live_bytes() + free_run[0].peak_bytes + 4096;
  const auto rows = bench_memory(bench_model(), bc, 4);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].status, "ok");
  EXPECT_EQ(rows[1].status, "OOM");
  EXPECT_EQ(rows[3].status, "OOM");
  EXPECT_EQ(MemoryTracker::limit(), 0);
  EXPECT_THROW(bench_memory(bench_model(), BenchConfig{.lengths = {}}, 1), ConfigError);
}
