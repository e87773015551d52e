#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace easr {

enum class Variant { kTransformer, kEfficientAsr };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Reserved token ids. Symbols start at kFirstSymbol.
inline constexpr int kBlankId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kFirstSymbol = 3;

struct ModelConfig {
  Variant variant = Variant::kEfficientAsr;
  std::size_t d_model = 256;
  std::size_t d_ff = 2048;
  std::size_t heads = 4;
  std::size_t enc_layers = 6;
  std::size_t dec_layers = 6;
  std::size_t i_enc = 3;
  std::size_t i_dec = 2;
  std::size_t n_chunks = 2;
  std::size_t window = 6;
  std::size_t feature_dim = 80;
  std::size_t vocab_size = 4233;
  double alpha_ce = 0.7;
  double alpha_ctc = 0.3;
  double label_smoothing = 0.1;
  double dropout = 0.1;
  bool share_raw_scores = false;

  // Throws ConfigError / DivisibilityError on any violated constraint.
  void validate() const;

  // Vanilla Transformer with the same widths, depths and vocabulary.
  ModelConfig matched_baseline() const;
};

// Flat `key = value` text. Blank lines and lines starting with '#' are
// ignored. Each key may appear once.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::map<std::string, std::string> values_;
};

struct TaskConfig {
  std::size_t vocab_size = 16;
  std::size_t feature_dim = 16;
  std::size_t min_frames = 2;
  std::size_t max_frames = 4;
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 10;
  double noise_std = 0.1;
  std::uint64_t seed = 1;
  std::size_t train_size = 2000;
  std::size_t dev_size = 100;
};

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::size_t warmup_steps = 50;
  std::size_t eval_every = 100;
  std::size_t max_decode_len = 0;  // 0: task max_tokens + 2
  std::uint64_t seed = 1;
};

struct BenchConfig {
  std::vector<std::size_t> lengths{256, 512, 1024, 2048};
  std::size_t decoder_ratio = 4;  // decoder steps = T / ratio
  std::int64_t memory_limit_bytes = 0;
};

struct ExperimentConfig {
  ModelConfig model;
  TaskConfig task;
  TrainConfig train;
  BenchConfig bench;

  // Unknown keys and malformed values raise ConfigError.
  static ExperimentConfig from_key_values(const KeyValueConfig& kv);
  static ExperimentConfig load(const std::string& path);
  KeyValueConfig to_key_values() const;
  std::string to_text() const;
  void validate() const;
};

// Desk-scale copy-task configuration used by the tests and the default CLI.
ExperimentConfig copy_task_config();

}  // namespace easr
