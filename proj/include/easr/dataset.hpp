#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "easr/config.hpp"
#include "easr/model.hpp"

namespace easr {

struct Example {
  std::vector<int> tokens;
  std::vector<std::size_t> frames_per_token;
  std::vector<double> features;  // [frames, feature_dim] row-major

  std::size_t frames() const;
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<Example> items;

  std::size_t size() const { return items.size(); }
};

struct SyntheticData {
  std::vector<double> prototypes;  // [vocab_size, feature_dim]; reserved rows are zero
  Dataset train;
  Dataset dev;
};

// Random symbol sequences without immediate repeats. Each symbol emits
// min_frames..max_frames copies of its prototype vector plus Gaussian noise.
// Throws ConfigError when the vocabulary has no room for symbols.
SyntheticData gen_dataset(const TaskConfig& task);

// Zero-padded batch of the given items.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& data, std::size_t begin, std::size_t count);

// <prefix>_tokens.csv: id,num_tokens,num_frames,tokens,frames_per_token
// <prefix>_features.csv: id,frame,f0..f{F-1}
void write_dataset_csv(const std::string& dir, const std::string& prefix, const Dataset& data);

}  // namespace easr
