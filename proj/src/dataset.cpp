#include "easr/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "easr/errors.hpp"
#include "easr/random.hpp"

namespace easr {
namespace {

Dataset make_split(const TaskConfig& task, const std::vector<double>& prototypes, std::size_t size,
                   Rng rng) {
  const std::size_t F = task.feature_dim;
  const int last_symbol = static_cast<int>(task.vocab_size) - 1;
  Dataset data;
  data.feature_dim = F;
  data.items.reserve(size);
  for (std::size_t n = 0; n < size; ++n) {
    Example ex;
    const int length =
        rng.uniform_int(static_cast<int>(task.min_tokens), static_cast<int>(task.max_tokens));
    for (int t = 0; t < length; ++t) {
      int symbol = rng.uniform_int(kFirstSymbol, last_symbol);
      while (!ex.tokens.empty() && symbol == ex.tokens.back() && last_symbol > kFirstSymbol) {
        symbol = rng.uniform_int(kFirstSymbol, last_symbol);
      }
      ex.tokens.push_back(symbol);
      const auto frames = static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(task.min_frames), static_cast<int>(task.max_frames)));
      ex.frames_per_token.push_back(frames);
      const double* proto = prototypes.data() + static_cast<std::size_t>(symbol) * F;
      for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < F; ++c) {
          const double noise = task.noise_std > 0.0 ? task.noise_std * rng.normal() : 0.0;
          ex.features.push_back(proto[c] + noise);
        }
      }
    }
    data.items.push_back(std::move(ex));
  }
  return data;
}

}  // namespace

std::size_t Example::frames() const {
  std::size_t n = 0;
  for (auto f : frames_per_token) n += f;
  return n;
}

SyntheticData gen_dataset(const TaskConfig& task) {
  if (task.vocab_size < static_cast<std::size_t>(kFirstSymbol) + 1) {
    throw ConfigError("vocab_size must leave room for blank, sos, eos and at least one symbol");
  }
  if (task.feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (task.min_frames < 1 || task.min_frames > task.max_frames) {
    throw ConfigError("invalid frames_per_token range");
  }
  if (task.min_tokens < 1 || task.min_tokens > task.max_tokens) {
    throw ConfigError("invalid token length range");
  }
  if (task.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  Rng root(task.seed);
  Rng proto_rng = root.split();
  Rng train_rng = root.split();
  Rng dev_rng = root.split();

  SyntheticData out;
  out.prototypes.assign(task.vocab_size * task.feature_dim, 0.0);
  for (std::size_t v = kFirstSymbol; v < task.vocab_size; ++v) {
    for (std::size_t c = 0; c < task.feature_dim; ++c) {
      out.prototypes[v * task.feature_dim + c] = proto_rng.normal();
    }
  }
  out.train = make_split(task, out.prototypes, task.train_size, train_rng);
  out.dev = make_split(task, out.prototypes, task.dev_size, dev_rng);
  return out;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("empty batch");
  const std::size_t F = data.feature_dim;
  std::size_t T = 0;
  for (auto i : indices) {
    if (i >= data.size()) throw DimensionError("batch index out of range");
    T = std::max(T, data.items[i].frames());
  }
  const std::size_t B = indices.size();
  Buffer features(B * T * F, 0.0);
  Batch batch;
  for (std::size_t b = 0; b < B; ++b) {
    const Example& ex = data.items[indices[b]];
    std::copy(ex.features.begin(), ex.features.end(), features.begin() + b * T * F);
    batch.feature_lengths.push_back(ex.frames());
    batch.targets.push_back(ex.tokens);
  }
  batch.features = Tensor(Shape{B, T, F}, std::move(features));
  return batch;
}

Batch make_batch(const Dataset& data, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < std::min(begin + count, data.size()); ++i) idx.push_back(i);
  return make_batch(data, idx);
}

void write_dataset_csv(const std::string& dir, const std::string& prefix, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  std::ofstream tokens(base / (prefix + "_tokens.csv"));
  std::ofstream features(base / (prefix + "_features.csv"));
  if (!tokens || !features) throw FormatError("cannot write dataset CSVs under " + dir);
  tokens << "id,num_tokens,num_frames,tokens,frames_per_token\n";
  features << "id,frame";
  for (std::size_t c = 0; c < data.feature_dim; ++c) features << ",f" << c;
  features << "\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Example& ex = data.items[i];
    tokens << i << ',' << ex.tokens.size() << ',' << ex.frames() << ',';
    for (std::size_t t = 0; t < ex.tokens.size(); ++t) tokens << (t ? " " : "") << ex.tokens[t];
    tokens << ',';
    for (std::size_t t = 0; t < ex.frames_per_token.size(); ++t) {
      tokens << (t ? " " : "") << ex.frames_per_token[t];
    }
    tokens << '\n';
    for (std::size_t f = 0; f < ex.frames(); ++f) {
      features << i << ',' << f;
      for (std::size_t c = 0; c < data.feature_dim; ++c) {
        features << ',' << ex.features[f * data.feature_dim + c];
      }
      features << '\n';
    }
  }
}

}  // namespace easr
