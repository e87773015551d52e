#include "easr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "easr/errors.hpp"

namespace easr {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_integer(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field size_field(T ExperimentConfig::*group, std::size_t T::*member, const std::string& key) {
  return {[=](ExperimentConfig& c, const std::string& v) {
            (c.*group).*member = parse_integer<std::size_t>(key, v);
          },
          [=](const ExperimentConfig& c) { return std::to_string((c.*group).*member); }};
}

template <class T>
Field u64_field(T ExperimentConfig::*group, std::uint64_t T::*member, const std::string& key) {
  return {[=](ExperimentConfig& c, const std::string& v) {
            (c.*group).*member = parse_integer<std::uint64_t>(key, v);
          },
          [=](const ExperimentConfig& c) { return std::to_string((c.*group).*member); }};
}

template <class T>
Field double_field(T ExperimentConfig::*group, double T::*member, const std::string& key) {
  return {[=](ExperimentConfig& c, const std::string& v) {
            (c.*group).*member = parse_double(key, v);
          },
          [=](const ExperimentConfig& c) { return format_double((c.*group).*member); }};
}

const std::map<std::string, Field>& fields() {
  using E = ExperimentConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["variant"] = {[](E& c, const std::string& v) { c.model.variant = parse_variant(v); },
                    [](const E& c) { return variant_name(c.model.variant); }};
    t["d_model"] = size_field(&E::model, &ModelConfig::d_model, "d_model");
    t["d_ff"] = size_field(&E::model, &ModelConfig::d_ff, "d_ff");
    t["heads"] = size_field(&E::model, &ModelConfig::heads, "heads");
    t["enc_layers"] = size_field(&E::model, &ModelConfig::enc_layers, "enc_layers");
    t["dec_layers"] = size_field(&E::model, &ModelConfig::dec_layers, "dec_layers");
    t["i_enc"] = size_field(&E::model, &ModelConfig::i_enc, "i_enc");
    t["i_dec"] = size_field(&E::model, &ModelConfig::i_dec, "i_dec");
    t["n_chunks"] = size_field(&E::model, &ModelConfig::n_chunks, "n_chunks");
    t["window"] = size_field(&E::model, &ModelConfig::window, "window");
    t["feature_dim"] = size_field(&E::model, &ModelConfig::feature_dim, "feature_dim");
    t["vocab_size"] = size_field(&E::model, &ModelConfig::vocab_size, "vocab_size");
    t["alpha_ce"] = double_field(&E::model, &ModelConfig::alpha_ce, "alpha_ce");
    t["alpha_ctc"] = double_field(&E::model, &ModelConfig::alpha_ctc, "alpha_ctc");
    t["label_smoothing"] = double_field(&E::model, &ModelConfig::label_smoothing, "label_smoothing");
    t["dropout"] = double_field(&E::model, &ModelConfig::dropout, "dropout");
    t["share_raw_scores"] = {
        [](E& c, const std::string& v) { c.model.share_raw_scores = parse_bool("share_raw_scores", v); },
        [](const E& c) { return std::string(c.model.share_raw_scores ? "true" : "false"); }};

    t["min_frames"] = size_field(&E::task, &TaskConfig::min_frames, "min_frames");
    t["max_frames"] = size_field(&E::task, &TaskConfig::max_frames, "max_frames");
    t["min_tokens"] = size_field(&E::task, &TaskConfig::min_tokens, "min_tokens");
    t["max_tokens"] = size_field(&E::task, &TaskConfig::max_tokens, "max_tokens");
    t["noise_std"] = double_field(&E::task, &TaskConfig::noise_std, "noise_std");
    t["data_seed"] = u64_field(&E::task, &TaskConfig::seed, "data_seed");
    t["train_size"] = size_field(&E::task, &TaskConfig::train_size, "train_size");
    t["dev_size"] = size_field(&E::task, &TaskConfig::dev_size, "dev_size");

    t["steps"] = size_field(&E::train, &TrainConfig::steps, "steps");
    t["batch_size"] = size_field(&E::train, &TrainConfig::batch_size, "batch_size");
    t["lr"] = double_field(&E::train, &TrainConfig::lr, "lr");
    t["warmup_steps"] = size_field(&E::train, &TrainConfig::warmup_steps, "warmup_steps");
    t["eval_every"] = size_field(&E::train, &TrainConfig::eval_every, "eval_every");
    t["max_decode_len"] = size_field(&E::train, &TrainConfig::max_decode_len, "max_decode_len");
    t["seed"] = u64_field(&E::train, &TrainConfig::seed, "seed");

    t["bench_lengths"] = {
        [](E& c, const std::string& v) {
          c.bench.lengths.clear();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            c.bench.lengths.push_back(parse_integer<std::size_t>("bench_lengths", trim(item)));
          }
          if (c.bench.lengths.empty()) throw ConfigError("bench_lengths must not be empty");
        },
        [](const E& c) {
          std::string out;
          for (std::size_t i = 0; i < c.bench.lengths.size(); ++i) {
            if (i) out += ',';
            out += std::to_string(c.bench.lengths[i]);
          }
          return out;
        }};
    t["bench_decoder_ratio"] = size_field(&E::bench, &BenchConfig::decoder_ratio, "bench_decoder_ratio");
    t["bench_memory_limit_bytes"] = {
        [](E& c, const std::string& v) {
          c.bench.memory_limit_bytes = parse_integer<std::int64_t>("bench_memory_limit_bytes", v);
        },
        [](const E& c) { return std::to_string(c.bench.memory_limit_bytes); }};
    return t;
  }();
  return table;
}

}  // namespace

std::string variant_name(Variant v) {
  return v == Variant::kTransformer ? "transformer" : "efficientasr";
}

Variant parse_variant(const std::string& name) {
  if (name == "transformer") return Variant::kTransformer;
  if (name == "efficientasr") return Variant::kEfficientAsr;
  throw ConfigError("unknown variant '" + name + "' (expected transformer|efficientasr)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  positive(heads, "heads");
  positive(enc_layers, "enc_layers");
  positive(dec_layers, "dec_layers");
  positive(feature_dim, "feature_dim");
  if (i_enc < 1 || i_dec < 1) throw ConfigError("update period must be >= 1");
  if (i_enc > enc_layers) throw ConfigError("i_enc exceeds enc_layers");
  if (i_dec > dec_layers) throw ConfigError("i_dec exceeds dec_layers");
  if (window < 1) throw ConfigError("window radius must be >= 1");
  if (d_model % heads != 0) throw DivisibilityError("heads must divide d_model");
  if (n_chunks == 0 || d_model % n_chunks != 0 || d_ff % n_chunks != 0) {
    throw DivisibilityError("n_chunks must divide d_model and d_ff");
  }
  if (vocab_size < static_cast<std::size_t>(kFirstSymbol) + 1) {
    throw ConfigError("vocab_size must hold blank, sos, eos and at least one symbol");
  }
  if (alpha_ce < 0.0 || alpha_ctc < 0.0) throw ConfigError("loss weights must be nonnegative");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must be in [0,1)");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
}

ModelConfig ModelConfig::matched_baseline() const {
  ModelConfig b = *this;
  b.variant = Variant::kTransformer;
  b.i_enc = 1;
  b.i_dec = 1;
  b.n_chunks = 1;
  return b;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!cfg.values_.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueConfig& kv) {
  ExperimentConfig cfg = copy_task_config();
  const auto& table = fields();
  for (const auto& [key, value] : kv.values()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, value);
  }
  cfg.task.vocab_size = cfg.model.vocab_size;
  cfg.task.feature_dim = cfg.model.feature_dim;
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_key_values(KeyValueConfig::load(path));
}

KeyValueConfig ExperimentConfig::to_key_values() const {
  KeyValueConfig kv;
  for (const auto& [key, field] : fields()) kv.set(key, field.get(*this));
  return kv;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  const KeyValueConfig kv = to_key_values();
  for (const auto& [key, value] : kv.values()) out += key + " = " + value + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (task.vocab_size != model.vocab_size) throw ConfigError("task vocabulary differs from model vocabulary");
  if (task.feature_dim != model.feature_dim) throw ConfigError("task feature_dim differs from model feature_dim");
  if (task.min_frames < 1 || task.min_frames > task.max_frames) throw ConfigError("invalid frames_per_token range");
  if (task.min_tokens < 1 || task.min_tokens > task.max_tokens) throw ConfigError("invalid token count range");
  if (task.noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
  if (train.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (train.lr < 0.0) throw ConfigError("lr must be nonnegative");
  if (bench.decoder_ratio < 1) throw ConfigError("bench_decoder_ratio must be positive");
}

ExperimentConfig copy_task_config() {
  ExperimentConfig c;
  c.model.d_model = 64;
  c.model.d_ff = 256;
  c.model.heads = 4;
  c.model.enc_layers = 2;
  c.model.dec_layers = 2;
  c.model.i_enc = 2;
  c.model.i_dec = 2;
  c.model.n_chunks = 2;
  c.model.window = 6;
  c.model.vocab_size = 16;
  c.model.feature_dim = 16;
  c.task.vocab_size = 16;
  c.task.feature_dim = 16;
  c.train.lr = 2e-3;
  return c;
}

}  // namespace easr
