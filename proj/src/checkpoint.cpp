#include "easr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "easr/errors.hpp"

namespace easr {
namespace {

constexpr char kMagic[8] = {'E', 'A', 'S', 'R', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ofstream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw FormatError("cannot open checkpoint " + path);
  }

  template <class T>
  T get() {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > (1ULL << 32)) throw FormatError("implausible string length in " + path_);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated checkpoint " + path_);
  }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::string& path, const ExperimentConfig& config, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  ExperimentConfig stored = config;
  stored.model = model.config();
  put_string(out, stored.to_text());
  const ParameterList params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put_string(out, p.name);
    put<std::uint64_t>(out, p.tensor.rank());
    for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
    const auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader in(path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw FormatError(path + " is not a checkpoint");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  ExperimentConfig config = ExperimentConfig::from_key_values(KeyValueConfig::parse(in.get_string()));
  LoadedCheckpoint loaded{config, Model(config.model, 0)};
  std::map<std::string, Tensor> by_name;
  for (const auto& p : loaded.model.parameters()) by_name.emplace(p.name, p.tensor);

  const auto count = in.get<std::uint64_t>();
  if (count != by_name.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, config expects " +
                      std::to_string(by_name.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.get_string();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("unexpected parameter " + name);
    const auto rank = in.get<std::uint64_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint64_t>();
    Tensor& dst = it->second;
    if (shape != dst.shape()) {
      throw FormatError("parameter " + name + " has shape " + shape_to_string(shape) +
                        ", expected " + shape_to_string(dst.shape()));
    }
    auto data = dst.mutable_data();
    in.read(reinterpret_cast<char*>(data.data()), data.size() * sizeof(double));
    by_name.erase(it);
  }
  return loaded;
}

}  // namespace easr
