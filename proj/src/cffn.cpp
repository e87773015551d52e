#include "easr/cffn.hpp"

#include "easr/errors.hpp"
#include "easr/ops.hpp"

namespace easr {
namespace {

void check_divides(std::size_t chunks, std::size_t width, const char* what) {
  if (chunks == 0 || width % chunks != 0) {
    throw DivisibilityError(std::to_string(chunks) + " chunks do not divide " + what + "=" +
                            std::to_string(width));
  }
}

}  // namespace

std::vector<Tensor> split_embed(const Tensor& x, std::size_t chunks) {
  const std::size_t d = x.dim(-1);
  check_divides(chunks, d, "embedding width");
  if (chunks == 1) return {x};
  const std::size_t width = d / chunks;
  std::vector<Tensor> parts;
  parts.reserve(chunks);
  for (std::size_t i = 0; i < chunks; ++i) parts.push_back(slice_last(x, i * width, width));
  return parts;
}

std::size_t cffn_param_count(std::size_t d_model, std::size_t d_ff, std::size_t chunks) {
  check_divides(chunks, d_model, "d_model");
  check_divides(chunks, d_ff, "d_ff");
  const std::size_t d = d_model / chunks;
  const std::size_t h = d_ff / chunks;
  return chunks * (2 * d * h + h + d);
}

CffnBlock::CffnBlock(std::size_t d_model, std::size_t d_ff, std::size_t chunks, Rng& rng)
    : d_model_(d_model), d_ff_(d_ff) {
  check_divides(chunks, d_model, "d_model");
  check_divides(chunks, d_ff, "d_ff");
  const std::size_t d = d_model / chunks;
  const std::size_t h = d_ff / chunks;
  chunks_.reserve(chunks);
  for (std::size_t i = 0; i < chunks; ++i) {
    Linear key(d, h, rng);
    Linear value(h, d, rng);
    chunks_.push_back(Chunk{std::move(key), std::move(value)});
  }
}

Tensor CffnBlock::forward(const Tensor& x) const {
  if (x.rank() < 1 || x.dim(-1) != d_model_) {
    throw DimensionError("cffn expects last axis " + std::to_string(d_model_) + ", got " +
                         shape_to_string(x.shape()));
  }
  const std::vector<Tensor> slices = split_embed(x, chunks_.size());
  std::vector<Tensor> outputs;
  outputs.reserve(chunks_.size());
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    outputs.push_back(chunks_[i].value(relu(chunks_[i].key(slices[i]))));
  }
  return outputs.size() == 1 ? outputs.front() : concat_last(outputs);
}

std::size_t CffnBlock::parameter_count() const {
  std::size_t n = 0;
  for (const auto& c : chunks_) n += c.key.parameter_count() + c.value.parameter_count();
  return n;
}

void CffnBlock::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    const std::string p = prefix + ".chunk" + std::to_string(i);
    chunks_[i].key.collect(p + ".key", out);
    chunks_[i].value.collect(p + ".value", out);
  }
}

}  // namespace easr
