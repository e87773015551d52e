#include "easr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blas.hpp"
#include "easr/errors.hpp"

namespace easr {
namespace {

using detail::Node;

Shape batch_prefix(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

std::size_t prefix_numel(const Shape& s) { return shape_numel(batch_prefix(s)); }

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  if (b.dim(-2) != k) {
    throw DimensionError("matmul inner extents differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  const Shape pa = batch_prefix(a.shape());
  const Shape pb = batch_prefix(b.shape());
  if (!pa.empty() && !pb.empty() && pa != pb) {
    throw DimensionError("matmul batch prefixes not broadcastable: " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  const Shape& prefix = pa.empty() ? pb : pa;
  const std::size_t batch = shape_numel(prefix);
  Shape out_shape = prefix;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Buffer out(batch * m * n);

  const bool shared_b = pb.empty();
  const bool shared_a = pa.empty() && !pb.empty();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  if (shared_b) {
    // Stack every batch row of a into one (batch*m) x k product.
    detail::gemm(false, false, batch * m, n, k, 1.0, ad, k, bd, n, 0.0, out.data(), n);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      const double* ai = shared_a ? ad : ad + i * m * k;
      detail::gemm(false, false, m, n, k, 1.0, ai, k, bd + i * k * n, n, 0.0,
                   out.data() + i * m * n, n);
    }
  }
  FlopCounter::add(2ULL * batch * m * n * k);

  return Tensor::make_result(
      std::move(out_shape), std::move(out), {a, b},
      [batch, m, n, k, shared_a, shared_b](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        const double* g = self.grad.data();
        if (na.requires_grad) {
          double* ga = na.ensure_grad().data();
          const double* bd = nb.data.data();
          if (shared_b) {
            detail::gemm(false, true, batch * m, k, n, 1.0, g, n, bd, n, 1.0, ga, k);
          } else {
            for (std::size_t i = 0; i < batch; ++i) {
              double* gai = shared_a ? ga : ga + i * m * k;
              detail::gemm(false, true, m, k, n, 1.0, g + i * m * n, n, bd + i * k * n, n, 1.0,
                           gai, k);
            }
          }
        }
        if (nb.requires_grad) {
          double* gb = nb.ensure_grad().data();
          const double* ad = na.data.data();
          if (shared_b) {
            detail::gemm(true, false, k, n, batch * m, 1.0, ad, k, g, n, 1.0, gb, n);
          } else {
            for (std::size_t i = 0; i < batch; ++i) {
              const double* ai = shared_a ? ad : ad + i * m * k;
              detail::gemm(true, false, k, n, m, 1.0, ai, k, g + i * m * n, n, 1.0,
                           gb + i * k * n, n);
            }
          }
        }
      });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose needs rank >= 2: " + shape_to_string(x.shape()));
  const std::size_t r = x.dim(-2), c = x.dim(-1);
  const std::size_t batch = prefix_numel(x.shape());
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = xd + b * r * c;
    double* dst = out.data() + b * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  }
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [batch, r, c](Node& self) {
                               Node& nx = *self.parents[0];
                               double* gx = nx.ensure_grad().data();
                               const double* g = self.grad.data();
                               for (std::size_t b = 0; b < batch; ++b)
                                 for (std::size_t i = 0; i < r; ++i)
                                   for (std::size_t j = 0; j < c; ++j)
                                     gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_to_string(x.shape()) + " -> " +
                         shape_to_string(shape) + " changes element count");
  }
  Buffer out(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& nx = *self.parents[0];
    auto& gx = nx.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3) throw DimensionError("split_heads expects [B,T,d], got " + shape_to_string(x.shape()));
  const std::size_t B = x.dim(0), T = x.dim(1), d = x.dim(2);
  if (heads == 0 || d % heads != 0) {
    throw DivisibilityError("head count " + std::to_string(heads) + " does not divide " +
                            std::to_string(d));
  }
  const std::size_t dk = d / heads;
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd + (b * T + t) * d + h * dk, dk, out.data() + ((b * heads + h) * T + t) * dk);
  return Tensor::make_result(Shape{B, heads, T, dk}, std::move(out), {x},
                             [B, T, heads, dk, d](Node& self) {
                               double* gx = self.parents[0]->ensure_grad().data();
                               const double* g = self.grad.data();
                               for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t t = 0; t < T; ++t)
                                   for (std::size_t h = 0; h < heads; ++h) {
                                     const double* src = g + ((b * heads + h) * T + t) * dk;
                                     double* dst = gx + (b * T + t) * d + h * dk;
                                     for (std::size_t e = 0; e < dk; ++e) dst[e] += src[e];
                                   }
                             });
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("merge_heads expects [B,h,T,dk], got " + shape_to_string(x.shape()));
  const std::size_t B = x.dim(0), heads = x.dim(1), T = x.dim(2), dk = x.dim(3);
  const std::size_t d = heads * dk;
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < T; ++t)
        std::copy_n(xd + ((b * heads + h) * T + t) * dk, dk, out.data() + (b * T + t) * d + h * dk);
  return Tensor::make_result(Shape{B, T, d}, std::move(out), {x},
                             [B, T, heads, dk, d](Node& self) {
                               double* gx = self.parents[0]->ensure_grad().data();
                               const double* g = self.grad.data();
                               for (std::size_t b = 0; b < B; ++b)
                                 for (std::size_t h = 0; h < heads; ++h)
                                   for (std::size_t t = 0; t < T; ++t) {
                                     const double* src = g + (b * T + t) * d + h * dk;
                                     double* dst = gx + ((b * heads + h) * T + t) * dk;
                                     for (std::size_t e = 0; e < dk; ++e) dst[e] += src[e];
                                   }
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Buffer out(a.numel());
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
      for (int p = 0; p < 2; ++p) {
        Node& np = *self.parents[p];
        if (!np.requires_grad) continue;
        auto& g = np.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  if (!is_suffix(a.shape(), b.shape())) {
    throw DimensionError("add: cannot broadcast " + shape_to_string(b.shape()) + " onto " +
                         shape_to_string(a.shape()));
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = a.numel() / inner;
  Buffer out(a.numel());
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = ad[o * inner + i] + bd[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [outer, inner](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor mul_const(const Tensor& x, std::span<const double> factors) {
  if (factors.size() != x.numel()) {
    throw DimensionError("mul_const: " + std::to_string(factors.size()) + " factors for shape " +
                         shape_to_string(x.shape()));
  }
  std::vector<double> f(factors.begin(), factors.end());
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * f[i];
  return Tensor::make_result(x.shape(), std::move(out), {x}, [f = std::move(f)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * f[i];
  });
}

Tensor relu(const Tensor& x) {
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& nx = *self.parents[0];
    auto& g = nx.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (nx.data[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  std::vector<double> f(x.numel());
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& v : f) v = rng.uniform() < p ? 0.0 : keep_scale;
  return mul_const(x, f);
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1) throw RankError("softmax_rows needs rank >= 1");
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd + r * cols;
    double* o = out.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    bool nan = false;
    for (std::size_t c = 0; c < cols; ++c) {
      mx = std::max(mx, in[c]);
      nan = nan || std::isnan(in[c]);
    }
    if (nan) {
      // let NaN reach the loss instead of looking like a masked row
      std::fill(o, o + cols, std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    if (is_masked_score(mx)) {
      throw DegenerateRowError("softmax row " + std::to_string(r) + " is fully masked");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = is_masked_score(in[c]) ? 0.0 : std::exp(in[c] - mx);
      total += o[c];
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) o[c] *= inv;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const double* y = self.data.data();
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.rank() < 1) throw RankError("log_softmax_rows needs rank >= 1");
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  Buffer out(x.numel());
  const double* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  return Tensor::make_result(x.shape(), std::move(out), {x}, [rows, cols](Node& self) {
    auto& gx = self.parents[0]->ensure_grad();
    const double* y = self.data.data();
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * total;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw ConfigError("layer_norm eps must be positive");
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm affine shapes " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " do not match width " +
                         std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  Buffer out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* xd = x.data().data();
  const double* gd = gamma.data().data();
  const double* bd = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const double h = (in[c] - mu) * inv_std[r];
      xhat[r * d + c] = h;
      out[r * d + c] = h * gd[c] + bd[c];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& nx = *self.parents[0];
        Node& ng = *self.parents[1];
        Node& nb = *self.parents[2];
        const double* g = self.grad.data();
        if (ng.requires_grad) {
          auto& gg = ng.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * xhat[r * d + c];
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
        }
        if (nx.requires_grad) {
          auto& gx = nx.ensure_grad();
          const double* gamma_d = ng.data.data();
          std::vector<double> dh(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              dh[c] = g[r * d + c] * gamma_d[c];
              mean_dh += dh[c];
              mean_dh_h += dh[c] * xhat[r * d + c];
            }
            mean_dh /= static_cast<double>(d);
            mean_dh_h /= static_cast<double>(d);
            for (std::size_t c = 0; c < d; ++c)
              gx[r * d + c] += inv_std[r] * (dh[c] - mean_dh - xhat[r * d + c] * mean_dh_h);
          }
        }
      });
}

Tensor mask_scores(const Tensor& scores, const ScoreMask& mask) {
  if (scores.rank() != 4 || scores.dim(0) != mask.batch || scores.dim(2) != mask.rows ||
      scores.dim(3) != mask.cols) {
    throw DimensionError("mask [" + std::to_string(mask.batch) + ",*," +
                         std::to_string(mask.rows) + "," + std::to_string(mask.cols) +
                         "] does not fit scores " + shape_to_string(scores.shape()));
  }
  const std::size_t B = mask.batch, H = scores.dim(1), R = mask.rows, C = mask.cols;
  Buffer out(scores.data().begin(), scores.data().end());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j)
          if (!mask.kept(b, i, j)) out[((b * H + h) * R + i) * C + j] = kMaskedScore;
  return Tensor::make_result(scores.shape(), std::move(out), {scores},
                             [mask, H](Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               const std::size_t R = mask.rows, C = mask.cols;
                               for (std::size_t b = 0; b < mask.batch; ++b)
                                 for (std::size_t h = 0; h < H; ++h)
                                   for (std::size_t i = 0; i < R; ++i)
                                     for (std::size_t j = 0; j < C; ++j)
                                       if (mask.kept(b, i, j)) {
                                         const std::size_t idx = ((b * H + h) * R + i) * C + j;
                                         g[idx] += self.grad[idx];
                                       }
                             });
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t length) {
  const std::size_t d = x.dim(-1);
  if (length == 0 || begin + length > d) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + length) + ") out of range for " +
                         shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Shape shape = x.shape();
  shape.back() = length;
  Buffer out(rows * length);
  const double* xd = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(xd + r * d + begin, length, out.data() + r * length);
  return Tensor::make_result(std::move(shape), std::move(out), {x},
                             [rows, d, begin, length](Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < length; ++c)
                                   g[r * d + begin + c] += self.grad[r * length + c];
                             });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last of zero tensors");
  Shape shape = parts[0].shape();
  const Shape lead(shape.begin(), shape.end() - 1);
  std::size_t d = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin(), p.shape().end() - 1) != lead) {
      throw DimensionError("concat_last leading shapes differ: " + shape_to_string(p.shape()) +
                           " vs " + shape_to_string(shape));
    }
    widths.push_back(p.dim(-1));
    d += p.dim(-1);
  }
  shape.back() = d;
  const std::size_t rows = shape_numel(lead);
  Buffer out(rows * d);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* pd = parts[p].data().data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pd + r * widths[p], widths[p], out.data() + r * d + offset);
    offset += widths[p];
  }
  return Tensor::make_result(std::move(shape), std::move(out), parts,
                             [rows, d, widths](Node& self) {
                               std::size_t off = 0;
                               for (std::size_t p = 0; p < widths.size(); ++p) {
                                 Node& np = *self.parents[p];
                                 if (np.requires_grad) {
                                   auto& g = np.ensure_grad();
                                   for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t c = 0; c < widths[p]; ++c)
                                       g[r * widths[p] + c] += self.grad[r * d + off + c];
                                 }
                                 off += widths[p];
                               }
                             });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, std::size_t batch,
                 std::size_t steps) {
  if (table.rank() != 2) throw DimensionError("embedding table must be [V,d]");
  if (ids.size() != batch * steps) throw DimensionError("embedding ids do not match [batch, steps]");
  const std::size_t V = table.dim(0), d = table.dim(1);
  Buffer out(batch * steps * d);
  const double* td = table.data().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw VocabError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(V));
    }
    std::copy_n(td + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return Tensor::make_result(Shape{batch, steps, d}, std::move(out), {table},
                             [idv = std::move(idv), d](Node& self) {
                               auto& g = self.parents[0]->ensure_grad();
                               for (std::size_t i = 0; i < idv.size(); ++i)
                                 for (std::size_t c = 0; c < d; ++c)
                                   g[static_cast<std::size_t>(idv[i]) * d + c] += self.grad[i * d + c];
                             });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return Tensor::make_result(Shape{}, Buffer{total}, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.numel()) {
    throw DimensionError("weighted_sum: " + std::to_string(weights.size()) +
                         " weights for shape " + shape_to_string(x.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) total += x.data()[i] * weights[i];
  }
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result(Shape{}, Buffer{total}, {x}, [w = std::move(w)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

}  // namespace easr
