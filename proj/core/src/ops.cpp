#include "grokkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "gemm.hpp"

namespace grokkd::ops {

namespace {

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_out(Shape shape, std::vector<float> values, bool requires_grad) {
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

void check_finite(const Tensor& t, const char* op_name) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op_name) + " input contains non-finite values");
  }
}

std::int64_t last_dim(const Tensor& t) {
  if (t.rank() == 0) throw DimensionError("expected at least rank 1");
  return t.shape().back();
}

enum class BinKind { kAdd, kSub, kMul };

Tensor binary_ew(const Tensor& a, const Tensor& b, Tape* tape, BinKind kind, const char* name) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw DimensionError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " are neither equal nor scalar");
  }
  const Tensor& big = a_scalar ? b : a;
  const std::int64_t n = big.numel();
  std::vector<float> out(static_cast<std::size_t>(n));
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const float x = a_scalar ? pa[0] : pa[i];
    const float y = b_scalar ? pb[0] : pb[i];
    switch (kind) {
      case BinKind::kAdd: out[std::size_t(i)] = x + y; break;
      case BinKind::kSub: out[std::size_t(i)] = x - y; break;
      case BinKind::kMul: out[std::size_t(i)] = x * y; break;
    }
  }
  const bool rg = want_grad(tape, {&a, &b});
  Tensor result = make_out(big.shape(), std::move(out), rg);
  if (rg) {
    Tensor ta = a, tb = b, to = result;
    tape->record(result, [ta, tb, to, kind, a_scalar, b_scalar]() mutable {
      const float* g = to.grad_data();
      const std::int64_t n = to.numel();
      if (ta.requires_grad()) {
        float* da = ta.grad_data();
        if (a_scalar) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const float gi = g[i];
            switch (kind) {
              case BinKind::kAdd:
              case BinKind::kSub: acc += gi; break;
              case BinKind::kMul: acc += double(gi) * (tb.numel() == 1 ? tb.data()[0] : tb.data()[i]); break;
            }
          }
          da[0] = float(da[0] + acc);
        } else {
          const float* pb = tb.data();
          for (std::int64_t i = 0; i < n; ++i) {
            const float y = b_scalar ? pb[0] : pb[i];
            switch (kind) {
              case BinKind::kAdd:
              case BinKind::kSub: da[i] += g[i]; break;
              case BinKind::kMul: da[i] += g[i] * y; break;
            }
          }
        }
      }
      if (tb.requires_grad()) {
        float* db = tb.grad_data();
        if (b_scalar) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const float gi = g[i];
            switch (kind) {
              case BinKind::kAdd: acc += gi; break;
              case BinKind::kSub: acc -= gi; break;
              case BinKind::kMul: acc += double(gi) * (ta.numel() == 1 ? ta.data()[0] : ta.data()[i]); break;
            }
          }
          db[0] = float(db[0] + acc);
        } else {
          const float* pa = ta.data();
          for (std::int64_t i = 0; i < n; ++i) {
            const float x = a_scalar ? pa[0] : pa[i];
            switch (kind) {
              case BinKind::kAdd: db[i] += g[i]; break;
              case BinKind::kSub: db[i] -= g[i]; break;
              case BinKind::kMul: db[i] += g[i] * x; break;
            }
          }
        }
      }
    });
  }
  return result;
}

template <typename Fwd, typename Bwd>
Tensor unary_ew(const Tensor& a, Tape* tape, Fwd fwd, Bwd dydx) {
  const std::int64_t n = a.numel();
  std::vector<float> out(static_cast<std::size_t>(n));
  const float* pa = a.data();
  for (std::int64_t i = 0; i < n; ++i) out[std::size_t(i)] = fwd(pa[i]);
  const bool rg = want_grad(tape, {&a});
  Tensor result = make_out(a.shape(), std::move(out), rg);
  if (rg) {
    Tensor ta = a, to = result;
    tape->record(result, [ta, to, dydx]() mutable {
      if (!ta.requires_grad()) return;
      const float* g = to.grad_data();
      const float* x = ta.data();
      const float* y = to.data();
      float* da = ta.grad_data();
      const std::int64_t n = to.numel();
      for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * dydx(x[i], y[i]);
    });
  }
  return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * std::size_t(n));
  detail::gemm_acc64(a.data(), b.data(), out.data(), m, k, n, false, false, false);
  const bool rg = want_grad(tape, {&a, &b});
  Tensor result = make_out({m, n}, std::move(out), rg);
  if (rg) {
    Tensor ta = a, tb = b, to = result;
    tape->record(result, [ta, tb, to, m, k, n]() mutable {
      const float* g = to.grad_data();
      if (ta.requires_grad()) {
        // dA += dC * B^T
        detail::gemm_acc64(g, tb.data(), ta.grad_data(), m, n, k, false, true, true);
      }
      if (tb.requires_grad()) {
        // dB += A^T * dC
        detail::gemm_acc64(ta.data(), g, tb.grad_data(), k, m, n, true, false, true);
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) { return binary_ew(a, b, tape, BinKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) { return binary_ew(a, b, tape, BinKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) { return binary_ew(a, b, tape, BinKind::kMul, "mul"); }

Tensor scale(const Tensor& a, double factor, Tape* tape) {
  const float f = float(factor);
  return unary_ew(
      a, tape, [f](float x) { return x * f; }, [f](float, float) { return f; });
}

Tensor neg(const Tensor& a, Tape* tape) {
  return unary_ew(
      a, tape, [](float x) { return -x; }, [](float, float) { return -1.0f; });
}

Tensor exp(const Tensor& a, Tape* tape) {
  Tensor out = unary_ew(
      a, tape, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
  if (!out.all_finite()) throw NumericError("exp overflowed to non-finite values");
  return out;
}

Tensor log1p(const Tensor& a, Tape* tape) {
  const float* p = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (!(p[i] > -1.0f)) {
      throw DomainError("log1p requires inputs > -1, got " + std::to_string(p[i]));
    }
  }
  return unary_ew(
      a, tape, [](float x) { return std::log1p(x); },
      [](float x, float) { return 1.0f / (1.0f + x); });
}

Tensor signed_log1p(const Tensor& a, Tape* tape) {
  return unary_ew(
      a, tape,
      [](float x) { return x >= 0.0f ? std::log1p(x) : -std::log1p(-x); },
      [](float x, float) { return 1.0f / (1.0f + std::fabs(x)); });
}

Tensor relu(const Tensor& a, Tape* tape) {
  return unary_ew(
      a, tape, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor row_softmax(const Tensor& logits, double temperature, Tape* tape) {
  if (!(temperature > 0.0)) throw ContractError("row_softmax temperature must be positive");
  check_finite(logits, "row_softmax");
  const std::int64_t k = last_dim(logits);
  const std::int64_t rows = logits.numel() / k;
  std::vector<float> out(static_cast<std::size_t>(logits.numel()));
  const float* x = logits.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = x + r * k;
    float* yr = out.data() + r * k;
    float mx = xr[0];
    for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) {
      const double e = std::exp((double(xr[i]) - mx) / temperature);
      yr[i] = float(e);
      z += e;
    }
    const double inv = 1.0 / z;
    for (std::int64_t i = 0; i < k; ++i) yr[i] = float(yr[i] * inv);
  }
  const bool rg = want_grad(tape, {&logits});
  Tensor result = make_out(logits.shape(), std::move(out), rg);
  if (rg) {
    Tensor tx = logits, to = result;
    tape->record(result, [tx, to, k, rows, temperature]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      const float* p = to.data();
      float* dx = tx.grad_data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const float* gr = g + r * k;
        const float* pr = p + r * k;
        float* dr = dx + r * k;
        double dot = 0.0;
        for (std::int64_t i = 0; i < k; ++i) dot += double(gr[i]) * pr[i];
        for (std::int64_t i = 0; i < k; ++i) {
          dr[i] += float(double(pr[i]) * (double(gr[i]) - dot) / temperature);
        }
      }
    });
  }
  return result;
}

Tensor row_log_softmax(const Tensor& logits, double temperature, Tape* tape) {
  if (!(temperature > 0.0)) throw ContractError("row_log_softmax temperature must be positive");
  check_finite(logits, "row_log_softmax");
  const std::int64_t k = last_dim(logits);
  const std::int64_t rows = logits.numel() / k;
  std::vector<float> out(static_cast<std::size_t>(logits.numel()));
  const float* x = logits.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = x + r * k;
    float* yr = out.data() + r * k;
    float mx = xr[0];
    for (std::int64_t i = 1; i < k; ++i) mx = std::max(mx, xr[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < k; ++i) z += std::exp((double(xr[i]) - mx) / temperature);
    const double logz = std::log(z);
    for (std::int64_t i = 0; i < k; ++i) {
      yr[i] = float((double(xr[i]) - mx) / temperature - logz);
    }
  }
  const bool rg = want_grad(tape, {&logits});
  Tensor result = make_out(logits.shape(), std::move(out), rg);
  if (rg) {
    Tensor tx = logits, to = result;
    tape->record(result, [tx, to, k, rows, temperature]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      const float* y = to.data();
      float* dx = tx.grad_data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const float* gr = g + r * k;
        const float* yr = y + r * k;
        float* dr = dx + r * k;
        double gsum = 0.0;
        for (std::int64_t i = 0; i < k; ++i) gsum += gr[i];
        for (std::int64_t i = 0; i < k; ++i) {
          const double p = std::exp(double(yr[i]));
          dr[i] += float((double(gr[i]) - p * gsum) / temperature);
        }
      }
    });
  }
  return result;
}

Tensor causal_row_softmax(const Tensor& scores, Tape* tape) {
  if (scores.rank() != 3 || scores.dim(1) != scores.dim(2)) {
    throw DimensionError("causal_row_softmax expects [N,T,T], got " + shape_str(scores.shape()));
  }
  check_finite(scores, "causal_row_softmax");
  const std::int64_t n = scores.dim(0), t = scores.dim(1);
  std::vector<float> out(static_cast<std::size_t>(scores.numel()), 0.0f);
  const float* x = scores.data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < t; ++i) {
      const float* xr = x + (b * t + i) * t;
      float* yr = out.data() + (b * t + i) * t;
      float mx = xr[0];
      for (std::int64_t j = 1; j <= i; ++j) mx = std::max(mx, xr[j]);
      double z = 0.0;
      for (std::int64_t j = 0; j <= i; ++j) {
        const double e = std::exp(double(xr[j]) - mx);
        yr[j] = float(e);
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::int64_t j = 0; j <= i; ++j) yr[j] = float(yr[j] * inv);
    }
  }
  const bool rg = want_grad(tape, {&scores});
  Tensor result = make_out(scores.shape(), std::move(out), rg);
  if (rg) {
    Tensor tx = scores, to = result;
    tape->record(result, [tx, to, n, t]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      const float* p = to.data();
      float* dx = tx.grad_data();
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t i = 0; i < t; ++i) {
          const float* gr = g + (b * t + i) * t;
          const float* pr = p + (b * t + i) * t;
          float* dr = dx + (b * t + i) * t;
          double dot = 0.0;
          for (std::int64_t j = 0; j <= i; ++j) dot += double(gr[j]) * pr[j];
          for (std::int64_t j = 0; j <= i; ++j) {
            dr[j] += float(double(pr[j]) * (double(gr[j]) - dot));
          }
        }
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& a, Tape* tape) {
  double acc = 0.0;
  const float* p = a.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += p[i];
  const bool rg = want_grad(tape, {&a});
  Tensor result = make_out({1}, {float(acc)}, rg);
  if (rg) {
    Tensor ta = a, to = result;
    tape->record(result, [ta, to]() mutable {
      if (!ta.requires_grad()) return;
      const float g = to.grad_data()[0];
      float* da = ta.grad_data();
      for (std::int64_t i = 0; i < ta.numel(); ++i) da[i] += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& a, Tape* tape) {
  double acc = 0.0;
  const float* p = a.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += p[i];
  acc /= double(n);
  const bool rg = want_grad(tape, {&a});
  Tensor result = make_out({1}, {float(acc)}, rg);
  if (rg) {
    Tensor ta = a, to = result;
    tape->record(result, [ta, to, n]() mutable {
      if (!ta.requires_grad()) return;
      const float g = float(double(to.grad_data()[0]) / double(n));
      float* da = ta.grad_data();
      for (std::int64_t i = 0; i < n; ++i) da[i] += g;
    });
  }
  return result;
}

Tensor select_index(const Tensor& x, std::span<const std::int32_t> index, Tape* tape) {
  if (x.rank() != 2) throw DimensionError("select_index expects [B,K], got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), k = x.dim(1);
  if (std::int64_t(index.size()) != b) {
    throw DimensionError("select_index: " + std::to_string(index.size()) + " indices for batch " +
                         std::to_string(b));
  }
  std::vector<float> out(static_cast<std::size_t>(b));
  const float* p = x.data();
  for (std::int64_t i = 0; i < b; ++i) {
    const std::int32_t id = index[std::size_t(i)];
    if (id < 0 || id >= k) {
      throw IndexError("select_index: index " + std::to_string(id) + " out of range [0," +
                       std::to_string(k) + ")");
    }
    out[std::size_t(i)] = p[i * k + id];
  }
  const bool rg = want_grad(tape, {&x});
  Tensor result = make_out({b}, std::move(out), rg);
  if (rg) {
    Tensor tx = x, to = result;
    std::vector<std::int32_t> idx(index.begin(), index.end());
    tape->record(result, [tx, to, idx, k]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      float* dx = tx.grad_data();
      for (std::size_t i = 0; i < idx.size(); ++i) dx[std::int64_t(i) * k + idx[i]] += g[i];
    });
  }
  return result;
}

Tensor select_position(const Tensor& x, std::int64_t position, Tape* tape) {
  if (x.rank() != 3) throw DimensionError("select_position expects [B,T,K], got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), t = x.dim(1), k = x.dim(2);
  if (position < 0 || position >= t) {
    throw ContractError("select_position: position " + std::to_string(position) +
                        " outside sequence length " + std::to_string(t));
  }
  std::vector<float> out(static_cast<std::size_t>(b * k));
  const float* p = x.data();
  for (std::int64_t i = 0; i < b; ++i) {
    std::memcpy(out.data() + i * k, p + (i * t + position) * k, std::size_t(k) * sizeof(float));
  }
  const bool rg = want_grad(tape, {&x});
  Tensor result = make_out({b, k}, std::move(out), rg);
  if (rg) {
    Tensor tx = x, to = result;
    tape->record(result, [tx, to, position, t, k]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      float* dx = tx.grad_data();
      const std::int64_t b = to.dim(0);
      for (std::int64_t i = 0; i < b; ++i) {
        float* row = dx + (i * t + position) * k;
        const float* gr = g + i * k;
        for (std::int64_t j = 0; j < k; ++j) row[j] += gr[j];
      }
    });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> rows, Tape* tape) {
  if (x.rank() != 2) throw DimensionError("gather_rows expects [B,K], got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), k = x.dim(1);
  std::vector<float> out(rows.size() * std::size_t(k));
  const float* p = x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::int64_t r = rows[i];
    if (r < 0 || r >= b) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " out of range [0," +
                       std::to_string(b) + ")");
    }
    std::memcpy(out.data() + i * std::size_t(k), p + r * k, std::size_t(k) * sizeof(float));
  }
  const bool rg = want_grad(tape, {&x});
  Tensor result = make_out({std::int64_t(rows.size()), k}, std::move(out), rg);
  if (rg) {
    Tensor tx = x, to = result;
    std::vector<std::int64_t> rs(rows.begin(), rows.end());
    tape->record(result, [tx, to, rs, k]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      float* dx = tx.grad_data();
      for (std::size_t i = 0; i < rs.size(); ++i) {
        float* row = dx + rs[i] * k;
        const float* gr = g + std::int64_t(i) * k;
        for (std::int64_t j = 0; j < k; ++j) row[j] += gr[j];
      }
    });
  }
  return result;
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids, Tape* tape) {
  if (table.rank() != 2) throw DimensionError("embedding_lookup expects [V,D] table");
  const std::int64_t v = table.dim(0), d = table.dim(1);
  std::vector<float> out(ids.size() * std::size_t(d));
  const float* p = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t id = ids[i];
    if (id < 0 || id >= v) {
      throw IndexError("embedding_lookup: token id " + std::to_string(id) +
                       " out of range [0," + std::to_string(v) + ")");
    }
    std::memcpy(out.data() + i * std::size_t(d), p + std::int64_t(id) * d,
                std::size_t(d) * sizeof(float));
  }
  const bool rg = want_grad(tape, {&table});
  Tensor result = make_out({std::int64_t(ids.size()), d}, std::move(out), rg);
  if (rg) {
    Tensor tt = table, to = result;
    std::vector<std::int32_t> id_copy(ids.begin(), ids.end());
    tape->record(result, [tt, to, id_copy, d]() mutable {
      if (!tt.requires_grad()) return;
      const float* g = to.grad_data();
      float* dt = tt.grad_data();
      for (std::size_t i = 0; i < id_copy.size(); ++i) {
        float* row = dt + std::int64_t(id_copy[i]) * d;
        const float* gr = g + std::int64_t(i) * d;
        for (std::int64_t j = 0; j < d; ++j) row[j] += gr[j];
      }
    });
  }
  return result;
}

Tensor split_heads(const Tensor& x, std::int64_t n_heads, Tape* tape) {
  if (x.rank() != 3) throw DimensionError("split_heads expects [B,T,D], got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  if (d % n_heads != 0) throw DimensionError("split_heads: width not divisible by head count");
  const std::int64_t dh = d / n_heads;
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  const float* p = x.data();
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t h = 0; h < n_heads; ++h) {
      for (std::int64_t ti = 0; ti < t; ++ti) {
        std::memcpy(out.data() + (((bi * n_heads + h) * t) + ti) * dh,
                    p + (bi * t + ti) * d + h * dh, std::size_t(dh) * sizeof(float));
      }
    }
  }
  const bool rg = want_grad(tape, {&x});
  Tensor result = make_out({b * n_heads, t, dh}, std::move(out), rg);
  if (rg) {
    Tensor tx = x, to = result;
    tape->record(result, [tx, to, b, t, d, n_heads, dh]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      float* dx = tx.grad_data();
      for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t h = 0; h < n_heads; ++h) {
          for (std::int64_t ti = 0; ti < t; ++ti) {
            const float* gr = g + (((bi * n_heads + h) * t) + ti) * dh;
            float* dr = dx + (bi * t + ti) * d + h * dh;
            for (std::int64_t j = 0; j < dh; ++j) dr[j] += gr[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor merge_heads(const Tensor& x, std::int64_t n_heads, Tape* tape) {
  if (x.rank() != 3) throw DimensionError("merge_heads expects [B*H,T,dh], got " + shape_str(x.shape()));
  const std::int64_t bh = x.dim(0), t = x.dim(1), dh = x.dim(2);
  if (bh % n_heads != 0) throw DimensionError("merge_heads: batch not divisible by head count");
  const std::int64_t b = bh / n_heads;
  const std::int64_t d = dh * n_heads;
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  const float* p = x.data();
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t h = 0; h < n_heads; ++h) {
      for (std::int64_t ti = 0; ti < t; ++ti) {
        std::memcpy(out.data() + (bi * t + ti) * d + h * dh,
                    p + (((bi * n_heads + h) * t) + ti) * dh, std::size_t(dh) * sizeof(float));
      }
    }
  }
  const bool rg = want_grad(tape, {&x});
  Tensor result = make_out({b, t, d}, std::move(out), rg);
  if (rg) {
    Tensor tx = x, to = result;
    tape->record(result, [tx, to, b, t, d, n_heads, dh]() mutable {
      if (!tx.requires_grad()) return;
      const float* g = to.grad_data();
      float* dx = tx.grad_data();
      for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t h = 0; h < n_heads; ++h) {
          for (std::int64_t ti = 0; ti < t; ++ti) {
            const float* gr = g + (bi * t + ti) * d + h * dh;
            float* dr = dx + (((bi * n_heads + h) * t) + ti) * dh;
            for (std::int64_t j = 0; j < dh; ++j) dr[j] += gr[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor bmm(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::int64_t n = a.dim(0), r = a.dim(1), s = a.dim(2), c = b.dim(2);
  std::vector<float> out(static_cast<std::size_t>(n * r * c));
  const float* pa = a.data();
  const float* pb = b.data();
  std::vector<double> acc(static_cast<std::size_t>(c));
  for (std::int64_t bi = 0; bi < n; ++bi) {
    const float* am = pa + bi * r * s;
    const float* bm = pb + bi * s * c;
    float* om = out.data() + bi * r * c;
    for (std::int64_t i = 0; i < r; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::int64_t j = 0; j < s; ++j) {
        const double av = am[i * s + j];
        const float* brow = bm + j * c;
        for (std::int64_t l = 0; l < c; ++l) acc[std::size_t(l)] += av * double(brow[l]);
      }
      for (std::int64_t l = 0; l < c; ++l) om[i * c + l] = float(acc[std::size_t(l)]);
    }
  }
  const bool rg = want_grad(tape, {&a, &b});
  Tensor result = make_out({n, r, c}, std::move(out), rg);
  if (rg) {
    Tensor ta = a, tb = b, to = result;
    tape->record(result, [ta, tb, to, n, r, s, c]() mutable {
      const float* g = to.grad_data();
      if (ta.requires_grad()) {
        // dA[n,i,j] += sum_l g[n,i,l] * B[n,j,l]
        float* da = ta.grad_data();
        const float* pb = tb.data();
        for (std::int64_t bi = 0; bi < n; ++bi) {
          const float* gm = g + bi * r * c;
          const float* bm = pb + bi * s * c;
          float* dm = da + bi * r * s;
          for (std::int64_t i = 0; i < r; ++i) {
            for (std::int64_t j = 0; j < s; ++j) {
              double acc = 0.0;
              const float* gr = gm + i * c;
              const float* br = bm + j * c;
              for (std::int64_t l = 0; l < c; ++l) acc += double(gr[l]) * br[l];
              dm[i * s + j] = float(double(dm[i * s + j]) + acc);
            }
          }
        }
      }
      if (tb.requires_grad()) {
        // dB[n,j,l] += sum_i A[n,i,j] * g[n,i,l]
        float* db = tb.grad_data();
        const float* pa = ta.data();
        for (std::int64_t bi = 0; bi < n; ++bi) {
          const float* gm = g + bi * r * c;
          const float* am = pa + bi * r * s;
          float* dm = db + bi * s * c;
          for (std::int64_t j = 0; j < s; ++j) {
            for (std::int64_t l = 0; l < c; ++l) {
              double acc = 0.0;
              for (std::int64_t i = 0; i < r; ++i) acc += double(am[i * s + j]) * gm[i * c + l];
              dm[j * c + l] = float(double(dm[j * c + l]) + acc);
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw DimensionError("bmm_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::int64_t n = a.dim(0), r = a.dim(1), c = a.dim(2), s = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(n * r * s));
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::int64_t bi = 0; bi < n; ++bi) {
    const float* am = pa + bi * r * c;
    const float* bm = pb + bi * s * c;
    float* om = out.data() + bi * r * s;
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < s; ++j) {
        double acc = 0.0;
        const float* ar = am + i * c;
        const float* br = bm + j * c;
        for (std::int64_t l = 0; l < c; ++l) acc += double(ar[l]) * br[l];
        om[i * s + j] = float(acc);
      }
    }
  }
  const bool rg = want_grad(tape, {&a, &b});
  Tensor result = make_out({n, r, s}, std::move(out), rg);
  if (rg) {
    Tensor ta = a, tb = b, to = result;
    tape->record(result, [ta, tb, to, n, r, s, c]() mutable {
      const float* g = to.grad_data();
      if (ta.requires_grad()) {
        // dA[n,i,l] += sum_j g[n,i,j] * B[n,j,l]
        float* da = ta.grad_data();
        const float* pb = tb.data();
        std::vector<double> acc(static_cast<std::size_t>(c));
        for (std::int64_t bi = 0; bi < n; ++bi) {
          const float* gm = g + bi * r * s;
          const float* bm = pb + bi * s * c;
          float* dm = da + bi * r * c;
          for (std::int64_t i = 0; i < r; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::int64_t j = 0; j < s; ++j) {
              const double gv = gm[i * s + j];
              const float* br = bm + j * c;
              for (std::int64_t l = 0; l < c; ++l) acc[std::size_t(l)] += gv * double(br[l]);
            }
            for (std::int64_t l = 0; l < c; ++l) {
              dm[i * c + l] = float(double(dm[i * c + l]) + acc[std::size_t(l)]);
            }
          }
        }
      }
      if (tb.requires_grad()) {
        // dB[n,j,l] += sum_i g[n,i,j] * A[n,i,l]
        float* db = tb.grad_data();
        const float* pa = ta.data();
        std::vector<double> acc(static_cast<std::size_t>(c));
        for (std::int64_t bi = 0; bi < n; ++bi) {
          const float* gm = g + bi * r * s;
          const float* am = pa + bi * r * c;
          float* dm = db + bi * s * c;
          for (std::int64_t j = 0; j < s; ++j) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::int64_t i = 0; i < r; ++i) {
              const double gv = gm[i * s + j];
              const float* ar = am + i * c;
              for (std::int64_t l = 0; l < c; ++l) acc[std::size_t(l)] += gv * double(ar[l]);
            }
            for (std::int64_t l = 0; l < c; ++l) {
              dm[j * c + l] = float(double(dm[j * c + l]) + acc[std::size_t(l)]);
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tape* tape) {
  if (x.rank() != 2) throw DimensionError("layer_norm expects [R,D], got " + shape_str(x.shape()));
  const std::int64_t r = x.dim(0), d = x.dim(1);
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias length must equal row width " + std::to_string(d));
  }
  std::vector<float> out(static_cast<std::size_t>(x.numel()));
  std::vector<float> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<float> inv_sigma(static_cast<std::size_t>(r));
  const float* px = x.data();
  const float* pg = gain.data();
  const float* pb = bias.data();
  for (std::int64_t i = 0; i < r; ++i) {
    const float* row = px + i * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= double(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = double(row[j]) - mu;
      var += c * c;
    }
    var /= double(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[std::size_t(i)] = float(inv);
    for (std::int64_t j = 0; j < d; ++j) {
      const float xh = float((double(row[j]) - mu) * inv);
      xhat[std::size_t(i * d + j)] = xh;
      out[std::size_t(i * d + j)] = xh * pg[j] + pb[j];
    }
  }
  const bool rg = want_grad(tape, {&x, &gain, &bias});
  Tensor result = make_out(x.shape(), std::move(out), rg);
  if (rg) {
    Tensor tx = x, tg = gain, tb = bias, to = result;
    auto xh = std::make_shared<std::vector<float>>(std::move(xhat));
    auto inv = std::make_shared<std::vector<float>>(std::move(inv_sigma));
    tape->record(result, [tx, tg, tb, to, xh, inv, r, d]() mutable {
      const float* g = to.grad_data();
      const float* pgain = tg.data();
      if (tg.requires_grad() || tb.requires_grad()) {
        float* dg = tg.requires_grad() ? tg.grad_data() : nullptr;
        float* db = tb.requires_grad() ? tb.grad_data() : nullptr;
        for (std::int64_t j = 0; j < d; ++j) {
          double acc_g = 0.0, acc_b = 0.0;
          for (std::int64_t i = 0; i < r; ++i) {
            const double gv = g[i * d + j];
            acc_g += gv * double((*xh)[std::size_t(i * d + j)]);
            acc_b += gv;
          }
          if (dg) dg[j] = float(double(dg[j]) + acc_g);
          if (db) db[j] = float(double(db[j]) + acc_b);
        }
      }
      if (tx.requires_grad()) {
        float* dx = tx.grad_data();
        for (std::int64_t i = 0; i < r; ++i) {
          const float* gr = g + i * d;
          const float* xr = xh->data() + i * d;
          float* dr = dx + i * d;
          double mean_h = 0.0, mean_hx = 0.0;
          for (std::int64_t j = 0; j < d; ++j) {
            const double h = double(gr[j]) * pgain[j];
            mean_h += h;
            mean_hx += h * double(xr[j]);
          }
          mean_h /= double(d);
          mean_hx /= double(d);
          const double is = double((*inv)[std::size_t(i)]);
          for (std::int64_t j = 0; j < d; ++j) {
            const double h = double(gr[j]) * pgain[j];
            dr[j] += float(is * (h - mean_h - double(xr[j]) * mean_hx));
          }
        }
      }
    });
  }
  return result;
}

double finite_difference_check(const std::function<Tensor(const Tensor&, Tape*)>& f,
                               const Tensor& point, double eps) {
  Tensor x = point.detached_copy();
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = f(x, &tape);
  if (loss.numel() != 1) throw ContractError("finite_difference_check: f must return a scalar");
  tape.backward(loss);
  std::vector<float> analytic(x.grad().begin(), x.grad().end());

  Tensor probe = point.detached_copy();
  double max_err = 0.0;
  for (std::int64_t i = 0; i < probe.numel(); ++i) {
    const float orig = probe.data()[i];
    const float xp = float(double(orig) + eps);
    const float xm = float(double(orig) - eps);
    probe.data()[i] = xp;
    const double fp = f(probe, nullptr).item();
    probe.data()[i] = xm;
    const double fm = f(probe, nullptr).item();
    probe.data()[i] = orig;
    // Divide by the step actually applied after f32 rounding.
    const double numeric = (fp - fm) / (double(xp) - double(xm));
    const double an = analytic[std::size_t(i)];
    const double err = std::abs(an - numeric) / (std::abs(an) + std::abs(numeric) + 1e-8);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace grokkd::ops
