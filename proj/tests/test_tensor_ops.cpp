#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "grokkd/ops.hpp"

using namespace grokkd;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values));
}

// Mixed-sign weights with |w| in [lo_mag, hi_mag]; keeps finite-difference
// probe losses small while the gradients stay O(|w|).
Tensor probe_weights(Shape shape, std::uint64_t seed, float lo_mag = 3.0f, float hi_mag = 5.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo_mag, hi_mag);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = dist(rng) * (i % 2 == 0 ? 1.0f : -1.0f);
  }
  return Tensor(std::move(shape), std::move(values));
}

// Positive magnitudes U(1,2) with the sign flipping only along `axis`. A
// product-op gradient that contracts over the other axes then has a uniform
// sign per coordinate (no cancellation), while the probe loss still cancels
// across the signed axis.
Tensor axis_signed_weights(Shape shape, std::uint64_t seed, int axis) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(1.0f, 2.0f);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (int i = int(shape.size()) - 2; i >= 0; --i) {
    strides[std::size_t(i)] = strides[std::size_t(i) + 1] * shape[std::size_t(i) + 1];
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::int64_t coord = (std::int64_t(i) / strides[std::size_t(axis)]) % shape[std::size_t(axis)];
    values[i] = dist(rng) * (coord % 2 == 0 ? 1.0f : -1.0f);
  }
  return Tensor(std::move(shape), std::move(values));
}

Tensor positive_weights(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(1.0f, 2.0f);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values));
}

using FdFn = std::function<Tensor(const Tensor&, Tape*)>;

double fd(const FdFn& f, const Tensor& point, double eps = 1e-3) {
  return ops::finite_difference_check(f, point, eps);
}

}  // namespace

TEST_CASE("tensor shape/data invariants") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0f, 2.0f}), DimensionError);
  CHECK_THROWS_AS(Tensor({0}, {}), DimensionError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.numel() == 4);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK_THROWS_AS(t.reshaped({3, 2}), DimensionError);
  Tensor v = t.reshaped({4});
  v.data()[0] = 9.0f;
  CHECK(t.data()[0] == 9.0f);  // views alias storage
}

TEST_CASE("matmul forward examples") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor prod = ops::matmul(eye, m, nullptr);
  CHECK(prod.values() == std::vector<float>{1, 2, 3, 4});

  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  CHECK(ops::matmul(row, col, nullptr).item() == doctest::Approx(11.0));

  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), nullptr);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);  // names both shapes
  }
}

TEST_CASE("matmul gradient of sum(A*B) wrt A at ones/identity") {
  Tensor b({2, 2}, {1, 0, 0, 1});
  auto f = [&](const Tensor& a, Tape* tape) { return ops::sum(ops::matmul(a, b, tape), tape); };

  Tensor a = Tensor::full({2, 2}, 1.0f);
  Tensor probe = a.detached_copy();
  probe.set_requires_grad(true);
  Tape tape;
  Tensor loss = f(probe, &tape);
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(probe.grad()[std::size_t(i)] == doctest::Approx(1.0));
  CHECK(fd(f, a) < 1e-3);
}

TEST_CASE("elementwise examples") {
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  CHECK(ops::add(a, b, nullptr).values() == std::vector<float>{4, 6});
  CHECK(ops::sub(a, b, nullptr).values() == std::vector<float>{-2, -2});
  CHECK(ops::mul(a, b, nullptr).values() == std::vector<float>{3, 8});
  CHECK(ops::log1p(Tensor::scalar(0.0f), nullptr).item() == 0.0f);
  CHECK_THROWS_AS(ops::log1p(Tensor::scalar(-1.5f), nullptr), DomainError);

  // gradient of exp at 0 is 1
  Tensor x = Tensor::scalar(0.0f);
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = ops::exp(x, &tape);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(1.0));

  // scalar broadcasting, both orders
  Tensor s = Tensor::scalar(2.0f);
  CHECK(ops::mul(a, s, nullptr).values() == std::vector<float>{2, 4});
  CHECK(ops::add(s, a, nullptr).values() == std::vector<float>{3, 4});
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2}), Tensor::zeros({3}), nullptr), DimensionError);
}

TEST_CASE("signed_log1p is odd, monotone, g(0)=0, g(1)=ln2") {
  Tensor x({5}, {-3.0f, -1.0f, 0.0f, 1.0f, 3.0f});
  Tensor y = ops::signed_log1p(x, nullptr);
  CHECK(y.values()[2] == 0.0f);
  CHECK(y.values()[3] == doctest::Approx(std::log(2.0)));
  CHECK(y.values()[1] == doctest::Approx(-std::log(2.0)));
  for (int i = 0; i + 1 < 5; ++i) CHECK(y.values()[std::size_t(i)] < y.values()[std::size_t(i + 1)]);
  CHECK(y.values()[0] == doctest::Approx(-y.values()[4]));
}

TEST_CASE("row_softmax examples") {
  Tensor z({1, 3}, {0, 0, 0});
  Tensor pz = ops::row_softmax(z, 1.0, nullptr);
  for (float v : pz.values()) CHECK(v == doctest::Approx(1.0 / 3));

  Tensor r({1, 2}, {std::log(2.0f), 0.0f});
  Tensor p = ops::row_softmax(r, 1.0, nullptr);
  CHECK(p.values()[0] == doctest::Approx(2.0 / 3).epsilon(1e-6));
  CHECK(p.values()[1] == doctest::Approx(1.0 / 3).epsilon(1e-6));

  // huge temperature flattens any row
  Tensor big = random_tensor({4, 6}, 7, -5.0f, 5.0f);
  Tensor flat = ops::row_softmax(big, 1e6, nullptr);
  for (float v : flat.values()) CHECK(v == doctest::Approx(1.0 / 6).epsilon(1e-4));

  // magnitudes up to 1e30 stay finite with unit row sums
  Tensor extreme({2, 3}, {1e30f, 0.0f, -1e30f, -1e30f, 5.0f, 1e30f});
  Tensor pe = ops::row_softmax(extreme, 1.0, nullptr);
  for (std::int64_t row = 0; row < 2; ++row) {
    double sum = 0;
    for (std::int64_t i = 0; i < 3; ++i) {
      const float v = pe.values()[std::size_t(row * 3 + i)];
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0f);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  CHECK_THROWS_AS(ops::row_softmax(Tensor::scalar(std::nanf("")), 1.0, nullptr), NumericError);
  CHECK_THROWS_AS(ops::row_softmax(z, 0.0, nullptr), ContractError);
}

TEST_CASE("backward basics") {
  // loss = sum(x^2) at [1, -2] -> grad [2, -4]
  Tensor x({2}, {1.0f, -2.0f});
  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = ops::sum(ops::mul(x, x, &tape), &tape);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));

  // repeated backward without reset accumulates one more contribution
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));

  // untouched parameter keeps zero grad
  Tensor p = Tensor::zeros({3});
  p.set_requires_grad(true);
  CHECK(p.grad() == std::vector<float>{0, 0, 0});

  // non-scalar loss rejected
  Tape t2;
  Tensor y = random_tensor({3}, 3);
  y.set_requires_grad(true);
  Tensor z = ops::mul(y, y, &t2);
  CHECK_THROWS_AS(t2.backward(z), ContractError);
}

TEST_CASE("finite_difference_check oracle behaviour") {
  auto f_sum = [](const Tensor& x, Tape* tape) { return ops::sum(x, tape); };
  CHECK(fd(f_sum, Tensor({5}, {0.1f, -0.1f, 0.2f, -0.2f, 0.0125f})) < 1e-6);

  auto f_sumsq = [](const Tensor& x, Tape* tape) { return ops::sum(ops::mul(x, x, tape), tape); };
  CHECK(fd(f_sumsq, Tensor({3}, {1, 2, 3})) < 1e-4);

  // kink at the evaluation point: unreliable by design, reports a large value
  auto f_relu = [](const Tensor& x, Tape* tape) { return ops::sum(ops::relu(x, tape), tape); };
  CHECK(fd(f_relu, Tensor::zeros({1})) > 0.1);
}

TEST_CASE("gradient checks across every differentiable op") {
  const double tol = 1e-3;
  Tensor x23 = random_tensor({2, 3}, 21);
  Tensor aux23 = random_tensor({2, 3}, 22, 0.5f, 1.5f);
  Tensor w23 = probe_weights({2, 3}, 101);

  auto wsum = [](const Tensor& y, const Tensor& w, Tape* t) {
    return ops::sum(ops::mul(y, w, t), t);
  };

  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::add(x, aux23, t), w23, t); }, x23) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::sub(aux23, x, t), w23, t); }, x23) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::mul(x, aux23, t), w23, t); }, x23) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::mul(x, x, t), w23, t); },
           random_tensor({2, 3}, 23, 0.4f, 1.2f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::scale(x, -2.5, t), w23, t); }, x23) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::neg(x, t), w23, t); }, x23) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::exp(x, t), w23, t); }, x23) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::log1p(x, t), w23, t); },
           random_tensor({2, 3}, 24, -0.4f, 2.0f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::signed_log1p(x, t), w23, t); },
           random_tensor({2, 3}, 25, 0.2f, 2.0f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::signed_log1p(x, t), w23, t); },
           random_tensor({2, 3}, 26, -2.0f, -0.2f)) < tol);
  // keep relu inputs away from the kink
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::relu(x, t), w23, t); },
           random_tensor({2, 3}, 27, 0.2f, 1.0f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::relu(x, t), w23, t); },
           random_tensor({2, 3}, 28, -1.0f, -0.2f)) < tol);

  // softmax family: narrow inputs keep the probability floor high, mixed-sign
  // weights keep the probe loss near zero
  Tensor w14 = probe_weights({1, 4}, 102);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::row_softmax(x, 1.0, t), w14, t);
        }, random_tensor({1, 4}, 29, -0.2f, 0.2f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::row_softmax(x, 0.7, t), w14, t);
        }, random_tensor({1, 4}, 30, -0.2f, 0.2f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::row_log_softmax(x, 1.0, t), w14, t);
        }, random_tensor({1, 4}, 31, -0.5f, 0.5f)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::row_log_softmax(x, 2.0, t), w14, t);
        }, random_tensor({1, 4}, 31, -0.5f, 0.5f)) < tol);

  Tensor w144 = probe_weights({1, 4, 4}, 103);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::causal_row_softmax(x, t), w144, t);
        }, random_tensor({1, 4, 4}, 33, -0.2f, 0.2f)) < tol);

  CHECK(fd([&](const Tensor& x, Tape* t) { return ops::mean(ops::mul(x, w23, t), t); }, x23) < tol);

  std::vector<std::int32_t> idx{2, 0};
  Tensor w2 = probe_weights({2}, 104);
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::select_index(x, idx, t), w2, t); },
           x23) < tol);
  std::vector<std::int64_t> rows{1, 1, 0};
  Tensor w33 = positive_weights({3, 3}, 105);  // duplicated row: keep scatter-adds same-sign
  CHECK(fd([&](const Tensor& x, Tape* t) { return wsum(ops::gather_rows(x, rows, t), w33, t); },
           x23) < tol);
  Tensor w13 = probe_weights({1, 3}, 106);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::select_position(x.reshaped({1, 2, 3}), 1, t), w13, t);
        }, x23) < tol);

  std::vector<std::int32_t> ids{1, 1, 2, 0};
  Tensor x34 = random_tensor({3, 4}, 34);
  Tensor w44 = positive_weights({4, 4}, 107);  // duplicated id
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::embedding_lookup(x, ids, t), w44, t);
        }, x34) < tol);

  Tensor w244 = probe_weights({2, 4, 4}, 108);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::split_heads(x, 2, t).reshaped({2, 4, 4}), w244, t);
        }, random_tensor({2, 4, 4}, 35)) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::merge_heads(x, 2, t).reshaped({2, 4, 4}), w244, t);
        }, random_tensor({4, 4, 2}, 36)) < tol);

  // batched products: small extents, positive operands, weight signs
  // structured along the axis the checked gradient does not contract over
  Tensor b232 = random_tensor({2, 3, 2}, 37, 0.5f, 1.5f);
  Tensor b223 = random_tensor({2, 2, 3}, 38, 0.5f, 1.5f);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::bmm(x, b223, t), axis_signed_weights({2, 3, 3}, 109, 1), t);
        }, b232) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::bmm(b232, x, t), axis_signed_weights({2, 3, 3}, 113, 2), t);
        }, random_tensor({2, 2, 3}, 39, 0.5f, 1.5f)) < tol);
  Tensor b242 = random_tensor({2, 4, 2}, 40, 0.5f, 1.5f);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::bmm_nt(x, b242, t), axis_signed_weights({2, 3, 4}, 110, 1), t);
        }, b232) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::bmm_nt(b232, x, t), axis_signed_weights({2, 3, 4}, 114, 2), t);
        }, b242) < tol);

  // layer norm: fixed values chosen so every gradient coordinate is bounded
  // away from zero (the mean-subtraction in the backward invites cancellation)
  Tensor g4({4}, {1.5f, 0.8f, 1.2f, 1.0f});
  Tensor be4({4}, {0.1f, -0.2f, 0.3f, 0.0f});
  Tensor x14({1, 4}, {0.9f, 0.3f, -0.3f, -0.9f});
  Tensor wln({1, 4}, {2.0f, -1.0f, 1.0f, -2.0f});
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::layer_norm(x, g4, be4, 1e-5, t), wln, t);
        }, x14) < tol);
  CHECK(fd([&](const Tensor& g, Tape* t) {
          return wsum(ops::layer_norm(x14, g, be4, 1e-5, t), wln, t);
        }, g4) < tol);
  CHECK(fd([&](const Tensor& b, Tape* t) {
          return wsum(ops::layer_norm(x14, g4, b, 1e-5, t), wln, t);
        }, be4) < tol);

  Tensor m34 = random_tensor({3, 4}, 44, 0.5f, 1.5f);
  Tensor m42 = random_tensor({4, 2}, 45, 0.5f, 1.5f);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::matmul(x, m42, t), axis_signed_weights({3, 2}, 112, 0), t);
        }, m34) < tol);
  CHECK(fd([&](const Tensor& x, Tape* t) {
          return wsum(ops::matmul(m34, x, t), axis_signed_weights({3, 2}, 115, 1), t);
        }, m42) < tol);
}

TEST_CASE("tape replay is deterministic") {
  auto run = [](std::uint64_t seed) {
    Tensor x = random_tensor({4, 4}, seed);
    x.set_requires_grad(true);
    Tensor w = random_tensor({4, 4}, seed + 1);
    w.set_requires_grad(true);
    Tape tape;
    Tensor h = ops::relu(ops::matmul(x, w, &tape), &tape);
    Tensor p = ops::row_softmax(h, 2.0, &tape);
    Tensor loss = ops::mean(ops::mul(p, h, &tape), &tape);
    tape.backward(loss);
    std::vector<float> grads = x.grad();
    grads.insert(grads.end(), w.grad().begin(), w.grad().end());
    return grads;
  };
  const auto a = run(99), b = run(99);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("causal softmax zeroes the strict upper triangle") {
  Tensor s = random_tensor({2, 4, 4}, 55);
  Tensor p = ops::causal_row_softmax(s, nullptr);
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t i = 0; i < 4; ++i) {
      double sum = 0;
      for (std::int64_t j = 0; j < 4; ++j) {
        const float v = p.values()[std::size_t(((n * 4) + i) * 4 + j)];
        if (j > i) CHECK(v == 0.0f);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}
