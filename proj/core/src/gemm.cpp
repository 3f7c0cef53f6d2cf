#include "gemm.hpp"

#include <Eigen/Core>

#include <vector>

namespace grokkd::detail {

namespace {

using MapF = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MapD = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// One scratch set per thread: runs are single-threaded, parallel runs are
// independent threads/processes.
struct Scratch {
  std::vector<double> a, b, c;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

void gemm_acc64(const float* a, const float* b, float* c,
                std::int64_t m, std::int64_t k, std::int64_t n,
                bool trans_a, bool trans_b, bool accumulate) {
  Scratch& ws = scratch();
  ws.a.resize(std::size_t(m) * std::size_t(k));
  ws.b.resize(std::size_t(k) * std::size_t(n));
  ws.c.resize(std::size_t(m) * std::size_t(n));

  MapD ad(ws.a.data(), m, k);
  if (trans_a) {
    ad = MapF(a, k, m).transpose().cast<double>();
  } else {
    ad = MapF(a, m, k).cast<double>();
  }
  MapD bd(ws.b.data(), k, n);
  if (trans_b) {
    bd = MapF(b, n, k).transpose().cast<double>();
  } else {
    bd = MapF(b, k, n).cast<double>();
  }

  MapD cd(ws.c.data(), m, n);
  cd.noalias() = ad * bd;

  const std::size_t total = std::size_t(m) * std::size_t(n);
  if (accumulate) {
    for (std::size_t i = 0; i < total; ++i) c[i] = float(double(c[i]) + ws.c[i]);
  } else {
    for (std::size_t i = 0; i < total; ++i) c[i] = float(ws.c[i]);
  }
}

}  // namespace grokkd::detail
