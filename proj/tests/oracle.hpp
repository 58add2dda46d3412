#pragma once

// Independent reference computations for the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "numlm/gradcore.hpp"

namespace oracle {

// Central-difference check of every entry of every tensor in `params`.
// Returns max |analytic - fd| / max(1, |fd|).
inline double grad_check(const std::vector<numlm::ad::Tensor*>& params, const std::function<numlm::ad::Tensor()>& loss,
                         double h = 1e-4) {
  for (auto* p : params) p->zero_grad();
  numlm::ad::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (auto* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

  numlm::ad::NoGradGuard guard;
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto data = params[t]->mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[t].empty() ? 0.0 : analytic[t][i];
      worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

inline numlm::ad::Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, double sd = 1.0,
                                       bool grad = true) {
  std::normal_distribution<double> n(0.0, sd);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return numlm::ad::Tensor::from({r, c}, v, grad);
}

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const numlm::ad::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b, double eps = 1e-5) {
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mu) / std::sqrt(var + eps) * g[i] + b[i];
  return out;
}

inline std::vector<double> values(const numlm::ad::Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Empty when no gradient was accumulated.
inline std::vector<double> values_of_grad(const numlm::ad::Tensor& t) {
  if (!t.has_grad()) return {};
  return {t.grad().begin(), t.grad().end()};
}

}  // namespace oracle
