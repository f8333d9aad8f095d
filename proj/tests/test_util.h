/*
 * Copyright 2026 The IHA Audit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Independent reference implementations used by the unit and acceptance
// tests. None of them call into the code they check.

#ifndef IHA_TESTS_TEST_UTIL_H_
#define IHA_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "iha/linalg.h"
#include "iha/model.h"
#include "iha/rng.h"

namespace iha::test {

// Central differences of a scalar function.
inline Vector FdGradient(const std::function<double(const Vector&)>& f,
                         const Vector& w, double h) {
  Vector g(w.size());
  Vector p = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    p(i) = w(i) + h;
    const double up = f(p);
    p(i) = w(i) - h;
    const double down = f(p);
    p(i) = w(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// Central differences of a gradient function; column j is
// (g(w + h e_j) - g(w - h e_j)) / 2h.
inline Matrix FdJacobian(const std::function<Vector(const Vector&)>& g,
                         const Vector& w, double h) {
  Matrix jac(w.size(), w.size());
  Vector p = w;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    p(j) = w(j) + h;
    const Vector up = g(p);
    p(j) = w(j) - h;
    const Vector down = g(p);
    p(j) = w(j);
    jac.col(j) = (up - down) / (2.0 * h);
  }
  return jac;
}

// Gaussian elimination with partial pivoting.
inline Vector DenseSolve(Matrix a, Vector b) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index pivot = k;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > std::abs(a(pivot, k))) pivot = i;
    }
    a.row(k).swap(a.row(pivot));
    std::swap(b(k), b(pivot));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (Eigen::Index j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b(i) -= f * b(k);
    }
  }
  Vector x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Eigen::Index j = i + 1; j < n; ++j) s -= a(i, j) * x(j);
    x(i) = s / a(i, i);
  }
  return x;
}

// P(member > non-member) + P(tie) / 2 by counting all pairs.
inline double PairCountingAuc(const std::vector<double>& members,
                              const std::vector<double>& non_members) {
  double wins = 0.0;
  for (double m : members) {
    for (double o : non_members) {
      if (m > o) {
        wins += 1.0;
      } else if (m == o) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(members.size()) *
                 static_cast<double>(non_members.size()));
}

// log N(x; mean, cov) via a hand-rolled Cholesky factorization.
inline double GaussianLogDensity(const Vector& x, const Vector& mean,
                                 const Matrix& cov) {
  const Eigen::Index d = cov.rows();
  Matrix l = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double s = cov(j, j);
    for (Eigen::Index k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
    l(j, j) = std::sqrt(s);
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double t = cov(i, j);
      for (Eigen::Index k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  // Forward substitution for L y = x - mean.
  Vector y = x - mean;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index k = 0; k < i; ++k) y(i) -= l(i, k) * y(k);
    y(i) /= l(i, i);
  }
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) +
                 log_det + y.squaredNorm());
}

inline Matrix RandomGaussianMatrix(Eigen::Index rows, Eigen::Index cols,
                                   CounterRng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.NextGaussian();
  }
  return m;
}

inline Vector RandomGaussianVector(Eigen::Index n, CounterRng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.NextGaussian();
  return v;
}

// Q diag(s) Q^T with Q a random orthogonal matrix and s log-uniform in
// [lo, hi].
inline Matrix RandomSpd(Eigen::Index dim, double lo, double hi,
                        CounterRng& rng) {
  const Eigen::HouseholderQR<Matrix> qr(RandomGaussianMatrix(dim, dim, rng));
  const Matrix q = qr.householderQ();
  Vector s(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    s(i) = lo * std::pow(hi / lo, rng.NextUnit());
  }
  const Matrix m = q * s.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

// Gaussian features; labels are class indices for multi-output models and
// Gaussian targets for single-output ones.
inline std::vector<Record> RandomRecords(const ModelSpec& spec, std::size_t n,
                                         CounterRng& rng) {
  std::vector<Record> out(n);
  for (Record& r : out) {
    r.features = RandomGaussianVector(spec.input_dim, rng);
    r.label = spec.output_dim == 1
                  ? rng.NextGaussian()
                  : static_cast<double>(rng.NextBelow(spec.output_dim));
  }
  return out;
}

inline Vector RandomParameters(const ModelSpec& spec, double scale,
                               CounterRng& rng) {
  return scale *
         RandomGaussianVector(static_cast<Eigen::Index>(spec.ParameterCount()),
                              rng);
}

// |a - b| / |b| in the Frobenius norm, with |b| floored at `floor`.
inline double RelativeError(const Matrix& a, const Matrix& b,
                            double floor = 1e-300) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

// Fresh directory under the system temp dir, removed on destruction.
class ScopedTempDir {
 public:
  explicit ScopedTempDir(const std::string& prefix = "iha_test") {
    static std::atomic<int> counter{0};
    const std::string stamp = std::to_string(::getpid()) + "_" +
                              std::to_string(counter.fetch_add(1));
    path_ = std::filesystem::temp_directory_path() / (prefix + "_" + stamp);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScopedTempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScopedTempDir(const ScopedTempDir&) = delete;
  ScopedTempDir& operator=(const ScopedTempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace iha::test

#endif  // IHA_TESTS_TEST_UTIL_H_
