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

// Dense symmetric linear algebra: eigendecomposition, conditioned inverse
// application and a matrix-free conjugate gradient solver.

#ifndef IHA_LINALG_H_
#define IHA_LINALG_H_

#include <filesystem>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace iha {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Symmetric matrix with entries(i, j) == entries(j, i) bit-for-bit.
class SymMatrix {
 public:
  // Accepts only matrices that are already exactly symmetric.
  static absl::StatusOr<SymMatrix> FromFull(Matrix m);
  // Mirrors the upper triangle onto the lower one.
  static SymMatrix FromUpper(const Matrix& m);
  // (m + m^T) / 2, which is exactly symmetric in floating point.
  static SymMatrix Symmetrized(const Matrix& m);
  static SymMatrix Identity(int dim);
  static SymMatrix Diagonal(const Vector& diagonal);
  static SymMatrix Zero(int dim);

  int dim() const { return static_cast<int>(m_.rows()); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }
  Vector operator*(const Vector& v) const { return m_ * v; }

 private:
  explicit SymMatrix(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

// Eigenvalues sorted descending; eigenvectors are the matching orthonormal
// columns. Within a repeated eigenvalue any orthonormal basis is valid.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  int dim() const { return static_cast<int>(eigenvalues.size()); }
  Matrix Reconstruct() const;
};

enum class ConditioningMode { kDamped, kLowRank };

// Damped: invert (sigma_i + epsilon) for every mode.
// LowRank: invert sigma_i only for modes with sigma_i > epsilon, drop the rest.
struct ConditioningPolicy {
  ConditioningMode mode = ConditioningMode::kDamped;
  double epsilon = 0.0;

  static ConditioningPolicy Damped(double epsilon) {
    return {ConditioningMode::kDamped, epsilon};
  }
  static ConditioningPolicy LowRank(double epsilon) {
    return {ConditioningMode::kLowRank, epsilon};
  }

  absl::Status Validate() const;
  std::string ToString() const;
};

absl::StatusOr<ConditioningPolicy> ParseConditioningPolicy(
    absl::string_view mode, double epsilon);

absl::StatusOr<EigenDecomposition> SymEigendecompose(const SymMatrix& m);

// Per-mode weights w_i such that the conditioned inverse is
// U diag(w) U^T. Dropped modes get weight 0.
absl::StatusOr<Vector> ConditionedInverseSpectrum(
    const EigenDecomposition& decomp, const ConditioningPolicy& policy);

absl::StatusOr<Vector> ConditionedInverseApply(
    const EigenDecomposition& decomp, const ConditioningPolicy& policy,
    const Vector& v);

// y = A v for a symmetric operator A.
using LinearOperator = std::function<Vector(const Vector&)>;

struct CgOptions {
  double damping = 0.0;
  double tol = 1e-10;
  int max_iter = 1000;
};

struct CgResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0.0;
  // False when max_iter ran out; x is then the best iterate seen.
  bool converged = false;
};

// Solves (A + damping I) x = b to ||(A + damping I) x - b|| <= tol ||b||,
// where A is given only through `hvp`.
absl::StatusOr<CgResult> CgSolve(const LinearOperator& hvp, const Vector& b,
                                 const CgOptions& options);

// Binary layout: "IHAEIG1", dim (u64 LE), eigenvalues, eigenvectors in
// column-major order, all as f64 LE.
std::string SerializeEigenDecomposition(const EigenDecomposition& decomp);
absl::StatusOr<EigenDecomposition> ParseEigenDecomposition(
    absl::string_view bytes);
absl::Status SaveEigenDecomposition(const EigenDecomposition& decomp,
                                    const std::filesystem::path& path);
absl::StatusOr<EigenDecomposition> LoadEigenDecomposition(
    const std::filesystem::path& path);

}  // namespace iha

#endif  // IHA_LINALG_H_
