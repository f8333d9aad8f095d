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

#include "iha/linalg.h"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/string_view.h"
#include "iha/io.h"
#include "iha/status.h"

namespace iha {
namespace {

constexpr absl::string_view kEigenMagic = "IHAEIG1";

}  // namespace

absl::StatusOr<SymMatrix> SymMatrix::FromFull(Matrix m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "symmetric matrix must be square and non-empty");
  }
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = j + 1; i < m.rows(); ++i) {
      if (m(i, j) != m(j, i)) {
        return MakeError(ErrorCode::kInvalidArgument,
                         absl::StrFormat("matrix not symmetric at (%d, %d)",
                                         i, j));
      }
    }
  }
  return SymMatrix(std::move(m));
}

SymMatrix SymMatrix::FromUpper(const Matrix& m) {
  Matrix out = m.triangularView<Eigen::Upper>();
  out.triangularView<Eigen::StrictlyLower>() =
      m.transpose().triangularView<Eigen::StrictlyLower>();
  return SymMatrix(std::move(out));
}

SymMatrix SymMatrix::Symmetrized(const Matrix& m) {
  Matrix out = 0.5 * (m + m.transpose());
  return SymMatrix(std::move(out));
}

SymMatrix SymMatrix::Identity(int dim) {
  return SymMatrix(Matrix::Identity(dim, dim));
}

SymMatrix SymMatrix::Diagonal(const Vector& diagonal) {
  return SymMatrix(diagonal.asDiagonal().toDenseMatrix());
}

SymMatrix SymMatrix::Zero(int dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

Matrix EigenDecomposition::Reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

absl::Status ConditioningPolicy::Validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "conditioning epsilon must be finite and >= 0");
  }
  if (mode == ConditioningMode::kLowRank && epsilon <= 0.0) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "low-rank conditioning needs epsilon > 0");
  }
  return absl::OkStatus();
}

std::string ConditioningPolicy::ToString() const {
  return absl::StrCat(mode == ConditioningMode::kDamped ? "damped" : "low_rank",
                      "(", epsilon, ")");
}

absl::StatusOr<ConditioningPolicy> ParseConditioningPolicy(
    absl::string_view mode, double epsilon) {
  ConditioningPolicy policy;
  if (mode == "damped") {
    policy = ConditioningPolicy::Damped(epsilon);
  } else if (mode == "low_rank") {
    policy = ConditioningPolicy::LowRank(epsilon);
  } else {
    return MakeError(ErrorCode::kInvalidArgument,
                     absl::StrCat("unknown conditioning mode '", mode, "'"));
  }
  IHA_RETURN_IF_ERROR(policy.Validate());
  return policy;
}

absl::StatusOr<EigenDecomposition> SymEigendecompose(const SymMatrix& m) {
  if (!m.matrix().allFinite()) {
    return MakeError(ErrorCode::kNonFiniteInput,
                     "matrix has NaN or infinite entries");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.matrix(),
                                               Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    return MakeError(ErrorCode::kNonFiniteInput,
                     "eigensolver failed to converge");
  }
  // Eigen sorts ascending; flip to descending.
  EigenDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

absl::StatusOr<Vector> ConditionedInverseSpectrum(
    const EigenDecomposition& decomp, const ConditioningPolicy& policy) {
  IHA_RETURN_IF_ERROR(policy.Validate());
  const Vector& sigma = decomp.eigenvalues;
  Vector weights(sigma.size());
  if (policy.mode == ConditioningMode::kDamped) {
    const double smallest = sigma.size() > 0 ? sigma.minCoeff() : 1.0;
    if (!(smallest + policy.epsilon > 0.0)) {
      return MakeError(
          ErrorCode::kIllConditioned,
          absl::StrFormat("smallest eigenvalue %g + damping %g is not positive",
                          smallest, policy.epsilon));
    }
    weights = (sigma.array() + policy.epsilon).inverse();
  } else {
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      weights(i) = sigma(i) > policy.epsilon ? 1.0 / sigma(i) : 0.0;
    }
  }
  return weights;
}

absl::StatusOr<Vector> ConditionedInverseApply(
    const EigenDecomposition& decomp, const ConditioningPolicy& policy,
    const Vector& v) {
  if (v.size() != decomp.dim()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     absl::StrFormat("vector has %d entries, operator is %dx%d",
                                     v.size(), decomp.dim(), decomp.dim()));
  }
  IHA_ASSIGN_OR_RETURN(Vector weights,
                       ConditionedInverseSpectrum(decomp, policy));
  Vector coords = decomp.eigenvectors.transpose() * v;
  coords.array() *= weights.array();
  return decomp.eigenvectors * coords;
}

absl::StatusOr<CgResult> CgSolve(const LinearOperator& hvp, const Vector& b,
                                 const CgOptions& options) {
  if (!(options.tol > 0.0)) {
    return MakeError(ErrorCode::kInvalidArgument, "cg tolerance must be > 0");
  }
  if (!b.allFinite()) {
    return MakeError(ErrorCode::kNonFiniteInput, "right-hand side not finite");
  }
  const double b_norm = b.norm();
  CgResult result;
  result.x = Vector::Zero(b.size());
  if (b_norm == 0.0) {
    result.converged = true;
    return result;
  }
  auto apply = [&](const Vector& p) -> Vector {
    Vector ap = hvp(p);
    if (options.damping != 0.0) ap.noalias() += options.damping * p;
    return ap;
  };
  const double target = options.tol * b_norm;

  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  Vector best_x = x;
  double best_res = std::sqrt(rr);

  int it = 0;
  while (it < options.max_iter) {
    ++it;
    const Vector ap = apply(p);
    if (ap.size() != b.size()) {
      return MakeError(ErrorCode::kDimensionMismatch,
                       "operator output has wrong dimension");
    }
    const double p_ap = p.dot(ap);
    if (!std::isfinite(p_ap)) {
      return MakeError(ErrorCode::kDivergedNumerically,
                       absl::StrCat("non-finite curvature at iteration ", it));
    }
    if (p_ap <= 0.0) {
      return MakeError(
          ErrorCode::kIndefiniteOperator,
          absl::StrFormat("p^T A p = %g <= 0 at iteration %d", p_ap, it));
    }
    const double alpha = rr / p_ap;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    double rr_next = r.squaredNorm();
    if (!std::isfinite(rr_next) || !x.allFinite()) {
      return MakeError(ErrorCode::kDivergedNumerically,
                       absl::StrCat("non-finite iterate at iteration ", it));
    }
    if (std::sqrt(rr_next) <= target) {
      // The recursive residual drifts from the true one at tight tolerances;
      // confirm before declaring convergence and restart from the true
      // residual otherwise.
      const Vector true_r = b - apply(x);
      const double true_norm = true_r.norm();
      if (true_norm <= target) {
        result.x = std::move(x);
        result.iterations = it;
        result.relative_residual = true_norm / b_norm;
        result.converged = true;
        return result;
      }
      r = true_r;
      rr_next = r.squaredNorm();
      p = r;
      rr = rr_next;
      if (true_norm < best_res) {
        best_res = true_norm;
        best_x = x;
      }
      continue;
    }
    const double res = std::sqrt(rr_next);
    if (res < best_res) {
      best_res = res;
      best_x = x;
    }
    const double beta = rr_next / rr;
    p = r + beta * p;
    rr = rr_next;
  }
  result.x = std::move(best_x);
  result.iterations = it;
  result.relative_residual = (b - apply(result.x)).norm() / b_norm;
  result.converged = result.relative_residual <= options.tol;
  return result;
}

std::string SerializeEigenDecomposition(const EigenDecomposition& decomp) {
  const auto d = static_cast<std::uint64_t>(decomp.dim());
  std::string out;
  out.reserve(kEigenMagic.size() + 8 + 8 * (d + d * d));
  out.append(kEigenMagic.data(), kEigenMagic.size());
  AppendU64Le(out, d);
  for (Eigen::Index i = 0; i < decomp.eigenvalues.size(); ++i) {
    AppendF64Le(out, decomp.eigenvalues(i));
  }
  for (Eigen::Index j = 0; j < decomp.eigenvectors.cols(); ++j) {
    for (Eigen::Index i = 0; i < decomp.eigenvectors.rows(); ++i) {
      AppendF64Le(out, decomp.eigenvectors(i, j));
    }
  }
  return out;
}

absl::StatusOr<EigenDecomposition> ParseEigenDecomposition(
    absl::string_view bytes) {
  ByteReader reader(bytes);
  IHA_RETURN_IF_ERROR(reader.ExpectMagic(kEigenMagic));
  IHA_ASSIGN_OR_RETURN(std::uint64_t d, reader.ReadU64Le());
  if (d == 0 || d > (1u << 20) || reader.remaining() != 8 * (d + d * d)) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("eigendecomposition payload does not "
                                     "match dim %d",
                                     d));
  }
  const auto n = static_cast<Eigen::Index>(d);
  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    IHA_ASSIGN_OR_RETURN(out.eigenvalues(i), reader.ReadF64Le());
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      IHA_ASSIGN_OR_RETURN(out.eigenvectors(i, j), reader.ReadF64Le());
    }
  }
  return out;
}

absl::Status SaveEigenDecomposition(const EigenDecomposition& decomp,
                                    const std::filesystem::path& path) {
  return WriteFileAtomic(path, SerializeEigenDecomposition(decomp));
}

absl::StatusOr<EigenDecomposition> LoadEigenDecomposition(
    const std::filesystem::path& path) {
  IHA_ASSIGN_OR_RETURN(std::string bytes, ReadFileBytes(path));
  return ParseEigenDecomposition(bytes);
}

}  // namespace iha
