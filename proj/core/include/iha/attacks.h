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

// Membership scores. For every attack a higher score means "more likely a
// member".
//
// The inverse-Hessian attack uses, for a record z with gradient g,
//   a = H^-1 g,  b = H^-1 grad L0,  c = H^-1 a,  kappa = lambda alpha / (1+mu)
//   I1 = (1/n) (1 - kappa) |a|^2
//   I2 = 2 (1 - kappa) b^T a
//   I3 = (alpha / (2n)) (2 - kappa) a^T c
//   I4 = alpha (2 - kappa) b^T c
//   score = loss / (1 + mu) - (I1 + I2 + I3 + I4) / lambda
// where L0 is the training loss without z: grad L0 = grad_train - g / n for a
// member and grad_train for a non-member.

#ifndef IHA_ATTACKS_H_
#define IHA_ATTACKS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "iha/data.h"
#include "iha/linalg.h"
#include "iha/model.h"
#include "iha/training.h"

namespace iha {

struct TermMask {
  bool loss = true;
  bool i1 = true;
  bool i2 = true;
  bool i3 = true;
  bool i4 = true;

  static TermMask All() { return {}; }
  bool empty() const { return !(loss || i1 || i2 || i3 || i4); }
  // Comma-separated subset of {loss, i1, i2, i3, i4}, or "all".
  std::string ToString() const;
};

absl::StatusOr<TermMask> ParseTermMask(absl::string_view text);

enum class IhaOutputMode { kRawScore, kSigmoidProbability };

struct IhaConfig {
  double lambda = 0.01;
  double mu = 0.9;
  double alpha = 5e-4;
  // Member count of the target's training set.
  std::size_t n = 0;
  // Batch size; only the sigmoid output scale uses it.
  int batch_size = 32;
  double gamma = 0.5;
  TermMask term_mask;
  ConditioningPolicy conditioning = ConditioningPolicy::Damped(0.2);
  double l0_fraction = 1.0;
  // Subsets for partial L0 are drawn with DeriveSeed(l0_seed, record_index).
  std::uint64_t l0_seed = 0;
  IhaOutputMode output_mode = IhaOutputMode::kRawScore;
  // Used on the conjugate-gradient path.
  double cg_tol = 1e-10;
  int cg_max_iter = 2000;

  static IhaConfig FromSgd(const SgdConfig& cfg, std::size_t n);
  absl::Status Validate() const;
};

struct IhaTerms {
  double loss_value = 0.0;
  double i1 = 0.0;
  double i2 = 0.0;
  double i3 = 0.0;
  double i4 = 0.0;
  // Conjugate-gradient bookkeeping; zero iterations on the exact path.
  int cg_iterations = 0;
  bool converged = true;
};

enum class HessianMode { kExactHessian, kHvpOnly };

// Everything about one trained target model that the scoring functions
// share. Immutable once prepared.
struct TargetContext {
  ModelSpec spec;
  ParameterVector w;
  HessianMode mode = HessianMode::kExactHessian;
  // Eigendecomposition of the member-set Hessian (exact mode only).
  std::optional<EigenDecomposition> hessian;
  // Mean unregularized gradient over the members.
  Vector grad_train;
  // Member dataset indices, ascending, and the matching records.
  std::vector<std::size_t> member_indices;
  std::vector<Record> members;
  // Mean unregularized training loss, the estimate of L*.
  std::optional<double> train_loss;

  std::size_t n() const { return members.size(); }
  // Position of `index` in member_indices, if it is a member.
  std::optional<std::size_t> MemberSlot(std::size_t index) const;
  // Hessian-vector product over the members; not thread-safe to share.
  LinearOperator HvpOperator() const;
};

// `precomputed` skips the Hessian computation when a stored
// eigendecomposition of the same model is available.
absl::StatusOr<TargetContext> PrepareTargetContext(
    const ModelSpec& spec, const ParameterVector& w, const Dataset& dataset,
    const MembershipMask& mask, HessianMode mode,
    const HessianOptions& hessian_options = {},
    std::optional<EigenDecomposition> precomputed = std::nullopt);

// -loss(w, z).
absl::StatusOr<double> LossAttack(const ModelSpec& spec,
                                  const ParameterVector& w, const Record& z);

// g^T H^-1 g under `policy` (exact mode) or damped CG (HVP-only mode).
absl::StatusOr<double> SifScore(const Record& z, const TargetContext& ctx,
                                const ConditioningPolicy& policy,
                                double cg_tol = 1e-10, int cg_max_iter = 2000);

// Scores many records against one target, reusing the per-target
// precomputation (H^-1 grad_train and the eigenbasis projection). The
// context must outlive the scorer.
class IhaScorer {
 public:
  static absl::StatusOr<IhaScorer> Create(const TargetContext& ctx,
                                          const IhaConfig& cfg);

  // `index` is the record's dataset index; membership is looked up in ctx.
  absl::StatusOr<IhaTerms> Terms(const Record& z, std::size_t index) const;
  absl::StatusOr<double> Score(const IhaTerms& terms) const;

  const IhaConfig& config() const { return cfg_; }

 private:
  IhaScorer(const TargetContext& ctx, IhaConfig cfg)
      : ctx_(&ctx), cfg_(std::move(cfg)) {}

  absl::StatusOr<Vector> SolveCg(const Vector& rhs, IhaTerms& terms) const;
  absl::StatusOr<Vector> PartialL0Grad(std::size_t index,
                                       std::optional<std::size_t> slot) const;

  const TargetContext* ctx_;
  IhaConfig cfg_;
  // Exact path: inverse spectrum weights and U^T grad_train.
  Vector weights_;
  Vector grad_train_eig_;
  // CG path: H^-1 grad_train.
  Vector inv_grad_train_;
};

// One-shot helpers around IhaScorer.
absl::StatusOr<IhaTerms> ComputeIhaTerms(const Record& z, std::size_t index,
                                         const TargetContext& ctx,
                                         const IhaConfig& cfg);
// Raw score: loss / (1 + mu) - (masked I-terms) / lambda, the loss term only
// when masked in. Sigmoid mode maps raw to
// sigmoid(S (1 - mu) / (2 n L*) raw + ln(gamma / (1 - gamma))).
absl::StatusOr<double> IhaScore(const IhaTerms& terms, const IhaConfig& cfg,
                                std::optional<double> l_star);

enum class LiraMode { kOnline, kOffline };

struct LiraResult {
  double score = 0.0;
  // Set when a fitted variance fell below the floor and was clamped.
  bool variance_clamped = false;
};

inline constexpr double kLiraVarianceFloor = 1e-12;

// Online: log N(t; in) - log N(t; out). Offline: 1 - Phi((t - m_out) / s_out).
// Statistics are loss-oriented: smaller means more member-like.
absl::StatusOr<LiraResult> LiraScore(double target_stat,
                                     std::span<const double> in_stats,
                                     std::span<const double> out_stats,
                                     LiraMode mode);

// Fraction of reference losses above the target loss, ties counting half.
absl::StatusOr<double> LAttackScore(double target_loss,
                                    std::span<const double> ref_losses);

// Offline LiRA over leave-one-out reference losses.
absl::StatusOr<LiraResult> LiraLScore(double target_loss,
                                      std::span<const double> ref_losses);

enum class LiraStatistic { kLoss, kLogitConfidence };

// Loss-oriented per-record statistic: the loss, or the negated logit
// confidence.
absl::StatusOr<double> RecordStatistic(const ModelSpec& spec,
                                       const ParameterVector& w,
                                       const Record& z, LiraStatistic stat);

}  // namespace iha

#endif  // IHA_ATTACKS_H_
