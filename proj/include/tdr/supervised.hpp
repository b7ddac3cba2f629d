#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tdr/lls.hpp"
#include "tdr/subspace.hpp"
#include "tdr/tensor.hpp"

namespace tdr::supervised {

struct FitConfig {
  double alpha = 0.5;  // weight of the completion term, in [0, 1]
  lls::FamilyKind family;
  double tol_epsilon = 1e-6;  // objective-decrease stop, relative to the initial value
  int max_iters = 200;
  std::uint64_t seed = 0;
  bool random_init = false;
};

/// Low-dimensional feature tensor (P1 x P2 x P3 x M, fully observed). Row m of
/// the mode-4 matricization holds asset m's vectorized features.
struct CoreTensor {
  Tensor4d s;
  MatrixX<double> s4() const { return matricize(s, 4); }
};

struct FitState {
  FactorSet factors;
  CoreTensor core;
  lls::ReparamCoefficients reg;
  std::vector<double> objective_history;
  std::vector<std::string> warnings;
};

/// Weighted objective: alpha * masked completion residual plus (1 - alpha) *
/// regression loss. The regression loss is the plain squared error for the
/// normal family and the reparameterized negative log-likelihood otherwise.
/// y must already be in the location-scale domain.
double objective(const Tensor4d& x, const VectorX<double>& y, const FactorSet& factors,
                 const Tensor4d& core, const lls::ReparamCoefficients& reg,
                 const FitConfig& cfg);

// One-shot block updates in their closed normal/squared-error forms. These are
// the exact minimizers of the corresponding sub-problems and are also used by
// the unsupervised completion baseline (alpha = 1). All of them leave the
// other blocks fixed.

/// Requires fully observed data.
MatrixX<double> update_factor_complete(const Tensor4d& x, const FactorSet& factors,
                                       const Tensor4d& core, int mode);

/// Solves one column of a factor against the observed entries of the matching
/// matricization row. A fully missing row leaves the column unchanged and
/// records a warning.
VectorX<double> update_factor_column_entrywise(const Tensor4d& x, const FactorSet& factors,
                                               const Tensor4d& core, int mode, Index column,
                                               std::vector<std::string>* warnings = nullptr);

/// Whole-frame missing data: modes 1 and 2 share one observed-column set, so
/// a single solve replaces the per-column sweep. Errors when the mask is not
/// frame-structured.
MatrixX<double> update_factor_imagewise(const Tensor4d& x, const FactorSet& factors,
                                        const Tensor4d& core, int mode);

/// Mode-4 matricized core update for fully observed data; returns the new S4
/// (M x P1*P2*P3). reg is ignored when alpha == 1.
MatrixX<double> update_core_complete(const Tensor4d& x, const VectorX<double>& y,
                                     const FactorSet& factors,
                                     const lls::ReparamCoefficients& reg, double alpha);

/// One row of the core update restricted to asset m's observed entries.
Eigen::RowVectorXd update_core_row_entrywise(const Tensor4d& x, const VectorX<double>& y,
                                             const FactorSet& factors,
                                             const lls::ReparamCoefficients& reg, double alpha,
                                             Index m);

/// Regression block given fixed features: ordinary least squares for the
/// normal family (sigma_tilde reported as 1; the squared-error objective does
/// not involve it), joint convex Newton solve otherwise.
lls::ReparamCoefficients update_regression_block(const VectorX<double>& y,
                                                 const MatrixX<double>& s4,
                                                 const lls::FamilyKind& family);

/// Reusable masked sub-problem solver over one data tensor. Precomputes the
/// matricizations and masks once and serves the block solves used by the
/// fitter, the completion baseline, and feature extraction; all methods
/// dispatch on the mask pattern (complete / whole frames missing / arbitrary
/// entries missing).
class MaskedSolver {
public:
  explicit MaskedSolver(const Tensor4d& x);
  ~MaskedSolver();
  MaskedSolver(MaskedSolver&&) noexcept;
  MaskedSolver& operator=(MaskedSolver&&) noexcept;

  const Tensor4d& data() const;  // zero-filled values, original mask
  MaskPattern pattern() const;

  /// Masked least-squares core rows under fixed factors (alpha = 1).
  MatrixX<double> solve_core(const FactorSet& factors) const;

  /// Weighted core update under fixed factors and regression coefficients;
  /// closed form on the quadratic path, per-row Newton otherwise (warm-started
  /// from s4_prev). y must be in the location-scale domain.
  MatrixX<double> update_core(const FactorSet& factors, const VectorX<double>& y,
                              const lls::ReparamCoefficients& reg, const FitConfig& cfg,
                              const MatrixX<double>& s4_prev) const;

  /// Factor update for one mode (the regression term never involves the
  /// factors, so this serves every alpha).
  MatrixX<double> update_factor(const FactorSet& factors, const Tensor4d& core, int mode,
                                std::vector<std::string>* warnings = nullptr) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Subspace basis from unsupervised multilinear PCA of the zero-filled data,
/// core from the alpha = 1 masked solve, regression from the core.
FitState init_heuristic(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims,
                        const FitConfig& cfg);

/// Seeded Gaussian factors, then core and regression as in init_heuristic.
FitState init_random(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims,
                     const FitConfig& cfg);

/// Cyclic block minimization: U1, U2, U3, regression coefficients, core, until
/// the objective decrease falls below tol_epsilon relative to its initial
/// value or max_iters is reached. Dispatches on the mask pattern (complete /
/// whole frames missing / arbitrary entries missing). y is the raw time
/// vector; log-time families are transformed internally. Should the
/// non-normal likelihood run into its perfect-fit degeneracy (the scale
/// estimate diverges once the core interpolates the responses), the fit stops
/// at the last completed cycle and records a warning.
FitState fit(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims,
             const FitConfig& cfg, const FitState* initial = nullptr);

}  // namespace tdr::supervised
