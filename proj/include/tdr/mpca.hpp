#pragma once

#include <array>
#include <variant>

#include "tdr/subspace.hpp"
#include "tdr/tensor.hpp"

namespace tdr::mpca {

/// Smallest per-mode dimensions whose eigenvalue mass reaches the target
/// fraction of variation explained.
struct FveTarget {
  double target = 0.97;
};

struct FixedDims {
  SubspaceDims dims;
};

using Selector = std::variant<FveTarget, FixedDims>;

struct MpcaModel {
  FactorSet factors;  // orthonormal rows per mode
  std::array<VectorX<double>, 3> eigenvalues;  // full-projection scatter spectra, descending
  double fve_achieved = 0.0;  // smallest per-mode explained fraction at the chosen dims
};

/// Multilinear PCA of a fully observed sample tensor (samples on mode 4).
/// Samples are centered with the sample-mean tensor before the scatter
/// computation; the mode-wise eigenproblems are iterated until the captured
/// variance stabilizes (relative tolerance 1e-8, at most 50 sweeps).
MpcaModel mpca_fit(const Tensor4d& x, const Selector& selector);

/// Projection of one sample onto the subspace: asset x_1 U1 x_2 U2 x_3 U3.
/// With orthonormal factor rows this is the least-squares feature solve.
Tensor4d mpca_extract(const MpcaModel& model, const Tensor4d& asset);

/// Alternating masked least-squares completion: fits the factor model to the
/// observed entries and replaces only the missing ones with the model
/// reconstruction. Observed entries pass through unchanged; the result is
/// fully observed.
Tensor4d tucker_complete(const Tensor4d& x, const SubspaceDims& dims, double tol = 1e-8,
                         int max_iters = 100);

}  // namespace tdr::mpca
