#pragma once

#include "tdr/tensor.hpp"

namespace tdr {

struct SubspaceDims {
  Index p1 = 1;
  Index p2 = 1;
  Index p3 = 1;

  Index count() const { return p1 * p2 * p3; }
  bool operator==(const SubspaceDims&) const = default;
};

/// Basis matrices spanning the tensor subspace; U_n has shape P_n x I_n, its
/// rows are the mode-n basis vectors.
struct FactorSet {
  MatrixX<double> u1;
  MatrixX<double> u2;
  MatrixX<double> u3;

  SubspaceDims subspace() const { return {u1.rows(), u2.rows(), u3.rows()}; }
  const MatrixX<double>& factor(int mode) const {
    switch (mode) {
      case 1: return u1;
      case 2: return u2;
      case 3: return u3;
      default: throw std::invalid_argument("factor: mode must be 1, 2 or 3");
    }
  }
  MatrixX<double>& factor(int mode) {
    return const_cast<MatrixX<double>&>(std::as_const(*this).factor(mode));
  }
};

inline void check_factor_dims(const FactorSet& f, const Dims4& d) {
  if (f.u1.cols() != d[0] || f.u2.cols() != d[1] || f.u3.cols() != d[2])
    throw std::invalid_argument("factor matrices do not match tensor dims");
}

/// U3 (x) U2 (x) U1: maps a vectorized core slice (p1 fastest) to a vectorized
/// data slice (i1 fastest). Shape (P1*P2*P3) x (I1*I2*I3).
inline MatrixX<double> kron_factors(const FactorSet& f) {
  return kronecker<double>(kronecker<double>(f.u3, f.u2), f.u1);
}

/// core x_1 U1' x_2 U2' x_3 U3' — the model reconstruction of the data tensor.
inline Tensor4d reconstruct(const Tensor4d& core, const FactorSet& f) {
  Tensor4d t = mode_product<double>(core, f.u1.transpose(), 1);
  t = mode_product<double>(t, f.u2.transpose(), 2);
  return mode_product<double>(t, f.u3.transpose(), 3);
}

/// Projected core with mode n left alone: core multiplied by the transposes of
/// the other two spatial factors. Its mode-n matricization is the coefficient
/// matrix of the mode-n factor least-squares problems.
inline Tensor4d project_core_except(const Tensor4d& core, const FactorSet& f, int mode) {
  Tensor4d t = core;
  for (int k = 1; k <= 3; ++k) {
    if (k == mode) continue;
    t = mode_product<double>(t, f.factor(k).transpose(), k);
  }
  return t;
}

}  // namespace tdr
