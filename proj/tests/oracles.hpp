#pragma once

// Test-only reference implementations, kept independent of the library's
// computation paths: index arithmetic is enumerated directly and least-squares
// problems are assembled entry by entry from the factor model
//   x[i1,i2,i3,m] = sum_{p1,p2,p3} core[p1,p2,p3,m] U1[p1,i1] U2[p2,i2] U3[p3,i3]
// and solved with a generic dense decomposition.

#include <random>
#include <vector>

#include "tdr/lls.hpp"
#include "tdr/subspace.hpp"
#include "tdr/tensor.hpp"

namespace oracle {

using tdr::Dims4;
using tdr::FactorSet;
using tdr::Index;
using tdr::MatrixX;
using tdr::Tensor4d;
using tdr::VectorX;

/// Mode-n matricization by direct evaluation of the column index formula
/// col = sum_{k != n} i_k * prod_{q < k, q != n} I_q.
inline MatrixX<double> naive_matricize(const Tensor4d& t, int mode) {
  const Dims4& d = t.dims();
  Index cols = 1;
  for (int k = 0; k < 4; ++k)
    if (k != mode - 1) cols *= d[k];
  MatrixX<double> out(d[mode - 1], cols);
  for (Index i1 = 0; i1 < d[0]; ++i1)
    for (Index i2 = 0; i2 < d[1]; ++i2)
      for (Index i3 = 0; i3 < d[2]; ++i3)
        for (Index m = 0; m < d[3]; ++m) {
          const Index idx[4] = {i1, i2, i3, m};
          Index col = 0;
          Index stride = 1;
          for (int k = 0; k < 4; ++k) {
            if (k == mode - 1) continue;
            col += idx[k] * stride;
            stride *= d[k];
          }
          out(idx[mode - 1], col) = t(i1, i2, i3, m);
        }
  return out;
}

/// Model entry by direct four-index summation.
inline double model_entry(const Tensor4d& core, const FactorSet& f, Index i1, Index i2, Index i3,
                          Index m) {
  double acc = 0.0;
  for (Index p1 = 0; p1 < f.u1.rows(); ++p1)
    for (Index p2 = 0; p2 < f.u2.rows(); ++p2)
      for (Index p3 = 0; p3 < f.u3.rows(); ++p3)
        acc += core(p1, p2, p3, m) * f.u1(p1, i1) * f.u2(p2, i2) * f.u3(p3, i3);
  return acc;
}

inline Tensor4d model_tensor(const Tensor4d& core, const FactorSet& f, Index m_count) {
  Tensor4d out(f.u1.cols(), f.u2.cols(), f.u3.cols(), m_count);
  for (Index i1 = 0; i1 < out.dims()[0]; ++i1)
    for (Index i2 = 0; i2 < out.dims()[1]; ++i2)
      for (Index i3 = 0; i3 < out.dims()[2]; ++i3)
        for (Index m = 0; m < m_count; ++m)
          out(i1, i2, i3, m) = model_entry(core, f, i1, i2, i3, m);
  return out;
}

/// Least-squares solve of one factor column against the observed entries of
/// slice i_n: the design row of entry (i1,i2,i3,m) has coefficient
/// sum over the two remaining modes of core * other-factor weights.
inline VectorX<double> ls_factor_column(const Tensor4d& x, const FactorSet& f,
                                        const Tensor4d& core, int mode, Index column) {
  const Dims4& d = x.dims();
  std::vector<VectorX<double>> rows;
  std::vector<double> rhs;
  const Index p = f.factor(mode).rows();
  for (Index i1 = 0; i1 < d[0]; ++i1)
    for (Index i2 = 0; i2 < d[1]; ++i2)
      for (Index i3 = 0; i3 < d[2]; ++i3)
        for (Index m = 0; m < d[3]; ++m) {
          const Index idx[3] = {i1, i2, i3};
          if (idx[mode - 1] != column) continue;
          if (!x.observed(i1, i2, i3, m)) continue;
          VectorX<double> row = VectorX<double>::Zero(p);
          for (Index pn = 0; pn < p; ++pn) {
            double acc = 0.0;
            for (Index p1 = 0; p1 < f.u1.rows(); ++p1)
              for (Index p2 = 0; p2 < f.u2.rows(); ++p2)
                for (Index p3 = 0; p3 < f.u3.rows(); ++p3) {
                  const Index ps[3] = {p1, p2, p3};
                  if (ps[mode - 1] != pn) continue;
                  double w = core(p1, p2, p3, m);
                  if (mode != 1) w *= f.u1(p1, i1);
                  if (mode != 2) w *= f.u2(p2, i2);
                  if (mode != 3) w *= f.u3(p3, i3);
                  acc += w;
                }
            row[pn] = acc;
          }
          rows.push_back(std::move(row));
          rhs.push_back(x(i1, i2, i3, m));
        }
  MatrixX<double> a(static_cast<Index>(rows.size()), p);
  VectorX<double> b(static_cast<Index>(rhs.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    a.row(static_cast<Index>(r)) = rows[r].transpose();
    b[static_cast<Index>(r)] = rhs[r];
  }
  return a.colPivHouseholderQr().solve(b);
}

/// Joint least-squares solve of one core row: sqrt(alpha)-weighted rows for
/// the observed entries of asset m plus a sqrt(1-alpha)-weighted regression
/// row. Design coefficients come from the factor products directly.
inline VectorX<double> ls_core_row(const Tensor4d& x, const VectorX<double>& y,
                                   const FactorSet& f, const tdr::lls::ReparamCoefficients& reg,
                                   double alpha, Index m) {
  const Dims4& d = x.dims();
  const Index p = f.u1.rows() * f.u2.rows() * f.u3.rows();
  std::vector<VectorX<double>> rows;
  std::vector<double> rhs;
  for (Index i1 = 0; i1 < d[0]; ++i1)
    for (Index i2 = 0; i2 < d[1]; ++i2)
      for (Index i3 = 0; i3 < d[2]; ++i3) {
        if (!x.observed(i1, i2, i3, m)) continue;
        VectorX<double> row(p);
        Index q = 0;
        for (Index p3 = 0; p3 < f.u3.rows(); ++p3)
          for (Index p2 = 0; p2 < f.u2.rows(); ++p2)
            for (Index p1 = 0; p1 < f.u1.rows(); ++p1)
              row[q++] = f.u1(p1, i1) * f.u2(p2, i2) * f.u3(p3, i3);
        rows.push_back(std::sqrt(alpha) * row);
        rhs.push_back(std::sqrt(alpha) * x(i1, i2, i3, m));
      }
  if (alpha < 1.0) {
    rows.push_back(std::sqrt(1.0 - alpha) * reg.beta1_tilde);
    rhs.push_back(std::sqrt(1.0 - alpha) * (y[m] - reg.beta0_tilde));
  }
  MatrixX<double> a(static_cast<Index>(rows.size()), p);
  VectorX<double> b(static_cast<Index>(rhs.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    a.row(static_cast<Index>(r)) = rows[r].transpose();
    b[static_cast<Index>(r)] = rhs[r];
  }
  return a.colPivHouseholderQr().solve(b);
}

/// Ordinary least squares of y on [1 | s] via normal equations.
inline VectorX<double> ols(const VectorX<double>& y, const MatrixX<double>& s) {
  MatrixX<double> design(y.size(), s.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(s.cols()) = s;
  return (design.transpose() * design).ldlt().solve(design.transpose() * y);
}

// --- random test data -------------------------------------------------------

inline Tensor4d random_tensor(std::mt19937_64& rng, const Dims4& dims, double missing_rate = 0.0) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor4d t(dims);
  for (Index i = 0; i < t.size(); ++i) {
    t.values()[i] = gauss(rng);
    if (missing_rate > 0.0 && unif(rng) < missing_rate) t.mask()[i] = false;
  }
  return tdr::project_omega(t);
}

/// Masks whole frames at the given rate, always leaving each asset at least
/// one observed frame (an asset with no observations carries no information
/// and is rejected by the solvers).
inline void mask_random_images(Tensor4d& t, std::mt19937_64& rng, double rate) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Dims4& d = t.dims();
  const Index frame = d[0] * d[1];
  for (Index m = 0; m < d[3]; ++m) {
    Index observed = 0;
    for (Index i3 = 0; i3 < d[2]; ++i3) {
      if (unif(rng) < rate)
        t.mask().segment(t.linear_index(0, 0, i3, m), frame).setConstant(false);
      else
        ++observed;
    }
    if (observed == 0) t.mask().segment(t.linear_index(0, 0, 0, m), frame).setConstant(true);
  }
  t = tdr::project_omega(t);
}

inline MatrixX<double> random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixX<double> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
  return m;
}

inline FactorSet random_factors(std::mt19937_64& rng, const Dims4& dims,
                                const tdr::SubspaceDims& p) {
  FactorSet f;
  f.u1 = random_matrix(rng, p.p1, dims[0]);
  f.u2 = random_matrix(rng, p.p2, dims[1]);
  f.u3 = random_matrix(rng, p.p3, dims[2]);
  return f;
}

inline Tensor4d random_core(std::mt19937_64& rng, const tdr::SubspaceDims& p, Index m) {
  return random_tensor(rng, {p.p1, p.p2, p.p3, m});
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline double rel_err(const MatrixX<double>& got, const MatrixX<double>& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

}  // namespace oracle
