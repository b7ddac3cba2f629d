#include "tdr/mpca.hpp"

#include <cmath>

#include "tdr/supervised.hpp"

namespace tdr::mpca {

namespace {

Tensor4d center_samples(const Tensor4d& x) {
  const Dims4& d = x.dims();
  const Index block = d[0] * d[1] * d[2];
  VectorX<double> mean = VectorX<double>::Zero(block);
  for (Index m = 0; m < d[3]; ++m) mean += x.values().segment(m * block, block);
  mean /= static_cast<double>(d[3]);
  Tensor4d out = x;
  for (Index m = 0; m < d[3]; ++m) out.values().segment(m * block, block) -= mean;
  return out;
}

/// Top-p eigenvectors (as rows) of a symmetric scatter matrix, eigenvalues
/// descending. Signs are fixed so the largest-magnitude coefficient of each
/// basis vector is positive.
std::pair<MatrixX<double>, VectorX<double>> top_eigvecs(const MatrixX<double>& scatter, Index p) {
  Eigen::SelfAdjointEigenSolver<MatrixX<double>> es(scatter);
  const Index n = scatter.rows();
  VectorX<double> values(n);
  MatrixX<double> rows(p, n);
  for (Index i = 0; i < n; ++i) values[i] = es.eigenvalues()[n - 1 - i];
  for (Index i = 0; i < p; ++i) {
    VectorX<double> v = es.eigenvectors().col(n - 1 - i);
    Index at = 0;
    v.cwiseAbs().maxCoeff(&at);
    if (v[at] < 0.0) v = -v;
    rows.row(i) = v.transpose();
  }
  return {rows, values};
}

MatrixX<double> mode_scatter(const Tensor4d& centered, const FactorSet& f, int mode) {
  Tensor4d proj = centered;
  for (int k = 1; k <= 3; ++k) {
    if (k == mode) continue;
    proj = mode_product<double>(proj, f.factor(k), k);
  }
  const MatrixX<double> pm = matricize(proj, mode);
  return pm * pm.transpose();
}

}  // namespace

MpcaModel mpca_fit(const Tensor4d& x, const Selector& selector) {
  if (!x.fully_observed())
    throw std::invalid_argument("multilinear PCA requires complete data; impute first");
  const Dims4& d = x.dims();
  const Tensor4d centered = center_samples(x);

  MpcaModel model;
  std::array<Index, 3> p{1, 1, 1};

  // Full-projection spectra drive dimension selection.
  for (int n = 1; n <= 3; ++n) {
    const MatrixX<double> xm = matricize(centered, n);
    auto [rows, values] = top_eigvecs(xm * xm.transpose(), d[n - 1]);
    model.eigenvalues[n - 1] = values;
    model.factors.factor(n) = rows;
  }

  if (const auto* fve = std::get_if<FveTarget>(&selector)) {
    if (!(fve->target > 0.0) || fve->target > 1.0)
      throw std::invalid_argument("FVE target must lie in (0, 1]");
    for (int n = 1; n <= 3; ++n) {
      const VectorX<double>& ev = model.eigenvalues[n - 1];
      const double total = ev.sum();
      Index keep = d[n - 1];
      if (total > 0.0) {
        double acc = 0.0;
        for (Index i = 0; i < ev.size(); ++i) {
          acc += ev[i];
          if (acc / total >= fve->target) {
            keep = i + 1;
            break;
          }
        }
      } else {
        keep = 1;  // degenerate (constant) data
      }
      p[n - 1] = keep;
    }
  } else {
    const SubspaceDims dims = std::get<FixedDims>(selector).dims;
    if (dims.p1 < 1 || dims.p2 < 1 || dims.p3 < 1 || dims.p1 > d[0] || dims.p2 > d[1] ||
        dims.p3 > d[2])
      throw std::invalid_argument("subspace dims must satisfy 1 <= P_n <= I_n");
    p = {dims.p1, dims.p2, dims.p3};
  }

  model.fve_achieved = 1.0;
  for (int n = 1; n <= 3; ++n) {
    const VectorX<double>& ev = model.eigenvalues[n - 1];
    const double total = ev.sum();
    if (total > 0.0)
      model.fve_achieved = std::min(model.fve_achieved, ev.head(p[n - 1]).sum() / total);
    model.factors.factor(n) = model.factors.factor(n).topRows(p[n - 1]).eval();
  }

  // Conditional sweeps: refine each mode's basis against the others'
  // projections until the captured variance settles.
  double captured_prev = -1.0;
  for (int sweep = 0; sweep < 50; ++sweep) {
    for (int n = 1; n <= 3; ++n) {
      auto [rows, values] = top_eigvecs(mode_scatter(centered, model.factors, n), p[n - 1]);
      model.factors.factor(n) = rows;
    }
    Tensor4d core = centered;
    for (int n = 1; n <= 3; ++n) core = mode_product<double>(core, model.factors.factor(n), n);
    const double captured = core.values().squaredNorm();
    if (captured_prev >= 0.0 &&
        std::abs(captured - captured_prev) <= 1e-8 * std::max(1.0, captured))
      break;
    captured_prev = captured;
  }
  return model;
}

Tensor4d mpca_extract(const MpcaModel& model, const Tensor4d& asset) {
  check_factor_dims(model.factors, asset.dims());
  Tensor4d out = asset;
  for (int n = 1; n <= 3; ++n) out = mode_product<double>(out, model.factors.factor(n), n);
  return out;
}

Tensor4d tucker_complete(const Tensor4d& x, const SubspaceDims& dims, double tol, int max_iters) {
  const Dims4& d = x.dims();
  if (dims.p1 < 1 || dims.p2 < 1 || dims.p3 < 1 || dims.p1 > d[0] || dims.p2 > d[1] ||
      dims.p3 > d[2])
    throw std::invalid_argument("subspace dims must satisfy 1 <= P_n <= I_n");

  supervised::MaskedSolver solver(x);
  Tensor4d zero_filled = solver.data();
  zero_filled.mask().setConstant(true);
  MpcaModel warm = mpca_fit(zero_filled, FixedDims{dims});
  FactorSet factors = std::move(warm.factors);

  MatrixX<double> s4 = solver.solve_core(factors);
  Tensor4d core = dematricize<double>(s4, 4, {dims.p1, dims.p2, dims.p3, d[3]});

  auto masked_residual = [&](const Tensor4d& c) {
    Tensor4d resid = reconstruct(c, factors);
    resid.values() = solver.data().values() - resid.values();
    resid.mask() = x.mask();
    return masked_fnorm_sq(resid);
  };

  double prev = masked_residual(core);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int mode = 1; mode <= 3; ++mode)
      factors.factor(mode) = solver.update_factor(factors, core, mode);
    s4 = solver.solve_core(factors);
    core = dematricize<double>(s4, 4, {dims.p1, dims.p2, dims.p3, d[3]});
    const double cur = masked_residual(core);
    if (std::abs(prev - cur) <= tol * std::max(1.0, prev)) break;
    prev = cur;
  }

  Tensor4d out = reconstruct(core, factors);
  out.values() = x.mask().select(x.values().array(), out.values().array()).matrix();
  out.mask().setConstant(true);
  return out;
}

}  // namespace tdr::mpca
