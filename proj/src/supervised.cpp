#include "tdr/supervised.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "tdr/mpca.hpp"

namespace tdr::supervised {

using lls::Distribution;
using lls::ReparamCoefficients;

namespace {

/// Solves gram * u = rhs for a symmetric PSD gram, adding a small ridge when
/// the condition number exceeds 1e12 (masked rows can make the gram
/// rank-deficient).
MatrixX<double> solve_spd(const MatrixX<double>& gram, const MatrixX<double>& rhs,
                          bool* regularized = nullptr) {
  Eigen::SelfAdjointEigenSolver<MatrixX<double>> es(gram, Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (lmax > 0.0 && lmin > lmax * 1e-12) return gram.ldlt().solve(rhs);
  if (regularized) *regularized = true;
  MatrixX<double> g = gram;
  double lambda = 1e-10 * gram.trace() / static_cast<double>(gram.rows());
  if (!(lambda > 0.0)) lambda = 1e-10;
  g.diagonal().array() += lambda;
  return g.ldlt().solve(rhs);
}

void check_alpha_reg(double alpha, const ReparamCoefficients& reg, Index p) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
  if (alpha < 1.0 && reg.beta1_tilde.size() != p)
    throw std::invalid_argument("coefficient length must match the core dimension");
}

/// Per-frame observation flags (valid when the mask is frame-structured).
MaskMatrix frame_mask(const Tensor4d& x) {
  const Dims4& d = x.dims();
  MaskMatrix f(d[2], d[3]);
  for (Index m = 0; m < d[3]; ++m)
    for (Index i3 = 0; i3 < d[2]; ++i3) f(i3, m) = x.mask()[x.linear_index(0, 0, i3, m)];
  return f;
}

/// Factor row solves against explicit observed-column sets. Rows with no
/// observed column keep their previous value.
MatrixX<double> factor_update_rows(const MatrixX<double>& xm, const MaskMatrix& mm,
                                   const MatrixX<double>& su, const MatrixX<double>& u_old,
                                   int mode, std::vector<std::string>* warnings) {
  const Index rows = xm.rows();
  const Index w = xm.cols();
  const Index p = su.rows();
  MatrixX<double> u_new = u_old;
  MatrixX<double> a(p, w);
  VectorX<double> b(w);
  for (Index i = 0; i < rows; ++i) {
    Index k = 0;
    for (Index j = 0; j < w; ++j) {
      if (!mm(i, j)) continue;
      a.col(k) = su.col(j);
      b[k] = xm(i, j);
      ++k;
    }
    if (k == 0) {
      if (warnings)
        warnings->push_back("mode-" + std::to_string(mode) + " slice " + std::to_string(i) +
                            " has no observed entries; basis column kept");
      continue;
    }
    const auto ak = a.leftCols(k);
    u_new.col(i) = solve_spd(ak * ak.transpose(), ak * b.head(k));
  }
  return u_new;
}

/// Shared observed-column solve. Relies on the data matricization being
/// zero-filled at missing positions; the projected-core columns are zeroed to
/// match, so unobserved columns drop out of both products.
MatrixX<double> factor_update_shared(const MatrixX<double>& xm_zero_filled,
                                     const MaskVector& colmask, const MatrixX<double>& su) {
  MatrixX<double> ssel = su;
  for (Index j = 0; j < su.cols(); ++j)
    if (!colmask[j]) ssel.col(j).setZero();
  const MatrixX<double> gram = ssel * ssel.transpose();
  const MatrixX<double> b = xm_zero_filled * ssel.transpose();
  return solve_spd(gram, b.transpose());
}

struct CoreRowProblem {
  MatrixX<double> gram;  // K^pi * K^pi'
  VectorX<double> rhs;   // K^pi * x^pi'
  Index observed = 0;
};

/// Newton solve of one core row for a non-quadratic regression loss:
/// alpha * ||x^pi - s K^pi||^2 + (1 - alpha) * rho(sigma_tilde y - beta0 - s b1).
Eigen::RowVectorXd core_row_newton(const CoreRowProblem& prob, double y_m,
                                   const ReparamCoefficients& reg, double alpha,
                                   Distribution dist, Eigen::RowVectorXd s) {
  const VectorX<double>& b1 = reg.beta1_tilde;
  const double target = reg.sigma_tilde * y_m - reg.beta0_tilde;
  auto value = [&](const Eigen::RowVectorXd& row) {
    const double quad = row.dot(row * prob.gram) - 2.0 * row.dot(prob.rhs);
    return alpha * quad + (1.0 - alpha) * lls::rho(dist, target - row.dot(b1));
  };
  double f = value(s);
  const double tol = 1e-11 * std::max(1.0, prob.rhs.norm());
  for (int iter = 0; iter < 100; ++iter) {
    const double w = target - s.dot(b1);
    VectorX<double> g = 2.0 * alpha * (prob.gram * s.transpose() - prob.rhs) -
                        (1.0 - alpha) * lls::rho_d1(dist, w) * b1;
    if (g.norm() <= tol) break;
    MatrixX<double> h = 2.0 * alpha * prob.gram;
    h += (1.0 - alpha) * lls::rho_d2(dist, w) * b1 * b1.transpose();
    VectorX<double> step;
    double damping = 0.0;
    for (;;) {
      MatrixX<double> hd = h;
      if (damping > 0.0) hd.diagonal().array() += damping;
      step = hd.ldlt().solve(-g);
      if (step.allFinite() && g.dot(step) < 0.0) break;
      damping = damping == 0.0 ? 1e-10 * std::max(1.0, h.diagonal().maxCoeff()) : damping * 10.0;
      if (damping > 1e14) return s;
    }
    double t = 1.0;
    const double slope = g.dot(step);
    bool moved = false;
    while (t > 1e-16) {
      Eigen::RowVectorXd trial = s + t * step.transpose();
      const double ft = value(trial);
      if (ft <= f + 1e-4 * t * slope) {
        s = trial;
        f = ft;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  return s;
}

Eigen::RowVectorXd core_row_closed_form(const CoreRowProblem& prob, double y_m,
                                        const ReparamCoefficients& reg, double alpha) {
  MatrixX<double> gram = alpha * prob.gram;
  VectorX<double> rhs = alpha * prob.rhs;
  if (alpha < 1.0) {
    gram += (1.0 - alpha) * reg.beta1_tilde * reg.beta1_tilde.transpose();
    rhs += (1.0 - alpha) * (y_m - reg.beta0_tilde) * reg.beta1_tilde;
  }
  return solve_spd(gram, rhs).transpose();
}

/// Per-frame gram blocks of the factor Kronecker matrix: the columns of one
/// frame contribute (u3_i3 u3_i3') (x) (U2 U2') (x) (U1 U1') to K K'.
std::vector<MatrixX<double>> frame_gram_blocks(const FactorSet& f) {
  const MatrixX<double> g21 =
      kronecker<double>(MatrixX<double>(f.u2 * f.u2.transpose()),
                        MatrixX<double>(f.u1 * f.u1.transpose()));
  std::vector<MatrixX<double>> blocks(f.u3.cols());
  for (Index i3 = 0; i3 < f.u3.cols(); ++i3) {
    const MatrixX<double> g3 = f.u3.col(i3) * f.u3.col(i3).transpose();
    blocks[i3] = kronecker<double>(g3, g21);
  }
  return blocks;
}

CoreRowProblem core_row_problem_entrywise(const MatrixX<double>& k, const MatrixX<double>& x4,
                                          const MaskMatrix& mask4, Index m) {
  const Index p = k.rows();
  const Index w = k.cols();
  CoreRowProblem prob;
  MatrixX<double> a(p, w);
  VectorX<double> b(w);
  Index cnt = 0;
  for (Index j = 0; j < w; ++j) {
    if (!mask4(m, j)) continue;
    a.col(cnt) = k.col(j);
    b[cnt] = x4(m, j);
    ++cnt;
  }
  const auto ak = a.leftCols(cnt);
  prob.gram = ak * ak.transpose();
  prob.rhs = ak * b.head(cnt);
  prob.observed = cnt;
  return prob;
}

CoreTensor rebuild_core(const MatrixX<double>& s4, const SubspaceDims& dims, Index m) {
  CoreTensor core;
  core.s = dematricize<double>(s4, 4, {dims.p1, dims.p2, dims.p3, m});
  return core;
}

VectorX<double> domain_response(const VectorX<double>& y, const lls::FamilyKind& family) {
  if (!family.log_time) return y;
  if ((y.array() <= 0.0).any())
    throw std::invalid_argument("log-time families require strictly positive times");
  return y.array().log();
}

void check_inputs(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims) {
  const Dims4& d = x.dims();
  if (dims.p1 < 1 || dims.p2 < 1 || dims.p3 < 1 || dims.p1 > d[0] || dims.p2 > d[1] ||
      dims.p3 > d[2])
    throw std::invalid_argument("subspace dims must satisfy 1 <= P_n <= I_n");
  if (y.size() != d[3]) throw std::invalid_argument("response length must equal the sample mode");
}

}  // namespace

struct MaskedSolver::Impl {
  Tensor4d x;  // zero-filled at missing positions
  MaskPattern pattern;
  std::array<MatrixX<double>, 3> xmat;  // modes 1..3
  std::array<MaskMatrix, 3> maskmat;    // modes 1..3
  MatrixX<double> x4;
  MaskMatrix mask4;    // entry-wise path only
  MaskMatrix frames;   // frame-wise path only (I3 x M)

  explicit Impl(const Tensor4d& input) : x(project_omega(input)) {
    pattern = classify_mask(x);
    for (int n = 1; n <= 3; ++n) {
      xmat[n - 1] = matricize(x, n);
      maskmat[n - 1] = matricize_mask(x, n);
    }
    x4 = matricize(x, 4);
    if (pattern == MaskPattern::EntryWise)
      mask4 = matricize_mask(x, 4);
    else
      frames = frame_mask(x);
  }

  MaskVector shared_colmask(int mode) const {
    // Valid for modes 1 and 2 under a frame-structured mask: a matricization
    // column is observed exactly when its (i3, m) frame is.
    const Dims4& d = x.dims();
    const Index other = mode == 1 ? d[1] : d[0];
    MaskVector cm(other * d[2] * d[3]);
    Index j = 0;
    for (Index m = 0; m < d[3]; ++m)
      for (Index i3 = 0; i3 < d[2]; ++i3)
        for (Index k = 0; k < other; ++k) cm[j++] = frames(i3, m);
    return cm;
  }

  /// Right-hand side of one core row on the frame-wise path:
  /// sum over observed frames of u3_i3 (x) vec(U1 F U2').
  VectorX<double> frame_rhs(const FactorSet& f, Index m) const {
    const Dims4& d = x.dims();
    const Index p12 = f.u1.rows() * f.u2.rows();
    VectorX<double> rhs = VectorX<double>::Zero(p12 * f.u3.rows());
    for (Index i3 = 0; i3 < d[2]; ++i3) {
      if (!frames(i3, m)) continue;
      const Eigen::Map<const MatrixX<double>> frame(
          x.values().data() + x.linear_index(0, 0, i3, m), d[0], d[1]);
      const MatrixX<double> proj = f.u1 * frame * f.u2.transpose();
      const Eigen::Map<const VectorX<double>> pv(proj.data(), p12);
      for (Index p3 = 0; p3 < f.u3.rows(); ++p3) rhs.segment(p3 * p12, p12) += f.u3(p3, i3) * pv;
    }
    return rhs;
  }
};

MaskedSolver::MaskedSolver(const Tensor4d& x) : impl_(std::make_unique<Impl>(x)) {}
MaskedSolver::~MaskedSolver() = default;
MaskedSolver::MaskedSolver(MaskedSolver&&) noexcept = default;
MaskedSolver& MaskedSolver::operator=(MaskedSolver&&) noexcept = default;

const Tensor4d& MaskedSolver::data() const { return impl_->x; }
MaskPattern MaskedSolver::pattern() const { return impl_->pattern; }

MatrixX<double> MaskedSolver::update_core(const FactorSet& f, const VectorX<double>& y,
                                          const ReparamCoefficients& reg, const FitConfig& cfg,
                                          const MatrixX<double>& s4_prev) const {
  const Impl& ws = *impl_;
  check_factor_dims(f, ws.x.dims());
  const Index m_count = ws.x.dims()[3];
  const Index p = f.subspace().count();
  check_alpha_reg(cfg.alpha, reg, p);
  MatrixX<double> s4(m_count, p);
  const bool quadratic = cfg.family.dist == Distribution::Normal || cfg.alpha == 1.0;

  auto solve_row = [&](const CoreRowProblem& prob, Index m) -> Eigen::RowVectorXd {
    if (cfg.alpha == 1.0 && prob.observed == 0)
      throw std::invalid_argument("asset " + std::to_string(m) +
                                  " has no observed entries and no regression term");
    if (quadratic)
      return core_row_closed_form(prob, cfg.alpha < 1.0 ? y[m] : 0.0, reg, cfg.alpha);
    return core_row_newton(prob, y[m], reg, cfg.alpha, cfg.family.dist, s4_prev.row(m));
  };

  if (ws.pattern == MaskPattern::EntryWise) {
    const MatrixX<double> k = kron_factors(f);
    for (Index m = 0; m < m_count; ++m)
      s4.row(m) = solve_row(core_row_problem_entrywise(k, ws.x4, ws.mask4, m), m);
    return s4;
  }

  // Frame-structured masks (including complete data): assemble each asset's
  // gram from per-frame blocks instead of gathering Kronecker columns.
  const auto blocks = frame_gram_blocks(f);
  for (Index m = 0; m < m_count; ++m) {
    CoreRowProblem prob;
    prob.gram = MatrixX<double>::Zero(p, p);
    for (Index i3 = 0; i3 < ws.x.dims()[2]; ++i3)
      if (ws.frames(i3, m)) {
        prob.gram += blocks[i3];
        ++prob.observed;
      }
    prob.rhs = ws.frame_rhs(f, m);
    s4.row(m) = solve_row(prob, m);
  }
  return s4;
}

MatrixX<double> MaskedSolver::solve_core(const FactorSet& factors) const {
  FitConfig cfg;
  cfg.alpha = 1.0;
  const Index m_count = impl_->x.dims()[3];
  const VectorX<double> dummy_y = VectorX<double>::Zero(m_count);
  return update_core(factors, dummy_y, ReparamCoefficients{}, cfg,
                     MatrixX<double>::Zero(m_count, factors.subspace().count()));
}

MatrixX<double> MaskedSolver::update_factor(const FactorSet& f, const Tensor4d& core, int mode,
                                            std::vector<std::string>* warnings) const {
  if (mode < 1 || mode > 3) throw std::invalid_argument("factor mode must be 1, 2 or 3");
  const Impl& ws = *impl_;
  check_factor_dims(f, ws.x.dims());
  const MatrixX<double> su = matricize(project_core_except(core, f, mode), mode);
  if (ws.pattern == MaskPattern::Complete)
    return factor_update_shared(ws.xmat[mode - 1],
                                MaskVector::Constant(ws.xmat[mode - 1].cols(), true), su);
  if (ws.pattern == MaskPattern::ImageWise && (mode == 1 || mode == 2))
    return factor_update_shared(ws.xmat[mode - 1], ws.shared_colmask(mode), su);
  return factor_update_rows(ws.xmat[mode - 1], ws.maskmat[mode - 1], su, f.factor(mode), mode,
                            warnings);
}

double objective(const Tensor4d& x, const VectorX<double>& y, const FactorSet& factors,
                 const Tensor4d& core, const lls::ReparamCoefficients& reg,
                 const FitConfig& cfg) {
  check_factor_dims(factors, x.dims());
  double psi = 0.0;
  if (cfg.alpha > 0.0) {
    Tensor4d resid = reconstruct(core, factors);
    resid.values() = x.values() - resid.values();
    resid.mask() = x.mask();
    psi += cfg.alpha * masked_fnorm_sq(resid);
  }
  if (cfg.alpha < 1.0) {
    const MatrixX<double> s4 = matricize(core, 4);
    if (cfg.family.dist == Distribution::Normal) {
      const VectorX<double> r =
          y - VectorX<double>::Constant(y.size(), reg.beta0_tilde) - s4 * reg.beta1_tilde;
      psi += (1.0 - cfg.alpha) * r.squaredNorm();
    } else {
      psi += (1.0 - cfg.alpha) *
             lls::nll(cfg.family.dist, lls::standardized_residuals(y, s4, reg), reg.sigma_tilde);
    }
  }
  return psi;
}

MatrixX<double> update_factor_complete(const Tensor4d& x, const FactorSet& factors,
                                       const Tensor4d& core, int mode) {
  if (mode < 1 || mode > 3) throw std::invalid_argument("factor mode must be 1, 2 or 3");
  if (!x.fully_observed())
    throw std::invalid_argument("complete-data update requires a fully observed tensor");
  check_factor_dims(factors, x.dims());
  const MatrixX<double> su = matricize(project_core_except(core, factors, mode), mode);
  const MatrixX<double> xm = matricize(x, mode);
  const MatrixX<double> gram = su * su.transpose();
  const MatrixX<double> b = xm * su.transpose();
  return solve_spd(gram, b.transpose());
}

VectorX<double> update_factor_column_entrywise(const Tensor4d& x, const FactorSet& factors,
                                               const Tensor4d& core, int mode, Index column,
                                               std::vector<std::string>* warnings) {
  if (mode < 1 || mode > 3) throw std::invalid_argument("factor mode must be 1, 2 or 3");
  check_factor_dims(factors, x.dims());
  if (column < 0 || column >= x.dims()[mode - 1])
    throw std::invalid_argument("column index out of range");
  const MatrixX<double> su = matricize(project_core_except(core, factors, mode), mode);
  const MatrixX<double> xm = matricize(x, mode);
  const MaskMatrix mm = matricize_mask(x, mode);
  const Index w = xm.cols();
  MatrixX<double> a(su.rows(), w);
  VectorX<double> b(w);
  Index k = 0;
  for (Index j = 0; j < w; ++j) {
    if (!mm(column, j)) continue;
    a.col(k) = su.col(j);
    b[k] = xm(column, j);
    ++k;
  }
  if (k == 0) {
    if (warnings)
      warnings->push_back("mode-" + std::to_string(mode) + " slice " + std::to_string(column) +
                          " has no observed entries; basis column kept");
    return factors.factor(mode).col(column);
  }
  const auto ak = a.leftCols(k);
  return solve_spd(ak * ak.transpose(), ak * b.head(k));
}

MatrixX<double> update_factor_imagewise(const Tensor4d& x, const FactorSet& factors,
                                        const Tensor4d& core, int mode) {
  if (mode != 1 && mode != 2)
    throw std::invalid_argument("shared-column update applies to modes 1 and 2 only");
  check_factor_dims(factors, x.dims());
  if (classify_mask(x) == MaskPattern::EntryWise)
    throw std::invalid_argument(
        "mask is not frame-structured; use the entry-wise column updates instead");
  MaskedSolver solver(x);
  return solver.update_factor(factors, core, mode);
}

MatrixX<double> update_core_complete(const Tensor4d& x, const VectorX<double>& y,
                                     const FactorSet& factors,
                                     const lls::ReparamCoefficients& reg, double alpha) {
  if (!x.fully_observed())
    throw std::invalid_argument("complete-data update requires a fully observed tensor");
  check_factor_dims(factors, x.dims());
  const MatrixX<double> k = kron_factors(factors);
  check_alpha_reg(alpha, reg, k.rows());
  const MatrixX<double> x4 = matricize(x, 4);
  MatrixX<double> gram = alpha * (k * k.transpose());
  MatrixX<double> num = alpha * (x4 * k.transpose());
  if (alpha < 1.0) {
    gram += (1.0 - alpha) * reg.beta1_tilde * reg.beta1_tilde.transpose();
    num += (1.0 - alpha) * (y - VectorX<double>::Constant(y.size(), reg.beta0_tilde)) *
           reg.beta1_tilde.transpose();
  }
  return solve_spd(gram, num.transpose()).transpose();
}

Eigen::RowVectorXd update_core_row_entrywise(const Tensor4d& x, const VectorX<double>& y,
                                             const FactorSet& factors,
                                             const lls::ReparamCoefficients& reg, double alpha,
                                             Index m) {
  check_factor_dims(factors, x.dims());
  if (m < 0 || m >= x.dims()[3]) throw std::invalid_argument("asset index out of range");
  const MatrixX<double> k = kron_factors(factors);
  check_alpha_reg(alpha, reg, k.rows());
  const Tensor4d xp = project_omega(x);
  const MatrixX<double> x4 = matricize(xp, 4);
  const MaskMatrix mask4 = matricize_mask(xp, 4);
  const CoreRowProblem prob = core_row_problem_entrywise(k, x4, mask4, m);
  if (alpha == 1.0 && prob.observed == 0)
    throw std::invalid_argument("asset has no observed entries and no regression term");
  const double ym = alpha < 1.0 ? y[m] : 0.0;
  return core_row_closed_form(prob, ym, reg, alpha);
}

lls::ReparamCoefficients update_regression_block(const VectorX<double>& y,
                                                 const MatrixX<double>& s4,
                                                 const lls::FamilyKind& family) {
  if (y.size() < 2) throw std::invalid_argument("regression requires at least two assets");
  if (family.dist == Distribution::Normal) return lls::ols_coefficients(y, s4);
  return lls::fit_reparam(y, s4, family.dist);
}

namespace {

FitState init_common(const MaskedSolver& solver, const VectorX<double>& y, FactorSet factors,
                     const SubspaceDims& dims, const FitConfig& cfg) {
  FitState state;
  state.factors = std::move(factors);
  const MatrixX<double> s4 = solver.solve_core(state.factors);
  state.core = rebuild_core(s4, dims, y.size());
  state.reg = update_regression_block(y, s4, cfg.family);
  return state;
}

}  // namespace

FitState init_heuristic(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims,
                        const FitConfig& cfg) {
  check_inputs(x, y, dims);
  const VectorX<double> yd = domain_response(y, cfg.family);
  MaskedSolver solver(x);
  Tensor4d zero_filled = solver.data();
  zero_filled.mask().setConstant(true);
  const mpca::MpcaModel warm = mpca::mpca_fit(zero_filled, mpca::FixedDims{dims});
  return init_common(solver, yd, warm.factors, dims, cfg);
}

FitState init_random(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims,
                     const FitConfig& cfg) {
  check_inputs(x, y, dims);
  const VectorX<double> yd = domain_response(y, cfg.family);
  MaskedSolver solver(x);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FactorSet f;
  const Dims4& d = x.dims();
  const std::array<Index, 3> p{dims.p1, dims.p2, dims.p3};
  for (int n = 1; n <= 3; ++n) {
    MatrixX<double>& u = f.factor(n);
    u.resize(p[n - 1], d[n - 1]);
    for (Index j = 0; j < u.cols(); ++j)
      for (Index i = 0; i < u.rows(); ++i)
        u(i, j) = gauss(rng) / std::sqrt(static_cast<double>(d[n - 1]));
  }
  return init_common(solver, yd, std::move(f), dims, cfg);
}

FitState fit(const Tensor4d& x, const VectorX<double>& y, const SubspaceDims& dims,
             const FitConfig& cfg, const FitState* initial) {
  check_inputs(x, y, dims);
  if (y.size() < 2) throw std::invalid_argument("fit requires at least two assets");
  const VectorX<double> yd = domain_response(y, cfg.family);

  FitState state;
  if (initial) {
    state = *initial;
    check_factor_dims(state.factors, x.dims());
  } else {
    state = cfg.random_init ? init_random(x, y, dims, cfg) : init_heuristic(x, y, dims, cfg);
  }

  MaskedSolver solver(x);
  state.objective_history.clear();
  double psi = objective(solver.data(), yd, state.factors, state.core.s, state.reg, cfg);
  state.objective_history.push_back(psi);
  if (!std::isfinite(psi)) throw std::runtime_error("objective is not finite at initialization");

  const double threshold =
      std::max(cfg.tol_epsilon * std::abs(psi), std::numeric_limits<double>::denorm_min());

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    // The likelihood term is unbounded below when the core can interpolate
    // the responses (scale -> 0). The block solves detect that as a
    // perfect-fit error; the previous iterate is still the best valid state,
    // so stop there instead of discarding the run.
    const FitState snapshot = state;
    try {
      for (int mode = 1; mode <= 3; ++mode)
        state.factors.factor(mode) =
            solver.update_factor(state.factors, state.core.s, mode, &state.warnings);

      MatrixX<double> s4 = state.core.s4();
      state.reg = update_regression_block(yd, s4, cfg.family);
      s4 = solver.update_core(state.factors, yd, state.reg, cfg, s4);
      state.core = rebuild_core(s4, dims, yd.size());
    } catch (const lls::PerfectFitError& e) {
      state = snapshot;
      state.warnings.push_back(std::string("stopped early: ") + e.what());
      break;
    }

    const double next = objective(solver.data(), yd, state.factors, state.core.s, state.reg, cfg);
    if (!std::isfinite(next)) throw std::runtime_error("objective diverged during fitting");
    state.objective_history.push_back(next);
    const double drop = psi - next;
    psi = next;
    if (drop < threshold) break;
  }
  return state;
}

}  // namespace tdr::supervised
