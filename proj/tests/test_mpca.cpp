#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tdr/mpca.hpp"
#include "tdr/supervised.hpp"

using namespace tdr;
using namespace tdr::mpca;

namespace {

/// Samples spanning an exact multilinear subspace of the given dims.
Tensor4d planted_samples(std::mt19937_64& rng, const Dims4& dims, const SubspaceDims& p) {
  FactorSet f = oracle::random_factors(rng, dims, p);
  const Tensor4d core = oracle::random_core(rng, p, dims[3]);
  return reconstruct(core, f);
}

double recon_error(const MpcaModel& model, const Tensor4d& x) {
  Tensor4d recon = reconstruct(mpca_extract(model, x), model.factors);
  recon.values() = x.values() - recon.values();
  return recon.values().squaredNorm();
}

}  // namespace

TEST_CASE("completion preserves observed entries and fills the rest") {
  std::mt19937_64 rng(211);

  // nothing missing at full dims: exact identity
  {
    const Dims4 dims{3, 3, 2, 3};
    const Tensor4d x = oracle::random_tensor(rng, dims);
    const Tensor4d done = tucker_complete(x, {3, 3, 2});
    CHECK(done.values() == x.values());
    CHECK(done.mask().all());
  }

  // planted rank-(1,1,1) data with 20% of entries masked is recovered
  {
    const Dims4 dims{6, 6, 5, 6};
    const Tensor4d clean = planted_samples(rng, dims, {1, 1, 1});
    Tensor4d holes = clean;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index i = 0; i < holes.size(); ++i)
      if (unif(rng) < 0.2) holes.mask()[i] = false;
    holes = project_omega(holes);
    const Tensor4d done = tucker_complete(holes, {1, 1, 1});
    for (Index i = 0; i < done.size(); ++i) {
      if (holes.mask()[i]) {
        CHECK(done.values()[i] == clean.values()[i]);  // pass-through, bit-exact
      } else {
        CHECK(std::abs(done.values()[i] - clean.values()[i]) <= 1e-4);
      }
    }
  }
}

TEST_CASE("completion leaves a non-increasing masked residual") {
  std::mt19937_64 rng(223);
  const Dims4 dims{5, 5, 4, 5};
  Tensor4d x = oracle::random_tensor(rng, dims, 0.3);
  const SubspaceDims p{2, 2, 2};

  // the final masked residual is no worse than the warm start's
  supervised::MaskedSolver solver(x);
  Tensor4d zero_filled = solver.data();
  zero_filled.mask().setConstant(true);
  const MpcaModel warm = mpca_fit(zero_filled, FixedDims{p});
  const MatrixX<double> s4 = solver.solve_core(warm.factors);
  Tensor4d core = dematricize<double>(s4, 4, {p.p1, p.p2, p.p3, dims[3]});
  Tensor4d resid = reconstruct(core, warm.factors);
  resid.values() = solver.data().values() - resid.values();
  resid.mask() = x.mask();
  const double start = masked_fnorm_sq(resid);

  const Tensor4d done = tucker_complete(x, p);
  Tensor4d final_resid = done;
  final_resid.values() = solver.data().values() - done.values();
  final_resid.mask() = x.mask();
  CHECK(masked_fnorm_sq(final_resid) <= start + 1e-10 * std::max(1.0, start));
}

TEST_CASE("full-variance selection reproduces the data exactly") {
  std::mt19937_64 rng(227);
  const Dims4 dims{4, 3, 3, 6};
  const Tensor4d x = oracle::random_tensor(rng, dims);
  const MpcaModel model = mpca_fit(x, FveTarget{1.0});
  CHECK(model.factors.u1.rows() == dims[0]);
  CHECK(model.factors.u2.rows() == dims[1]);
  CHECK(model.factors.u3.rows() == dims[2]);
  CHECK(recon_error(model, x) <= 1e-10);

  CHECK_THROWS_AS(mpca_fit(x, FveTarget{0.0}), std::invalid_argument);
  CHECK_THROWS_AS(mpca_fit(x, FveTarget{1.5}), std::invalid_argument);
}

TEST_CASE("variance targeting finds a planted subspace") {
  std::mt19937_64 rng(229);
  const Dims4 dims{7, 6, 5, 20};
  const SubspaceDims p{2, 2, 2};
  const Tensor4d x = planted_samples(rng, dims, p);
  const MpcaModel model = mpca_fit(x, FveTarget{0.97});
  CHECK(model.factors.u1.rows() == 2);
  CHECK(model.factors.u2.rows() == 2);
  CHECK(model.factors.u3.rows() == 2);
  CHECK(recon_error(model, x) <= 1e-8 * std::max(1.0, x.values().squaredNorm()));
  CHECK(model.fve_achieved >= 0.97);

  for (int n = 1; n <= 3; ++n) {
    const MatrixX<double>& u = model.factors.factor(n);
    CHECK((u * u.transpose() - MatrixX<double>::Identity(u.rows(), u.rows())).norm() <= 1e-10);
  }
}

TEST_CASE("reconstruction error never worsens as a dimension grows") {
  std::mt19937_64 rng(233);
  const Dims4 dims{5, 4, 4, 8};
  const Tensor4d x = oracle::random_tensor(rng, dims);
  double prev = std::numeric_limits<double>::infinity();
  for (Index p1 = 1; p1 <= dims[0]; ++p1) {
    const MpcaModel model = mpca_fit(x, FixedDims{{p1, 2, 2}});
    const double err = recon_error(model, x);
    CHECK(err <= prev + 1e-9 * std::max(1.0, prev));
    prev = err;
  }
}

TEST_CASE("extraction is a projection") {
  std::mt19937_64 rng(239);
  const Dims4 dims{4, 4, 3, 5};
  const Tensor4d x = oracle::random_tensor(rng, dims);

  // identity factors pass the data through
  MpcaModel eye;
  eye.factors.u1 = MatrixX<double>::Identity(dims[0], dims[0]);
  eye.factors.u2 = MatrixX<double>::Identity(dims[1], dims[1]);
  eye.factors.u3 = MatrixX<double>::Identity(dims[2], dims[2]);
  CHECK(mpca_extract(eye, x).values() == x.values());

  // extracting from the reconstruction returns the same feature
  const MpcaModel model = mpca_fit(x, FixedDims{{2, 2, 2}});
  const Tensor4d feat = mpca_extract(model, x);
  const Tensor4d again = mpca_extract(model, reconstruct(feat, model.factors));
  CHECK((feat.values() - again.values()).norm() <= 1e-10 * std::max(1.0, feat.values().norm()));

  // orthonormal rows make extraction the least-squares solve
  supervised::MaskedSolver solver(x);
  const MatrixX<double> ls = solver.solve_core(model.factors);
  CHECK(oracle::rel_err(matricize(feat, 4), ls) <= 1e-10);
}

TEST_CASE("incomplete input is rejected until imputed") {
  std::mt19937_64 rng(241);
  Tensor4d x = oracle::random_tensor(rng, {3, 3, 3, 4}, 0.2);
  CHECK_THROWS_AS(mpca_fit(x, FveTarget{0.97}), std::invalid_argument);
}
