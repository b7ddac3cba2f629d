#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tdr/prognostics.hpp"

using namespace tdr;
using namespace tdr::prognostics;

namespace {

AssetStream make_stream(std::mt19937_64& rng, Index i1, Index i2, Index depth,
                        std::optional<double> ttf = std::nullopt) {
  AssetStream a;
  a.images = oracle::random_tensor(rng, {i1, i2, depth, 1});
  a.ttf = ttf;
  return a;
}

MatrixX<double> orthonormal_rows(std::mt19937_64& rng, Index p, Index n) {
  const MatrixX<double> g = oracle::random_matrix(rng, n, p);
  const Eigen::HouseholderQR<MatrixX<double>> qr(g);
  MatrixX<double> q = qr.householderQ() * MatrixX<double>::Identity(n, p);
  return q.transpose();
}

}  // namespace

TEST_CASE("stacking pads shorter streams with masked frames") {
  std::mt19937_64 rng(301);
  std::vector<AssetStream> assets;
  assets.push_back(make_stream(rng, 3, 3, 3, 10.0));
  assets.push_back(make_stream(rng, 3, 3, 5, 20.0));
  auto [x, y] = pad_and_stack(assets);
  CHECK(x.dims() == Dims4{3, 3, 5, 2});
  CHECK(y[0] == 10.0);
  CHECK(y[1] == 20.0);
  // asset 1 frames 4 and 5 are masked, asset 2 fully observed
  for (Index i3 = 0; i3 < 5; ++i3) {
    CHECK(x.observed(0, 0, i3, 0) == (i3 < 3));
    CHECK(x.observed(1, 2, i3, 1));
  }

  std::vector<AssetStream> one;
  one.push_back(make_stream(rng, 3, 3, 4, 5.0));
  auto [x1, y1] = pad_and_stack(one);
  CHECK(x1.dims() == Dims4{3, 3, 4, 1});
  CHECK(x1.mask().all());

  CHECK_THROWS_AS(pad_and_stack({}), std::invalid_argument);

  std::vector<AssetStream> bad;
  bad.push_back(make_stream(rng, 3, 3, 2));
  bad.push_back(make_stream(rng, 4, 3, 2));
  CHECK_THROWS_AS(pad_and_stack(bad), std::invalid_argument);
}

TEST_CASE("feature extraction matches the projection and the masked oracle") {
  std::mt19937_64 rng(307);
  const Dims4 dims{5, 4, 4, 1};
  const SubspaceDims p{2, 2, 2};

  FactorSet f;
  f.u1 = orthonormal_rows(rng, p.p1, dims[0]);
  f.u2 = orthonormal_rows(rng, p.p2, dims[1]);
  f.u3 = orthonormal_rows(rng, p.p3, dims[2]);

  // complete stream, orthonormal rows: feature = mode-product projection
  {
    AssetStream a = make_stream(rng, dims[0], dims[1], dims[2]);
    const Tensor4d feat = extract_features(a, f);
    Tensor4d proj = mode_product<double>(a.images, f.u1, 1);
    proj = mode_product<double>(proj, f.u2, 2);
    proj = mode_product<double>(proj, f.u3, 3);
    CHECK((feat.values() - proj.values()).norm() <= 1e-10 * std::max(1.0, proj.values().norm()));
  }

  // planted feature survives 30% masking
  {
    const Tensor4d truth = oracle::random_core(rng, p, 1);
    AssetStream a;
    a.images = reconstruct(truth, f);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index i = 0; i < a.images.size(); ++i)
      if (unif(rng) < 0.3) a.images.mask()[i] = false;
    a.images = project_omega(a.images);
    const Tensor4d feat = extract_features(a, f);
    CHECK((feat.values() - truth.values()).norm() <= 1e-8);
  }

  // masked least-squares oracle equivalence
  {
    AssetStream a;
    a.images = oracle::random_tensor(rng, dims, 0.3);
    const Tensor4d feat = extract_features(a, f);
    lls::ReparamCoefficients none;
    const VectorX<double> want =
        oracle::ls_core_row(a.images, VectorX<double>::Zero(1), f, none, 1.0, 0);
    CHECK((feat.values() - want).norm() <= 1e-10 * std::max(1.0, want.norm()));
  }

  // a fully masked stream cannot be embedded
  {
    AssetStream a = make_stream(rng, dims[0], dims[1], dims[2]);
    a.images.mask().setConstant(false);
    CHECK_THROWS_AS(extract_features(a, f), std::invalid_argument);
  }
}

TEST_CASE("extraction ignores padding beyond the observed frames") {
  std::mt19937_64 rng(311);
  const SubspaceDims p{2, 2, 2};
  FactorSet f;
  f.u1 = orthonormal_rows(rng, p.p1, 4);
  f.u2 = orthonormal_rows(rng, p.p2, 4);
  f.u3 = orthonormal_rows(rng, p.p3, 6);

  AssetStream short_stream = make_stream(rng, 4, 4, 3);
  const Tensor4d feat = extract_features(short_stream, f);

  // hand-padded to the basis depth with masked frames: same features
  AssetStream padded;
  padded.images = Tensor4d(4, 4, 6, 1);
  padded.images.mask().setConstant(false);
  padded.images.values().head(4 * 4 * 3) = short_stream.images.values();
  padded.images.mask().head(4 * 4 * 3) = short_stream.images.mask();
  const Tensor4d feat2 = extract_features(padded, f);
  CHECK(feat.values() == feat2.values());

  // an over-long stream is truncated with a warning
  AssetStream long_stream = make_stream(rng, 4, 4, 9);
  std::vector<std::string> warnings;
  extract_features(long_stream, f, &warnings);
  CHECK(warnings.size() == 1);
}

TEST_CASE("training recovers a planted regression and stays deterministic") {
  std::mt19937_64 rng(313);
  const Index m_count = 80;
  const Dims4 dims{5, 4, 4, 1};
  const SubspaceDims p{2, 2, 1};

  FactorSet truth;
  truth.u1 = orthonormal_rows(rng, p.p1, dims[0]);
  truth.u2 = orthonormal_rows(rng, p.p2, dims[1]);
  truth.u3 = orthonormal_rows(rng, p.p3, dims[2]);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VectorX<double> gamma(p.count());
  for (Index i = 0; i < p.count(); ++i) gamma[i] = 0.5 + 0.25 * gauss(rng);
  const double gamma0 = 2.0;

  std::vector<AssetStream> assets;
  for (Index m = 0; m < m_count; ++m) {
    const Tensor4d core = oracle::random_core(rng, p, 1);
    AssetStream a;
    a.images = reconstruct(core, truth);
    const double logy =
        gamma0 + matricize(core, 4).row(0).dot(gamma) + 0.02 * gauss(rng);
    a.ttf = std::exp(logy);
    assets.push_back(std::move(a));
  }

  supervised::FitConfig cfg;
  cfg.alpha = 0.5;
  cfg.family = {lls::Distribution::Normal, true};
  const PrognosticModel model = train(assets, p, cfg);

  // the fitted model reproduces the planted log-times to within 10%
  for (Index m = 0; m < 10; ++m) {
    const auto pred = predict(model, assets[m]);
    const double got = std::log(pred.point_estimate);
    const double want = std::log(*assets[m].ttf);
    CHECK(std::abs(got - want) <= 0.1 * std::max(1.0, std::abs(want)));
  }

  const PrognosticModel again = train(assets, p, cfg);
  CHECK(model.lls.gamma0 == again.lls.gamma0);
  CHECK(model.factors.u1 == again.factors.u1);
}

TEST_CASE("prediction maps the location through the family median") {
  PrognosticModel model;
  model.subspace = {1, 1, 1};
  model.family = {lls::Distribution::Normal, true};
  model.factors.u1 = MatrixX<double>::Ones(1, 1);
  model.factors.u2 = MatrixX<double>::Ones(1, 1);
  model.factors.u3 = MatrixX<double>::Ones(1, 1);
  model.lls.family = model.family;
  model.lls.gamma0 = 7.0;
  model.lls.gamma1 = VectorX<double>::Zero(1);
  model.lls.sigma = 0.25;

  AssetStream a;
  a.images = Tensor4d(1, 1, 1, 1);
  a.images(0, 0, 0, 0) = 0.0;
  const TtfPrediction pred = predict(model, a);
  CHECK(pred.location == doctest::Approx(7.0));
  CHECK(pred.point_estimate == doctest::Approx(std::exp(7.0)));
}

TEST_CASE("prediction error is the absolute relative deviation") {
  CHECK(prediction_error(110.0, 100.0) == doctest::Approx(0.10));
  CHECK(prediction_error(100.0, 100.0) == 0.0);
  CHECK(prediction_error(50.0, 100.0) == doctest::Approx(0.5));
  CHECK(prediction_error(150.0, 100.0) >= 0.0);
  CHECK_THROWS_AS(prediction_error(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(prediction_error(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("model directories round-trip through save and load") {
  std::mt19937_64 rng(317);
  const SubspaceDims p{2, 2, 2};
  PrognosticModel model;
  model.subspace = p;
  model.family = {lls::Distribution::Normal, true};
  model.alpha_used = 0.4;
  model.factors.u1 = oracle::random_matrix(rng, p.p1, 5);
  model.factors.u2 = oracle::random_matrix(rng, p.p2, 4);
  model.factors.u3 = oracle::random_matrix(rng, p.p3, 6);
  model.lls.family = model.family;
  model.lls.gamma0 = 1.25;
  model.lls.gamma1 = oracle::random_matrix(rng, p.count(), 1).col(0);
  model.lls.sigma = 0.5;

  const auto dir = std::filesystem::temp_directory_path() / "tdr_model_test";
  std::filesystem::remove_all(dir);
  save_model(model, dir);
  const PrognosticModel back = load_model(dir);
  CHECK(back.subspace == model.subspace);
  CHECK(back.alpha_used == model.alpha_used);
  CHECK(back.family == model.family);
  CHECK(back.factors.u1 == model.factors.u1);
  CHECK(back.factors.u2 == model.factors.u2);
  CHECK(back.factors.u3 == model.factors.u3);
  CHECK(back.lls.gamma0 == model.lls.gamma0);
  CHECK(back.lls.gamma1 == model.lls.gamma1);
  CHECK(back.lls.sigma == model.lls.sigma);

  AssetStream a = make_stream(rng, 5, 4, 6);
  const auto p1 = predict(model, a);
  const auto p2 = predict(back, a);
  CHECK(p1.location == p2.location);
  CHECK(p1.point_estimate == p2.point_estimate);
}
