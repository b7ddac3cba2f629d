#include "tdr/lls.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

namespace tdr::lls {

namespace {

constexpr double kSigmaTildeLimit = 1e8;
constexpr double kGradTol = 1e-10;

double softplus(double w) {  // log(1 + exp(w)) without overflow
  return std::max(w, 0.0) + std::log1p(std::exp(-std::abs(w)));
}

double sigmoid(double w) {
  if (w >= 0.0) return 1.0 / (1.0 + std::exp(-w));
  const double e = std::exp(w);
  return e / (1.0 + e);
}

void check_shapes(const VectorX<double>& y, const MatrixX<double>& features,
                  const ReparamCoefficients& c) {
  if (features.rows() != y.size())
    throw std::invalid_argument("feature row count must match response length");
  if (features.cols() != c.beta1_tilde.size())
    throw std::invalid_argument("feature column count must match coefficient length");
}

}  // namespace

FamilyKind parse_family(const std::string& name) {
  if (name == "normal") return {Distribution::Normal, false};
  if (name == "lognormal") return {Distribution::Normal, true};
  if (name == "logistic") return {Distribution::Logistic, false};
  if (name == "loglogistic") return {Distribution::Logistic, true};
  if (name == "sev") return {Distribution::Sev, false};
  if (name == "weibull") return {Distribution::Sev, true};
  throw std::invalid_argument("unknown family: " + name);
}

std::string family_name(const FamilyKind& family) {
  switch (family.dist) {
    case Distribution::Normal: return family.log_time ? "lognormal" : "normal";
    case Distribution::Logistic: return family.log_time ? "loglogistic" : "logistic";
    case Distribution::Sev: return family.log_time ? "weibull" : "sev";
  }
  throw std::logic_error("unreachable");
}

double rho(Distribution dist, double w) {
  switch (dist) {
    case Distribution::Normal: return 0.5 * w * w;
    case Distribution::Logistic: return -w + 2.0 * softplus(w);
    case Distribution::Sev: return -w + std::exp(w);
  }
  throw std::logic_error("unreachable");
}

double rho_d1(Distribution dist, double w) {
  switch (dist) {
    case Distribution::Normal: return w;
    case Distribution::Logistic: return -1.0 + 2.0 * sigmoid(w);
    case Distribution::Sev: return -1.0 + std::exp(w);
  }
  throw std::logic_error("unreachable");
}

double rho_d2(Distribution dist, double w) {
  switch (dist) {
    case Distribution::Normal: return 1.0;
    case Distribution::Logistic: {
      const double s = sigmoid(w);
      return 2.0 * s * (1.0 - s);
    }
    case Distribution::Sev: return std::exp(w);
  }
  throw std::logic_error("unreachable");
}

VectorX<double> standardized_residuals(const VectorX<double>& y,
                                       const MatrixX<double>& features,
                                       const ReparamCoefficients& c) {
  check_shapes(y, features, c);
  return c.sigma_tilde * y - VectorX<double>::Constant(y.size(), c.beta0_tilde) -
         features * c.beta1_tilde;
}

double nll(Distribution dist, const VectorX<double>& omega, double sigma_tilde) {
  if (!(sigma_tilde > 0.0)) throw std::invalid_argument("sigma_tilde must be positive");
  const double m = static_cast<double>(omega.size());
  double acc = -m * std::log(sigma_tilde);
  if (dist == Distribution::Normal) acc += 0.5 * m * std::log(2.0 * std::numbers::pi);
  for (Index i = 0; i < omega.size(); ++i) acc += rho(dist, omega[i]);
  return acc;
}

VectorX<double> nll_gradient(Distribution dist, const VectorX<double>& y,
                             const MatrixX<double>& features,
                             const ReparamCoefficients& c) {
  check_shapes(y, features, c);
  const VectorX<double> omega = standardized_residuals(y, features, c);
  VectorX<double> psi(omega.size());
  for (Index i = 0; i < omega.size(); ++i) psi[i] = rho_d1(dist, omega[i]);
  const Index p = features.cols();
  VectorX<double> g(p + 2);
  g[0] = -psi.sum();
  g.segment(1, p) = -features.transpose() * psi;
  g[p + 1] = -static_cast<double>(y.size()) / c.sigma_tilde + psi.dot(y);
  return g;
}

ReparamCoefficients ols_coefficients(const VectorX<double>& y, const MatrixX<double>& features,
                                     FitInfo* info) {
  const Index m = y.size();
  const Index p = features.cols();
  if (features.rows() != m) throw std::invalid_argument("feature row count mismatch");
  MatrixX<double> design(m, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = features;

  Eigen::ColPivHouseholderQR<MatrixX<double>> qr(design);
  VectorX<double> beta;
  bool regularized = false;
  if (qr.rank() < p + 1) {
    // Rank-deficient design: fall back to a lightly ridged normal-equations
    // solve so the result stays finite and deterministic.
    regularized = true;
    MatrixX<double> gram = design.transpose() * design;
    const double lambda = 1e-10 * std::max(gram.trace(), 1.0) / static_cast<double>(p + 1);
    gram.diagonal().array() += lambda;
    beta = gram.ldlt().solve(design.transpose() * y);
  } else {
    beta = qr.solve(y);
  }
  if (info) info->regularized = regularized;

  ReparamCoefficients c;
  c.beta0_tilde = beta[0];
  c.beta1_tilde = beta.tail(p);
  c.sigma_tilde = 1.0;
  return c;
}

ReparamCoefficients fit_reparam(const VectorX<double>& y, const MatrixX<double>& features,
                                Distribution dist, FitInfo* info) {
  const Index m = y.size();
  const Index p = features.cols();
  if (m < 2) throw std::invalid_argument("fit requires at least two observations");

  FitInfo local;
  ReparamCoefficients ols = ols_coefficients(y, features, &local);
  const VectorX<double> resid =
      y - VectorX<double>::Constant(m, ols.beta0_tilde) - features * ols.beta1_tilde;
  const double rss = resid.squaredNorm();
  const double sigma_mle = std::sqrt(rss / static_cast<double>(m));
  if (!(1.0 / sigma_mle < kSigmaTildeLimit))
    throw PerfectFitError("residual variance is zero: scale estimate diverges");

  ReparamCoefficients c;
  c.sigma_tilde = 1.0 / sigma_mle;
  c.beta0_tilde = ols.beta0_tilde * c.sigma_tilde;
  c.beta1_tilde = ols.beta1_tilde * c.sigma_tilde;

  if (dist == Distribution::Normal) {
    if (info) *info = local;
    return c;
  }

  // Damped Newton on the jointly convex objective, warm-started at the
  // normal-theory estimate. The -M log(sigma_tilde) barrier keeps the scale
  // positive as long as the line search rejects non-positive trials.
  VectorX<double> z(p + 2);
  z[0] = c.beta0_tilde;
  z.segment(1, p) = c.beta1_tilde;
  z[p + 1] = c.sigma_tilde;

  MatrixX<double> a(m, p + 2);  // d omega_m / d z
  a.col(0).setConstant(-1.0);
  a.middleCols(1, p) = -features;
  a.col(p + 1) = y;

  auto unpack = [&](const VectorX<double>& zz) {
    ReparamCoefficients out;
    out.beta0_tilde = zz[0];
    out.beta1_tilde = zz.segment(1, p);
    out.sigma_tilde = zz[p + 1];
    return out;
  };
  auto objective = [&](const VectorX<double>& zz) {
    const ReparamCoefficients cc = unpack(zz);
    if (!(cc.sigma_tilde > 0.0)) return std::numeric_limits<double>::infinity();
    return nll(dist, standardized_residuals(y, features, cc), cc.sigma_tilde);
  };

  double f = objective(z);
  int iter = 0;
  double gnorm = std::numeric_limits<double>::infinity();
  for (; iter < 200; ++iter) {
    const ReparamCoefficients cc = unpack(z);
    if (cc.sigma_tilde > kSigmaTildeLimit)
      throw PerfectFitError("scale estimate diverged during optimization");
    const VectorX<double> omega = standardized_residuals(y, features, cc);
    VectorX<double> psi(m), psi2(m);
    for (Index i = 0; i < m; ++i) {
      psi[i] = rho_d1(dist, omega[i]);
      psi2[i] = rho_d2(dist, omega[i]);
    }
    VectorX<double> g = a.transpose() * psi;
    g[p + 1] -= static_cast<double>(m) / cc.sigma_tilde;
    gnorm = g.norm();
    if (gnorm <= kGradTol) break;

    MatrixX<double> h = a.transpose() * psi2.asDiagonal() * a;
    h(p + 1, p + 1) += static_cast<double>(m) / (cc.sigma_tilde * cc.sigma_tilde);

    VectorX<double> step;
    double damping = 0.0;
    for (;;) {
      MatrixX<double> hd = h;
      if (damping > 0.0) hd.diagonal().array() += damping;
      step = hd.ldlt().solve(-g);
      if (step.allFinite() && g.dot(step) < 0.0) break;
      damping = damping == 0.0 ? 1e-8 * std::max(1.0, h.diagonal().maxCoeff()) : damping * 10.0;
      if (damping > 1e12) throw std::runtime_error("Newton step failed to become a descent direction");
    }

    double t = 1.0;
    const double slope = g.dot(step);
    while (t > 1e-16) {
      const VectorX<double> trial = z + t * step;
      if (trial[p + 1] > 0.0) {
        const double ft = objective(trial);
        if (ft <= f + 1e-4 * t * slope) {
          z = trial;
          f = ft;
          break;
        }
      }
      t *= 0.5;
    }
    if (t <= 1e-16) break;  // no further progress representable
  }

  if (info) {
    info->regularized = local.regularized;
    info->iterations = iter;
    info->grad_norm = gnorm;
  }
  ReparamCoefficients out = unpack(z);
  if (out.sigma_tilde > kSigmaTildeLimit)
    throw PerfectFitError("scale estimate diverged during optimization");
  return out;
}

LlsModel fit_lls(const VectorX<double>& y, const MatrixX<double>& features,
                 const FamilyKind& family, FitInfo* info) {
  if (features.rows() != y.size())
    throw std::invalid_argument("feature row count must match response length");
  VectorX<double> yt = y;
  if (family.log_time) {
    if ((y.array() <= 0.0).any())
      throw std::invalid_argument("log-time families require strictly positive times");
    yt = y.array().log();
  }
  const ReparamCoefficients c = fit_reparam(yt, features, family.dist, info);
  LlsModel model;
  model.family = family;
  model.sigma = 1.0 / c.sigma_tilde;
  model.gamma0 = c.beta0_tilde / c.sigma_tilde;
  model.gamma1 = c.beta1_tilde / c.sigma_tilde;
  return model;
}

TtfPrediction predict_distribution(const LlsModel& model, const VectorX<double>& feature) {
  if (feature.size() != model.gamma1.size())
    throw std::invalid_argument("feature length must match coefficient length");
  TtfPrediction out;
  out.family = model.family;
  out.location = model.gamma0 + feature.dot(model.gamma1);
  out.scale = model.sigma;
  double med = out.location;
  if (model.family.dist == Distribution::Sev)
    med += model.sigma * std::log(std::numbers::ln2);  // standard SEV median
  out.point_estimate = model.family.log_time ? std::exp(med) : med;
  return out;
}

std::string to_json(const LlsModel& model) {
  nlohmann::json j;
  j["family"] = family_name(model.family);
  j["gamma0"] = model.gamma0;
  j["gamma1"] = std::vector<double>(model.gamma1.data(), model.gamma1.data() + model.gamma1.size());
  j["sigma"] = model.sigma;
  return j.dump(2);
}

LlsModel model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  LlsModel model;
  model.family = parse_family(j.at("family").get<std::string>());
  model.gamma0 = j.at("gamma0").get<double>();
  const auto g1 = j.at("gamma1").get<std::vector<double>>();
  model.gamma1 = Eigen::Map<const VectorX<double>>(g1.data(), static_cast<Index>(g1.size()));
  model.sigma = j.at("sigma").get<double>();
  if (!(model.sigma > 0.0)) throw std::runtime_error("model sigma must be positive");
  return model;
}

}  // namespace tdr::lls
