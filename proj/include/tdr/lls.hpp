#pragma once

#include <stdexcept>
#include <string>

#include "tdr/tensor.hpp"

namespace tdr::lls {

enum class Distribution { Normal, Logistic, Sev };

/// A (log)-location-scale family: the location-scale distribution of the
/// (possibly log-transformed) failure time. log_time pairs map back to the
/// usual time-domain names: Normal -> lognormal, Logistic -> loglogistic,
/// Sev -> Weibull.
struct FamilyKind {
  Distribution dist = Distribution::Normal;
  bool log_time = false;
  bool operator==(const FamilyKind&) const = default;
};

/// Accepts normal, lognormal, logistic, loglogistic, sev, weibull.
FamilyKind parse_family(const std::string& name);
std::string family_name(const FamilyKind& family);

/// Coefficients of the convex parameterization: sigma_tilde = 1/sigma and the
/// location coefficients divided by sigma.
struct ReparamCoefficients {
  double beta0_tilde = 0.0;
  VectorX<double> beta1_tilde;
  double sigma_tilde = 1.0;
};

/// Fitted regression in natural parameters: location gamma0 + s'gamma1,
/// scale sigma.
struct LlsModel {
  FamilyKind family;
  double gamma0 = 0.0;
  VectorX<double> gamma1;
  double sigma = 1.0;
};

struct TtfPrediction {
  double location = 0.0;
  double scale = 1.0;
  FamilyKind family;
  double point_estimate = 0.0;  // distribution median, mapped to time domain
};

struct FitInfo {
  bool regularized = false;  // rank-deficient design solved with a ridge
  int iterations = 0;
  double grad_norm = 0.0;
};

/// Residual scale collapsed (sigma_tilde diverging): the regression
/// interpolates the responses and the likelihood is unbounded.
class PerfectFitError : public std::runtime_error {
public:
  explicit PerfectFitError(const std::string& what) : std::runtime_error(what) {}
};

/// omega_m = sigma_tilde * y_m - beta0_tilde - features.row(m) * beta1_tilde.
VectorX<double> standardized_residuals(const VectorX<double>& y,
                                       const MatrixX<double>& features,
                                       const ReparamCoefficients& c);

/// Negative log-likelihood in the convex parameterization, given the
/// standardized residuals. Stable for large |omega|.
double nll(Distribution dist, const VectorX<double>& omega, double sigma_tilde);

/// Analytic gradient of nll(standardized_residuals(...)) with respect to
/// (beta0_tilde, beta1_tilde..., sigma_tilde), in that order.
VectorX<double> nll_gradient(Distribution dist, const VectorX<double>& y,
                             const MatrixX<double>& features,
                             const ReparamCoefficients& c);

/// Maximum-likelihood solve of the convex parameterization, y already in the
/// location-scale domain. Normal uses the closed form (OLS location, scale^2 =
/// RSS/M); the other families run a damped Newton iteration to gradient norm
/// 1e-10. Throws PerfectFitError when sigma_tilde exceeds 1e8.
ReparamCoefficients fit_reparam(const VectorX<double>& y, const MatrixX<double>& features,
                                Distribution dist, FitInfo* info = nullptr);

/// Intercept-only / fixed-scale variant used by the squared-error block of the
/// alternating fitter: plain least squares of y on [1 | features], returned
/// with sigma_tilde = 1.
ReparamCoefficients ols_coefficients(const VectorX<double>& y, const MatrixX<double>& features,
                                     FitInfo* info = nullptr);

/// Full regression fit: log-transforms y for log-time families, solves the
/// convex problem, and maps back to natural parameters.
LlsModel fit_lls(const VectorX<double>& y, const MatrixX<double>& features,
                 const FamilyKind& family, FitInfo* info = nullptr);

TtfPrediction predict_distribution(const LlsModel& model, const VectorX<double>& feature);

std::string to_json(const LlsModel& model);
LlsModel model_from_json(const std::string& text);

// Per-observation loss pieces of the negative log-likelihood, exposed for the
// alternating fitter's convex sub-problems: loss rho(w), and its first and
// second derivatives.
double rho(Distribution dist, double w);
double rho_d1(Distribution dist, double w);
double rho_d2(Distribution dist, double w);

}  // namespace tdr::lls
