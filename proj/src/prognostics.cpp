#include "tdr/prognostics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "tdr/io.hpp"

namespace tdr::prognostics {

std::pair<Tensor4d, VectorX<double>> pad_and_stack(const std::vector<AssetStream>& assets) {
  if (assets.empty()) throw std::invalid_argument("cannot stack an empty asset list");
  const Index i1 = assets.front().images.dims()[0];
  const Index i2 = assets.front().images.dims()[1];
  Index i3 = 0;
  for (const auto& a : assets) {
    if (a.images.dims()[0] != i1 || a.images.dims()[1] != i2)
      throw std::invalid_argument("all streams must share the image dimensions");
    if (a.images.dims()[3] != 1)
      throw std::invalid_argument("asset streams must have a trailing dimension of 1");
    i3 = std::max(i3, a.images.dims()[2]);
  }

  const Index m_count = static_cast<Index>(assets.size());
  Tensor4d x(i1, i2, i3, m_count);
  x.mask().setConstant(false);
  VectorX<double> y(m_count);
  const Index frame = i1 * i2;
  for (Index m = 0; m < m_count; ++m) {
    const Tensor4d& s = assets[m].images;
    const Index depth = s.dims()[2];
    x.values().segment(m * frame * i3, frame * depth) = s.values();
    x.mask().segment(m * frame * i3, frame * depth) = s.mask();
    y[m] = assets[m].ttf.value_or(std::numeric_limits<double>::quiet_NaN());
  }
  return {std::move(x), std::move(y)};
}

namespace {

/// Pads (masked) or truncates a stream along the third mode to length i3.
Tensor4d fit_to_depth(const Tensor4d& images, Index i3, std::vector<std::string>* warnings) {
  const Dims4& d = images.dims();
  if (d[2] == i3) return images;
  Tensor4d out(d[0], d[1], i3, 1);
  const Index frame = d[0] * d[1];
  const Index keep = std::min(d[2], i3);
  out.mask().setConstant(false);
  out.values().head(frame * keep) = images.values().head(frame * keep);
  out.mask().head(frame * keep) = images.mask().head(frame * keep);
  if (d[2] > i3 && warnings)
    warnings->push_back("stream longer than the training horizon; trailing frames dropped");
  return out;
}

}  // namespace

Tensor4d extract_features(const AssetStream& stream, const FactorSet& factors,
                          std::vector<std::string>* warnings) {
  const Tensor4d padded = fit_to_depth(stream.images, factors.u3.cols(), warnings);
  if (!padded.mask().any()) throw std::invalid_argument("stream has no observed entries");
  supervised::MaskedSolver solver(padded);
  const MatrixX<double> s4 = solver.solve_core(factors);
  const SubspaceDims p = factors.subspace();
  return dematricize<double>(s4, 4, {p.p1, p.p2, p.p3, 1});
}

PrognosticModel train(const std::vector<AssetStream>& train_assets, const SubspaceDims& dims,
                      const supervised::FitConfig& cfg) {
  if (train_assets.size() < 2) throw std::invalid_argument("training requires at least two assets");
  for (const auto& a : train_assets)
    if (!a.ttf) throw std::invalid_argument("every training asset needs an observed failure time");

  auto [x, y] = pad_and_stack(train_assets);
  const supervised::FitState state = supervised::fit(x, y, dims, cfg);

  // Features are re-extracted under the fixed basis so training and test
  // assets pass through the same operator.
  const Index m_count = y.size();
  MatrixX<double> s4(m_count, dims.count());
  for (Index m = 0; m < m_count; ++m) {
    const Tensor4d f = extract_features(train_assets[m], state.factors);
    s4.row(m) = matricize(f, 4);
  }

  PrognosticModel model;
  model.factors = state.factors;
  model.subspace = dims;
  model.alpha_used = cfg.alpha;
  model.family = cfg.family;
  model.lls = lls::fit_lls(y, s4, cfg.family);
  return model;
}

TtfPrediction predict(const PrognosticModel& model, const AssetStream& test) {
  const Tensor4d features = extract_features(test, model.factors);
  const VectorX<double> v = features.values();
  return lls::predict_distribution(model.lls, v);
}

double prediction_error(double estimated, double true_ttf) {
  if (!(true_ttf > 0.0)) throw std::invalid_argument("true failure time must be positive");
  return std::abs(estimated - true_ttf) / true_ttf;
}

void save_model(const PrognosticModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["subspace"] = {model.subspace.p1, model.subspace.p2, model.subspace.p3};
  j["alpha_used"] = model.alpha_used;
  j["family"] = lls::family_name(model.family);
  j["lls"] = nlohmann::json::parse(lls::to_json(model.lls));
  j["factors"] = {"U1.tpd1", "U2.tpd1", "U3.tpd1"};
  std::ofstream os(dir / "model.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  os << j.dump(2) << "\n";
  write_matrix(dir / "U1.tpd1", model.factors.u1);
  write_matrix(dir / "U2.tpd1", model.factors.u2);
  write_matrix(dir / "U3.tpd1", model.factors.u3);
}

PrognosticModel load_model(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw std::runtime_error("cannot open " + (dir / "model.json").string());
  nlohmann::json j;
  is >> j;
  PrognosticModel model;
  const auto p = j.at("subspace").get<std::vector<Index>>();
  if (p.size() != 3) throw std::runtime_error("model manifest: subspace must have three entries");
  model.subspace = {p[0], p[1], p[2]};
  model.alpha_used = j.at("alpha_used").get<double>();
  model.family = lls::parse_family(j.at("family").get<std::string>());
  model.lls = lls::model_from_json(j.at("lls").dump());
  const auto files = j.at("factors").get<std::vector<std::string>>();
  if (files.size() != 3) throw std::runtime_error("model manifest: expected three factor files");
  model.factors.u1 = read_matrix(dir / files[0]);
  model.factors.u2 = read_matrix(dir / files[1]);
  model.factors.u3 = read_matrix(dir / files[2]);
  if (model.factors.subspace() != model.subspace)
    throw std::runtime_error("model manifest: factor shapes disagree with the subspace dims");
  return model;
}

}  // namespace tdr::prognostics
