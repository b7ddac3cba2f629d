#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "tdr/lls.hpp"
#include "tdr/subspace.hpp"
#include "tdr/supervised.hpp"
#include "tdr/tensor.hpp"

namespace tdr::prognostics {

/// One asset's degradation image stream (I1 x I2 x D, trailing dim 1) with its
/// observation mask, plus the observed failure time for training assets.
struct AssetStream {
  Tensor4d images;
  std::optional<double> ttf;
};

struct PrognosticModel {
  FactorSet factors;
  lls::LlsModel lls;
  SubspaceDims subspace;
  double alpha_used = 0.0;
  lls::FamilyKind family;
};

using TtfPrediction = lls::TtfPrediction;

/// Stacks streams into one 4-mode tensor, zero-filling and masking positions
/// past each stream's length; the shared third dimension is the longest
/// stream. Returns the tensor and the failure-time vector.
std::pair<Tensor4d, VectorX<double>> pad_and_stack(const std::vector<AssetStream>& assets);

/// Masked least-squares features of one stream under fixed basis matrices.
/// Streams shorter than the basis length are padded with masked frames;
/// longer streams are truncated (with a warning when requested). Errors on a
/// fully masked stream.
Tensor4d extract_features(const AssetStream& stream, const FactorSet& factors,
                          std::vector<std::string>* warnings = nullptr);

/// Supervised subspace fit on the stacked training streams, feature
/// re-extraction under the fixed basis, then the location-scale regression of
/// the failure times on the features.
PrognosticModel train(const std::vector<AssetStream>& train_assets, const SubspaceDims& dims,
                      const supervised::FitConfig& cfg);

TtfPrediction predict(const PrognosticModel& model, const AssetStream& test);

/// |estimated - true| / true.
double prediction_error(double estimated, double true_ttf);

/// Model directory: model.json manifest plus TPD1-encoded basis matrices.
void save_model(const PrognosticModel& model, const std::filesystem::path& dir);
PrognosticModel load_model(const std::filesystem::path& dir);

}  // namespace tdr::prognostics
