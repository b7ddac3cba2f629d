#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tdr/heat_sim.hpp"
#include "tdr/mpca.hpp"
#include "tdr/prognostics.hpp"
#include "tdr/supervised.hpp"

namespace tdr::bench {

enum class Method { ProposedCv, MpcaCv, Mpca97 };

Method parse_method(const std::string& name);  // proposed_cv | mpca_cv | mpca97
std::string method_name(Method method);

struct CvGrid {
  std::vector<SubspaceDims> p_candidates;
  std::vector<double> alphas{0.2, 0.5, 0.8};
  int folds = 10;
};

/// All (P1,P2,P3) combinations with 1 <= P_n <= p_max.
CvGrid default_grid(int p_max = 4);

/// Fold label per asset; a pure function of (seed, count, folds).
std::vector<int> fold_assignment(std::uint64_t seed, Index count, int folds);

struct CvCell {
  SubspaceDims dims;
  double alpha = 1.0;
  double score = 0.0;  // mean over folds of the held-out median error
  bool ok = false;
  std::string message;
};

struct CvResult {
  SubspaceDims dims;
  double alpha = 1.0;
  std::vector<CvCell> table;
};

/// Grid search with k-fold cross-validation on the training assets. Grid
/// points that fail are recorded and skipped; ties break toward the smaller
/// subspace, then the smaller alpha. The unsupervised methods ignore the
/// alpha candidates.
CvResult cross_validate(const std::vector<prognostics::AssetStream>& train, const CvGrid& grid,
                        const supervised::FitConfig& base, Method method,
                        std::uint64_t seed);

/// Unsupervised baseline pipeline: masked completion, multilinear PCA on the
/// imputed tensor, then the location-scale regression on the projected
/// features. Returned as an ordinary prognostic model so prediction is shared.
prognostics::PrognosticModel train_mpca_pipeline(const std::vector<prognostics::AssetStream>& train,
                                                 const mpca::Selector& selector,
                                                 const SubspaceDims& completion_dims,
                                                 const lls::FamilyKind& family);

/// Full training for one benchmark method, running cross-validation first
/// where the method calls for it.
prognostics::PrognosticModel train_method(Method method,
                                          const std::vector<prognostics::AssetStream>& train,
                                          const CvGrid& grid, const supervised::FitConfig& base,
                                          std::uint64_t seed, CvResult* chosen = nullptr);

struct BenchmarkCell {
  Method method = Method::ProposedCv;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
  SubspaceDims dims;
  double alpha = 1.0;
  std::vector<Index> asset_ids;
  std::vector<double> truths;
  std::vector<double> estimates;
  std::vector<double> errors;
  double median_error = 0.0;
  double iqr_error = 0.0;
  double runtime_seconds = 0.0;
  bool ok = false;
  std::string message;
};

struct BenchmarkReport {
  std::vector<BenchmarkCell> cells;
};

struct BenchmarkConfig {
  std::vector<Method> methods{Method::ProposedCv, Method::MpcaCv, Method::Mpca97};
  std::vector<double> missing_rates{0.0, 0.1, 0.5, 0.9};
  heatsim::MissingPattern pattern = heatsim::MissingPattern::ImageWise;
  std::vector<std::uint64_t> seeds{1};
  Index train_count = 400;
  Index test_count = 100;
  CvGrid grid = default_grid();
  supervised::FitConfig fit;
  heatsim::SimConfig sim;  // used when data_dir is not given
  std::optional<std::filesystem::path> data_dir;
  Index completion_rank_cap = 4;  // completion dims for the FVE baseline: min(cap, I_n)
};

/// Per (seed, missing rate, method) cell: hyperparameter selection, training,
/// and held-out evaluation. Failures are isolated per cell.
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

void write_errors_csv(const std::filesystem::path& file, const BenchmarkReport& report);
BenchmarkReport read_errors_csv(const std::filesystem::path& file);
void write_report_csv(const std::filesystem::path& file, const BenchmarkReport& report);

/// One box plot per missing rate, methods side by side; presentation only —
/// every reported number comes from the CSVs.
void write_boxplots(const std::filesystem::path& dir, const BenchmarkReport& report);

}  // namespace tdr::bench
