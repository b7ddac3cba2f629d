#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "tdr_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TDR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("simulate, train and predict round-trip through the filesystem") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string data = (kWork / "data").string();

  REQUIRE(run_cli("simulate --assets 12 --seed 5 --out " + data +
                  " --grid-size 11 --diff-scale 0.35") == 0);
  CHECK(fs::exists(kWork / "data/manifest.json"));
  CHECK(fs::exists(kWork / "data/ttf.csv"));
  CHECK(fs::exists(kWork / "data/asset_0.tpd1"));
  CHECK(fs::exists(kWork / "data/asset_11.tpd1"));
  CHECK(line_count(kWork / "data/ttf.csv") == 13);  // header + 12 assets

  const std::string model = (kWork / "model").string();
  REQUIRE(run_cli("train --data " + data + " --out " + model +
                  " --family lognormal --p1 2 --p2 2 --p3 1 --alpha 0.5") == 0);
  CHECK(fs::exists(kWork / "model/model.json"));
  CHECK(fs::exists(kWork / "model/U1.tpd1"));

  const std::string preds = (kWork / "preds.csv").string();
  REQUIRE(run_cli("predict --data " + data + " --model " + model + " --out " + preds) == 0);
  CHECK(line_count(preds) == 13);
  const std::string csv = slurp(preds);
  CHECK(csv.find("asset_id,point_estimate,location,scale,family,true_ttf,abs_rel_error") !=
        std::string::npos);
  CHECK(csv.find("lognormal") != std::string::npos);

  // identical invocation produces identical bytes
  const std::string preds2 = (kWork / "preds2.csv").string();
  REQUIRE(run_cli("predict --data " + data + " --model " + model + " --out " + preds2) == 0);
  CHECK(slurp(preds) == slurp(preds2));
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run_cli("predict --data somewhere --out out.csv") == 2);  // --model missing
  CHECK(run_cli("simulate --assets 0 --out " + (kWork / "zero").string()) == 2);
  CHECK(run_cli("definitely-not-a-command") == 2);
  CHECK(run_cli("train --data " + (kWork / "data").string() + " --out " + (kWork / "m2").string() +
                " --family cauchy") == 2);
  CHECK(run_cli("--help") == 0);
}

TEST_CASE("missing inputs exit with status 1") {
  CHECK(run_cli("predict --data " + (kWork / "no_such_dir").string() + " --model " +
                (kWork / "model").string() + " --out " + (kWork / "x.csv").string()) == 1);
  CHECK(run_cli("train --data " + (kWork / "no_such_dir").string() + " --out " +
                (kWork / "m3").string()) == 1);
}

TEST_CASE("cv picks hyperparameters and writes the score table") {
  const std::string data = (kWork / "data").string();
  const std::string table = (kWork / "cv.csv").string();
  REQUIRE(run_cli("cv --data " + data + " --family lognormal --p-max 2 --alphas 0.5 --folds 3 " +
                  "--seed 1 --out " + table) == 0);
  const std::string csv = slurp(table);
  CHECK(csv.find("p1,p2,p3,alpha,score,status,message") != std::string::npos);
  CHECK(line_count(table) == 9);  // header + 8 grid points
}

TEST_CASE("benchmark emits recomputable tables and plots") {
  const std::string out = (kWork / "bench").string();
  REQUIRE(run_cli("benchmark --out " + out +
                  " --train 10 --test 3 --seeds 2 --missing-rates 0,0.5 --methods "
                  "proposed_cv,mpca97 --family lognormal --p-max 1 --alphas 0.5 --folds 2 "
                  "--grid-size 11 --diff-scale 0.35") == 0);
  CHECK(fs::exists(kWork / "bench/report.csv"));
  CHECK(fs::exists(kWork / "bench/errors.csv"));
  CHECK(fs::exists(kWork / "bench/boxplot_missing_0.svg"));

  const std::string report_out = (kWork / "rereport").string();
  REQUIRE(run_cli("report --errors " + (kWork / "bench/errors.csv").string() + " --out " +
                  report_out) == 0);
  CHECK(fs::exists(kWork / "rereport/summary.csv"));
  CHECK(fs::exists(kWork / "rereport/boxplot_missing_50.svg"));

  CHECK(run_cli("benchmark --out " + out + " --methods nope") == 2);
}
