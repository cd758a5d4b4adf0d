#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "didcatt/csv.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "didcatt_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void put(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(DIDCATT_BIN) + " " + args + " 2>" + (kRoot / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string path(const std::string& rel) { return (kRoot / rel).string(); }

}  // namespace

TEST_CASE("simulate smoke") {
  fs::remove_all(kRoot);
  put(kRoot / "sim.json", R"({"schema_version": 1, "seed": 4, "data": {"dgp": {"n": 10}}})");
  REQUIRE(run("simulate --config " + path("sim.json") + " --out " + path("sim")) == 0);
  const didcatt::CsvTable t = didcatt::read_csv(kRoot / "sim" / "panel.csv");
  CHECK(t.rows.size() == 20);
  CHECK(t.find("oracle_theta"));
  CHECK(t.find("oracle_pi0"));
  CHECK(didcatt::read_csv(kRoot / "sim" / "oracle.csv").rows.size() == 10);

  // The simulated CSV loads back through the csv data source.
  const auto report = nlohmann::json::parse(slurp(kRoot / "sim" / "simulate_report.json"));
  nlohmann::json cfg = {{"schema_version", 1},
                        {"data", {{"csv", report["csv_schema"]}}},
                        {"x", report["x"]},
                        {"nuisance", {{"folds", 2}}}};
  cfg["data"]["csv"]["path"] = path("sim/panel.csv");
  put(kRoot / "fit_csv.json", cfg.dump());
  put(kRoot / "big.json", R"({"schema_version": 1, "seed": 4, "data": {"dgp": {"n": 400}}})");
  REQUIRE(run("simulate --config " + path("big.json") + " --out " + path("sim")) == 0);
  CHECK(run("fit --config " + path("fit_csv.json") + " --out " + path("fitcsv")) == 0);
  CHECK(fs::exists(kRoot / "fitcsv" / "model.txt"));
}

TEST_CASE("fit then predict reproduces training predictions byte for byte") {
  for (const char* final_kind : {"linear", "gbt"}) {
    const std::string cfg = std::string(R"({"schema_version": 1, "seed": 8, "data": {"dgp": {"n": 1500}},
      "nuisance": {"g": {"kind": "gbt_squared", "rounds": 30}}, "final": {"kind": ")") + final_kind + R"("}})";
    put(kRoot / "fit.json", cfg);
    REQUIRE(run("fit --config " + path("fit.json") + " --out " + path("fit")) == 0);
    REQUIRE(run("predict --model " + path("fit/model.txt") + " --input " + path("fit/x_train.csv") + " --out " +
                path("pred")) == 0);
    CHECK(slurp(kRoot / "fit" / "training_predictions.csv") == slurp(kRoot / "pred" / "predictions.csv"));
    const auto rep = nlohmann::json::parse(slurp(kRoot / "fit" / "fit_report.json"));
    CHECK(rep.contains("heldout_dr_loss"));
  }
}

TEST_CASE("reproducible outputs, jobs override and resolved config") {
  put(kRoot / "fit.json", R"({"schema_version": 1, "seed": 2, "data": {"dgp": {"n": 1200}}})");
  REQUIRE(run("fit --config " + path("fit.json") + " --out " + path("a")) == 0);
  REQUIRE(run("fit --config " + path("fit.json") + " --out " + path("b") + " --jobs 1", "DIDCATT_JOBS=3") == 0);
  REQUIRE(run("fit --config " + path("a/resolved_config.json") + " --out " + path("c")) == 0);
  for (const char* f : {"model.txt", "fit_report.json", "training_predictions.csv", "nuisances.csv"}) {
    CHECK(slurp(kRoot / "a" / f) == slurp(kRoot / "b" / f));
    CHECK(slurp(kRoot / "a" / f) == slurp(kRoot / "c" / f));
  }
  REQUIRE(run("fit --config " + path("fit.json") + " --out " + path("d") + " --seed 3") == 0);
  CHECK(slurp(kRoot / "a" / "model.txt") != slurp(kRoot / "d" / "model.txt"));
}

TEST_CASE("tiny benchmark grid") {
  put(kRoot / "bm.json", R"({"schema_version": 1, "seed": 12, "benchmark": {"replications": 3, "n_test": 1000,
    "dgps": [{"name": "cpt", "n": 2000}],
    "nuisances": [{"name": "gbt", "g": {"kind": "gbt_squared"}}],
    "learners": [{"name": "dr"}, {"name": "or", "estimator": "or"}]}})");
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(run("benchmark --config " + path("bm.json") + " --out " + path("bm1")) == 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 60.0);
  CHECK(didcatt::read_csv(kRoot / "bm1" / "results.csv").rows.size() == 6);
  REQUIRE(run("benchmark --config " + path("bm.json") + " --out " + path("bm2") + " --jobs 2") == 0);
  for (const char* f : {"results.csv", "summary.csv", "summary.json"})
    CHECK(slurp(kRoot / "bm1" / f) == slurp(kRoot / "bm2" / f));
}

TEST_CASE("structured errors") {
  put(kRoot / "bad.json", R"({"schema_version": 1, "data": {"dgp": {"n": 0}}})");
  CHECK(run("fit --config " + path("bad.json") + " --out " + path("err")) != 0);
  const auto rec = nlohmann::json::parse(slurp(kRoot / "err" / "errors.json"));
  CHECK(rec.contains("module"));
  CHECK(rec.contains("operation"));
  CHECK(rec.contains("message"));
  const auto line = nlohmann::json::parse(slurp(kRoot / "stderr.txt"));
  CHECK(line == rec);

  put(kRoot / "v2.json", R"({"schema_version": 2})");
  CHECK(run("simulate --config " + path("v2.json") + " --out " + path("err2")) != 0);
  CHECK(run("predict --model " + path("nope.txt") + " --input " + path("nope.csv") + " --out " + path("err3")) != 0);
  CHECK(fs::exists(kRoot / "err3" / "errors.json"));
}
