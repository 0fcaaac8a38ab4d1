#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gmmem/commands.hpp"

namespace fs = std::filesystem;
using namespace gmmem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("gmm_em_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(GMM_EM_BINARY) + " " + args + " > " + path("stdout.txt") + " 2> " +
                            path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err() const { return slurp(path("stderr.txt")); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateWritesSpecAndRows) {
  ASSERT_EQ(run("generate --k 3 --d 8 --n 1000 --seed 7 --spec " + path("s.json") + " --data " + path("d.csv")), 0)
      << err();
  const Dataset data = read_dataset(path("d.csv"));
  EXPECT_EQ(data.n(), 1000u);
  EXPECT_EQ(data.d(), 8u);
  EXPECT_TRUE(data.has_labels());
  const GmmSpec spec = read_spec(path("s.json"));
  EXPECT_EQ(spec.k(), 3u);
  EXPECT_TRUE(check_separation(spec, 64).holds);
}

TEST_F(Cli, GenerateIsByteIdentical) {
  const std::string args = "generate --k 2 --d 3 --n 500 --seed 11 --weights geometric:0.5 ";
  ASSERT_EQ(run(args + "--spec " + path("a.json") + " --data " + path("a.csv")), 0);
  ASSERT_EQ(run(args + "--spec " + path("b.json") + " --data " + path("b.csv")), 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(Cli, GenerateMatchesGoldenFiles) {
  ASSERT_EQ(run("generate --k 2 --d 2 --n 5 --seed 7 --spec " + path("s.json") + " --data " + path("d.csv")), 0);
  EXPECT_EQ(slurp(path("s.json")), slurp(fs::path(GOLDEN_DIR) / "generate_k2_d2_n5_seed7.json"));
  EXPECT_EQ(slurp(path("d.csv")), slurp(fs::path(GOLDEN_DIR) / "generate_k2_d2_n5_seed7.csv"));
}

TEST_F(Cli, GenerateRejectsZeroSamples) {
  EXPECT_EQ(run("generate --n 0 --spec " + path("s.json") + " --data " + path("d.csv")), 1);
  EXPECT_NE(err().find("--n"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("d.csv")));
}

TEST_F(Cli, FitExitCodes) {
  ASSERT_EQ(run("generate --k 3 --d 8 --n 20000 --seed 42 --weights explicit:0.5,0.3,0.2 --spec " + path("t.json") +
                " --data " + path("d.csv")),
            0);
  // From the truth: converges within three iterations.
  EXPECT_EQ(run("fit --init " + path("t.json") + " --data " + path("d.csv") + " --truth " + path("t.json") +
                " --trace " + path("trace.csv") + " --out " + path("fit.json")),
            0)
      << err();
  const std::string trace = slurp(path("trace.csv"));
  const auto rows = std::count(trace.begin(), trace.end(), '\n') - 1;
  EXPECT_GE(rows, 2);
  EXPECT_LE(rows, 4);
  EXPECT_TRUE(fs::exists(path("fit.json")));

  EXPECT_EQ(run("fit --init " + path("t.json") + " --data " + path("d.csv") + " --max-iters 1 --tol 0"), 2);
  EXPECT_EQ(run("fit --init " + path("t.json") + " --data " + path("d.csv") + " --mode split --batches 4 --tol 0"),
            2);
  EXPECT_EQ(run("fit --init " + path("t.json") + " --data " + path("d.csv") + " --mode split --batches 40000"), 1);
  EXPECT_NE(err().find("batches"), std::string::npos);
}

TEST_F(Cli, FitDimensionMismatchIsAnError) {
  ASSERT_EQ(run("generate --k 2 --d 3 --n 100 --spec " + path("a.json") + " --data " + path("a.csv")), 0);
  ASSERT_EQ(run("generate --k 2 --d 4 --n 100 --spec " + path("b.json") + " --data " + path("b.csv")), 0);
  EXPECT_EQ(run("fit --init " + path("b.json") + " --data " + path("a.csv")), 1);
  EXPECT_NE(err().find("d="), std::string::npos);
}

TEST_F(Cli, ParseErrorsCarryFileAndLine) {
  spit(path("bad.json"), "{\n  \"d\": 2,\n  \"components\": [\n    {\"weight\": 1.0,,}\n  ]\n}\n");
  ASSERT_EQ(run("generate --k 2 --d 2 --n 50 --spec " + path("t.json") + " --data " + path("d.csv")), 0);
  EXPECT_EQ(run("fit --init " + path("bad.json") + " --data " + path("d.csv")), 1);
  EXPECT_NE(err().find(path("bad.json") + ":4:"), std::string::npos) << err();

  spit(path("bad.csv"), "x0,x1\n1,2\n3,oops\n");
  EXPECT_EQ(run("fit --init " + path("t.json") + " --data " + path("bad.csv")), 1);
  EXPECT_NE(err().find(path("bad.csv") + ":3"), std::string::npos) << err();

  EXPECT_EQ(run("fit --init " + path("missing.json") + " --data " + path("d.csv")), 1);
}

TEST_F(Cli, UnknownExperimentListsNames) {
  spit(path("cfg.json"), R"({"schema": 1, "experiment": "nope", "seeds": [1]})");
  EXPECT_EQ(run("experiment --config " + path("cfg.json")), 1);
  for (const char* name :
       {"convergence", "error_vs_n", "error_vs_d", "separation_sweep", "kmeans_init", "bad_events", "fixed_point"}) {
    EXPECT_NE(err().find(name), std::string::npos) << name;
  }
}

TEST_F(Cli, ConfigFieldDiagnostics) {
  spit(path("a.json"), R"({"schema": 2, "experiment": "convergence", "seeds": [1]})");
  EXPECT_EQ(run("experiment --config " + path("a.json")), 1);
  EXPECT_NE(err().find("schema"), std::string::npos);
  spit(path("b.json"), R"({"schema": 1, "experiment": "convergence", "seeds": []})");
  EXPECT_EQ(run("experiment --config " + path("b.json")), 1);
  EXPECT_NE(err().find("seeds"), std::string::npos);
  spit(path("c.json"), R"({"schema": 1, "experiment": "convergence", "seeds": [1], "em": {"mode": "split"}})");
  EXPECT_EQ(run("experiment --config " + path("c.json")), 1);
  EXPECT_NE(err().find("em.batches"), std::string::npos) << err();
  spit(path("d.json"), "{\"schema\": 1,\n\"experiment\": \"convergence\",\n\"seeds\": [1,]\n}");
  EXPECT_EQ(run("experiment --config " + path("d.json")), 1);
  EXPECT_NE(err().find(path("d.json") + ":3:"), std::string::npos) << err();
}

TEST_F(Cli, InitKmeansAndDiagnose) {
  ASSERT_EQ(run("generate --k 3 --d 4 --n 3000 --seed 5 --spec " + path("t.json") + " --data " + path("d.csv")), 0);
  ASSERT_EQ(run("init-kmeans --data " + path("d.csv") + " --init " + path("t.json") + " --out " + path("k.json")), 0)
      << err();
  const GmmSpec est = read_spec(path("k.json"));
  EXPECT_EQ(est.k(), 3u);
  ASSERT_EQ(run("diagnose --data " + path("d.csv") + " --spec " + path("k.json") + " --truth " + path("t.json") +
                " --out " + path("r.json")),
            0)
      << err();
  const auto report = nlohmann::json::parse(slurp(path("r.json")));
  EXPECT_EQ(report["est_of_true"], nlohmann::json({0, 1, 2}));
  EXPECT_EQ(report["sources"].size(), 2u);
}

TEST_F(Cli, ExperimentCsvHeadersMatchGolden) {
  const std::string configs[] = {
      R"({"schema": 1, "experiment": "convergence", "n": 3000, "seeds": [1, 2]})",
      R"({"schema": 1, "experiment": "error_vs_n", "n_grid": [1000, 2000], "seeds": [1],
          "em": {"mode": "split", "batches": 2}})",
      R"({"schema": 1, "experiment": "error_vs_d", "n": 3000, "d_grid": [2, 3], "seeds": [1]})",
      R"({"schema": 1, "experiment": "separation_sweep", "n": 3000, "margin_grid": [0.5, 1.0], "seeds": [1]})",
      R"({"schema": 1, "experiment": "kmeans_init", "n": 3000, "seeds": [1]})",
      R"({"schema": 1, "experiment": "bad_events", "n": 3000, "seeds": [1],
          "instance": {"beta_tuned": {"d": 8, "beta": 4}}})",
      R"({"schema": 1, "experiment": "fixed_point", "n_grid": [1000, 4000], "seeds": [1]})",
  };
  std::string headers;
  for (std::size_t c = 0; c < std::size(configs); ++c) {
    const std::string cfg = path("cfg" + std::to_string(c) + ".json");
    spit(cfg, configs[c]);
    const int code = run("experiment --config " + cfg + " --out " + path("out"));
    ASSERT_TRUE(code == 0 || code == 2) << err();
  }
  for (const char* name :
       {"convergence", "error_vs_n", "error_vs_d", "separation_sweep", "kmeans_init", "bad_events", "fixed_point"}) {
    const fs::path rows = dir_ / "out" / (std::string(name) + "_rows.csv");
    ASSERT_TRUE(fs::exists(rows)) << name;
    ASSERT_TRUE(fs::exists(dir_ / "out" / (std::string(name) + "_summary.json"))) << name;
    headers += std::string(name) + ": " + first_line(slurp(rows)) + "\n";
  }

  // Trace and dataset headers.
  ASSERT_EQ(run("generate --k 2 --d 2 --n 200 --seed 3 --spec " + path("t.json") + " --data " + path("d.csv")), 0);
  ASSERT_EQ(run("fit --init " + path("t.json") + " --data " + path("d.csv") + " --truth " + path("t.json") +
                " --trace " + path("with_truth.csv") + " --max-iters 2 --tol 0"),
            2);
  ASSERT_EQ(run("fit --init " + path("t.json") + " --data " + path("d.csv") + " --trace " + path("bare.csv") +
                " --max-iters 2 --tol 0"),
            2);
  headers += "dataset: " + first_line(slurp(path("d.csv"))) + "\n";
  headers += "trace: " + first_line(slurp(path("with_truth.csv"))) + "\n";
  EXPECT_EQ(headers, slurp(fs::path(GOLDEN_DIR) / "csv_headers.txt"));

  // D_m column is left empty without a truth.
  const std::string bare = slurp(path("bare.csv"));
  const std::string second = bare.substr(bare.find('\n') + 1);
  EXPECT_EQ(second.rfind("0,,", 0), 0u) << second;
}

TEST_F(Cli, ExperimentIsDeterministic) {
  spit(path("cfg.json"), R"({"schema": 1, "experiment": "kmeans_init", "n": 5000, "seeds": [1, 2, 3]})");
  ASSERT_EQ(run("experiment --config " + path("cfg.json") + " --out " + path("a")), 0) << err();
  ASSERT_EQ(run("experiment --config " + path("cfg.json") + " --out " + path("b")), 0);
  EXPECT_EQ(slurp(path("a/kmeans_init_rows.csv")), slurp(path("b/kmeans_init_rows.csv")));
  EXPECT_EQ(slurp(path("a/kmeans_init_summary.json")), slurp(path("b/kmeans_init_summary.json")));
}

TEST(ExitCodes, Contract) {
  EXPECT_EQ(cli::kExitConverged, 0);
  EXPECT_EQ(cli::kExitError, 1);
  EXPECT_EQ(cli::kExitMaxIters, 2);
}
