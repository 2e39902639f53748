#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WFCPL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("wfcpl-cli-" + std::to_string(::getpid()) + "-" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunWritesCsv) {
  const fs::path out = dir_ / "run.csv";
  ASSERT_EQ(run_cli("run --override coupling.t_end=2 --out " + out.string()), 0);
  const std::string text = slurp(out);
  EXPECT_EQ(text.rfind("window,t_end,iterations,converged,final_residual,l2_error,residual_norms\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST_F(Cli, ConfigFileAndOverrides) {
  const fs::path cfg = dir_ / "cfg.json";
  std::ofstream(cfg) << R"({"coupling": {"n_D": 3, "n_N": 2, "p": 2, "dt_window": 0.5}, "output": {"csv_path": ")"
                     << (dir_ / "from_cfg.csv").string() << "\"}}\n";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --override integrators.dirichlet=TR"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "from_cfg.csv"));
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  EXPECT_EQ(run_cli("run --override coupling.bogus=1"), 2);
  EXPECT_EQ(run_cli("run --override coupling.p=2"), 2);
  EXPECT_EQ(run_cli("run --config " + (dir_ / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("run --role dirichlet"), 2);
  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << R"({"grid": {"h": 0.05, "spacing": 2}})";
  EXPECT_EQ(run_cli("run --config " + bad.string()), 2);
}

TEST_F(Cli, NonConvergenceExitsWithThree) {
  const fs::path out = dir_ / "abort.csv";
  EXPECT_EQ(run_cli("run --override accel.scheme=full_fp --override coupling.max_iterations=5 "
                    "--override problem.g_kind=tri --override coupling.tol_rel=1e-12 --out " +
                    out.string()),
            3);
  const std::string text = slurp(out);
  EXPECT_NE(text.find("\n0,1,5,0,"), std::string::npos) << text;
}

TEST_F(Cli, OrderAndRecoverySubcommands) {
  const fs::path order = dir_ / "order.csv";
  ASSERT_EQ(run_cli("order --dt0 0.5 --levels 3 --override grid.h=0.1 --out " + order.string()), 0);
  EXPECT_EQ(slurp(order).rfind("level,dt_window,l2_error,avg_iterations\n0,0.5,", 0), 0u);

  const fs::path rec = dir_ / "rec.csv";
  ASSERT_EQ(run_cli("recovery --case 1:IE:1 --dt 0.5 --setup 2x3 --out " + rec.string()), 0);
  EXPECT_NE(slurp(rec).find("1,IE,WI,2,3,1,0.5,"), std::string::npos);
  EXPECT_EQ(run_cli("recovery --case 1:XX:1"), 2);

  const fs::path table = dir_ / "table.csv";
  ASSERT_EQ(run_cli("table --variant QN-WI --dt 5 --setup 1x1 --out " + table.string()), 0);
  EXPECT_NE(slurp(table).find("QN-WI,WI,all_substeps,qn,1,1,1,5,"), std::string::npos);
}

TEST_F(Cli, TcpRunMatchesInProcessRun) {
  const fs::path a = dir_ / "local.csv", b = dir_ / "tcp.csv";
  const std::string common = "run --override coupling.n_D=2 --override coupling.dt_window=0.5 ";
  ASSERT_EQ(run_cli(common + "--out " + a.string()), 0);
  ASSERT_EQ(run_cli(common + "--listen 127.0.0.1:0 --out " + b.string()), 0);
  // Identical apart from the l2_error column, which is empty in tcp mode.
  auto strip_l2 = [](const std::string& text) {
    std::stringstream in(text), out;
    std::string line;
    while (std::getline(in, line)) {
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string c;
      while (std::getline(ls, c, ',')) cols.push_back(c);
      if (cols.size() > 5) cols[5].clear();
      for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
      out << '\n';
    }
    return out.str();
  };
  EXPECT_EQ(strip_l2(slurp(a)), strip_l2(slurp(b)));
  EXPECT_NE(slurp(b).find(",,"), std::string::npos);
}
