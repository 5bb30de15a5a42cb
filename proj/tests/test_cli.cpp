#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sphnn/io.hpp"

using namespace sphnn;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / "sphnn_cli_test" /
           ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_spec(const std::string& name, const json& j) const {
    std::ofstream(path(name)) << j.dump();
    return path(name);
  }

  int run(const std::string& args) const {
    const std::string cmd = std::string(SPHNN_CLI) + " " + args + " >" + path("stdout.txt") + " 2>" + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  // Small spinning-body dataset plus a checkpoint trained for a few steps.
  void small_run() {
    ASSERT_EQ(run("generate --spec " + write_spec("gen.json", {{"duration", 2.0}, {"trajectories", 3}, {"out", path("data")}})), 0);
    const json train = {{"preset", "spinning_body"},
                        {"data", {{"manifest", path("data/manifest.json")}}},
                        {"verify", {{"samples", 50}}},
                        {"out", path("run")}};
    ASSERT_EQ(run("train --steps 20 --spec " + write_spec("train.json", train)), 0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenerateDefaultSpinningBody) {
  ASSERT_EQ(run("generate --out " + path("data")), 0);
  for (int k = 0; k < 10; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "data/traj_%03d.csv", k);
    EXPECT_TRUE(fs::exists(path(name))) << name;
  }
  EXPECT_TRUE(fs::exists(path("data/pairs.csv")));
  const auto tr = load_csv(path("data/traj_000.csv"));
  EXPECT_EQ(tr.size(), 501u);
  EXPECT_EQ(tr.state_dim(), 3u);
  EXPECT_EQ(load_pairs(path("data/pairs.csv")).size(), 5010u);
}

TEST_F(Cli, GenerateIsDeterministic) {
  ASSERT_EQ(run("generate --seed 4 --out " + path("a")), 0);
  ASSERT_EQ(run("generate --seed 4 --out " + path("b")), 0);
  ASSERT_EQ(run("generate --seed 5 --out " + path("c")), 0);
  EXPECT_EQ(slurp(path("a/traj_003.csv")), slurp(path("b/traj_003.csv")));
  EXPECT_EQ(slurp(path("a/pairs.csv")), slurp(path("b/pairs.csv")));
  EXPECT_NE(slurp(path("a/traj_003.csv")), slurp(path("c/traj_003.csv")));
}

TEST_F(Cli, GenerateLinearWithInput) {
  const json spec = {{"system", "linear"}, {"B", {{0.0}, {1.0}}}, {"duration", 3.0}, {"out", path("lin")}};
  ASSERT_EQ(run("generate --spec " + write_spec("g.json", spec)), 0);
  const auto tr = load_csv(path("lin/traj_000.csv"));
  EXPECT_EQ(tr.input_dim(), 1u);
  EXPECT_EQ(tr.size(), 31u);
}

TEST_F(Cli, TrainZeroStepsKeepsInitialization) {
  ASSERT_EQ(run("generate --spec " + write_spec("gen.json", {{"duration", 1.0}, {"trajectories", 2}, {"out", path("data")}})), 0);
  const json train = {{"model", {{"n", 3}, {"seed", 9}}},
                      {"data", {{"pairs", path("data/pairs.csv")}}},
                      {"verify", {{"samples", 20}}},
                      {"out", path("run")}};
  ASSERT_EQ(run("train --steps 0 --spec " + write_spec("t.json", train)), 0);
  ModelSpec s;
  s.n = 3;
  s.seed = 9;
  const PhsModel fresh(s);
  const auto cp = load_checkpoint(path("run/checkpoint.json"));
  EXPECT_TRUE(std::equal(fresh.params().values().begin(), fresh.params().values().end(),
                         cp.model.params().values().begin()));
  const json report = read_json_file(path("run/report.json"));
  EXPECT_EQ(report.at("verdict"), "certified_global_asymptotic");
}

TEST_F(Cli, PredictEvalVerifyDecompose) {
  small_run();
  const json pred = {{"checkpoint", path("run/checkpoint.json")},
                     {"initial_from", path("data/traj_000.csv")},
                     {"out", path("pred.csv")}};
  ASSERT_EQ(run("predict --spec " + write_spec("p.json", pred)), 0);
  const auto p = load_csv(path("pred.csv"));
  EXPECT_EQ(p.size(), 21u);
  EXPECT_NE(slurp(path("stdout.txt")).find("rmse"), std::string::npos);

  const json ev = {{"truth", path("data/traj_000.csv")},
                   {"predictions", {path("pred.csv"), path("pred.csv")}},
                   {"spinning_body", true},
                   {"out", path("eval")}};
  ASSERT_EQ(run("eval --spec " + write_spec("e.json", ev)), 0);
  const json metrics = read_json_file(path("eval/metrics.json"));
  EXPECT_EQ(metrics.at("predictions").size(), 2u);
  EXPECT_TRUE(fs::exists(path("eval/energy.csv")));

  const json ve = {{"checkpoint", path("run/checkpoint.json")},
                   {"samples", 100},
                   {"probe", {{"horizon", 5.0}, {"directions", 2}}},
                   {"out", path("verify.json")}};
  ASSERT_EQ(run("verify --spec " + write_spec("v.json", ve)), 0);
  const json rep = read_json_file(path("verify.json"));
  EXPECT_EQ(rep.at("verdict"), "certified_global_asymptotic");
  EXPECT_TRUE(rep.at("probe").at("passed").get<bool>());

  const json de = {{"checkpoint", path("run/checkpoint.json")}, {"points", {5, 4}}, {"out", path("field.csv")}};
  ASSERT_EQ(run("decompose --spec " + write_spec("d.json", de)), 0);
  std::ifstream is(path("field.csv"));
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header.rfind("x1,x2,x3,H,f1", 0), 0u);
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  EXPECT_EQ(rows, 20);
}

TEST_F(Cli, PodFitEncodeDecode) {
  Trajectory snaps;
  for (int k = 0; k < 12; ++k) {
    snaps.times.push_back(k);
    snaps.states.push_back({std::sin(0.3 * k), std::cos(0.3 * k), 0.5 * std::sin(0.3 * k), 1.0});
  }
  save_csv(snaps, path("snaps.csv"));
  const json fit = {{"snapshots", path("snaps.csv")}, {"n", 3}, {"out", path("basis.json")}};
  ASSERT_EQ(run("pod --spec " + write_spec("f.json", fit)), 0);
  const json summary = json::parse(slurp(path("stdout.txt")));
  EXPECT_LE(summary.at("relative_error").get<double>(), 1e-10);
  const json enc = {{"action", "encode"}, {"basis", path("basis.json")}, {"input", path("snaps.csv")}, {"out", path("z.csv")}};
  ASSERT_EQ(run("pod --spec " + write_spec("e.json", enc)), 0);
  const json dec = {{"action", "decode"}, {"basis", path("basis.json")}, {"input", path("z.csv")}, {"out", path("x.csv")}};
  ASSERT_EQ(run("pod --spec " + write_spec("d.json", dec)), 0);
  const auto back = load_csv(path("x.csv"));
  for (std::size_t k = 0; k < snaps.size(); ++k)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(back.states[k][i], snaps.states[k][i], 1e-10);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("generate --spec " + write_spec("bad.json", {{"bogus", 1}})), 2);
  EXPECT_EQ(run("generate --spec " + write_spec("bad2.json", {{"system", "pendulum"}})), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train --spec " + write_spec("t.json", {{"data", {{"pairs", path("missing.csv")}}}})), 3);
  std::ofstream(path("broken.csv")) << "t,x1\n0,1\n0.1,oops\n";
  const json pred = {{"checkpoint", path("nope.json")}};
  EXPECT_EQ(run("predict --spec " + write_spec("p.json", pred)), 3);
  const json tr = {{"model", {{"n", 1}}}, {"train", {{"regime", "trajectory"}, {"steps", 1}}},
                   {"data", {{"trajectories", {path("broken.csv")}}}}};
  EXPECT_EQ(run("train --spec " + write_spec("t2.json", tr)), 3);
  EXPECT_NE(slurp(path("stderr.txt")).find("broken.csv:3"), std::string::npos);
  // an unconstrained linear model ẋ = 100x overflows during prediction
  ModelSpec s;
  s.kind = ModelKind::node;
  s.n = 1;
  s.hidden = {};
  PhsModel node(s);
  node.params()[0] = 100.0;
  node.params()[1] = 0.0;
  save_checkpoint(node, path("node.json"));
  const json blow = {{"checkpoint", path("node.json")}, {"x0", {1.0}}, {"times", {{"duration", 10.0}, {"dt", 1.0}}}, {"out", path("blow.csv")}};
  EXPECT_EQ(run("predict --spec " + write_spec("b.json", blow)), 4);
  EXPECT_EQ(run("--help"), 0);
}
