#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "scrambling/experiment.hpp"

using namespace scrambling;
namespace fs = std::filesystem;

namespace {

const char* kOracleConfig = R"(experiment = "oracle_check"
seed = 3
output_path = "unused"

[parameters]
engine = "gillespie"
extents = [6]
boundary = "periodic"
V = 1.0
J = 1.0
times = [0.5, 1.0]
samples = 2000
dump_trajectory = true
)";

const char* kSizeTraceConfig = R"(experiment = "size_trace"
seed = 4
output_path = "unused"

[lattice]
dimension = 3

[parameters]
n_i = 3
p_i = [0.3, 0.5]
t_max = 100
samples = 200
stride = 10
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("scrambling_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  if (pos == std::string::npos) throw std::runtime_error("pattern not found: " + from);
  return s.replace(pos, from.size(), to);
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SCRAMBLING_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(Parser, ScalarsArraysAndComments) {
  const auto doc = parse_config(R"(# comment
a = 1_000
b = -2.5e-3   # trailing
c = "x # not a comment"
d = 'C:\path'
e = true
f = [1, 2,
     3, # inside
     4]
g = inf

[sec]
h = ["a", 'b']
)");
  ASSERT_TRUE(doc.syntax_errors.empty()) << doc.syntax_errors.front().str();
  EXPECT_EQ(doc.root["a"], 1000);
  EXPECT_TRUE(doc.root["a"].is_number_integer());
  EXPECT_DOUBLE_EQ(doc.root["b"].get<double>(), -2.5e-3);
  EXPECT_EQ(doc.root["c"], "x # not a comment");
  EXPECT_EQ(doc.root["d"], "C:\\path");
  EXPECT_EQ(doc.root["e"], true);
  EXPECT_EQ(doc.root["f"], nlohmann::json({1, 2, 3, 4}));
  EXPECT_TRUE(std::isinf(doc.root["g"].get<double>()));
  EXPECT_EQ(doc.root["sec"]["h"], nlohmann::json({"a", "b"}));
  EXPECT_EQ(doc.line_of("sec.h"), 13);
  EXPECT_EQ(doc.line_of("f"), 7);
}

TEST(Parser, SyntaxErrorsCarryLines) {
  const auto doc = parse_config("a = 1\nb 2\nc = [1, 2\n\n[sec\nd = 1x\na = 2\n");
  std::vector<int> lines;
  for (const auto& d : doc.syntax_errors) lines.push_back(d.line);
  EXPECT_NE(std::find(lines.begin(), lines.end(), 2), lines.end());
  EXPECT_FALSE(doc.syntax_errors.empty());
  const auto dup = parse_config("a = 1\na = 2\n");
  ASSERT_EQ(dup.syntax_errors.size(), 1u);
  EXPECT_EQ(dup.syntax_errors[0].line, 2);
  EXPECT_NE(dup.syntax_errors[0].message.find("'a'"), std::string::npos);
  const auto sec = parse_config("[s]\n[s]\n");
  ASSERT_EQ(sec.syntax_errors.size(), 1u);
  EXPECT_EQ(sec.syntax_errors[0].line, 2);
}

TEST(Parser, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/file.toml"), ConfigError);
}

TEST(Validate, CompleteConfigHasNoDiagnostics) {
  EXPECT_TRUE(validate_config(parse_config(kOracleConfig)).empty());
  EXPECT_TRUE(validate_config(parse_config(kSizeTraceConfig)).empty());
}

TEST(Validate, NegativeV) {
  const auto d = validate_config(parse_config(replace(kOracleConfig, "V = 1.0", "V = -1.0")));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 9);
  EXPECT_NE(d[0].message.find("parameters.V"), std::string::npos);
}

TEST(Validate, ProbabilityOutOfRange) {
  const auto d = validate_config(parse_config(replace(kSizeTraceConfig, "p_i = [0.3, 0.5]", "p_i = 1.2")));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("range [0, 1]"), std::string::npos) << d[0].str();
  EXPECT_NE(d[0].message.find("parameters.p_i"), std::string::npos);
}

TEST(Validate, MalformedKeyIsNamed) {
  const auto typo = validate_config(parse_config(replace(kSizeTraceConfig, "stride", "strdie")));
  ASSERT_EQ(typo.size(), 1u);
  EXPECT_NE(typo[0].message.find("parameters.strdie"), std::string::npos);
  EXPECT_EQ(typo[0].line, 13);
  const auto bad = validate_config(parse_config(replace(kSizeTraceConfig, "stride = 10", "str ide = 10")));
  ASSERT_FALSE(bad.empty());
  EXPECT_NE(bad[0].message.find("str ide"), std::string::npos);
}

TEST(Validate, MissingAndUnknown) {
  const auto d = validate_config(parse_config("experiment = \"size_trace\"\nseed = 1\n"));
  std::string all;
  for (const auto& x : d) all += x.str() + "\n";
  EXPECT_NE(all.find("output_path"), std::string::npos);
  EXPECT_NE(all.find("lattice.dimension"), std::string::npos);
  EXPECT_NE(all.find("parameters.p_i"), std::string::npos);
  const auto e = validate_config(parse_config("experiment = \"figure9\"\nseed = 1\noutput_path = \"x\"\n"));
  ASSERT_EQ(e.size(), 1u);
  EXPECT_NE(e[0].message.find("figure9"), std::string::npos);
}

TEST(Validate, CrossChecks) {
  const std::string lr = replace(kSizeTraceConfig, "dimension = 3", "dimension = 1\nkernel = \"long_range\"");
  const auto d = validate_config(parse_config(lr));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("lattice.alpha"), std::string::npos);
  const auto big = validate_config(parse_config(replace(kOracleConfig, "extents = [6]", "extents = [5, 5]")));
  EXPECT_EQ(big.size(), 1u);
}

TEST(Validate, ShippedConfigs) {
  for (const auto& entry : fs::directory_iterator(SCRAMBLING_CONFIG_DIR)) {
    if (entry.path().extension() != ".toml") continue;
    const auto d = validate_config(load_config(entry.path().string()));
    EXPECT_TRUE(d.empty()) << entry.path() << ": " << (d.empty() ? "" : d[0].str());
  }
}

TEST(ExperimentConfig, ThrowsOnInvalid) {
  EXPECT_THROW(ExperimentConfig(parse_config("seed = 1\n")), ConfigError);
  const ExperimentConfig c(parse_config(kSizeTraceConfig));
  EXPECT_EQ(c.experiment(), "size_trace");
  EXPECT_EQ(c.seed(), 4u);
  EXPECT_EQ(c.lattice().dimension, 3);
  EXPECT_EQ(c.reals("parameters.p_i"), (std::vector<double>{0.3, 0.5}));
}

TEST(Csv, FormatAndCellCount) {
  CsvTable t({"a", "b"});
  t.row() << 0.1 << 3;
  t.row() << 1e-20 << std::string("x");
  EXPECT_EQ(t.str(), "a,b\n0.1,3\n1e-20,x\n");
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(format_number(1.0 / 3.0), "0.3333333333");
  EXPECT_THROW(t.row() << 1.0, Error);
}

TEST(Csv, AtomicWriteLeavesNoTemporary) {
  const fs::path dir = scratch_dir("csv");
  write_file_atomic(dir / "sub" / "x.csv", "hello\n");
  EXPECT_EQ(read_file(dir / "sub" / "x.csv"), "hello\n");
  EXPECT_FALSE(fs::exists(dir / "sub" / "x.csv.tmp"));
  fs::remove_all(dir);
}

TEST(RunExperiment, OracleOutputsAndManifest) {
  const fs::path dir = scratch_dir("oracle");
  const auto rep = run_experiment(ExperimentConfig(parse_config(kOracleConfig)), dir.string());
  EXPECT_EQ(first_line(read_file(dir / "tv_distance.csv")), "t,tv_distance,samples,dt");
  EXPECT_EQ(first_line(read_file(dir / "exact_distribution.csv")), "config_index,probability");
  EXPECT_EQ(first_line(read_file(dir / "trajectory.csv")), "t,event_type,popcount");
  const auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(m["experiment"], "oracle_check");
  EXPECT_EQ(m["toolkit_version"], toolkit_version);
  EXPECT_EQ(m["config"]["seed"], 3);
  EXPECT_TRUE(m["elapsed_seconds"].is_number());
  for (const auto& out : m["outputs"]) {
    const std::string header = first_line(read_file(dir / out["file"].get<std::string>()));
    std::size_t cols = 1 + std::count(header.begin(), header.end(), ',');
    EXPECT_EQ(out["columns"].size(), cols) << out["file"];
  }
  fs::remove_all(dir);
}

TEST(RunExperiment, ByteReproducible) {
  for (const char* cfg : {kOracleConfig, kSizeTraceConfig}) {
    const fs::path a = scratch_dir("repro_a"), b = scratch_dir("repro_b");
    const auto rep = run_experiment(ExperimentConfig(parse_config(cfg)), a.string());
    run_experiment(ExperimentConfig(parse_config(cfg)), b.string());
    ASSERT_FALSE(rep.outputs.empty());
    for (const auto& f : rep.outputs) EXPECT_EQ(read_file(a / f.name), read_file(b / f.name)) << f.name;
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST(RunExperiment, SizeTraceHeader) {
  const fs::path dir = scratch_dir("size");
  run_experiment(ExperimentConfig(parse_config(kSizeTraceConfig)), dir.string());
  EXPECT_EQ(first_line(read_file(dir / "size_trace_p0p3.csv")), "t,mean_N,stderr_N,samples");
  EXPECT_TRUE(fs::exists(dir / "size_trace_p0p5.csv"));
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_dir("cli");
  const fs::path good = dir / "good.toml", bad = dir / "bad.toml", broken = dir / "broken.toml";
  std::ofstream(good) << kOracleConfig;
  std::ofstream(bad) << replace(kOracleConfig, "V = 1.0", "V = -1.0");
  std::ofstream(broken) << "experiment = \"lyapunov_curve\"\nseed = 1\noutput_path = \"" << (dir / "out").string()
                        << "\"\n[parameters]\ndimensions = [1]\nJ_over_V = [1e7]\n";
  const fs::path log = dir / "log.txt";

  EXPECT_EQ(run_cli("validate " + good.string(), log), 0);
  EXPECT_EQ(run_cli("validate " + bad.string(), log), 2);
  EXPECT_NE(read_file(log).find("line 9"), std::string::npos) << read_file(log);
  EXPECT_EQ(run_cli("run " + bad.string(), log), 2);
  EXPECT_EQ(run_cli("run " + good.string() + " -o " + (dir / "run").string(), log), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
  EXPECT_EQ(run_cli("run " + broken.string(), log), 1);
  EXPECT_NE(read_file(log).find("error: solve_kappa"), std::string::npos) << read_file(log);
  EXPECT_EQ(run_cli("validate " + (dir / "missing.toml").string(), log), 2);
  EXPECT_EQ(run_cli("list-experiments", log), 0);
  EXPECT_NE(read_file(log).find("walker_scan"), std::string::npos);
  EXPECT_EQ(run_cli("frobnicate", log), 2);
  fs::remove_all(dir);
}
