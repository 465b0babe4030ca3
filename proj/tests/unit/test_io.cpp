#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>

#include "csl/experiment.hpp"
#include "csl/io.hpp"

using namespace csl;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("csl_io_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kTwoBranch = R"(# two point masses at +-a
[lattice]
dim = 1
n = 32
dx = 0.5
dt = 0.5
n_steps = 20

[collapse]
lambda = 1.0
a = 1.0

[scenario]
branch_0 = -2.0
branch_1 = 2.0
amplitudes = 0.6, 0.8

[run]
seed = 7
n_traj = 400
)";

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("config parser reads sections, comments and lists") {
  auto cfg = Config::parse(kTwoBranch, "demo.ini");
  CHECK(cfg.get_int("lattice", "n") == 32);
  CHECK(cfg.get_double("lattice", "dx") == 0.5);
  CHECK(cfg.get_doubles("scenario", "amplitudes") == std::vector<double>{0.6, 0.8});
  CHECK(cfg.get_double("collapse", "m0", 2.5) == 2.5);
  CHECK(cfg.get_bool("lattice", "periodic", true));
  CHECK(cfg.keys("scenario") == std::vector<std::string>{"branch_0", "branch_1", "amplitudes"});
}

TEST_CASE("config errors carry file, line and field") {
  CHECK(message_of([] { Config::parse("[lattice]\nn = 4\n[bogus]\n", "f.ini"); }).find("f.ini:3") == 0);
  CHECK(message_of([] { Config::parse("[lattice]\nn 4\n", "f.ini"); }).find("f.ini:2") == 0);
  CHECK(message_of([] { Config::parse("n = 4\n", "f.ini"); }).find("f.ini:1") == 0);
  CHECK(message_of([] { Config::parse("[run]\nseed = 1\nseed = 2\n", "f.ini"); }).find("f.ini:3") == 0);

  auto cfg = Config::parse("[lattice]\n\ndx = 0,5\n", "g.ini");
  auto msg = message_of([&] { cfg.get_double("lattice", "dx"); });
  CHECK(msg.find("g.ini:3") == 0);
  CHECK(msg.find("[lattice] dx") != std::string::npos);
  CHECK_THROWS_AS(cfg.get_double("lattice", "dx"), ConfigError);
  CHECK(message_of([&] { cfg.get_int("lattice", "n"); }).find("required field is missing") != std::string::npos);

  auto bad = Config::parse("[lattice]\ndim = 1\nspacing = 2\n", "h.ini");
  auto m2 = message_of([&] { lattice_from_config(bad); });
  CHECK(m2.find("h.ini:3") == 0);
  CHECK(m2.find("spacing") != std::string::npos);

  auto neg = Config::parse("[lattice]\ndx = -1\n", "k.ini");
  CHECK(message_of([&] { lattice_from_config(neg); }).find("k.ini:2") == 0);
}

TEST_CASE("config hash ignores execution-only keys") {
  auto a = Config::parse(kTwoBranch);
  auto b = Config::parse(std::string(kTwoBranch) + "threads = 8\nout_dir = elsewhere\n");
  CHECK(fnv1a_hex(a.canonical()) == fnv1a_hex(b.canonical()));
  auto c = a;
  c.set("collapse", "lambda", "2.0");
  CHECK(fnv1a_hex(a.canonical()) != fnv1a_hex(c.canonical()));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("numbers print with 17 significant digits and round-trip") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(-2.5) == "-2.5");
  CHECK(format_double(1e-300).find(',') == std::string::npos);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(u(rng) * 200));
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("csv: header-only when empty, NaN is fatal, round-trip") {
  Table t;
  t.columns = {"t", "x"};
  CHECK(emit_csv(t) == "t,x\n");
  t.add_row({0.0, 1.0 / 3.0});
  t.add_row({0.5, -1e-17});
  auto back = parse_csv(emit_csv(t));
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);

  CHECK_THROWS_AS(t.add_row({1.0}), InvariantViolation);
  t.add_row({1.0, std::numeric_limits<double>::quiet_NaN()});
  auto msg = message_of([&] { emit_csv(t); });
  CHECK(msg.find("'x'") != std::string::npos);
  CHECK(msg.find("row 2") != std::string::npos);
  t.rows.back()[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(emit_csv(t), InvariantViolation);
}

TEST_CASE("summary json: provenance block, round-trip, NaN rejected") {
  Json body;
  body["command"] = "collapse";
  body["values"] = {0.1, 1.0 / 3.0, -7e-300};
  body["nested"]["stderr"] = 0.015;
  auto text = emit_summary(body, "00ff", 42);
  auto j = parse_summary(text);
  CHECK(j["config_hash"] == "00ff");
  CHECK(j["seed"] == 42);
  CHECK(j["git_revision"].get<std::string>() == git_revision());
  CHECK(j.find("threads") == j.end());
  for (auto it = body.begin(); it != body.end(); ++it) CHECK(j[it.key()] == it.value());
  CHECK(emit_summary(j, "00ff", 42) == text);

  body["nested"]["bad"] = std::nan("");
  auto msg = message_of([&] { emit_summary(body, "00ff", 1); });
  CHECK(msg.find("$.nested.bad") != std::string::npos);
  CHECK_THROWS_AS(parse_summary("{oops"), IoError);
}

TEST_CASE("output transaction commits atomically and cleans up on abort") {
  auto dir = scratch_dir("tx");
  {
    OutputTransaction tx(dir);
    tx.stage("a.txt", "hello");
    CHECK_FALSE(fs::exists(dir / "a.txt"));
  }
  CHECK(fs::is_empty(dir));
  {
    OutputTransaction tx(dir);
    tx.stage("a.txt", "hello");
    auto files = tx.commit();
    REQUIRE(files.size() == 1);
  }
  CHECK(read_file(dir / "a.txt") == "hello");
  atomic_write(dir / "b.txt", "x");
  CHECK(read_file(dir / "b.txt") == "x");

  // a plain file where a directory is expected
  auto msg = message_of([&] { OutputTransaction tx(dir / "a.txt" / "sub"); });
  CHECK(msg.find("a.txt") != std::string::npos);
  CHECK_THROWS_AS(OutputTransaction(dir / "a.txt" / "sub"), IoError);
  CHECK_THROWS_AS(read_file(dir / "missing.ini"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("collapse experiment writes the outcome histogram") {
  auto dir = scratch_dir("collapse");
  ExperimentOptions opt;
  opt.command = "collapse";
  opt.out_dir = dir;
  auto res = run_experiment(Config::parse(kTwoBranch), opt);
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "timeseries.csv"));
  const auto& outcomes = res.summary["outcomes"];
  REQUIRE(outcomes.size() == 3);
  std::size_t total = 0;
  for (const auto& o : outcomes) {
    CHECK(o.contains("outcome"));
    CHECK(o.contains("count"));
    CHECK(o.contains("frequency"));
    CHECK(o.contains("stderr"));
    total += o["count"].get<std::size_t>();
  }
  CHECK(total == 400);
  CHECK(outcomes[2]["outcome"] == "undecided");
  CHECK(res.summary["seed"] == 7);
  CHECK(read_file(dir / "summary.json") == res.summary_text);
  auto series = parse_csv(read_file(dir / "timeseries.csv"));
  CHECK(series.columns.front() == "t");
  CHECK(series.rows.size() == 21);
  fs::remove_all(dir);
}

TEST_CASE("summaries are byte-identical across thread counts") {
  std::string first;
  for (int threads : {1, 4, 8}) {
    auto dir = scratch_dir("threads" + std::to_string(threads));
    ExperimentOptions opt;
    opt.command = "collapse";
    opt.out_dir = dir;
    opt.threads = threads;
    opt.seed = 11;
    run_experiment(Config::parse(kTwoBranch), opt);
    auto text = read_file(dir / "summary.json");
    if (first.empty()) {
      first = text;
    } else {
      CHECK(text == first);
    }
    fs::remove_all(dir);
  }
}

TEST_CASE("creation --mode ode emits the documented columns") {
  auto dir = scratch_dir("creation");
  auto cfg = Config::parse(R"([lattice]
dim = 1
n = 32
dx = 0.5
dt = 0.01
n_steps = 200
[collapse]
lambda = 0.5
[scenario]
m = 1.0
g = 0.2
g_width = 2.0
[run]
record_every = 20
)");
  ExperimentOptions opt;
  opt.command = "creation";
  opt.mode = "ode";
  opt.out_dir = dir;
  auto res = run_experiment(cfg, opt);
  auto t = parse_csv(read_file(dir / "timeseries.csv"));
  CHECK(t.columns == std::vector<std::string>{"t", "xi_re", "xi_im", "n_mean", "e_density", "ew_density"});
  CHECK(t.rows.size() == 11);
  CHECK(res.summary["max_error_vs_closed_form"].get<double>() < 1e-8);
  CHECK(res.summary["energy_cancellation"].get<double>() < 1e-8);

  opt.format = "json";
  run_experiment(cfg, opt);
  auto j = parse_summary(read_file(dir / "timeseries.json"));
  CHECK(j["columns"].size() == 6);
  fs::remove_all(dir);
}

TEST_CASE("experiment errors map to exit codes and leave no output") {
  auto dir = scratch_dir("errors");
  ExperimentOptions opt;
  opt.out_dir = dir;
  opt.command = "nonsense";
  CHECK_THROWS_AS(run_experiment(Config::parse(kTwoBranch), opt), ConfigError);
  opt.command = "collapse";
  CHECK_THROWS_AS(Config::parse(std::string(kTwoBranch) + "[lattice]\n"), ConfigError);
  auto cfg = Config::parse(std::string(kTwoBranch).replace(std::string(kTwoBranch).find("0.6, 0.8"), 8, "0.6, 0.7"),
                           "amp.ini");
  auto msg = message_of([&] { run_experiment(cfg, opt); });
  CHECK(msg.find("amp.ini:16") == 0);
  CHECK(msg.find("amplitudes") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "summary.json"));

  CHECK(exit_code_for(std::make_exception_ptr(ConfigError("x"))) == 2);
  CHECK(exit_code_for(std::make_exception_ptr(InvariantViolation("x"))) == 3);
  CHECK(exit_code_for(std::make_exception_ptr(IoError("x"))) == 4);
  CHECK(exit_code_for(std::make_exception_ptr(std::runtime_error("x"))) == 1);
  CHECK_THROWS_AS(run_experiment(fs::path(dir / "none.ini"), opt), IoError);
  fs::remove_all(dir);
}
