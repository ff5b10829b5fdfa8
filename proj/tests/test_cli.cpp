#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmflow/barenblatt.hpp"
#include "mmflow/errors.hpp"
#include "mmflow/functionals.hpp"
#include "mmflow/jko.hpp"
#include "mmflow/model_params.hpp"
#include "mmflow/quantile_state.hpp"
#include "mmflow/run_config.hpp"
#include "mmflow/util.hpp"

using namespace mmflow;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "mmflow_cli_tests" / name;
  std::error_code ec;
  fs::remove_all(p, ec);
  fs::create_directories(p);
  return p.string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// message of the ConfigParse raised while parsing, empty if none was thrown
std::string parse_failure(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigParse& e) {
    return e.what();
  }
  return {};
}

bool mentions(const std::string& msg, const std::string& needle) {
  return msg.find(needle) != std::string::npos;
}

// minimal valid run config with a few overridable fields spliced in
std::string small_run_json(double alpha, double lambda, int steps,
                           const std::string& extra = "") {
  std::ostringstream ss;
  ss << "{\"model\":{\"alpha\":" << alpha << ",\"lambda\":" << lambda << "},"
     << "\"discretization\":{\"n_points\":32,\"eulerian_grid\":128},"
     << "\"time\":{\"steps\":" << steps << ",\"tau\":1e-3},"
     << "\"initial\":{\"kind\":\"gaussian\",\"mean\":0.1,\"variance\":0.36}"
     << (extra.empty() ? "" : ",") << extra << "}";
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mmlab");
  std::vector<std::vector<char>> store;
  store.reserve(args.size());
  for (const auto& a : args) {
    store.emplace_back(a.begin(), a.end());
    store.back().push_back('\0');
  }
  std::vector<char*> argv;
  argv.reserve(store.size());
  for (auto& s : store) argv.push_back(s.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("parse: minimal config fills the documented defaults") {
  const RunConfig rc = parse_run_config(
      R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":3,"tau":1e-3}})");
  CHECK(rc.alpha == 0.75);
  CHECK(rc.lambda == 1.0);
  CHECK(rc.dim == 1);
  CHECK(rc.n_points == 200);
  CHECK(rc.eulerian_grid == 512);
  CHECK(rc.schedule == "uniform");
  CHECK(rc.tau == 1e-3);
  CHECK(rc.steps == 3);
  CHECK(rc.initial.kind == "barenblatt");
  CHECK(rc.initial.seed == 1);
  CHECK(rc.functional == FunctionalKind::fourth_order);
  CHECK(rc.inner_grad_tol == 1e-8);
  CHECK(rc.inner_max_iter == 500);
  CHECK(rc.output_directory.empty());
  CHECK(rc.snapshot_every == 0);
}

TEST_CASE("parse: rejections are typed and name the offending key") {
  const std::string head =
      R"("model":{"alpha":0.75,"lambda":1.0},"time":{"steps":3,"tau":1e-3})";

  CHECK(mentions(parse_failure("{" + head + R"(,"gamma":2})"), "gamma"));
  CHECK(mentions(parse_failure(
            R"({"model":{"alpha":"x","lambda":1.0},"time":{"steps":3,"tau":1e-3}})"),
        "model.alpha"));
  CHECK(mentions(parse_failure(R"({"time":{"steps":3,"tau":1e-3}})"), "model"));
  CHECK(mentions(parse_failure("not json at all"), "invalid json"));

  // schedule cross-talk between the uniform and geometric parameter sets
  CHECK(mentions(parse_failure(
            R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":3,"tau":1e-3,"tau0":1e-3}})"),
        "tau0"));
  CHECK(mentions(parse_failure(
            R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"schedule":"geometric","steps":3,"tau":1e-3,"tau0":1e-3,"ratio":1.1}})"),
        "tau"));
  CHECK(mentions(parse_failure(
            R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"schedule":"adaptive","steps":3,"tau":1e-3}})"),
        "schedule"));
  CHECK(mentions(parse_failure(
            R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":0,"tau":1e-3}})"),
        "steps"));
  CHECK(mentions(parse_failure(
            R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":3,"tau":0.0}})"),
        "tau"));

  // initial state validation
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"initial":{"kind":"delta"}})"),
        "delta"));
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"initial":{"kind":"gaussian","variance":0.0}})"),
        "variance"));
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"initial":{"kind":"uniform","a":1.0,"b":1.0}})"),
        "b > a"));
  CHECK(mentions(
      parse_failure("{" + head +
                    R"(,"initial":{"kind":"double_bump","centers":[-1,1],"widths":[0.3],"weights":[0.5,0.5]}})"),
      "equal length"));
  CHECK(mentions(
      parse_failure("{" + head +
                    R"(,"initial":{"kind":"double_bump","centers":[-1,1],"widths":[0.3,0.3],"weights":[0.5,0.0]}})"),
      "weights"));
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"initial":{"kind":"gaussian","amplitude":0.1}})"),
        "amplitude"));

  // remaining scalar gates
  CHECK(mentions(parse_failure("{" + head + R"(,"functional":"sixth_order"})"),
        "functional"));
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"discretization":{"n_points":4}})"),
        "n_points"));
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"discretization":{"eulerian_grid":16}})"),
        "eulerian_grid"));
  CHECK(mentions(parse_failure("{" + head + R"(,"inner":{"grad_tol":0.0}})"),
        "grad_tol"));
  CHECK(mentions(parse_failure("{" + head + R"(,"inner":{"max_iter":0}})"),
        "max_iter"));
  CHECK(mentions(parse_failure("{" + head +
                               R"(,"output":{"snapshot_every":-1}})"),
        "snapshot_every"));
}

TEST_CASE("parse: exponent range is enforced at execution, not parse") {
  const RunConfig rc = parse_run_config(
      R"({"model":{"alpha":1.2,"lambda":1.0},"time":{"steps":1,"tau":1e-3}})");
  CHECK(rc.alpha == 1.2);
  CHECK_THROWS_AS((void)execute_run(rc), OutOfRange);
}

TEST_CASE("resolved config json reparses to the same resolved form") {
  const RunConfig a = parse_run_config(
      R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":3,"tau":1e-3}})");
  const std::string ra = resolved_config_json(a);
  CHECK(resolved_config_json(parse_run_config(ra)) == ra);

  const RunConfig b = parse_run_config(R"({
    "model": {"alpha": 0.6, "lambda": 2.0, "dim": 1},
    "discretization": {"n_points": 48, "eulerian_grid": 256},
    "time": {"schedule": "geometric", "steps": 5, "tau0": 2e-3, "ratio": 1.2},
    "initial": {"kind": "double_bump", "centers": [-1.0, 1.5],
                "widths": [0.3, 0.4], "weights": [0.7, 0.3], "seed": 11},
    "functional": "second_order",
    "inner": {"grad_tol": 1e-9, "max_iter": 900},
    "output": {"directory": "somewhere", "snapshot_every": 2}
  })");
  const std::string rb = resolved_config_json(b);
  CHECK(resolved_config_json(parse_run_config(rb)) == rb);
  CHECK(mentions(rb, "\"geometric\""));
  CHECK(mentions(rb, "\"second_order\""));
}

TEST_CASE("make_initial: uniform and gaussian grids sit at the midpoint masses") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const int n = 40;

  InitialSpec uni;
  uni.kind = "uniform";
  uni.a = -2.0;
  uni.b = 3.0;
  const QuantileDensity ustate =
      make_initial(uni, n, p, FunctionalKind::fourth_order);
  REQUIRE(ustate.n() == n);
  for (int i = 0; i < n; ++i) {
    const double expected = uni.a + (uni.b - uni.a) * (i + 0.5) / n;
    CHECK(ustate[i] == doctest::Approx(expected).epsilon(1e-14));
  }

  InitialSpec gau;
  gau.kind = "gaussian";
  gau.mean = 0.3;
  gau.variance = 0.49;
  const QuantileDensity gstate =
      make_initial(gau, n, p, FunctionalKind::fourth_order);
  for (int i = 0; i < n; ++i) {
    const double expected = 0.3 + 0.7 * normal_quantile((i + 0.5) / n);
    CHECK(gstate[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("make_initial: double bump inverts its mixture cdf") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const int n = 64;
  InitialSpec spec;
  spec.kind = "double_bump";
  spec.centers = {-1.0, 1.0};
  spec.widths = {0.3, 0.4};
  spec.weights = {0.7, 0.3};
  const QuantileDensity st =
      make_initial(spec, n, p, FunctionalKind::fourth_order);
  REQUIRE(st.n() == n);

  for (int i = 0; i < n; ++i) {
    const double cdf = 0.7 * normal_cdf((st[i] + 1.0) / 0.3) +
                       0.3 * normal_cdf((st[i] - 1.0) / 0.4);
    CHECK(cdf == doctest::Approx((i + 0.5) / n).epsilon(1e-8));
  }

  // the widest particle gap sits in the low-density trough between the bumps
  int widest = 0;
  for (int i = 0; i + 1 < n; ++i) {
    if (st[i + 1] - st[i] > st[widest + 1] - st[widest]) widest = i;
  }
  const double trough = 0.5 * (st[widest] + st[widest + 1]);
  CHECK(trough > -0.8);
  CHECK(trough < 0.8);
  CHECK(st[0] < -1.0);
  CHECK(st[n - 1] > 1.0);
  CHECK(std::isfinite(log_entropy(st)));
}

TEST_CASE("make_initial: perturbed profile is seeded, centered, and ordered") {
  const ModelParameters p = derive_params(0.75, 1.0, 1);
  const int n = 48;
  InitialSpec spec;
  spec.kind = "perturbed_barenblatt";
  spec.amplitude = 0.4;
  spec.seed = 7;

  const QuantileDensity a = make_initial(spec, n, p, FunctionalKind::fourth_order);
  const QuantileDensity b = make_initial(spec, n, p, FunctionalKind::fourth_order);
  REQUIRE(a.n() == n);
  for (int i = 0; i < n; ++i) CHECK(a[i] == b[i]);

  spec.seed = 8;
  const QuantileDensity c = make_initial(spec, n, p, FunctionalKind::fourth_order);
  bool differs = false;
  for (int i = 0; i < n; ++i) differs = differs || (a[i] != c[i]);
  CHECK(differs);

  spec.seed = 7;
  spec.amplitude = 0.0;
  const QuantileDensity flat =
      make_initial(spec, n, p, FunctionalKind::fourth_order);
  const QuantileDensity base = to_quantile(stationary_profile(p), n);
  for (int i = 0; i < n; ++i) {
    CHECK(flat[i] == doctest::Approx(base[i]).epsilon(1e-10));
  }

  // the noise acts on the gaps and the recentering restores the mean
  spec.amplitude = 0.4;
  double ma = 0.0, mb = 0.0;
  for (int i = 0; i < n; ++i) {
    ma += a[i] / n;
    mb += base[i] / n;
  }
  CHECK(ma == doctest::Approx(mb).epsilon(1e-10));
}

TEST_CASE("make_initial: profile seeding without confinement and the gates") {
  const ModelParameters free = derive_params(0.75, 0.0, 1);
  InitialSpec spec;
  spec.kind = "barenblatt";
  const QuantileDensity st = make_initial(spec, 40, free,
                                          FunctionalKind::fourth_order);
  // unit-scale self-similar profile: even in x, so quantiles are odd in mass
  for (int i = 0; i < 40; ++i) {
    CHECK(st[i] == doctest::Approx(-st[39 - i]).epsilon(1e-7).scale(1.0));
  }

  InitialSpec bad;
  bad.kind = "bogus";
  CHECK_THROWS_AS(
      (void)make_initial(bad, 40, free, FunctionalKind::fourth_order),
      UnknownKind);
  CHECK_THROWS_AS(
      (void)make_initial(spec, 4, free, FunctionalKind::fourth_order),
      OutOfRange);
  InitialSpec flip;
  flip.kind = "uniform";
  flip.a = 1.0;
  flip.b = -1.0;
  CHECK_THROWS_AS(
      (void)make_initial(flip, 40, free, FunctionalKind::fourth_order),
      OutOfRange);
}

TEST_CASE("make_partition dispatches on the schedule name") {
  RunConfig rc = parse_run_config(
      R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":3,"tau":1e-3}})");
  const Partition u = make_partition(rc);
  CHECK(u.steps() == 3);
  CHECK(u.tau[0] == 1e-3);
  CHECK(u.tau[2] == 1e-3);

  rc = parse_run_config(
      R"({"model":{"alpha":0.75,"lambda":1.0},"time":{"schedule":"geometric","steps":3,"tau0":1e-3,"ratio":2.0}})");
  const Partition g = make_partition(rc);
  CHECK(g.tau[0] == doctest::Approx(1e-3).epsilon(1e-14));
  CHECK(g.tau[2] == doctest::Approx(4e-3).epsilon(1e-14));

  rc.schedule = "bogus";
  CHECK_THROWS_AS((void)make_partition(rc), ConfigParse);
}

TEST_CASE("execute_run: confined smoke run is coherent and deterministic") {
  const RunConfig rc = parse_run_config(small_run_json(0.75, 1.0, 3));
  const RunResult res = execute_run(rc);

  CHECK(res.params.alpha == 0.75);
  REQUIRE(res.traj.states.size() == 4);
  CHECK(res.refs.available);
  REQUIRE(res.l1_series.size() == 4);
  for (double v : res.l1_series) CHECK(v >= 0.0);
  CHECK(res.l1_series.back() <= res.l1_series.front() + 1e-12);
  CHECK(res.ledger.rows.size() == 4);
  CHECK(res.ledger_ok);

  const nlohmann::json j = nlohmann::json::parse(res.summary_json);
  CHECK(j.contains("fitted_H_rate"));
  CHECK(j.contains("ledger"));
  CHECK(j["ledger"].contains("eq84_max_residual"));
  CHECK(j["alpha"] == 0.75);
  CHECK(j["steps"] == 3);
  // three steps cannot feed a ten-sample decay fit
  CHECK(j["fitted_H_rate"].is_null());

  const RunResult rerun = execute_run(rc);
  CHECK(rerun.summary_json == res.summary_json);
  CHECK(ledger_csv(rerun.ledger) == ledger_csv(res.ledger));
}

TEST_CASE("write_run_artifacts: snapshots, formats, and byte-stable ledgers") {
  const std::string dir = fresh_dir("artifacts");
  RunConfig rc = parse_run_config(small_run_json(0.75, 1.0, 5));
  rc.output_directory = dir;
  rc.snapshot_every = 2;

  const RunResult res = execute_run(rc);
  write_run_artifacts(res);

  for (const char* name :
       {"ledger.csv", "summary.json", "resolved_config.json",
        "state_000000.csv", "state_000002.csv", "state_000004.csv",
        "state_000005.csv"}) {
    CHECK(fs::exists(fs::path(dir) / name));
  }
  CHECK(!fs::exists(fs::path(dir) / "state_000001.csv"));
  CHECK(!fs::exists(fs::path(dir) / "asymptotics.csv"));

  const std::string ledger = read_file(dir + "/ledger.csv");
  CHECK(ledger.rfind(ledger_csv_header(), 0) == 0);
  const std::string state0 = read_file(dir + "/state_000000.csv");
  CHECK(state0.rfind("m,x\n", 0) == 0);
  // header plus one row per particle, newline-terminated
  CHECK(std::count(state0.begin(), state0.end(), '\n') == 33);

  const std::string dir2 = fresh_dir("artifacts_rerun");
  rc.output_directory = dir2;
  write_run_artifacts(execute_run(rc));
  CHECK(read_file(dir2 + "/ledger.csv") == ledger);
}

TEST_CASE("write_run_artifacts: free fourth-order runs emit the asymptotics table") {
  const std::string dir = fresh_dir("asymptotics");
  RunConfig rc = parse_run_config(
      R"({"model":{"alpha":0.75,"lambda":0.0},
          "discretization":{"n_points":32,"eulerian_grid":128},
          "time":{"steps":4,"tau":2e-3},
          "initial":{"kind":"barenblatt"}})");
  rc.output_directory = dir;
  const RunResult res = execute_run(rc);
  CHECK(!res.refs.available);
  write_run_artifacts(res);
  REQUIRE(fs::exists(fs::path(dir) / "asymptotics.csv"));
  const std::string table = read_file(dir + "/asymptotics.csv");
  CHECK(table.rfind("t,R,l1_gap,scaled_gap\n", 0) == 0);

  const std::string dir2 = fresh_dir("asymptotics_w12");
  RunConfig rc2 = parse_run_config(
      R"({"model":{"alpha":1.0,"lambda":0.0},
          "discretization":{"n_points":32,"eulerian_grid":128},
          "time":{"steps":3,"tau":2e-3},
          "initial":{"kind":"barenblatt"}})");
  rc2.output_directory = dir2;
  write_run_artifacts(execute_run(rc2));
  const std::string table2 = read_file(dir2 + "/asymptotics.csv");
  CHECK(table2.rfind("t,R,l1_gap,scaled_gap,w12_gap,scaled_w12_gap\n", 0) == 0);
}

TEST_CASE("csv writers freeze their headers") {
  CHECK(state_csv(QuantileDensity(std::vector<double>{
            0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}))
            .rfind("m,x\n", 0) == 0);
  CHECK(asymptotics_csv({}, false) == "t,R,l1_gap,scaled_gap\n");
  CHECK(asymptotics_csv({}, true) ==
        "t,R,l1_gap,scaled_gap,w12_gap,scaled_w12_gap\n");
  CHECK(correspondence_csv(CorrespondenceReport{}) == "n,t,s,S,W2_deviation\n");
}

TEST_CASE("sweep parsing: grid order, overrides, labels, and directories") {
  const std::string text = R"({
    "output_directory": "sweepdir",
    "base": {"model":{"alpha":0.75,"lambda":1.0},
             "time":{"steps":2,"tau":1e-3}},
    "grid": {"alpha": [0.6, 0.9], "tau": [1e-3, 2e-3]}
  })";
  const std::vector<SweepCell> cells = parse_sweep_config(text);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].label == "cell_0000");
  CHECK(cells[3].label == "cell_0003");
  // alpha varies on the outer loop, tau on the inner
  CHECK(cells[0].config.alpha == 0.6);
  CHECK(cells[1].config.alpha == 0.6);
  CHECK(cells[2].config.alpha == 0.9);
  CHECK(cells[0].config.tau == 1e-3);
  CHECK(cells[1].config.tau == 2e-3);
  // a tau override also retargets the geometric schedule's first step
  CHECK(cells[1].config.tau0 == 2e-3);
  CHECK(cells[0].config.lambda == 1.0);
  CHECK(cells[2].config.output_directory == "sweepdir/cell_0002");

  const std::vector<SweepCell> runs = parse_sweep_config(R"({
    "runs": [
      {"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":2,"tau":1e-3}},
      {"model":{"alpha":0.6,"lambda":1.0},"time":{"steps":2,"tau":1e-3}}
    ]
  })");
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].label == "run_0000");
  CHECK(runs[1].label == "run_0001");
  CHECK(runs[1].config.alpha == 0.6);

  // base with no grid keys still yields the single base cell
  const std::vector<SweepCell> solo = parse_sweep_config(R"({
    "base": {"model":{"alpha":0.75,"lambda":1.0},
             "time":{"steps":2,"tau":1e-3}}
  })");
  REQUIRE(solo.size() == 1);
  CHECK(solo[0].config.alpha == 0.75);

  CHECK_THROWS_AS((void)parse_sweep_config(R"({
    "runs": [{"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":2,"tau":1e-3}}],
    "base": {"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":2,"tau":1e-3}}
  })"), ConfigParse);
  CHECK_THROWS_AS((void)parse_sweep_config(R"({"output_directory":"x"})"),
                  ConfigParse);
  CHECK_THROWS_AS((void)parse_sweep_config(R"({
    "base": {"model":{"alpha":0.75,"lambda":1.0},"time":{"steps":2,"tau":1e-3}},
    "grid": {"beta": [1, 2]}
  })"), ConfigParse);
  CHECK_THROWS_AS((void)parse_sweep_config(R"([1,2,3])"), ConfigParse);
}

TEST_CASE("run_sweep executes cells in parallel and reports them") {
  const std::string dir = fresh_dir("sweep_run");
  const std::string text = std::string(R"({
    "output_directory": ")") + dir + R"(",
    "base": )" + small_run_json(0.75, 1.0, 12) + R"(,
    "grid": {"alpha": [0.6, 0.75]}
  })";
  const std::vector<SweepCell> cells = parse_sweep_config(text);
  REQUIRE(cells.size() == 2);
  const std::vector<SweepOutcome> outcomes = run_sweep(cells, 2);
  REQUIRE(outcomes.size() == 2);
  for (const auto& o : outcomes) {
    CHECK(o.status == "ok");
    CHECK(o.ledger_pass);
    CHECK(o.eq84_max_residual >= 0.0);
    CHECK(o.eq84_max_residual <= 1e-5);
  }
  CHECK(fs::exists(fs::path(dir) / "cell_0000" / "ledger.csv"));
  CHECK(fs::exists(fs::path(dir) / "cell_0001" / "summary.json"));

  const std::string report = sweep_report_csv(outcomes);
  CHECK(report.rfind(
            "label,alpha,lambda,tau,n_points,grad_tol,functional,status,"
            "fitted_H_rate,fitted_F_rate,fitted_l1_rate,eq84_max_residual,"
            "ledger_pass\n",
            0) == 0);
  CHECK(mentions(report, "\ncell_0000,0.6,"));
  CHECK(mentions(report, "\ncell_0001,0.75,"));
  CHECK(mentions(report, ",ok,"));
}

TEST_CASE("run_sweep: tighter inner tolerance tightens the step identity") {
  const std::string text = std::string(R"({
    "base": )") + small_run_json(0.75, 1.0, 3) + R"(,
    "grid": {"grad_tol": [1e-6, 1e-10]}
  })";
  const std::vector<SweepCell> cells = parse_sweep_config(text);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].config.inner_grad_tol == 1e-6);
  CHECK(cells[1].config.inner_grad_tol == 1e-10);
  const std::vector<SweepOutcome> outcomes = run_sweep(cells, 1);
  CHECK(outcomes[0].status == "ok");
  CHECK(outcomes[1].status == "ok");
  CHECK(outcomes[1].eq84_max_residual <= outcomes[0].eq84_max_residual);
}

TEST_CASE("cli: parse failures and unknown subcommands exit with 2") {
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"frobnicate"}) == 2);
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({"run"}) == 2);  // missing required config path
}

TEST_CASE("cli: profile prints constants and can dump samples") {
  CHECK(run_cli({"profile", "1.0", "1.0", "1"}) == 0);
  CHECK(run_cli({"profile", "1.2", "1.0", "1"}) == 2);   // exponent range
  CHECK(run_cli({"profile", "0.75", "0.0", "1"}) == 2);  // no stationary state

  const std::string dir = fresh_dir("profile_dump");
  const std::string dump = dir + "/profile.csv";
  CHECK(run_cli({"profile", "0.75", "1.0", "1", "--dump", dump}) == 0);
  REQUIRE(fs::exists(dump));
  const std::string csv = read_file(dump);
  CHECK(csv.rfind("x,b\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1002);
}

TEST_CASE("cli: run executes a config file and writes its artifacts") {
  const std::string dir = fresh_dir("cli_run");
  const std::string cfg = dir + "/run.json";
  const std::string out = dir + "/out";
  write_file(cfg, small_run_json(
                      0.75, 1.0, 3,
                      "\"output\":{\"directory\":\"" + out + "\"}"));

  CHECK(run_cli({"run", dir + "/missing.json"}) == 2);
  write_file(dir + "/broken.json", "{oops");
  CHECK(run_cli({"run", dir + "/broken.json"}) == 2);

  CHECK(run_cli({"run", cfg}) == 0);
  for (const char* name : {"ledger.csv", "summary.json",
                           "resolved_config.json", "state_000000.csv",
                           "state_000003.csv"}) {
    CHECK(fs::exists(fs::path(out) / name));
  }
}

TEST_CASE("cli: validate-findim runs the finite-dimensional checks") {
  const std::string dir = fresh_dir("cli_findim");
  const std::string cfg = dir + "/findim.json";
  const std::string rep = dir + "/report.json";
  write_file(cfg, R"({"kappa":1.0,"theta":2.0,"horizon":1.0,"dt":1e-3,
                      "output":")" + rep + "\"}");
  CHECK(run_cli({"validate-findim", cfg}) == 0);
  REQUIRE(fs::exists(rep));
  const nlohmann::json j = nlohmann::json::parse(read_file(rep));
  CHECK(j["rate_V_predicted"] == 8.0);
  CHECK(j["rate_V"].is_number());
  CHECK(j["interchange_residual"].is_number());

  write_file(dir + "/bad_eps.json",
             R"({"kappa":1.0,"theta":2.0,"family":"quadratic","eps":0.1})");
  CHECK(run_cli({"validate-findim", dir + "/bad_eps.json"}) == 2);
  write_file(dir + "/bad_m.json", R"({"kappa":1.0,"theta":2.0,"u0":[1,2],"m":3})");
  CHECK(run_cli({"validate-findim", dir + "/bad_m.json"}) == 2);
}

TEST_CASE("cli: rescale-check accepts the confined fourth-order flow only") {
  const std::string dir = fresh_dir("cli_rescale");
  const std::string cfg = dir + "/rescale.json";
  write_file(cfg, small_run_json(
                      1.0, 1.0, 5,
                      "\"inner\":{\"grad_tol\":1e-10,\"max_iter\":4000},"
                      "\"output\":{\"directory\":\"" + dir + "/out\"}"));
  CHECK(run_cli({"rescale-check", cfg}) == 0);
  REQUIRE(fs::exists(fs::path(dir) / "out" / "rescale_report.csv"));
  const std::string report = read_file(dir + "/out/rescale_report.csv");
  CHECK(report.rfind("n,t,s,S,W2_deviation\n", 0) == 0);
  CHECK(std::count(report.begin(), report.end(), '\n') == 7);

  write_file(dir + "/wrong_lambda.json", small_run_json(1.0, 0.5, 2));
  CHECK(run_cli({"rescale-check", dir + "/wrong_lambda.json"}) == 2);
  write_file(dir + "/wrong_kind.json",
             small_run_json(0.75, 1.0, 2, "\"functional\":\"second_order\""));
  CHECK(run_cli({"rescale-check", dir + "/wrong_kind.json"}) == 2);
}

TEST_CASE("cli: sweep writes the aggregate report") {
  const std::string dir = fresh_dir("cli_sweep");
  const std::string cfg = dir + "/sweep.json";
  write_file(cfg, std::string(R"({
    "output_directory": ")") + dir + R"(/out",
    "base": )" + small_run_json(0.75, 1.0, 2) + R"(,
    "grid": {"alpha": [0.6, 0.75]}
  })");
  CHECK(run_cli({"sweep", cfg, "--threads", "2"}) == 0);
  REQUIRE(fs::exists(fs::path(dir) / "out" / "sweep_report.csv"));
  const std::string report = read_file(dir + "/out/sweep_report.csv");
  CHECK(mentions(report, "cell_0000"));
  CHECK(mentions(report, "cell_0001"));
  CHECK(fs::exists(fs::path(dir) / "out" / "cell_0000" / "ledger.csv"));
}

}  // TEST_SUITE("cli")
