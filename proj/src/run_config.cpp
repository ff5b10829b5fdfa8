#include "mmflow/run_config.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmflow/barenblatt.hpp"
#include "mmflow/errors.hpp"
#include "mmflow/functionals.hpp"
#include "mmflow/reference_flows.hpp"
#include "mmflow/util.hpp"

namespace mmflow {
namespace {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------- json utils

void check_keys(const ojson& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigParse(where + ": unknown key \"" + it.key() + "\"");
    }
  }
}

const ojson& member(const ojson& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigParse(where + ": missing required key \"" + key + "\"");
  return *it;
}

double as_num(const ojson& v, const std::string& ctx) {
  if (!v.is_number()) throw ConfigParse(ctx + " must be a number");
  return v.get<double>();
}

int as_int(const ojson& v, const std::string& ctx) {
  if (!v.is_number_integer()) throw ConfigParse(ctx + " must be an integer");
  return static_cast<int>(v.get<long long>());
}

std::uint64_t as_u64(const ojson& v, const std::string& ctx) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) {
    return static_cast<std::uint64_t>(v.get<long long>());
  }
  throw ConfigParse(ctx + " must be a nonnegative integer");
}

std::string as_str(const ojson& v, const std::string& ctx) {
  if (!v.is_string()) throw ConfigParse(ctx + " must be a string");
  return v.get<std::string>();
}

std::vector<double> as_num_array(const ojson& v, const std::string& ctx) {
  if (!v.is_array() || v.empty()) {
    throw ConfigParse(ctx + " must be a nonempty array of numbers");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(as_num(e, ctx + " entry"));
  return out;
}

ojson parse_json_text(const std::string& text) {
  try {
    return ojson::parse(text);
  } catch (const std::exception& e) {
    throw ConfigParse(std::string("invalid json: ") + e.what());
  }
}

ojson num_or_null(double v) {
  if (std::isfinite(v)) return ojson(v);
  return ojson(nullptr);
}

// ----------------------------------------------------------------- file io

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Io("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Io("cannot open " + path + " for writing");
  out << content;
  out.flush();
  if (!out) throw Io("failed writing " + path);
}

// ------------------------------------------------------------- config parse

RunConfig parse_run_config_obj(const ojson& root) {
  if (!root.is_object()) throw ConfigParse("run config must be a json object");
  check_keys(root, "run config",
             {"model", "discretization", "time", "initial", "functional",
              "inner", "output"});
  RunConfig rc;

  const ojson& model = member(root, "model", "run config");
  if (!model.is_object()) throw ConfigParse("model must be an object");
  check_keys(model, "model", {"alpha", "lambda", "dim"});
  rc.alpha = as_num(member(model, "alpha", "model"), "model.alpha");
  rc.lambda = as_num(member(model, "lambda", "model"), "model.lambda");
  if (auto it = model.find("dim"); it != model.end()) {
    rc.dim = as_int(*it, "model.dim");
  }

  if (auto it = root.find("discretization"); it != root.end()) {
    if (!it->is_object()) throw ConfigParse("discretization must be an object");
    check_keys(*it, "discretization", {"n_points", "eulerian_grid"});
    if (auto jt = it->find("n_points"); jt != it->end()) {
      rc.n_points = as_int(*jt, "discretization.n_points");
    }
    if (auto jt = it->find("eulerian_grid"); jt != it->end()) {
      rc.eulerian_grid = as_int(*jt, "discretization.eulerian_grid");
    }
  }
  if (rc.n_points < kMinParticles) {
    throw ConfigParse("discretization.n_points must be >= 8");
  }
  if (rc.eulerian_grid < 32) {
    throw ConfigParse("discretization.eulerian_grid must be >= 32");
  }

  const ojson& time = member(root, "time", "run config");
  if (!time.is_object()) throw ConfigParse("time must be an object");
  check_keys(time, "time", {"schedule", "steps", "tau", "tau0", "ratio"});
  if (auto it = time.find("schedule"); it != time.end()) {
    rc.schedule = as_str(*it, "time.schedule");
  }
  rc.steps = as_int(member(time, "steps", "time"), "time.steps");
  if (rc.steps < 1) throw ConfigParse("time.steps must be >= 1");
  if (rc.schedule == "uniform") {
    if (time.contains("tau0") || time.contains("ratio")) {
      throw ConfigParse("time.tau0/ratio are only valid with the geometric schedule");
    }
    rc.tau = as_num(member(time, "tau", "time"), "time.tau");
    if (!(rc.tau > 0.0)) throw ConfigParse("time.tau must be > 0");
  } else if (rc.schedule == "geometric") {
    if (time.contains("tau")) {
      throw ConfigParse("time.tau is only valid with the uniform schedule");
    }
    rc.tau0 = as_num(member(time, "tau0", "time"), "time.tau0");
    rc.ratio = as_num(member(time, "ratio", "time"), "time.ratio");
    if (!(rc.tau0 > 0.0)) throw ConfigParse("time.tau0 must be > 0");
    if (!(rc.ratio > 0.0)) throw ConfigParse("time.ratio must be > 0");
  } else {
    throw ConfigParse("time.schedule must be \"uniform\" or \"geometric\"");
  }

  if (auto it = root.find("initial"); it != root.end()) {
    if (!it->is_object()) throw ConfigParse("initial must be an object");
    const ojson& ini = *it;
    if (auto jt = ini.find("kind"); jt != ini.end()) {
      rc.initial.kind = as_str(*jt, "initial.kind");
    }
    const std::string& kind = rc.initial.kind;
    if (kind == "barenblatt") {
      check_keys(ini, "initial", {"kind", "seed"});
    } else if (kind == "gaussian") {
      check_keys(ini, "initial", {"kind", "seed", "mean", "variance"});
      if (auto jt = ini.find("mean"); jt != ini.end()) {
        rc.initial.mean = as_num(*jt, "initial.mean");
      }
      if (auto jt = ini.find("variance"); jt != ini.end()) {
        rc.initial.variance = as_num(*jt, "initial.variance");
      }
      if (!(rc.initial.variance > 0.0)) {
        throw ConfigParse("initial.variance must be > 0");
      }
    } else if (kind == "uniform") {
      check_keys(ini, "initial", {"kind", "seed", "a", "b"});
      if (auto jt = ini.find("a"); jt != ini.end()) {
        rc.initial.a = as_num(*jt, "initial.a");
      }
      if (auto jt = ini.find("b"); jt != ini.end()) {
        rc.initial.b = as_num(*jt, "initial.b");
      }
      if (!(rc.initial.b > rc.initial.a)) {
        throw ConfigParse("initial needs b > a");
      }
    } else if (kind == "double_bump") {
      check_keys(ini, "initial", {"kind", "seed", "centers", "widths", "weights"});
      if (auto jt = ini.find("centers"); jt != ini.end()) {
        rc.initial.centers = as_num_array(*jt, "initial.centers");
      }
      if (auto jt = ini.find("widths"); jt != ini.end()) {
        rc.initial.widths = as_num_array(*jt, "initial.widths");
      }
      if (auto jt = ini.find("weights"); jt != ini.end()) {
        rc.initial.weights = as_num_array(*jt, "initial.weights");
      }
      const std::size_t k = rc.initial.centers.size();
      if (rc.initial.widths.size() != k || rc.initial.weights.size() != k) {
        throw ConfigParse("initial centers/widths/weights must have equal length");
      }
      for (double w : rc.initial.widths) {
        if (!(w > 0.0)) throw ConfigParse("initial.widths must be > 0");
      }
      for (double w : rc.initial.weights) {
        if (!(w > 0.0)) throw ConfigParse("initial.weights must be > 0");
      }
    } else if (kind == "perturbed_barenblatt") {
      check_keys(ini, "initial", {"kind", "seed", "amplitude"});
      if (auto jt = ini.find("amplitude"); jt != ini.end()) {
        rc.initial.amplitude = as_num(*jt, "initial.amplitude");
      }
    } else {
      throw ConfigParse("initial.kind \"" + kind +
                        "\" is not one of barenblatt, gaussian, uniform, "
                        "double_bump, perturbed_barenblatt");
    }
    if (auto jt = ini.find("seed"); jt != ini.end()) {
      rc.initial.seed = as_u64(*jt, "initial.seed");
    }
  }

  if (auto it = root.find("functional"); it != root.end()) {
    const std::string f = as_str(*it, "functional");
    if (f == "fourth_order") {
      rc.functional = FunctionalKind::fourth_order;
    } else if (f == "second_order") {
      rc.functional = FunctionalKind::second_order;
    } else {
      throw ConfigParse("functional must be \"fourth_order\" or \"second_order\"");
    }
  }

  if (auto it = root.find("inner"); it != root.end()) {
    if (!it->is_object()) throw ConfigParse("inner must be an object");
    check_keys(*it, "inner", {"grad_tol", "max_iter"});
    if (auto jt = it->find("grad_tol"); jt != it->end()) {
      rc.inner_grad_tol = as_num(*jt, "inner.grad_tol");
    }
    if (auto jt = it->find("max_iter"); jt != it->end()) {
      rc.inner_max_iter = as_int(*jt, "inner.max_iter");
    }
    if (!(rc.inner_grad_tol > 0.0)) {
      throw ConfigParse("inner.grad_tol must be > 0");
    }
    if (rc.inner_max_iter < 1) throw ConfigParse("inner.max_iter must be >= 1");
  }

  if (auto it = root.find("output"); it != root.end()) {
    if (!it->is_object()) throw ConfigParse("output must be an object");
    check_keys(*it, "output", {"directory", "snapshot_every"});
    if (auto jt = it->find("directory"); jt != it->end()) {
      rc.output_directory = as_str(*jt, "output.directory");
    }
    if (auto jt = it->find("snapshot_every"); jt != it->end()) {
      rc.snapshot_every = as_int(*jt, "output.snapshot_every");
    }
    if (rc.snapshot_every < 0) {
      throw ConfigParse("output.snapshot_every must be >= 0");
    }
  }

  return rc;
}

std::string functional_name(FunctionalKind kind) {
  return kind == FunctionalKind::fourth_order ? "fourth_order" : "second_order";
}

// ------------------------------------------------------------ initial states

double mixture_quantile(double m, const std::vector<double>& c,
                        const std::vector<double>& s,
                        const std::vector<double>& w) {
  double lo = c[0] - 14.0 * s[0];
  double hi = c[0] + 14.0 * s[0];
  for (std::size_t j = 1; j < c.size(); ++j) {
    lo = std::min(lo, c[j] - 14.0 * s[j]);
    hi = std::max(hi, c[j] + 14.0 * s[j]);
  }
  auto cdf = [&](double x) {
    double v = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      v += w[j] * normal_cdf((x - c[j]) / s[j]);
    }
    return v;
  };
  auto pdf = [&](double x) {
    double v = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double z = (x - c[j]) / s[j];
      v += w[j] * std::exp(-0.5 * z * z) / (s[j] * std::sqrt(2.0 * kPi));
    }
    return v;
  };
  double a = lo, b = hi;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (a + b);
    if (cdf(mid) < m) {
      a = mid;
    } else {
      b = mid;
    }
  }
  double x = 0.5 * (a + b);
  for (int i = 0; i < 4; ++i) {
    const double p = pdf(x);
    if (!(p > 0.0)) break;
    const double step = (cdf(x) - m) / p;
    if (!std::isfinite(step)) break;
    x = std::clamp(x - step, lo, hi);
  }
  return x;
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// ----------------------------------------------------------------- summaries

std::optional<DecayFit> try_fit(const std::vector<double>& t,
                                const std::vector<double>& v,
                                double floor_value) {
  try {
    return fit_decay_rate(t, v, floor_value);
  } catch (const Error&) {
    return std::nullopt;
  }
}

ojson fit_json(const std::optional<DecayFit>& fit) {
  if (!fit) return ojson(nullptr);
  ojson j;
  j["rate"] = fit->rate;
  j["prefactor"] = fit->prefactor;
  j["t_lo"] = fit->t_lo;
  j["t_hi"] = fit->t_hi;
  j["n_used"] = fit->n_used;
  return j;
}

std::string build_summary(const RunResult& res) {
  const RunConfig& rc = res.config;
  const ModelParameters& p = res.params;
  const LedgerChecks& checks = res.ledger.checks;
  const std::vector<LedgerRow>& rows = res.ledger.rows;
  const bool fourth = rc.functional == FunctionalKind::fourth_order;

  ojson j;
  j["alpha"] = rc.alpha;
  j["lambda"] = rc.lambda;
  j["dim"] = rc.dim;
  j["functional"] = functional_name(rc.functional);
  j["n_points"] = rc.n_points;
  j["steps"] = res.traj.part.steps();
  j["horizon"] = res.traj.part.horizon();

  const double rate_h = fourth ? 2.0 * p.lambda : 2.0 * p.capital_lambda;
  const double rate_l1 = fourth ? p.lambda : p.capital_lambda;
  j["fitted_H_rate"] = res.fit_h ? ojson(res.fit_h->rate) : ojson(nullptr);
  j["predicted_H_rate"] = rate_h > 0.0 ? ojson(rate_h) : ojson(nullptr);
  j["fitted_F_rate"] = res.fit_f ? ojson(res.fit_f->rate) : ojson(nullptr);
  j["predicted_F_rate"] =
      fourth && p.lambda > 0.0 ? ojson(2.0 * p.lambda) : ojson(nullptr);
  j["fitted_l1_rate"] = res.fit_l1 ? ojson(res.fit_l1->rate) : ojson(nullptr);
  j["predicted_l1_rate"] = rate_l1 > 0.0 ? ojson(rate_l1) : ojson(nullptr);
  ojson windows;
  windows["H"] = fit_json(res.fit_h);
  windows["F"] = fit_json(res.fit_f);
  windows["l1"] = fit_json(res.fit_l1);
  j["fit_windows"] = windows;

  ojson lg;
  lg["eq84_max_residual"] = checks.eq84_max_residual;
  lg["eq84_pass"] = checks.eq84_pass;
  lg["eq78H_violations"] = checks.eq78h_violations;
  lg["eq78F_violations"] = checks.eq78f_violations;
  lg["eq78_applicable"] = checks.eq78_applicable;
  lg["heatFI_pass_fraction"] = checks.heatfi_pass_fraction;
  lg["heatFI_applicable"] = checks.heatfi_applicable;
  lg["weak_max_excess"] = checks.weak_max_excess;
  lg["weak_pass"] = checks.weak_pass;
  lg["energy_violations"] = checks.energy_violations;
  lg["all_pass"] = checks.all_pass();
  j["ledger"] = lg;

  ojson ck = nullptr;
  ojson tala = nullptr;
  ojson final_l1 = nullptr;
  ojson final_w2 = nullptr;
  if (res.refs.available) {
    std::vector<double> ratios;
    double worst_gap = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < res.traj.states.size(); ++n) {
      const double w2 =
          wasserstein_distance(res.traj.states[n], *res.refs.state);
      worst_gap = std::max(
          worst_gap, 0.5 * p.capital_lambda * w2 * w2 - rows[n].hhat);
      if (rows[n].hhat > 1e-10 && n < res.l1_series.size()) {
        ratios.push_back(res.l1_series[n] / std::sqrt(rows[n].hhat));
      }
    }
    tala = worst_gap;
    if (!ratios.empty()) {
      std::sort(ratios.begin(), ratios.end());
      const std::size_t k = ratios.size();
      const double median = k % 2 ? ratios[k / 2]
                                  : 0.5 * (ratios[k / 2 - 1] + ratios[k / 2]);
      ck = ojson{{"median", median}, {"max", ratios.back()}};
    }
    final_l1 = res.l1_series.back();
    final_w2 = wasserstein_distance(res.traj.states.back(), *res.refs.state);
  }
  j["ck_ratio"] = ck;
  j["talagrand_max_gap"] = tala;

  double drift = 0.0;
  for (const auto& rec : res.traj.records) {
    drift = std::max(drift, std::sqrt(std::max(0.0, rec.w2sq)));
  }
  j["max_step_w2_drift"] = drift;

  ojson fin;
  const LedgerRow& last = rows.back();
  fin["t"] = last.t;
  fin["F"] = last.f;
  fin["H"] = last.h;
  fin["Hhat"] = num_or_null(last.hhat);
  fin["Fhat"] = num_or_null(last.fhat);
  fin["M2"] = last.m2;
  fin["l1_to_equilibrium"] = final_l1;
  fin["w2_to_equilibrium"] = final_w2;
  j["final"] = fin;

  ojson warnings = ojson::array();
  int floor_hits = 0;
  for (const auto& rec : res.traj.records) floor_hits += rec.floor_hit ? 1 : 0;
  if (floor_hits > 0) {
    warnings.push_back("gap floor reached during " +
                       std::to_string(floor_hits) + " steps");
  }
  if (res.refs.available) {
    if (!res.fit_h) warnings.push_back("H decay fit unavailable");
    if (fourth && !res.fit_f) warnings.push_back("F decay fit unavailable");
    if (!res.fit_l1) warnings.push_back("l1 decay fit unavailable");
  }
  j["warnings"] = warnings;

  return j.dump(2) + "\n";
}

std::vector<std::string> failing_checks(const LedgerChecks& checks) {
  std::vector<std::string> out;
  if (!checks.eq84_pass) out.push_back("eq84");
  if (checks.eq78h_violations > 0) out.push_back("eq78H");
  if (checks.eq78f_violations > 0) out.push_back("eq78F");
  if (checks.heatfi_applicable &&
      checks.heatfi_pass_fraction < checks.heatfi_threshold) {
    out.push_back("heatFI");
  }
  if (!checks.weak_pass) out.push_back("weak");
  if (checks.energy_violations > 0) out.push_back("energy");
  return out;
}

std::string cell_label(const char* stem, int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d", stem, idx);
  return std::string(buf);
}

}  // namespace

// ------------------------------------------------------------- public parse

RunConfig parse_run_config(const std::string& json_text) {
  return parse_run_config_obj(parse_json_text(json_text));
}

std::string resolved_config_json(const RunConfig& rc) {
  ojson j;
  j["model"] = ojson{{"alpha", rc.alpha}, {"lambda", rc.lambda}, {"dim", rc.dim}};
  j["discretization"] = ojson{{"n_points", rc.n_points},
                              {"eulerian_grid", rc.eulerian_grid}};
  ojson t;
  t["schedule"] = rc.schedule;
  t["steps"] = rc.steps;
  if (rc.schedule == "geometric") {
    t["tau0"] = rc.tau0;
    t["ratio"] = rc.ratio;
  } else {
    t["tau"] = rc.tau;
  }
  j["time"] = t;
  ojson ini;
  ini["kind"] = rc.initial.kind;
  if (rc.initial.kind == "gaussian") {
    ini["mean"] = rc.initial.mean;
    ini["variance"] = rc.initial.variance;
  } else if (rc.initial.kind == "uniform") {
    ini["a"] = rc.initial.a;
    ini["b"] = rc.initial.b;
  } else if (rc.initial.kind == "double_bump") {
    ini["centers"] = rc.initial.centers;
    ini["widths"] = rc.initial.widths;
    ini["weights"] = rc.initial.weights;
  } else if (rc.initial.kind == "perturbed_barenblatt") {
    ini["amplitude"] = rc.initial.amplitude;
  }
  ini["seed"] = rc.initial.seed;
  j["initial"] = ini;
  j["functional"] = functional_name(rc.functional);
  j["inner"] = ojson{{"grad_tol", rc.inner_grad_tol},
                     {"max_iter", rc.inner_max_iter}};
  j["output"] = ojson{{"directory", rc.output_directory},
                      {"snapshot_every", rc.snapshot_every}};
  return j.dump(2) + "\n";
}

QuantileDensity make_initial(const InitialSpec& spec, int n_points,
                             const ModelParameters& p, FunctionalKind kind) {
  if (n_points < kMinParticles) {
    throw OutOfRange("make_initial needs at least 8 particles");
  }
  const int n = n_points;
  std::vector<double> x(static_cast<std::size_t>(n));

  if (spec.kind == "uniform") {
    if (!(spec.b > spec.a)) throw OutOfRange("uniform initial needs b > a");
    const double len = spec.b - spec.a;
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] = spec.a + len * (i + 0.5) / n;
    }
  } else if (spec.kind == "gaussian") {
    if (!(spec.variance > 0.0)) {
      throw OutOfRange("gaussian initial needs variance > 0");
    }
    const double sd = std::sqrt(spec.variance);
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] =
          spec.mean + sd * normal_quantile((i + 0.5) / n);
    }
  } else if (spec.kind == "barenblatt") {
    if (p.lambda > 0.0) {
      return equilibrium_state(p, n, kind).state;
    }
    // zero confinement: sample the unit-scale self-similar profile
    const ModelParameters q = derive_params(p.alpha, 1.0, p.dim);
    return to_quantile(stationary_profile(q), n);
  } else if (spec.kind == "double_bump") {
    const std::size_t k = spec.centers.size();
    if (k == 0 || spec.widths.size() != k || spec.weights.size() != k) {
      throw OutOfRange("double_bump needs equal-length centers/widths/weights");
    }
    double wsum = 0.0;
    for (double w : spec.weights) {
      if (!(w > 0.0)) throw OutOfRange("double_bump weights must be > 0");
      wsum += w;
    }
    for (double w : spec.widths) {
      if (!(w > 0.0)) throw OutOfRange("double_bump widths must be > 0");
    }
    std::vector<double> wn = spec.weights;
    for (double& w : wn) w /= wsum;
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] =
          mixture_quantile((i + 0.5) / n, spec.centers, spec.widths, wn);
    }
  } else if (spec.kind == "perturbed_barenblatt") {
    const ModelParameters q =
        p.lambda > 0.0 ? p : derive_params(p.alpha, 1.0, p.dim);
    const QuantileDensity base = to_quantile(stationary_profile(q), n);
    Rng rng(spec.seed);
    double a[6];
    for (double& c : a) c = rng.uniform(-1.0, 1.0);
    // multiplicative low-frequency noise on the gaps keeps the order intact
    x[0] = base[0];
    for (int i = 0; i + 1 < n; ++i) {
      const double m = static_cast<double>(i + 1) / n;
      double eta = 0.0;
      for (int k = 1; k <= 6; ++k) {
        eta += a[k - 1] * std::sin(k * kPi * m) / k;
      }
      const double gap = (base[i + 1] - base[i]) * std::exp(spec.amplitude * eta);
      x[static_cast<std::size_t>(i) + 1] = x[static_cast<std::size_t>(i)] + gap;
    }
    const double shift = mean_of(base.positions()) - mean_of(x);
    for (double& v : x) v += shift;
  } else {
    throw UnknownKind("initial kind \"" + spec.kind + "\"");
  }
  return QuantileDensity(std::move(x));
}

Partition make_partition(const RunConfig& rc) {
  if (rc.schedule == "uniform") return uniform_partition(rc.tau, rc.steps);
  if (rc.schedule == "geometric") {
    return geometric_partition(rc.tau0, rc.ratio, rc.steps);
  }
  throw ConfigParse("time.schedule must be \"uniform\" or \"geometric\"");
}

// ---------------------------------------------------------------- execution

RunResult execute_run(const RunConfig& rc) {
  RunResult res;
  res.config = rc;
  res.params = derive_params(rc.alpha, rc.lambda, rc.dim);

  JkoConfig cfg;
  cfg.inner_grad_tol = rc.inner_grad_tol;
  cfg.inner_max_iter = rc.inner_max_iter;
  cfg.eulerian_grid_size = rc.eulerian_grid;
  validate(cfg);

  const QuantileDensity init =
      make_initial(rc.initial, rc.n_points, res.params, rc.functional);
  res.traj =
      run_trajectory(init, make_partition(rc), rc.functional, res.params, cfg);
  res.refs = make_equilibrium_refs(res.params, rc.n_points, rc.functional);
  res.ledger = ledger_check(res.traj, res.refs, standard_test_bank());
  res.ledger_ok = res.ledger.checks.all_pass();

  if (res.refs.available) {
    const EulerianDensity eq_recon =
        to_eulerian(*res.refs.state, cfg.eulerian_grid_size);
    res.l1_series.reserve(res.traj.states.size());
    for (const auto& st : res.traj.states) {
      res.l1_series.push_back(
          l1_against(to_eulerian(st, cfg.eulerian_grid_size), eq_recon));
    }
    const std::vector<double>& t = res.traj.part.t;
    std::vector<double> hh(t.size()), ff(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      hh[i] = res.ledger.rows[i].hhat;
      ff[i] = res.ledger.rows[i].fhat;
    }
    auto fit_floor = [](double v0) {
      return std::max(1e-12, 1e-8 * (1.0 + std::abs(v0)));
    };
    res.fit_h = try_fit(t, hh, fit_floor(hh[0]));
    res.fit_f = try_fit(t, ff, fit_floor(ff[0]));
    res.fit_l1 = try_fit(t, res.l1_series, 1e-3);
  }

  res.summary_json = build_summary(res);
  return res;
}

void write_run_artifacts(const RunResult& res) {
  const std::string& dir = res.config.output_directory;
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Io("cannot create output directory " + dir);

  write_text_file(dir + "/ledger.csv", ledger_csv(res.ledger));
  write_text_file(dir + "/summary.json", res.summary_json);
  write_text_file(dir + "/resolved_config.json",
                  resolved_config_json(res.config));

  const int steps = res.traj.part.steps();
  std::vector<int> snaps{0};
  if (res.config.snapshot_every > 0) {
    for (int n = res.config.snapshot_every; n < steps;
         n += res.config.snapshot_every) {
      snaps.push_back(n);
    }
  }
  if (steps > 0) snaps.push_back(steps);
  for (int nidx : snaps) {
    char name[32];
    std::snprintf(name, sizeof(name), "state_%06d.csv", nidx);
    write_text_file(dir + "/" + name,
                    state_csv(res.traj.states[static_cast<std::size_t>(nidx)]));
  }

  if (res.config.lambda == 0.0 &&
      res.config.functional == FunctionalKind::fourth_order && steps > 0) {
    const int stride = res.config.snapshot_every > 0
                           ? res.config.snapshot_every
                           : std::max(1, steps / 200);
    const auto rows =
        intermediate_asymptotics_report(res.traj, res.params, stride);
    const bool with_w12 = std::abs(res.config.alpha - 1.0) < 1e-12;
    write_text_file(dir + "/asymptotics.csv", asymptotics_csv(rows, with_w12));
  }
}

std::string state_csv(const QuantileDensity& st) {
  std::string out = "m,x\n";
  for (int i = 0; i < st.n(); ++i) {
    out += csv_row({num_str(st.mass(i)), num_str(st[i])});
  }
  return out;
}

std::string asymptotics_csv(const std::vector<AsymptoticsRow>& rows,
                            bool with_w12) {
  std::string out = with_w12 ? "t,R,l1_gap,scaled_gap,w12_gap,scaled_w12_gap\n"
                             : "t,R,l1_gap,scaled_gap\n";
  for (const auto& r : rows) {
    std::vector<std::string> fields{num_str(r.t), num_str(r.radius),
                                    num_str(r.l1_gap), num_str(r.scaled_gap)};
    if (with_w12) {
      fields.push_back(num_str(r.w12_gap));
      fields.push_back(num_str(r.scaled_w12_gap));
    }
    out += csv_row(fields);
  }
  return out;
}

std::string correspondence_csv(const CorrespondenceReport& rep) {
  std::string out = "n,t,s,S,W2_deviation\n";
  for (const auto& r : rep.rows) {
    out += csv_row({std::to_string(r.n), num_str(r.t), num_str(r.s),
                    num_str(r.scale), num_str(r.deviation)});
  }
  return out;
}

// -------------------------------------------------------------------- sweep

std::vector<SweepCell> parse_sweep_config(const std::string& json_text) {
  const ojson root = parse_json_text(json_text);
  if (!root.is_object()) throw ConfigParse("sweep config must be a json object");
  check_keys(root, "sweep config", {"runs", "base", "grid", "output_directory"});
  std::string od;
  if (auto it = root.find("output_directory"); it != root.end()) {
    od = as_str(*it, "output_directory");
  }

  std::vector<SweepCell> cells;
  if (root.contains("runs")) {
    if (root.contains("base") || root.contains("grid")) {
      throw ConfigParse("sweep config takes either runs or base+grid, not both");
    }
    const ojson& runs = root["runs"];
    if (!runs.is_array()) throw ConfigParse("runs must be an array");
    int idx = 0;
    for (const auto& r : runs) {
      SweepCell cell;
      cell.config = parse_run_config_obj(r);
      cell.label = cell_label("run", idx);
      if (!od.empty()) {
        cell.config.output_directory = od + "/" + cell.label;
      } else if (!cell.config.output_directory.empty()) {
        cell.config.output_directory += "/" + cell.label;
      }
      cells.push_back(std::move(cell));
      ++idx;
    }
    return cells;
  }

  if (!root.contains("base")) {
    throw ConfigParse("sweep config needs either runs or base");
  }
  const RunConfig base = parse_run_config_obj(root["base"]);

  auto opt_nums = [](const ojson& grid, const char* key)
      -> std::vector<std::optional<double>> {
    auto it = grid.find(key);
    if (it == grid.end()) return {std::nullopt};
    std::vector<std::optional<double>> out;
    for (double v : as_num_array(*it, std::string("grid.") + key)) {
      out.emplace_back(v);
    }
    return out;
  };
  auto opt_ints = [](const ojson& grid, const char* key)
      -> std::vector<std::optional<int>> {
    auto it = grid.find(key);
    if (it == grid.end()) return {std::nullopt};
    if (!it->is_array() || it->empty()) {
      throw ConfigParse(std::string("grid.") + key +
                        " must be a nonempty array of integers");
    }
    std::vector<std::optional<int>> out;
    for (const auto& e : *it) {
      out.emplace_back(as_int(e, std::string("grid.") + key + " entry"));
    }
    return out;
  };
  auto opt_seeds = [](const ojson& grid, const char* key)
      -> std::vector<std::optional<std::uint64_t>> {
    auto it = grid.find(key);
    if (it == grid.end()) return {std::nullopt};
    if (!it->is_array() || it->empty()) {
      throw ConfigParse(std::string("grid.") + key +
                        " must be a nonempty array of seeds");
    }
    std::vector<std::optional<std::uint64_t>> out;
    for (const auto& e : *it) {
      out.emplace_back(as_u64(e, std::string("grid.") + key + " entry"));
    }
    return out;
  };

  ojson grid = ojson::object();
  if (auto it = root.find("grid"); it != root.end()) {
    if (!it->is_object()) throw ConfigParse("grid must be an object");
    grid = *it;
  }
  check_keys(grid, "grid", {"alpha", "lambda", "tau", "n_points", "grad_tol", "seed"});
  const auto alphas = opt_nums(grid, "alpha");
  const auto lambdas = opt_nums(grid, "lambda");
  const auto taus = opt_nums(grid, "tau");
  const auto npts = opt_ints(grid, "n_points");
  const auto tols = opt_nums(grid, "grad_tol");
  const auto seeds = opt_seeds(grid, "seed");

  int idx = 0;
  for (const auto& a : alphas) {
    for (const auto& l : lambdas) {
      for (const auto& tt : taus) {
        for (const auto& np : npts) {
          for (const auto& gt : tols) {
            for (const auto& sd : seeds) {
              SweepCell cell;
              cell.config = base;
              if (a) cell.config.alpha = *a;
              if (l) cell.config.lambda = *l;
              if (tt) {
                cell.config.tau = *tt;
                cell.config.tau0 = *tt;
              }
              if (np) cell.config.n_points = *np;
              if (gt) cell.config.inner_grad_tol = *gt;
              if (sd) cell.config.initial.seed = *sd;
              cell.label = cell_label("cell", idx);
              if (!od.empty()) {
                cell.config.output_directory = od + "/" + cell.label;
              } else if (!base.output_directory.empty()) {
                cell.config.output_directory =
                    base.output_directory + "/" + cell.label;
              }
              cells.push_back(std::move(cell));
              ++idx;
            }
          }
        }
      }
    }
  }
  return cells;
}

std::vector<SweepOutcome> run_sweep(const std::vector<SweepCell>& cells,
                                    int threads) {
  std::vector<SweepOutcome> out(cells.size());
  if (cells.empty()) return out;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      SweepOutcome& o = out[i];
      o.cell = cells[i];
      try {
        RunResult res = execute_run(cells[i].config);
        write_run_artifacts(res);
        o.ledger_pass = res.ledger_ok;
        o.eq84_max_residual = res.ledger.checks.eq84_max_residual;
        if (res.fit_h) o.fitted_h_rate = res.fit_h->rate;
        if (res.fit_f) o.fitted_f_rate = res.fit_f->rate;
        if (res.fit_l1) o.fitted_l1_rate = res.fit_l1->rate;
        o.has_rates = res.fit_h.has_value();
        o.status = res.ledger_ok ? "ok" : "ledger_fail";
      } catch (const std::exception& e) {
        o.status = std::string("error:") + e.what();
      }
    }
  };
  const int t = std::clamp(threads, 1,
                           static_cast<int>(std::min<std::size_t>(
                               cells.size(), 64)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t) - 1);
  for (int i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

std::string sweep_report_csv(const std::vector<SweepOutcome>& outcomes) {
  std::string out =
      "label,alpha,lambda,tau,n_points,grad_tol,functional,status,"
      "fitted_H_rate,fitted_F_rate,fitted_l1_rate,eq84_max_residual,"
      "ledger_pass\n";
  for (const auto& o : outcomes) {
    std::string status = o.status;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ';';
    }
    const RunConfig& rc = o.cell.config;
    out += csv_row({o.cell.label, num_str(rc.alpha), num_str(rc.lambda),
                    num_str(rc.schedule == "geometric" ? rc.tau0 : rc.tau),
                    std::to_string(rc.n_points), num_str(rc.inner_grad_tol),
                    functional_name(rc.functional), status,
                    o.has_rates ? num_str(o.fitted_h_rate) : std::string(),
                    o.has_rates ? num_str(o.fitted_f_rate) : std::string(),
                    o.has_rates ? num_str(o.fitted_l1_rate) : std::string(),
                    num_str(o.eq84_max_residual),
                    o.ledger_pass ? "1" : "0"});
  }
  return out;
}

// ---------------------------------------------------------------------- cli

namespace {

int do_run(const std::string& path) {
  const RunConfig rc = parse_run_config(read_text_file(path));
  const RunResult res = execute_run(rc);
  write_run_artifacts(res);
  std::cout << res.summary_json;
  if (!res.ledger_ok) {
    std::string names;
    for (const auto& f : failing_checks(res.ledger.checks)) names += " " + f;
    std::cerr << "ledger check failed:" << names << "\n";
    return 1;
  }
  return 0;
}

int do_sweep(const std::string& path, int threads) {
  const std::string text = read_text_file(path);
  const ojson root = parse_json_text(text);
  std::string od;
  if (root.is_object()) {
    if (auto it = root.find("output_directory"); it != root.end()) {
      od = as_str(*it, "output_directory");
    }
  }
  const std::vector<SweepCell> cells = parse_sweep_config(text);
  const std::vector<SweepOutcome> outcomes = run_sweep(cells, threads);
  const std::string report = sweep_report_csv(outcomes);
  if (!od.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(od, ec);
    if (ec) throw Io("cannot create output directory " + od);
    write_text_file(od + "/sweep_report.csv", report);
  }
  std::cout << report;
  int failures = 0;
  for (const auto& o : outcomes) {
    if (o.status != "ok") {
      ++failures;
      std::cerr << o.cell.label << ": " << o.status << "\n";
    }
  }
  return failures == 0 ? 0 : 1;
}

int do_findim(const std::string& path) {
  const ojson root = parse_json_text(read_text_file(path));
  if (!root.is_object()) throw ConfigParse("validator config must be an object");
  check_keys(root, "validator config",
             {"kappa", "theta", "family", "eps", "u0", "m", "horizon", "dt",
              "output"});
  FinDimProblem prob;
  prob.kappa = as_num(member(root, "kappa", "validator config"), "kappa");
  prob.theta = as_num(member(root, "theta", "validator config"), "theta");
  if (!(prob.kappa > 0.0) || !(prob.theta >= prob.kappa)) {
    throw OutOfRange("validator needs 0 < kappa <= theta");
  }
  std::string family = "quadratic";
  if (auto it = root.find("family"); it != root.end()) {
    family = as_str(*it, "family");
  }
  if (family == "quadratic") {
    prob.family = PotentialFamily::quadratic;
    if (root.contains("eps")) {
      throw ConfigParse("eps is only valid with the perturbed family");
    }
  } else if (family == "perturbed") {
    prob.family = PotentialFamily::perturbed;
    if (auto it = root.find("eps"); it != root.end()) {
      prob.eps = as_num(*it, "eps");
    }
    if (!(prob.eps >= 0.0)) throw ConfigParse("eps must be >= 0");
  } else {
    throw ConfigParse("family must be \"quadratic\" or \"perturbed\"");
  }
  if (auto it = root.find("u0"); it != root.end()) {
    prob.u0 = as_num_array(*it, "u0");
    prob.m = static_cast<int>(prob.u0.size());
    if (auto jt = root.find("m"); jt != root.end()) {
      if (as_int(*jt, "m") != prob.m) {
        throw ConfigParse("m disagrees with the length of u0");
      }
    }
  } else {
    prob.m = 1;
    if (auto jt = root.find("m"); jt != root.end()) prob.m = as_int(*jt, "m");
    if (prob.m < 1) throw ConfigParse("m must be >= 1");
    prob.u0.assign(static_cast<std::size_t>(prob.m), 1.0);
  }
  double horizon = 1.0, dt = 1e-4;
  if (auto it = root.find("horizon"); it != root.end()) {
    horizon = as_num(*it, "horizon");
  }
  if (auto it = root.find("dt"); it != root.end()) dt = as_num(*it, "dt");
  if (!(horizon > 0.0) || !(dt > 0.0)) {
    throw ConfigParse("horizon and dt must be > 0");
  }

  const FinDimTrajectory traj = findim_flow(prob, horizon, dt);
  const double resid = findim_interchange_residual(prob, traj);
  double rate_v = std::numeric_limits<double>::quiet_NaN();
  double rate_u = std::numeric_limits<double>::quiet_NaN();
  int code = 0;
  std::string failure;
  try {
    const auto rates = findim_decay_rates(prob, traj);
    rate_v = rates.first;
    rate_u = rates.second;
  } catch (const Error& e) {
    code = 1;
    failure = e.what();
  }

  ojson rep;
  rep["kappa"] = prob.kappa;
  rep["theta"] = prob.theta;
  rep["rate_V"] = num_or_null(rate_v);
  rep["rate_V_predicted"] = 4.0 * prob.kappa * prob.theta;
  rep["rate_U"] = num_or_null(rate_u);
  rep["rate_U_predicted"] = 4.0 * std::min(prob.kappa, prob.theta) * prob.theta;
  rep["interchange_residual"] = resid;
  const std::string text = rep.dump(2) + "\n";
  std::cout << text;
  if (auto it = root.find("output"); it != root.end()) {
    write_text_file(as_str(*it, "output"), text);
  }
  if (code != 0) std::cerr << failure << "\n";
  return code;
}

int do_rescale_check(const std::string& path) {
  ojson root = parse_json_text(read_text_file(path));
  if (!root.is_object()) throw ConfigParse("run config must be a json object");
  double tol = 5e-3;
  if (auto it = root.find("deviation_tol"); it != root.end()) {
    tol = as_num(*it, "deviation_tol");
    if (!(tol > 0.0)) throw ConfigParse("deviation_tol must be > 0");
    root.erase("deviation_tol");
  }
  const RunConfig rc = parse_run_config_obj(root);
  if (rc.functional != FunctionalKind::fourth_order) {
    throw ConfigParse("rescale-check runs the fourth-order flow");
  }
  if (std::abs(rc.lambda - 1.0) > 1e-12) {
    throw ConfigParse("rescale-check needs lambda = 1");
  }
  const ModelParameters p = derive_params(rc.alpha, rc.lambda, rc.dim);
  JkoConfig cfg;
  cfg.inner_grad_tol = rc.inner_grad_tol;
  cfg.inner_max_iter = rc.inner_max_iter;
  cfg.eulerian_grid_size = rc.eulerian_grid;
  validate(cfg);
  const QuantileDensity init =
      make_initial(rc.initial, rc.n_points, p, rc.functional);
  const CorrespondenceReport rep =
      correspondence_run(init, make_partition(rc), p, rc.functional, cfg);
  if (!rc.output_directory.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(rc.output_directory, ec);
    if (ec) throw Io("cannot create output directory " + rc.output_directory);
    write_text_file(rc.output_directory + "/rescale_report.csv",
                    correspondence_csv(rep));
  }
  ojson j;
  j["max_deviation"] = rep.max_deviation;
  j["deviation_tol"] = tol;
  j["pass"] = rep.max_deviation <= tol;
  std::cout << j.dump(2) << "\n";
  return rep.max_deviation <= tol ? 0 : 1;
}

int do_profile(double alpha, double lambda, int dim, const std::string& dump) {
  const ModelParameters p = derive_params(alpha, lambda, dim);
  const BarenblattProfile b = stationary_profile(p);
  ojson j;
  j["alpha"] = alpha;
  j["lambda"] = lambda;
  j["d"] = dim;
  j["a_norm"] = b.a_norm;
  j["support_radius"] = num_or_null(b.support_radius);
  std::cout << j.dump(2) << "\n";
  if (!dump.empty()) {
    const double radius =
        b.gaussian ? std::sqrt(40.0 / p.capital_lambda) : b.support_radius;
    std::string csv = "x,b\n";
    const int samples = 1001;
    for (int i = 0; i < samples; ++i) {
      const double x = -radius + 2.0 * radius * i / (samples - 1);
      csv += csv_row({num_str(x), num_str(b.evaluate(std::abs(x)))});
    }
    write_text_file(dump, csv);
  }
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"minimizing-movement laboratory for perturbed information flows"};
  app.require_subcommand(1);

  std::string run_path, sweep_path, findim_path, rescale_path, dump_path;
  int threads = 1;
  double alpha = 0.0, lambda = 0.0;
  int dim = 1;

  CLI::App* c_run = app.add_subcommand(
      "run", "execute one configured trajectory and write its artifacts");
  c_run->add_option("config", run_path, "run config json")->required();

  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "run a parameter grid and aggregate the per-run reports");
  c_sweep->add_option("config", sweep_path, "sweep config json")->required();
  c_sweep->add_option("--threads", threads, "parallel workers");

  CLI::App* c_findim = app.add_subcommand(
      "validate-findim", "finite-dimensional decay and interchange validator");
  c_findim->add_option("config", findim_path, "validator config json")
      ->required();

  CLI::App* c_rescale = app.add_subcommand(
      "rescale-check", "confined vs rescaled zero-confinement correspondence");
  c_rescale
      ->add_option("config", rescale_path,
                   "run config json, optional deviation_tol key")
      ->required();

  CLI::App* c_profile =
      app.add_subcommand("profile", "stationary profile constants");
  c_profile->add_option("alpha", alpha, "concavity exponent")->required();
  c_profile->add_option("lambda", lambda, "confinement strength")->required();
  c_profile->add_option("d", dim, "space dimension")->required();
  c_profile->add_option("--dump", dump_path, "write a sampled x,b csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_run->parsed()) return do_run(run_path);
    if (c_sweep->parsed()) return do_sweep(sweep_path, threads);
    if (c_findim->parsed()) return do_findim(findim_path);
    if (c_rescale->parsed()) return do_rescale_check(rescale_path);
    if (c_profile->parsed()) return do_profile(alpha, lambda, dim, dump_path);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace mmflow
