#include "optima/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <vector>

#include "optima/errors.hpp"
#include "optima/numerics.hpp"
#include "optima/optimizer.hpp"
#include "optima/verify.hpp"

namespace optima::cli {

namespace {

namespace fs = std::filesystem;
using num::format_double;

struct LoadedConfig {
  RunConfig cfg;
  std::string path;
};

LoadedConfig load(const CmdOptions& opt) {
  LoadedConfig lc;
  lc.path = opt.config_path;
  lc.cfg = parse_config_file(opt.config_path);
  if (opt.seed) lc.cfg.seed = *opt.seed;
  if (opt.n_paths) lc.cfg.n_paths = *opt.n_paths;
  if (opt.out_dir) lc.cfg.out_dir = *opt.out_dir;
  return lc;
}

void write_manifest(const LoadedConfig& lc, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>&
                        results) {
  fs::create_directories(lc.cfg.out_dir);
  std::ofstream mf(fs::path(lc.cfg.out_dir) / "manifest.txt");
  mf << "command = " << command << "\n";
  mf << "version = 0.1.0\n";
  mf << "config_path = " << lc.path << "\n";
  mf << "seed = " << lc.cfg.seed << "\n";
  mf << "n_paths = " << lc.cfg.n_paths << "\n";
  mf << "steps = " << lc.cfg.steps << "\n";
  mf << "z_crit = " << format_double(lc.cfg.z_crit) << "\n";
  mf << "oracle_tol = " << format_double(lc.cfg.oracle_tol) << "\n";
  mf << "homogeneity_tol = " << format_double(lc.cfg.homogeneity_tol) << "\n";
  mf << "lsq_tol = " << format_double(market::kRiskPriceTol) << "\n";
  mf << "stat_atol = " << format_double(verify::kStatAtol) << "\n";
  mf << "assumption = coefficient functions Lipschitz on [0,T] x positive "
        "orthant (user contract)\n";
  for (const auto& [k, v] : results) {
    mf << k << " = " << v << "\n";
  }
  mf << "--- config echo ---\n" << lc.cfg.raw_text;
  if (!lc.cfg.raw_text.empty() && lc.cfg.raw_text.back() != '\n') mf << "\n";
}

int guarded(const CmdOptions& opt, std::ostream& err,
            const std::function<int(const LoadedConfig&)>& body) {
  LoadedConfig lc;
  try {
    lc = load(opt);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    return body(lc);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}

optimizer::Solution solve_from_config(const RunConfig& cfg) {
  optimizer::SolveConfig sc;
  sc.varpi_mode = cfg.varpi_mode;
  sc.homogeneity_tol = cfg.homogeneity_tol;
  return optimizer::solve(cfg.market, cfg.preference, cfg.endow,
                          cfg.problem_kind, cfg.x,
                          cfg.market.stock_initials(), sc);
}

}  // namespace

int cmd_solve(const CmdOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(opt, err, [&](const LoadedConfig& lc) {
    const RunConfig& cfg = lc.cfg;
    optimizer::Solution sol = solve_from_config(cfg);

    const market::TimeGrid grid(0.0, cfg.market.horizon, cfg.steps);
    const market::PathBundle bundle = market::simulate_paths(
        cfg.market, grid, cfg.market.stock_initials(), cfg.n_paths, cfg.seed);

    // Pathwise portfolio stats need fast varpi queries; grid-cache the
    // Monte Carlo estimator over the realized price range first.
    if (sol.varpi_estimator().mode() == endowment::VarpiMode::monte_carlo &&
        !sol.varpi_estimator().has_cache()) {
      const int n = bundle.n_stocks;
      Vec lo = Vec::Constant(n, std::numeric_limits<double>::infinity());
      Vec hi = Vec::Constant(n, 0.0);
      for (std::size_t k = 0; k < bundle.n_paths;
           k += std::max<std::size_t>(1, bundle.n_paths / 64)) {
        for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
          for (int i = 0; i < n; ++i) {
            lo[i] = std::min(lo[i], bundle.price(k, j, i));
            hi[i] = std::max(hi[i], bundle.price(k, j, i));
          }
        }
      }
      lo *= 0.8;
      hi *= 1.25;
      auto mutable_varpi = std::const_pointer_cast<endowment::VarPi>(
          std::shared_ptr<const endowment::VarPi>(sol.varpi_ptr()));
      mutable_varpi->build_cache(0.0, cfg.market.horizon, 9, lo, hi, 9);
    }

    const optimizer::PathStats stats =
        optimizer::evaluate_on_bundle(sol, bundle, true);

    fs::create_directories(cfg.out_dir);
    {
      std::ofstream sf(fs::path(cfg.out_dir) / "stats.csv");
      sf << "t,mean_xi,se_xi,mean_c,se_c";
      for (int i = 1; i <= bundle.n_stocks; ++i) {
        sf << ",mean_pi_" << i << ",se_pi_" << i;
      }
      sf << "\n";
      for (std::size_t j = 0; j < stats.times.size(); ++j) {
        sf << format_double(stats.times[j]) << ','
           << format_double(stats.mean_wealth[j]) << ','
           << format_double(stats.se_wealth[j]) << ','
           << format_double(stats.mean_consumption[j]) << ','
           << format_double(stats.se_consumption[j]);
        for (int i = 0; i < bundle.n_stocks; ++i) {
          sf << ',' << format_double(stats.mean_portfolio(j, i)) << ','
             << format_double(stats.se_portfolio(j, i));
        }
        sf << "\n";
      }
    }

    std::vector<std::pair<std::string, std::string>> results;
    results.emplace_back("branch", to_string(sol.branch()));
    results.emplace_back("x", format_double(sol.initial_wealth()));
    results.emplace_back("y_multiplier", format_double(sol.multiplier()));
    results.emplace_back("value", format_double(sol.value()));
    results.emplace_back("varpi0", format_double(sol.varpi_at_start()));
    write_manifest(lc, "solve", results);

    out << "branch = " << to_string(sol.branch()) << "\n";
    out << "x = " << format_double(sol.initial_wealth()) << "\n";
    out << "y = " << format_double(sol.multiplier()) << "\n";
    out << "value = " << format_double(sol.value()) << "\n";
    out << "varpi0 = " << format_double(sol.varpi_at_start()) << "\n";
    out << "wrote " << (fs::path(cfg.out_dir) / "stats.csv").string() << "\n";
    return kExitOk;
  });
}

int cmd_simulate(const CmdOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(opt, err, [&](const LoadedConfig& lc) {
    const RunConfig& cfg = lc.cfg;
    const market::TimeGrid grid(0.0, cfg.market.horizon, cfg.steps);
    const market::PathBundle bundle = market::simulate_paths(
        cfg.market, grid, cfg.market.stock_initials(), cfg.n_paths, cfg.seed);
    fs::create_directories(cfg.out_dir);
    const fs::path csv = fs::path(cfg.out_dir) / "paths.csv";
    {
      std::ofstream pf(csv);
      bundle.write_csv(pf);
    }
    write_manifest(lc, "simulate", {});
    out << "wrote " << csv.string() << "\n";
    return kExitOk;
  });
}

namespace {

struct CheckRow {
  std::string name;
  double statistic;
  double threshold;
  bool pass;
  // direction: true means "statistic must be <= threshold"
};

void print_table(const std::vector<CheckRow>& rows, std::ostream& os) {
  os << "check                                statistic      threshold      "
        "verdict\n";
  for (const auto& r : rows) {
    std::string name = r.name;
    name.resize(36, ' ');
    std::string stat = format_double(r.statistic);
    stat.resize(std::max<std::size_t>(stat.size(), 14), ' ');
    std::string thr = format_double(r.threshold);
    thr.resize(std::max<std::size_t>(thr.size(), 14), ' ');
    os << name << ' ' << stat << ' ' << thr << ' '
       << (r.pass ? "pass" : "FAIL") << "\n";
  }
}

}  // namespace

int cmd_verify(const CmdOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(opt, err, [&](const LoadedConfig& lc) {
    const RunConfig& cfg = lc.cfg;
    std::vector<CheckRow> rows;
    auto add = [&rows](const std::string& name, double stat, double thr,
                       bool pass) {
      rows.push_back({name, stat, thr, pass});
    };

    // optional: diagnostics over a previously exported bundle
    if (!cfg.paths_csv.empty()) {
      std::ifstream pf(cfg.paths_csv);
      if (!pf) throw ConfigError("missing paths file: " + cfg.paths_csv);
      const market::PathBundle loaded = market::PathBundle::read_csv(pf);
      bool positive = true;
      double max_identity_err = 0.0;
      for (std::size_t k = 0; k < loaded.n_paths; ++k) {
        for (std::size_t j = 0; j < loaded.n_nodes(); ++j) {
          positive = positive && loaded.bond_at(k, j) > 0.0 &&
                     loaded.expmart_at(k, j) > 0.0 &&
                     loaded.deflator_at(k, j) > 0.0;
          for (int i = 0; i < loaded.n_stocks; ++i) {
            positive = positive && loaded.price(k, j, i) > 0.0;
          }
          max_identity_err = std::max(
              max_identity_err,
              std::abs(loaded.deflator_at(k, j) -
                       loaded.expmart_at(k, j) / loaded.bond_at(k, j)));
        }
      }
      add("csv_positivity", positive ? 1.0 : 0.0, 1.0, positive);
      add("csv_deflator_identity", max_identity_err, 0.0,
          max_identity_err == 0.0);
    }

    const Vec p0 = cfg.market.stock_initials();

    // flow property of the discrete scheme
    const market::TimeGrid check_grid(0.0, cfg.market.horizon,
                                      std::max<std::size_t>(cfg.verify_steps,
                                                            2));
    const double flow_dev = market::restart_consistency_check(
        cfg.market, check_grid, p0, cfg.seed);
    add("flow_property", flow_dev, 0.0, flow_dev == 0.0);

    // simulate the verification bundle
    const market::PathBundle bundle = market::simulate_paths(
        cfg.market, check_grid, p0, cfg.verify_paths, cfg.seed);

    bool positive = true;
    double max_identity_err = 0.0;
    for (std::size_t k = 0; k < bundle.n_paths; ++k) {
      for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
        positive = positive && bundle.bond_at(k, j) > 0.0 &&
                   bundle.expmart_at(k, j) > 0.0 &&
                   bundle.deflator_at(k, j) > 0.0;
        for (int i = 0; i < bundle.n_stocks; ++i) {
          positive = positive && bundle.price(k, j, i) > 0.0;
        }
        max_identity_err =
            std::max(max_identity_err,
                     std::abs(bundle.deflator_at(k, j) -
                              bundle.expmart_at(k, j) / bundle.bond_at(k, j)));
      }
    }
    add("positivity", positive ? 1.0 : 0.0, 1.0, positive);
    add("deflator_identity", max_identity_err, 0.0, max_identity_err == 0.0);

    // unit-mean exponential martingale, with optional seeded violation
    {
      verify::SeriesSamples z = verify::expmart_samples(bundle);
      if (cfg.self_test_bias != 0.0) {
        for (std::size_t k = 0; k < z.n_paths; ++k) {
          for (std::size_t j = 0; j < z.n_nodes(); ++j) {
            z.at(k, j) += cfg.self_test_bias * z.times[j];
          }
        }
      }
      const auto rep = verify::martingale_test(z, 1.0, cfg.z_crit);
      add(cfg.self_test_bias != 0.0 ? "unit_mean_Z(biased)" : "unit_mean_Z",
          rep.max_z, rep.z_crit, rep.pass);
    }

    // solved problem diagnostics
    const optimizer::Solution sol = solve_from_config(cfg);
    if (sol.branch() == optimizer::Branch::interior) {
      const auto budget = verify::budget_process_samples(sol, bundle);
      const auto rep = verify::martingale_test(budget, cfg.x, cfg.z_crit);
      add("budget_martingale", rep.max_z, rep.z_crit, rep.pass);

      const auto sup = verify::supermartingale_test(
          budget, verify::Direction::non_increasing, cfg.z_crit);
      add("budget_supermartingale", sup.max_z, sup.z_crit, sup.pass);

      // deflated consumption carries no cross-path randomness
      if (cfg.problem_kind != ProblemKind::terminal_only) {
        double max_sd = 0.0;
        std::vector<double> col(bundle.n_paths);
        for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
          const double t = bundle.grid.time(j);
          for (std::size_t k = 0; k < bundle.n_paths; ++k) {
            const double H = bundle.deflator_at(k, j);
            col[k] = H * sol.consumption(t, H);
          }
          const auto ms = num::mean_se(col);
          max_sd = std::max(
              max_sd, ms.se * std::sqrt(static_cast<double>(bundle.n_paths)));
        }
        add("deflated_consumption_sd", max_sd, 1e-12, max_sd <= 1e-12);
      }

      // feasibility: x covers the deflated cost of the plan
      {
        const auto& model = sol.varpi_estimator().model();
        std::vector<double> costs(bundle.n_paths);
        const std::size_t last = bundle.n_nodes() - 1;
        for (std::size_t k = 0; k < bundle.n_paths; ++k) {
          double integral = 0.0;
          double prev = 0.0;
          for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
            const double t = bundle.grid.time(j);
            const double H = bundle.deflator_at(k, j);
            const double net = H * (sol.consumption(t, H) -
                                    model.rate_fn(t, bundle.price_vec(k, j)));
            if (j > 0) integral += 0.5 * (prev + net) * bundle.grid.dt(j - 1);
            prev = net;
          }
          // L(0, T, p) = 0: no endowment remains after the horizon
          costs[k] = bundle.deflator_at(k, last) * 0.0 + integral;
        }
        const auto rep = verify::feasibility_bound(cfg.x, costs, cfg.z_crit);
        add("feasibility_bound", rep.mean_cost - rep.x, 0.0, rep.pass);
      }

      // a deliberately throttled consumption plan cannot beat the optimum
      if (cfg.problem_kind != ProblemKind::terminal_only) {
        const double sub = verify::scaled_consumption_value(
            cfg.preference, cfg.problem_kind, sol.multiplier(), 0.0, 0.9,
            cfg.x - sol.varpi_at_start());
        add("value_dominance", sub - sol.value(), 1e-9,
            sub <= sol.value() + 1e-9);
      }
    } else {
      add("branch", 1.0, 1.0, true);  // floor branch: budget checks void
    }

    // convex duality on the running and terminal slices
    {
      std::vector<double> grid;
      for (double x = 1e-3; x <= 1e3; x *= 1.9) grid.push_back(x);
      double max_gap = -1e300;
      for (double t : {0.0, 0.5 * cfg.market.horizon}) {
        const auto slice = preferences::running_slice(cfg.preference, t);
        for (double y : {0.5, 1.0, 2.0}) {
          max_gap = std::max(max_gap, verify::duality_gap(slice, y, grid));
        }
      }
      if (cfg.preference.has_terminal()) {
        const auto slice = preferences::terminal_slice(cfg.preference);
        for (double y : {0.5, 1.0, 2.0}) {
          max_gap = std::max(max_gap, verify::duality_gap(slice, y, grid));
        }
      }
      add("duality_gap", max_gap, 1e-12, max_gap <= 1e-12);
    }

    // homogeneity of the configured preference
    {
      const double T = cfg.preference.horizon;
      const std::array<double, 4> x_grid{0.1, 1.0, 10.0, 100.0};
      double dev = 0.0;
      for (double s : {0.0, 0.25 * T, 0.5 * T}) {
        for (double t : {0.5 * T, 0.75 * T}) {
          if (t < s) continue;
          dev = std::max(dev, preferences::verify_homogeneity(
                                  cfg.preference, s, t, x_grid,
                                  cfg.problem_kind));
        }
      }
      add("homogeneity", dev, cfg.homogeneity_tol,
          dev <= cfg.homogeneity_tol);
    }

    // endowment diagnostics
    if (cfg.endow.kind != endowment::EndowmentKind::zero) {
      const auto& varpi = sol.varpi_estimator();

      // deflated floor process H L - int H eps stays flat in the mean
      {
        const auto floor = verify::floor_process_samples(varpi, bundle);
        const double ref = floor.at(0, 0);  // identical across paths at t=0
        const auto rep = verify::martingale_test(floor, ref, cfg.z_crit);
        add("floor_martingale", rep.max_z, rep.z_crit, rep.pass);

        const auto ex =
            verify::existence_construction(floor_to_L(floor, bundle), cfg.x,
                                           deflators_of(bundle));
        add("existence_construction", ex.min_gap, 0.0, ex.min_gap >= -1e-12);
      }

      // consistency: a nested fresh estimate at (t, P) agrees with the
      // state-feedback value
      {
        endowment::EndowmentModel nested_model = cfg.endow;
        nested_model.mc_inner_paths =
            std::min<std::size_t>(nested_model.mc_inner_paths, 4000);
        nested_model.mc_seed += 1;
        const endowment::VarPi nested(nested_model, cfg.market,
                                      endowment::VarpiMode::monte_carlo);
        double max_dev_z = 0.0;
        const std::size_t n_samples = 5;
        for (std::size_t s_i = 0; s_i < n_samples; ++s_i) {
          const std::size_t k =
              (s_i * 2654435761u) % bundle.n_paths;
          const std::size_t j = bundle.n_nodes() / 2 + s_i;
          if (j >= bundle.n_nodes() - 1) break;
          const double t = bundle.grid.time(j);
          const Vec P = bundle.price_vec(k, j);
          const auto fresh = nested.estimate(t, P);
          const auto base = varpi.estimate(t, P);
          const double dev = std::abs(fresh.value - base.value);
          const double band =
              cfg.z_crit * (fresh.se + base.se) + verify::kStatAtol;
          max_dev_z = std::max(max_dev_z, dev / band * cfg.z_crit);
        }
        add("endowment_consistency", max_dev_z, cfg.z_crit,
            max_dev_z <= cfg.z_crit);
      }
    }

    print_table(rows, out);
    fs::create_directories(cfg.out_dir);
    {
      std::ofstream vf(fs::path(cfg.out_dir) / "verify.txt");
      print_table(rows, vf);
    }
    const bool all_pass =
        std::all_of(rows.begin(), rows.end(),
                    [](const CheckRow& r) { return r.pass; });
    std::vector<std::pair<std::string, std::string>> results;
    results.emplace_back("checks_total", std::to_string(rows.size()));
    results.emplace_back("checks_passed",
                         std::to_string(std::count_if(
                             rows.begin(), rows.end(),
                             [](const CheckRow& r) { return r.pass; })));
    write_manifest(lc, "verify", results);
    return all_pass ? kExitOk : kExitVerifyFailed;
  });
}

int cmd_oracle(const CmdOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(opt, err, [&](const LoadedConfig& lc) {
    const RunConfig& cfg = lc.cfg;
    if (cfg.endow.kind != endowment::EndowmentKind::zero) {
      throw ConfigError("the binomial oracle covers zero-endowment problems");
    }
    if (cfg.oracle_periods < 1 || cfg.oracle_periods > 4) {
      throw ConfigError("oracle size guard: periods must lie in 1..4");
    }
    const auto bin = verify::BinomialMarket::uniform(
        cfg.oracle_periods, cfg.preference.horizon, cfg.oracle_up,
        cfg.oracle_down, cfg.oracle_gross_rate);
    const auto util = verify::oracle_utilities(cfg.preference);
    const auto oracle =
        verify::binomial_oracle(bin, util, cfg.x, cfg.problem_kind);

    const double y =
        preferences::invert_X(cfg.preference, 0.0, cfg.x, cfg.problem_kind);
    const double v_solver =
        optimizer::value_function(cfg.preference, cfg.problem_kind, y, 0.0);
    const double dv = std::abs(v_solver - oracle.value);

    out << "V_solver = " << format_double(v_solver) << "\n";
    out << "V_oracle = " << format_double(oracle.value) << "\n";
    out << "|dV| = " << format_double(dv) << "\n";
    out << "y_solver = " << format_double(y) << "\n";
    out << "y_oracle = " << format_double(oracle.multiplier) << "\n";
    out << "collapse_spread = " << format_double(oracle.collapse_spread)
        << "\n";
    out << "budget_residual = " << format_double(oracle.budget_residual)
        << "\n";

    std::vector<std::pair<std::string, std::string>> results;
    results.emplace_back("V_solver", format_double(v_solver));
    results.emplace_back("V_oracle", format_double(oracle.value));
    results.emplace_back("dV", format_double(dv));
    write_manifest(lc, "oracle", results);
    return dv <= cfg.oracle_tol ? kExitOk : kExitSolver;
  });
}

}  // namespace optima::cli
