#include "optima/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "optima/errors.hpp"

namespace optima::cli {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

using Section = std::map<std::string, Entry>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& s, int line, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(line, "field '" + key + "' is not a decimal number: '" + s + "'");
  }
}

std::uint64_t to_u64(const std::string& s, int line, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(line, "field '" + key + "' is not a nonnegative integer: '" + s +
                   "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(trim(tok));
  if (s.empty()) out.clear();
  return out;
}

struct TimeExpr {
  std::function<double(double)> fn;
  std::optional<double> constant;
};

TimeExpr parse_time_expr(const std::string& text, int line,
                         const std::string& key) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    fail(line, "field '" + key +
                   "' needs constant:v, poly:c0,c1,... or table:t0:v0,...");
  }
  const std::string head = text.substr(0, colon);
  const std::string body = text.substr(colon + 1);
  if (head == "constant") {
    const double v = to_double(body, line, key);
    return {[v](double) { return v; }, v};
  }
  if (head == "poly") {
    const auto toks = split(body, ',');
    if (toks.empty()) fail(line, "poly needs at least one coefficient");
    std::vector<double> coeffs;
    for (const auto& t : toks) coeffs.push_back(to_double(t, line, key));
    if (coeffs.size() == 1) {
      const double v = coeffs[0];
      return {[v](double) { return v; }, v};
    }
    return {[coeffs](double t) {
              double acc = 0.0;
              for (std::size_t i = coeffs.size(); i-- > 0;) {
                acc = acc * t + coeffs[i];
              }
              return acc;
            },
            std::nullopt};
  }
  if (head == "table") {
    const auto pairs = split(body, ',');
    if (pairs.size() < 2) fail(line, "table needs at least two (t:v) pairs");
    std::vector<double> ts, vs;
    for (const auto& pr : pairs) {
      const auto ps = split(pr, ':');
      if (ps.size() != 2) fail(line, "table entries look like t:v");
      ts.push_back(to_double(ps[0], line, key));
      vs.push_back(to_double(ps[1], line, key));
    }
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      if (!(ts[i + 1] > ts[i])) fail(line, "table times must increase");
    }
    return {[ts, vs](double t) {
              if (t <= ts.front()) return vs.front();
              if (t >= ts.back()) return vs.back();
              const auto it = std::upper_bound(ts.begin(), ts.end(), t);
              const std::size_t hi = static_cast<std::size_t>(it - ts.begin());
              const double w = (t - ts[hi - 1]) / (ts[hi] - ts[hi - 1]);
              return vs[hi - 1] + w * (vs[hi] - vs[hi - 1]);
            },
            std::nullopt};
  }
  fail(line, "unknown expression head '" + head + "' in field '" + key + "'");
}

class Parsed {
 public:
  explicit Parsed(const std::string& text) {
    std::stringstream ss(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(ss, raw)) {
      ++line;
      std::string s = raw;
      const auto hash = s.find('#');
      if (hash != std::string::npos) s = s.substr(0, hash);
      s = trim(s);
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') fail(line, "unterminated section header");
        section = trim(s.substr(1, s.size() - 2));
        if (!known_sections_.count(section)) {
          fail(line, "unknown section '" + section + "'");
        }
        sections_[section];
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(line, "expected key = value");
      if (section.empty()) fail(line, "key before any [section] header");
      const std::string key = trim(s.substr(0, eq));
      const std::string value = trim(s.substr(eq + 1));
      if (key.empty()) fail(line, "empty key");
      auto [it, fresh] = sections_[section].emplace(key, Entry{value, line});
      if (!fresh) fail(line, "duplicate key '" + key + "'");
    }
  }

  bool has(const std::string& sec, const std::string& key) const {
    const auto s = sections_.find(sec);
    return s != sections_.end() && s->second.count(key) > 0;
  }

  const Entry& get(const std::string& sec, const std::string& key) {
    auto s = sections_.find(sec);
    if (s == sections_.end() || !s->second.count(key)) {
      throw ConfigError("config: missing required field [" + sec + "] " +
                        key);
    }
    Entry& e = s->second.at(key);
    e.used = true;
    return e;
  }

  std::optional<Entry> maybe(const std::string& sec, const std::string& key) {
    if (!has(sec, key)) return std::nullopt;
    return get(sec, key);
  }

  void reject_unused() const {
    for (const auto& [sec, entries] : sections_) {
      for (const auto& [key, e] : entries) {
        if (!e.used) {
          fail(e.line, "unknown key '" + key + "' in section [" + sec + "]");
        }
      }
    }
  }

 private:
  std::map<std::string, Section> sections_;
  const std::set<std::string> known_sections_{
      "market",  "preference", "endowment", "problem",
      "tolerances", "oracle",  "verify",    "output"};
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  Parsed p(text);
  RunConfig cfg;
  cfg.raw_text = text;

  // ----- market ---------------------------------------------------------
  const int n = static_cast<int>(
      to_u64(p.get("market", "n_stocks").value,
             p.get("market", "n_stocks").line, "n_stocks"));
  const int d = static_cast<int>(
      to_u64(p.get("market", "n_brownian").value,
             p.get("market", "n_brownian").line, "n_brownian"));
  if (n < 1 || d < 1) {
    throw ConfigError("config: n_stocks and n_brownian must be >= 1");
  }
  const auto& rate_e = p.get("market", "rate");
  const auto& drift_e = p.get("market", "drift");
  const auto& vol_e = p.get("market", "vol");
  const auto& div_e = p.get("market", "dividend");
  const auto& p0_e = p.get("market", "initial_prices");
  const auto& hor_e = p.get("market", "horizon");

  TimeExpr rate = parse_time_expr(rate_e.value, rate_e.line, "rate");

  auto parse_vector_expr = [&](const Entry& e, const std::string& key,
                               int want) {
    const auto parts = split(e.value, '|');
    if (static_cast<int>(parts.size()) != want) {
      fail(e.line, "field '" + key + "' needs " + std::to_string(want) +
                       " '|'-separated expressions");
    }
    std::vector<TimeExpr> out;
    for (const auto& part : parts) {
      out.push_back(parse_time_expr(part, e.line, key));
    }
    return out;
  };

  const auto drift = parse_vector_expr(drift_e, "drift", n);
  const auto divid = parse_vector_expr(div_e, "dividend", n);

  std::vector<std::vector<TimeExpr>> vol_rows;
  {
    const auto rows = split(vol_e.value, ';');
    if (static_cast<int>(rows.size()) != n) {
      fail(vol_e.line, "vol needs " + std::to_string(n) +
                           " ';'-separated rows");
    }
    for (const auto& row : rows) {
      const auto parts = split(row, '|');
      if (static_cast<int>(parts.size()) != d) {
        fail(vol_e.line, "each vol row needs " + std::to_string(d) +
                             " '|'-separated expressions");
      }
      std::vector<TimeExpr> r;
      for (const auto& part : parts) {
        r.push_back(parse_time_expr(part, vol_e.line, "vol"));
      }
      vol_rows.push_back(std::move(r));
    }
  }

  const auto p0_toks = split(p0_e.value, ',');
  if (static_cast<int>(p0_toks.size()) != n + 1) {
    fail(p0_e.line, "initial_prices needs n_stocks + 1 comma-separated "
                    "values (index 0 is the deflating asset)");
  }
  Vec p0(n + 1);
  for (int i = 0; i <= n; ++i) {
    p0[i] = to_double(p0_toks[i], p0_e.line, "initial_prices");
  }
  const double T = to_double(hor_e.value, hor_e.line, "horizon");

  bool all_const = rate.constant.has_value();
  for (const auto& e : drift) all_const = all_const && e.constant.has_value();
  for (const auto& e : divid) all_const = all_const && e.constant.has_value();
  for (const auto& row : vol_rows) {
    for (const auto& e : row) all_const = all_const && e.constant.has_value();
  }

  if (all_const) {
    Vec b(n), delta(n);
    Mat sigma(n, d);
    for (int i = 0; i < n; ++i) {
      b[i] = *drift[i].constant;
      delta[i] = *divid[i].constant;
      for (int j = 0; j < d; ++j) sigma(i, j) = *vol_rows[i][j].constant;
    }
    cfg.market = market::MarketSpec::constant(*rate.constant, b, sigma, delta,
                                              p0, T);
  } else {
    market::MarketSpec spec;
    spec.n_stocks = n;
    spec.n_brownian = d;
    spec.rate_fn = [fn = rate.fn](double t, const Vec&) { return fn(t); };
    spec.drift_fn = [drift, n](double t, const Vec&) {
      Vec out(n);
      for (int i = 0; i < n; ++i) out[i] = drift[i].fn(t);
      return out;
    };
    spec.dividend_fn = [divid, n](double t, const Vec&) {
      Vec out(n);
      for (int i = 0; i < n; ++i) out[i] = divid[i].fn(t);
      return out;
    };
    spec.vol_fn = [vol_rows, n, d](double t, const Vec&) {
      Mat out(n, d);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) out(i, j) = vol_rows[i][j].fn(t);
      }
      return out;
    };
    spec.initial_prices = p0;
    spec.horizon = T;
    spec.validate();
    cfg.market = std::move(spec);
  }

  // ----- preference -----------------------------------------------------
  const auto& fam_e = p.get("preference", "family");
  const auto h_e = p.maybe("preference", "h");
  TimeExpr h{[](double) { return 1.0; }, 1.0};
  if (h_e) h = parse_time_expr(h_e->value, h_e->line, "h");
  double bequest = 0.0;
  if (const auto c_e = p.maybe("preference", "bequest")) {
    bequest = to_double(c_e->value, c_e->line, "bequest");
  }
  double alpha = 0.5;
  if (const auto a_e = p.maybe("preference", "alpha")) {
    alpha = to_double(a_e->value, a_e->line, "alpha");
  }

  using preferences::StatePreference;
  const std::string fam = fam_e.value;
  if (fam == "log") {
    cfg.preference =
        h.constant ? StatePreference::log_family(*h.constant, bequest, T)
                   : StatePreference::log_family(h.fn, bequest, T);
  } else if (fam == "power") {
    cfg.preference =
        h.constant ? StatePreference::power(alpha, *h.constant, bequest, T)
                   : StatePreference::power(alpha, h.fn, bequest, T);
  } else if (fam == "separable_log") {
    if (!h.constant) fail(fam_e.line, "separable families need constant h");
    cfg.preference = StatePreference::separable(
        [](double z) { return std::log(z); }, [](double z) { return 1.0 / z; },
        [](double y) { return 1.0 / y; }, *h.constant, bequest, T);
  } else if (fam == "separable_power") {
    if (!h.constant) fail(fam_e.line, "separable families need constant h");
    if (!(alpha > 0.0 && alpha < 1.0)) {
      fail(fam_e.line, "separable_power needs alpha in (0, 1)");
    }
    const double a = alpha;
    cfg.preference = StatePreference::separable(
        [a](double z) { return std::pow(z, a); },
        [a](double z) { return a * std::pow(z, a - 1.0); },
        [a](double y) { return std::pow(y / a, 1.0 / (a - 1.0)); },
        *h.constant, bequest, T);
  } else {
    fail(fam_e.line, "unknown preference family '" + fam + "'");
  }

  // ----- endowment ------------------------------------------------------
  std::string ekind = "zero";
  if (const auto k_e = p.maybe("endowment", "kind")) ekind = k_e->value;
  if (ekind == "zero") {
    cfg.endow = endowment::EndowmentModel::zero();
  } else {
    const auto& r_e = p.get("endowment", "rate");
    if (r_e.value.rfind("linear_in:", 0) == 0) {
      if (ekind != "markov") {
        fail(r_e.line, "linear_in rates need kind = markov");
      }
      const auto toks = split(r_e.value.substr(10), ',');
      if (toks.size() != 2 || toks[0].size() < 2 || toks[0][0] != 'P') {
        fail(r_e.line, "linear_in wants linear_in:P<k>,coef");
      }
      const int idx = static_cast<int>(
          to_u64(toks[0].substr(1), r_e.line, "rate"));
      if (idx < 1 || idx > n) fail(r_e.line, "stock index out of range");
      const double coef = to_double(toks[1], r_e.line, "rate");
      if (coef < 0.0) fail(r_e.line, "endowment rates must be nonnegative");
      cfg.endow = endowment::EndowmentModel::markov(
          [idx, coef](double, const Vec& pv) { return coef * pv[idx - 1]; });
    } else {
      TimeExpr eps = parse_time_expr(r_e.value, r_e.line, "rate");
      if (ekind == "deterministic") {
        cfg.endow = endowment::EndowmentModel::deterministic(eps.fn);
      } else if (ekind == "markov") {
        cfg.endow = endowment::EndowmentModel::markov(
            [fn = eps.fn](double t, const Vec&) { return fn(t); });
      } else {
        fail(r_e.line, "endowment kind is zero, deterministic or markov");
      }
    }
  }
  if (const auto e = p.maybe("endowment", "mc_inner_paths")) {
    cfg.endow.mc_inner_paths = to_u64(e->value, e->line, "mc_inner_paths");
  }
  if (const auto e = p.maybe("endowment", "mc_inner_steps")) {
    cfg.endow.mc_inner_steps = to_u64(e->value, e->line, "mc_inner_steps");
  }
  if (const auto e = p.maybe("endowment", "mc_seed")) {
    cfg.endow.mc_seed = to_u64(e->value, e->line, "mc_seed");
  }
  if (const auto e = p.maybe("endowment", "varpi_mode")) {
    if (e->value == "auto") {
      cfg.varpi_mode = endowment::VarpiMode::auto_select;
    } else if (e->value == "closed_form") {
      cfg.varpi_mode = endowment::VarpiMode::closed_form;
    } else if (e->value == "monte_carlo") {
      cfg.varpi_mode = endowment::VarpiMode::monte_carlo;
    } else {
      fail(e->line, "varpi_mode is auto, closed_form or monte_carlo");
    }
  }

  // ----- problem --------------------------------------------------------
  const auto& pk_e = p.get("problem", "kind");
  if (pk_e.value == "consumption_only") {
    cfg.problem_kind = ProblemKind::consumption_only;
  } else if (pk_e.value == "terminal_only") {
    cfg.problem_kind = ProblemKind::terminal_only;
  } else if (pk_e.value == "both") {
    cfg.problem_kind = ProblemKind::both;
  } else {
    fail(pk_e.line, "problem kind is consumption_only, terminal_only or both");
  }
  const auto& x_e = p.get("problem", "x");
  cfg.x = to_double(x_e.value, x_e.line, "x");
  if (const auto e = p.maybe("problem", "steps")) {
    cfg.steps = to_u64(e->value, e->line, "steps");
    if (cfg.steps < 1) fail(e->line, "steps must be >= 1");
  }
  if (const auto e = p.maybe("problem", "n_paths")) {
    cfg.n_paths = to_u64(e->value, e->line, "n_paths");
    if (cfg.n_paths < 1) fail(e->line, "n_paths must be >= 1");
  }
  if (const auto e = p.maybe("problem", "seed")) {
    cfg.seed = to_u64(e->value, e->line, "seed");
  }

  // ----- tolerances -----------------------------------------------------
  if (const auto e = p.maybe("tolerances", "z_crit")) {
    cfg.z_crit = to_double(e->value, e->line, "z_crit");
  }
  if (const auto e = p.maybe("tolerances", "oracle_tol")) {
    cfg.oracle_tol = to_double(e->value, e->line, "oracle_tol");
  }
  if (const auto e = p.maybe("tolerances", "homogeneity_tol")) {
    cfg.homogeneity_tol = to_double(e->value, e->line, "homogeneity_tol");
  }

  // ----- oracle ---------------------------------------------------------
  if (const auto e = p.maybe("oracle", "periods")) {
    cfg.oracle_periods =
        static_cast<int>(to_u64(e->value, e->line, "periods"));
  }
  if (const auto e = p.maybe("oracle", "up")) {
    cfg.oracle_up = to_double(e->value, e->line, "up");
  }
  if (const auto e = p.maybe("oracle", "down")) {
    cfg.oracle_down = to_double(e->value, e->line, "down");
  }
  if (const auto e = p.maybe("oracle", "gross_rate")) {
    cfg.oracle_gross_rate = to_double(e->value, e->line, "gross_rate");
  }

  // ----- verify ---------------------------------------------------------
  if (const auto e = p.maybe("verify", "n_paths")) {
    cfg.verify_paths = to_u64(e->value, e->line, "n_paths");
  }
  if (const auto e = p.maybe("verify", "steps")) {
    cfg.verify_steps = to_u64(e->value, e->line, "steps");
  }
  if (const auto e = p.maybe("verify", "self_test_bias")) {
    cfg.self_test_bias = to_double(e->value, e->line, "self_test_bias");
  }
  if (const auto e = p.maybe("verify", "paths_csv")) {
    cfg.paths_csv = e->value;
  }

  // ----- output ---------------------------------------------------------
  if (const auto e = p.maybe("output", "dir")) {
    cfg.out_dir = e->value;
  }

  p.reject_unused();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace optima::cli
