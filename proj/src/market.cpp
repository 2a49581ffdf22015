#include "optima/market.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <exception>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>

#include "optima/errors.hpp"
#include "optima/numerics.hpp"

namespace optima::market {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view tok, const char* what) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw ConfigError(std::string("bad numeric field in CSV: ") + what);
  }
  return v;
}

// Minimum-norm least squares for sigma * theta = excess.
Vec solve_theta(const Mat& sigma, const Vec& excess) {
  const double scale = std::max(1.0, excess.norm());
  if (sigma.rows() == 1) {
    const double nn = sigma.row(0).squaredNorm();
    if (nn == 0.0) {
      if (std::abs(excess[0]) > kRiskPriceTol * scale) {
        throw NoRiskPriceError("zero volatility row with nonzero excess return");
      }
      return Vec::Zero(sigma.cols());
    }
    return sigma.row(0).transpose() * (excess[0] / nn);
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(sigma);
  Vec theta = cod.solve(excess);
  const double residual = (sigma * theta - excess).norm();
  if (residual > kRiskPriceTol * scale) {
    throw NoRiskPriceError("excess returns not in the range of sigma");
  }
  return theta;
}

struct StepCoefficients {
  double rate = 0.0;
  Vec drift;
  Vec dividend;
  Mat vol;
  Vec theta;
  Vec log_drift;  // b_i - 0.5 * row_i(sigma) . row_i(sigma)
  double theta_sq = 0.0;
};

void check_finite(const StepCoefficients& c, double t) {
  const bool ok = std::isfinite(c.rate) && c.drift.allFinite() &&
                  c.dividend.allFinite() && c.vol.allFinite();
  if (!ok) {
    throw NonFiniteError("market coefficient evaluated non-finite at t=" +
                         std::to_string(t));
  }
}

void fill_derived(StepCoefficients& c) {
  c.theta = solve_theta(c.vol, c.drift + c.dividend -
                                   Vec::Constant(c.drift.size(), c.rate));
  c.theta_sq = c.theta.squaredNorm();
  c.log_drift = c.drift - 0.5 * c.vol.rowwise().squaredNorm();
}

}  // namespace

MarketSpec MarketSpec::constant(double r, const Vec& b, const Mat& sigma,
                                const Vec& delta, const Vec& p0_full,
                                double T) {
  MarketSpec spec;
  spec.n_stocks = static_cast<int>(b.size());
  spec.n_brownian = static_cast<int>(sigma.cols());
  spec.rate_fn = [r](double, const Vec&) { return r; };
  spec.drift_fn = [b](double, const Vec&) { return b; };
  spec.vol_fn = [sigma](double, const Vec&) { return sigma; };
  spec.dividend_fn = [delta](double, const Vec&) { return delta; };
  spec.initial_prices = p0_full;
  spec.horizon = T;
  spec.constants = ConstantCoefficients{r, b, delta, sigma};
  spec.validate();
  return spec;
}

void MarketSpec::validate() const {
  if (n_stocks < 1 || n_brownian < 1) {
    throw DomainError("market needs at least one stock and one factor");
  }
  if (initial_prices.size() != n_stocks + 1) {
    throw DomainError("initial_prices must have n_stocks + 1 entries");
  }
  if ((initial_prices.array() <= 0.0).any()) {
    throw DomainError("initial prices must be strictly positive");
  }
  if (!(horizon > 0.0)) {
    throw DomainError("horizon must be positive");
  }
  if (!rate_fn || !drift_fn || !vol_fn || !dividend_fn) {
    throw DomainError("all four coefficient functions must be set");
  }
  if (constants) {
    if (constants->drift.size() != n_stocks ||
        constants->dividend.size() != n_stocks ||
        constants->vol.rows() != n_stocks ||
        constants->vol.cols() != n_brownian) {
      throw DomainError("constant coefficient dimensions disagree");
    }
  }
}

Vec MarketSpec::stock_initials() const {
  return initial_prices.tail(n_stocks);
}

TimeGrid::TimeGrid(double start, double end, std::size_t n_steps) {
  if (!(end > start) || n_steps == 0) {
    throw DomainError("time grid needs end > start and n_steps >= 1");
  }
  times_.resize(n_steps + 1);
  const double dt = (end - start) / static_cast<double>(n_steps);
  for (std::size_t i = 0; i <= n_steps; ++i) {
    times_[i] = start + static_cast<double>(i) * dt;
  }
  times_.back() = end;
}

TimeGrid TimeGrid::from_times(std::vector<double> times) {
  if (times.size() < 2) {
    throw DomainError("time grid needs at least two nodes");
  }
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    if (!(times[i + 1] > times[i])) {
      throw DomainError("time grid must be strictly increasing");
    }
  }
  return TimeGrid(std::move(times));
}

TimeGrid TimeGrid::segment(std::size_t i0, std::size_t i1) const {
  if (i0 >= i1 || i1 >= times_.size()) {
    throw DomainError("invalid time grid segment");
  }
  return TimeGrid(std::vector<double>(times_.begin() + i0,
                                      times_.begin() + i1 + 1));
}

Vec PathBundle::price_vec(std::size_t path, std::size_t node) const {
  Vec p(n_stocks);
  const double* base = prices.data() + (path * n_nodes() + node) * n_stocks;
  for (int i = 0; i < n_stocks; ++i) p[i] = base[i];
  return p;
}

Vec market_price_of_risk(const MarketSpec& spec, double t, const Vec& p) {
  if ((p.array() <= 0.0).any()) {
    throw DomainError("market_price_of_risk: prices must be positive");
  }
  if (t < 0.0 || t > spec.horizon) {
    throw DomainError("market_price_of_risk: t outside [0, horizon]");
  }
  if (spec.constants) {
    const auto& c = *spec.constants;
    return solve_theta(c.vol, c.drift + c.dividend -
                                  Vec::Constant(c.drift.size(), c.rate));
  }
  const double r = spec.rate_fn(t, p);
  const Vec b = spec.drift_fn(t, p);
  const Vec delta = spec.dividend_fn(t, p);
  const Mat sigma = spec.vol_fn(t, p);
  if (!std::isfinite(r) || !b.allFinite() || !delta.allFinite() ||
      !sigma.allFinite()) {
    throw NonFiniteError("market coefficient evaluated non-finite");
  }
  return solve_theta(sigma, b + delta - Vec::Constant(b.size(), r));
}

std::vector<double> draw_path_normals(std::uint64_t seed, std::size_t path,
                                      std::size_t n_steps, int n_brownian) {
  num::SplitMix64 rng(num::path_seed(seed, path));
  std::vector<double> out(n_steps * static_cast<std::size_t>(n_brownian));
  for (double& x : out) x = rng.next_gaussian();
  return out;
}

namespace {

// One path of the log-Euler recursion. `normals` is row-major
// (step, component). Output slices must be sized already.
void run_path(const MarketSpec& spec, const TimeGrid& grid, const Vec& p0,
              const double* normals, double* prices, double* bond,
              double* expmart, double* deflator, double* theta_out) {
  const int n = spec.n_stocks;
  const int d = spec.n_brownian;
  const std::size_t steps = grid.n_steps();

  Vec p = p0;
  double b_acc = 1.0, z_acc = 1.0;
  for (int i = 0; i < n; ++i) prices[i] = p[i];
  bond[0] = 1.0;
  expmart[0] = 1.0;
  deflator[0] = 1.0;

  StepCoefficients local;
  const StepCoefficients* coeff = nullptr;
  StepCoefficients const_coeff;
  if (spec.constants) {
    const_coeff.rate = spec.constants->rate;
    const_coeff.drift = spec.constants->drift;
    const_coeff.dividend = spec.constants->dividend;
    const_coeff.vol = spec.constants->vol;
    fill_derived(const_coeff);
    coeff = &const_coeff;
  }

  for (std::size_t j = 0; j < steps; ++j) {
    const double t = grid.time(j);
    const double dt = grid.dt(j);
    if (!spec.constants) {
      local.rate = spec.rate_fn(t, p);
      local.drift = spec.drift_fn(t, p);
      local.dividend = spec.dividend_fn(t, p);
      local.vol = spec.vol_fn(t, p);
      check_finite(local, t);
      fill_derived(local);
      coeff = &local;
    }
    const StepCoefficients& c = *coeff;
    for (int k = 0; k < d; ++k) theta_out[j * d + k] = c.theta[k];

    const double* xi = normals + j * d;
    const double sqdt = std::sqrt(dt);
    double theta_dw = 0.0;
    for (int k = 0; k < d; ++k) theta_dw += c.theta[k] * xi[k] * sqdt;

    for (int i = 0; i < n; ++i) {
      double diff = 0.0;
      for (int k = 0; k < d; ++k) diff += c.vol(i, k) * xi[k] * sqdt;
      p[i] *= std::exp(c.log_drift[i] * dt + diff);
    }
    b_acc *= std::exp(c.rate * dt);
    z_acc *= std::exp(-theta_dw - 0.5 * c.theta_sq * dt);

    double* pr = prices + (j + 1) * n;
    for (int i = 0; i < n; ++i) pr[i] = p[i];
    bond[j + 1] = b_acc;
    expmart[j + 1] = z_acc;
    deflator[j + 1] = z_acc / b_acc;
    if (!std::isfinite(z_acc) || !std::isfinite(b_acc) || !p.allFinite()) {
      throw NonFiniteError("simulated state became non-finite");
    }
  }

  // theta at the terminal node, for reporting and feedback maps
  if (spec.constants) {
    for (int k = 0; k < d; ++k) theta_out[steps * d + k] = coeff->theta[k];
  } else {
    const Vec theta_T = market_price_of_risk(spec, grid.end(), p);
    for (int k = 0; k < d; ++k) theta_out[steps * d + k] = theta_T[k];
  }
}

PathBundle make_bundle(const MarketSpec& spec, const TimeGrid& grid,
                       std::size_t n_paths, std::uint64_t seed) {
  PathBundle out;
  out.grid = grid;
  out.n_stocks = spec.n_stocks;
  out.n_brownian = spec.n_brownian;
  out.n_paths = n_paths;
  out.seed = seed;
  const std::size_t nodes = grid.n_nodes();
  out.prices.resize(n_paths * nodes * spec.n_stocks);
  out.bond.resize(n_paths * nodes);
  out.expmart.resize(n_paths * nodes);
  out.deflator.resize(n_paths * nodes);
  out.theta.resize(n_paths * nodes * spec.n_brownian);
  return out;
}

}  // namespace

PathBundle simulate_paths(const MarketSpec& spec, const TimeGrid& grid,
                          const Vec& p0, std::size_t n_paths,
                          std::uint64_t seed) {
  spec.validate();
  if (p0.size() != spec.n_stocks || (p0.array() <= 0.0).any()) {
    throw DomainError("simulate_paths: p0 must be a positive n-vector");
  }
  if (grid.start() < 0.0 || grid.end() > spec.horizon + 1e-12) {
    throw DomainError("simulate_paths: grid outside [0, horizon]");
  }
  if (n_paths == 0) throw DomainError("simulate_paths: n_paths must be >= 1");

  PathBundle out = make_bundle(spec, grid, n_paths, seed);
  const std::size_t nodes = grid.n_nodes();
  const std::size_t steps = grid.n_steps();
  const int n = spec.n_stocks;
  const int d = spec.n_brownian;

  std::exception_ptr failure;
  std::mutex failure_mx;
  num::parallel_for_chunks(n_paths, [&](std::size_t begin, std::size_t end) {
    try {
      std::vector<double> normals(steps * static_cast<std::size_t>(d));
      for (std::size_t k = begin; k < end; ++k) {
        num::SplitMix64 rng(num::path_seed(seed, k));
        for (double& x : normals) x = rng.next_gaussian();
        run_path(spec, grid, p0, normals.data(),
                 out.prices.data() + k * nodes * n, out.bond.data() + k * nodes,
                 out.expmart.data() + k * nodes,
                 out.deflator.data() + k * nodes,
                 out.theta.data() + k * nodes * d);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mx);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return out;
}

PathBundle simulate_with_increments(
    const MarketSpec& spec, const TimeGrid& grid, const std::vector<Vec>& starts,
    const std::vector<std::vector<double>>& normals) {
  spec.validate();
  const std::size_t n_paths = normals.size();
  if (n_paths == 0) throw DomainError("no increment blocks supplied");
  if (starts.size() != 1 && starts.size() != n_paths) {
    throw DomainError("starts must hold one vector or one per path");
  }
  const std::size_t steps = grid.n_steps();
  const std::size_t want = steps * static_cast<std::size_t>(spec.n_brownian);
  for (const auto& blk : normals) {
    if (blk.size() != want) {
      throw DomainError("increment block has wrong size");
    }
  }

  PathBundle out = make_bundle(spec, grid, n_paths, 0);
  const std::size_t nodes = grid.n_nodes();
  const int n = spec.n_stocks;
  const int d = spec.n_brownian;
  std::exception_ptr failure;
  std::mutex failure_mx;
  num::parallel_for_chunks(n_paths, [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t k = begin; k < end; ++k) {
        const Vec& p0 = starts.size() == 1 ? starts[0] : starts[k];
        run_path(spec, grid, p0, normals[k].data(),
                 out.prices.data() + k * nodes * n, out.bond.data() + k * nodes,
                 out.expmart.data() + k * nodes,
                 out.deflator.data() + k * nodes,
                 out.theta.data() + k * nodes * d);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mx);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return out;
}

PathBundle take_paths(const PathBundle& bundle, std::size_t n_keep) {
  if (n_keep >= bundle.n_paths) return bundle;
  PathBundle out;
  out.grid = bundle.grid;
  out.n_stocks = bundle.n_stocks;
  out.n_brownian = bundle.n_brownian;
  out.n_paths = n_keep;
  out.seed = bundle.seed;
  const std::size_t nodes = bundle.n_nodes();
  out.prices.assign(bundle.prices.begin(),
                    bundle.prices.begin() + n_keep * nodes * bundle.n_stocks);
  out.bond.assign(bundle.bond.begin(), bundle.bond.begin() + n_keep * nodes);
  out.expmart.assign(bundle.expmart.begin(),
                     bundle.expmart.begin() + n_keep * nodes);
  out.deflator.assign(bundle.deflator.begin(),
                      bundle.deflator.begin() + n_keep * nodes);
  if (!bundle.theta.empty()) {
    out.theta.assign(bundle.theta.begin(),
                     bundle.theta.begin() +
                         n_keep * nodes * bundle.n_brownian);
  }
  return out;
}

double restart_consistency_check(const MarketSpec& spec, const TimeGrid& grid,
                                 const Vec& p0, std::uint64_t seed,
                                 std::size_t split_index,
                                 std::optional<std::uint64_t> restart_seed,
                                 std::size_t n_paths) {
  const std::size_t steps = grid.n_steps();
  if (steps < 2) throw DomainError("grid has no interior node to split at");
  if (split_index == 0) split_index = steps / 2;
  if (split_index >= steps) {
    throw DomainError("split index must name an interior node");
  }
  const int d = spec.n_brownian;
  const std::uint64_t seed2 = restart_seed.value_or(seed);

  std::vector<std::vector<double>> full(n_paths), seg1(n_paths), seg2(n_paths);
  for (std::size_t k = 0; k < n_paths; ++k) {
    full[k] = draw_path_normals(seed, k, steps, d);
    const auto alt = draw_path_normals(seed2, k, steps, d);
    seg1[k].assign(alt.begin(), alt.begin() + split_index * d);
    seg2[k].assign(alt.begin() + split_index * d, alt.end());
  }

  const PathBundle one_shot =
      simulate_with_increments(spec, grid, {p0}, full);
  const PathBundle first =
      simulate_with_increments(spec, grid.segment(0, split_index), {p0}, seg1);
  std::vector<Vec> mids(n_paths);
  for (std::size_t k = 0; k < n_paths; ++k) {
    mids[k] = first.price_vec(k, split_index);
  }
  const PathBundle second = simulate_with_increments(
      spec, grid.segment(split_index, steps), mids, seg2);

  double dev = 0.0;
  for (std::size_t k = 0; k < n_paths; ++k) {
    for (int i = 0; i < spec.n_stocks; ++i) {
      dev = std::max(dev, std::abs(one_shot.price(k, steps, i) -
                                   second.price(k, second.grid.n_steps(), i)));
    }
  }
  return dev;
}

void PathBundle::write_csv(std::ostream& os) const {
  std::string line = "time,path_id";
  for (int i = 1; i <= n_stocks; ++i) {
    line += ",P_" + std::to_string(i);
  }
  line += ",B,Z,H\n";
  os << line;
  for (std::size_t k = 0; k < n_paths; ++k) {
    for (std::size_t j = 0; j < n_nodes(); ++j) {
      line.clear();
      append_double(line, grid.time(j));
      line += ',';
      line += std::to_string(k);
      for (int i = 0; i < n_stocks; ++i) {
        line += ',';
        append_double(line, price(k, j, i));
      }
      line += ',';
      append_double(line, bond_at(k, j));
      line += ',';
      append_double(line, expmart_at(k, j));
      line += ',';
      append_double(line, deflator_at(k, j));
      line += '\n';
      os << line;
    }
  }
}

PathBundle read_csv_impl(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("empty paths CSV");
  int n_stocks = 0;
  {
    std::stringstream hs(header);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(hs, col, ',')) cols.push_back(col);
    for (const auto& c : cols) {
      if (c.rfind("P_", 0) == 0) ++n_stocks;
    }
    if (cols.size() != static_cast<std::size_t>(n_stocks) + 5 ||
        cols[0] != "time" || cols[1] != "path_id") {
      throw ConfigError("unexpected paths CSV header");
    }
  }

  struct Row {
    double t;
    std::vector<double> vals;  // P_1..P_n, B, Z, H
  };
  std::map<std::size_t, std::vector<Row>> by_path;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string tok;
    std::vector<std::string> toks;
    while (std::getline(ls, tok, ',')) toks.push_back(tok);
    if (toks.size() != static_cast<std::size_t>(n_stocks) + 5) {
      throw ConfigError("paths CSV row " + std::to_string(lineno) +
                        " has wrong arity");
    }
    Row row;
    row.t = parse_double(toks[0], "time");
    const auto pid = static_cast<std::size_t>(parse_double(toks[1], "path_id"));
    for (std::size_t c = 2; c < toks.size(); ++c) {
      row.vals.push_back(parse_double(toks[c], "value"));
    }
    by_path[pid].push_back(std::move(row));
  }
  if (by_path.empty()) throw ConfigError("paths CSV holds no rows");

  const auto& first = by_path.begin()->second;
  std::vector<double> times;
  times.reserve(first.size());
  for (const auto& r : first) times.push_back(r.t);

  PathBundle out;
  out.grid = TimeGrid::from_times(times);
  out.n_stocks = n_stocks;
  out.n_brownian = 0;
  out.n_paths = by_path.size();
  const std::size_t nodes = out.grid.n_nodes();
  out.prices.resize(out.n_paths * nodes * n_stocks);
  out.bond.resize(out.n_paths * nodes);
  out.expmart.resize(out.n_paths * nodes);
  out.deflator.resize(out.n_paths * nodes);

  std::size_t k = 0;
  for (const auto& [pid, rows] : by_path) {
    (void)pid;
    if (rows.size() != nodes) {
      throw ConfigError("paths CSV: ragged path lengths");
    }
    for (std::size_t j = 0; j < nodes; ++j) {
      const auto& v = rows[j].vals;
      for (int i = 0; i < n_stocks; ++i) {
        out.prices[(k * nodes + j) * n_stocks + i] = v[i];
      }
      out.bond[k * nodes + j] = v[n_stocks];
      out.expmart[k * nodes + j] = v[n_stocks + 1];
      out.deflator[k * nodes + j] = v[n_stocks + 2];
    }
    ++k;
  }
  return out;
}

PathBundle PathBundle::read_csv(std::istream& is) { return read_csv_impl(is); }

}  // namespace optima::market
