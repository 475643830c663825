#pragma once

#include <atomic>
#include <chrono>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "igc/data/io.hpp"
#include "igc/datagen/dgp.hpp"
#include "igc/estimators/config.hpp"
#include "igc/eval/metrics.hpp"

namespace igc::eval {

/// A grid of DGP cells x horizons x seeds, each evaluated for every estimator on shared data.
struct BenchmarkSpec {
  DgpConfig dgp;
  std::vector<double> gamma, rho_ov, omega;  // tumor grid; empty keeps the DGP value
  std::vector<double> corruption{0.0};       // pseudo-outcome bias for igc, in units of sd(Y_train)
  std::vector<EstimatorKind> estimators{EstimatorKind::igc};
  std::vector<std::size_t> taus{2};
  config::json plan;  // rows >= max tau; null means treat at every step
  std::size_t n_train = 500, n_test = 200, n_queries = 100, min_t = 1;
  std::uint64_t seed = 0;
  std::size_t n_seeds = 3;
  BackboneConfig backbone;
  std::size_t head_hidden = 16;
  TrainConfig train;
  IpwConfig ipw;
  GcompConfig gcomp;
  std::size_t jobs = 1;
  bool record_runtime = false;  // wall-clock times make the CSV non-reproducible
};

struct Cell {
  std::optional<double> gamma, rho_ov, omega;
  std::size_t tau = 0;
};

struct ResultRow {
  std::string estimator;  // kind, or kind@corruption=c for corruption sweeps
  std::string dgp;
  Cell cell;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
  double rmse = std::nan(""), rmse_norm = std::nan("");
  std::optional<double> cv_group;
  double runtime_s = 0.0;
  std::size_t n_queries = 0;
  std::string error;  // non-empty when the run failed
  bool ok() const { return error.empty(); }
};

struct SweepResult {
  std::string config_hash;
  std::vector<ResultRow> rows;
  config::json summary;
};

inline std::vector<Cell> cells(const BenchmarkSpec& s) {
  auto axis = [](const std::vector<double>& v) {
    std::vector<std::optional<double>> out;
    for (double x : v) out.push_back(x);
    if (out.empty()) out.push_back(std::nullopt);
    return out;
  };
  std::vector<Cell> out;
  for (auto g : axis(s.gamma))
    for (auto r : axis(s.rho_ov))
      for (auto w : axis(s.omega))
        for (auto tau : s.taus) out.push_back(Cell{g, r, w, tau});
  return out;
}

inline DgpConfig cell_dgp(const BenchmarkSpec& s, const Cell& c) {
  DgpConfig d = s.dgp;
  if (c.gamma) d.tumor.gamma = *c.gamma;
  if (c.rho_ov) d.tumor.rho_ov = *c.rho_ov;
  if (c.omega) d.tumor.omega = *c.omega;
  return d;
}

/// Estimator variants of one cell: every estimator, with igc repeated per corruption level.
struct Variant {
  EstimatorKind kind;
  double corruption = 0.0;
  std::string label;
};

inline std::vector<Variant> variants(const BenchmarkSpec& s) {
  const bool sweep = s.corruption.size() > 1 || s.corruption.at(0) != 0.0;
  std::vector<Variant> out;
  for (auto k : s.estimators) {
    if (k == EstimatorKind::igc && sweep) {
      for (double c : s.corruption) out.push_back({k, c, "igc@corruption=" + io::format_double(c)});
    } else {
      out.push_back({k, 0.0, to_string(k)});
    }
  }
  return out;
}

inline void validate(const BenchmarkSpec& s) {
  s.dgp.validate();
  if (s.estimators.empty()) throw ConfigError("estimators", "need at least one estimator");
  if (s.taus.empty()) throw ConfigError("taus", "need at least one horizon");
  for (auto t : s.taus)
    if (t < 1) throw ConfigError("taus", "horizons must be >= 1");
  if (s.corruption.empty()) throw ConfigError("corruption", "need at least one level (use [0])");
  for (double c : s.corruption)
    if (c < 0.0) throw ConfigError("corruption", "levels must be >= 0");
  if (s.dgp.kind != DgpKind::tumor && !(s.gamma.empty() && s.rho_ov.empty() && s.omega.empty()))
    throw ConfigError("grid", "gamma, rho_ov and omega grids apply to the tumor dgp only");
  if (s.n_train < 2 || s.n_test < 1 || s.n_queries < 1) throw ConfigError("n_train", "dataset and query counts must be positive");
  if (s.n_seeds < 1) throw ConfigError("n_seeds", "must be >= 1");
  if (s.jobs < 1) throw ConfigError("jobs", "must be >= 1");
  const auto max_tau = *std::max_element(s.taus.begin(), s.taus.end());
  parse_plan(s.plan, max_tau, s.dgp.dims().a, "plan");
}

inline config::json to_json(const BenchmarkSpec& s) {
  config::json est = config::json::array();
  for (auto k : s.estimators) est.push_back(to_string(k));
  return {{"dgp", to_json(s.dgp)},
          {"gamma", s.gamma},
          {"rho_ov", s.rho_ov},
          {"omega", s.omega},
          {"corruption", s.corruption},
          {"estimators", est},
          {"taus", s.taus},
          {"plan", s.plan},
          {"n_train", s.n_train},
          {"n_test", s.n_test},
          {"n_queries", s.n_queries},
          {"min_t", s.min_t},
          {"seed", s.seed},
          {"n_seeds", s.n_seeds},
          {"backbone", igc::to_json(s.backbone)},
          {"head_hidden", s.head_hidden},
          {"train", train_to_json(s.train)},
          {"ipw", ipw_to_json(s.ipw)},
          {"gcomp", gcomp_to_json(s.gcomp)},
          {"record_runtime", s.record_runtime}};
}

inline BenchmarkSpec benchmark_spec_from_json(const config::json& j, const std::string& path = "") {
  config::Section s(j, path);
  BenchmarkSpec b;
  b.dgp = dgp_config_from_json(s.raw("dgp").is_null() ? config::json{{"kind", "tumor"}} : s.raw("dgp"),
                               config::join(path, "dgp"));
  s.get("gamma", b.gamma);
  s.get("rho_ov", b.rho_ov);
  s.get("omega", b.omega);
  s.get("corruption", b.corruption);
  if (s.has("estimators")) {
    b.estimators.clear();
    const auto names = s.require<std::vector<std::string>>("estimators");
    for (std::size_t i = 0; i < names.size(); ++i)
      b.estimators.push_back(
          estimator_kind_from_string(names[i], config::join(path, "estimators") + "[" + std::to_string(i) + "]"));
  }
  s.get("taus", b.taus);
  b.plan = s.raw("plan");
  s.get("n_train", b.n_train);
  s.get("n_test", b.n_test);
  s.get("n_queries", b.n_queries);
  s.get("min_t", b.min_t);
  s.get("seed", b.seed);
  s.get("n_seeds", b.n_seeds);
  b.backbone = parse_backbone(s.raw("backbone"), config::join(path, "backbone"));
  s.get("head_hidden", b.head_hidden);
  b.train = parse_train(s.raw("train"), config::join(path, "train"));
  b.ipw = parse_ipw(s.raw("ipw"), config::join(path, "ipw"));
  b.gcomp = parse_gcomp(s.raw("gcomp"), config::join(path, "gcomp"));
  s.get("jobs", b.jobs);
  s.get("record_runtime", b.record_runtime);
  s.finish();
  validate(b);
  return b;
}

/// Seeds of one (cell, seed) run. Test data and queries use streams disjoint from training.
struct RunSeeds {
  std::uint64_t train_data, test_data, queries, init, fit, rollout;
  explicit RunSeeds(std::uint64_t seed) {
    const Rng root(seed, "sweep");
    train_data = root.fork("train-data").next_u64();
    test_data = root.fork("test-data").next_u64();
    queries = root.fork("queries").next_u64();
    init = root.fork("init").next_u64();
    fit = root.fork("fit").next_u64();
    rollout = root.fork("rollout").next_u64();
  }
};

/// Runs every variant on one (cell, seed); failures are recorded per row.
inline std::vector<ResultRow> run_cell(const BenchmarkSpec& s, const Cell& cell, std::uint64_t seed) {
  const DgpConfig dgp = cell_dgp(s, cell);
  const RunSeeds rs(seed);
  const auto vs = variants(s);
  std::vector<ResultRow> rows;
  for (const auto& v : vs) {
    ResultRow r;
    r.estimator = v.label;
    r.dgp = to_string(dgp.kind);
    r.cell = cell;
    r.n_train = s.n_train;
    r.seed = seed;
    rows.push_back(r);
  }
  try {
    const Dataset train = simulate(dgp, s.n_train, rs.train_data);
    const Dataset test = simulate(dgp, s.n_test, rs.test_data, s.n_train);
    const Matrix abar = parse_plan(s.plan, cell.tau, dgp.dims().a, "plan");
    Rng qrng(rs.queries, "queries");
    const auto qs = sample_queries(test, abar, s.n_queries, qrng, make_oracle(dgp, rs.test_data), s.min_t);
    std::vector<double> oracle;
    for (const auto& q : qs) oracle.insert(oracle.end(), q.oracle.begin(), q.oracle.end());
    const double sd_y = Scaler::fit(train).y.sd.at(0);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const auto start = std::chrono::steady_clock::now();
      try {
        EstimatorSpec es;
        es.kind = vs[i].kind;
        es.backbone = s.backbone;
        es.tau = cell.tau;
        es.head_hidden = s.head_hidden;
        es.train = s.train;
        es.train.abar = abar;
        es.train.seed = rs.fit;
        es.train.corruption = vs[i].corruption * sd_y;
        es.ipw = s.ipw;
        es.gcomp = s.gcomp;
        es.gcomp.seed = rs.rollout;
        es.seed = Rng(rs.init, "estimator").fork(to_string(vs[i].kind)).next_u64();
        const auto est = fit_estimator(es, train);
        std::vector<double> pred;
        for (const auto& p : est->predict(test, qs)) pred.insert(pred.end(), p.begin(), p.end());
        rows[i].rmse = rmse(pred, oracle);
        rows[i].rmse_norm = rmse(pred, oracle, dgp.outcome_scale());
        rows[i].n_queries = qs.size();
      } catch (const std::exception& e) {
        rows[i].error = e.what();
      }
      rows[i].runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  } catch (const std::exception& e) {
    for (auto& r : rows) r.error = std::string("data generation failed: ") + e.what();
  }
  return rows;
}

inline std::string cell_key(const ResultRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string("NA"); };
  return r.dgp + "|gamma=" + opt(r.cell.gamma) + "|rho_ov=" + opt(r.cell.rho_ov) + "|omega=" + opt(r.cell.omega) +
         "|tau=" + std::to_string(r.cell.tau);
}

namespace detail {

inline config::json opt_json(const std::optional<double>& v) { return v ? config::json(*v) : config::json(nullptr); }

/// Per cell: mean/std/cv of RMSE for each estimator, and the relative improvement of igc
/// over the best of the other estimators.
inline config::json summarize(std::vector<ResultRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string key = cell_key(rows[i]);
    if (!groups.count(key)) order.push_back(key);
    if (rows[i].ok()) groups[key][rows[i].estimator].push_back(i);
    else groups[key][rows[i].estimator];
  }
  config::json cells_json = config::json::array();
  for (const auto& key : order) {
    config::json est = config::json::object();
    std::map<std::string, double> means;
    for (auto& [label, idx] : groups[key]) {
      std::vector<double> v, vn;
      for (auto i : idx) {
        v.push_back(rows[i].rmse);
        vn.push_back(rows[i].rmse_norm);
      }
      config::json e = {{"n", v.size()}};
      std::optional<double> cv;
      if (!v.empty()) {
        e["mean"] = mean(v);
        e["mean_norm"] = mean(vn);
        means[label] = mean(v);
      }
      if (v.size() >= 2) {
        e["std"] = sample_std(v);
        e["std_norm"] = sample_std(vn);
        cv = coefficient_of_variation(v);
      }
      e["cv"] = opt_json(cv);
      for (auto i : idx) rows[i].cv_group = cv;
      est[label] = e;
    }
    config::json c = {{"cell", key}, {"estimators", est}};
    if (means.count("igc")) {
      std::string best;
      for (const auto& [label, m] : means)
        if (label.rfind("igc@", 0) != 0 && label != "igc" && (best.empty() || m < means[best])) best = label;
      if (!best.empty())
        c["relative_improvement"] = {{"baseline", best},
                                     {"percent", opt_json(relative_improvement(means[best], means["igc"]))}};
    }
    cells_json.push_back(c);
  }
  config::json failures = config::json::array();
  for (const auto& r : rows)
    if (!r.ok()) failures.push_back({{"cell", cell_key(r)}, {"estimator", r.estimator}, {"seed", r.seed}, {"error", r.error}});
  return {{"cells", cells_json}, {"failures", failures}};
}

}  // namespace detail

/// Runs all (cell, seed) pairs on up to spec.jobs threads; the row order and contents depend on
/// the spec only.
inline SweepResult run_sweep(const BenchmarkSpec& s) {
  validate(s);
  const auto cs = cells(s);
  std::vector<std::pair<std::size_t, std::uint64_t>> tasks;
  for (std::size_t c = 0; c < cs.size(); ++c)
    for (std::size_t k = 0; k < s.n_seeds; ++k) tasks.emplace_back(c, s.seed + k);
  std::vector<std::vector<ResultRow>> out(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < tasks.size();) out[i] = run_cell(s, cs[tasks[i].first], tasks[i].second);
  };
  const std::size_t n_threads = std::min(s.jobs, tasks.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  SweepResult r;
  r.config_hash = io::config_hash(to_json(s));
  for (auto& rows : out)
    for (auto& row : rows) r.rows.push_back(std::move(row));
  r.summary = detail::summarize(r.rows);
  r.summary["config_hash"] = r.config_hash;
  r.summary["seed"] = s.seed;
  return r;
}

inline constexpr const char* kSweepHeader = "estimator,dgp,gamma,rho,omega,tau,N,seed,rmse,rmse_norm,cv_group,runtime_s";

inline std::string sweep_csv(const SweepResult& r, std::uint64_t seed, bool record_runtime) {
  auto num = [](double v) { return std::isfinite(v) ? io::format_double(v) : std::string("NA"); };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); };
  std::ostringstream os;
  os << "# config_hash=" << r.config_hash << " seed=" << seed << "\n" << kSweepHeader << "\n";
  for (const auto& row : r.rows)
    os << row.estimator << ',' << row.dgp << ',' << opt(row.cell.gamma) << ',' << opt(row.cell.rho_ov) << ','
       << opt(row.cell.omega) << ',' << row.cell.tau << ',' << row.n_train << ',' << row.seed << ','
       << num(row.rmse) << ',' << num(row.rmse_norm) << ',' << opt(row.cv_group) << ','
       << (record_runtime ? num(row.runtime_s) : std::string("NA")) << "\n";
  return os.str();
}

}  // namespace igc::eval
