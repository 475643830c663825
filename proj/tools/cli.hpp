#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "igc/data/io.hpp"
#include "igc/eval/oracle_check.hpp"
#include "igc/eval/sweep.hpp"

namespace igc::cli {

namespace fs = std::filesystem;
using config::json;

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kCheckFailed = 3 };

/// A missing or unreadable input file.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Artifacts that do not belong together (hash mismatch).
class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSection {
  std::size_t n = 500, n_test = 200, n_queries = 100, min_t = 1, tau = 2;
  json plan;
};

struct EstimatorSection {
  EstimatorKind kind = EstimatorKind::igc;
  std::optional<std::size_t> tau;  // defaults to data.tau
  std::size_t head_hidden = 16;
  BackboneConfig backbone;
  TrainConfig train;
  IpwConfig ipw;
  GcompConfig gcomp;
  json plan;  // defaults to data.plan
};

struct Paths {
  std::string dataset, test_dataset, queries, csv, checkpoint, losses, predictions, results, summary;
};

/// Shared configuration file of all subcommands; each reads the sections it needs.
struct RunConfig {
  std::uint64_t seed = 0;
  DgpConfig dgp;
  DataSection data;
  EstimatorSection estimator;
  std::optional<eval::BenchmarkSpec> benchmark;
  Paths paths;
  fs::path base;  // relative paths resolve against the config file's directory
};

inline RunConfig parse_run_config(const json& j, const fs::path& base) {
  config::Section s(j, "");
  RunConfig c;
  c.base = base;
  s.get("seed", c.seed);
  if (!s.raw("dgp").is_null()) c.dgp = dgp_config_from_json(s.raw("dgp"), "dgp");
  if (const json& d = s.raw("data"); !d.is_null()) {
    config::Section ds(d, "data");
    ds.get("n", c.data.n);
    ds.get("n_test", c.data.n_test);
    ds.get("n_queries", c.data.n_queries);
    ds.get("min_t", c.data.min_t);
    ds.get("tau", c.data.tau);
    c.data.plan = ds.raw("plan");
    ds.finish();
    if (c.data.n < 1 || c.data.tau < 1) throw ConfigError("data", "n and tau must be positive");
  }
  if (const json& e = s.raw("estimator"); !e.is_null()) {
    config::Section es(e, "estimator");
    std::string kind = "igc";
    es.get("kind", kind);
    c.estimator.kind = estimator_kind_from_string(kind, "estimator.kind");
    if (es.has("tau")) c.estimator.tau = es.require<std::size_t>("tau");
    es.get("head_hidden", c.estimator.head_hidden);
    c.estimator.backbone = parse_backbone(es.raw("backbone"), "estimator.backbone");
    c.estimator.train = parse_train(es.raw("train"), "estimator.train");
    c.estimator.ipw = parse_ipw(es.raw("ipw"), "estimator.ipw");
    c.estimator.gcomp = parse_gcomp(es.raw("gcomp"), "estimator.gcomp");
    c.estimator.plan = es.raw("plan");
    es.finish();
  }
  if (const json& b = s.raw("benchmark"); !b.is_null()) c.benchmark = eval::benchmark_spec_from_json(b, "benchmark");
  if (const json& p = s.raw("paths"); !p.is_null()) {
    config::Section ps(p, "paths");
    ps.get("dataset", c.paths.dataset);
    ps.get("test_dataset", c.paths.test_dataset);
    ps.get("queries", c.paths.queries);
    ps.get("csv", c.paths.csv);
    ps.get("checkpoint", c.paths.checkpoint);
    ps.get("losses", c.paths.losses);
    ps.get("predictions", c.paths.predictions);
    ps.get("results", c.paths.results);
    ps.get("summary", c.paths.summary);
    ps.finish();
  }
  s.finish();
  const std::size_t tau = c.estimator.tau.value_or(c.data.tau);
  if (tau < 1) throw ConfigError("estimator.tau", "must be >= 1");
  parse_plan(c.data.plan, c.data.tau, c.dgp.dims().a, "data.plan");
  return c;
}

inline json to_json(const RunConfig& c) {
  json j = {{"seed", c.seed},
            {"dgp", to_json(c.dgp)},
            {"data",
             {{"n", c.data.n},
              {"n_test", c.data.n_test},
              {"n_queries", c.data.n_queries},
              {"min_t", c.data.min_t},
              {"tau", c.data.tau},
              {"plan", c.data.plan}}},
            {"estimator",
             {{"kind", to_string(c.estimator.kind)},
              {"tau", c.estimator.tau.value_or(c.data.tau)},
              {"head_hidden", c.estimator.head_hidden},
              {"backbone", igc::to_json(c.estimator.backbone)},
              {"train", train_to_json(c.estimator.train)},
              {"ipw", ipw_to_json(c.estimator.ipw)},
              {"gcomp", gcomp_to_json(c.estimator.gcomp)},
              {"plan", c.estimator.plan}}}};
  if (c.benchmark) j["benchmark"] = eval::to_json(*c.benchmark);
  return j;
}

/// Identifies the data-generation settings; every dataset and query file carries it.
inline std::string data_hash(const RunConfig& c) {
  return io::config_hash({{"seed", c.seed}, {"dgp", to_json(c.dgp)}, {"data", to_json(c).at("data")}});
}

inline fs::path resolve(const RunConfig& c, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || c.base.empty() ? path : (c.base / path).lexically_normal();
}

inline fs::path input_path(const RunConfig& c, const std::string& p, const std::string& field) {
  if (p.empty()) throw ConfigError(field, "path is required for this command");
  const fs::path path = resolve(c, p);
  if (!fs::exists(path)) throw InputError(field + ": no such file " + path.string());
  return path;
}

inline fs::path output_path(const RunConfig& c, const std::string& p, const std::string& field) {
  if (p.empty()) throw ConfigError(field, "path is required for this command");
  const fs::path path = resolve(c, p);
  const fs::path dir = path.parent_path();
  std::error_code ec;
  if (!dir.empty()) fs::create_directories(dir, ec);
  if (!dir.empty() && !fs::is_directory(dir)) throw ConfigError(field, "cannot create output directory " + dir.string());
  return path;
}

inline json artifact_meta(const RunConfig& c, const std::string& kind) {
  return {{"artifact", kind}, {"config_hash", io::config_hash(to_json(c))}, {"seed", c.seed}};
}

inline std::pair<Dataset, json> load_dataset(const fs::path& p) { return io::dataset_from_jsonl(io::read_file(p)); }

// ---------- subcommands ----------

inline int gen_data(const RunConfig& c, std::ostream& out) {
  const fs::path train_p = output_path(c, c.paths.dataset, "paths.dataset");
  const std::optional<fs::path> test_p =
      c.paths.test_dataset.empty() ? std::nullopt : std::optional(output_path(c, c.paths.test_dataset, "paths.test_dataset"));
  const std::optional<fs::path> query_p =
      c.paths.queries.empty() ? std::nullopt : std::optional(output_path(c, c.paths.queries, "paths.queries"));
  const std::optional<fs::path> csv_p =
      c.paths.csv.empty() ? std::nullopt : std::optional(output_path(c, c.paths.csv, "paths.csv"));
  if (query_p && !test_p) throw ConfigError("paths.test_dataset", "queries are drawn from the test dataset; set its path");

  const Rng root(c.seed, "gen-data");
  const std::uint64_t train_seed = root.fork("train").next_u64(), test_seed = root.fork("test").next_u64();
  json meta = artifact_meta(c, "dataset");
  meta["data_hash"] = data_hash(c);
  meta["dgp"] = to_json(c.dgp);

  const Dataset train = simulate(c.dgp, c.data.n, train_seed);
  meta["split"] = "train";
  io::atomic_write(train_p, io::dataset_to_jsonl(train, meta));
  if (csv_p) io::atomic_write(*csv_p, io::dataset_to_csv(train));
  out << "wrote " << train.size() << " trajectories to " << train_p.string() << "\n";
  if (test_p) {
    const Dataset test = simulate(c.dgp, c.data.n_test, test_seed, c.data.n);
    meta["split"] = "test";
    io::atomic_write(*test_p, io::dataset_to_jsonl(test, meta));
    out << "wrote " << test.size() << " trajectories to " << test_p->string() << "\n";
    if (query_p) {
      const Matrix abar = parse_plan(c.data.plan, c.data.tau, c.dgp.dims().a, "data.plan");
      Rng qrng(root.fork("queries").next_u64(), "queries");
      const auto qs = sample_queries(test, abar, c.data.n_queries, qrng, make_oracle(c.dgp, test_seed), c.data.min_t);
      json qmeta = artifact_meta(c, "queries");
      qmeta["data_hash"] = data_hash(c);
      io::atomic_write(*query_p, io::queries_to_jsonl(qs, qmeta));
      out << "wrote " << qs.size() << " queries to " << query_p->string() << "\n";
    }
  }
  return kOk;
}

inline EstimatorSpec estimator_spec(const RunConfig& c, const Dataset& d) {
  EstimatorSpec s;
  s.kind = c.estimator.kind;
  s.backbone = c.estimator.backbone;
  s.tau = c.estimator.tau.value_or(c.data.tau);
  s.head_hidden = c.estimator.head_hidden;
  s.train = c.estimator.train;
  const json& plan = c.estimator.plan.is_null() ? c.data.plan : c.estimator.plan;
  s.train.abar = parse_plan(plan, s.tau, d.dims.a, c.estimator.plan.is_null() ? "data.plan" : "estimator.plan");
  const Rng root(c.seed, "estimator");
  s.train.seed = root.fork("fit").next_u64();
  s.seed = root.fork("init").next_u64();
  s.ipw = c.estimator.ipw;
  s.gcomp = c.estimator.gcomp;
  s.gcomp.seed = root.fork("rollout").next_u64();
  return s;
}

inline int train_cmd(const RunConfig& c, std::ostream& out) {
  const fs::path data_p = input_path(c, c.paths.dataset, "paths.dataset");
  const fs::path ckpt_p = output_path(c, c.paths.checkpoint, "paths.checkpoint");
  const std::optional<fs::path> loss_p =
      c.paths.losses.empty() ? std::nullopt : std::optional(output_path(c, c.paths.losses, "paths.losses"));
  const auto [d, dmeta] = load_dataset(data_p);
  const auto est = fit_estimator(estimator_spec(c, d), d);
  json meta = artifact_meta(c, "checkpoint");
  meta["data_hash"] = dmeta.value("data_hash", "");
  meta["estimator"] = to_json(c).at("estimator");
  io::atomic_write(ckpt_p, est->checkpoint(meta).dump() + "\n");
  out << "trained " << to_string(est->kind()) << " on " << d.size() << " trajectories; checkpoint " << ckpt_p.string()
      << "\n";
  for (const auto& w : est->warnings()) out << "warning: " << w << "\n";
  if (loss_p) {
    std::ostringstream os;
    os << "# config_hash=" << meta["config_hash"].get<std::string>() << " seed=" << c.seed << "\nepoch,loss\n";
    const auto& h = est->loss_history();
    for (std::size_t e = 0; e < h.size(); ++e)
      os << e << ',' << (std::isfinite(h[e]) ? io::format_double(h[e]) : std::string("NA")) << "\n";
    io::atomic_write(*loss_p, os.str());
  }
  return kOk;
}

struct PredictionInputs {
  std::unique_ptr<Estimator> est;
  json ckpt_meta;
  Dataset test;
  json test_meta;
  std::vector<CapoQuery> queries;
  json query_meta;
};

inline PredictionInputs load_prediction_inputs(const RunConfig& c) {
  const fs::path ckpt_p = input_path(c, c.paths.checkpoint, "paths.checkpoint");
  const fs::path test_p = input_path(c, c.paths.test_dataset, "paths.test_dataset");
  const fs::path query_p = input_path(c, c.paths.queries, "paths.queries");
  PredictionInputs in;
  const json ckpt = json::parse(io::read_file(ckpt_p));
  in.est = load_estimator(ckpt);
  in.ckpt_meta = ckpt.value("meta", json::object());
  std::tie(in.test, in.test_meta) = load_dataset(test_p);
  std::tie(in.queries, in.query_meta) = io::queries_from_jsonl(io::read_file(query_p));
  return in;
}

inline json predictions_json(const RunConfig& c, const PredictionInputs& in,
                             const std::vector<std::vector<double>>& pred) {
  json meta = artifact_meta(c, "predictions");
  meta["checkpoint_config_hash"] = in.ckpt_meta.value("config_hash", "");
  meta["data_hash"] = in.test_meta.value("data_hash", "");
  json rows = json::array();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    json r = io::query_to_json(in.queries[i]);
    r["prediction"] = pred[i];
    rows.push_back(r);
  }
  return {{"meta", meta}, {"predictions", rows}};
}

inline int predict_cmd(const RunConfig& c, std::ostream& out) {
  const fs::path pred_p = output_path(c, c.paths.predictions, "paths.predictions");
  const auto in = load_prediction_inputs(c);
  const auto pred = in.est->predict(in.test, in.queries);
  io::atomic_write(pred_p, predictions_json(c, in, pred).dump(1) + "\n");
  out << "wrote " << pred.size() << " predictions to " << pred_p.string() << "\n";
  return kOk;
}

inline int evaluate_cmd(const RunConfig& c, std::ostream& out) {
  const fs::path res_p = output_path(c, c.paths.results, "paths.results");
  const auto in = load_prediction_inputs(c);
  const std::string want = in.ckpt_meta.value("data_hash", "");
  for (const auto& [what, got] : {std::pair{"test dataset", in.test_meta.value("data_hash", "")},
                                  std::pair{"query file", in.query_meta.value("data_hash", "")}})
    if (want.empty() || got != want)
      throw MismatchError(std::string(what) + " has data hash '" + got + "' but the checkpoint was trained on '" + want +
                          "'");
  const auto pred = in.est->predict(in.test, in.queries);
  std::vector<double> p, o;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (in.queries[i].oracle.empty()) throw ContractError("query " + std::to_string(i) + " has no oracle value");
    p.insert(p.end(), pred[i].begin(), pred[i].end());
    o.insert(o.end(), in.queries[i].oracle.begin(), in.queries[i].oracle.end());
  }
  eval::SweepResult r;
  r.config_hash = io::config_hash(to_json(c));
  eval::ResultRow row;
  row.estimator = to_string(in.est->kind());
  row.dgp = to_string(c.dgp.kind);
  if (c.dgp.kind == DgpKind::tumor) {
    row.cell.gamma = c.dgp.tumor.gamma;
    row.cell.rho_ov = c.dgp.tumor.rho_ov;
    row.cell.omega = c.dgp.tumor.omega;
  }
  row.cell.tau = in.est->tau();
  row.n_train = c.data.n;
  row.seed = c.seed;
  row.rmse = eval::rmse(p, o);
  row.rmse_norm = eval::rmse(p, o, c.dgp.outcome_scale());
  row.n_queries = pred.size();
  r.rows.push_back(row);
  io::atomic_write(res_p, eval::sweep_csv(r, c.seed, false));
  out << row.estimator << " rmse=" << io::format_double(row.rmse) << " rmse_norm=" << io::format_double(row.rmse_norm)
      << " over " << pred.size() << " queries\n";
  return kOk;
}

inline int sweep_cmd(const RunConfig& c, std::ostream& out) {
  if (!c.benchmark) throw ConfigError("benchmark", "section is required for sweep");
  const fs::path res_p = output_path(c, c.paths.results, "paths.results");
  const std::optional<fs::path> sum_p =
      c.paths.summary.empty() ? std::nullopt : std::optional(output_path(c, c.paths.summary, "paths.summary"));
  const auto r = eval::run_sweep(*c.benchmark);
  io::atomic_write(res_p, eval::sweep_csv(r, c.benchmark->seed, c.benchmark->record_runtime));
  if (sum_p) io::atomic_write(*sum_p, r.summary.dump(1) + "\n");
  std::size_t failed = 0;
  for (const auto& row : r.rows) failed += row.ok() ? 0 : 1;
  out << "sweep: " << r.rows.size() << " rows (" << failed << " failed) -> " << res_p.string() << "\n";
  return kOk;
}

inline int oracle_check_cmd(const RunConfig& c, std::ostream& out) {
  const scm::DiscreteScm m = c.dgp.kind == DgpKind::scm ? c.dgp.scm : scm::DiscreteScm{};
  bool all = true;
  for (const auto& r : eval::oracle_checks(m, c.seed)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << (r.detail.empty() ? "" : "  (" + r.detail + ")") << "\n";
    all = all && r.passed;
  }
  return all ? kOk : kCheckFailed;
}

// ---------- dispatch ----------

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string dataset, test_dataset, queries, checkpoint, predictions, results;
};

inline RunConfig load_config(const Overrides& o, bool config_required) {
  json j = json::object();
  fs::path base;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw InputError("config file not found: " + o.config);
    try {
      j = json::parse(io::read_file(o.config));
    } catch (const json::parse_error& e) {
      throw ConfigError(o.config, std::string("not valid JSON: ") + e.what());
    }
    base = fs::path(o.config).parent_path();
  } else if (config_required) {
    throw ConfigError("--config", "a configuration file is required");
  }
  if (o.seed) {
    j["seed"] = *o.seed;
    if (j.contains("benchmark")) j["benchmark"]["seed"] = *o.seed;
  }
  if (o.jobs && j.contains("benchmark")) j["benchmark"]["jobs"] = *o.jobs;
  RunConfig c = parse_run_config(j, base);
  // Paths given on the command line are relative to the working directory.
  auto flag = [](std::string& field, const std::string& v) {
    if (!v.empty()) field = fs::absolute(v).string();
  };
  flag(c.paths.dataset, o.dataset);
  flag(c.paths.test_dataset, o.test_dataset);
  flag(c.paths.queries, o.queries);
  flag(c.paths.checkpoint, o.checkpoint);
  flag(c.paths.predictions, o.predictions);
  flag(c.paths.results, o.results);
  return c;
}

inline int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative G-computation: data generation, training, prediction and benchmarks"};
  app.require_subcommand(1);
  Overrides o;
  std::string chosen;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", o.config, "JSON configuration file");
    sub->add_option("--seed", o.seed, "global seed (overrides the config)");
    sub->add_option("--jobs", o.jobs, "worker threads for sweeps");
    sub->add_option("--dataset", o.dataset, "training dataset path");
    sub->add_option("--test-dataset", o.test_dataset, "test dataset path");
    sub->add_option("--queries", o.queries, "query file path");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint path");
    sub->add_option("--predictions", o.predictions, "predictions output path");
    sub->add_option("--results", o.results, "results CSV path");
    sub->callback([&chosen, name] { chosen = name; });
    return sub;
  };
  add("gen-data", "simulate training/test datasets and oracle queries");
  add("train", "fit an estimator and write a checkpoint");
  add("predict", "predict CAPOs for a query file");
  add("evaluate", "score a checkpoint against oracle queries");
  add("sweep", "run a benchmark grid");
  add("oracle-check", "self-check the ground-truth oracles");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig c = load_config(o, chosen != "oracle-check");
    if (chosen == "gen-data") return gen_data(c, out);
    if (chosen == "train") return train_cmd(c, out);
    if (chosen == "predict") return predict_cmd(c, out);
    if (chosen == "evaluate") return evaluate_cmd(c, out);
    if (chosen == "sweep") return sweep_cmd(c, out);
    return oracle_check_cmd(c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    err << "malformed input: " << e.what() << "\n";
    return kUsage;
  } catch (const MismatchError& e) {
    err << "refusing to evaluate: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace igc::cli
