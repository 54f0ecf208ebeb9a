#include "cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/config_file.hpp"
#include "corpgnn/checkpoint.hpp"
#include "corpgnn/dataset.hpp"
#include "corpgnn/graph_mapping.hpp"
#include "corpgnn/metrics.hpp"
#include "corpgnn/pipeline.hpp"
#include "corpgnn/training.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace corpgnn::cli {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
}

void write_run_config(const fs::path& dir, const ojson& cfg) {
  write_text(dir / "run_config.json", cfg.dump(2) + "\n");
}

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
};

void add_common(CLI::App& app, Common& c, const std::string& out_default, const std::string& out_help) {
  c.out = out_default;
  app.add_option("--config", c.config, "TOML or JSON file with option defaults (flags override it)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app.add_option("-o,--out", c.out, out_help)->capture_default_str();
}

// ---- synth --------------------------------------------------------------------

struct SynthOpts {
  Common common;
  SyntheticConfig cfg;
};

int cmd_synth(const SynthOpts& o, std::ostream& out) {
  SyntheticConfig cfg = o.cfg;
  cfg.seed = o.common.seed;
  const SyntheticData data = generate_synthetic(cfg);
  const fs::path path = o.common.out;
  write_text(path, format_dataset(data.panels));
  write_text(truth_path_for(path), format_truth(data));

  ojson rc;
  rc["command"] = "synth";
  rc["config_file"] = o.common.config;
  rc["out"] = path.string();
  rc["n"] = cfg.n_enterprises;
  rc["years"] = cfg.n_years;
  rc["sigma"] = cfg.noise_sigma;
  rc["seed"] = cfg.seed;
  rc["first_year"] = cfg.first_year;
  write_run_config(path.has_parent_path() ? path.parent_path() : fs::path("."), rc);

  out << "wrote " << data.panels.size() * static_cast<std::size_t>(cfg.n_years) << " rows for "
      << data.panels.size() << " enterprises to " << path.string() << "\n";
  return kExitOk;
}

// ---- shared data / mapping flags ------------------------------------------------

struct PipelineOpts {
  std::string data;
  int classes = 3;
  std::string graph = "tree";
  int plus_k = 10;
  int window = 4;
  bool abs_similarity = false;
  bool global_graph = false;
  std::optional<double> sme_quantile;
  std::string zero_variance = "keep";
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::optional<std::uint64_t> split_seed;
};

void add_pipeline_flags(CLI::App& app, PipelineOpts& p) {
  app.add_option("--data", p.data, "Indicator panel CSV");
  app.add_option("--classes", p.classes, "Number of rating classes")
      ->check(CLI::IsMember({3, 5, 8}))
      ->capture_default_str();
  app.add_option("--graph", p.graph, "Graph mapping")
      ->check(CLI::IsMember({"tree", "tree-plus"}))
      ->capture_default_str();
  app.add_option("--plus-k", p.plus_k, "Extra edges for tree-plus")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--window", p.window, "Lookback window in years")->check(CLI::Range(2, 1000))->capture_default_str();
  app.add_flag("--abs-similarity", p.abs_similarity, "Rank edges by |cosine| instead of signed cosine");
  app.add_flag("--global-graph", p.global_graph, "One graph from all training rows shared by every sample");
  app.add_option("--sme-quantile", p.sme_quantile, "Drop enterprises whose mean total assets exceed this quantile")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--zero-variance", p.zero_variance, "Constant-indicator policy")
      ->check(CLI::IsMember({"keep", "drop", "fail"}))
      ->capture_default_str();
  app.add_option("--val-frac", p.val_frac, "Validation fraction of enterprises")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--test-frac", p.test_frac, "Test fraction of enterprises")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app.add_option("--split-seed", p.split_seed, "Seed for the enterprise split (defaults to --seed)");
}

DataConfig data_config(const PipelineOpts& p, std::uint64_t seed) {
  DataConfig d;
  d.num_classes = p.classes;
  d.split = {1.0 - p.val_frac - p.test_frac, p.val_frac, p.test_frac};
  if (d.split.train <= 0.0) throw Error(ErrorCode::kInvalidArgument, "val-frac + test-frac must be < 1");
  d.split_seed = p.split_seed.value_or(seed);
  d.sme_quantile = p.sme_quantile;
  d.zero_variance = parse_zero_variance(p.zero_variance);
  d.validate();
  return d;
}

MappingConfig mapping_config(const PipelineOpts& p) {
  MappingConfig m;
  m.window = p.window;
  m.graph = parse_graph_kind(p.graph);
  m.plus_k = p.plus_k;
  m.abs_similarity = p.abs_similarity;
  m.global_graph = p.global_graph;
  m.validate();
  return m;
}

void require_data(const PipelineOpts& p) {
  if (p.data.empty()) throw Error(ErrorCode::kInvalidArgument, "--data is required");
}

// ---- map ----------------------------------------------------------------------

struct MapOpts {
  Common common;
  PipelineOpts pipe;
  std::string format = "dot";
  int limit = 0;
};

int cmd_map(const MapOpts& o, std::ostream& out) {
  require_data(o.pipe);
  const DataConfig dcfg = data_config(o.pipe, o.common.seed);
  const MappingConfig mcfg = mapping_config(o.pipe);
  const GraphFormat fmt = parse_graph_format(o.format);
  const auto raw = load_dataset(o.pipe.data);
  const PreparedData prep = prepare_data(raw, dcfg, mcfg);
  const fs::path dir = o.common.out;
  const std::string ext = fmt == GraphFormat::kDot ? ".dot" : ".json";

  std::map<std::string, const IndicatorPanel*> by_id;
  for (const auto& p : prep.standardized) by_id[p.enterprise_id] = &p;

  std::string csv = "enterprise_id,year,split,edges,total_weight\n";
  std::size_t exported = 0, min_edges = SIZE_MAX, max_edges = 0;
  bool all_trees = true;
  auto note = [&](const CorpGraph& g) {
    min_edges = std::min(min_edges, g.edges.size());
    max_edges = std::max(max_edges, g.edges.size());
    if (g.kind == GraphKind::kTree) all_trees = all_trees && is_spanning_tree(g);
  };

  if (prep.shared_graph) {
    write_text(dir / ("global" + ext), export_graph(*prep.shared_graph, fmt));
    note(*prep.shared_graph);
    csv += "global,,train," + std::to_string(prep.shared_graph->edges.size()) + "," +
           format_double(total_weight(*prep.shared_graph)) + "\n";
    exported = 1;
  } else {
    const std::pair<const char*, const std::vector<SampleKey>*> splits[] = {
        {"train", &prep.split.train}, {"validation", &prep.split.validation}, {"test", &prep.split.test}};
    for (const auto& [split_name, keys] : splits) {
      for (const auto& key : *keys) {
        if (o.limit > 0 && exported >= static_cast<std::size_t>(o.limit)) break;
        Array2 rows;
        try {
          rows = indicator_vectors(*by_id.at(key.enterprise_id), key.year, mcfg.window);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kInsufficientHistory) throw;
          continue;
        }
        const CorpGraph g = build_graph(rows, mcfg);
        const std::string stem = key.enterprise_id + "_" + std::to_string(key.year);
        write_text(dir / "graphs" / (stem + ext), export_graph(g, fmt));
        note(g);
        csv += key.enterprise_id + "," + std::to_string(key.year) + "," + split_name + "," +
               std::to_string(g.edges.size()) + "," + format_double(total_weight(g)) + "\n";
        ++exported;
      }
    }
  }
  write_text(dir / "summary.csv", csv);

  ojson summary;
  summary["graphs"] = exported;
  summary["format"] = o.format;
  summary["kind"] = graph_kind_name(mcfg.graph);
  summary["vertices"] = kNumIndicators;
  summary["min_edges"] = exported ? min_edges : 0;
  summary["max_edges"] = max_edges;
  summary["spanning_trees_verified"] = mcfg.graph == GraphKind::kTree ? ojson(all_trees) : ojson(nullptr);
  summary["dropped_short_history"] = prep.dropped_short_history;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  ojson rc;
  rc["command"] = "map";
  rc["config_file"] = o.common.config;
  rc["data"] = o.pipe.data;
  rc["out"] = dir.string();
  rc["seed"] = o.common.seed;
  rc["format"] = o.format;
  rc["limit"] = o.limit;
  rc["data_config"] = dcfg.to_json();
  rc["mapping_config"] = mcfg.to_json();
  write_run_config(dir, rc);

  out << "exported " << exported << " graphs (" << min_edges << "-" << max_edges << " edges) to " << dir.string()
      << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------------

struct TrainOpts {
  Common common;
  PipelineOpts pipe;
  TrainConfig train;
  std::string optimizer = "adam";
  int hidden = 32;
  int mlp_hidden = 64;
  double pool_ratio = 0.8;
  bool l2_normalize = false;
  bool quiet = false;
};

MetricsReport metrics_for(std::span<const GraphSample> samples, const ParameterStore& params, const ModelConfig& cfg,
                          double* loss = nullptr) {
  const EvalSummary ev = evaluate(samples, params, cfg);
  if (loss) *loss = ev.loss;
  return compute_metrics(ev.prediction.probs, ev.prediction.classes, ev.labels);
}

int cmd_train(const TrainOpts& o, std::ostream& out) {
  require_data(o.pipe);
  const DataConfig dcfg = data_config(o.pipe, o.common.seed);
  const MappingConfig mcfg = mapping_config(o.pipe);
  ModelConfig model;
  model.node_in_dim = mcfg.window;
  model.hidden_dim = o.hidden;
  model.mlp_hidden = o.mlp_hidden;
  model.pool_ratio = o.pool_ratio;
  model.num_classes = dcfg.num_classes;
  model.l2_normalize = o.l2_normalize;
  model.seed = o.common.seed;
  model.validate();
  TrainConfig tcfg = o.train;
  tcfg.optimizer = parse_optimizer(o.optimizer);
  tcfg.seed = o.common.seed;
  tcfg.validate();

  const auto raw = load_dataset(o.pipe.data);
  const PreparedData prep = prepare_data(raw, dcfg, mcfg);
  if (prep.train.empty()) throw Error(ErrorCode::kEmptyAfterFilter, "no training samples");
  if (!o.quiet) {
    out << "samples: train " << prep.train.size() << ", validation " << prep.validation.size() << ", test "
        << prep.test.size() << " (dropped " << prep.dropped_short_history << " short-history)\n";
  }

  const fs::path dir = o.common.out;
  ojson rc;
  rc["command"] = "train";
  rc["config_file"] = o.common.config;
  rc["data"] = o.pipe.data;
  rc["out"] = dir.string();
  rc["seed"] = o.common.seed;
  rc["data_config"] = dcfg.to_json();
  rc["mapping_config"] = mcfg.to_json();
  rc["model_config"] = model.to_json();
  rc["train_config"] = tcfg.to_json();
  write_run_config(dir, rc);

  auto on_epoch = [&](const EpochRecord& r) {
    if (o.quiet) return;
    out << "epoch " << r.epoch << " lr " << format_double(r.lr) << " train_loss " << format_double(r.train_loss)
        << " val_loss " << format_double(r.val_loss) << " val_acc " << format_double(r.val_acc) << "\n";
  };
  FitResult fr = fit(prep.train, prep.validation, model, tcfg, on_epoch);

  Checkpoint ck;
  ck.model = model;
  ck.train = tcfg;
  ck.data = dcfg;
  ck.mapping = mcfg;
  ck.stats = prep.stats;
  ck.shared_graph = prep.shared_graph;
  ck.params = fr.best_params;
  ck.best_epoch = fr.best_epoch;
  save_checkpoint(dir / "checkpoint.json", ck);
  write_text(dir / "history.csv", format_history(fr.history));

  const MetricsReport report = metrics_for(prep.validation, ck.params, model);
  export_metrics(report, dir);
  out << "best epoch " << fr.best_epoch << ", validation accuracy " << format_double(report.accuracy)
      << ", micro AUC " << format_double(report.micro_auc) << "\n";
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------------

struct EvalOpts {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string split = "validation";
};

int cmd_eval(const EvalOpts& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "--checkpoint is required");
  if (o.data.empty()) throw Error(ErrorCode::kInvalidArgument, "--data is required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const auto raw = load_dataset(o.data);
  const PreparedData prep =
      prepare_data(raw, ck.data, ck.mapping, &ck.stats, ck.shared_graph ? &*ck.shared_graph : nullptr);

  std::vector<GraphSample> samples;
  if (o.split == "train") samples = prep.train;
  else if (o.split == "validation") samples = prep.validation;
  else if (o.split == "test") samples = prep.test;
  else {
    samples = prep.train;
    samples.insert(samples.end(), prep.validation.begin(), prep.validation.end());
    samples.insert(samples.end(), prep.test.begin(), prep.test.end());
  }
  double loss = 0.0;
  const MetricsReport report = metrics_for(samples, ck.params, ck.model, &loss);
  const fs::path dir = o.common.out;
  export_metrics(report, dir);

  ojson rc;
  rc["command"] = "eval";
  rc["config_file"] = o.common.config;
  rc["checkpoint"] = o.checkpoint;
  rc["data"] = o.data;
  rc["split"] = o.split;
  rc["out"] = dir.string();
  rc["seed"] = o.common.seed;
  write_run_config(dir, rc);

  out << o.split << ": " << report.num_samples << " samples, loss " << format_double(loss) << ", accuracy "
      << format_double(report.accuracy) << ", micro AUC " << format_double(report.micro_auc) << "\n";
  return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------------

struct GradOpts {
  Common common;
  GradientSuiteOptions suite;
};

int cmd_gradcheck(const GradOpts& o, std::ostream& out) {
  GradientSuiteOptions opts = o.suite;
  opts.base_seed = o.common.seed;
  const GradientSuiteReport report = run_gradient_suite(opts);
  const fs::path dir = o.common.out;
  write_text(dir / "gradcheck.json", report.to_json().dump(2) + "\n");

  ojson rc;
  rc["command"] = "gradcheck";
  rc["config_file"] = o.common.config;
  rc["out"] = dir.string();
  rc["seed"] = opts.base_seed;
  rc["seeds"] = opts.seeds;
  rc["eps"] = opts.eps;
  rc["op_tol"] = opts.op_tolerance;
  rc["model_tol"] = opts.model_tolerance;
  write_run_config(dir, rc);

  std::map<std::string, double> worst;
  for (const auto& e : report.entries) {
    double& w = worst[e.name];
    w = e.finite ? std::max(w, e.max_rel_error) : std::numeric_limits<double>::infinity();
  }
  out << "eps " << format_double(opts.eps) << ", " << opts.seeds << " seeds\n";
  for (const auto& [name, w] : worst) out << "  " << name << ": max rel error " << format_double(w) << "\n";
  const int code = gradcheck_exit_code(report);
  out << (code == kExitOk ? "all checks passed" : "gradient check FAILED") << "\n";
  return code;
}

}  // namespace

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage: return kExitUsage;
    case ErrorCategory::kData: return kExitData;
    case ErrorCategory::kNumerical: return kExitNumerical;
  }
  return kExitData;
}

int gradcheck_exit_code(const GradientSuiteReport& report) {
  return report.all_finite() && report.all_passed() ? kExitOk : kExitNumerical;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Credit-rating graph classifier over financial-indicator graphs", "corpgnn");
  app.require_subcommand(1);

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic indicator panel");
  synth.common.seed = 1;
  add_common(*s, synth.common, "data.csv", "Output CSV (truth sidecar written next to it)");
  s->add_option("--n", synth.cfg.n_enterprises, "Enterprises")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--years", synth.cfg.n_years, "Years per enterprise")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--sigma", synth.cfg.noise_sigma, "Noise standard deviation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s->add_option("--first-year", synth.cfg.first_year, "First calendar year")->capture_default_str();

  MapOpts map;
  auto* m = app.add_subcommand("map", "Export per-sample indicator graphs");
  add_common(*m, map.common, "graphs", "Output directory");
  add_pipeline_flags(*m, map.pipe);
  m->add_option("--format", map.format, "Export format")
      ->check(CLI::IsMember({"dot", "edge-json", "json"}))
      ->capture_default_str();
  m->add_option("--limit", map.limit, "Export at most this many graphs (0: all)")->check(CLI::NonNegativeNumber);

  TrainOpts train;
  auto* t = app.add_subcommand("train", "Train the graph classifier");
  add_common(*t, train.common, "run", "Run directory");
  add_pipeline_flags(*t, train.pipe);
  t->add_option("--epochs", train.train.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--batch-size", train.train.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--optimizer", train.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  t->add_option("--lr-max", train.train.lr_max)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--lr-min", train.train.lr_min)->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--t0", train.train.restart_period_0, "First restart period in epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  t->add_option("--t-mult", train.train.restart_mult, "Restart period multiplier")->capture_default_str();
  t->add_option("--momentum", train.train.momentum)->capture_default_str();
  t->add_option("--beta1", train.train.beta1)->capture_default_str();
  t->add_option("--beta2", train.train.beta2)->capture_default_str();
  t->add_option("--weight-decay", train.train.weight_decay)->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--patience", train.train.early_stop_patience, "Early-stopping patience in epochs (0: off)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  t->add_flag("--class-weights", train.train.class_weights, "Inverse-frequency class weighting");
  t->add_option("--hidden", train.hidden, "GraphSAGE width")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--mlp-hidden", train.mlp_hidden)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--pool-ratio", train.pool_ratio)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  t->add_flag("--l2-normalize", train.l2_normalize, "L2-normalize GraphSAGE outputs");
  t->add_flag("-q,--quiet", train.quiet, "No per-epoch output");

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(*e, ev.common, "eval", "Output directory");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint.json from train");
  e->add_option("--data", ev.data, "Indicator panel CSV");
  e->add_option("--split", ev.split)
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();

  GradOpts grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(*g, grad.common, "gradcheck", "Output directory");
  g->add_option("--seeds", grad.suite.seeds)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--eps", grad.suite.eps, "Central-difference step")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--op-tol", grad.suite.op_tolerance)->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--model-tol", grad.suite.model_tolerance)->check(CLI::PositiveNumber)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    for (auto* sub : app.get_subcommands()) {
      const auto* cfg = sub->get_option("--config");
      if (cfg->count() > 0) merge_config_file(*sub, cfg->as<std::string>());
    }
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (m->parsed()) return cmd_map(map, out);
    if (t->parsed()) return cmd_train(train, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (g->parsed()) return cmd_gradcheck(grad, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex.category());
  } catch (const nlohmann::json::exception& ex) {
    err << "error: malformed JSON: " << ex.what() << "\n";
    return kExitData;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace corpgnn::cli
