#include "corpgnn/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "corpgnn/diffcore.hpp"
#include "corpgnn/error.hpp"

namespace corpgnn {

namespace {

Array2 uniform(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Array2 a(r, c);
  for (double& v : a.data()) v = d(rng);
  return a;
}

Array2 away_from_zero(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  Array2 a(r, c);
  for (double& v : a.data()) {
    do {
      v = d(rng);
    } while (std::abs(v) < 1e-3);
  }
  return a;
}

double weighted_sum(const Array2& out, const Array2& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * w.data()[i];
  return s;
}

// Builds a loss Σ op(inputs) ⊙ R with analytic gradients from the op's backward.
LossFn op_loss(const std::string& op, const Array2& probe, std::vector<int> ints) {
  if (op == "matmul") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = matmul(p.value("a"), p.value("b"));
      if (g) {
        auto mg = matmul_backward(p.value("a"), p.value("b"), probe);
        p.grad("a") = mg.da;
        p.grad("b") = mg.db;
      }
      return weighted_sum(out, probe);
    };
  }
  if (op == "add_bias") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = add_bias(p.value("x"), p.value("b"));
      if (g) {
        p.grad("x") = probe;
        p.grad("b") = add_bias_backward(probe);
      }
      return weighted_sum(out, probe);
    };
  }
  if (op == "relu") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = relu(p.value("x"));
      if (g) p.grad("x") = relu_backward(p.value("x"), probe);
      return weighted_sum(out, probe);
    };
  }
  if (op == "tanh") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = tanh_op(p.value("x"));
      if (g) p.grad("x") = tanh_backward(out, probe);
      return weighted_sum(out, probe);
    };
  }
  if (op == "segment_mean") {
    return [probe, ints](ParameterStore& p, bool g) {
      const Array2 out = segment_mean(p.value("x"), ints, probe.rows());
      if (g) p.grad("x") = segment_mean_backward(probe, ints, p.value("x").rows());
      return weighted_sum(out, probe);
    };
  }
  if (op == "gather_rows") {
    return [probe, ints](ParameterStore& p, bool g) {
      const Array2 out = gather_rows(p.value("x"), ints);
      if (g) p.grad("x") = gather_rows_backward(probe, ints, p.value("x").rows());
      return weighted_sum(out, probe);
    };
  }
  if (op == "scale_rows") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = scale_rows(p.value("x"), p.value("g"));
      if (g) {
        auto sg = scale_rows_backward(p.value("x"), p.value("g"), probe);
        p.grad("x") = sg.dx;
        p.grad("g") = sg.dg;
      }
      return weighted_sum(out, probe);
    };
  }
  if (op == "normalized_projection") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = normalized_projection(p.value("x"), p.value("p"));
      if (g) {
        auto pg = normalized_projection_backward(p.value("x"), p.value("p"), probe);
        p.grad("x") = pg.dx;
        p.grad("p") = pg.dp;
      }
      return weighted_sum(out, probe);
    };
  }
  if (op == "l2_normalize_rows") {
    return [probe](ParameterStore& p, bool g) {
      const Array2 out = l2_normalize_rows(p.value("x"));
      if (g) p.grad("x") = l2_normalize_rows_backward(p.value("x"), out, probe);
      return weighted_sum(out, probe);
    };
  }
  if (op == "softmax_xent") {
    return [ints](ParameterStore& p, bool g) {
      const auto sx = softmax_xent(p.value("logits"), ints);
      if (g) p.grad("logits") = softmax_xent_backward(sx.probs, ints);
      return sx.loss;
    };
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown op " + op);
}

}  // namespace

const std::vector<std::string>& gradient_op_names() {
  static const std::vector<std::string> names = {
      "matmul",     "add_bias",     "relu",     "tanh",       "segment_mean",
      "gather_rows", "scale_rows", "normalized_projection", "l2_normalize_rows", "softmax_xent",
  };
  return names;
}

GradientCheckEntry check_op_gradient(const std::string& op, std::uint64_t seed, double eps, double tolerance) {
  std::mt19937_64 rng(seed * 7919 + std::hash<std::string>{}(op) % 1000003);
  ParameterStore params;
  Array2 probe;
  std::vector<int> ints;
  if (op == "matmul") {
    params.add("a", uniform(3, 4, rng));
    params.add("b", uniform(4, 2, rng));
    probe = uniform(3, 2, rng);
  } else if (op == "add_bias") {
    params.add("x", uniform(3, 4, rng));
    params.add("b", uniform(1, 4, rng));
    probe = uniform(3, 4, rng);
  } else if (op == "relu") {
    params.add("x", away_from_zero(4, 3, rng));
    probe = uniform(4, 3, rng);
  } else if (op == "tanh") {
    params.add("x", uniform(4, 3, rng));
    probe = uniform(4, 3, rng);
  } else if (op == "segment_mean") {
    params.add("x", uniform(6, 3, rng));
    ints = {0, 2, 0, 2, 2, 1};  // segment 3 stays empty
    probe = uniform(4, 3, rng);
  } else if (op == "gather_rows") {
    params.add("x", uniform(4, 3, rng));
    ints = {2, 0, 2, 3};  // duplicate index accumulates
    probe = uniform(4, 3, rng);
  } else if (op == "scale_rows") {
    params.add("x", uniform(4, 3, rng));
    params.add("g", uniform(4, 1, rng));
    probe = uniform(4, 3, rng);
  } else if (op == "normalized_projection") {
    params.add("x", uniform(5, 3, rng));
    params.add("p", away_from_zero(3, 1, rng));
    probe = uniform(5, 1, rng);
  } else if (op == "l2_normalize_rows") {
    params.add("x", away_from_zero(4, 3, rng));
    probe = uniform(4, 3, rng);
  } else if (op == "softmax_xent") {
    params.add("logits", uniform(4, 3, rng));
    std::uniform_int_distribution<int> lab(0, 2);
    for (int i = 0; i < 4; ++i) ints.push_back(lab(rng));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown op " + op);
  }
  const auto res = grad_check(params, op_loss(op, probe, ints), eps);
  return GradientCheckEntry{op, seed, res.max_rel_error, tolerance, res.finite};
}

GraphBatch random_two_graph_batch(std::uint64_t seed, int node_in_dim, int num_classes) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(5, 9);
  std::uniform_int_distribution<int> lab(0, num_classes - 1);
  GraphBatch b;
  b.num_graphs = 2;
  int offset = 0;
  for (int g = 0; g < 2; ++g) {
    const int n = size(rng);
    for (int v = 0; v < n; ++v) b.graph_of_node.push_back(g);
    // Random tree: each vertex attaches to an earlier one.
    for (int v = 1; v < n; ++v) {
      std::uniform_int_distribution<int> parent(0, v - 1);
      b.edges.emplace_back(offset + parent(rng), offset + v);
    }
    b.labels.push_back(lab(rng));
    offset += n;
  }
  b.x = uniform(static_cast<std::size_t>(offset), static_cast<std::size_t>(node_in_dim), rng);
  return b;
}

double kink_margin(const ForwardCache& c) {
  double m = std::numeric_limits<double>::infinity();
  auto min_abs = [&](const Array2& a) {
    for (double v : a.data()) m = std::min(m, std::abs(v));
  };
  min_abs(c.embed_pre);
  for (const auto& s : c.sage) min_abs(s.pre);
  min_abs(c.mlp_pre);
  for (std::size_t l = 0; l < c.pool.size(); ++l) {
    const auto& pc = c.pool[l];
    const auto& gon = l == 0 ? c.input_graph_of_node : c.pool[l - 1].graph_of_node;
    std::vector<char> kept(gon.size(), 0);
    for (int v : pc.kept) kept[static_cast<std::size_t>(v)] = 1;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> lo_kept(static_cast<std::size_t>(c.num_graphs), inf);
    std::vector<double> hi_dropped(static_cast<std::size_t>(c.num_graphs), -inf);
    for (std::size_t v = 0; v < gon.size(); ++v) {
      const auto g = static_cast<std::size_t>(gon[v]);
      const double sc = pc.scores(v, 0);
      if (kept[v]) lo_kept[g] = std::min(lo_kept[g], sc);
      else hi_dropped[g] = std::max(hi_dropped[g], sc);
    }
    for (std::size_t g = 0; g < lo_kept.size(); ++g)
      if (hi_dropped[g] > -inf) m = std::min(m, lo_kept[g] - hi_dropped[g]);
  }
  return m;
}

GradientCheckEntry check_model_gradient(std::uint64_t seed, double eps, double tolerance, const ModelConfig& base) {
  ModelConfig cfg = base;
  ParameterStore params;
  GraphBatch batch;
  int redraws = 0;
  // Redraw until the point is differentiable with room to spare: every ReLU
  // input and every TopK keep/drop score gap at least kKinkMargin from its
  // kink. Otherwise a ±eps probe can cross the kink and the central
  // difference measures a one-sided slope.
  for (;; ++redraws) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(redraws) * 1000003ULL;
    cfg.seed = s;
    params = init_params(cfg);
    std::mt19937_64 rng(s ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> small(-0.1, 0.1);
    for (auto& p : params.entries()) {
      if (p.name.ends_with(".b") || p.name.ends_with(".b1") || p.name.ends_with(".b2")) {
        for (double& v : p.value.data()) v = small(rng);
      }
    }
    batch = random_two_graph_batch(s + 1, cfg.node_in_dim, cfg.num_classes);
    if (redraws >= kMaxKinkRedraws || kink_margin(model_forward(batch, params, cfg).cache) >= kKinkMargin) break;
  }
  LossFn f = [&](ParameterStore& p, bool want_grad) {
    if (want_grad) return loss_and_grad(batch, p, cfg);
    return loss_only(batch, p, cfg);
  };
  const auto res = grad_check(params, f, eps);
  GradientCheckEntry e{"model", seed, res.max_rel_error, tolerance, res.finite};
  e.redraws = redraws;
  return e;
}

bool GradientSuiteReport::all_finite() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.finite; });
}

bool GradientSuiteReport::all_passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
}

double GradientSuiteReport::worst_op_error() const {
  double w = 0.0;
  for (const auto& e : entries)
    if (e.name != "model") w = std::max(w, e.max_rel_error);
  return w;
}

double GradientSuiteReport::worst_model_error() const {
  double w = 0.0;
  for (const auto& e : entries)
    if (e.name == "model") w = std::max(w, e.max_rel_error);
  return w;
}

nlohmann::ordered_json GradientSuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["eps"] = options.eps;
  j["seeds"] = options.seeds;
  j["base_seed"] = options.base_seed;
  j["op_tolerance"] = options.op_tolerance;
  j["model_tolerance"] = options.model_tolerance;
  j["worst_op_error"] = worst_op_error();
  j["worst_model_error"] = worst_model_error();
  j["all_finite"] = all_finite();
  j["passed"] = all_passed();
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json je;
    je["check"] = e.name;
    je["seed"] = e.seed;
    je["max_rel_error"] = e.finite ? nlohmann::ordered_json(e.max_rel_error) : nlohmann::ordered_json(nullptr);
    if (e.name == "model") je["redraws"] = e.redraws;
    je["tolerance"] = e.tolerance;
    je["passed"] = e.passed();
    arr.push_back(std::move(je));
  }
  j["checks"] = std::move(arr);
  return j;
}

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options) {
  GradientSuiteReport report;
  report.options = options;
  for (int s = 0; s < options.seeds; ++s) {
    const std::uint64_t seed = options.base_seed + static_cast<std::uint64_t>(s);
    for (const auto& op : gradient_op_names()) {
      report.entries.push_back(check_op_gradient(op, seed, options.eps, options.op_tolerance));
    }
  }
  for (int s = 0; s < options.seeds; ++s) {
    const std::uint64_t seed = options.base_seed + static_cast<std::uint64_t>(s);
    report.entries.push_back(check_model_gradient(seed, options.eps, options.model_tolerance));
  }
  return report;
}

}  // namespace corpgnn
