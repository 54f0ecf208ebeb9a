#include "corpgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "corpgnn/error.hpp"

namespace corpgnn {

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(lr_min < lr_max)) throw Error(ErrorCode::kInvalidArgument, "lr_min must be < lr_max");
  if (lr_min < 0.0) throw Error(ErrorCode::kInvalidArgument, "lr_min must be >= 0");
  if (restart_period_0 < 1.0) throw Error(ErrorCode::kInvalidArgument, "restart period T_0 must be >= 1");
  if (restart_mult < 1.0) throw Error(ErrorCode::kInvalidArgument, "restart multiplier must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "adam betas must be in [0, 1)");
  }
  if (momentum < 0.0) throw Error(ErrorCode::kInvalidArgument, "momentum must be >= 0");
  if (weight_decay < 0.0) throw Error(ErrorCode::kInvalidArgument, "weight_decay must be >= 0");
  if (early_stop_patience < 0) throw Error(ErrorCode::kInvalidArgument, "patience must be >= 0 (0 disables early stopping)");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer " + std::string(name));
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["optimizer"] = optimizer_name(optimizer);
  j["lr_max"] = lr_max;
  j["lr_min"] = lr_min;
  j["restart_period_0"] = restart_period_0;
  j["restart_mult"] = restart_mult;
  j["momentum"] = momentum;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["weight_decay"] = weight_decay;
  j["seed"] = seed;
  j["early_stop_patience"] = early_stop_patience;
  j["class_weights"] = class_weights;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.lr_max = j.at("lr_max").get<double>();
  c.lr_min = j.at("lr_min").get<double>();
  c.restart_period_0 = j.at("restart_period_0").get<double>();
  c.restart_mult = j.at("restart_mult").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.early_stop_patience = j.at("early_stop_patience").get<int>();
  c.class_weights = j.value("class_weights", false);
  c.validate();
  return c;
}

// ---- schedule ----------------------------------------------------------------

double warm_restart_lr(double t, const TrainConfig& cfg) {
  if (t < 0.0) t = 0.0;
  double t_cur = 0.0;
  double period = cfg.restart_period_0;
  if (cfg.restart_mult == 1.0) {
    t_cur = std::fmod(t, period);
  } else {
    double start = 0.0;
    while (t >= start + period) {
      start += period;
      period *= cfg.restart_mult;
    }
    t_cur = t - start;
  }
  return cfg.lr_min +
         0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * t_cur / period));
}

// ---- optimizer ----------------------------------------------------------------

OptimizerState OptimizerState::for_params(const ParameterStore& params) {
  OptimizerState s;
  for (const auto& p : params.entries()) {
    s.first.emplace_back(p.value.rows(), p.value.cols());
    s.second.emplace_back(p.value.rows(), p.value.cols());
  }
  return s;
}

void optimizer_step(ParameterStore& params, OptimizerState& state, double lr, const TrainConfig& cfg) {
  auto& entries = params.entries();
  if (state.first.size() != entries.size()) state = OptimizerState::for_params(params);
  for (const auto& p : entries) {
    if (!p.grad.all_finite()) throw Error(ErrorCode::kNonFiniteGradient, p.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    auto theta = entries[e].value.data();
    auto g = entries[e].grad.data();
    auto m = state.first[e].data();
    auto v = state.second[e].data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (cfg.weight_decay > 0.0) theta[i] -= lr * cfg.weight_decay * theta[i];
      if (cfg.optimizer == OptimizerKind::kAdam) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      } else {
        m[i] = cfg.momentum * m[i] + g[i];
        theta[i] -= lr * m[i];
      }
    }
  }
}

// ---- batching ---------------------------------------------------------------------

GraphBatch collate(std::span<const GraphSample* const> samples) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(samples.size());
  std::size_t total = 0;
  std::size_t width = samples.empty() ? 0 : samples.front()->features.cols();
  for (const auto* s : samples) {
    if (s->features.cols() != width) throw Error(ErrorCode::kShapeMismatch, "mixed feature widths in batch");
    total += s->features.rows();
  }
  b.x = Array2(total, width);
  b.graph_of_node.reserve(total);
  b.labels.reserve(samples.size());
  std::size_t offset = 0;
  for (std::size_t g = 0; g < samples.size(); ++g) {
    const auto& s = *samples[g];
    for (std::size_t r = 0; r < s.features.rows(); ++r) {
      auto src = s.features.row(r);
      std::copy(src.begin(), src.end(), b.x.row(offset + r).begin());
      b.graph_of_node.push_back(static_cast<int>(g));
    }
    const int base = static_cast<int>(offset);
    for (const auto& [u, v] : s.edges) b.edges.emplace_back(base + u, base + v);
    b.labels.push_back(s.label);
    offset += s.features.rows();
  }
  return b;
}

GraphBatch collate(std::span<const GraphSample> samples) {
  std::vector<const GraphSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return collate(std::span<const GraphSample* const>(ptrs));
}

std::vector<GraphBatch> make_batches(std::span<const GraphSample> samples, int batch_size,
                                     std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<GraphBatch> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  std::vector<const GraphSample*> chunk;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    chunk.clear();
    for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) chunk.push_back(&samples[order[k]]);
    batches.push_back(collate(std::span<const GraphSample* const>(chunk)));
  }
  return batches;
}

// ---- evaluation --------------------------------------------------------------------

EvalSummary evaluate(std::span<const GraphSample> samples, const ParameterStore& params,
                     const ModelConfig& cfg, int chunk) {
  EvalSummary out;
  out.prediction.probs = Array2(samples.size(), static_cast<std::size_t>(cfg.num_classes));
  out.prediction.logits = Array2(samples.size(), static_cast<std::size_t>(cfg.num_classes));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const auto step = static_cast<std::size_t>(std::max(chunk, 1));
  for (std::size_t start = 0; start < samples.size(); start += step) {
    const std::size_t end = std::min(samples.size(), start + step);
    const GraphBatch batch = collate(samples.subspan(start, end - start));
    Prediction p = predict(batch, params, cfg);
    const auto sx = softmax_xent(p.logits, batch.labels);
    loss_sum += sx.loss * static_cast<double>(end - start);
    for (std::size_t r = 0; r < end - start; ++r) {
      auto src = p.probs.row(r);
      std::copy(src.begin(), src.end(), out.prediction.probs.row(start + r).begin());
      auto lsrc = p.logits.row(r);
      std::copy(lsrc.begin(), lsrc.end(), out.prediction.logits.row(start + r).begin());
      out.prediction.classes.push_back(p.classes[r]);
      out.labels.push_back(batch.labels[r]);
      if (p.classes[r] == batch.labels[r]) ++correct;
    }
  }
  if (!samples.empty()) {
    out.loss = loss_sum / static_cast<double>(samples.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  }
  return out;
}

std::vector<double> inverse_frequency_weights(std::span<const GraphSample> samples, int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (const auto& s : samples) counts.at(static_cast<std::size_t>(s.label)) += 1.0;
  std::vector<double> w(counts.size(), 0.0);
  const double n = static_cast<double>(samples.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] > 0.0) w[c] = n / (static_cast<double>(num_classes) * counts[c]);
  return w;
}

// ---- fit ---------------------------------------------------------------------------

FitResult fit(std::span<const GraphSample> train, std::span<const GraphSample> validation,
              const ModelConfig& model_cfg, const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
  model_cfg.validate();
  train_cfg.validate();
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "empty training set");

  ParameterStore params = init_params(model_cfg);
  OptimizerState state = OptimizerState::for_params(params);
  const std::vector<double> class_weights =
      train_cfg.class_weights ? inverse_frequency_weights(train, model_cfg.num_classes) : std::vector<double>{};

  FitResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    const auto batches = make_batches(train, train_cfg.batch_size, train_cfg.seed, epoch);
    const double nb = static_cast<double>(batches.size());
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const double lr = warm_restart_lr(epoch + static_cast<double>(b) / nb, train_cfg);
      const double loss = loss_and_grad(batches[b], params, model_cfg, class_weights);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::kDiverged, "non-finite training loss at epoch " + std::to_string(epoch));
      }
      optimizer_step(params, state, lr, train_cfg);
      loss_sum += loss * static_cast<double>(batches[b].num_graphs);
      seen += static_cast<std::size_t>(batches[b].num_graphs);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = warm_restart_lr(static_cast<double>(epoch), train_cfg);
    rec.train_loss = loss_sum / static_cast<double>(seen);
    if (!validation.empty()) {
      const auto ev = evaluate(validation, params, model_cfg);
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy;
    } else {
      rec.val_loss = rec.train_loss;
      rec.val_acc = 0.0;
    }
    if (!std::isfinite(rec.val_loss)) throw Error(ErrorCode::kDiverged, "non-finite validation loss");
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.best_params = params;
      since_best = 0;
    } else if (++since_best >= train_cfg.early_stop_patience && train_cfg.early_stop_patience > 0) {
      break;
    }
  }
  return result;
}

std::string format_history(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,lr,train_loss,val_loss,val_acc\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch);
    out += ',';
    out += format_double(r.lr);
    out += ',';
    out += format_double(r.train_loss);
    out += ',';
    out += format_double(r.val_loss);
    out += ',';
    out += format_double(r.val_acc);
    out += '\n';
  }
  return out;
}

}  // namespace corpgnn
