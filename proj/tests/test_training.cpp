#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "corpgnn/checkpoint.hpp"
#include "corpgnn/error.hpp"
#include "corpgnn/pipeline.hpp"
#include "corpgnn/training.hpp"

using namespace corpgnn;
namespace fs = std::filesystem;

namespace {

// Independent closed form of the warm-restart schedule for T_mult = 2:
// cycle i spans [T0(2^i − 1), T0(2^(i+1) − 1)).
double sgdr_mult2(double t, double lo, double hi, double t0) {
  const double i = std::floor(std::log2(t / t0 + 1.0));
  const double start = t0 * (std::pow(2.0, i) - 1.0);
  const double len = t0 * std::pow(2.0, i);
  return lo + 0.5 * (hi - lo) * (1.0 + std::cos(std::numbers::pi * (t - start) / len));
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

const PreparedData& small_prepared() {
  static const PreparedData prep = [] {
    const auto data = generate_synthetic({40, 4, 0.1, 3, 2014});
    DataConfig d;
    d.split_seed = 1;
    return prepare_data(data.panels, d, MappingConfig{});
  }();
  return prep;
}

// Eight samples from distinct enterprises covering every class.
std::vector<GraphSample> overfit_batch() {
  const auto& prep = small_prepared();
  std::vector<GraphSample> out;
  std::set<std::string> used;
  std::map<int, int> per_class;
  for (const auto& s : prep.train) {
    if (used.count(s.key.enterprise_id) || per_class[s.label] >= 3) continue;
    used.insert(s.key.enterprise_id);
    ++per_class[s.label];
    out.push_back(s);
    if (out.size() == 8) break;
  }
  return out;
}

}  // namespace

TEST(WarmRestart, BoundariesAndMidpoint) {
  TrainConfig c;
  c.lr_max = 1e-3;
  c.lr_min = 1e-5;
  EXPECT_EQ(warm_restart_lr(0.0, c), c.lr_max);
  for (double boundary : {10.0, 30.0, 70.0, 150.0}) EXPECT_NEAR(warm_restart_lr(boundary, c), c.lr_max, 1e-12);
  EXPECT_NEAR(warm_restart_lr(5.0, c), 0.5 * (c.lr_max + c.lr_min), 1e-12);
  c.lr_min = 0.0;
  EXPECT_NEAR(warm_restart_lr(5.0, c), 5e-4, 1e-12);
}

TEST(WarmRestart, MatchesClosedFormAndStaysInRange) {
  TrainConfig c;
  for (double t = 0.0; t < 140.0; t += 0.37) {
    const double lr = warm_restart_lr(t, c);
    EXPECT_NEAR(lr, sgdr_mult2(t, c.lr_min, c.lr_max, c.restart_period_0), 1e-12) << t;
    EXPECT_GE(lr, c.lr_min);
    EXPECT_LE(lr, c.lr_max);
  }
  // Continuous within a cycle: small steps give small changes.
  for (double t = 10.5; t < 29.5; t += 0.01) {
    EXPECT_LT(std::abs(warm_restart_lr(t + 0.01, c) - warm_restart_lr(t, c)), 1e-5);
  }
}

TEST(WarmRestart, ConstantPeriod) {
  TrainConfig c;
  c.restart_mult = 1.0;
  c.restart_period_0 = 4.0;
  for (double t : {0.5, 1.3, 2.9}) EXPECT_NEAR(warm_restart_lr(t, c), warm_restart_lr(t + 8.0, c), 1e-15);
  EXPECT_NEAR(warm_restart_lr(12.0, c), c.lr_max, 1e-12);
}

TEST(Optimizer, AdamFirstStepByHand) {
  ParameterStore ps;
  ps.add("theta", Array2(1, 1, 0.0));
  ps.grad("theta").fill(1.0);
  TrainConfig c;
  auto st = OptimizerState::for_params(ps);
  const double lr = 1e-3;
  optimizer_step(ps, st, lr, c);
  // m = (1−β₁)·1, v = (1−β₂)·1; bias correction gives m̂ = v̂ = 1, so
  // θ = −lr·1/(√1 + ε).
  const double expected = -lr * 1.0 / (1.0 + c.eps);
  EXPECT_NEAR(ps.value("theta")(0, 0), expected, 1e-18);
  EXPECT_NEAR(ps.value("theta")(0, 0), -lr, lr * c.eps * 1.01);
  EXPECT_EQ(st.step, 1);
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  ParameterStore ps;
  ps.add("w", Array2{{0.3, -1.2}, {2.0, 0.0}});
  const Array2 before = ps.value("w");
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    TrainConfig c;
    c.optimizer = kind;
    auto st = OptimizerState::for_params(ps);
    ps.zero_grad();
    optimizer_step(ps, st, 0.1, c);
    EXPECT_EQ(ps.value("w"), before);
  }
}

TEST(Optimizer, SgdMomentumRecurrence) {
  ParameterStore ps;
  ps.add("w", Array2{{1.0, -2.0}});
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.momentum = 0.0;
  auto st = OptimizerState::for_params(ps);
  ps.grad("w") = Array2{{0.5, 0.25}};
  optimizer_step(ps, st, 0.1, c);
  EXPECT_EQ(ps.value("w"), (Array2{{1.0 - 0.05, -2.0 - 0.025}}));

  ParameterStore pm;
  pm.add("w", Array2{{1.0}});
  c.momentum = 0.9;
  auto sm = OptimizerState::for_params(pm);
  pm.grad("w").fill(1.0);
  optimizer_step(pm, sm, 0.1, c);  // v = 1
  optimizer_step(pm, sm, 0.1, c);  // v = 1.9
  EXPECT_NEAR(pm.value("w")(0, 0), 1.0 - 0.1 * 1.0 - 0.1 * 1.9, 1e-15);
}

TEST(Optimizer, DecoupledWeightDecay) {
  ParameterStore ps;
  ps.add("w", Array2{{2.0}});
  TrainConfig c;
  c.optimizer = OptimizerKind::kSgd;
  c.momentum = 0.0;
  c.weight_decay = 0.1;
  auto st = OptimizerState::for_params(ps);
  ps.zero_grad();
  optimizer_step(ps, st, 0.5, c);
  EXPECT_NEAR(ps.value("w")(0, 0), 2.0 * (1.0 - 0.5 * 0.1), 1e-15);
}

TEST(Optimizer, NonFiniteGradientAborts) {
  ParameterStore ps;
  ps.add("w", Array2{{1.0, 2.0}});
  ps.grad("w")(0, 1) = std::numeric_limits<double>::infinity();
  TrainConfig c;
  auto st = OptimizerState::for_params(ps);
  EXPECT_EQ(code_of([&] { optimizer_step(ps, st, 0.1, c); }), ErrorCode::kNonFiniteGradient);
  EXPECT_EQ(ps.value("w"), (Array2{{1.0, 2.0}}));
}

TEST(Batches, BlockDiagonalAndShuffled) {
  const auto& train = small_prepared().train;
  const auto batches = make_batches(train, 16, 3, 0);
  std::size_t graphs = 0;
  for (const auto& b : batches) {
    EXPECT_EQ(b.num_nodes(), 29u * static_cast<std::size_t>(b.num_graphs));
    EXPECT_NO_THROW(b.validate());
    graphs += static_cast<std::size_t>(b.num_graphs);
  }
  EXPECT_EQ(graphs, train.size());
  EXPECT_EQ(make_batches(train, 100000, 3, 0).size(), 1u);

  auto label_multiset = [](const std::vector<GraphBatch>& bs) {
    std::vector<int> l;
    for (const auto& b : bs) l.insert(l.end(), b.labels.begin(), b.labels.end());
    return l;
  };
  const auto e0 = label_multiset(make_batches(train, 16, 3, 0));
  const auto e1 = label_multiset(make_batches(train, 16, 3, 1));
  EXPECT_EQ(e0, label_multiset(make_batches(train, 16, 3, 0)));
  auto s0 = e0, s1 = e1;
  std::sort(s0.begin(), s0.end());
  std::sort(s1.begin(), s1.end());
  EXPECT_EQ(s0, s1);
  const auto b0 = make_batches(train, 16, 3, 0), b1 = make_batches(train, 16, 3, 1);
  EXPECT_NE(b0.front().x, b1.front().x);
}

TEST(Fit, OverfitsARepeatedBatch) {
  const auto batch = overfit_batch();
  ASSERT_EQ(batch.size(), 8u);
  ModelConfig m;
  m.seed = 1;
  TrainConfig t;
  t.epochs = 200;
  t.batch_size = 8;
  t.lr_max = 1e-2;
  t.lr_min = 1e-4;
  t.restart_period_0 = 200;
  t.early_stop_patience = 0;
  const auto fr = fit(batch, batch, m, t);
  EXPECT_LT(fr.history.back().train_loss, 0.01);
}

TEST(Fit, DeterministicHistoryAndBestCheckpoint) {
  const auto& prep = small_prepared();
  ModelConfig m;
  TrainConfig t;
  t.epochs = 6;
  t.batch_size = 16;
  t.seed = 5;
  const auto a = fit(prep.train, prep.validation, m, t);
  const auto b = fit(prep.train, prep.validation, m, t);
  EXPECT_EQ(format_history(a.history), format_history(b.history));
  double best = 1e300;
  for (const auto& r : a.history) best = std::min(best, r.val_loss);
  EXPECT_EQ(a.best_val_loss, best);
  EXPECT_LE(a.best_val_loss, a.history.back().val_loss);
  EXPECT_NEAR(evaluate(prep.validation, a.best_params, m).loss, a.best_val_loss, 1e-12);
  EXPECT_EQ(a.history.front().lr, t.lr_max);
  EXPECT_EQ(format_history(a.history).substr(0, 38), "epoch,lr,train_loss,val_loss,val_acc\n0");
}

TEST(Fit, EarlyStoppingHonoursPatience) {
  const auto& prep = small_prepared();
  ModelConfig m;
  TrainConfig t;
  t.epochs = 60;
  t.lr_max = 1e-12;  // nothing improves after the first epoch
  t.lr_min = 1e-13;
  t.early_stop_patience = 3;
  const auto fr = fit(prep.train, prep.validation, m, t);
  EXPECT_LE(fr.history.size(), static_cast<std::size_t>(fr.best_epoch + 1 + 3));
}

TEST(Fit, DivergenceIsReported) {
  const auto batch = overfit_batch();
  ModelConfig m;
  TrainConfig t;
  t.epochs = 50;
  t.batch_size = 8;
  t.optimizer = OptimizerKind::kSgd;
  t.lr_max = 1e200;
  t.lr_min = 1e199;
  try {
    fit(batch, batch, m, t);
    FAIL() << "expected a numerical failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kNumerical) << e.what();
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  t.lr_min = t.lr_max;
  EXPECT_THROW(t.validate(), Error);
  t = TrainConfig{};
  t.restart_mult = 0.5;
  EXPECT_THROW(t.validate(), Error);
  t = TrainConfig{};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), Error);
  t = TrainConfig{};
  EXPECT_EQ(TrainConfig::from_json(t.to_json()).to_json(), t.to_json());
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  const auto& prep = small_prepared();
  Checkpoint ck;
  ck.model.seed = 3;
  ck.params = init_params(ck.model);
  ck.stats = prep.stats;
  ck.best_epoch = 4;
  const fs::path path = fs::temp_directory_path() / "corpgnn_ckpt_test.json";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.best_epoch, 4);
  EXPECT_EQ(back.model.to_json(), ck.model.to_json());
  EXPECT_EQ(back.stats.means, ck.stats.means);
  const GraphBatch batch = collate(std::span<const GraphSample>(prep.validation));
  const auto a = predict(batch, ck.params, ck.model).logits;
  const auto b = predict(batch, back.params, back.model).logits;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);

  auto j = ck.to_json();
  j["format_version"] = kCheckpointFormatVersion + 1;
  EXPECT_EQ(code_of([&] { Checkpoint::from_json(j); }), ErrorCode::kFormatVersionMismatch);
  auto broken = ck.to_json();
  broken["params"]["mlp.W2"]["shape"] = {64, 4};
  EXPECT_EQ(code_of([&] { Checkpoint::from_json(broken); }), ErrorCode::kCorruptCheckpoint);
  {
    std::ofstream out(path);
    out << "{not json";
  }
  EXPECT_EQ(code_of([&] { load_checkpoint(path); }), ErrorCode::kCorruptCheckpoint);
  fs::remove(path);
  EXPECT_EQ(code_of([&] { load_checkpoint(path); }), ErrorCode::kIoError);
}

TEST(Pipeline, SamplesCarryWindowFeaturesAndTrees) {
  const auto& prep = small_prepared();
  EXPECT_EQ(prep.dropped_short_history, 40u);  // first year of every enterprise
  EXPECT_EQ(prep.train.size() + prep.validation.size() + prep.test.size(), 40u * 3u);
  for (const auto& s : prep.train) {
    EXPECT_EQ(s.features.rows(), 29u);
    EXPECT_EQ(s.features.cols(), 4u);
    EXPECT_EQ(s.edges.size(), 28u);
  }
  // Short history: the second year has two rows, front-padded with zeros.
  const auto& first = *std::find_if(prep.train.begin(), prep.train.end(), [](const auto& s) { return s.key.year == 2015; });
  for (std::size_t k = 0; k < 29; ++k) {
    EXPECT_EQ(first.features(k, 0), 0.0);
    EXPECT_EQ(first.features(k, 1), 0.0);
  }
}

TEST(Pipeline, StandardizationFitOnTrainingEnterprisesOnly) {
  const auto& prep = small_prepared();
  const auto keys = all_rows_of(prep.panels, prep.split.train_enterprises);
  auto [unused, stats] = standardize(prep.panels, keys);
  EXPECT_EQ(stats.means, prep.stats.means);
  EXPECT_EQ(stats.stds, prep.stats.stds);
}

TEST(Pipeline, GlobalGraphAndTreePlus) {
  const auto data = generate_synthetic({30, 3, 0.1, 8, 2014});
  DataConfig d;
  MappingConfig m;
  m.global_graph = true;
  m.graph = GraphKind::kTreePlus;
  const auto prep = prepare_data(data.panels, d, m);
  ASSERT_TRUE(prep.shared_graph.has_value());
  EXPECT_EQ(prep.shared_graph->edges.size(), 38u);
  for (const auto& s : prep.test) EXPECT_EQ(s.edges.size(), 38u);
}
