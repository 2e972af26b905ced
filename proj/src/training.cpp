#include "cee/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "cee/errors.hpp"
#include "cee/inference.hpp"

namespace cee {

void TrainConfig::validate() const {
  if (init_epochs < 1 || policy_epochs < 1 || task_epochs < 1) throw ConfigError("train epochs must all be >= 1");
  if (rounds_max < 1) throw ConfigError("train.rounds_max must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (samples_per_instance < 1) throw ConfigError("train.samples_per_instance must be >= 1");
  for (double lr : {lr_init, lr_policy, lr_task}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train learning rates must be positive");
  }
  for (double e : {eps_start, eps_end}) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("train epsilon schedule must lie in [0, 1]");
  }
  reward.validate();
}

double epsilon_at(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.policy_epochs <= 1) return cfg.eps_start;
  const double frac = static_cast<double>(std::min(epoch, cfg.policy_epochs - 1)) /
                      static_cast<double>(cfg.policy_epochs - 1);
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

double weighted_layer_objective(std::span<const double> layer_losses) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < layer_losses.size(); ++i) {
    num += static_cast<double>(i + 1) * layer_losses[i];
    den += static_cast<double>(i + 1);
  }
  return den > 0.0 ? num / den : 0.0;
}

ModelBundle initial_model(const BackboneConfig& config, std::uint64_t seed) {
  Rng rng = Rng(seed).split("model");
  return ModelBundle::build(config, rng);
}

namespace {

void emit(const TrainHooks& hooks, const nlohmann::json& record) {
  if (hooks.log) hooks.log(record.dump());
}

void check_finite(double v, const std::string& where) {
  if (!std::isfinite(v)) throw TrainingError("training diverged: non-finite objective " + where);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  return order;
}

// Weighted-sum objective for one instance; returns (objective, final-layer correct).
std::pair<double, bool> record_init_instance(ModelBundle& model, const Instance& inst, std::optional<double> scale) {
  const std::size_t L = model.num_layers();
  Tape tape;
  Tape::Node s = model.record_embed(tape, inst.features);
  std::vector<Tape::Node> losses;
  Vec weights;
  const double denom = static_cast<double>(L * (L + 1)) / 2.0;
  bool final_correct = false;
  for (std::size_t t = 1; t <= L; ++t) {
    s = model.record_block(tape, t, s);
    const Tape::Node logits = model.record_classifier_logits(tape, t, s);
    losses.push_back(tape.softmax_cross_entropy(logits, inst.label));
    weights.push_back(static_cast<double>(t) / denom);
    if (t == L) final_correct = argmax(tape.value(logits)) == inst.label;
  }
  const Tape::Node objective = tape.weighted_sum(losses, weights);
  if (scale) tape.backward(objective, *scale);
  return {tape.scalar(objective), final_correct};
}

}  // namespace

static InitStageResult train_init_impl(ModelBundle& model, const Dataset& train, const TrainConfig& cfg, Rng& rng);
static TaskStageResult train_task_stage_impl(ModelBundle& model, const Dataset& train, const TrainConfig& cfg,
                                             Rng& rng);

double init_objective(ModelBundle& model, const Dataset& data, std::optional<double> accumulate_scale) {
  if (data.empty()) throw DataError("init_objective: empty dataset");
  double total = 0.0;
  for (const Instance& inst : data.instances) total += record_init_instance(model, inst, accumulate_scale).first;
  return total / static_cast<double>(data.size());
}

InitStageResult train_init(ModelBundle& model, const Dataset& train, const TrainConfig& cfg, Rng& rng) {
  try {
    return train_init_impl(model, train, cfg, rng);
  } catch (const NumericError& e) {
    throw TrainingError(std::string("training diverged in init stage: ") + e.what());
  }
}

static InitStageResult train_init_impl(ModelBundle& model, const Dataset& train, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (train.empty()) throw DataError("train_init: empty training set");
  auto omega = model.param_groups().task;
  InitStageResult result;
  result.correctness_history.assign(train.size(), {});
  for (std::size_t epoch = 0; epoch < cfg.init_epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      zero_grads(omega);
      double batch_total = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto [objective, correct] = record_init_instance(model, train.instances[order[k]], scale);
        result.correctness_history[order[k]].push_back(correct);
        batch_total += objective;
      }
      check_finite(batch_total, "in init stage epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                                    std::to_string(start));
      sgd_step(omega, cfg.lr_init);
      epoch_total += batch_total;
    }
    result.objective_trace.push_back(epoch_total / static_cast<double>(train.size()));
  }
  for (const auto& history : result.correctness_history) result.forgetting.push_back(forgetting_events(history));
  return result;
}

MemorizedLayerTable refresh_memorized(const ModelBundle& model, const Dataset& train) {
  MemorizedLayerTable table;
  for (const Instance& inst : train.instances) table[inst.id] = memorized_layer(correctness(model, inst));
  return table;
}

PolicyStageResult train_policy_stage(ModelBundle& model, const Dataset& train, const MemorizedLayerTable& table,
                                     const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (train.empty()) throw DataError("train_policy_stage: empty training set");
  const std::size_t L = model.num_layers();

  // omega is frozen for the whole stage, so states and exit rewards are fixed.
  std::vector<std::vector<Vec>> states;
  std::vector<Vec> rewards;
  states.reserve(train.size());
  for (const Instance& inst : train.instances) {
    states.push_back(model.forward_states(inst.features, L));
    Vec r(L);
    for (std::size_t t = 1; t <= L; ++t) r[t - 1] = exit_reward(model, inst, t, states.back()[t - 1], table, cfg.reward);
    rewards.push_back(std::move(r));
  }

  PolicyStageResult result;
  std::vector<ScoredTrajectory> batch;
  for (std::size_t epoch = 0; epoch < cfg.policy_epochs; ++epoch) {
    const double eps = epsilon_at(cfg, epoch);
    const auto order = shuffled_indices(train.size(), rng);
    double return_total = 0.0;
    double layer_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        for (std::size_t rep = 0; rep < cfg.samples_per_instance; ++rep) {
          Trajectory tr = sample_trajectory(model, states[i], eps, rng);
          const double ret = rewards[i][tr.exit_layer() - 1];
          return_total += ret;
          layer_total += static_cast<double>(tr.exit_layer());
          batch.push_back(ScoredTrajectory{std::move(tr), ret});
        }
      }
      reinforce_update(model, batch, cfg.lr_policy);
    }
    const double samples = static_cast<double>(train.size() * cfg.samples_per_instance);
    result.mean_return_trace.push_back(return_total / samples);
    result.mean_exit_layer_trace.push_back(layer_total / samples);
  }
  return result;
}

ExitLoss accumulate_exit_loss_gradient(ModelBundle& model, const Instance& inst, Rng& rng, double scale) {
  const std::size_t L = model.num_layers();
  Tape tape;
  Tape::Node s = model.record_embed(tape, inst.features);
  for (std::size_t t = 1; t <= L; ++t) {
    s = model.record_block(tape, t, s);
    const bool exit = t == L || rng.uniform() < model.policy_exit_prob(t, tape.value(s));
    if (exit) {
      const Tape::Node loss = tape.softmax_cross_entropy(model.record_classifier_logits(tape, t, s), inst.label);
      tape.backward(loss, scale);
      return ExitLoss{t, tape.scalar(loss)};
    }
  }
  return {};
}

TaskStageResult train_task_stage(ModelBundle& model, const Dataset& train, const TrainConfig& cfg, Rng& rng) {
  try {
    return train_task_stage_impl(model, train, cfg, rng);
  } catch (const NumericError& e) {
    throw TrainingError(std::string("training diverged in task stage: ") + e.what());
  }
}

static TaskStageResult train_task_stage_impl(ModelBundle& model, const Dataset& train, const TrainConfig& cfg,
                                             Rng& rng) {
  cfg.validate();
  if (train.empty()) throw DataError("train_task_stage: empty training set");
  auto omega = model.param_groups().task;
  TaskStageResult result;
  for (std::size_t epoch = 0; epoch < cfg.task_epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    double loss_total = 0.0;
    double layer_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      zero_grads(omega);
      double batch_total = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const ExitLoss el = accumulate_exit_loss_gradient(model, train.instances[order[k]], rng, scale);
        batch_total += el.loss;
        layer_total += static_cast<double>(el.exit_layer);
      }
      check_finite(batch_total, "in task stage epoch " + std::to_string(epoch + 1));
      sgd_step(omega, cfg.lr_task);
      loss_total += batch_total;
    }
    result.loss_trace.push_back(loss_total / static_cast<double>(train.size()));
    result.mean_exit_layer_trace.push_back(layer_total / static_cast<double>(train.size()));
  }
  return result;
}

InitStageResult run_init_stage(ModelBundle& model, const Dataset& train, const TrainConfig& cfg,
                               const TrainHooks& hooks) {
  Rng rng = Rng(cfg.seed).split("init-stage");
  InitStageResult init = train_init(model, train, cfg, rng);
  for (std::size_t e = 0; e < init.objective_trace.size(); ++e) {
    emit(hooks, {{"round", 0}, {"stage", "init"}, {"epoch", e + 1}, {"objective", init.objective_trace[e]}});
  }
  if (hooks.after_init) hooks.after_init(model, init);
  return init;
}

TrainReport train_rounds(ModelBundle& model, const Dataset& train, const Dataset& dev, const TrainConfig& cfg,
                         const InitStageResult& init, const TrainHooks& hooks) {
  cfg.validate();
  if (dev.empty()) throw DataError("train_iterative: empty dev set");
  const Rng root(cfg.seed);
  const std::size_t L = model.num_layers();
  TrainReport report;
  report.init_trace = init.objective_trace;

  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

  ModelBundle best = model;
  bool have_best = false;
  std::size_t stale = 0;
  for (std::size_t round = 1; round <= cfg.rounds_max; ++round) {
    RoundRecord rec;
    rec.round = round;

    const MemorizedLayerTable table = refresh_memorized(model, train);
    rec.memorized_histogram.assign(L, 0);
    for (const auto& [id, m] : table) ++rec.memorized_histogram[m - 1];

    Rng policy_rng = root.split("policy-stage").split(round);
    const PolicyStageResult policy = train_policy_stage(model, train, table, cfg, policy_rng);
    rec.policy_trace = policy.mean_return_trace;
    for (std::size_t e = 0; e < policy.mean_return_trace.size(); ++e) {
      emit(hooks, {{"round", round}, {"stage", "policy"}, {"epoch", e + 1}, {"objective", policy.mean_return_trace[e]},
                   {"mean_exit_layer", policy.mean_exit_layer_trace[e]}});
    }

    Rng task_rng = root.split("task-stage").split(round);
    const TaskStageResult task = train_task_stage(model, train, cfg, task_rng);
    rec.task_trace = task.loss_trace;
    for (std::size_t e = 0; e < task.loss_trace.size(); ++e) {
      emit(hooks, {{"round", round}, {"stage", "task"}, {"epoch", e + 1}, {"objective", task.loss_trace[e]},
                   {"mean_exit_layer", task.mean_exit_layer_trace[e]}});
    }

    const EvalMetrics m = evaluate(model, dev);
    rec.dev_accuracy = m.accuracy;
    rec.dev_mean_exit_layer = m.mean_exit_layer;
    rec.dev_saved_layers = m.saved_layers;
    emit(hooks, {{"round", round}, {"stage", "eval"}, {"dev_accuracy", m.accuracy},
                 {"mean_exit_layer", m.mean_exit_layer}, {"saved_layers", m.saved_layers}});
    report.rounds.push_back(std::move(rec));

    if (!hooks.checkpoint_dir.empty()) {
      save_checkpoint(hooks.checkpoint_dir / ("round_" + std::to_string(round) + ".ckpt"), model);
    }
    if (!have_best || m.accuracy > report.best_dev_accuracy) {
      have_best = true;
      best = model;
      report.best_round = round;
      report.best_dev_accuracy = m.accuracy;
      stale = 0;
      if (!hooks.checkpoint_dir.empty()) save_checkpoint(hooks.checkpoint_dir / "best.ckpt", model);
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  model = std::move(best);
  return report;
}

TrainReport train_iterative(ModelBundle& model, const Dataset& train, const Dataset& dev, const TrainConfig& cfg,
                            const TrainHooks& hooks) {
  cfg.validate();
  const InitStageResult init = run_init_stage(model, train, cfg, hooks);
  return train_rounds(model, train, dev, cfg, init, hooks);
}

LayerExitCounts conditional_layer_counts(const ModelBundle& model, const Dataset& data,
                                         std::size_t samples_per_instance, Rng& rng) {
  const std::size_t L = model.num_layers();
  LayerExitCounts c{std::vector<std::size_t>(L, 0), std::vector<std::size_t>(L, 0)};
  for (const Instance& inst : data.instances) {
    const auto states = model.forward_states(inst.features, L);
    for (std::size_t rep = 0; rep < samples_per_instance; ++rep) {
      const Trajectory tr = sample_trajectory(model, states, 0.0, rng);
      const std::size_t T = tr.exit_layer();
      ++c.totals[T - 1];
      if (argmax(model.classify(T, states[T - 1])) == inst.label) ++c.hits[T - 1];
    }
  }
  return c;
}

std::vector<std::optional<double>> conditional_layer_accuracy(const ModelBundle& model, const Dataset& data,
                                                              std::size_t samples_per_instance, Rng& rng) {
  const LayerExitCounts c = conditional_layer_counts(model, data, samples_per_instance, rng);
  std::vector<std::optional<double>> acc(c.totals.size());
  for (std::size_t t = 0; t < acc.size(); ++t) {
    if (c.totals[t] > 0) acc[t] = static_cast<double>(c.hits[t]) / static_cast<double>(c.totals[t]);
  }
  return acc;
}

}  // namespace cee
