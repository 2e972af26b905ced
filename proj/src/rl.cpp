#include "cee/rl.hpp"

#include <algorithm>
#include <cmath>

#include "cee/errors.hpp"

namespace cee {

bool Trajectory::is_valid(std::size_t num_layers) const {
  if (steps.empty() || steps.size() > num_layers) return false;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].layer != i + 1) return false;
    const bool last = i + 1 == steps.size();
    if ((steps[i].action == Action::Exit) != last) return false;
  }
  return true;
}

void RewardConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("reward alpha must be a finite value >= 0");
}

double reward(Action action, std::size_t layer, double loss, std::size_t memorized, std::size_t num_layers,
              const RewardConfig& cfg) {
  if (num_layers < 1 || layer < 1 || layer > num_layers) throw UsageError("reward: layer outside [1, L]");
  if (memorized < 1 || memorized > num_layers) throw UsageError("reward: memorized layer outside [1, L]");
  if (!(loss >= 0.0)) throw UsageError("reward: loss must be >= 0");
  if (!(cfg.alpha >= 0.0)) throw UsageError("reward: alpha must be >= 0");
  if (action == Action::Continue) return 0.0;
  const double t = static_cast<double>(layer);
  if (cfg.variant == RewardVariant::Vanilla) return -loss - cfg.alpha * t;
  const double coefficient = 1.0 - static_cast<double>(memorized) / static_cast<double>(num_layers);
  return -loss - cfg.alpha * coefficient * t;
}

Trajectory sample_trajectory(const ModelBundle& model, std::span<const Vec> states, double eps, Rng& rng) {
  const std::size_t L = model.num_layers();
  if (states.size() != L) throw UsageError("sample_trajectory: need all L states");
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("sample_trajectory: eps must lie in [0, 1]");
  Trajectory tr;
  for (std::size_t t = 1; t <= L; ++t) {
    TrajectoryStep step{t, states[t - 1], Action::Exit, model.policy_exit_prob(t, states[t - 1])};
    if (t < L) {
      const bool explore = eps > 0.0 && rng.uniform() < eps;
      const double p = explore ? 0.5 : step.p_exit;
      step.action = rng.uniform() < p ? Action::Exit : Action::Continue;
    }
    const bool done = step.action == Action::Exit;
    tr.steps.push_back(std::move(step));
    if (done) break;
  }
  return tr;
}

Trajectory sample_trajectory(const ModelBundle& model, const Instance& inst, double eps, Rng& rng) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw UsageError("sample_trajectory: eps must lie in [0, 1]");
  const std::size_t L = model.num_layers();
  Trajectory tr;
  Vec s = model.embed(inst.features);
  for (std::size_t t = 1; t <= L; ++t) {
    s = model.apply_block(t, s);
    TrajectoryStep step{t, s, Action::Exit, model.policy_exit_prob(t, s)};
    if (t < L) {
      const bool explore = eps > 0.0 && rng.uniform() < eps;
      const double p = explore ? 0.5 : step.p_exit;
      step.action = rng.uniform() < p ? Action::Exit : Action::Continue;
    }
    const bool done = step.action == Action::Exit;
    tr.steps.push_back(std::move(step));
    if (done) break;
  }
  return tr;
}

namespace {

std::size_t lookup_memorized(const Instance& inst, const MemorizedLayerTable& table, const RewardConfig& cfg,
                             std::size_t L) {
  const auto it = table.find(inst.id);
  if (it != table.end()) return it->second;
  if (cfg.variant == RewardVariant::HardnessGuided) {
    throw UsageError("instance " + std::to_string(inst.id) + " missing from memorized-layer table");
  }
  return L;  // unused by the vanilla reward
}

}  // namespace

double exit_reward(const ModelBundle& model, const Instance& inst, std::size_t layer, std::span<const double> state,
                   const MemorizedLayerTable& table, const RewardConfig& cfg) {
  const std::size_t L = model.num_layers();
  const double loss = cross_entropy(inst.label, model.classify(layer, state));
  return reward(Action::Exit, layer, loss, lookup_memorized(inst, table, cfg, L), L, cfg);
}

double trajectory_return(const Trajectory& tr, const Instance& inst, const ModelBundle& model,
                         const MemorizedLayerTable& table, const RewardConfig& cfg) {
  const std::size_t L = model.num_layers();
  if (!tr.is_valid(L)) throw UsageError("trajectory_return: invalid trajectory");
  const std::size_t memorized = lookup_memorized(inst, table, cfg, L);
  double total = 0.0;
  for (const TrajectoryStep& step : tr.steps) {
    double loss = 0.0;
    if (step.action == Action::Exit) loss = cross_entropy(inst.label, model.classify(step.layer, step.state));
    total += reward(step.action, step.layer, loss, memorized, L, cfg);
  }
  return total;
}

void accumulate_log_prob_gradient(ModelBundle& model, const Trajectory& tr, double coefficient) {
  const std::size_t L = model.num_layers();
  if (!tr.is_valid(L)) throw UsageError("accumulate_log_prob_gradient: invalid trajectory");
  if (coefficient == 0.0) return;
  Tape tape;
  std::vector<Tape::Node> terms;
  for (const TrajectoryStep& step : tr.steps) {
    if (step.layer == L) break;  // forced exit
    // the state enters as a constant: no gradient reaches the backbone
    const Tape::Node s = tape.constant(step.state);
    const Tape::Node logits = model.record_policy_logits(tape, step.layer, s);
    terms.push_back(tape.log_softmax_at(logits, step.action == Action::Exit ? kExitLogit : kContinueLogit));
  }
  if (terms.empty()) return;
  const Vec ones(terms.size(), 1.0);
  tape.backward(tape.weighted_sum(terms, ones), coefficient);
}

ReinforceStats reinforce_update(ModelBundle& model, std::span<const ScoredTrajectory> batch, double lr) {
  if (batch.empty()) throw UsageError("reinforce_update: empty batch");
  if (!(lr > 0.0)) throw ConfigError("reinforce_update: learning rate must be positive");
  ReinforceStats stats;
  for (const ScoredTrajectory& s : batch) stats.baseline += s.ret;
  stats.baseline /= static_cast<double>(batch.size());
  // The rounded mean of identical returns can differ from them in the last bit.
  if (std::all_of(batch.begin(), batch.end(), [&](const ScoredTrajectory& s) { return s.ret == batch[0].ret; })) {
    stats.baseline = batch[0].ret;
  }
  stats.mean_return = stats.baseline;

  auto theta = model.param_groups().policy;
  zero_grads(theta);
  const double n = static_cast<double>(batch.size());
  // grads hold the negative ascent direction so sgd_step climbs the objective
  for (const ScoredTrajectory& s : batch) {
    accumulate_log_prob_gradient(model, s.trajectory, -(s.ret - stats.baseline) / n);
  }
  sgd_step(theta, lr);
  return stats;
}

Vec exit_distribution(std::span<const double> p_exit) {
  const std::size_t L = p_exit.size();
  Vec pr(L, 0.0);
  double survive = 1.0;
  for (std::size_t t = 0; t + 1 < L; ++t) {
    pr[t] = survive * p_exit[t];
    survive *= 1.0 - p_exit[t];
  }
  if (L > 0) pr[L - 1] = survive;
  return pr;
}

double expected_reward(std::span<const double> p_exit, std::span<const double> exit_rewards) {
  if (p_exit.size() != exit_rewards.size()) throw UsageError("expected_reward: length mismatch");
  const Vec pr = exit_distribution(p_exit);
  double e = 0.0;
  for (std::size_t t = 0; t < pr.size(); ++t) e += pr[t] * exit_rewards[t];
  return e;
}

double enumerate_expected_reward(const ModelBundle& model, const Instance& inst, const MemorizedLayerTable& table,
                                 const RewardConfig& cfg) {
  const std::size_t L = model.num_layers();
  if (L > 16) throw UsageError("enumerate_expected_reward: L > 16");
  const auto states = model.forward_states(inst.features, L);
  Vec p(L), r(L);
  for (std::size_t t = 1; t <= L; ++t) {
    p[t - 1] = model.policy_exit_prob(t, states[t - 1]);
    r[t - 1] = exit_reward(model, inst, t, states[t - 1], table, cfg);
  }
  return expected_reward(p, r);
}

double enumerate_expected_reward_gradient(ModelBundle& model, const Instance& inst, const MemorizedLayerTable& table,
                                          const RewardConfig& cfg, double coefficient) {
  const std::size_t L = model.num_layers();
  if (L > 16) throw UsageError("enumerate_expected_reward_gradient: L > 16");
  const auto states = model.forward_states(inst.features, L);
  Tape tape;
  std::vector<Tape::Node> masses;
  Vec rewards;
  Tape::Node survive = tape.constant({1.0});
  for (std::size_t t = 1; t < L; ++t) {
    const Tape::Node logits = model.record_policy_logits(tape, t, tape.constant(states[t - 1]));
    const Tape::Node p = tape.softmax_at(logits, kExitLogit);
    masses.push_back(tape.mul(survive, p));
    survive = tape.mul(survive, tape.scale_shift(p, -1.0, 1.0));
    rewards.push_back(exit_reward(model, inst, t, states[t - 1], table, cfg));
  }
  masses.push_back(survive);
  rewards.push_back(exit_reward(model, inst, L, states[L - 1], table, cfg));
  const Tape::Node expectation = tape.weighted_sum(masses, rewards);
  tape.backward(expectation, coefficient);
  return tape.scalar(expectation);
}

std::vector<Trajectory> enumerate_trajectories(const ModelBundle& model, const Instance& inst) {
  const std::size_t L = model.num_layers();
  const auto states = model.forward_states(inst.features, L);
  std::vector<Trajectory> all;
  for (std::size_t exit = 1; exit <= L; ++exit) {
    Trajectory tr;
    for (std::size_t t = 1; t <= exit; ++t) {
      tr.steps.push_back(TrajectoryStep{t, states[t - 1], t == exit ? Action::Exit : Action::Continue,
                                        model.policy_exit_prob(t, states[t - 1])});
    }
    all.push_back(std::move(tr));
  }
  return all;
}

}  // namespace cee
