#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cee/data.hpp"
#include "cee/hardness.hpp"
#include "cee/model.hpp"

namespace cee {

enum class Action { Exit, Continue };

struct TrajectoryStep {
  std::size_t layer = 0;
  Vec state;
  Action action = Action::Continue;
  double p_exit = 0.0;  // policy probability at this layer, before any exploration noise
};

// (s_1, a_1) ... (s_T, a_T): Continue everywhere except a final Exit.
struct Trajectory {
  std::vector<TrajectoryStep> steps;

  std::size_t exit_layer() const { return steps.empty() ? 0 : steps.back().layer; }
  bool is_valid(std::size_t num_layers) const;
};

enum class RewardVariant { Vanilla, HardnessGuided };

struct RewardConfig {
  double alpha = 0.02;
  RewardVariant variant = RewardVariant::HardnessGuided;

  void validate() const;
};

// Continue -> 0.
// Exit, Vanilla        -> -H - alpha * t
// Exit, HardnessGuided -> -H - alpha * (1 - M/L) * t
double reward(Action action, std::size_t layer, double loss, std::size_t memorized, std::size_t num_layers,
              const RewardConfig& cfg);

// Walks layers 1..L. Below L: with probability eps a uniform random action,
// otherwise a draw from the policy. Exit is forced at L.
Trajectory sample_trajectory(const ModelBundle& model, const Instance& inst, double eps, Rng& rng);
// Same, over precomputed states s_1..s_L (the backbone must not have changed).
Trajectory sample_trajectory(const ModelBundle& model, std::span<const Vec> states, double eps, Rng& rng);

// Sum of per-step rewards, with H = H(y, P_T(x)) at the exit layer.
double trajectory_return(const Trajectory& tr, const Instance& inst, const ModelBundle& model,
                         const MemorizedLayerTable& table, const RewardConfig& cfg);
double exit_reward(const ModelBundle& model, const Instance& inst, std::size_t layer, std::span<const double> state,
                   const MemorizedLayerTable& table, const RewardConfig& cfg);

struct ScoredTrajectory {
  Trajectory trajectory;
  double ret = 0.0;
};

// Adds coefficient * d/dtheta sum_t log pi(a_t | s_t) to the policy grads.
// The forced exit at layer L carries no policy decision and no term.
void accumulate_log_prob_gradient(ModelBundle& model, const Trajectory& tr, double coefficient);

struct ReinforceStats {
  double baseline = 0.0;
  double mean_return = 0.0;
};

// Ascends (R - b) * sum_t grad log pi(a_t|s_t) averaged over the batch with
// b = mean batch return. Only policy parameters change.
ReinforceStats reinforce_update(ModelBundle& model, std::span<const ScoredTrajectory> batch, double lr);

// Pr(exit at T) for T = 1..L given per-layer exit probabilities; the entry
// for layer L is the forced-exit mass and p_exit[L-1] is ignored.
Vec exit_distribution(std::span<const double> p_exit);
double expected_reward(std::span<const double> p_exit, std::span<const double> exit_rewards);

// Exact E_tau[R(tau)] by enumerating the L possible exit layers.
double enumerate_expected_reward(const ModelBundle& model, const Instance& inst, const MemorizedLayerTable& table,
                                 const RewardConfig& cfg);
// Adds coefficient * dE/dtheta to the policy grads by differentiating the
// enumeration directly (no log-derivative trick). Returns E.
double enumerate_expected_reward_gradient(ModelBundle& model, const Instance& inst, const MemorizedLayerTable& table,
                                          const RewardConfig& cfg, double coefficient = 1.0);
// The L deterministic trajectories (exit at 1, ..., exit at L).
std::vector<Trajectory> enumerate_trajectories(const ModelBundle& model, const Instance& inst);

}  // namespace cee
