#include "cee/sweep.hpp"

#include "cee/errors.hpp"

namespace cee {

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 8; ++k) grid.push_back(0.005 * k);
  return grid;
}

SweepResult sweep_alpha(const SweepSetup& setup, std::span<const double> alphas, std::span<const std::uint64_t> seeds,
                        const std::function<void(const SweepRunView&)>& on_run) {
  if (alphas.empty()) throw ConfigError("sweep: alpha list is empty");
  if (seeds.empty()) throw ConfigError("sweep: seed list is empty");
  if (!setup.train_data || !setup.dev_data || !setup.test_data) throw UsageError("sweep: datasets not set");
  if (!setup.checkpoint_dir.empty()) std::filesystem::create_directories(setup.checkpoint_dir);

  SweepResult result;
  std::vector<SweepSummary> sums(alphas.size());
  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = setup.train;
    cfg.seed = seed;
    ModelBundle init_model = initial_model(setup.model, seed);
    const InitStageResult init = run_init_stage(init_model, *setup.train_data, cfg);
    const double full_depth = evaluate_full_depth(init_model, *setup.test_data).accuracy;

    for (std::size_t a = 0; a < alphas.size(); ++a) {
      cfg.reward.alpha = alphas[a];
      ModelBundle model = init_model;
      const TrainReport report = train_rounds(model, *setup.train_data, *setup.dev_data, cfg, init);

      SweepRecord rec;
      rec.alpha = alphas[a];
      rec.seed = seed;
      rec.metrics = evaluate(model, *setup.test_data);
      rec.full_depth_accuracy = full_depth;
      rec.best_round = report.best_round;
      if (!setup.checkpoint_dir.empty()) {
        rec.checkpoint = setup.checkpoint_dir /
                         ("alpha_" + format_double(alphas[a]) + "_seed_" + std::to_string(seed) + ".ckpt");
        save_checkpoint(rec.checkpoint, model);
      }
      if (on_run) on_run(SweepRunView{alphas[a], seed, init_model, model, report});

      SweepSummary& s = sums[a];
      s.alpha = alphas[a];
      s.accuracy += rec.metrics.accuracy;
      s.mean_exit_layer += rec.metrics.mean_exit_layer;
      s.saved_layers += rec.metrics.saved_layers;
      s.full_depth_accuracy += full_depth;
      ++s.runs;
      result.runs.push_back(std::move(rec));
    }
  }
  for (SweepSummary& s : sums) {
    const double n = static_cast<double>(s.runs);
    s.accuracy /= n;
    s.mean_exit_layer /= n;
    s.saved_layers /= n;
    s.full_depth_accuracy /= n;
  }
  result.summary = std::move(sums);
  return result;
}

}  // namespace cee
