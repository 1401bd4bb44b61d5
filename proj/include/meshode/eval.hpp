#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "meshode/model.hpp"

namespace meshode {

// Root of the node-averaged squared position error norm at a sample index.
double rmse_at_step(const Trajectory& pred, const Trajectory& truth, std::size_t step);

struct LabeledModel {
  std::string label;
  Model model;
};

struct ComparisonRow {
  std::string model;
  std::size_t step = 0;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;          // sample standard deviation over trajectories
  double rel_increase_pct = 0.0;  // against the first model at the same step
};

struct ComparisonTable {
  std::vector<std::size_t> steps;
  std::vector<std::string> models;
  std::vector<ComparisonRow> rows;  // model-major

  const ComparisonRow& at(const std::string& model, std::size_t step) const;
};

// Per-trajectory RMSE averaged over the test set. A rollout that blows up
// scores +inf from the failing sample on.
ComparisonTable compare_models(std::span<const LabeledModel> models,
                               std::span<const Trajectory> test_set,
                               std::span<const std::size_t> steps);

// Per-step RMSE of one model on every test trajectory: [trajectory][step].
std::vector<std::vector<double>> rmse_matrix(const Model& model,
                                             std::span<const Trajectory> test_set,
                                             std::span<const std::size_t> steps);

void write_comparison_csv(std::ostream& os, const ComparisonTable& table);
void write_comparison_text(std::ostream& os, const ComparisonTable& table);

std::vector<std::size_t> default_report_steps(CaseKind kind);

struct TimingStats {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct SpeedReport {
  std::size_t n_samples = 0;
  int repeats = 0;
  TimingStats surrogate;
  TimingStats solver;
  double ratio = 0.0;  // solver median / surrogate median
};

// Wall time of a surrogate rollout and of ground-truth generation over the
// same horizon from the same initial state, on the calling thread.
SpeedReport benchmark_speed(const Model& model, const CaseConfig& truth_config, int n_repeats);

void write_speed_report(std::ostream& os, const SpeedReport& r);

struct LabeledTrajectory {
  std::string label;
  Trajectory traj;
};

// One row per trajectory, one column per requested sample index.
void emit_snapshots(std::ostream& os, std::span<const LabeledTrajectory> rows,
                    std::span<const std::size_t> samples);

}  // namespace meshode
