#include "meshode/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "meshode/errors.hpp"

namespace meshode {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TimingStats summarize(std::vector<double> t) {
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  const double median = n % 2 == 1 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
  return {t.front(), median, t.back()};
}

template <class F>
double time_once(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Side view: x horizontal, last coordinate vertical.
std::pair<double, double> project(const Trajectory& t, const MeshState& s, std::size_t i) {
  const std::size_t d = static_cast<std::size_t>(t.dim());
  return {s.x[i * d], s.x[i * d + d - 1]};
}

double nice_length(double span) {
  const double p = std::pow(10.0, std::floor(std::log10(span)));
  for (double m : {5.0, 2.0, 1.0}) {
    if (m * p <= span) return m * p;
  }
  return p;
}

}  // namespace

double rmse_at_step(const Trajectory& pred, const Trajectory& truth, std::size_t step) {
  if (step >= pred.states.size() || step >= truth.states.size()) {
    throw ContractError("rmse_at_step: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(std::min(pred.states.size(), truth.states.size())) + ")");
  }
  const auto& a = pred.states[step].x;
  const auto& b = truth.states[step].x;
  if (a.size() != b.size() || a.empty()) {
    throw ContractError("rmse_at_step: position arrays differ in size");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(sum / static_cast<double>(truth.n_nodes()));
}

std::vector<std::vector<double>> rmse_matrix(const Model& model,
                                             std::span<const Trajectory> test_set,
                                             std::span<const std::size_t> steps) {
  std::vector<std::vector<double>> out;
  for (const Trajectory& t : test_set) {
    const std::size_t horizon = *std::max_element(steps.begin(), steps.end());
    if (horizon >= t.states.size()) {
      throw ContractError("compare_models: step " + std::to_string(horizon) +
                          " beyond a test trajectory of " + std::to_string(t.states.size()) +
                          " samples");
    }
    const Prediction p = predict_from(model, t.config, t.rest, t.states[0], horizon);
    std::vector<double> row;
    for (std::size_t s : steps) {
      row.push_back(s < p.traj.states.size() ? rmse_at_step(p.traj, t, s) : kInf);
    }
    out.push_back(std::move(row));
  }
  return out;
}

const ComparisonRow& ComparisonTable::at(const std::string& model, std::size_t step) const {
  for (const ComparisonRow& r : rows) {
    if (r.model == model && r.step == step) return r;
  }
  throw ContractError("comparison table has no row for " + model + " at step " +
                      std::to_string(step));
}

ComparisonTable compare_models(std::span<const LabeledModel> models,
                               std::span<const Trajectory> test_set,
                               std::span<const std::size_t> steps) {
  if (test_set.empty()) throw ContractError("compare_models: empty test set");
  if (models.empty() || steps.empty()) throw ContractError("compare_models: nothing to compare");
  ComparisonTable table;
  table.steps.assign(steps.begin(), steps.end());
  std::vector<double> reference;
  for (const LabeledModel& m : models) {
    table.models.push_back(m.label);
    const auto rmse = rmse_matrix(m.model, test_set, steps);
    for (std::size_t j = 0; j < steps.size(); ++j) {
      const double n = static_cast<double>(test_set.size());
      // Sorted so the statistics do not depend on test-set order.
      std::vector<double> col;
      for (const auto& row : rmse) col.push_back(row[j]);
      std::sort(col.begin(), col.end());
      double mean = 0.0;
      for (double x : col) mean += x;
      mean /= n;
      double var = 0.0;
      if (std::isfinite(mean)) {
        for (double x : col) var += (x - mean) * (x - mean);
      }
      const double std_dev = test_set.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
      if (reference.size() < steps.size()) reference.push_back(mean);
      const double ref = reference[j];
      const double rel = ref > 0.0 ? (mean - ref) / ref * 100.0 : (mean == ref ? 0.0 : kInf);
      table.rows.push_back({m.label, steps[j], mean, std::isfinite(mean) ? std_dev : kInf, rel});
    }
  }
  return table;
}

void write_comparison_csv(std::ostream& os, const ComparisonTable& table) {
  os << "model,step,mean_rmse,std_rmse,rel_increase_pct\n";
  std::ostringstream line;
  line.precision(10);
  for (const ComparisonRow& r : table.rows) {
    line.str("");
    line << r.model << ',' << r.step << ',' << r.mean_rmse << ',' << r.std_rmse << ','
         << r.rel_increase_pct << '\n';
    os << line.str();
  }
}

void write_comparison_text(std::ostream& os, const ComparisonTable& table) {
  std::ostringstream out;
  std::size_t label_w = 5;
  for (const std::string& m : table.models) label_w = std::max(label_w, m.size());
  out << std::left << std::setw(static_cast<int>(label_w) + 2) << "RMSE";
  for (std::size_t s : table.steps) out << std::right << std::setw(24) << ("step " + std::to_string(s));
  out << '\n';
  for (const std::string& m : table.models) {
    out << std::left << std::setw(static_cast<int>(label_w) + 2) << m;
    for (std::size_t s : table.steps) {
      const ComparisonRow& r = table.at(m, s);
      std::ostringstream cell;
      cell << std::scientific << std::setprecision(3) << r.mean_rmse << " +- " << r.std_rmse;
      out << std::right << std::setw(24) << cell.str();
    }
    out << '\n';
  }
  for (std::size_t k = 1; k < table.models.size(); ++k) {
    out << std::left << std::setw(static_cast<int>(label_w) + 2) << (table.models[k] + " %");
    for (std::size_t s : table.steps) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1) << table.at(table.models[k], s).rel_increase_pct;
      out << std::right << std::setw(24) << cell.str();
    }
    out << '\n';
  }
  os << out.str();
}

std::vector<std::size_t> default_report_steps(CaseKind kind) {
  if (kind == CaseKind::kRod) return {1, 30, 60, 90, 120, 150, 180};
  return {1, 25, 50, 150, 250, 350};
}

SpeedReport benchmark_speed(const Model& model, const CaseConfig& truth_config, int n_repeats) {
  if (n_repeats < 1) throw ContractError("benchmark_speed: n_repeats must be >= 1");
  SpeedReport r;
  r.repeats = n_repeats;
  const RestGeometry rest = build_rest(truth_config);
  const MeshState initial = rest_state(rest);
  r.n_samples = std::visit([](const auto& c) { return c.n_samples(); }, truth_config);
  std::vector<double> surrogate, solver;
  for (int k = 0; k < n_repeats; ++k) {
    solver.push_back(time_once([&] { (void)generate_trajectory(truth_config); }));
    surrogate.push_back(time_once(
        [&] { (void)predict_from(model, truth_config, rest, initial, r.n_samples); }));
  }
  r.solver = summarize(solver);
  r.surrogate = summarize(surrogate);
  r.ratio = r.solver.median / r.surrogate.median;
  return r;
}

void write_speed_report(std::ostream& os, const SpeedReport& r) {
  std::ostringstream out;
  out << "# wall clock per rollout, single thread, excluding file I/O\n";
  out << "# " << r.n_samples << " samples, " << r.repeats << " repeats\n";
  out << std::scientific << std::setprecision(4);
  out << "solver     min " << r.solver.min << " s  median " << r.solver.median << " s  max "
      << r.solver.max << " s\n";
  out << "surrogate  min " << r.surrogate.min << " s  median " << r.surrogate.median
      << " s  max " << r.surrogate.max << " s\n";
  out << std::fixed << std::setprecision(2) << "speed-up (solver / surrogate) " << r.ratio
      << "\n";
  os << out.str();
}

void emit_snapshots(std::ostream& os, std::span<const LabeledTrajectory> rows,
                    std::span<const std::size_t> samples) {
  if (rows.empty() || samples.empty()) throw ContractError("emit_snapshots: nothing to draw");
  const double dt = rows.front().traj.dt_sample();
  for (const LabeledTrajectory& r : rows) {
    if (r.traj.states.empty() || std::abs(r.traj.dt_sample() - dt) > 1e-12 * dt) {
      throw ContractError("emit_snapshots: trajectories must share a time grid");
    }
  }
  // Shared frame over every drawn configuration.
  double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
  for (const LabeledTrajectory& r : rows) {
    for (std::size_t s : samples) {
      if (s >= r.traj.states.size()) continue;
      for (std::size_t i = 0; i < r.traj.n_nodes(); ++i) {
        const auto [px, py] = project(r.traj, r.traj.states[s], i);
        if (!std::isfinite(px) || !std::isfinite(py)) continue;
        x0 = std::min(x0, px), x1 = std::max(x1, px);
        y0 = std::min(y0, py), y1 = std::max(y1, py);
      }
    }
  }
  if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
  double span = std::max(x1 - x0, y1 - y0);
  if (!(span > 0.0)) span = 1.0;
  const double pad = 0.08 * span;
  x0 -= pad, y0 -= pad;
  span += 2.0 * pad;

  const double cell = 180.0, left = 90.0, top = 40.0, gap = 10.0;
  const double width = left + static_cast<double>(samples.size()) * (cell + gap);
  const double height = top + static_cast<double>(rows.size()) * (cell + gap) + 30.0;
  const double px_per_m = (cell - 20.0) / span;
  auto sx = [&](double x) { return 10.0 + (x - x0) * px_per_m; };
  auto sy = [&](double y) { return cell - 10.0 - (y - y0) * px_per_m; };

  std::ostringstream svg;
  svg << std::setprecision(6);
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  for (std::size_t c = 0; c < samples.size(); ++c) {
    svg << "<text x=\"" << left + static_cast<double>(c) * (cell + gap) + cell / 2
        << "\" y=\"20\" text-anchor=\"middle\">step " << samples[c] << " (t = "
        << static_cast<double>(samples[c]) * dt << " s)</text>\n";
  }
  const char* colors[] = {"#222222", "#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Trajectory& t = rows[r].traj;
    const double oy = top + static_cast<double>(r) * (cell + gap);
    svg << "<text x=\"8\" y=\"" << oy + cell / 2 << "\">" << xml_escape(rows[r].label)
        << "</text>\n";
    for (std::size_t c = 0; c < samples.size(); ++c) {
      const double ox = left + static_cast<double>(c) * (cell + gap);
      svg << "<g class=\"cell\" data-row=\"" << r << "\" data-col=\"" << c
          << "\" transform=\"translate(" << ox << "," << oy << ")\">\n";
      svg << "<rect width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
      // Axes through the origin when it is inside the frame.
      if (0.0 >= x0 && 0.0 <= x0 + span) {
        svg << "<line x1=\"" << sx(0.0) << "\" y1=\"0\" x2=\"" << sx(0.0) << "\" y2=\"" << cell
            << "\" stroke=\"#dddddd\"/>\n";
      }
      if (0.0 >= y0 && 0.0 <= y0 + span) {
        svg << "<line x1=\"0\" y1=\"" << sy(0.0) << "\" x2=\"" << cell << "\" y2=\"" << sy(0.0)
            << "\" stroke=\"#dddddd\"/>\n";
      }
      const std::size_t s = samples[c];
      if (s >= t.states.size()) {
        svg << "<text x=\"" << cell / 2 << "\" y=\"" << cell / 2
            << "\" text-anchor=\"middle\" fill=\"#d62728\">diverged</text>\n";
      } else {
        const MeshState& st = t.states[s];
        svg << "<path fill=\"none\" stroke=\"" << colors[r % 5] << "\" stroke-width=\"1.5\" d=\"";
        for (std::size_t e = 0; e < t.rest.edges.size(); ++e) {
          const auto [ax, ay] = project(t, st, t.rest.edges[e][0]);
          const auto [bx, by] = project(t, st, t.rest.edges[e][1]);
          svg << "M" << sx(ax) << " " << sy(ay) << "L" << sx(bx) << " " << sy(by);
        }
        svg << "\"/>\n";
      }
      svg << "</g>\n";
    }
  }
  const double bar = nice_length(0.5 * span);
  const double by = top + static_cast<double>(rows.size()) * (cell + gap) + 12.0;
  svg << "<g class=\"scale-bar\"><line x1=\"" << left + 10.0 << "\" y1=\"" << by << "\" x2=\""
      << left + 10.0 + bar * px_per_m << "\" y2=\"" << by
      << "\" stroke=\"black\" stroke-width=\"2\"/><text x=\"" << left + 16.0 + bar * px_per_m
      << "\" y=\"" << by + 4.0 << "\">" << bar << " m</text></g>\n";
  svg << "</svg>\n";
  os << svg.str();
}

}  // namespace meshode
