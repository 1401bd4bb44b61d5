#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "meshode/errors.hpp"
#include "meshode/eval.hpp"

using namespace meshode;

namespace {

RodConfig small_rod(double youngs, double t_end = 2.0) {
  RodConfig cfg;
  cfg.n_vertices = 7;
  cfg.youngs_modulus = youngs;
  cfg.t_end = t_end;
  return cfg;
}

Model frozen_model(ModelKind kind) {
  return Model{kind, GnnParams::zeros(default_gnn_config(CaseKind::kRod, 1, 8)),
               identity_normalizer(CaseKind::kRod), 1};
}

Model random_model(ModelKind kind, std::uint64_t seed, std::span<const Trajectory> data) {
  return Model{kind, GnnParams::init(default_gnn_config(CaseKind::kRod, 2, 8), seed),
               fit_normalizer(data), 1};
}

// Checks that tags nest properly; enough to catch malformed output.
bool tags_balanced(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = xml.find('<', pos)) != std::string::npos) {
    const std::size_t end = xml.find('>', pos);
    if (end == std::string::npos) return false;
    const std::string tag = xml.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    const std::string name = tag.substr(tag[0] == '/' ? 1 : 0, tag.find_first_of(" \t\n") -
                                                                   (tag[0] == '/' ? 1 : 0));
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("rmse at step") {
  const Trajectory truth = generate_rod_trajectory(small_rod(5e8));
  for (std::size_t k = 0; k < truth.states.size(); ++k) CHECK(rmse_at_step(truth, truth, k) == 0.0);
  Trajectory shifted = truth;
  for (std::size_t k = 1; k < shifted.states[4].x.size(); k += 2) shifted.states[4].x[k] -= 2.5e-3;
  CHECK(rmse_at_step(shifted, truth, 4) == doctest::Approx(2.5e-3).epsilon(1e-12));
  CHECK(rmse_at_step(shifted, truth, 3) == 0.0);
  CHECK_THROWS_AS(rmse_at_step(shifted, truth, truth.states.size()), ContractError);
}

TEST_CASE("model comparison table") {
  std::vector<Trajectory> test;
  for (double y : {2e8, 9e8, 1.4e9}) test.push_back(generate_rod_trajectory(small_rod(y)));
  const std::vector<std::size_t> steps{1, 5, 10, 20};
  const std::vector<LabeledModel> same{{"a", random_model(ModelKind::kMeshOde, 3, test)},
                                       {"b", random_model(ModelKind::kMeshOde, 3, test)}};
  const ComparisonTable t = compare_models(same, test, steps);
  CHECK(t.rows.size() == 8);
  for (std::size_t s : steps) {
    CHECK(t.at("b", s).rel_increase_pct == 0.0);
    CHECK(t.at("a", s).mean_rmse == t.at("b", s).mean_rmse);
    CHECK(std::isfinite(t.at("a", s).std_rmse));
  }
  // Rollouts start from the true state.
  const std::vector<std::size_t> zero{0};
  CHECK(compare_models(same, test, zero).at("a", 0).mean_rmse == 0.0);

  std::vector<Trajectory> permuted{test[2], test[0], test[1]};
  const ComparisonTable tp = compare_models(same, permuted, steps);
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    CHECK(tp.rows[k].mean_rmse == t.rows[k].mean_rmse);
    CHECK(tp.rows[k].std_rmse == t.rows[k].std_rmse);
  }

  // A frozen rod against a moving truth: the mean equals the per-trajectory
  // average of the RMSE of the rest pose.
  const std::vector<LabeledModel> frozen{{"ode", frozen_model(ModelKind::kMeshOde)},
                                         {"mgn", frozen_model(ModelKind::kMgn)}};
  const ComparisonTable tf = compare_models(frozen, test, steps);
  double expected = 0.0;
  for (const Trajectory& tr : test) {
    Trajectory still = tr;
    for (MeshState& s : still.states) s.x = tr.states[0].x;
    expected += rmse_at_step(still, tr, 20);
  }
  CHECK(tf.at("ode", 20).mean_rmse == doctest::Approx(expected / 3.0).epsilon(1e-12));
  CHECK(tf.at("mgn", 20).mean_rmse == doctest::Approx(expected / 3.0).epsilon(1e-12));

  std::ostringstream csv, text;
  write_comparison_csv(csv, tf);
  write_comparison_text(text, tf);
  CHECK(csv.str().rfind("model,step,mean_rmse,std_rmse,rel_increase_pct\n", 0) == 0);
  CHECK(count(csv.str(), "\n") == 9);
  CHECK(text.str().find("step 20") != std::string::npos);
  CHECK(text.str().find("mgn %") != std::string::npos);

  CHECK_THROWS_AS(compare_models(frozen, std::vector<Trajectory>{}, steps), ContractError);
  const std::vector<std::size_t> too_far{500};
  CHECK_THROWS_AS(compare_models(frozen, test, too_far), ContractError);
  CHECK(default_report_steps(CaseKind::kRod) == std::vector<std::size_t>{1, 30, 60, 90, 120, 150, 180});
  CHECK(default_report_steps(CaseKind::kPlate) == std::vector<std::size_t>{1, 25, 50, 150, 250, 350});
}

TEST_CASE("blown-up rollouts score infinity") {
  const std::vector<Trajectory> test{generate_rod_trajectory(small_rod(5e8))};
  Model m = frozen_model(ModelKind::kMgn);
  // Huge output bias: the rollout leaves the finite range within a few steps.
  const std::size_t b2 = m.params.find("decoder.b2");
  m.params.tensors[b2] = Tensor::filled(m.params.tensors[b2].shape(), 1e300);
  const std::vector<LabeledModel> models{{"mgn", m}};
  const std::vector<std::size_t> steps{0, 10};
  const ComparisonTable t = compare_models(models, test, steps);
  CHECK(t.at("mgn", 0).mean_rmse == 0.0);
  CHECK(std::isinf(t.at("mgn", 10).mean_rmse));
  CHECK_THROWS_AS(predict(m, test[0]), RolloutBlowupError);
}

TEST_CASE("speed benchmark report") {
  const RodConfig cfg = small_rod(5e8, 1.0);
  const SpeedReport r = benchmark_speed(frozen_model(ModelKind::kMeshOde), cfg, 5);
  CHECK(r.repeats == 5);
  CHECK(r.n_samples == 10);
  CHECK(r.solver.min <= r.solver.median);
  CHECK(r.solver.median <= r.solver.max);
  CHECK(r.surrogate.min <= r.surrogate.median);
  CHECK(r.surrogate.median <= r.surrogate.max);
  CHECK(r.ratio == doctest::Approx(r.solver.median / r.surrogate.median));
  std::ostringstream os;
  write_speed_report(os, r);
  CHECK(os.str().find("excluding file I/O") != std::string::npos);
  CHECK(os.str().find("median") != std::string::npos);
  CHECK_THROWS_AS(benchmark_speed(frozen_model(ModelKind::kMeshOde), cfg, 0), ContractError);
}

TEST_CASE("snapshot svg") {
  const Trajectory truth = generate_rod_trajectory(small_rod(5e8));
  const Trajectory ode = predict(frozen_model(ModelKind::kMeshOde), truth);
  const Trajectory mgn = predict(frozen_model(ModelKind::kMgn), truth);
  const std::vector<LabeledTrajectory> rows{{"truth", truth}, {"meshode", ode}, {"mgn <b>", mgn}};
  const std::vector<std::size_t> samples{0, 5, 20};
  std::ostringstream os;
  emit_snapshots(os, rows, samples);
  const std::string svg = os.str();
  CHECK(tags_balanced(svg));
  CHECK(count(svg, "<g class=\"cell\"") == 9);
  CHECK(svg.find("mgn &lt;b&gt;") != std::string::npos);
  CHECK(svg.find("scale-bar") != std::string::npos);
  // The initial condition is drawn identically in every row.
  auto cell_path = [&](std::size_t r, std::size_t c) {
    const std::string key = "data-row=\"" + std::to_string(r) + "\" data-col=\"" +
                            std::to_string(c) + "\"";
    const std::size_t p = svg.find("<path", svg.find(key));
    return svg.substr(svg.find(" d=\"", p), svg.find("\"/>", p) - svg.find(" d=\"", p));
  };
  CHECK(cell_path(0, 0) == cell_path(1, 0));
  CHECK(cell_path(0, 0) == cell_path(2, 0));
  CHECK(cell_path(0, 2) != cell_path(1, 2));

  const RestGeometry plate_rest = build_plate_mesh(PlateConfig{});
  PlateConfig pc;
  pc.n_steps = 2;
  const Trajectory plate = generate_plate_trajectory(pc);
  const std::vector<LabeledTrajectory> prow{{"plate", plate}};
  const std::vector<std::size_t> ps{0, 2};
  std::ostringstream pos;
  emit_snapshots(pos, prow, ps);
  CHECK(tags_balanced(pos.str()));
  CHECK(count(pos.str(), "M") >= plate_rest.edges.size());

  const std::vector<LabeledTrajectory> none;
  CHECK_THROWS_AS(emit_snapshots(os, none, samples), ContractError);
  const std::vector<std::size_t> no_samples;
  CHECK_THROWS_AS(emit_snapshots(os, rows, no_samples), ContractError);
}
