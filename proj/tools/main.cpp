#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "meshode/config.hpp"
#include "meshode/dataset.hpp"
#include "meshode/errors.hpp"
#include "meshode/eval.hpp"
#include "meshode/io.hpp"

using namespace meshode;
namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kInput = 2, kSchema = 3, kAbort = 4, kDivergence = 5 };

void print_config(const std::string& title, const std::string& body) {
  std::cout << "# resolved " << title << " configuration\n" << body << std::flush;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory '" + dir + "'");
}

struct GenArgs {
  std::string case_name = "rod";
  std::string split = "train";
  std::string config;
  std::string out;
  std::size_t count = 0;
  double e_min = 0.0;
  double e_max = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;
};

int run_gen(const GenArgs& a) {
  const CaseKind kind = parse_case(a.case_name);
  KeyValues kv = a.config.empty() ? KeyValues() : KeyValues::load(a.config);
  GenOptions opts;
  opts.base = case_config_from(kv, kind);
  kv.require_all_used();
  const bool test = a.split == "test";
  if (kind == CaseKind::kRod) {
    opts.count = test ? 14 : 71;
    opts.e_min = test ? 0.13e9 : 0.1e9;
    opts.e_max = test ? 1.43e9 : 1.5e9;
  } else {
    opts.count = test ? 6 : 30;
    opts.e_min = 2.5e6;
    opts.e_max = 7.5e6;
  }
  if (a.count > 0) opts.count = a.count;
  if (a.e_min > 0.0) opts.e_min = a.e_min;
  if (a.e_max > 0.0) opts.e_max = a.e_max;
  opts.seed = a.seed;
  opts.out_dir = a.out;
  opts.prefix = a.split;
  const int requested =
      a.threads > 0 ? a.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  opts.threads = std::min(requested, thread_cap(requested));

  std::ostringstream cfg;
  cfg << case_config_text(opts.base) << "# youngs_modulus above is replaced per trajectory\n"
      << "split = " << a.split << "\ncount = " << opts.count
      << "\ne_min = " << format_double(opts.e_min) << "\ne_max = " << format_double(opts.e_max)
      << "\nseed = " << opts.seed << "\nthreads = " << opts.threads << "\nout = " << opts.out_dir
      << '\n';
  print_config("gen", cfg.str());
  generate_dataset(opts, [](const std::string& msg) { std::cout << msg << '\n' << std::flush; });
  std::cout << "wrote " << opts.count << " trajectories and manifest.csv to " << opts.out_dir
            << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string model, case_name, train_dir, eval_dir, out;
  int epochs = 0, hidden = 0, layers = 0, batch_size = 0, eval_every = -1;
  double lr0 = 0.0;
  std::int64_t seed = -1;
  std::int64_t rollout_length = -1;
};

int run_train(const TrainArgs& a) {
  KeyValues kv = a.config.empty() ? KeyValues() : KeyValues::load(a.config);
  for (const std::string& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  auto override = [&](const char* key, const std::string& v) {
    if (!v.empty()) kv.set(key, v);
  };
  override("model", a.model);
  override("case", a.case_name);
  override("train_dir", a.train_dir);
  override("eval_dir", a.eval_dir);
  override("out", a.out);
  if (a.epochs > 0) kv.set("epochs", std::to_string(a.epochs));
  if (a.hidden > 0) kv.set("hidden", std::to_string(a.hidden));
  if (a.layers > 0) kv.set("layers", std::to_string(a.layers));
  if (a.batch_size > 0) kv.set("batch_size", std::to_string(a.batch_size));
  if (a.eval_every >= 0) kv.set("eval_every", std::to_string(a.eval_every));
  if (a.lr0 > 0.0) kv.set("lr0", format_double(a.lr0));
  if (a.seed >= 0) kv.set("seed", std::to_string(a.seed));
  if (a.rollout_length >= 0) kv.set("rollout_length", std::to_string(a.rollout_length));

  const TrainConfig cfg = train_config_from(kv);
  const std::string train_dir = kv.get("train_dir", std::string());
  const std::string eval_dir = kv.get("eval_dir", std::string());
  const std::string out = kv.get("out", std::string("run"));
  kv.require_all_used();
  const std::string resolved = train_config_text(cfg) + "train_dir = " + train_dir +
                               "\neval_dir = " + eval_dir + "\nout = " + out + "\n";
  print_config("train", resolved);

  if (train_dir.empty()) throw ConfigError("train: no training set given (train_dir)");
  const std::vector<Trajectory> train_set = load_dataset(train_dir);
  const std::vector<Trajectory> eval_set =
      eval_dir.empty() ? std::vector<Trajectory>{} : load_dataset(eval_dir);
  ensure_dir(out);
  std::ofstream log((fs::path(out) / "run.log").string());
  log << resolved << "train_trajectories = " << train_set.size()
      << "\neval_trajectories = " << eval_set.size() << '\n';
  const TrainResult r = train(cfg, train_set, eval_set, [&](const EpochRecord& e) {
    std::ostringstream line;
    line << "epoch " << e.epoch << " lr " << e.lr << " train " << e.train_loss;
    if (!std::isnan(e.eval_loss)) line << " eval " << e.eval_loss;
    if (e.skipped) line << " skipped " << e.skipped;
    line << " (" << e.seconds << " s)";
    std::cout << line.str() << '\n' << std::flush;
    log << line.str() << '\n' << std::flush;
  });
  save_checkpoint((fs::path(out) / "model.mshc").string(), r.checkpoint);
  std::ofstream csv((fs::path(out) / "loss.csv").string());
  write_loss_csv(csv, r.history);
  std::cout << "wrote " << (fs::path(out) / "model.mshc").string() << " and loss.csv\n";
  return kOk;
}

struct RolloutArgs {
  std::string checkpoint, trajectory, out;
};

int run_rollout(const RolloutArgs& a) {
  print_config("rollout", "checkpoint = " + a.checkpoint + "\ntrajectory = " + a.trajectory +
                              "\nout = " + a.out + "\n");
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Trajectory truth = load_trajectory(a.trajectory);
  if (ck.train.case_kind != truth.kind()) {
    throw SchemaError(std::string("rollout: checkpoint was trained on the ") +
                      case_name(ck.train.case_kind) + " case, trajectory is " +
                      case_name(truth.kind()));
  }
  std::cout << "model = " << to_string(ck.model.kind) << "\n";
  const Trajectory pred = predict(ck.model, truth);
  save_trajectory(a.out, pred);
  std::cout << "wrote " << pred.states.size() << " samples to " << a.out << '\n';
  return kOk;
}

struct EvalArgs {
  std::vector<std::string> checkpoints, labels;
  std::string test_dir, out;
  std::vector<std::size_t> steps;
  bool bench = false, snapshots = false;
  int repeats = 5;
};

int run_evaluate(const EvalArgs& a) {
  std::vector<LabeledModel> models;
  CaseKind kind = CaseKind::kRod;
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    const Checkpoint ck = load_checkpoint(a.checkpoints[i]);
    if (i > 0 && ck.train.case_kind != kind) {
      throw SchemaError("evaluate: checkpoints were trained on different cases");
    }
    kind = ck.train.case_kind;
    std::string label = i < a.labels.size() ? a.labels[i] : to_string(ck.model.kind);
    for (const LabeledModel& m : models) {
      if (m.label == label) label += "_" + std::to_string(i);
    }
    models.push_back({label, ck.model});
  }
  const std::vector<std::size_t> steps = a.steps.empty() ? default_report_steps(kind) : a.steps;
  std::ostringstream cfg;
  for (std::size_t i = 0; i < models.size(); ++i) {
    cfg << "model." << models[i].label << " = " << a.checkpoints[i] << '\n';
  }
  cfg << "test_dir = " << a.test_dir << "\nsteps = ";
  for (std::size_t i = 0; i < steps.size(); ++i) cfg << (i ? "," : "") << steps[i];
  cfg << "\nout = " << a.out << "\nbench = " << (a.bench ? "true" : "false")
      << "\nsnapshots = " << (a.snapshots ? "true" : "false") << "\nrepeats = " << a.repeats
      << '\n';
  print_config("evaluate", cfg.str());

  const std::vector<Trajectory> test = load_dataset(a.test_dir);
  for (const Trajectory& t : test) {
    if (t.kind() != kind) throw SchemaError("evaluate: test set case differs from the checkpoints");
  }
  ensure_dir(a.out);
  const ComparisonTable table = compare_models(models, test, steps);
  {
    std::ofstream csv((fs::path(a.out) / "table.csv").string());
    write_comparison_csv(csv, table);
    std::ofstream txt((fs::path(a.out) / "table.txt").string());
    write_comparison_text(txt, table);
  }
  write_comparison_text(std::cout, table);
  if (a.snapshots) {
    std::vector<LabeledTrajectory> rows{{"truth", test.front()}};
    const std::size_t horizon = *std::max_element(steps.begin(), steps.end());
    for (const LabeledModel& m : models) {
      rows.push_back({m.label, predict_from(m.model, test.front().config, test.front().rest,
                                            test.front().states[0], horizon)
                                   .traj});
    }
    std::ofstream svg((fs::path(a.out) / "snapshots.svg").string());
    emit_snapshots(svg, rows, steps);
  }
  if (a.bench) {
    std::ofstream rep((fs::path(a.out) / "speed.txt").string());
    for (const LabeledModel& m : models) {
      const SpeedReport r = benchmark_speed(m.model, test.front().config, a.repeats);
      std::ostringstream s;
      s << "## " << m.label << '\n';
      write_speed_report(s, r);
      rep << s.str();
      std::cout << s.str();
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mesh-based neural ODE surrogates for rods and plates"};
  app.require_subcommand(1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate ground-truth trajectories");
  gen->add_option("--case", ga.case_name, "rod or plate")->check(CLI::IsMember({"rod", "plate"}));
  gen->add_option("--split", ga.split, "train or test (selects default count and E range)")
      ->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--config", ga.config, "Case config file (key = value)");
  gen->add_option("--out", ga.out, "Output directory")->required();
  gen->add_option("--count", ga.count, "Number of trajectories");
  gen->add_option("--e-min", ga.e_min, "Smallest Young's modulus [Pa]");
  gen->add_option("--e-max", ga.e_max, "Largest Young's modulus [Pa]");
  gen->add_option("--seed", ga.seed, "Base seed; trajectory i uses seed + i");
  gen->add_option("--threads", ga.threads, "Worker threads (capped by MESHODE_THREADS)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "Training config file (key = value)");
  tr->add_option("--set", ta.sets, "Override any config key: key=value");
  tr->add_option("--model", ta.model, "meshode or mgn")->check(CLI::IsMember({"meshode", "mgn"}));
  tr->add_option("--case", ta.case_name, "rod or plate")->check(CLI::IsMember({"rod", "plate"}));
  tr->add_option("--train-dir", ta.train_dir, "Directory of training trajectories");
  tr->add_option("--eval-dir", ta.eval_dir, "Directory of evaluation trajectories");
  tr->add_option("--out", ta.out, "Output directory");
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--hidden", ta.hidden);
  tr->add_option("--layers", ta.layers);
  tr->add_option("--batch-size", ta.batch_size);
  tr->add_option("--eval-every", ta.eval_every);
  tr->add_option("--lr0", ta.lr0);
  tr->add_option("--seed", ta.seed);
  tr->add_option("--rollout-length", ta.rollout_length);

  RolloutArgs ra;
  auto* ro = app.add_subcommand("rollout", "Roll a trained model out from a trajectory's initial state");
  ro->add_option("--checkpoint", ra.checkpoint)->required();
  ro->add_option("--trajectory", ra.trajectory)->required();
  ro->add_option("--out", ra.out)->required();

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "RMSE tables, snapshots and timing");
  ev->add_option("--checkpoint", ea.checkpoints, "Checkpoint (repeatable; the first is the reference)")
      ->required();
  ev->add_option("--label", ea.labels, "Label per checkpoint");
  ev->add_option("--test-dir", ea.test_dir)->required();
  ev->add_option("--steps", ea.steps, "Report steps")->delimiter(',');
  ev->add_option("--out", ea.out)->required();
  ev->add_flag("--bench", ea.bench, "Add the wall-clock report");
  ev->add_flag("--snapshots", ea.snapshots, "Write snapshots.svg");
  ev->add_option("--repeats", ea.repeats, "Timing repeats");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInput;
  }

  try {
    if (*gen) return run_gen(ga);
    if (*tr) return run_train(ta);
    if (*ro) return run_rollout(ra);
    if (*ev) return run_evaluate(ea);
  } catch (const SchemaError& e) {
    std::cerr << "schema mismatch: " << e.what() << '\n';
    return kSchema;
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kAbort;
  } catch (const DivergenceError& e) {
    std::cerr << "solver divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const RolloutBlowupError& e) {
    std::cerr << "rollout diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
