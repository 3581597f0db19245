// Command-line front end: equivariance audits, task training/evaluation,
// config grids and diffusion sampling, all driven by key=value config files.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "rapidash/checkpoint.hpp"
#include "rapidash/config.hpp"
#include "rapidash/diffusion.hpp"
#include "rapidash/harness.hpp"

namespace fs = std::filesystem;
using namespace rapidash;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitAuditFailure = 2;
constexpr int kExitDivergence = 3;

constexpr double kClaimedTol = 1e-9;
constexpr double kBrokenTol = 1e-3;

struct CommonArgs {
  std::vector<std::string> configs;
  long seed = -1;
  std::string out;
  std::string checkpoint;
  std::string fractions;
};

ExperimentConfig load_experiment(const std::string& path, const CommonArgs& args) {
  ExperimentConfig cfg = load_config_file(path);
  apply_env_overrides(cfg);
  if (args.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(args.seed);
    derive_seeds(cfg);
  }
  if (!args.out.empty()) cfg.output_dir = args.out;
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

// The model's input signature always follows the generated clouds.
void adopt_task_signature(ExperimentConfig& cfg, const TaskData& data) {
  if (!data.train.empty()) {
    cfg.model.in_scalars = data.train[0].num_scalar_features();
    cfg.model.in_aux_vectors = data.train[0].num_vector_features();
  }
  if (data.num_classes > 0) cfg.model.target_dim = data.num_classes;
}

struct AuditOutcome {
  std::vector<SymmetryReport> reports;
  bool ok = true;
  std::string label;
};

AuditOutcome run_audit(const ExperimentConfig& cfg) {
  Model model = build_model(cfg.model);
  Rng rng(split_seed(cfg.harness.seed, 0xc1));
  std::vector<PointCloud> clouds;
  for (int s = 0; s < cfg.harness.audit_clouds; ++s)
    clouds.push_back(make_random_cloud(rng, cfg.harness.audit_points, cfg.model.in_scalars,
                                       cfg.model.in_aux_vectors));
  model.geometry_scale = mean_neighbor_distance(
      clouds[0], build_neighbors(clouds[0], NeighborMode::knn,
                                 static_cast<double>(cfg.model.neighbors_k)));

  const bool vector_readout = cfg.model.readout == ReadoutKind::vector_out;
  auto measure = [&](SymmetryGroup group, GridMode mode, uint64_t stream) {
    uint64_t seed = split_seed(cfg.harness.seed, stream);
    return vector_readout
               ? measure_vector_equivariance(model, clouds, cfg.harness.trials, group, mode, seed)
               : measure_invariance(model, clouds, cfg.harness.trials, group, mode, seed);
  };

  AuditOutcome out;
  SymmetryReport rot_fixed = measure(SymmetryGroup::rotation, GridMode::fixed, 1);
  SymmetryReport rot_joint = measure(SymmetryGroup::rotation, GridMode::joint, 2);
  SymmetryReport trans = measure(SymmetryGroup::translation, GridMode::fixed, 3);
  SymmetryReport perm = measure(SymmetryGroup::permutation, GridMode::fixed, 4);
  out.reports = {rot_fixed, rot_joint, trans, perm};

  EffectiveEquivariance label = effective_equivariance(cfg.model);
  out.label = effective_equivariance_name(label);
  bool rot_claimed = label == EffectiveEquivariance::se3 || label == EffectiveEquivariance::so3;
  bool trans_claimed = label == EffectiveEquivariance::se3 || label == EffectiveEquivariance::t3;
  auto expect = [&](const char* what, double got, bool claimed) {
    if (claimed && got > kClaimedTol) {
      std::cout << "AUDIT FAIL: claimed " << what << " symmetry violated, max " << got << "\n";
      out.ok = false;
    }
    if (!claimed && got < kBrokenTol) {
      std::cout << "AUDIT FAIL: " << what << " should be broken but max violation is only "
                << got << "\n";
      out.ok = false;
    }
  };
  expect("rotation", rot_joint.max_violation, rot_claimed);
  expect("translation", trans.max_violation, trans_claimed);
  if (perm.max_violation > kClaimedTol) {
    std::cout << "AUDIT FAIL: permutation equivariance violated, max " << perm.max_violation
              << "\n";
    out.ok = false;
  }
  return out;
}

std::string flags_string(const InputSpec& s) {
  std::string out;
  out += s.coords_as_scalars ? "1," : "0,";
  out += s.coords_as_vectors ? "1," : "0,";
  out += s.aux_as_scalars ? "1," : "0,";
  out += s.aux_as_vectors ? "1," : "0,";
  out += s.global_frame ? "1" : "0";
  return out;
}

void append_results_row(const fs::path& table, const ExperimentConfig& cfg,
                        const TrainResult& result, const std::string& variation) {
  bool fresh = !fs::exists(table);
  std::ofstream os(table, std::ios::app);
  if (fresh)
    os << "variation,type,coords_as_scalars,coords_as_vectors,aux_as_scalars,aux_as_vectors,"
          "global_frame,effective_equivariance,metric,metric_aligned,metric_rotated\n";
  os << variation << "," << regime_name(cfg.model.regime) << "," << flags_string(cfg.model.input_spec)
     << "," << effective_equivariance_name(effective_equivariance(cfg.model)) << ","
     << result.metric_name << "," << result.metric_aligned << "," << result.metric_rotated
     << "\n";
}

int cmd_audit(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment(args.configs.at(0), args);
  AuditOutcome outcome = run_audit(cfg);
  fs::create_directories(cfg.output_dir);
  write_file(fs::path(cfg.output_dir) / "audit.csv", reports_to_csv(outcome.reports));
  std::cout << "effective equivariance: " << outcome.label << "\n";
  for (const auto& r : outcome.reports)
    std::cout << "  " << r.group << " (" << r.mode << "): max " << r.max_violation << " mean "
              << r.mean_violation << "\n";
  std::cout << (outcome.ok ? "audit passed" : "audit FAILED") << "\n";
  return outcome.ok ? kExitOk : kExitAuditFailure;
}

TrainResult train_from_config(ExperimentConfig& cfg, Model& model, TaskData& data,
                              double fraction = 1.0) {
  data = generate_task(cfg.task);
  if (fraction < 1.0) {
    int keep = std::max(1, static_cast<int>(std::ceil(fraction * data.train.size())));
    data.train.resize(keep);
    if (data.train_targets.size() > 0)
      data.train_targets.conservativeResize(keep);
  }
  adopt_task_signature(cfg, data);
  model = build_model(cfg.model);
  return train_model(model, data, cfg.train);
}

int cmd_train(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment(args.configs.at(0), args);
  fs::create_directories(cfg.output_dir);

  if (cfg.task.kind == TaskKind::diffusion_gen) {
    TaskData data = generate_task(cfg.task);
    adopt_task_signature(cfg, data);
    cfg.model.in_scalars = 2;  // bias + noise embedding channel
    Model model = build_model(cfg.model);
    DiffusionSchedule sched;
    sched.sigma_data = empirical_sigma_data(data.train);
    DiffusionTrainResult res = train_diffusion(model, data.train, sched, cfg.train);
    std::ostringstream hist;
    hist << "epoch,split,metric,value\n";
    for (size_t e = 0; e < res.epoch_losses.size(); ++e)
      hist << e << ",train,loss," << res.epoch_losses[e] << "\n";
    write_file(fs::path(cfg.output_dir) / "metrics.csv", hist.str());
    save_checkpoint((fs::path(cfg.output_dir) / "model.ckpt").string(),
                    model.named_parameters());
    std::cout << "final loss " << res.epoch_losses.back() << "\n";
    return kExitOk;
  }

  Model model;
  TaskData data;
  TrainResult result = train_from_config(cfg, model, data);
  write_file(fs::path(cfg.output_dir) / "metrics.csv", history_to_csv(result.history));
  save_checkpoint((fs::path(cfg.output_dir) / "model.ckpt").string(), model.named_parameters());
  append_results_row(fs::path(cfg.output_dir) / "results.csv", cfg, result,
                     fs::path(args.configs.at(0)).stem().string());
  std::cout << result.metric_name << " aligned " << result.metric_aligned << " rotated "
            << result.metric_rotated << "\n";
  return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment(args.configs.at(0), args);
  TaskData data = generate_task(cfg.task);
  adopt_task_signature(cfg, data);
  Model model = build_model(cfg.model);
  std::string ckpt = args.checkpoint.empty()
                         ? (fs::path(cfg.output_dir) / "model.ckpt").string()
                         : args.checkpoint;
  load_checkpoint(ckpt, model.named_parameters());
  NeighborGraph g = build_neighbors(data.train[0], NeighborMode::knn,
                                    static_cast<double>(cfg.model.neighbors_k));
  model.geometry_scale = mean_neighbor_distance(data.train[0], g);
  double aligned = evaluate_model(model, data, data.test, &data.test_targets);
  Rng rng(split_seed(cfg.train.seed, 0x707a7e));
  std::vector<PointCloud> rotated;
  for (const PointCloud& c : data.test) {
    RigidMotion gm;
    gm.rotation = random_rotation(rng);
    rotated.push_back(transform_cloud(c, gm));
  }
  double rot = evaluate_model(model, data, rotated, &data.test_targets);
  std::cout << "aligned " << aligned << " rotated " << rot << "\n";
  fs::create_directories(cfg.output_dir);
  std::ostringstream os;
  os << "split,value\naligned," << aligned << "\nrotated," << rot << "\n";
  write_file(fs::path(cfg.output_dir) / "eval.csv", os.str());
  return kExitOk;
}

int cmd_grid(const CommonArgs& args) {
  if (args.configs.empty()) {
    std::cerr << "grid: needs at least one --config\n";
    return kExitConfigError;
  }
  std::vector<double> fractions = {1.0};
  if (!args.fractions.empty()) {
    fractions.clear();
    std::istringstream is(args.fractions);
    std::string tok;
    while (std::getline(is, tok, ',')) fractions.push_back(std::stod(tok));
  }
  struct Row {
    std::string name;
    double fraction;
    std::string metric;
    double aligned, rotated;
    bool higher_better;
  };
  std::vector<Row> rows;
  std::string out_dir;
  for (const std::string& path : args.configs) {
    for (double frac : fractions) {
      ExperimentConfig cfg = load_experiment(path, args);
      if (out_dir.empty()) out_dir = cfg.output_dir;
      Model model;
      TaskData data;
      TrainResult r = train_from_config(cfg, model, data, frac);
      bool higher = r.metric_name == "iou" || r.metric_name == "accuracy";
      rows.push_back({fs::path(path).stem().string(), frac, r.metric_name, r.metric_aligned,
                      r.metric_rotated, higher});
      std::cout << rows.back().name << " x" << frac << ": " << r.metric_name << " aligned "
                << r.metric_aligned << " rotated " << r.metric_rotated << "\n";
    }
  }
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv << "config,fraction,metric,aligned,rotated\n";
  for (const Row& r : rows)
    csv << r.name << "," << r.fraction << "," << r.metric << "," << r.aligned << "," << r.rotated
        << "\n";
  write_file(fs::path(out_dir) / "grid.csv", csv.str());
  std::vector<Row> ranked = rows;
  std::sort(ranked.begin(), ranked.end(), [](const Row& a, const Row& b) {
    return a.higher_better ? a.aligned > b.aligned : a.aligned < b.aligned;
  });
  std::ostringstream rank;
  for (size_t i = 0; i < ranked.size(); ++i)
    rank << (i + 1) << ". " << ranked[i].name << " x" << ranked[i].fraction << " "
         << ranked[i].metric << " " << ranked[i].aligned << "\n";
  write_file(fs::path(out_dir) / "ranking.txt", rank.str());
  std::cout << rank.str();
  return kExitOk;
}

int cmd_sample(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment(args.configs.at(0), args);
  TaskData data = generate_task(cfg.task);
  adopt_task_signature(cfg, data);
  cfg.model.in_scalars = 2;
  Model model = build_model(cfg.model);
  std::string ckpt = args.checkpoint.empty()
                         ? (fs::path(cfg.output_dir) / "model.ckpt").string()
                         : args.checkpoint;
  load_checkpoint(ckpt, model.named_parameters());
  DiffusionSchedule sched;
  sched.sigma_data = empirical_sigma_data(data.train);
  DenoiseFn denoise = [&](const Mat3X& x, double sigma) {
    return edm_denoise_positions(model, x, sigma, sched.sigma_data);
  };
  Rng rng(split_seed(cfg.seed, 0x5a));
  fs::create_directories(cfg.output_dir);
  int n_points = data.train[0].size();
  for (int s = 0; s < 8; ++s) {
    Mat3X x = karras_sample(denoise, sched, n_points, rng);
    PointCloud cloud;
    cloud.positions = x;
    write_file(fs::path(cfg.output_dir) / ("sample_" + std::to_string(s) + ".csv"),
               cloud_to_csv(cloud));
  }
  std::cout << "wrote 8 samples to " << cfg.output_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rapidash: group-convolution point-cloud engine"};
  app.require_subcommand(1);
  CommonArgs args;

  auto add_common = [&](CLI::App* cmd, bool multi_config) {
    if (multi_config)
      cmd->add_option("--config", args.configs, "config file(s)")->required();
    else
      cmd->add_option("--config", args.configs, "config file")->required()->expected(1);
    cmd->add_option("--seed", args.seed, "override the master seed");
    cmd->add_option("--out", args.out, "override the output directory");
  };

  CLI::App* audit = app.add_subcommand("audit", "measure symmetry violations");
  add_common(audit, false);
  CLI::App* train = app.add_subcommand("train", "train a model on the configured task");
  add_common(train, false);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, false);
  eval->add_option("--checkpoint", args.checkpoint, "checkpoint path");
  CLI::App* grid = app.add_subcommand("grid", "run a set of configs, optionally at data fractions");
  add_common(grid, true);
  grid->add_option("--fractions", args.fractions, "comma list of train-set fractions");
  CLI::App* sample = app.add_subcommand("sample", "draw diffusion samples from a checkpoint");
  add_common(sample, false);
  sample->add_option("--checkpoint", args.checkpoint, "checkpoint path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (audit->parsed()) return cmd_audit(args);
    if (train->parsed()) return cmd_train(args);
    if (eval->parsed()) return cmd_eval(args);
    if (grid->parsed()) return cmd_grid(args);
    if (sample->parsed()) return cmd_sample(args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("diverged") != std::string::npos) return kExitDivergence;
    return kExitConfigError;
  }
  return kExitOk;
}
