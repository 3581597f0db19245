#pragma once

#include <string>
#include <vector>

#include "rapidash/model.hpp"
#include "rapidash/optim.hpp"

namespace rapidash {

enum class TaskKind {
  inv_regression,
  part_segmentation,
  vector_motion,
  symmetric_disambiguation,
  diffusion_gen
};
std::string task_name(TaskKind k);
TaskKind task_from_name(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::inv_regression;
  int train_size = 64;
  int test_size = 32;
  bool rotate_train = false;
  bool rotate_test = false;
  double noise_level = 0.02;
  uint64_t seed = 0;
  int points = 0;  // 0 = per-kind default
};

struct TaskData {
  TaskSpec spec;
  std::vector<PointCloud> train, test;
  VecX train_targets, test_targets;  // inv_regression: per-cloud scalars
  int num_classes = 0;               // labeled tasks
};

// Deterministic given spec.seed; train and test draws are disjoint streams.
// Rotation flags bake one random rotation into each sample; the sample's
// pose records it.
TaskData generate_task(const TaskSpec& spec);

// The rotation-invariant regression functional: sum_{i != j} exp(-|x_i - x_j|).
double pairwise_exp_target(const Mat3X& positions);

// Fills velocities v_i = drift + omega x (x_i - centroid) and displacement
// targets d_i = (R_omega - I)(x_i - centroid) + drift, the exact rigid update
// after unit time. Both transform as vectors under rotation of the inputs.
void motion_targets(PointCloud& cloud, const Vec3& drift, const Vec3& omega);

// Canonical quadrant of a point about e3 (the disambiguation class rule).
int canonical_quadrant(double x, double y);

// ---- metrics ---------------------------------------------------------------

Eigen::MatrixXi confusion_matrix(const std::vector<int>& pred, const std::vector<int>& target,
                                 int num_classes);
double accuracy(const std::vector<int>& pred, const std::vector<int>& target);
// Mean over classes present in prediction or target of TP/(TP+FP+FN).
double instance_iou(const std::vector<int>& pred, const std::vector<int>& target,
                    int num_classes);

// ---- training ---------------------------------------------------------------

struct TrainOptions {
  int epochs = 500;
  double lr = 1e-4;       // peak; cosine schedule with warmup applies on top
  int warmup = 20;
  int batch = 8;          // clouds per step
  double weight_decay = 1e-8;
  uint64_t seed = 0;
  int eval_every = 0;     // 0: final evaluation only
};

struct MetricRow {
  int epoch;
  std::string split, metric;
  double value;
};

struct TrainResult {
  std::vector<MetricRow> history;
  double final_train_loss = 0;
  std::string metric_name;
  double metric_aligned = 0;  // on the test split as generated
  double metric_rotated = 0;  // on a freshly rotated copy of the test split
};

// Adam + cosine schedule; MSE for regression/motion, cross-entropy for the
// labeled tasks. Sets model.geometry_scale from the training set. Aborts
// with the epoch index if the loss diverges.
TrainResult train_model(Model& model, const TaskData& data, const TrainOptions& opts);

// Task metric on a set of clouds (higher-is-better only for iou/accuracy).
double evaluate_model(const Model& model, const TaskData& data,
                      const std::vector<PointCloud>& clouds, const VecX* targets);

std::string history_to_csv(const std::vector<MetricRow>& history);

}  // namespace rapidash
