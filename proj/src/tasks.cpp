#include "rapidash/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rapidash {

std::string task_name(TaskKind k) {
  switch (k) {
    case TaskKind::inv_regression: return "inv_regression";
    case TaskKind::part_segmentation: return "part_segmentation";
    case TaskKind::vector_motion: return "vector_motion";
    case TaskKind::symmetric_disambiguation: return "symmetric_disambiguation";
    case TaskKind::diffusion_gen: return "diffusion_gen";
  }
  return "?";
}

TaskKind task_from_name(const std::string& name) {
  if (name == "inv_regression") return TaskKind::inv_regression;
  if (name == "part_segmentation") return TaskKind::part_segmentation;
  if (name == "vector_motion") return TaskKind::vector_motion;
  if (name == "symmetric_disambiguation") return TaskKind::symmetric_disambiguation;
  if (name == "diffusion_gen") return TaskKind::diffusion_gen;
  throw std::invalid_argument("unknown task: " + name);
}

double pairwise_exp_target(const Mat3X& positions) {
  double total = 0;
  for (int i = 0; i < positions.rows(); ++i)
    for (int j = 0; j < positions.rows(); ++j)
      if (i != j) total += std::exp(-(positions.row(i) - positions.row(j)).norm());
  return total;
}

int canonical_quadrant(double x, double y) {
  if (x >= 0 && y >= 0) return 0;
  if (x < 0 && y >= 0) return 1;
  if (x < 0 && y < 0) return 2;
  return 3;
}

namespace {

PointCloud with_ones_feature(PointCloud cloud) {
  cloud.scalar_features = MatX::Ones(cloud.size(), 1);
  cloud.batch_ids.assign(cloud.size(), 0);
  return cloud;
}

PointCloud gen_regression_cloud(Rng& rng) {
  int n = 16 + uniform_int(rng, 17);  // 16..32 points
  PointCloud cloud;
  cloud.positions.resize(n, 3);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) cloud.positions(i, d) = normal_double(rng);
  return with_ones_feature(std::move(cloud));
}

// Four identical legs placed by exact 90-degree copies about e3; labels are
// the canonical quadrant. No point sits on the symmetry axis.
PointCloud gen_c4_table(Rng& rng, int points_per_leg, double noise) {
  Mat3X leg(points_per_leg, 3);
  for (int i = 0; i < points_per_leg; ++i) {
    double h = uniform_double(rng);  // leg extends vertically
    leg.row(i) << 1.0 + noise * normal_double(rng), 0.25 + noise * normal_double(rng),
        h + noise * normal_double(rng);
  }
  PointCloud cloud;
  cloud.positions.resize(4 * points_per_leg, 3);
  cloud.labels_int.resize(4 * points_per_leg);
  for (int m = 0; m < 4; ++m) {
    Mat3 rz = Rotation3::from_axis_angle(Vec3(0, 0, 1), m * M_PI / 2).matrix();
    for (int i = 0; i < points_per_leg; ++i) {
      Vec3 p = rz * leg.row(i).transpose();
      cloud.positions.row(m * points_per_leg + i) = p.transpose();
      cloud.labels_int[m * points_per_leg + i] =
          canonical_quadrant(p.x(), p.y());
    }
  }
  return with_ones_feature(std::move(cloud));
}

}  // namespace

void motion_targets(PointCloud& cloud, const Vec3& drift, const Vec3& omega) {
  Vec3 centroid = cloud.positions.colwise().mean().transpose();
  cloud.vector_features.assign(1, Mat3X(cloud.size(), 3));
  cloud.labels_vec.resize(cloud.size(), 3);
  double angle = omega.norm();
  Mat3 rot = angle > 0 ? Rotation3::from_axis_angle(omega, angle).matrix() : Mat3::Identity();
  for (int i = 0; i < cloud.size(); ++i) {
    Vec3 rel = cloud.positions.row(i).transpose() - centroid;
    cloud.vector_features[0].row(i) = (drift + omega.cross(rel)).transpose();
    cloud.labels_vec.row(i) = ((rot * rel - rel) + drift).transpose();
  }
}

namespace {

PointCloud gen_motion_chain(Rng& rng, int n_nodes, double noise) {
  PointCloud cloud;
  cloud.positions.resize(n_nodes, 3);
  Vec3 at(normal_double(rng), normal_double(rng), normal_double(rng));
  Vec3 dir = Vec3(normal_double(rng), normal_double(rng), normal_double(rng)).normalized();
  for (int i = 0; i < n_nodes; ++i) {
    cloud.positions.row(i) = at.transpose();
    Vec3 step = (dir + 0.6 * Vec3(normal_double(rng), normal_double(rng), normal_double(rng)))
                    .normalized();
    at += 0.5 * step;
    dir = step;
  }
  for (int i = 0; i < n_nodes; ++i)
    for (int d = 0; d < 3; ++d) cloud.positions(i, d) += noise * normal_double(rng);
  cloud = with_ones_feature(std::move(cloud));
  Vec3 drift(0.4 * normal_double(rng), 0.4 * normal_double(rng), 0.4 * normal_double(rng));
  Vec3 axis = Vec3(normal_double(rng), normal_double(rng), normal_double(rng)).normalized();
  motion_targets(cloud, drift, 0.3 * axis);
  return cloud;
}

// Composite of primitives with distinct local dimensionality: a 2-D sphere
// shell on top, a solid 3-D box at the bottom and a 1-D rod between them.
// Labels 0/1/2.
PointCloud gen_composite_shape(Rng& rng, int n_points, double noise) {
  PointCloud cloud;
  cloud.positions.resize(n_points, 3);
  cloud.labels_int.resize(n_points);
  double s = uniform_double(rng, 0.9, 1.1);  // per-sample scale jitter
  for (int i = 0; i < n_points; ++i) {
    double pick = uniform_double(rng);
    Vec3 p;
    int label;
    if (pick < 0.375) {  // sphere shell on top
      Vec3 dir(normal_double(rng), normal_double(rng), normal_double(rng));
      dir.normalize();
      p = Vec3(0, 0, 0.75) + 0.35 * dir;
      label = 0;
    } else if (pick < 0.75) {  // solid box at the bottom
      p = Vec3(uniform_double(rng, -0.3, 0.3), uniform_double(rng, -0.3, 0.3),
               uniform_double(rng, -0.3, 0.3));
      p += Vec3(0, 0, -0.55);
      label = 1;
    } else {  // thin rod between them
      double t = uniform_double(rng);
      p = Vec3(0, 0, -0.25 + 0.65 * t);
      label = 2;
    }
    for (int d = 0; d < 3; ++d) p[d] = s * p[d] + noise * normal_double(rng);
    cloud.positions.row(i) = p.transpose();
    cloud.labels_int[i] = label;
  }
  return with_ones_feature(std::move(cloud));
}

// 64-point canonical shapes for the toy generative task: cube or sphere
// shells centered at the origin.
PointCloud gen_diffusion_shape(Rng& rng, int n_points, double noise) {
  PointCloud cloud;
  cloud.positions.resize(n_points, 3);
  bool cube = uniform_double(rng) < 0.5;
  for (int i = 0; i < n_points; ++i) {
    Vec3 p;
    if (cube) {
      int face = uniform_int(rng, 6);
      double u = uniform_double(rng, -0.6, 0.6), v = uniform_double(rng, -0.6, 0.6);
      double w = face % 2 == 0 ? 0.6 : -0.6;
      if (face < 2) p = Vec3(w, u, v);
      else if (face < 4) p = Vec3(u, w, v);
      else p = Vec3(u, v, w);
    } else {
      Vec3 dir(normal_double(rng), normal_double(rng), normal_double(rng));
      dir.normalize();
      p = 0.7 * dir;
    }
    for (int d = 0; d < 3; ++d) p[d] += noise * normal_double(rng);
    cloud.positions.row(i) = p.transpose();
  }
  return with_ones_feature(std::move(cloud));
}

std::vector<PointCloud> generate_split(const TaskSpec& spec, int count, bool rotate,
                                       uint64_t stream) {
  Rng rng(split_seed(spec.seed, stream));
  std::vector<PointCloud> out;
  out.reserve(count);
  for (int s = 0; s < count; ++s) {
    PointCloud cloud;
    switch (spec.kind) {
      case TaskKind::inv_regression: cloud = gen_regression_cloud(rng); break;
      case TaskKind::symmetric_disambiguation:
        cloud = gen_c4_table(rng, spec.points > 0 ? spec.points / 4 : 6, spec.noise_level);
        break;
      case TaskKind::vector_motion:
        cloud = gen_motion_chain(rng, spec.points > 0 ? spec.points : 8, spec.noise_level);
        break;
      case TaskKind::part_segmentation:
        cloud = gen_composite_shape(rng, spec.points > 0 ? spec.points : 64, spec.noise_level);
        break;
      case TaskKind::diffusion_gen:
        cloud = gen_diffusion_shape(rng, spec.points > 0 ? spec.points : 64, spec.noise_level);
        break;
    }
    if (rotate) {
      RigidMotion g;
      g.rotation = random_rotation(rng);
      cloud = transform_cloud(cloud, g);
    }
    out.push_back(std::move(cloud));
  }
  return out;
}

}  // namespace

TaskData generate_task(const TaskSpec& spec) {
  TaskData data;
  data.spec = spec;
  data.train = generate_split(spec, spec.train_size, spec.rotate_train, 1);
  data.test = generate_split(spec, spec.test_size, spec.rotate_test, 2);
  switch (spec.kind) {
    case TaskKind::inv_regression: {
      data.train_targets.resize(spec.train_size);
      data.test_targets.resize(spec.test_size);
      for (int s = 0; s < spec.train_size; ++s)
        data.train_targets[s] = pairwise_exp_target(data.train[s].positions);
      for (int s = 0; s < spec.test_size; ++s)
        data.test_targets[s] = pairwise_exp_target(data.test[s].positions);
      break;
    }
    case TaskKind::part_segmentation: data.num_classes = 3; break;
    case TaskKind::symmetric_disambiguation: data.num_classes = 4; break;
    default: break;
  }
  return data;
}

Eigen::MatrixXi confusion_matrix(const std::vector<int>& pred, const std::vector<int>& target,
                                 int num_classes) {
  check(pred.size() == target.size(), "confusion_matrix: size mismatch");
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (size_t i = 0; i < pred.size(); ++i) m(target[i], pred[i]) += 1;
  return m;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& target) {
  check(!pred.empty() && pred.size() == target.size(), "accuracy: size mismatch");
  int hit = 0;
  for (size_t i = 0; i < pred.size(); ++i) hit += pred[i] == target[i];
  return static_cast<double>(hit) / pred.size();
}

double instance_iou(const std::vector<int>& pred, const std::vector<int>& target,
                    int num_classes) {
  Eigen::MatrixXi m = confusion_matrix(pred, target, num_classes);
  double total = 0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    int tp = m(c, c);
    int fp = m.col(c).sum() - tp;
    int fn = m.row(c).sum() - tp;
    if (tp + fp + fn == 0) continue;  // class absent on both sides
    total += static_cast<double>(tp) / (tp + fp + fn);
    ++used;
  }
  return used > 0 ? total / used : 1.0;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (logits.values()[static_cast<Eigen::Index>(i) * k + c] >
          logits.values()[static_cast<Eigen::Index>(i) * k + best])
        best = c;
    out[i] = best;
  }
  return out;
}

struct Batch {
  PointCloud cloud;
  ForwardPlan plan;
  VecX targets;  // regression
};

Tensor batch_loss(const Model& model, const Batch& batch, TaskKind kind) {
  Tensor out = model.forward(batch.plan);
  switch (kind) {
    case TaskKind::inv_regression: {
      const int n = static_cast<int>(batch.targets.size());
      ArrayX t(n);
      for (int i = 0; i < n; ++i) t[i] = static_cast<real_t>(batch.targets[i]);
      return mse_loss(out, Tensor::constant({n, 1}, std::move(t)));
    }
    case TaskKind::part_segmentation:
    case TaskKind::symmetric_disambiguation:
      return nll_loss(log_softmax(out), batch.cloud.labels_int);
    case TaskKind::vector_motion: {
      ArrayX t(batch.cloud.labels_vec.size());
      for (int i = 0; i < batch.cloud.labels_vec.rows(); ++i)
        for (int d = 0; d < 3; ++d)
          t[static_cast<Eigen::Index>(i) * 3 + d] =
              static_cast<real_t>(batch.cloud.labels_vec(i, d));
      return mse_loss(out, Tensor::constant({batch.cloud.size(), 3}, std::move(t)));
    }
    case TaskKind::diffusion_gen:
      throw std::invalid_argument("train_model: diffusion uses train_diffusion");
  }
  throw std::invalid_argument("train_model: unknown task kind");
}

double set_geometry_scale(Model& model, const std::vector<PointCloud>& train) {
  double total = 0;
  int used = 0;
  for (size_t s = 0; s < train.size() && used < 16; ++s, ++used) {
    NeighborGraph g = build_neighbors(train[s], NeighborMode::knn,
                                      static_cast<double>(model.config.neighbors_k));
    total += mean_neighbor_distance(train[s], g);
  }
  model.geometry_scale = total / std::max(1, used);
  return model.geometry_scale;
}

}  // namespace

double evaluate_model(const Model& model, const TaskData& data,
                      const std::vector<PointCloud>& clouds, const VecX* targets) {
  const TaskKind kind = data.spec.kind;
  double total = 0;
  long count = 0;
  for (size_t s = 0; s < clouds.size(); ++s) {
    Tensor out = model.forward(clouds[s]);
    switch (kind) {
      case TaskKind::inv_regression:
        total += std::abs(static_cast<double>(out.values()[0]) - (*targets)[s]);
        count += 1;
        break;
      case TaskKind::part_segmentation:
        total += instance_iou(argmax_rows(out), clouds[s].labels_int, data.num_classes);
        count += 1;
        break;
      case TaskKind::symmetric_disambiguation: {
        std::vector<int> pred = argmax_rows(out);
        for (size_t i = 0; i < pred.size(); ++i) total += pred[i] == clouds[s].labels_int[i];
        count += static_cast<long>(pred.size());
        break;
      }
      case TaskKind::vector_motion: {
        MatX diff = out.to_matrix() - clouds[s].labels_vec;
        total += diff.array().square().mean();
        count += 1;
        break;
      }
      case TaskKind::diffusion_gen:
        throw std::invalid_argument("evaluate_model: diffusion has its own evaluation");
    }
  }
  return total / count;
}

TrainResult train_model(Model& model, const TaskData& data, const TrainOptions& opts) {
  check(!data.train.empty(), "train_model: empty training set");
  const TaskKind kind = data.spec.kind;
  set_geometry_scale(model, data.train);

  // Fixed batch membership (plans are reused); batch order shuffles per epoch.
  std::vector<Batch> batches;
  for (int at = 0; at < static_cast<int>(data.train.size()); at += opts.batch) {
    int hi = std::min<int>(at + opts.batch, static_cast<int>(data.train.size()));
    std::vector<int> which;
    for (int s = at; s < hi; ++s) which.push_back(s);
    Batch b;
    b.cloud = merge_clouds(data.train, which);
    b.plan = model.prepare(b.cloud);
    if (kind == TaskKind::inv_regression) {
      b.targets.resize(hi - at);
      for (int s = at; s < hi; ++s) b.targets[s - at] = data.train_targets[s];
    }
    batches.push_back(std::move(b));
  }

  std::vector<Tensor> params = model.parameters();
  AdamState state;
  AdamOptions adam;
  adam.beta1 = 0.9;
  adam.beta2 = 0.999;
  adam.eps = 1e-8;
  adam.weight_decay = opts.weight_decay;

  TrainResult result;
  Rng order_rng(split_seed(opts.seed, 0xba7c4));
  std::vector<int> order(batches.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[uniform_int(order_rng, i + 1)]);
    adam.lr = opts.lr * cosine_lr(epoch, opts.epochs, opts.warmup);
    double epoch_loss = 0;
    for (int bi : order) {
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = batch_loss(model, batches[bi], kind);
      double lv = static_cast<double>(loss.scalar_value());
      if (!std::isfinite(lv))
        throw std::runtime_error("training diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch));
      tape.backward(loss);
      adam_step(params, state, adam);
      zero_grads(params);
      epoch_loss += lv;
    }
    epoch_loss /= static_cast<double>(batches.size());
    result.history.push_back({epoch, "train", "loss", epoch_loss});
    result.final_train_loss = epoch_loss;
    if (opts.eval_every > 0 && (epoch + 1) % opts.eval_every == 0) {
      double m = evaluate_model(model, data, data.test, &data.test_targets);
      result.history.push_back({epoch, "test", task_name(kind), m});
    }
  }

  switch (kind) {
    case TaskKind::inv_regression: result.metric_name = "mae"; break;
    case TaskKind::part_segmentation: result.metric_name = "iou"; break;
    case TaskKind::symmetric_disambiguation: result.metric_name = "accuracy"; break;
    case TaskKind::vector_motion: result.metric_name = "mse"; break;
    default: result.metric_name = "loss"; break;
  }
  result.metric_aligned = evaluate_model(model, data, data.test, &data.test_targets);
  Rng rot_rng(split_seed(opts.seed, 0x707a7e));
  std::vector<PointCloud> rotated;
  rotated.reserve(data.test.size());
  for (const PointCloud& c : data.test) {
    RigidMotion g;
    g.rotation = random_rotation(rot_rng);
    rotated.push_back(transform_cloud(c, g));
  }
  result.metric_rotated = evaluate_model(model, data, rotated, &data.test_targets);
  result.history.push_back({opts.epochs, "test", result.metric_name + "_aligned",
                            result.metric_aligned});
  result.history.push_back({opts.epochs, "test", result.metric_name + "_rotated",
                            result.metric_rotated});
  return result;
}

std::string history_to_csv(const std::vector<MetricRow>& history) {
  std::ostringstream os;
  os << "epoch,split,metric,value\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%s,%.17g\n", r.epoch, r.split.c_str(),
                  r.metric.c_str(), r.value);
    os << buf;
  }
  return os.str();
}

}  // namespace rapidash
