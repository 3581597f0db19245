#include "rapidash/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace rapidash {

int PointCloud::num_groups() const {
  return static_cast<int>(group_ranges().size());
}

std::vector<std::pair<int, int>> PointCloud::group_ranges() const {
  std::vector<std::pair<int, int>> out;
  int p = size();
  if (p == 0) return out;
  if (batch_ids.empty()) {
    out.emplace_back(0, p);
    return out;
  }
  int begin = 0;
  for (int i = 1; i <= p; ++i) {
    if (i == p || batch_ids[i] != batch_ids[begin]) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

void validate_cloud(const PointCloud& cloud) {
  check(cloud.positions.allFinite(), "PointCloud: positions must be finite");
  if (!cloud.batch_ids.empty()) {
    check(static_cast<int>(cloud.batch_ids.size()) == cloud.size(),
          "PointCloud: batch_ids size mismatch");
    for (size_t i = 1; i < cloud.batch_ids.size(); ++i)
      check(cloud.batch_ids[i] >= cloud.batch_ids[i - 1],
            "PointCloud: batch_ids must be non-decreasing");
  }
  for (const auto& vf : cloud.vector_features)
    check(vf.rows() == cloud.positions.rows(),
          "PointCloud: vector feature row count mismatch");
  if (cloud.scalar_features.size() > 0)
    check(cloud.scalar_features.rows() == cloud.positions.rows(),
          "PointCloud: scalar feature row count mismatch");
}

NeighborGraph build_neighbors(const PointCloud& cloud, NeighborMode mode, double param) {
  check(cloud.size() > 0, "build_neighbors: empty cloud");
  check(param > 0, "build_neighbors: param must be positive");
  const int p = cloud.size();
  NeighborGraph g;
  g.mode = mode;
  g.param = param;
  g.offsets.assign(p + 1, 0);

  std::vector<std::vector<int>> lists(p);
  for (auto [begin, end] : cloud.group_ranges()) {
    int gs = end - begin;
    for (int i = begin; i < end; ++i) {
      std::vector<std::pair<double, int>> cand;
      cand.reserve(gs - 1);
      for (int j = begin; j < end; ++j) {
        if (j == i) continue;
        cand.emplace_back((cloud.positions.row(j) - cloud.positions.row(i)).norm(), j);
      }
      std::sort(cand.begin(), cand.end());
      auto& lst = lists[i];
      if (mode == NeighborMode::knn) {
        int want = std::min(static_cast<int>(param), gs);
        for (int m = 0; m < static_cast<int>(cand.size()) && m < want; ++m)
          lst.push_back(cand[m].second);
        if (static_cast<int>(lst.size()) < want) lst.push_back(i);  // self fills up
      } else {
        for (const auto& [d, j] : cand)
          if (d <= param) lst.push_back(j);
        if (lst.empty()) lst.push_back(i);  // isolated point keeps a self loop
      }
    }
  }
  for (int i = 0; i < p; ++i) g.offsets[i + 1] = g.offsets[i] + static_cast<int>(lists[i].size());
  g.neighbors.reserve(g.offsets[p]);
  g.targets.reserve(g.offsets[p]);
  for (int i = 0; i < p; ++i)
    for (int j : lists[i]) {
      g.neighbors.push_back(j);
      g.targets.push_back(i);
    }
  return g;
}

std::vector<int> farthest_point_sample(const PointCloud& cloud, double ratio) {
  check(ratio > 0 && ratio <= 1, "farthest_point_sample: ratio must be in (0, 1]");
  std::vector<int> out;
  for (auto [begin, end] : cloud.group_ranges()) {
    int gs = end - begin;
    int want = static_cast<int>(std::ceil(ratio * gs));
    std::vector<int> chosen;
    chosen.reserve(want);
    std::vector<double> dist(gs, std::numeric_limits<double>::infinity());
    int cur = begin;
    for (int m = 0; m < want; ++m) {
      chosen.push_back(cur);
      if (m + 1 == want) break;
      int next = -1;
      double best = -1;
      for (int j = begin; j < end; ++j) {
        double d = (cloud.positions.row(j) - cloud.positions.row(cur)).norm();
        dist[j - begin] = std::min(dist[j - begin], d);
        if (dist[j - begin] > best) {
          best = dist[j - begin];
          next = j;
        }
      }
      cur = next;
    }
    std::sort(chosen.begin(), chosen.end());
    out.insert(out.end(), chosen.begin(), chosen.end());
  }
  return out;
}

InterpPlan make_interp_plan(const Mat3X& coarse_pos, const Mat3X& fine_pos, int k) {
  check(k >= 1, "make_interp_plan: k must be >= 1");
  check(coarse_pos.rows() >= 1, "make_interp_plan: empty coarse set");
  const int pc = static_cast<int>(coarse_pos.rows());
  const int pf = static_cast<int>(fine_pos.rows());
  const int kk = std::min(k, pc);
  InterpPlan plan;
  plan.indices.resize(pf, kk);
  plan.weights.resize(pf, kk);
  for (int i = 0; i < pf; ++i) {
    std::vector<std::pair<double, int>> cand(pc);
    for (int j = 0; j < pc; ++j)
      cand[j] = {(coarse_pos.row(j) - fine_pos.row(i)).norm(), j};
    std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
    for (int m = 0; m < kk; ++m) plan.indices(i, m) = cand[m].second;
    if (cand[0].first < 1e-12) {
      // Coincident coarse point: exact copy.
      plan.weights.row(i).setZero();
      plan.weights(i, 0) = 1.0;
      continue;
    }
    double total = 0;
    for (int m = 0; m < kk; ++m) {
      plan.weights(i, m) = 1.0 / (cand[m].first + 1e-8);
      total += plan.weights(i, m);
    }
    plan.weights.row(i) /= total;
  }
  return plan;
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidMotion& g) {
  PointCloud out = cloud;
  const Mat3 rt = g.rotation.matrix().transpose();
  out.positions = cloud.positions * rt;
  out.positions.rowwise() += g.translation.transpose();
  for (size_t v = 0; v < cloud.vector_features.size(); ++v)
    out.vector_features[v] = cloud.vector_features[v] * rt;
  if (cloud.labels_vec.rows() > 0) out.labels_vec = cloud.labels_vec * rt;
  out.poses.resize(cloud.num_groups());
  for (int b = 0; b < cloud.num_groups(); ++b) out.poses[b] = g.rotation * cloud.group_pose(b);
  return out;
}

PointCloud subset_cloud(const PointCloud& cloud, const std::vector<int>& indices) {
  PointCloud out;
  const int n = static_cast<int>(indices.size());
  out.positions.resize(n, 3);
  for (int m = 0; m < n; ++m) out.positions.row(m) = cloud.positions.row(indices[m]);
  if (cloud.scalar_features.size() > 0) {
    out.scalar_features.resize(n, cloud.scalar_features.cols());
    for (int m = 0; m < n; ++m)
      out.scalar_features.row(m) = cloud.scalar_features.row(indices[m]);
  }
  out.vector_features.resize(cloud.vector_features.size());
  for (size_t v = 0; v < cloud.vector_features.size(); ++v) {
    out.vector_features[v].resize(n, 3);
    for (int m = 0; m < n; ++m)
      out.vector_features[v].row(m) = cloud.vector_features[v].row(indices[m]);
  }
  if (!cloud.batch_ids.empty()) {
    out.batch_ids.resize(n);
    for (int m = 0; m < n; ++m) out.batch_ids[m] = cloud.batch_ids[indices[m]];
  }
  if (!cloud.labels_int.empty()) {
    out.labels_int.resize(n);
    for (int m = 0; m < n; ++m) out.labels_int[m] = cloud.labels_int[indices[m]];
  }
  if (cloud.labels_vec.rows() > 0) {
    out.labels_vec.resize(n, 3);
    for (int m = 0; m < n; ++m) out.labels_vec.row(m) = cloud.labels_vec.row(indices[m]);
  }
  if (!cloud.poses.empty() && n > 0) {
    // Selected points form new contiguous groups; carry each one's old pose.
    std::vector<int> ordinal(cloud.size());
    auto ranges = cloud.group_ranges();
    for (size_t g = 0; g < ranges.size(); ++g)
      for (int i = ranges[g].first; i < ranges[g].second; ++i) ordinal[i] = static_cast<int>(g);
    int prev = -1;
    for (int m = 0; m < n; ++m) {
      int g = ordinal[indices[m]];
      if (g != prev) {
        out.poses.push_back(cloud.poses.at(g));
        prev = g;
      }
    }
  }
  return out;
}

PointCloud merge_clouds(const std::vector<PointCloud>& clouds,
                        const std::vector<int>& which) {
  check(!which.empty(), "merge_clouds: empty selection");
  int total = 0;
  for (int w : which) total += clouds[w].size();
  const PointCloud& first = clouds[which[0]];
  PointCloud out;
  out.positions.resize(total, 3);
  int s = first.num_scalar_features();
  int v = first.num_vector_features();
  if (s > 0) out.scalar_features.resize(total, s);
  out.vector_features.assign(v, Mat3X(total, 3));
  bool has_int = !first.labels_int.empty();
  bool has_vec = first.labels_vec.rows() > 0;
  if (has_int) out.labels_int.resize(total);
  if (has_vec) out.labels_vec.resize(total, 3);
  out.batch_ids.resize(total);
  int row = 0;
  for (size_t b = 0; b < which.size(); ++b) {
    const PointCloud& c = clouds[which[b]];
    check(c.num_scalar_features() == s && c.num_vector_features() == v,
          "merge_clouds: feature layout mismatch");
    check(c.num_groups() <= 1, "merge_clouds: inputs must be single-group clouds");
    for (int i = 0; i < c.size(); ++i, ++row) {
      out.positions.row(row) = c.positions.row(i);
      if (s > 0) out.scalar_features.row(row) = c.scalar_features.row(i);
      for (int m = 0; m < v; ++m) out.vector_features[m].row(row) = c.vector_features[m].row(i);
      if (has_int) out.labels_int[row] = c.labels_int[i];
      if (has_vec) out.labels_vec.row(row) = c.labels_vec.row(i);
      out.batch_ids[row] = static_cast<int>(b);
    }
    out.poses.push_back(c.group_pose(0));
  }
  return out;
}

std::string cloud_to_csv(const PointCloud& cloud) {
  std::ostringstream os;
  os << "x,y,z";
  for (int c = 0; c < cloud.num_scalar_features(); ++c) os << ",s" << c;
  for (int v = 0; v < cloud.num_vector_features(); ++v)
    os << ",v" << v << "x,v" << v << "y,v" << v << "z";
  bool has_vec = cloud.labels_vec.rows() > 0;
  if (has_vec) os << ",lx,ly,lz";
  if (!cloud.labels_int.empty()) os << ",label";
  if (!cloud.batch_ids.empty()) os << ",batch";
  os << "\n";
  char buf[64];
  auto put = [&](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    os << buf;
  };
  for (int i = 0; i < cloud.size(); ++i) {
    put(cloud.positions(i, 0)); os << ','; put(cloud.positions(i, 1)); os << ',';
    put(cloud.positions(i, 2));
    for (int c = 0; c < cloud.num_scalar_features(); ++c) { os << ','; put(cloud.scalar_features(i, c)); }
    for (int v = 0; v < cloud.num_vector_features(); ++v)
      for (int d = 0; d < 3; ++d) { os << ','; put(cloud.vector_features[v](i, d)); }
    if (has_vec)
      for (int d = 0; d < 3; ++d) { os << ','; put(cloud.labels_vec(i, d)); }
    if (!cloud.labels_int.empty()) os << ',' << cloud.labels_int[i];
    if (!cloud.batch_ids.empty()) os << ',' << cloud.batch_ids[i];
    os << "\n";
  }
  return os.str();
}

PointCloud cloud_from_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "cloud_from_csv: empty input");
  std::vector<std::string> headers;
  {
    std::istringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) headers.push_back(tok);
  }
  check(headers.size() >= 3 && headers[0] == "x" && headers[1] == "y" && headers[2] == "z",
        "cloud_from_csv: header must start with x,y,z");
  int n_scalar = 0, n_vec = 0;
  bool has_lvec = false, has_label = false, has_batch = false;
  for (size_t h = 3; h < headers.size(); ++h) {
    const std::string& name = headers[h];
    if (name.size() >= 2 && name[0] == 's') ++n_scalar;
    else if (name[0] == 'v') ++n_vec;
    else if (name == "lx" || name == "ly" || name == "lz") has_lvec = true;
    else if (name == "label") has_label = true;
    else if (name == "batch") has_batch = true;
    else throw std::invalid_argument("cloud_from_csv: unknown column " + name);
  }
  check(n_vec % 3 == 0, "cloud_from_csv: vector feature columns must come in triples");
  n_vec /= 3;

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) vals.push_back(std::stod(tok));
    check(vals.size() == headers.size(), "cloud_from_csv: row width mismatch");
    rows.push_back(std::move(vals));
  }
  const int p = static_cast<int>(rows.size());
  PointCloud cloud;
  cloud.positions.resize(p, 3);
  if (n_scalar > 0) cloud.scalar_features.resize(p, n_scalar);
  cloud.vector_features.assign(n_vec, Mat3X(p, 3));
  if (has_lvec) cloud.labels_vec.resize(p, 3);
  if (has_label) cloud.labels_int.resize(p);
  if (has_batch) cloud.batch_ids.resize(p);
  for (int i = 0; i < p; ++i) {
    int c = 0;
    for (int d = 0; d < 3; ++d) cloud.positions(i, d) = rows[i][c++];
    for (int m = 0; m < n_scalar; ++m) cloud.scalar_features(i, m) = rows[i][c++];
    for (int v = 0; v < n_vec; ++v)
      for (int d = 0; d < 3; ++d) cloud.vector_features[v](i, d) = rows[i][c++];
    if (has_lvec)
      for (int d = 0; d < 3; ++d) cloud.labels_vec(i, d) = rows[i][c++];
    if (has_label) cloud.labels_int[i] = static_cast<int>(rows[i][c++]);
    if (has_batch) cloud.batch_ids[i] = static_cast<int>(rows[i][c++]);
  }
  return cloud;
}

}  // namespace rapidash
