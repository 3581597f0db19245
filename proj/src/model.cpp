#include "rapidash/model.hpp"

#include <cmath>

namespace rapidash {

std::string readout_name(ReadoutKind r) {
  switch (r) {
    case ReadoutKind::invariant_global: return "invariant_global";
    case ReadoutKind::invariant_perpoint: return "invariant_perpoint";
    case ReadoutKind::vector_out: return "vector";
  }
  return "?";
}

ReadoutKind readout_from_name(const std::string& name) {
  if (name == "invariant_global") return ReadoutKind::invariant_global;
  if (name == "invariant_perpoint") return ReadoutKind::invariant_perpoint;
  if (name == "vector") return ReadoutKind::vector_out;
  throw std::invalid_argument("unknown readout: " + name);
}

std::string effective_equivariance_name(EffectiveEquivariance e) {
  switch (e) {
    case EffectiveEquivariance::se3: return "SE3";
    case EffectiveEquivariance::so3: return "SO3";
    case EffectiveEquivariance::t3: return "T3";
    case EffectiveEquivariance::none: return "none";
  }
  return "?";
}

void validate_config(const ModelConfig& cfg) {
  check(cfg.layers >= 1, "config: layers must be >= 1");
  check(cfg.width() >= 1, "config: channels must be >= 1");
  bool r3_base = cfg.fiber_size == 0;
  bool r3_regime = !regime_has_fiber(cfg.regime);
  check(r3_base == r3_regime,
        "config: fiber_size = 0 if and only if the regime is an R^3 one (se3_r3, t3_r3, "
        "none_r3); got fiber_size " + std::to_string(cfg.fiber_size) + " with regime " +
            regime_name(cfg.regime));
  if (cfg.readout == ReadoutKind::vector_out)
    check(cfg.fiber_size >= 2, "config: readout=vector requires fiber_size >= 2");
  if (!cfg.scales.empty()) {
    check(cfg.scales.front() == 1.0, "config: scales must start at 1.0");
    for (size_t s = 1; s < cfg.scales.size(); ++s)
      check(cfg.scales[s] > 0 && cfg.scales[s] < cfg.scales[s - 1],
            "config: scales must be strictly decreasing in (0, 1]");
  }
  bool wants_fiber_inputs = cfg.input_spec.coords_as_vectors ||
                            cfg.input_spec.aux_as_vectors || cfg.input_spec.global_frame;
  check(!(wants_fiber_inputs && cfg.fiber_size < 2),
        "config: vector-style inputs need fiber_size >= 2; use the *_as_scalars variants "
        "on R^3 base models");
  check(cfg.neighbors_k >= 1, "config: neighbors_k must be >= 1");
  check(cfg.target_dim >= 1, "config: target_dim must be >= 1");
}

EffectiveEquivariance effective_equivariance(const ModelConfig& cfg) {
  bool rot = false, trans = false;
  switch (cfg.regime) {
    case Regime::se3_r3:
    case Regime::se3_r3s2: rot = trans = true; break;
    case Regime::t3_r3: trans = true; break;
    case Regime::none_r3:
    case Regime::none_r3s2: break;
  }
  if (cfg.input_spec.coords_as_scalars) { rot = false; trans = false; }
  if (cfg.input_spec.coords_as_vectors) trans = false;
  if (cfg.input_spec.aux_as_scalars) rot = false;
  if (rot && trans) return EffectiveEquivariance::se3;
  if (rot) return EffectiveEquivariance::so3;
  if (trans) return EffectiveEquivariance::t3;
  return EffectiveEquivariance::none;
}

namespace {

int spatial_var_count(Regime regime) {
  switch (regime) {
    case Regime::se3_r3: return 1;
    case Regime::t3_r3: return 3;
    case Regime::se3_r3s2: return 2;
    case Regime::none_r3:
    case Regime::none_r3s2: return 6;
  }
  return 0;
}

LinearLayer init_linear(Rng& rng, int cin, int cout, const std::string&) {
  LinearLayer l;
  l.w = Tensor::param({cin, cout}, normal_init(rng, static_cast<Eigen::Index>(cin) * cout,
                                               1.0 / std::sqrt(static_cast<double>(cin))));
  l.b = Tensor::param({cout}, ArrayX::Zero(cout));
  return l;
}

}  // namespace

Model build_model(const ModelConfig& cfg) {
  validate_config(cfg);
  Model model;
  model.config = cfg;
  model.grid = make_sphere_grid(cfg.grid_size(), cfg.grid_method);

  const int c = cfg.width();
  const int cin = embed_channels(cfg.input_spec, cfg.in_scalars, cfg.in_aux_vectors);
  check(cin > 0, "config: model has no input channels; in_scalars or an input flag is needed");
  const int n_levels = cfg.scales.empty() ? 1 : static_cast<int>(cfg.scales.size());
  const bool u_shape = cfg.readout != ReadoutKind::invariant_global;
  const int n_stages = u_shape ? 2 * n_levels - 1 : n_levels;
  model.blocks_per_stage.assign(n_stages, cfg.layers / n_stages);
  for (int s = 0; s < cfg.layers % n_stages; ++s) ++model.blocks_per_stage[s];

  Rng rng(split_seed(cfg.seed, 0x9a7));
  model.embed.lift = init_linear(rng, cin, c, "embed");

  const int m_sp = monomial_count(spatial_var_count(cfg.regime));
  const double spatial_std = 1.0 / std::sqrt(static_cast<double>(m_sp) * cfg.neighbors_k);
  const double fiber_std = 1.0 / std::sqrt(3.0 * 4.0 * M_PI);
  for (int b = 0; b < cfg.layers; ++b) {
    ConvBlock blk;
    blk.regime = cfg.regime;
    blk.channels = c;
    blk.spatial_coeffs =
        Tensor::param({c, m_sp}, normal_init(rng, static_cast<Eigen::Index>(c) * m_sp, spatial_std));
    if (regime_has_fiber(cfg.regime))
      blk.fiber_coeffs =
          Tensor::param({c, 3}, normal_init(rng, static_cast<Eigen::Index>(c) * 3, fiber_std));
    blk.ln_gamma = Tensor::param({c}, ArrayX::Ones(c));
    blk.ln_beta = Tensor::param({c}, ArrayX::Zero(c));
    blk.mlp1 = init_linear(rng, c, 4 * c, "mlp1");
    blk.mlp2 = init_linear(rng, 4 * c, c, "mlp2");
    model.blocks.push_back(std::move(blk));
  }
  if (u_shape)
    for (int s = 0; s + 1 < n_levels; ++s)
      model.fuse.push_back(init_linear(rng, 2 * c, c, "fuse"));

  if (cfg.readout == ReadoutKind::vector_out) {
    model.vec_readout.w = Tensor::param(
        {c, 1}, normal_init(rng, c, 1.0 / std::sqrt(static_cast<double>(c))));
  } else {
    model.inv_readout.scope = cfg.readout == ReadoutKind::invariant_global
                                  ? ReadoutScope::global
                                  : ReadoutScope::per_point;
    model.inv_readout.head = init_linear(rng, c, cfg.target_dim, "readout");
  }
  return model;
}

long expected_parameter_count(const ModelConfig& cfg) {
  const long c = cfg.width();
  const long cin = embed_channels(cfg.input_spec, cfg.in_scalars, cfg.in_aux_vectors);
  const long m_sp = monomial_count(spatial_var_count(cfg.regime));
  long per_block = c * m_sp + (regime_has_fiber(cfg.regime) ? c * 3 : 0) + 2 * c +
                   (c * 4 * c + 4 * c) + (4 * c * c + c);
  long total = cin * c + c + cfg.layers * per_block;
  const int n_levels = cfg.scales.empty() ? 1 : static_cast<int>(cfg.scales.size());
  if (cfg.readout != ReadoutKind::invariant_global)
    total += (n_levels - 1) * (2 * c * c + c);
  if (cfg.readout == ReadoutKind::vector_out)
    total += c;
  else
    total += c * cfg.target_dim + cfg.target_dim;
  return total;
}

ForwardPlan Model::prepare(const PointCloud& cloud) const {
  validate_cloud(cloud);
  check(cloud.num_scalar_features() == config.in_scalars &&
            cloud.num_vector_features() == config.in_aux_vectors,
        "forward: cloud feature layout does not match the model's input signature");
  ForwardPlan plan;
  const int n_levels = num_levels();
  plan.levels.resize(n_levels);
  plan.levels[0].cloud = cloud;
  for (int s = 0; s < n_levels; ++s) {
    auto& lvl = plan.levels[s];
    if (s > 0) {
      auto& prev = plan.levels[s - 1];
      double ratio = config.scales[s] / config.scales[s - 1];
      prev.down_indices = farthest_point_sample(prev.cloud, ratio);
      lvl.cloud = subset_cloud(prev.cloud, prev.down_indices);
      prev.up_plan = make_interp_plan(lvl.cloud.positions, prev.cloud.positions, 3);
    }
    NeighborGraph graph =
        build_neighbors(lvl.cloud, NeighborMode::knn, static_cast<double>(config.neighbors_k));
    lvl.ctx = make_conv_context(lvl.cloud, graph, grid, config.regime, geometry_scale);
    lvl.groups = lvl.cloud.group_ranges();
  }
  plan.embed_raw = embed_features(cloud, grid, config.input_spec);
  return plan;
}

Tensor Model::forward(const ForwardPlan& plan) const {
  const int n_levels = num_levels();
  const bool u_shape = config.readout != ReadoutKind::invariant_global;
  Tensor field = embed.forward(plan.embed_raw);
  if (!field.values().allFinite()) throw std::runtime_error("non-finite values after embed");

  int block_at = 0, stage = 0, layer_index = 0;
  auto run_stage = [&](int level) {
    for (int b = 0; b < blocks_per_stage[stage]; ++b, ++block_at, ++layer_index)
      field = blocks[block_at].forward(field, plan.levels[level].ctx, layer_index);
    ++stage;
  };

  std::vector<Tensor> skips(n_levels);
  for (int s = 0; s < n_levels; ++s) {
    run_stage(s);
    skips[s] = field;
    if (s + 1 < n_levels) field = gather_rows(field, plan.levels[s].down_indices);
  }
  int level = n_levels - 1;
  if (u_shape) {
    for (int s = n_levels - 2; s >= 0; --s) {
      field = interpolate_up(field, plan.levels[s].up_plan);
      field = fuse[n_levels - 2 - s].forward(concat({field, skips[s]}, 2));
      run_stage(s);
    }
    level = 0;
  }

  Tensor out;
  if (config.readout == ReadoutKind::vector_out)
    out = vec_readout.forward(field, grid);
  else
    out = inv_readout.forward(field, grid, plan.levels[level].groups);
  if (!out.values().allFinite()) throw std::runtime_error("non-finite values after readout");
  return out;
}

Tensor Model::forward(const PointCloud& cloud) const { return forward(prepare(cloud)); }

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.w", embed.lift.w);
  out.emplace_back("embed.b", embed.lift.b);
  for (size_t b = 0; b < blocks.size(); ++b) {
    std::string p = "block" + std::to_string(b) + ".";
    out.emplace_back(p + "spatial_coeffs", blocks[b].spatial_coeffs);
    if (blocks[b].fiber_coeffs.defined()) out.emplace_back(p + "fiber_coeffs", blocks[b].fiber_coeffs);
    out.emplace_back(p + "ln_gamma", blocks[b].ln_gamma);
    out.emplace_back(p + "ln_beta", blocks[b].ln_beta);
    out.emplace_back(p + "mlp1.w", blocks[b].mlp1.w);
    out.emplace_back(p + "mlp1.b", blocks[b].mlp1.b);
    out.emplace_back(p + "mlp2.w", blocks[b].mlp2.w);
    out.emplace_back(p + "mlp2.b", blocks[b].mlp2.b);
  }
  for (size_t f = 0; f < fuse.size(); ++f) {
    std::string p = "fuse" + std::to_string(f) + ".";
    out.emplace_back(p + "w", fuse[f].w);
    out.emplace_back(p + "b", fuse[f].b);
  }
  if (config.readout == ReadoutKind::vector_out) {
    out.emplace_back("readout.w", vec_readout.w);
  } else {
    out.emplace_back("readout.w", inv_readout.head.w);
    out.emplace_back("readout.b", inv_readout.head.b);
  }
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

long Model::parameter_count() const {
  long n = 0;
  for (auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

}  // namespace rapidash
