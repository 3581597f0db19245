#include "rapidash/nn.hpp"

#include <cmath>

namespace rapidash {

int embed_channels(const InputSpec& spec, int n_scalar, int n_aux) {
  int c = n_scalar;
  if (spec.coords_as_scalars) c += 3;
  if (spec.coords_as_vectors) c += 1;
  if (spec.aux_as_scalars) c += 3 * n_aux;
  if (spec.aux_as_vectors) c += n_aux;
  if (spec.global_frame) c += 3;
  return c;
}

Tensor embed_features(const PointCloud& cloud, const SphereGrid& grid, const InputSpec& spec) {
  const int p = cloud.size();
  const int o = grid.size();
  const int n_aux = cloud.num_vector_features();
  const bool wants_fiber = spec.coords_as_vectors || spec.aux_as_vectors || spec.global_frame;
  check(!(wants_fiber && o < 2),
        "embed_features: vector-style inputs (coords_as_vectors, aux_as_vectors, "
        "global_frame) need a spherical fiber (O >= 2) and are undefined on an R^3 "
        "base model; use the *_as_scalars variants instead");
  check(!((spec.aux_as_scalars || spec.aux_as_vectors) && n_aux == 0),
        "embed_features: input spec requests auxiliary vectors but the cloud has none");
  const int cin = embed_channels(spec, cloud.num_scalar_features(), n_aux);
  check(cin > 0, "embed_features: no input channels; give the cloud at least one scalar feature");

  ArrayX v(static_cast<Eigen::Index>(p) * o * cin);
  std::vector<Mat3> frames;
  std::vector<int> group_of(p, 0);
  if (spec.global_frame) {
    auto ranges = cloud.group_ranges();
    for (size_t g = 0; g < ranges.size(); ++g) {
      frames.push_back(cloud.group_pose(static_cast<int>(g)).matrix());
      for (int i = ranges[g].first; i < ranges[g].second; ++i)
        group_of[i] = static_cast<int>(g);
    }
  }
  for (int i = 0; i < p; ++i) {
    for (int k = 0; k < o; ++k) {
      Eigen::Index at = (static_cast<Eigen::Index>(i) * o + k) * cin;
      Vec3 nk = grid.direction(k);
      for (int s = 0; s < cloud.num_scalar_features(); ++s)
        v[at++] = static_cast<real_t>(cloud.scalar_features(i, s));
      if (spec.coords_as_scalars)
        for (int d = 0; d < 3; ++d) v[at++] = static_cast<real_t>(cloud.positions(i, d));
      if (spec.coords_as_vectors)
        v[at++] = static_cast<real_t>(cloud.positions.row(i).dot(nk));
      if (spec.aux_as_scalars)
        for (int a = 0; a < n_aux; ++a)
          for (int d = 0; d < 3; ++d)
            v[at++] = static_cast<real_t>(cloud.vector_features[a](i, d));
      if (spec.aux_as_vectors)
        for (int a = 0; a < n_aux; ++a)
          v[at++] = static_cast<real_t>(cloud.vector_features[a].row(i).dot(nk));
      if (spec.global_frame) {
        const Mat3& frame = frames[group_of[i]];
        for (int m = 0; m < 3; ++m) v[at++] = static_cast<real_t>(frame.col(m).dot(nk));
      }
    }
  }
  return Tensor::constant({p, o, cin}, std::move(v));
}

int monomial_count(int n_vars, int degree) {
  check(degree == 2, "monomial_count: only degree 2 kernels are supported");
  return 1 + n_vars + n_vars * (n_vars + 1) / 2;
}

MatX monomial_matrix(const MatX& attrs, int degree) {
  check(degree == 2, "monomial_matrix: only degree 2 kernels are supported");
  const int n = static_cast<int>(attrs.rows());
  const int nv = static_cast<int>(attrs.cols());
  MatX out(n, monomial_count(nv, degree));
  out.col(0).setOnes();
  out.block(0, 1, n, nv) = attrs;
  int c = 1 + nv;
  for (int i = 0; i < nv; ++i)
    for (int j = i; j < nv; ++j)
      out.col(c++) = attrs.col(i).cwiseProduct(attrs.col(j));
  return out;
}

Tensor poly_kernel(const Tensor& monomials, const Tensor& coeffs) {
  check(coeffs.rank() == 2 && monomials.rank() == 2 && coeffs.dim(1) == monomials.dim(1),
        "poly_kernel: coefficient columns must match monomial count");
  return matmul(monomials, transpose(coeffs));
}

ConvContext make_conv_context(const PointCloud& cloud, const NeighborGraph& graph,
                              const SphereGrid& grid, Regime regime, double geom_scale) {
  check(geom_scale > 0, "make_conv_context: geom_scale must be positive");
  ConvContext ctx;
  ctx.points = cloud.size();
  ctx.edges = graph.num_edges();
  ctx.edge_src = graph.neighbors;
  ctx.edge_dst = graph.targets;
  const double inv = 1.0 / geom_scale;
  MatX attrs;
  switch (regime) {
    case Regime::se3_r3:
      attrs = attrs_se3_r3(cloud, graph).values * inv;
      break;
    case Regime::t3_r3:
      attrs = attrs_t3_r3(cloud, graph).values * inv;
      break;
    case Regime::none_r3:
    case Regime::none_r3s2:
      attrs = attrs_none(cloud, graph).values * inv;
      break;
    case Regime::se3_r3s2: {
      ctx.fiber = grid.size();
      MatX sp = spatial_attrs_r3s2(cloud, graph, grid);
      attrs = sp * inv;
      break;
    }
  }
  if (regime == Regime::none_r3s2) {
    // Kernel is per edge; replicate rows over the fiber so stage 1 stays
    // shaped (E*O, M) like the se3_r3s2 path.
    ctx.fiber = grid.size();
    MatX rep(attrs.rows() * ctx.fiber, attrs.cols());
    for (Eigen::Index e = 0; e < attrs.rows(); ++e)
      for (int k = 0; k < ctx.fiber; ++k) rep.row(e * ctx.fiber + k) = attrs.row(e);
    attrs = std::move(rep);
  }
  ctx.spatial_vars = static_cast<int>(attrs.cols());
  ctx.spatial_monomials = Tensor::from_matrix(monomial_matrix(attrs));
  if (regime_has_fiber(regime)) {
    const MatX gram = grid.gram();
    for (int m = 0; m <= 2; ++m) {
      MatX a = m == 0 ? MatX::Ones(gram.rows(), gram.cols())
                      : MatX(gram.array().pow(m).matrix());
      a = a * grid.weights.asDiagonal();
      ctx.fiber_ops.push_back(std::move(a));
    }
  }
  return ctx;
}

Tensor LinearLayer::forward(const Tensor& x) const {
  const int cin = w.dim(0);
  check(x.dim(x.rank() - 1) == cin, "linear: input channels mismatch");
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  Tensor flat = reshape(x, {static_cast<int>(x.numel() / cin), cin});
  Tensor y = add(matmul(flat, w), b);
  return reshape(y, std::move(out_shape));
}

Tensor ConvBlock::conv_stages(const Tensor& field, const ConvContext& ctx) const {
  const int p = ctx.points, o = ctx.fiber, c = channels;
  const int e = ctx.edges;
  // (1) spatial: per edge and fiber, scale the gathered source features by
  // the depthwise kernel value, then segment-sum onto targets.
  Tensor gathered = gather_rows(field, ctx.edge_src);  // (E, O, C)
  Tensor kval = poly_kernel(ctx.spatial_monomials, spatial_coeffs);
  Tensor msg = mul(reshape(gathered, {e * o, c}), kval);
  Tensor agg = scatter_add(reshape(msg, {e, o, c}), ctx.edge_dst, p);
  if (!regime_has_fiber(regime)) return agg;
  // (2) fiber: out(i,k,c) = sum_l k_c(gram(k,l)) w_l agg(i,l,c), expanded in
  // the three gram monomials.
  Tensor out;
  for (int m = 0; m <= 2; ++m) {
    Tensor term = mul(fiber_matmul(agg, ctx.fiber_ops[m]),
                      reshape(slice(fiber_coeffs, 1, m, 1), {1, 1, c}));
    out = m == 0 ? term : add(out, term);
  }
  return out;
}

Tensor ConvBlock::forward(const Tensor& field, const ConvContext& ctx, int layer_index) const {
  const int c = channels;
  Tensor conv = conv_stages(field, ctx);
  Tensor normed = layer_norm(conv);
  normed = add(mul(normed, reshape(ln_gamma, {1, 1, c})), reshape(ln_beta, {1, 1, c}));
  Tensor h = mlp2.forward(gelu(mlp1.forward(normed)));
  Tensor out = add(field, h);
  if (!out.values().allFinite())
    throw std::runtime_error("non-finite values after conv block " + std::to_string(layer_index));
  return out;
}

Tensor EmbedLayer::forward(const Tensor& raw) const { return lift.forward(raw); }

Tensor fiber_mean(const Tensor& field, const SphereGrid& grid) {
  MatX row = grid.weights.transpose() / (4.0 * M_PI);
  Tensor m = fiber_matmul(field, row);  // (P, 1, C)
  return reshape(m, {field.dim(0), field.dim(2)});
}

Tensor InvariantReadout::forward(const Tensor& field, const SphereGrid& grid,
                                 const std::vector<std::pair<int, int>>& groups) const {
  Tensor fm = fiber_mean(field, grid);  // (P, C)
  if (scope == ReadoutScope::per_point) return head.forward(fm);
  const int b = static_cast<int>(groups.size());
  std::vector<int> gid(field.dim(0));
  ArrayX inv_count(b);
  for (int g = 0; g < b; ++g) {
    for (int i = groups[g].first; i < groups[g].second; ++i) gid[i] = g;
    inv_count[g] = static_cast<real_t>(1.0 / (groups[g].second - groups[g].first));
  }
  Tensor pooled = scatter_add(fm, gid, b);  // (B, C)
  pooled = mul(pooled, Tensor::constant({b, 1}, std::move(inv_count)));
  return head.forward(pooled);
}

Tensor VectorReadout::forward(const Tensor& field, const SphereGrid& grid) const {
  const int p = field.dim(0), o = field.dim(1), c = field.dim(2);
  check(o >= 2, "vector readout: needs a spherical fiber (O >= 2); an R^3 base field "
                "has no directional content");
  Tensor s = reshape(matmul(reshape(field, {p * o, c}), w), {p, o});
  MatX proj = (3.0 / (4.0 * M_PI)) * grid.weights.asDiagonal() * grid.directions;  // (O, 3)
  return matmul(s, Tensor::from_matrix(proj));
}

Tensor interpolate_up(const Tensor& coarse_field, const InterpPlan& plan) {
  const int pf = static_cast<int>(plan.indices.rows());
  const int kk = static_cast<int>(plan.indices.cols());
  Tensor out;
  for (int m = 0; m < kk; ++m) {
    std::vector<int> idx(pf);
    ArrayX wcol(pf);
    for (int i = 0; i < pf; ++i) {
      idx[i] = plan.indices(i, m);
      wcol[i] = static_cast<real_t>(plan.weights(i, m));
    }
    Tensor term = mul(gather_rows(coarse_field, idx),
                      Tensor::constant({pf, 1, 1}, std::move(wcol)));
    out = m == 0 ? term : add(out, term);
  }
  return out;
}

ArrayX normal_init(Rng& rng, Eigen::Index n, double stddev) {
  ArrayX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<real_t>(stddev * normal_double(rng));
  return v;
}

}  // namespace rapidash
