#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "hazekit/graph.hpp"
#include "hazekit/losses.hpp"
#include "hazekit/mmd.hpp"
#include "hazekit/nets.hpp"
#include "hazekit/rng.hpp"

namespace hazekit {

struct CheckSummary {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_err = 0.0;

  bool ok() const { return failed == 0 && checked > 0; }
};

namespace selfcheck_detail {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsTol = 1e-8;

inline void record(CheckSummary& s, double analytic, double fd) {
  const double diff = std::abs(analytic - fd);
  const double scale = std::max(std::abs(analytic), std::abs(fd));
  const double err = diff / std::max(scale, 1e-4);
  s.checked += 1;
  s.max_err = std::max(s.max_err, err);
  if (diff > kAbsTol + kRelTol * scale) s.failed += 1;
}

/// One finite-difference case: inputs plus a builder that assembles a scalar
/// loss from their leaf variables.
struct FdCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Var(Graph&, std::vector<Var>&)> build;
};

inline void run_fd_case(FdCase& c, std::size_t coords, RandomStream& rs,
                        CheckSummary& total, std::ostream* log) {
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (Tensor& t : c.inputs) vars.push_back(g.leaf(t));
    g.backward(c.build(g, vars));
    for (Var v : vars) analytic.push_back(g.grad(v));
  }
  auto value = [&]() {
    Graph g;
    std::vector<Var> vars;
    for (Tensor& t : c.inputs) vars.push_back(g.constant(t));
    return g.val(c.build(g, vars)).data[0];
  };
  CheckSummary local;
  for (std::size_t s = 0; s < coords; ++s) {
    const std::size_t k = rs.index(c.inputs.size());
    const std::size_t i = rs.index(c.inputs[k].size());
    const double saved = c.inputs[k].data[i];
    c.inputs[k].data[i] = saved + kFdStep;
    const double up = value();
    c.inputs[k].data[i] = saved - kFdStep;
    const double dn = value();
    c.inputs[k].data[i] = saved;
    record(local, analytic[k][i], (up - dn) / (2.0 * kFdStep));
  }
  total.checked += local.checked;
  total.failed += local.failed;
  total.max_err = std::max(total.max_err, local.max_err);
  if (log) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "  %-18s %3zu coords  max rel err %.3e  %s\n",
                  c.name.c_str(), local.checked, local.max_err,
                  local.failed == 0 ? "ok" : "FAIL");
    (*log) << line;
  }
}

inline Tensor random_tensor(RandomStream& rs, Shape shape, double lo,
                            double hi) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = rs.uniform(lo, hi);
  return t;
}

/// Keeps sampled values at least `margin` away from a kink location.
inline void avoid_kink(Tensor& t, double at, double margin) {
  for (double& x : t.data) {
    if (std::abs(x - at) < margin) x = at + (x >= at ? margin : -margin);
  }
}

}  // namespace selfcheck_detail

/// Finite-difference validation of every primitive, each reduced to a scalar
/// through sum so individual coordinates can be probed.
inline CheckSummary grad_check_primitives(std::uint64_t seed,
                                          std::size_t coords_per_case = 14,
                                          std::ostream* log = nullptr) {
  using namespace selfcheck_detail;
  RandomStream rs(derive_seed(seed, 0xF0));
  CheckSummary total;
  std::vector<FdCase> cases;

  auto shape2 = [&]() {
    return Shape{2 + rs.index(15), 2 + rs.index(15)};  // up to 16x16
  };

  {
    const Shape s = shape2();
    cases.push_back({"add",
                     {random_tensor(rs, s, -2, 2), random_tensor(rs, s, -2, 2)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.add(v[0], v[1]));
                     }});
  }
  {
    const Shape s = shape2();
    cases.push_back({"sub",
                     {random_tensor(rs, s, -2, 2), random_tensor(rs, s, -2, 2)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.sub(v[0], v[1]));
                     }});
  }
  {
    const Shape s = shape2();
    cases.push_back({"mul",
                     {random_tensor(rs, s, -2, 2), random_tensor(rs, s, -2, 2)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.mul(v[0], v[1]));
                     }});
  }
  {
    const std::size_t m = 2 + rs.index(7), k = 2 + rs.index(7),
                      n = 2 + rs.index(7);
    cases.push_back({"matmul",
                     {random_tensor(rs, {m, k}, -1.5, 1.5),
                      random_tensor(rs, {k, n}, -1.5, 1.5)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.matmul(v[0], v[1]));
                     }});
  }
  cases.push_back({"neg",
                   {random_tensor(rs, shape2(), -2, 2)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.neg(v[0]));
                   }});
  cases.push_back({"exp",
                   {random_tensor(rs, shape2(), -1.5, 1.5)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.exp(v[0]));
                   }});
  cases.push_back({"log",
                   {random_tensor(rs, shape2(), 0.2, 3.0)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.log(v[0]));
                   }});
  cases.push_back({"square",
                   {random_tensor(rs, shape2(), -2, 2)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.square(v[0]));
                   }});
  cases.push_back({"sum",
                   {random_tensor(rs, shape2(), -2, 2)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.square(g.sum(v[0]));
                   }});
  cases.push_back({"mean",
                   {random_tensor(rs, shape2(), -2, 2)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.square(g.mean(v[0]));
                   }});
  {
    Tensor t = random_tensor(rs, shape2(), -2, 2);
    avoid_kink(t, 0.0, 1e-2);
    cases.push_back({"leaky_relu",
                     {std::move(t)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.leaky_relu(v[0], 0.2));
                     }});
  }
  cases.push_back({"tanh",
                   {random_tensor(rs, shape2(), -2, 2)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.tanh(v[0]));
                   }});
  cases.push_back({"sigmoid",
                   {random_tensor(rs, shape2(), -3, 3)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.sigmoid(v[0]));
                   }});
  {
    const std::size_t L = 2 + rs.index(5);
    cases.push_back({"pairwise_sqdist",
                     {random_tensor(rs, {2 + rs.index(6), L}, -2, 2),
                      random_tensor(rs, {2 + rs.index(6), L}, -2, 2)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.pairwise_sqdist(v[0], v[1]));
                     }});
  }
  {
    const Shape s = shape2();
    cases.push_back({"broadcast_add",
                     {random_tensor(rs, s, -2, 2),
                      random_tensor(rs, {s[1]}, -2, 2)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.square(g.broadcast_add(v[0], v[1])));
                     }});
  }
  cases.push_back({"scale",
                   {random_tensor(rs, shape2(), -2, 2)},
                   [](Graph& g, std::vector<Var>& v) {
                     return g.sum(g.scale(v[0], -1.7));
                   }});
  {
    const std::size_t c = 2 + rs.index(8);
    cases.push_back({"concat_rows",
                     {random_tensor(rs, {2 + rs.index(6), c}, -2, 2),
                      random_tensor(rs, {2 + rs.index(6), c}, -2, 2)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.square(g.concat_rows(v[0], v[1])));
                     }});
  }
  {
    Tensor t = random_tensor(rs, shape2(), -2, 2);
    avoid_kink(t, -0.9, 1e-2);
    avoid_kink(t, 0.9, 1e-2);
    cases.push_back({"clamp",
                     {std::move(t)},
                     [](Graph& g, std::vector<Var>& v) {
                       return g.sum(g.square(g.clamp(v[0], -0.9, 0.9)));
                     }});
  }

  if (log) (*log) << "[grad-check] primitives\n";
  for (FdCase& c : cases) run_fd_case(c, coords_per_case, rs, total, log);
  return total;
}

namespace selfcheck_detail {

/// Frozen inputs for the full-objective gradient check at toy scale.
struct CompositeSetup {
  Model model;
  Tensor x_i, x_j;
  std::vector<double> eta_i, eta_j, eta_ij, eta_ji;
  std::vector<std::vector<double>> stale_i, stale_j;
  RandomStream prior_stream;  // cloned per evaluation
  LossWeights weights;
  KernelSpec kernel = KernelSpec::single(1.0);
};

inline CompositeSetup make_composite_setup(std::uint64_t seed, std::size_t h,
                                           std::size_t w, std::size_t L) {
  CompositeSetup s;
  RandomStream rs(derive_seed(seed, 0xC0));
  s.model = init_model(rs, h, w, L);
  s.x_i = random_tensor(rs, {1, h * w * 3}, 0.0, 1.0);
  s.x_j = random_tensor(rs, {1, h * w * 3}, 0.0, 1.0);
  for (auto* eta : {&s.eta_i, &s.eta_j, &s.eta_ij, &s.eta_ji}) {
    eta->resize(L);
    for (double& e : *eta) e = rs.normal();
  }
  for (auto* stale : {&s.stale_i, &s.stale_j}) {
    for (int k = 0; k < 3; ++k) {
      std::vector<double> p(L);
      for (double& x : p) x = rs.normal();
      stale->push_back(std::move(p));
    }
  }
  s.prior_stream = RandomStream(derive_seed(seed, 0xC1));
  s.kernel = KernelSpec::training_default(L);
  return s;
}

/// The six-term objective as one expression over all six subnetworks.
inline Var build_composite(Graph& g, CompositeSetup& s, bool trainable) {
  Model& m = s.model;
  auto bind = [&](NetParams& p) {
    return trainable ? bind_trainable(g, p) : bind_frozen(g, p);
  };
  NetVars eh = bind(m.enc_hazy), ec = bind(m.enc_clear);
  NetVars gh = bind(m.gen_hazy), gc = bind(m.gen_clear);
  NetVars dh = bind(m.disc_hazy), dc = bind(m.disc_clear);
  RandomStream rs = s.prior_stream;  // identical prior draws per evaluation

  const Var xi = g.constant(s.x_i);
  const Var xj = g.constant(s.x_j);
  const Var mu_i = net_forward(g, eh, m.enc_hazy.arch, xi);
  const Var z_i = reparameterize_expr(g, mu_i, s.eta_i);
  const Var x_ii = net_forward(g, gh, m.gen_hazy.arch, z_i);
  const Var x_ij = net_forward(g, gc, m.gen_clear.arch, z_i);
  const Var mu_j = net_forward(g, ec, m.enc_clear.arch, xj);
  const Var z_j = reparameterize_expr(g, mu_j, s.eta_j);
  const Var x_jj = net_forward(g, gc, m.gen_clear.arch, z_j);
  const Var x_ji = net_forward(g, gh, m.gen_hazy.arch, z_j);
  const Var mu_ij = net_forward(g, ec, m.enc_clear.arch, x_ij);
  const Var z_ij = reparameterize_expr(g, mu_ij, s.eta_ij);
  const Var x_iji = net_forward(g, gh, m.gen_hazy.arch, z_ij);
  const Var mu_ji = net_forward(g, eh, m.enc_hazy.arch, x_ji);
  const Var z_ji = reparameterize_expr(g, mu_ji, s.eta_ji);
  const Var x_jij = net_forward(g, gc, m.gen_clear.arch, z_ji);

  const VaeLossExpr vae_i = vae_loss_expr(g, mu_i, s.stale_i, x_ii, xi,
                                          s.weights, s.kernel, rs);
  const VaeLossExpr vae_j = vae_loss_expr(g, mu_j, s.stale_j, x_jj, xj,
                                          s.weights, s.kernel, rs);
  const Var gan_i =
      disc_gan_loss_expr(g, dh, m.disc_hazy.arch, xi, x_ji, s.weights);
  const Var gan_j =
      disc_gan_loss_expr(g, dc, m.disc_clear.arch, xj, x_ij, s.weights);
  const CycleLossExpr cc_i =
      cycle_loss_expr(g, mu_i, s.stale_i, mu_ij, s.stale_j, x_iji, xi,
                      s.weights, s.kernel, rs);
  const CycleLossExpr cc_j =
      cycle_loss_expr(g, mu_j, s.stale_j, mu_ji, s.stale_i, x_jij, xj,
                      s.weights, s.kernel, rs);
  return g.add(
      g.add(g.add(g.add(g.add(vae_i.total, vae_j.total), gan_i), gan_j),
            cc_i.total),
      cc_j.total);
}

}  // namespace selfcheck_detail

/// Finite-difference check of the full six-term objective at toy scale,
/// sampling coordinates across all six subnetworks.
inline CheckSummary grad_check_composite(std::uint64_t seed,
                                         std::size_t coords = 320,
                                         std::size_t image_side = 8,
                                         std::size_t latent_dim = 4,
                                         std::ostream* log = nullptr) {
  using namespace selfcheck_detail;
  CompositeSetup setup =
      make_composite_setup(seed, image_side, image_side, latent_dim);
  RandomStream rs(derive_seed(seed, 0xC2));

  std::vector<Tensor*> params;
  for (NetParams* net :
       {&setup.model.enc_hazy, &setup.model.enc_clear, &setup.model.gen_hazy,
        &setup.model.gen_clear, &setup.model.disc_hazy,
        &setup.model.disc_clear}) {
    for (Tensor* t : net->tensors()) params.push_back(t);
  }
  {
    Graph g;
    Var total = build_composite(g, setup, true);
    g.backward(total);
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor* t : params) analytic.push_back(*t->grad);

  auto value = [&]() {
    Graph g;
    return g.val(build_composite(g, setup, false)).data[0];
  };

  CheckSummary s;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t k = rs.index(params.size());
    const std::size_t i = rs.index(params[k]->size());
    const double saved = params[k]->data[i];
    params[k]->data[i] = saved + kFdStep;
    const double up = value();
    params[k]->data[i] = saved - kFdStep;
    const double dn = value();
    params[k]->data[i] = saved;
    record(s, analytic[k][i], (up - dn) / (2.0 * kFdStep));
  }
  if (log) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "[grad-check] full objective  %zu coords  max rel err "
                  "%.3e  %s\n",
                  s.checked, s.max_err, s.failed == 0 ? "ok" : "FAIL");
    (*log) << line;
  }
  return s;
}

/// Primitive suite plus the composite objective; at least 500 sampled
/// coordinates in total at the defaults.
inline CheckSummary grad_check(std::uint64_t seed = 20240501,
                               std::ostream* log = nullptr) {
  CheckSummary a = grad_check_primitives(seed, 14, log);
  CheckSummary b = grad_check_composite(seed, 320, 8, 4, log);
  CheckSummary total;
  total.checked = a.checked + b.checked;
  total.failed = a.failed + b.failed;
  total.max_err = std::max(a.max_err, b.max_err);
  if (log) {
    char line[160];
    std::snprintf(line, sizeof(line),
                  "[grad-check] %zu coordinates checked, %zu failed, max rel "
                  "err %.3e\n",
                  total.checked, total.failed, total.max_err);
    (*log) << line;
  }
  return total;
}

// ---- independent MMD oracle -------------------------------------------

namespace selfcheck_detail {

inline double kernel_literal(const std::vector<double>& x,
                             const std::vector<double>& y,
                             const KernelSpec& spec) {
  double d2 = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    d2 += (x[l] - y[l]) * (x[l] - y[l]);
  }
  double acc = 0.0;
  for (double sigma : spec.bandwidths) {
    acc += std::exp(-d2 / (2.0 * sigma * sigma));
  }
  return acc / static_cast<double>(spec.bandwidths.size());
}

}  // namespace selfcheck_detail

/// Literal three-term double-loop evaluation, kept deliberately separate
/// from the production estimator.
inline double mmd2_bruteforce(const SampleSet& X, const SampleSet& Y,
                              const KernelSpec& spec) {
  using selfcheck_detail::kernel_literal;
  const std::size_t m = X.size(), n = Y.size();
  double t1 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) t1 += kernel_literal(X.points[i], X.points[j], spec);
    }
  }
  t1 /= static_cast<double>(m) * static_cast<double>(m - 1);
  double t2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) t2 += kernel_literal(Y.points[i], Y.points[j], spec);
    }
  }
  t2 /= static_cast<double>(n) * static_cast<double>(n - 1);
  double t3 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      t3 += kernel_literal(X.points[i], Y.points[j], spec);
    }
  }
  t3 = 2.0 * t3 / (static_cast<double>(m) * static_cast<double>(n));
  return t1 + t2 - t3;
}

/// Estimator-vs-oracle equivalence on randomized small sets plus the two
/// closed-form cases (equal constant sets give exactly zero; {0,1} vs {0,1}
/// at unit doubled variance gives 1/e - 1).
inline CheckSummary mmd_check(std::uint64_t seed = 20240502,
                              std::size_t trials = 200,
                              std::ostream* log = nullptr) {
  CheckSummary s;
  RandomStream rs(derive_seed(seed, 0xA0));
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t m = 2 + rs.index(7);  // up to 8
    const std::size_t n = 2 + rs.index(7);
    const std::size_t dim = 1 + rs.index(4);
    SampleSet X(dim), Y(dim);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> p(dim);
      for (double& x : p) x = 2.0 * rs.normal();
      X.add(std::move(p));
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> p(dim);
      for (double& x : p) x = 2.0 * rs.normal();
      Y.add(std::move(p));
    }
    KernelSpec spec = (t % 3 == 0)
                          ? KernelSpec::single(rs.uniform(0.3, 2.0))
                          : KernelSpec::mixture({rs.uniform(0.3, 1.0),
                                                 rs.uniform(1.0, 2.0),
                                                 rs.uniform(2.0, 4.0)});
    const double impl = mmd2_empirical(X, Y, spec);
    const double oracle = mmd2_bruteforce(X, Y, spec);
    const double diff = std::abs(impl - oracle);
    worst = std::max(worst, diff);
    s.checked += 1;
    if (diff > 1e-12) s.failed += 1;
  }
  s.max_err = worst;

  // Equal two-point constant sets: every kernel value is 1, so the estimator
  // must return exactly zero.
  {
    SampleSet X(3), Y(3);
    const std::vector<double> c{0.4, -1.2, 2.5};
    X.add(c);
    X.add(c);
    Y.add(c);
    Y.add(c);
    const double v = mmd2_empirical(X, Y, KernelSpec::single(1.0));
    s.checked += 1;
    if (v != 0.0) s.failed += 1;
  }
  {
    SampleSet X(1), Y(1);
    X.add({0.0});
    X.add({1.0});
    Y.add({0.0});
    Y.add({1.0});
    const double v =
        mmd2_empirical(X, Y, KernelSpec::single(std::sqrt(0.5)));
    const double expect = std::exp(-1.0) - 1.0;
    s.checked += 1;
    if (std::abs(v - expect) > 1e-12) s.failed += 1;
  }

  if (log) {
    char line[200];
    std::snprintf(line, sizeof(line),
                  "[mmd-check] %zu checks (%zu randomized trials), %zu "
                  "failed, worst |impl-oracle| %.3e\n",
                  s.checked, trials, s.failed, worst);
    (*log) << line;
  }
  return s;
}

}  // namespace hazekit
