#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazekit/graph.hpp"
#include "hazekit/mmd.hpp"
#include "hazekit/nets.hpp"
#include "hazekit/rng.hpp"

namespace hazekit {

struct LossWeights {
  double lambda_m = 0.01;
  double lambda_adv = 1.0;
  double lambda_recon = 10.0;
};

/// Per-iteration values of the six objective terms; the total is their exact
/// left-to-right sum.
struct LossReport {
  std::uint64_t iter = 0;
  double vae_i = 0.0;
  double vae_j = 0.0;
  double gan_i = 0.0;
  double gan_j = 0.0;
  double cc_i = 0.0;
  double cc_j = 0.0;
  double total = 0.0;
};

inline LossReport make_loss_report(std::uint64_t iter, double vae_i,
                                   double vae_j, double gan_i, double gan_j,
                                   double cc_i, double cc_j) {
  const struct {
    const char* name;
    double v;
  } terms[] = {{"vae_i", vae_i}, {"vae_j", vae_j}, {"gan_i", gan_i},
               {"gan_j", gan_j}, {"cc_i", cc_i},   {"cc_j", cc_j}};
  for (const auto& t : terms) {
    if (!std::isfinite(t.v)) {
      throw std::runtime_error(std::string("total_loss: non-finite term ") +
                               t.name);
    }
  }
  LossReport r;
  r.iter = iter;
  r.vae_i = vae_i;
  r.vae_j = vae_j;
  r.gan_i = gan_i;
  r.gan_j = gan_j;
  r.cc_i = cc_i;
  r.cc_j = cc_j;
  r.total = ((((vae_i + vae_j) + gan_i) + gan_j) + cc_i) + cc_j;
  return r;
}

inline Var mse_expr(Graph& g, Var a, Var b) {
  return g.mean(g.square(g.sub(a, b)));
}

namespace loss_detail {

/// Kernel matrix between two point-set vars, mirroring the plain estimator's
/// arithmetic (same accumulation order, same mixture handling) so the graph
/// value and mmd_to_prior agree on identical inputs.
inline Var kernel_matrix_expr(Graph& g, Var a, Var b, const KernelSpec& spec) {
  const Var d2 = g.pairwise_sqdist(a, b);
  Var acc{};
  for (std::size_t bi = 0; bi < spec.bandwidths.size(); ++bi) {
    const double sigma = spec.bandwidths[bi];
    const Var k = g.exp(g.neg(g.scale(d2, 1.0 / (2.0 * sigma * sigma))));
    acc = (bi == 0) ? k : g.add(acc, k);
  }
  return g.scale(acc, 1.0 / static_cast<double>(spec.bandwidths.size()));
}

inline Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  const std::size_t m = rows.size();
  const std::size_t L = rows.front().size();
  Tensor t(Shape{m, L});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < L; ++l) t.data[i * L + l] = rows[i][l];
  }
  return t;
}

}  // namespace loss_detail

/// Differentiable latent-vs-prior discrepancy. The sample set is the live
/// mean row stacked on the stale buffer entries; the prior sample is drawn
/// fresh from the stream, one draw sequence per call.
inline Var mmd_to_prior_expr(Graph& g, Var live_mean,
                             const std::vector<std::vector<double>>& stale,
                             RandomStream& rs, const KernelSpec& spec) {
  const Tensor& mv = g.val(live_mean);
  if (mv.shape.size() != 2 || mv.shape[0] != 1) {
    throw std::invalid_argument("mmd_to_prior_expr: live mean must be one "
                                "row, got " +
                                shape_str(mv.shape));
  }
  if (stale.empty()) {
    throw std::invalid_argument(
        "mmd_to_prior_expr: latent buffer needs at least 2 entries");
  }
  const std::size_t L = mv.shape[1];
  for (const auto& s : stale) {
    if (s.size() != L) {
      throw std::invalid_argument("mmd_to_prior_expr: buffer entry dimension " +
                                  std::to_string(s.size()) +
                                  " does not match latent dimension " +
                                  std::to_string(L));
    }
  }
  const std::size_t m = 1 + stale.size();
  const Var z =
      g.concat_rows(live_mean, g.constant(loss_detail::rows_tensor(stale)));
  const SampleSet prior = draw_prior(rs, m, L);
  Tensor pt(Shape{m, L});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < L; ++l) pt.data[i * L + l] = prior.points[i][l];
  }
  const Var p = g.constant(std::move(pt));

  const double md = static_cast<double>(m);
  const Var kzz = loss_detail::kernel_matrix_expr(g, z, z, spec);
  const Var kpp = loss_detail::kernel_matrix_expr(g, p, p, spec);
  const Var kzp = loss_detail::kernel_matrix_expr(g, z, p, spec);
  const double diag = mmd_detail::diag_kernel_sum(m, spec);
  const Var t1 = g.scale(g.sub(g.sum(kzz), g.constant(Tensor::scalar(diag))),
                         1.0 / (md * (md - 1.0)));
  const Var t2 = g.scale(g.sub(g.sum(kpp), g.constant(Tensor::scalar(diag))),
                         1.0 / (md * (md - 1.0)));
  const Var t3 = g.scale(g.scale(g.sum(kzp), 1.0 / (md * md)), 2.0);
  return g.sub(g.add(t1, t2), t3);
}

struct VaeLossExpr {
  Var total;
  Var mmd_term;
  Var recon_term;
};

/// lambda_m * MMD(latents || prior) + lambda_recon * MSE(recon, original).
/// The squared-error term is the Gaussian-decoder negative log-likelihood
/// with its additive constant dropped.
inline VaeLossExpr vae_loss_expr(Graph& g, Var live_mean,
                                 const std::vector<std::vector<double>>& stale,
                                 Var reconstruction, Var original,
                                 const LossWeights& w, const KernelSpec& spec,
                                 RandomStream& rs) {
  VaeLossExpr e;
  e.mmd_term =
      g.scale(mmd_to_prior_expr(g, live_mean, stale, rs, spec), w.lambda_m);
  e.recon_term = g.scale(mse_expr(g, reconstruction, original), w.lambda_recon);
  e.total = g.add(e.mmd_term, e.recon_term);
  return e;
}

/// lambda_adv * (log D(real) + log(1 - D(fake))): the value the discriminator
/// ascends. Callers descend its negation; `fake` should be a constant here.
inline Var disc_gan_loss_expr(Graph& g, const NetVars& d,
                              const Architecture& d_arch, Var real, Var fake,
                              const LossWeights& w) {
  const Var d_real = net_forward(g, d, d_arch, real);
  const Var d_fake = net_forward(g, d, d_arch, fake);
  const Tensor& fv = g.val(d_fake);
  const Var one = g.constant(Tensor(fv.shape, 1.0));
  // sum() collapses the 1x1 discriminator output to scalar shape
  return g.sum(g.scale(g.add(g.log(d_real), g.log(g.sub(one, d_fake))),
                       w.lambda_adv));
}

/// Non-saturating generator objective: -lambda_adv * log D(fake), descended
/// by the encoder/generator pair with the discriminator frozen.
inline Var gen_gan_loss_expr(Graph& g, const NetVars& d_frozen,
                             const Architecture& d_arch, Var fake,
                             const LossWeights& w) {
  const Var d_fake = net_forward(g, d_frozen, d_arch, fake);
  return g.sum(g.scale(g.neg(g.log(d_fake)), w.lambda_adv));
}

struct CycleLossExpr {
  Var total;
  Var mmd_first;
  Var mmd_second;
  Var recon_term;
};

/// Two latent-prior discrepancies (first hop and second hop) plus the
/// twice-translated reconstruction error against the source.
inline CycleLossExpr cycle_loss_expr(
    Graph& g, Var first_mean, const std::vector<std::vector<double>>& stale1,
    Var second_mean, const std::vector<std::vector<double>>& stale2,
    Var twice_translated, Var source, const LossWeights& w,
    const KernelSpec& spec, RandomStream& rs) {
  CycleLossExpr e;
  e.mmd_first =
      g.scale(mmd_to_prior_expr(g, first_mean, stale1, rs, spec), w.lambda_m);
  e.mmd_second =
      g.scale(mmd_to_prior_expr(g, second_mean, stale2, rs, spec), w.lambda_m);
  e.recon_term =
      g.scale(mse_expr(g, twice_translated, source), w.lambda_recon);
  e.total = g.add(g.add(e.mmd_first, e.mmd_second), e.recon_term);
  return e;
}

}  // namespace hazekit
