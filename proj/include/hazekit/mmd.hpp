#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazekit/rng.hpp"

namespace hazekit {

/// Gaussian kernel bandwidths; a multi-entry list denotes an equally-weighted
/// mixture (the kernel value is the mean over bandwidths).
struct KernelSpec {
  std::vector<double> bandwidths;

  static KernelSpec single(double sigma) { return validated({sigma}); }

  static KernelSpec mixture(std::vector<double> sigmas) {
    return validated(std::move(sigmas));
  }

  /// Fixed training mixture {0.5, 1, 2}*sqrt(L); keeps the loss surface
  /// stationary across iterations.
  static KernelSpec training_default(std::size_t latent_dim) {
    const double s = std::sqrt(static_cast<double>(latent_dim));
    return validated({0.5 * s, 1.0 * s, 2.0 * s});
  }

 private:
  static KernelSpec validated(std::vector<double> sigmas) {
    if (sigmas.empty()) {
      throw std::invalid_argument("KernelSpec: needs at least one bandwidth");
    }
    for (double s : sigmas) {
      if (!(s > 0.0)) {
        throw std::invalid_argument(
            "KernelSpec: bandwidths must be positive, got " +
            std::to_string(s));
      }
    }
    KernelSpec k;
    k.bandwidths = std::move(sigmas);
    return k;
  }
};

/// m points of a fixed dimension.
struct SampleSet {
  std::size_t dim = 0;
  std::vector<std::vector<double>> points;

  SampleSet() = default;
  explicit SampleSet(std::size_t d) : dim(d) {}

  void add(std::vector<double> p) {
    if (p.size() != dim) {
      throw std::invalid_argument("SampleSet: point dimension " +
                                  std::to_string(p.size()) +
                                  " does not match set dimension " +
                                  std::to_string(dim));
    }
    for (double x : p) {
      if (!std::isfinite(x)) {
        throw std::invalid_argument("SampleSet: non-finite entry");
      }
    }
    points.push_back(std::move(p));
  }

  std::size_t size() const { return points.size(); }
};

namespace mmd_detail {

inline double sqdist(const std::vector<double>& x,
                     const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    const double d = x[l] - y[l];
    s += d * d;
  }
  return s;
}

inline double kernel_from_sqdist(double d2, const KernelSpec& spec) {
  double acc = 0.0;
  for (double sigma : spec.bandwidths) {
    acc += std::exp(-(d2 * (1.0 / (2.0 * sigma * sigma))));
  }
  return acc * (1.0 / static_cast<double>(spec.bandwidths.size()));
}

/// Kernel value at zero distance (exactly 1 for one bandwidth; the mixture
/// mean of ones otherwise).
inline double kernel_at_zero(const KernelSpec& spec) {
  return kernel_from_sqdist(0.0, spec);
}

inline double diag_kernel_sum(std::size_t m, const KernelSpec& spec) {
  const double k0 = kernel_at_zero(spec);
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += k0;
  return s;
}

inline double full_kernel_sum(const SampleSet& X, const SampleSet& Y,
                              const KernelSpec& spec) {
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = 0; j < Y.size(); ++j) {
      s += kernel_from_sqdist(sqdist(X.points[i], Y.points[j]), spec);
    }
  }
  return s;
}

}  // namespace mmd_detail

inline double gaussian_kernel(const std::vector<double>& x,
                              const std::vector<double>& y,
                              const KernelSpec& spec) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("gaussian_kernel: dimension " +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  }
  return mmd_detail::kernel_from_sqdist(mmd_detail::sqdist(x, y), spec);
}

/// Squared-MMD estimator with unbiased within-set terms and the
/// diagonal-including cross term. Can be negative.
inline double mmd2_empirical(const SampleSet& X, const SampleSet& Y,
                             const KernelSpec& spec) {
  if (X.size() < 2 || Y.size() < 2) {
    throw std::invalid_argument("mmd2_empirical: needs at least 2 points per "
                                "set, got " +
                                std::to_string(X.size()) + " and " +
                                std::to_string(Y.size()));
  }
  if (X.dim != Y.dim) {
    throw std::invalid_argument("mmd2_empirical: sets have dimensions " +
                                std::to_string(X.dim) + " and " +
                                std::to_string(Y.dim));
  }
  const double m = static_cast<double>(X.size());
  const double n = static_cast<double>(Y.size());
  const double t1 = (mmd_detail::full_kernel_sum(X, X, spec) -
                     mmd_detail::diag_kernel_sum(X.size(), spec)) *
                    (1.0 / (m * (m - 1.0)));
  const double t2 = (mmd_detail::full_kernel_sum(Y, Y, spec) -
                     mmd_detail::diag_kernel_sum(Y.size(), spec)) *
                    (1.0 / (n * (n - 1.0)));
  const double t3 =
      2.0 * (mmd_detail::full_kernel_sum(X, Y, spec) * (1.0 / (m * n)));
  return (t1 + t2) - t3;
}

/// Squared distance between empirical kernel mean embeddings (all pairs,
/// diagonals included). Nonnegative; zero on identical multisets.
inline double mmd2_biased(const SampleSet& X, const SampleSet& Y,
                          const KernelSpec& spec) {
  if (X.size() < 1 || Y.size() < 1) {
    throw std::invalid_argument("mmd2_biased: needs at least 1 point per set");
  }
  if (X.dim != Y.dim) {
    throw std::invalid_argument("mmd2_biased: sets have dimensions " +
                                std::to_string(X.dim) + " and " +
                                std::to_string(Y.dim));
  }
  const double m = static_cast<double>(X.size());
  const double n = static_cast<double>(Y.size());
  const double t1 =
      mmd_detail::full_kernel_sum(X, X, spec) * (1.0 / (m * m));
  const double t2 =
      mmd_detail::full_kernel_sum(Y, Y, spec) * (1.0 / (n * n));
  const double t3 =
      2.0 * (mmd_detail::full_kernel_sum(X, Y, spec) * (1.0 / (m * n)));
  const double v = (t1 + t2) - t3;
  return v > 0.0 ? v : 0.0;
}

/// sigma^2 = median pairwise squared distance / 2; falls back to sigma = 1
/// when every point coincides.
inline KernelSpec median_heuristic(const SampleSet& all) {
  if (all.size() < 2) {
    throw std::invalid_argument("median_heuristic: needs at least 2 points");
  }
  std::vector<double> d2;
  d2.reserve(all.size() * (all.size() - 1) / 2);
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      d2.push_back(mmd_detail::sqdist(all.points[i], all.points[j]));
    }
  }
  std::sort(d2.begin(), d2.end());
  const std::size_t k = d2.size();
  const double med =
      (k % 2 == 1) ? d2[k / 2] : 0.5 * (d2[k / 2 - 1] + d2[k / 2]);
  if (!(med > 0.0)) return KernelSpec::single(1.0);
  return KernelSpec::single(std::sqrt(med / 2.0));
}

/// Draws m points from the L-dimensional standard normal, row by row.
inline SampleSet draw_prior(RandomStream& rs, std::size_t m, std::size_t L) {
  SampleSet s(L);
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> p(L);
    for (std::size_t l = 0; l < L; ++l) p[l] = rs.normal();
    s.add(std::move(p));
  }
  return s;
}

/// Discrepancy between a latent sample set and an equally-sized fresh draw
/// from the unit-variance prior.
inline double mmd_to_prior(const SampleSet& latents, RandomStream& rs,
                           const KernelSpec& spec) {
  if (latents.size() < 2) {
    throw std::invalid_argument("mmd_to_prior: needs at least 2 latents, got " +
                                std::to_string(latents.size()));
  }
  const SampleSet prior = draw_prior(rs, latents.size(), latents.dim);
  return mmd2_empirical(latents, prior, spec);
}

}  // namespace hazekit
