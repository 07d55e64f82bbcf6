#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazekit/graph.hpp"
#include "hazekit/image.hpp"
#include "hazekit/rng.hpp"
#include "hazekit/tensor.hpp"

namespace hazekit {

enum class FinalLayer {
  Linear,        // encoder mean head
  UnitInterval,  // (tanh + 1) / 2, keeps generator output in [0, 1]
  Probability,   // sigmoid clamped away from {0, 1} so logs stay finite
};

inline constexpr double kProbClamp = 1e-7;

struct Architecture {
  std::vector<std::size_t> widths;  // input .. output
  FinalLayer final = FinalLayer::Linear;
  double leak = 0.2;

  bool consistent() const {
    if (widths.size() < 2) return false;
    for (std::size_t wdt : widths) {
      if (wdt == 0) return false;
    }
    return true;
  }
};

// Hidden widths scale with the flattened input so the 32x32x3 default comes
// out as 3072-512-128 (encoder) and 3072-256-64 (discriminator).
inline Architecture encoder_arch(std::size_t input, std::size_t latent) {
  const std::size_t h1 = std::max<std::size_t>(16, input / 6);
  const std::size_t h2 = std::max<std::size_t>(8, h1 / 4);
  return Architecture{{input, h1, h2, latent}, FinalLayer::Linear, 0.2};
}

inline Architecture generator_arch(std::size_t latent, std::size_t output) {
  const std::size_t h1 = std::max<std::size_t>(16, output / 6);
  const std::size_t h2 = std::max<std::size_t>(8, h1 / 4);
  return Architecture{{latent, h2, h1, output}, FinalLayer::UnitInterval, 0.2};
}

inline Architecture discriminator_arch(std::size_t input) {
  const std::size_t h1 = std::max<std::size_t>(8, input / 12);
  const std::size_t h2 = std::max<std::size_t>(4, h1 / 4);
  return Architecture{{input, h1, h2, 1}, FinalLayer::Probability, 0.2};
}

struct NetParams {
  Architecture arch;
  std::vector<Tensor> weights;  // per layer, {in, out}
  std::vector<Tensor> biases;   // per layer, {out}

  bool initialized() const { return !weights.empty(); }
  std::size_t input_width() const { return arch.widths.front(); }
  std::size_t output_width() const { return arch.widths.back(); }

  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
  std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
inline NetParams init_params(RandomStream& rs, const Architecture& arch) {
  if (!arch.consistent()) {
    throw std::invalid_argument("init_params: inconsistent architecture");
  }
  NetParams p;
  p.arch = arch;
  for (std::size_t l = 0; l + 1 < arch.widths.size(); ++l) {
    const std::size_t in = arch.widths[l];
    const std::size_t out = arch.widths[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w(Shape{in, out});
    for (double& x : w.data) x = rs.uniform(-s, s);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(Shape{out});
  }
  return p;
}

/// Per-graph handles for one subnetwork's parameters.
struct NetVars {
  std::vector<Var> w;
  std::vector<Var> b;
};

inline NetVars bind_trainable(Graph& g, NetParams& p) {
  NetVars nv;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    nv.w.push_back(g.leaf(p.weights[l]));
    nv.b.push_back(g.leaf(p.biases[l]));
  }
  return nv;
}

inline NetVars bind_frozen(Graph& g, const NetParams& p) {
  NetVars nv;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    nv.w.push_back(g.constant(p.weights[l]));
    nv.b.push_back(g.constant(p.biases[l]));
  }
  return nv;
}

inline Var net_forward(Graph& g, const NetVars& nv, const Architecture& arch,
                       Var x) {
  if (nv.w.empty()) {
    throw std::invalid_argument("net_forward: network not initialized");
  }
  Var h = x;
  for (std::size_t l = 0; l < nv.w.size(); ++l) {
    h = g.broadcast_add(g.matmul(h, nv.w[l]), nv.b[l]);
    const bool last = (l + 1 == nv.w.size());
    if (!last) {
      h = g.leaky_relu(h, arch.leak);
      continue;
    }
    switch (arch.final) {
      case FinalLayer::Linear:
        break;
      case FinalLayer::UnitInterval: {
        const Tensor& hv = g.val(h);
        h = g.scale(g.add(g.tanh(h), g.constant(Tensor(hv.shape, 1.0))), 0.5);
        break;
      }
      case FinalLayer::Probability:
        h = g.clamp(g.sigmoid(h), kProbClamp, 1.0 - kProbClamp);
        break;
    }
  }
  return h;
}

/// Forward pass outside any training graph; runs a throwaway tape so the
/// arithmetic path is identical to the in-graph one.
inline Tensor net_eval(const NetParams& p, const Tensor& x) {
  Graph g;
  NetVars nv = bind_frozen(g, p);
  return g.val(net_forward(g, nv, p.arch, g.constant(x)));
}

/// Mean vector, fixed unit-variance perturbation, and their sum.
struct LatentCode {
  std::vector<double> mean;
  std::vector<double> eta;
  std::vector<double> z;
};

inline std::vector<double> draw_eta(RandomStream* rs, std::size_t L) {
  std::vector<double> eta(L, 0.0);
  if (rs) {
    for (double& e : eta) e = rs->normal();
  }
  return eta;
}

/// z = mean + eta with eta drawn from the unit normal (or zero when rs is
/// null, the deterministic mode).
inline LatentCode reparameterize(const Tensor& mean, RandomStream* rs) {
  if (mean.shape.size() != 2 || mean.shape[0] != 1) {
    throw std::invalid_argument("reparameterize: mean must be a single row, "
                                "got " +
                                shape_str(mean.shape));
  }
  LatentCode lc;
  lc.mean = mean.data;
  lc.eta = draw_eta(rs, mean.size());
  lc.z.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    lc.z[i] = lc.mean[i] + lc.eta[i];
  }
  return lc;
}

/// In-graph reparameterization: the perturbation enters as a constant, so
/// gradients flow through the mean only.
inline Var reparameterize_expr(Graph& g, Var mean,
                               const std::vector<double>& eta) {
  return g.add(mean, g.constant(Tensor::row(eta)));
}

enum class Direction { HazyToClear, ClearToHazy };

inline Direction parse_direction(const std::string& s) {
  if (s == "dehazing") return Direction::HazyToClear;
  if (s == "synthesis") return Direction::ClearToHazy;
  throw std::invalid_argument("unknown direction '" + s +
                              "' (expected 'dehazing' or 'synthesis')");
}

/// The six subnetworks plus the geometry they were built for.
struct Model {
  std::size_t image_h = 0;
  std::size_t image_w = 0;
  std::size_t latent_dim = 0;
  NetParams enc_hazy, enc_clear;
  NetParams gen_hazy, gen_clear;
  NetParams disc_hazy, disc_clear;

  bool initialized() const {
    return enc_hazy.initialized() && enc_clear.initialized() &&
           gen_hazy.initialized() && gen_clear.initialized() &&
           disc_hazy.initialized() && disc_clear.initialized();
  }
};

inline Model init_model(RandomStream& rs, std::size_t h, std::size_t w,
                        std::size_t latent_dim) {
  const std::size_t n = h * w * 3;
  Model m;
  m.image_h = h;
  m.image_w = w;
  m.latent_dim = latent_dim;
  m.enc_hazy = init_params(rs, encoder_arch(n, latent_dim));
  m.enc_clear = init_params(rs, encoder_arch(n, latent_dim));
  m.gen_hazy = init_params(rs, generator_arch(latent_dim, n));
  m.gen_clear = init_params(rs, generator_arch(latent_dim, n));
  m.disc_hazy = init_params(rs, discriminator_arch(n));
  m.disc_clear = init_params(rs, discriminator_arch(n));
  return m;
}

inline Tensor flatten(const Image& img) {
  return Tensor(Shape{1, img.size()}, img.px);
}

inline Image unflatten(const Tensor& t, std::size_t h, std::size_t w) {
  if (t.size() != h * w * 3) {
    throw std::invalid_argument("unflatten: tensor of " +
                                std::to_string(t.size()) +
                                " values does not fill " + std::to_string(h) +
                                "x" + std::to_string(w) + "x3");
  }
  Image img(h, w, 3);
  img.px = t.data;
  return img;
}

/// Source-domain encoder into target-domain generator. A null stream runs
/// the deterministic mode (eta = 0).
inline Image translate(const Model& m, const Image& src, Direction dir,
                       RandomStream* eta_stream = nullptr) {
  if (!m.initialized()) {
    throw std::runtime_error("translate: model not initialized");
  }
  if (src.h != m.image_h || src.w != m.image_w || src.c != 3) {
    throw std::invalid_argument(
        "translate: image " + std::to_string(src.h) + "x" +
        std::to_string(src.w) + " does not match model " +
        std::to_string(m.image_h) + "x" + std::to_string(m.image_w));
  }
  const NetParams& enc =
      dir == Direction::HazyToClear ? m.enc_hazy : m.enc_clear;
  const NetParams& gen =
      dir == Direction::HazyToClear ? m.gen_clear : m.gen_hazy;
  const Tensor mean = net_eval(enc, flatten(src));
  const LatentCode lc = reparameterize(mean, eta_stream);
  const Tensor out = net_eval(gen, Tensor::row(lc.z));
  return unflatten(out, m.image_h, m.image_w);
}

}  // namespace hazekit
