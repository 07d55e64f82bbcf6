#pragma once

#include <array>
#include <bit>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hazekit/adam.hpp"
#include "hazekit/dataset.hpp"
#include "hazekit/losses.hpp"
#include "hazekit/nets.hpp"

namespace hazekit {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'H', 'Z', 'C', 'K'};
inline constexpr std::uint64_t kProgressEvery = 50;

struct TrainConfig {
  std::string data_manifest;
  std::uint64_t iterations = 2000;
  std::uint64_t ckpt_every = 500;
  AdamConfig adam;                        // lr 1e-4, betas 0.5 / 0.999
  LossWeights weights;                    // lambda_m 0.01, adv 1, recon 10
  std::size_t buffer_capacity = 64;
  std::vector<double> kernel_bandwidths;  // empty: mixture {0.5,1,2}*sqrt(L)
  std::uint64_t master_seed = 7;
  std::size_t latent_dim = 8;
  bool deterministic_eta = false;
};

inline KernelSpec kernel_of(const TrainConfig& c) {
  return c.kernel_bandwidths.empty()
             ? KernelSpec::training_default(c.latent_dim)
             : KernelSpec::mixture(c.kernel_bandwidths);
}

inline void validate_config(const TrainConfig& c) {
  if (c.iterations == 0) {
    throw std::invalid_argument("TrainConfig: iterations must be positive");
  }
  if (c.buffer_capacity < 2) {
    throw std::invalid_argument("TrainConfig: buffer capacity must be >= 2");
  }
  if (c.ckpt_every == 0 || c.ckpt_every % kProgressEvery != 0) {
    throw std::invalid_argument(
        "TrainConfig: checkpoint interval must be a positive multiple of " +
        std::to_string(kProgressEvery));
  }
  if (c.latent_dim == 0) {
    throw std::invalid_argument("TrainConfig: latent dimension must be >= 1");
  }
  if (c.weights.lambda_m < 0.0 || c.weights.lambda_adv < 0.0 ||
      c.weights.lambda_recon < 0.0) {
    throw std::invalid_argument("TrainConfig: loss weights must be "
                                "nonnegative");
  }
  if (!(c.adam.lr >= 0.0) || !(c.adam.eps > 0.0)) {
    throw std::invalid_argument("TrainConfig: bad optimizer settings");
  }
  kernel_of(c);  // validates bandwidths
}

/// Adam slots for one subnetwork, ordered [w0, b0, w1, b1, ...] to match
/// NetParams::tensors().
struct OptBank {
  std::vector<AdamState> slots;
};

inline OptBank make_opt_bank(const NetParams& p, const AdamConfig& cfg) {
  OptBank b;
  for (const Tensor* t : p.tensors()) {
    b.slots.push_back(AdamState::for_param(*t, cfg));
  }
  return b;
}

struct TrainState {
  Model model;
  std::vector<OptBank> opt;  // six banks in the declared network order
  std::deque<std::vector<double>> buffer_hazy;
  std::deque<std::vector<double>> buffer_clear;
  std::uint64_t iteration = 0;
  RandomStream stream;
  std::vector<LossReport> history;
};

inline std::array<NetParams*, 6> nets_of(Model& m) {
  return {&m.enc_hazy, &m.enc_clear, &m.gen_hazy,
          &m.gen_clear, &m.disc_hazy, &m.disc_clear};
}

inline std::array<const NetParams*, 6> nets_of(const Model& m) {
  return {&m.enc_hazy, &m.enc_clear, &m.gen_hazy,
          &m.gen_clear, &m.disc_hazy, &m.disc_clear};
}

namespace trainer_detail {

inline constexpr std::uint64_t kTagEpochHazy = 3;
inline constexpr std::uint64_t kTagEpochClear = 4;
inline constexpr std::uint64_t kTagStream = 5;
inline constexpr std::uint64_t kTagInit = 6;

inline std::uint64_t params_hash(
    std::initializer_list<const NetParams*> nets) {
  std::uint64_t lane[4] = {0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL,
                           0xa4093822299f31d0ULL, 0x082efa98ec4e6c89ULL};
  std::size_t i = 0;
  for (const NetParams* p : nets) {
    for (const Tensor* t : p->tensors()) {
      for (double d : t->data) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
        lane[i & 3] = std::rotl(lane[i & 3], 7) + bits;
        ++i;
      }
    }
  }
  return mix64(lane[0]) ^ mix64(lane[1] + 1) ^ mix64(lane[2] + 2) ^
         mix64(lane[3] + 3);
}

inline std::vector<std::vector<double>> stale_of(
    const std::deque<std::vector<double>>& buf) {
  return {buf.begin() + (buf.empty() ? 0 : 1), buf.end()};
}

inline void push_latent(std::deque<std::vector<double>>& buf,
                        std::vector<double> mean, std::size_t capacity) {
  buf.push_front(std::move(mean));
  while (buf.size() > capacity) buf.pop_back();
}

inline void check_finite(const char* name, double v) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("train_step: non-finite loss term ") +
                             name + "; step aborted");
  }
}

inline void check_grads(const char* phase, NetParams& p) {
  for (Tensor* t : p.tensors()) {
    if (!t->grad) {
      throw std::logic_error(std::string("train_step: ") + phase +
                             ": missing gradient");
    }
    for (double g : *t->grad) {
      if (!std::isfinite(g)) {
        throw std::runtime_error(std::string("train_step: ") + phase +
                                 ": non-finite gradient; step aborted");
      }
    }
  }
}

inline void apply_adam(NetParams& p, OptBank& bank) {
  auto ts = p.tensors();
  for (std::size_t k = 0; k < ts.size(); ++k) {
    adam_step(*ts[k], *ts[k]->grad, bank.slots[k]);
  }
}

}  // namespace trainer_detail

inline TrainState init_train_state(const TrainConfig& cfg, std::size_t image_h,
                                   std::size_t image_w) {
  validate_config(cfg);
  TrainState st;
  RandomStream init_rs(derive_seed(cfg.master_seed, trainer_detail::kTagInit));
  st.model = init_model(init_rs, image_h, image_w, cfg.latent_dim);
  for (NetParams* p : nets_of(st.model)) {
    st.opt.push_back(make_opt_bank(*p, cfg.adam));
  }
  st.stream =
      RandomStream(derive_seed(cfg.master_seed, trainer_detail::kTagStream));
  return st;
}

/// One alternating optimization step on a (hazy, clear) pair:
///  (a) forward every stream and draw the step's latent perturbations,
///  (b) push the fresh encoder means into the per-domain buffers,
///  (c) one Adam ascent step for both discriminators (generators frozen),
///  (d) one Adam descent step for encoders+generators (discriminators
///      frozen), and (e) advance the iteration counter.
/// Any non-finite loss or gradient aborts the step and rolls the state back.
inline LossReport train_step(TrainState& st, const Image& hazy,
                             const Image& clear, const TrainConfig& cfg) {
  using namespace trainer_detail;
  Model& m = st.model;
  if (!m.initialized()) {
    throw std::runtime_error("train_step: model not initialized");
  }
  if (hazy.h != m.image_h || hazy.w != m.image_w || clear.h != m.image_h ||
      clear.w != m.image_w) {
    throw std::invalid_argument("train_step: image size does not match model");
  }
  const KernelSpec ks = kernel_of(cfg);
  const LossWeights& w = cfg.weights;
  const std::size_t L = m.latent_dim;

  // Rollback snapshot: only the discriminators mutate before the generator
  // phase has validated its losses, so they are all that needs copying.
  const RandomStream stream_snap = st.stream;
  const auto buf_i_snap = st.buffer_hazy;
  const auto buf_j_snap = st.buffer_clear;
  const NetParams disc_h_snap = m.disc_hazy;
  const NetParams disc_c_snap = m.disc_clear;
  const OptBank opt_dh_snap = st.opt[4];
  const OptBank opt_dc_snap = st.opt[5];

  try {
    RandomStream* eta_rs = cfg.deterministic_eta ? nullptr : &st.stream;
    const std::vector<double> eta_i = draw_eta(eta_rs, L);
    const std::vector<double> eta_j = draw_eta(eta_rs, L);
    const std::vector<double> eta_ij = draw_eta(eta_rs, L);
    const std::vector<double> eta_ji = draw_eta(eta_rs, L);

    const Tensor x_i = flatten(hazy);
    const Tensor x_j = flatten(clear);

    // (a) values needed before the discriminator phase
    const Tensor mu_i_val = net_eval(m.enc_hazy, x_i);
    const Tensor mu_j_val = net_eval(m.enc_clear, x_j);
    std::vector<double> z_i_val(L), z_j_val(L);
    for (std::size_t l = 0; l < L; ++l) {
      z_i_val[l] = mu_i_val.data[l] + eta_i[l];
      z_j_val[l] = mu_j_val.data[l] + eta_j[l];
    }
    const Tensor x_ij_val = net_eval(m.gen_clear, Tensor::row(z_i_val));
    const Tensor x_ji_val = net_eval(m.gen_hazy, Tensor::row(z_j_val));

    // (b) fresh means enter the buffers; this step's terms treat them as the
    // live graph nodes and use only the older entries as constants
    push_latent(st.buffer_hazy, mu_i_val.data, cfg.buffer_capacity);
    push_latent(st.buffer_clear, mu_j_val.data, cfg.buffer_capacity);
    const auto stale_i = stale_of(st.buffer_hazy);
    const auto stale_j = stale_of(st.buffer_clear);

    const std::uint64_t h_eg_before =
        params_hash({&m.enc_hazy, &m.enc_clear, &m.gen_hazy, &m.gen_clear});

    // (c) discriminator ascent, translated fakes held constant
    double gan_i_val = 0.0, gan_j_val = 0.0;
    {
      Graph gd;
      NetVars dh = bind_trainable(gd, m.disc_hazy);
      NetVars dc = bind_trainable(gd, m.disc_clear);
      const Var real_i = gd.constant(x_i);
      const Var real_j = gd.constant(x_j);
      const Var fake_i = gd.constant(x_ji_val);
      const Var fake_j = gd.constant(x_ij_val);
      const Var gan_i =
          disc_gan_loss_expr(gd, dh, m.disc_hazy.arch, real_i, fake_i, w);
      const Var gan_j =
          disc_gan_loss_expr(gd, dc, m.disc_clear.arch, real_j, fake_j, w);
      gan_i_val = gd.val(gan_i).data[0];
      gan_j_val = gd.val(gan_j).data[0];
      check_finite("gan_i", gan_i_val);
      check_finite("gan_j", gan_j_val);
      gd.backward(gd.neg(gd.add(gan_i, gan_j)));
      check_grads("discriminator phase", m.disc_hazy);
      check_grads("discriminator phase", m.disc_clear);
      apply_adam(m.disc_hazy, st.opt[4]);
      apply_adam(m.disc_clear, st.opt[5]);
    }

    if (params_hash({&m.enc_hazy, &m.enc_clear, &m.gen_hazy, &m.gen_clear}) !=
        h_eg_before) {
      throw std::logic_error(
          "train_step: discriminator phase mutated encoder/generator "
          "parameters");
    }
    const std::uint64_t h_d_before =
        params_hash({&m.disc_hazy, &m.disc_clear});

    // (d) encoder/generator descent against the updated discriminators
    double vae_i_val = 0.0, vae_j_val = 0.0, cc_i_val = 0.0, cc_j_val = 0.0;
    {
      Graph gg;
      NetVars eh = bind_trainable(gg, m.enc_hazy);
      NetVars ec = bind_trainable(gg, m.enc_clear);
      NetVars gh = bind_trainable(gg, m.gen_hazy);
      NetVars gc = bind_trainable(gg, m.gen_clear);
      NetVars dh = bind_frozen(gg, m.disc_hazy);
      NetVars dc = bind_frozen(gg, m.disc_clear);

      const Var xi = gg.constant(x_i);
      const Var xj = gg.constant(x_j);
      const Var mu_i = net_forward(gg, eh, m.enc_hazy.arch, xi);
      const Var z_i = reparameterize_expr(gg, mu_i, eta_i);
      const Var x_ii = net_forward(gg, gh, m.gen_hazy.arch, z_i);
      const Var x_ij = net_forward(gg, gc, m.gen_clear.arch, z_i);
      const Var mu_j = net_forward(gg, ec, m.enc_clear.arch, xj);
      const Var z_j = reparameterize_expr(gg, mu_j, eta_j);
      const Var x_jj = net_forward(gg, gc, m.gen_clear.arch, z_j);
      const Var x_ji = net_forward(gg, gh, m.gen_hazy.arch, z_j);
      const Var mu_ij = net_forward(gg, ec, m.enc_clear.arch, x_ij);
      const Var z_ij = reparameterize_expr(gg, mu_ij, eta_ij);
      const Var x_iji = net_forward(gg, gh, m.gen_hazy.arch, z_ij);
      const Var mu_ji = net_forward(gg, eh, m.enc_hazy.arch, x_ji);
      const Var z_ji = reparameterize_expr(gg, mu_ji, eta_ji);
      const Var x_jij = net_forward(gg, gc, m.gen_clear.arch, z_ji);

      const bool warm_i = !stale_i.empty();
      const bool warm_j = !stale_j.empty();

      auto mmd_term = [&](Var live, const auto& stale) {
        return gg.scale(mmd_to_prior_expr(gg, live, stale, st.stream, ks),
                        w.lambda_m);
      };

      Var vae_i = gg.scale(mse_expr(gg, x_ii, xi), w.lambda_recon);
      if (warm_i) vae_i = gg.add(mmd_term(mu_i, stale_i), vae_i);
      Var vae_j = gg.scale(mse_expr(gg, x_jj, xj), w.lambda_recon);
      if (warm_j) vae_j = gg.add(mmd_term(mu_j, stale_j), vae_j);

      const Var gg_i = gen_gan_loss_expr(gg, dh, m.disc_hazy.arch, x_ji, w);
      const Var gg_j = gen_gan_loss_expr(gg, dc, m.disc_clear.arch, x_ij, w);

      // Cycle terms accumulate in the declared order: source-domain latent
      // discrepancy, translated-latent discrepancy, then reconstruction.
      Var cc_i{};
      bool cc_i_any = false;
      auto accumulate = [&gg](Var& acc, bool& any, Var v) {
        acc = any ? gg.add(acc, v) : v;
        any = true;
      };
      if (warm_i) accumulate(cc_i, cc_i_any, mmd_term(mu_i, stale_i));
      if (warm_j) accumulate(cc_i, cc_i_any, mmd_term(mu_ij, stale_j));
      accumulate(cc_i, cc_i_any,
                 gg.scale(mse_expr(gg, x_iji, xi), w.lambda_recon));
      Var cc_j{};
      bool cc_j_any = false;
      if (warm_j) accumulate(cc_j, cc_j_any, mmd_term(mu_j, stale_j));
      if (warm_i) accumulate(cc_j, cc_j_any, mmd_term(mu_ji, stale_i));
      accumulate(cc_j, cc_j_any,
                 gg.scale(mse_expr(gg, x_jij, xj), w.lambda_recon));

      vae_i_val = gg.val(vae_i).data[0];
      vae_j_val = gg.val(vae_j).data[0];
      cc_i_val = gg.val(cc_i).data[0];
      cc_j_val = gg.val(cc_j).data[0];
      check_finite("vae_i", vae_i_val);
      check_finite("vae_j", vae_j_val);
      check_finite("gen_gan_i", gg.val(gg_i).data[0]);
      check_finite("gen_gan_j", gg.val(gg_j).data[0]);
      check_finite("cc_i", cc_i_val);
      check_finite("cc_j", cc_j_val);

      const Var g_obj = gg.add(
          gg.add(gg.add(gg.add(gg.add(vae_i, vae_j), gg_i), gg_j), cc_i),
          cc_j);
      gg.backward(g_obj);
      check_grads("generator phase", m.enc_hazy);
      check_grads("generator phase", m.enc_clear);
      check_grads("generator phase", m.gen_hazy);
      check_grads("generator phase", m.gen_clear);
      apply_adam(m.enc_hazy, st.opt[0]);
      apply_adam(m.enc_clear, st.opt[1]);
      apply_adam(m.gen_hazy, st.opt[2]);
      apply_adam(m.gen_clear, st.opt[3]);
    }

    if (params_hash({&m.disc_hazy, &m.disc_clear}) != h_d_before) {
      throw std::logic_error(
          "train_step: generator phase mutated discriminator parameters");
    }

    // (e)
    st.iteration += 1;
    const LossReport report =
        make_loss_report(st.iteration, vae_i_val, vae_j_val, gan_i_val,
                         gan_j_val, cc_i_val, cc_j_val);
    st.history.push_back(report);
    return report;
  } catch (...) {
    st.stream = stream_snap;
    st.buffer_hazy = buf_i_snap;
    st.buffer_clear = buf_j_snap;
    m.disc_hazy = disc_h_snap;
    m.disc_clear = disc_c_snap;
    st.opt[4] = opt_dh_snap;
    st.opt[5] = opt_dc_snap;
    throw;
  }
}

// ---- checkpoint format ------------------------------------------------
//
// "HZCK" | u32 version | config JSON | iteration | random-stream state |
// six networks (architecture + parameter blocks, declared order) | six
// optimizer banks | both latent buffers | loss history | crc32 of all
// preceding bytes. Everything little-endian, parameters as raw 64-bit
// floats, so save -> load -> save is byte-identical.

namespace trainer_detail {

struct ByteWriter {
  std::string buf;

  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str(const std::string& s) {
    u64(s.size());
    buf.append(s);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
};

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= std::uint64_t(static_cast<unsigned char>(buf[pos++])) << (8 * i);
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
};

inline void write_net(ByteWriter& wr, const NetParams& p) {
  wr.u64(p.arch.widths.size());
  for (std::size_t x : p.arch.widths) wr.u64(x);
  wr.u8(static_cast<std::uint8_t>(p.arch.final));
  wr.f64(p.arch.leak);
  for (const Tensor* t : p.tensors()) wr.doubles(t->data);
}

inline NetParams read_net(ByteReader& rd) {
  NetParams p;
  const std::uint64_t nw = rd.u64();
  for (std::uint64_t i = 0; i < nw; ++i) {
    p.arch.widths.push_back(rd.u64());
  }
  p.arch.final = static_cast<FinalLayer>(rd.u8());
  p.arch.leak = rd.f64();
  if (!p.arch.consistent()) {
    throw std::runtime_error("checkpoint: inconsistent network architecture");
  }
  for (std::size_t l = 0; l + 1 < p.arch.widths.size(); ++l) {
    Tensor w(Shape{p.arch.widths[l], p.arch.widths[l + 1]});
    w.data = rd.doubles();
    if (w.data.size() != shape_numel(w.shape)) {
      throw std::runtime_error("checkpoint: parameter block size mismatch");
    }
    p.weights.push_back(std::move(w));
    Tensor b(Shape{p.arch.widths[l + 1]});
    b.data = rd.doubles();
    if (b.data.size() != shape_numel(b.shape)) {
      throw std::runtime_error("checkpoint: parameter block size mismatch");
    }
    p.biases.push_back(std::move(b));
  }
  return p;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["data_manifest"] = c.data_manifest;
  j["iterations"] = c.iterations;
  j["ckpt_every"] = c.ckpt_every;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["lambda_m"] = c.weights.lambda_m;
  j["lambda_adv"] = c.weights.lambda_adv;
  j["lambda_recon"] = c.weights.lambda_recon;
  j["buffer_capacity"] = c.buffer_capacity;
  j["kernel_bandwidths"] = c.kernel_bandwidths;
  j["master_seed"] = c.master_seed;
  j["latent_dim"] = c.latent_dim;
  j["deterministic_eta"] = c.deterministic_eta;
  return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.data_manifest = j.at("data_manifest").get<std::string>();
  c.iterations = j.at("iterations").get<std::uint64_t>();
  c.ckpt_every = j.at("ckpt_every").get<std::uint64_t>();
  c.adam.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.eps = j.at("eps").get<double>();
  c.weights.lambda_m = j.at("lambda_m").get<double>();
  c.weights.lambda_adv = j.at("lambda_adv").get<double>();
  c.weights.lambda_recon = j.at("lambda_recon").get<double>();
  c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  c.kernel_bandwidths = j.at("kernel_bandwidths").get<std::vector<double>>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.deterministic_eta = j.at("deterministic_eta").get<bool>();
  return c;
}

}  // namespace trainer_detail

inline void save_checkpoint(const TrainState& st, const TrainConfig& cfg,
                            const std::filesystem::path& path) {
  using trainer_detail::ByteWriter;
  ByteWriter wr;
  wr.buf.append(kCheckpointMagic, 4);
  wr.u32(kCheckpointVersion);
  wr.str(trainer_detail::config_to_json(cfg).dump());
  wr.u64(st.iteration);
  wr.str(st.stream.save_state());
  wr.u64(st.model.image_h);
  wr.u64(st.model.image_w);
  wr.u64(st.model.latent_dim);
  for (const NetParams* p : nets_of(st.model)) {
    trainer_detail::write_net(wr, *p);
  }
  if (st.opt.size() != 6) {
    throw std::logic_error("save_checkpoint: expected six optimizer banks");
  }
  for (const OptBank& bank : st.opt) {
    wr.u64(bank.slots.size());
    for (const AdamState& s : bank.slots) {
      wr.u64(s.t);
      wr.doubles(s.m);
      wr.doubles(s.v);
    }
  }
  for (const auto* buf : {&st.buffer_hazy, &st.buffer_clear}) {
    wr.u64(buf->size());
    for (const auto& e : *buf) wr.doubles(e);
  }
  wr.u64(st.history.size());
  for (const LossReport& r : st.history) {
    wr.u64(r.iter);
    for (double v : {r.vae_i, r.vae_j, r.gan_i, r.gan_j, r.cc_i, r.cc_j,
                     r.total}) {
      wr.f64(v);
    }
  }
  wr.u32(buffer_crc32(wr.buf));

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os ||
        !os.write(wr.buf.data(), static_cast<std::streamsize>(wr.buf.size()))) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("save_checkpoint: cannot write " +
                               path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("save_checkpoint: cannot finalize " +
                             path.string());
  }
}

inline std::pair<TrainState, TrainConfig> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  }
  std::string buf((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 8 || buf.compare(0, 4, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("load_checkpoint: " + path.string() +
                             " is not a checkpoint file");
  }
  const std::string payload = buf.substr(0, buf.size() - 4);
  trainer_detail::ByteReader tail(buf);
  tail.pos = buf.size() - 4;
  if (tail.u32() != buffer_crc32(payload)) {
    throw std::runtime_error("load_checkpoint: " + path.string() +
                             " is corrupt (checksum mismatch)");
  }

  trainer_detail::ByteReader rd(payload);
  rd.pos = 4;
  const std::uint32_t version = rd.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(
        "load_checkpoint: format version " + std::to_string(version) +
        " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  TrainConfig cfg;
  try {
    cfg = trainer_detail::config_from_json(nlohmann::json::parse(rd.str()));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("load_checkpoint: bad config echo: ") +
                             e.what());
  }
  TrainState st;
  st.iteration = rd.u64();
  st.stream.load_state(rd.str());
  st.model.image_h = rd.u64();
  st.model.image_w = rd.u64();
  st.model.latent_dim = rd.u64();
  for (NetParams* p : nets_of(st.model)) {
    *p = trainer_detail::read_net(rd);
  }
  for (int b = 0; b < 6; ++b) {
    OptBank bank;
    const std::uint64_t n = rd.u64();
    for (std::uint64_t k = 0; k < n; ++k) {
      AdamState s;
      s.t = rd.u64();
      s.m = rd.doubles();
      s.v = rd.doubles();
      s.cfg = cfg.adam;
      bank.slots.push_back(std::move(s));
    }
    st.opt.push_back(std::move(bank));
  }
  for (auto* dst : {&st.buffer_hazy, &st.buffer_clear}) {
    const std::uint64_t n = rd.u64();
    for (std::uint64_t k = 0; k < n; ++k) dst->push_back(rd.doubles());
  }
  const std::uint64_t rows = rd.u64();
  for (std::uint64_t k = 0; k < rows; ++k) {
    LossReport r;
    r.iter = rd.u64();
    r.vae_i = rd.f64();
    r.vae_j = rd.f64();
    r.gan_i = rd.f64();
    r.gan_j = rd.f64();
    r.cc_i = rd.f64();
    r.cc_j = rd.f64();
    r.total = rd.f64();
    st.history.push_back(r);
  }
  return {std::move(st), std::move(cfg)};
}

inline void write_metrics_csv(const std::vector<LossReport>& history,
                              const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("write_metrics_csv: cannot write " +
                             path.string());
  }
  os << "iter,vae_i,vae_j,gan_i,gan_j,cc_i,cc_j,total\n";
  char line[512];
  for (const LossReport& r : history) {
    std::snprintf(line, sizeof(line),
                  "%" PRIu64
                  ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iter, r.vae_i, r.vae_j, r.gan_i, r.gan_j, r.cc_i, r.cc_j,
                  r.total);
    os << line;
  }
  if (!os) {
    throw std::runtime_error("write_metrics_csv: cannot write " +
                             path.string());
  }
}

inline std::filesystem::path checkpoint_name(std::uint64_t iter) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06" PRIu64 ".hzck", iter);
  return buf;
}

struct TrainOutcome {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_csv;
};

/// Drives train_step from state.iteration to cfg.iterations over seeded
/// per-epoch permutations (hazy and clear orders drawn independently),
/// checkpointing at every interval boundary and at completion.
inline TrainOutcome run_training(TrainState& st, const TrainConfig& cfg,
                                 const DatasetManifest& manifest,
                                 const std::filesystem::path& out_dir,
                                 std::ostream* progress = nullptr) {
  using namespace trainer_detail;
  validate_config(cfg);
  if (manifest.height != st.model.image_h ||
      manifest.width != st.model.image_w) {
    throw std::runtime_error("run_training: dataset size " +
                             std::to_string(manifest.height) + "x" +
                             std::to_string(manifest.width) +
                             " does not match model " +
                             std::to_string(st.model.image_h) + "x" +
                             std::to_string(st.model.image_w));
  }
  if (st.iteration > cfg.iterations) {
    throw std::invalid_argument(
        "run_training: state is at iteration " +
        std::to_string(st.iteration) + ", beyond the requested total " +
        std::to_string(cfg.iterations));
  }
  const std::vector<std::size_t> train_idx = manifest.split_indices("train");
  if (train_idx.empty()) {
    throw std::runtime_error("run_training: dataset has no training records");
  }
  std::vector<Image> hazy_pool, clear_pool;
  hazy_pool.reserve(train_idx.size());
  clear_pool.reserve(train_idx.size());
  for (std::size_t idx : train_idx) {
    ScenePair p = load_pair(manifest, idx);
    hazy_pool.push_back(std::move(p.hazy));
    clear_pool.push_back(std::move(p.clear));
  }
  const std::size_t n = hazy_pool.size();

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw std::runtime_error("run_training: cannot create output directory " +
                             out_dir.string());
  }

  std::uint64_t last_saved = ~std::uint64_t{0};
  auto save_all = [&](std::uint64_t iter) {
    save_checkpoint(st, cfg, out_dir / checkpoint_name(iter));
    write_metrics_csv(st.history, out_dir / "metrics.csv");
    last_saved = iter;
  };

  if (st.iteration == 0) save_all(0);

  std::uint64_t perm_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm_hazy, perm_clear;
  while (st.iteration < cfg.iterations) {
    const std::uint64_t it = st.iteration;
    const std::uint64_t epoch = it / n;
    const std::size_t pos = static_cast<std::size_t>(it % n);
    if (epoch != perm_epoch) {
      perm_hazy = shuffled_indices(
          n, derive_seed(cfg.master_seed, kTagEpochHazy, epoch));
      perm_clear = shuffled_indices(
          n, derive_seed(cfg.master_seed, kTagEpochClear, epoch));
      perm_epoch = epoch;
    }
    const LossReport r =
        train_step(st, hazy_pool[perm_hazy[pos]], clear_pool[perm_clear[pos]],
                   cfg);
    if (progress && (st.iteration % kProgressEvery == 0 ||
                     st.iteration == cfg.iterations)) {
      char line[160];
      std::snprintf(line, sizeof(line), "iter %" PRIu64 "/%" PRIu64
                    "  total %.6f\n",
                    st.iteration, cfg.iterations, r.total);
      (*progress) << line << std::flush;
    }
    if (st.iteration % cfg.ckpt_every == 0) save_all(st.iteration);
  }
  if (last_saved != cfg.iterations) save_all(cfg.iterations);

  return TrainOutcome{out_dir / checkpoint_name(cfg.iterations),
                      out_dir / "metrics.csv"};
}

/// Fresh run from cfg.data_manifest.
inline TrainOutcome train(const TrainConfig& cfg,
                          const std::filesystem::path& out_dir,
                          std::ostream* progress = nullptr) {
  const DatasetManifest manifest = load_manifest(cfg.data_manifest);
  TrainState st = init_train_state(cfg, manifest.height, manifest.width);
  return run_training(st, cfg, manifest, out_dir, progress);
}

}  // namespace hazekit
