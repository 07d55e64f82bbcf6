// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. The heavier criteria drive the CLI binary end to end.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hazekit/dataset.hpp"
#include "hazekit/losses.hpp"
#include "hazekit/metrics.hpp"
#include "hazekit/selfcheck.hpp"
#include "hazekit/trainer.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace hazekit;

namespace {

const std::string kCli = HAZEKIT_CLI_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

template <typename F>
void criterion(const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("[%s] %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL",
              name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int run(const std::string& cmd) {
  return testutil::run_command(cmd + " > /dev/null 2>&1");
}

/// Mean psnr/ssim from the trailing summary row of an evaluation CSV.
std::pair<double, double> csv_means(const fs::path& csv) {
  std::istringstream is(testutil::read_file(csv));
  std::string line, last;
  while (std::getline(is, line)) {
    if (line.rfind("mean,", 0) == 0) last = line;
  }
  double p = 0, s = 0;
  if (last.empty() ||
      std::sscanf(last.c_str(), "mean,%lf,%lf", &p, &s) != 2) {
    throw std::runtime_error("no summary row in " + csv.string());
  }
  return {p, s};
}

Outcome check_mmd_oracle() {
  const CheckSummary s = mmd_check(20240502, 200, nullptr);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%zu checks, %zu failed, worst |impl-oracle| %.2e", s.checked,
                s.failed, s.max_err);
  return {s.ok() && s.max_err <= 1e-12, buf};
}

Outcome check_gradients() {
  const CheckSummary s = grad_check(20240501, nullptr);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%zu coordinates, %zu failed, max rel err %.2e", s.checked,
                s.failed, s.max_err);
  return {s.ok() && s.checked >= 500, buf};
}

Outcome check_physics_roundtrip() {
  RandomStream rs(314159);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Image j(16, 16, 3);
    for (double& p : j.px) p = rs.uniform01();
    Grid d(16, 16);
    for (double& v : d.v) v = rs.uniform(0.0, kDepthMax);
    const HazeParams hp = sample_haze_params(rs);
    const Grid t = transmission(d, hp.beta);
    const Image i = apply_haze(j, t, hp.airlight);
    const Image back = invert_haze(i, t, hp.airlight);
    for (std::size_t px = 0; px < t.size(); ++px) {
      if (t.v[px] < kDefaultTransmissionFloor) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        worst = std::max(worst,
                         std::abs(back.px[px * 3 + ch] - j.px[px * 3 + ch]));
      }
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "100 draws, worst |J' - J| = %.2e", worst);
  return {worst <= 1e-12, buf};
}

Outcome check_determinism(const fs::path& root) {
  const fs::path data = root / "det_data";
  if (run(kCli + " gen-data --count 8 --seed 11 --size 16 --out " + q(data)))
    return {false, "gen-data failed"};
  const std::string manifest = q(data / "manifest.json");
  const std::string common = " train --data " + manifest + " --seed 11 ";
  if (run(kCli + common + "--iters 100 --out " + q(root / "det_a")))
    return {false, "train run A failed"};
  if (run(kCli + common + "--iters 100 --out " + q(root / "det_b")))
    return {false, "train run B failed"};
  if (run(kCli + common + "--iters 50 --out " + q(root / "det_c")))
    return {false, "train run C failed"};
  if (run(kCli + " train --resume " +
          q(root / "det_c" / "ckpt_000050.hzck") + " --iters 100 --out " +
          q(root / "det_c")))
    return {false, "resumed run failed"};

  const std::string a =
      testutil::read_file(root / "det_a" / "ckpt_000100.hzck");
  const std::string b =
      testutil::read_file(root / "det_b" / "ckpt_000100.hzck");
  const std::string c =
      testutil::read_file(root / "det_c" / "ckpt_000100.hzck");
  const bool repeat_ok = (a == b);
  const bool split_ok = (a == c);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "repeat run bitwise %s, split run (50+50) bitwise %s",
                repeat_ok ? "identical" : "DIFFERS",
                split_ok ? "identical" : "DIFFERS");
  return {repeat_ok && split_ok, buf};
}

struct LearningArtifacts {
  fs::path data, runs;
  bool trained = false;
};
LearningArtifacts g_learning;

Outcome check_desk_scale_learning(const fs::path& root) {
  g_learning.data = root / "learn_data";
  g_learning.runs = root / "learn_run";
  if (run(kCli + " gen-data --count 80 --size 32 --seed 7 --out " +
          q(g_learning.data)))
    return {false, "gen-data failed"};
  if (run(kCli + " train --data " + q(g_learning.data / "manifest.json") +
          " --iters 2000 --out " + q(g_learning.runs)))
    return {false, "train failed"};
  g_learning.trained = true;

  const fs::path final_ckpt = g_learning.runs / "ckpt_002000.hzck";
  const fs::path init_ckpt = g_learning.runs / "ckpt_000000.hzck";
  const std::string manifest = q(g_learning.data / "manifest.json");
  const auto eval_to = [&](const fs::path& ckpt, const char* dir,
                           const fs::path& csv) {
    return run(kCli + " eval --ckpt " + q(ckpt) + " --data " + manifest +
               " --direction " + dir + " --report " + q(csv));
  };
  if (eval_to(final_ckpt, "dehazing", root / "deh.csv") ||
      eval_to(final_ckpt, "synthesis", root / "syn.csv") ||
      eval_to(init_ckpt, "dehazing", root / "deh0.csv") ||
      eval_to(init_ckpt, "synthesis", root / "syn0.csv"))
    return {false, "eval failed"};

  const auto [deh_psnr, deh_ssim] = csv_means(root / "deh.csv");
  const auto [syn_psnr, syn_ssim] = csv_means(root / "syn.csv");
  const auto [deh0_psnr, deh0_ssim] = csv_means(root / "deh0.csv");
  const auto [syn0_psnr, syn0_ssim] = csv_means(root / "syn0.csv");

  const DatasetManifest m =
      load_manifest(g_learning.data / "manifest.json");
  double baseline = 0.0;
  std::size_t n = 0;
  for (auto idx : m.split_indices("test")) {
    const ScenePair p = load_pair(m, idx);
    baseline += ssim(p.hazy, p.clear);
    ++n;
  }
  baseline /= static_cast<double>(n);

  const bool a_ok = deh_ssim > deh0_ssim && deh_ssim > baseline + 0.01;
  const bool b_ok = syn_ssim > baseline + 0.01;
  char buf[360];
  std::snprintf(buf, sizeof(buf),
                "dehaze ssim %.4f (untrained %.4f, do-nothing %.4f+0.01) %s; "
                "synthesis ssim %.4f (do-nothing %.4f+0.01) %s",
                deh_ssim, deh0_ssim, baseline, a_ok ? "ok" : "FAIL", syn_ssim,
                baseline, b_ok ? "ok" : "FAIL");
  (void)deh_psnr;
  (void)syn_psnr;
  (void)deh0_psnr;
  (void)syn0_psnr;
  return {a_ok && b_ok, buf};
}

Outcome check_loss_identity() {
  if (!g_learning.trained) {
    return {false, "skipped: training artifacts unavailable"};
  }
  // every logged row: total equals the left-to-right sum of the six terms
  std::istringstream is(
      testutil::read_file(g_learning.runs / "metrics.csv"));
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0;
  double worst = 0.0;
  while (std::getline(is, line)) {
    double v[8];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &v[0],
                    &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7]) != 8)
      return {false, "bad metrics row: " + line};
    const double sum = ((((v[1] + v[2]) + v[3]) + v[4]) + v[5]) + v[6];
    worst = std::max(worst, std::abs(sum - v[7]));
    ++rows;
  }
  const bool sum_ok = rows == 2000 && worst <= 1e-12;

  // doubling each weight doubles exactly the terms it owns
  RandomStream rs(2718);
  Tensor mean = Tensor::row({0.2, -0.4});
  std::vector<std::vector<double>> stale;
  for (int k = 0; k < 3; ++k) stale.push_back({rs.normal(), rs.normal()});
  Tensor xhat(Shape{1, 12});
  Tensor xref(Shape{1, 12});
  for (double& p : xhat.data) p = rs.uniform01();
  for (double& p : xref.data) p = rs.uniform01();
  const KernelSpec ks = KernelSpec::training_default(2);

  auto vae_terms = [&](double lm, double lr) {
    Graph g;
    Tensor mcopy = mean;
    LossWeights w;
    w.lambda_m = lm;
    w.lambda_recon = lr;
    RandomStream prior(42);
    const VaeLossExpr e =
        vae_loss_expr(g, g.leaf(mcopy), stale, g.constant(xhat),
                      g.constant(xref), w, ks, prior);
    return std::pair<double, double>{g.val(e.mmd_term).data[0],
                                     g.val(e.recon_term).data[0]};
  };
  const auto [m1, r1] = vae_terms(0.01, 10.0);
  const auto [m2, r2] = vae_terms(0.02, 10.0);
  const auto [m3, r3] = vae_terms(0.01, 20.0);
  const bool vae_ok = (m2 == 2.0 * m1) && (r3 == 2.0 * r1) && (r2 == r1) &&
                      (m3 == m1);

  RandomStream drs(5);
  NetParams disc = init_params(drs, discriminator_arch(12));
  auto gan_value = [&](double la, bool gen_side) {
    Graph g;
    LossWeights w;
    w.lambda_adv = la;
    NetVars dv = bind_frozen(g, disc);
    const Var real = g.constant(xref);
    const Var fake = g.constant(xhat);
    return gen_side
               ? g.val(gen_gan_loss_expr(g, dv, disc.arch, fake, w)).data[0]
               : g.val(disc_gan_loss_expr(g, dv, disc.arch, real, fake, w))
                     .data[0];
  };
  const bool gan_ok =
      gan_value(2.0, false) == 2.0 * gan_value(1.0, false) &&
      gan_value(2.0, true) == 2.0 * gan_value(1.0, true);

  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "%zu rows, worst |sum-total| %.2e; weight-doubling exact: "
                "vae %s, gan %s",
                rows, worst, vae_ok ? "yes" : "NO", gan_ok ? "yes" : "NO");
  return {sum_ok && vae_ok && gan_ok, buf};
}

Outcome check_metric_sanity() {
  Image a(12, 12, 3, 0.4);
  Image b(12, 12, 3, 0.5);
  const double p20 = psnr(a, b, 1.0);
  const bool psnr_ok = std::abs(p20 - 20.0) <= 1e-9;

  RandomStream rs(99);
  Image r(16, 16, 3);
  for (double& px : r.px) px = rs.uniform01();
  const bool self_ok = std::abs(ssim(r, r) - 1.0) <= 1e-12;

  double worst_sym = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Image x(10, 10, 3), y(10, 10, 3);
    for (double& px : x.px) px = rs.uniform01();
    for (double& px : y.px) px = rs.uniform01();
    worst_sym = std::max(worst_sym, std::abs(psnr(x, y, 1.0) - psnr(y, x, 1.0)));
    worst_sym = std::max(worst_sym, std::abs(ssim(x, y) - ssim(y, x)));
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "psnr(0.1)=%.12f, ssim self-sim ok=%d, worst symmetry gap "
                "%.2e",
                p20, self_ok ? 1 : 0, worst_sym);
  return {psnr_ok && self_ok && worst_sym <= 1e-12, buf};
}

}  // namespace

int main() {
  testutil::TempDir root("acceptance");

  criterion("oracle-equivalence", [] { return check_mmd_oracle(); });
  criterion("gradient-suite", [] { return check_gradients(); });
  criterion("physics-round-trip", [] { return check_physics_roundtrip(); });
  criterion("determinism",
            [&] { return check_determinism(root.path); });
  criterion("desk-scale-learning",
            [&] { return check_desk_scale_learning(root.path); });
  criterion("loss-identity", [] { return check_loss_identity(); });
  criterion("metric-sanity", [] { return check_metric_sanity(); });

  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
