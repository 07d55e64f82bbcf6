// Command-line front end: dataset generation, training, translation in both
// directions, evaluation, and the numerical self-check suites.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "hazekit/dataset.hpp"
#include "hazekit/metrics.hpp"
#include "hazekit/selfcheck.hpp"
#include "hazekit/trainer.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_gen_data(std::size_t count, std::uint64_t seed, std::size_t size,
                 const std::string& out) {
  const hazekit::DatasetManifest m =
      hazekit::build_dataset(count, seed, size, out);
  const std::size_t n_train = m.split_indices("train").size();
  const std::size_t n_test = m.split_indices("test").size();
  std::printf("wrote %zu scene pairs (%zu train / %zu test) under %s\n",
              m.records.size(), n_train, n_test, out.c_str());
  return 0;
}

struct ResumeOverrides {
  bool iters = false;
  bool ckpt_every = false;
  bool data = false;
};

int cmd_train(const hazekit::TrainConfig& cfg, const std::string& resume,
              const ResumeOverrides& given, const std::string& out) {
  hazekit::TrainOutcome outcome;
  if (!resume.empty()) {
    // resume keeps the checkpoint's saved config; only explicitly passed
    // flags override it
    auto [state, run_cfg] = hazekit::load_checkpoint(resume);
    if (given.iters) run_cfg.iterations = cfg.iterations;
    if (given.ckpt_every) run_cfg.ckpt_every = cfg.ckpt_every;
    if (given.data) run_cfg.data_manifest = cfg.data_manifest;
    const hazekit::DatasetManifest manifest =
        hazekit::load_manifest(run_cfg.data_manifest);
    outcome = hazekit::run_training(state, run_cfg, manifest, out, &std::cout);
  } else {
    outcome = hazekit::train(cfg, out, &std::cout);
  }
  std::printf("final checkpoint: %s\nmetrics: %s\n",
              outcome.final_checkpoint.string().c_str(),
              outcome.metrics_csv.string().c_str());
  return 0;
}

int cmd_translate(const std::string& ckpt, const std::string& in,
                  const std::string& out, hazekit::Direction dir,
                  bool deterministic, std::uint64_t seed) {
  auto [state, cfg] = hazekit::load_checkpoint(ckpt);
  const hazekit::Image src = hazekit::read_png(in);
  hazekit::RandomStream rs(seed);
  const hazekit::Image result =
      hazekit::translate(state.model, src, dir, deterministic ? nullptr : &rs);
  hazekit::write_png(out, hazekit::quantize8(result));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::string& direction, const std::string& report,
             const std::string& images_dir) {
  const hazekit::Direction dir = hazekit::parse_direction(direction);
  const hazekit::DatasetManifest manifest = hazekit::load_manifest(data);
  const hazekit::MetricReport rep = hazekit::evaluate(ckpt, manifest, dir);
  hazekit::write_metric_csv(rep, report);
  std::printf("%s over %zu test images: mean psnr %.4f dB, mean ssim %.4f\n",
              rep.direction.c_str(), rep.rows.size(), rep.mean_psnr,
              rep.mean_ssim);
  if (!images_dir.empty()) {
    std::error_code ec;
    fs::create_directories(images_dir, ec);
    if (ec) {
      throw std::runtime_error("eval: cannot create image directory " +
                               images_dir);
    }
    auto [state, cfg] = hazekit::load_checkpoint(ckpt);
    const auto test_idx = manifest.split_indices("test");
    for (std::size_t k = 0; k < test_idx.size(); ++k) {
      const hazekit::ScenePair pair = hazekit::load_pair(manifest, test_idx[k]);
      const hazekit::Image& src =
          dir == hazekit::Direction::HazyToClear ? pair.hazy : pair.clear;
      const hazekit::Image& ref =
          dir == hazekit::Direction::HazyToClear ? pair.clear : pair.hazy;
      const hazekit::Image out =
          hazekit::translate(state.model, src, dir, nullptr);
      char name[64];
      std::snprintf(name, sizeof(name), "triptych_%05zu.png", k);
      hazekit::write_png(fs::path(images_dir) / name,
                         hazekit::quantize8(hazekit::triptych(src, out, ref)));
    }
    std::printf("wrote %zu triptychs under %s\n", test_idx.size(),
                images_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint haze synthesis and removal toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data",
                                 "generate a synthetic scene dataset");
  std::size_t gd_count = 80, gd_size = 32;
  std::uint64_t gd_seed = 7;
  std::string gd_out;
  gen->add_option("--count", gd_count, "number of scene pairs")
      ->capture_default_str();
  gen->add_option("--seed", gd_seed, "master seed")->capture_default_str();
  gen->add_option("--size", gd_size, "square image side")
      ->capture_default_str();
  gen->add_option("--out", gd_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train the translation model");
  hazekit::TrainConfig cfg;
  std::string tr_out, tr_resume;
  tr->add_option("--data", cfg.data_manifest, "path to manifest.json");
  tr->add_option("--iters", cfg.iterations, "total iterations")
      ->capture_default_str();
  tr->add_option("--seed", cfg.master_seed, "master seed")
      ->capture_default_str();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--lr", cfg.adam.lr, "Adam learning rate")
      ->capture_default_str();
  tr->add_option("--lambda-m", cfg.weights.lambda_m, "latent-prior weight")
      ->capture_default_str();
  tr->add_option("--lambda-adv", cfg.weights.lambda_adv, "adversarial weight")
      ->capture_default_str();
  tr->add_option("--lambda-recon", cfg.weights.lambda_recon,
                 "reconstruction weight")
      ->capture_default_str();
  tr->add_option("--buffer", cfg.buffer_capacity,
                 "latent buffer capacity per domain")
      ->capture_default_str();
  tr->add_option("--latent-dim", cfg.latent_dim, "latent dimension")
      ->capture_default_str();
  tr->add_option("--ckpt-every", cfg.ckpt_every, "checkpoint interval")
      ->capture_default_str();
  tr->add_option("--resume", tr_resume,
                 "checkpoint to resume from (uses its saved config)");

  // hazify / dehaze
  std::string h_ckpt, h_in, h_out;
  bool h_det = false;
  std::uint64_t h_seed = 1;
  auto* hz = app.add_subcommand("hazify", "translate clear -> hazy");
  hz->add_option("--ckpt", h_ckpt, "checkpoint file")->required();
  hz->add_option("--in", h_in, "input PNG")->required();
  hz->add_option("--out", h_out, "output PNG")->required();
  hz->add_flag("--deterministic", h_det, "zero latent perturbation");
  hz->add_option("--seed", h_seed, "perturbation seed")->capture_default_str();

  std::string d_ckpt, d_in, d_out;
  bool d_det = false;
  std::uint64_t d_seed = 1;
  auto* dh = app.add_subcommand("dehaze", "translate hazy -> clear");
  dh->add_option("--ckpt", d_ckpt, "checkpoint file")->required();
  dh->add_option("--in", d_in, "input PNG")->required();
  dh->add_option("--out", d_out, "output PNG")->required();
  dh->add_flag("--deterministic", d_det, "zero latent perturbation");
  dh->add_option("--seed", d_seed, "perturbation seed")->capture_default_str();

  // eval
  std::string e_ckpt, e_data, e_dir, e_report, e_images;
  auto* ev = app.add_subcommand("eval", "batch metrics on the test split");
  ev->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  ev->add_option("--data", e_data, "path to manifest.json")->required();
  ev->add_option("--direction", e_dir, "synthesis or dehazing")
      ->required()
      ->check(CLI::IsMember({"synthesis", "dehazing"}));
  ev->add_option("--report", e_report, "CSV report path")->required();
  ev->add_option("--images", e_images, "optional triptych directory");

  auto* mc = app.add_subcommand("mmd-check",
                                "estimator-vs-oracle statistics suite");
  auto* gc = app.add_subcommand("grad-check",
                                "finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd_count, gd_seed, gd_size, gd_out);
    if (tr->parsed()) {
      if (tr_resume.empty() && cfg.data_manifest.empty()) {
        std::cerr << "train: --data is required unless --resume is given\n";
        return 1;
      }
      ResumeOverrides given;
      given.iters = tr->count("--iters") > 0;
      given.ckpt_every = tr->count("--ckpt-every") > 0;
      given.data = tr->count("--data") > 0;
      return cmd_train(cfg, tr_resume, given, tr_out);
    }
    if (hz->parsed()) {
      return cmd_translate(h_ckpt, h_in, h_out,
                           hazekit::Direction::ClearToHazy, h_det, h_seed);
    }
    if (dh->parsed()) {
      return cmd_translate(d_ckpt, d_in, d_out,
                           hazekit::Direction::HazyToClear, d_det, d_seed);
    }
    if (ev->parsed()) {
      return cmd_eval(e_ckpt, e_data, e_dir, e_report, e_images);
    }
    if (mc->parsed()) {
      return hazekit::mmd_check(20240502, 200, &std::cout).ok() ? 0 : 2;
    }
    if (gc->parsed()) {
      return hazekit::grad_check(20240501, &std::cout).ok() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
