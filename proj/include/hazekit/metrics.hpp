#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hazekit/dataset.hpp"
#include "hazekit/image.hpp"
#include "hazekit/nets.hpp"
#include "hazekit/trainer.hpp"

namespace hazekit {

inline constexpr double kPsnrCap = 100.0;  // reported for zero MSE
inline constexpr std::size_t kSsimWindow = 8;

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw std::invalid_argument("psnr: image " + std::to_string(a.h) + "x" +
                                std::to_string(a.w) + "x" +
                                std::to_string(a.c) + " vs " +
                                std::to_string(b.h) + "x" +
                                std::to_string(b.w) + "x" +
                                std::to_string(b.c));
  }
  if (!(peak > 0.0)) {
    throw std::invalid_argument("psnr: peak must be positive");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.px[i] - b.px[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace metrics_detail {

inline std::vector<double> to_gray(const Image& img) {
  std::vector<double> g(img.h * img.w);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < img.c; ++ch) s += img.px[i * img.c + ch];
    g[i] = s / static_cast<double>(img.c);
  }
  return g;
}

}  // namespace metrics_detail

/// Single-scale structural similarity over sliding 8x8 uniform windows
/// (stride 1) of the channel-mean grayscale, with the standard constants
/// C1 = 0.01^2 and C2 = 0.03^2 at unit dynamic range.
inline double ssim(const Image& a, const Image& b) {
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw std::invalid_argument("ssim: image " + std::to_string(a.h) + "x" +
                                std::to_string(a.w) + " vs " +
                                std::to_string(b.h) + "x" +
                                std::to_string(b.w));
  }
  if (a.h < kSsimWindow || a.w < kSsimWindow) {
    throw std::invalid_argument("ssim: image " + std::to_string(a.h) + "x" +
                                std::to_string(a.w) +
                                " is smaller than the " +
                                std::to_string(kSsimWindow) + "x" +
                                std::to_string(kSsimWindow) + " window");
  }
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const std::vector<double> ga = metrics_detail::to_gray(a);
  const std::vector<double> gb = metrics_detail::to_gray(b);
  const std::size_t n = kSsimWindow * kSsimWindow;
  double acc = 0.0;
  std::size_t windows = 0;
  for (std::size_t y = 0; y + kSsimWindow <= a.h; ++y) {
    for (std::size_t x = 0; x + kSsimWindow <= a.w; ++x) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t dy = 0; dy < kSsimWindow; ++dy) {
        for (std::size_t dx = 0; dx < kSsimWindow; ++dx) {
          sa += ga[(y + dy) * a.w + (x + dx)];
          sb += gb[(y + dy) * a.w + (x + dx)];
        }
      }
      const double mu_a = sa / static_cast<double>(n);
      const double mu_b = sb / static_cast<double>(n);
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (std::size_t dy = 0; dy < kSsimWindow; ++dy) {
        for (std::size_t dx = 0; dx < kSsimWindow; ++dx) {
          const double da = ga[(y + dy) * a.w + (x + dx)] - mu_a;
          const double db = gb[(y + dy) * a.w + (x + dx)] - mu_b;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= static_cast<double>(n);
      vb /= static_cast<double>(n);
      cov /= static_cast<double>(n);
      const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2);
      acc += num / den;
      ++windows;
    }
  }
  return acc / static_cast<double>(windows);
}

struct MetricRow {
  std::string file;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::string checkpoint;
  std::string direction;  // "synthesis" or "dehazing"
  std::vector<MetricRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Batch metrics over the manifest's test split with a caller-supplied
/// translator; synthesis compares translate(clear) against the stored hazy
/// image, dehazing compares translate(hazy) against the stored clear one.
inline MetricReport evaluate_with(
    const std::function<Image(const Image&)>& translator,
    const DatasetManifest& manifest, Direction dir) {
  MetricReport rep;
  rep.direction = dir == Direction::HazyToClear ? "dehazing" : "synthesis";
  const std::vector<std::size_t> test_idx = manifest.split_indices("test");
  if (test_idx.empty()) {
    throw std::runtime_error("evaluate: dataset has no test records");
  }
  double sp = 0.0, ss = 0.0;
  for (std::size_t idx : test_idx) {
    const ScenePair pair = load_pair(manifest, idx);
    const Image& src = dir == Direction::HazyToClear ? pair.hazy : pair.clear;
    const Image& ref = dir == Direction::HazyToClear ? pair.clear : pair.hazy;
    const Image out = translator(src);
    MetricRow row;
    row.file = dir == Direction::HazyToClear
                   ? manifest.records[idx].hazy_file
                   : manifest.records[idx].clear_file;
    row.psnr = psnr(out, ref, 1.0);
    row.ssim = ssim(out, ref);
    sp += row.psnr;
    ss += row.ssim;
    rep.rows.push_back(std::move(row));
  }
  rep.mean_psnr = sp / static_cast<double>(rep.rows.size());
  rep.mean_ssim = ss / static_cast<double>(rep.rows.size());
  return rep;
}

/// Deterministic-mode evaluation of a trained checkpoint.
inline MetricReport evaluate(const std::filesystem::path& checkpoint,
                             const DatasetManifest& manifest, Direction dir) {
  auto [state, cfg] = load_checkpoint(checkpoint);
  const Model& model = state.model;
  MetricReport rep = evaluate_with(
      [&model, dir](const Image& src) {
        return translate(model, src, dir, nullptr);
      },
      manifest, dir);
  rep.checkpoint = checkpoint.filename().string();
  return rep;
}

inline void write_metric_csv(const MetricReport& rep,
                             const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw std::runtime_error("write_metric_csv: cannot write " +
                             path.string());
  }
  os << "file,psnr,ssim\n";
  char line[256];
  for (const MetricRow& r : rep.rows) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g\n", r.file.c_str(),
                  r.psnr, r.ssim);
    os << line;
  }
  std::snprintf(line, sizeof(line), "mean,%.17g,%.17g\n", rep.mean_psnr,
                rep.mean_ssim);
  os << line;
  if (!os) {
    throw std::runtime_error("write_metric_csv: cannot write " +
                             path.string());
  }
}

/// input | output | reference strip for visual inspection.
inline Image triptych(const Image& in, const Image& out, const Image& ref) {
  Image strip(in.h, in.w * 3, 3);
  for (std::size_t y = 0; y < in.h; ++y) {
    for (std::size_t x = 0; x < in.w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        strip.at(y, x, ch) = in.at(y, x, ch);
        strip.at(y, x + in.w, ch) = out.at(y, x, ch);
        strip.at(y, x + 2 * in.w, ch) = ref.at(y, x, ch);
      }
    }
  }
  return strip;
}

}  // namespace hazekit
