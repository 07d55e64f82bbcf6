#include <gtest/gtest.h>

#include <cmath>

#include "hazekit/dataset.hpp"
#include "hazekit/nets.hpp"
#include "hazekit/selfcheck.hpp"
#include "hazekit/trainer.hpp"
#include "test_util.hpp"

using namespace hazekit;
using testutil::TempDir;

TEST(InitParams, DeterministicInSeed) {
  const Architecture arch = encoder_arch(48, 4);
  RandomStream a(5), b(5);
  const NetParams pa = init_params(a, arch);
  const NetParams pb = init_params(b, arch);
  for (std::size_t l = 0; l < pa.weights.size(); ++l) {
    EXPECT_EQ(pa.weights[l].data, pb.weights[l].data);
  }
}

TEST(InitParams, BiasesZeroAndWeightsBounded) {
  RandomStream rs(6);
  const Architecture arch = encoder_arch(48, 4);
  const NetParams p = init_params(rs, arch);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double s = std::sqrt(
        6.0 / static_cast<double>(arch.widths[l] + arch.widths[l + 1]));
    for (double w : p.weights[l].data) EXPECT_LE(std::abs(w), s);
    for (double b : p.biases[l].data) EXPECT_DOUBLE_EQ(b, 0.0);
  }
}

TEST(InitParams, RejectsInconsistentArchitecture) {
  RandomStream rs(7);
  EXPECT_THROW(init_params(rs, Architecture{{}, FinalLayer::Linear, 0.2}),
               std::invalid_argument);
  EXPECT_THROW(init_params(rs, Architecture{{8}, FinalLayer::Linear, 0.2}),
               std::invalid_argument);
  EXPECT_THROW(init_params(rs, Architecture{{8, 0, 4}, FinalLayer::Linear, 0.2}),
               std::invalid_argument);
}

TEST(DefaultArchitectures, MatchDocumentedWidthsAtFullScale) {
  const Architecture e = encoder_arch(3072, 8);
  EXPECT_EQ(e.widths, (std::vector<std::size_t>{3072, 512, 128, 8}));
  const Architecture g = generator_arch(8, 3072);
  EXPECT_EQ(g.widths, (std::vector<std::size_t>{8, 128, 512, 3072}));
  const Architecture d = discriminator_arch(3072);
  EXPECT_EQ(d.widths, (std::vector<std::size_t>{3072, 256, 64, 1}));
}

TEST(Encoder, OutputDimensionIsLatent) {
  RandomStream rs(8);
  const NetParams enc = init_params(rs, encoder_arch(27, 5));
  Tensor x(Shape{1, 27});
  for (double& v : x.data) v = rs.uniform01();
  const Tensor mean = net_eval(enc, x);
  EXPECT_EQ(mean.shape, (Shape{1, 5}));
}

TEST(Encoder, ZeroParametersGiveZeroOutput) {
  RandomStream rs(9);
  NetParams enc = init_params(rs, encoder_arch(27, 5));
  for (Tensor* t : enc.tensors()) {
    for (double& v : t->data) v = 0.0;
  }
  Tensor x(Shape{1, 27}, 0.8);
  for (double v : net_eval(enc, x).data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Encoder, InputGradientMatchesFiniteDifferences) {
  RandomStream rs(10);
  NetParams enc = init_params(rs, encoder_arch(12, 3));
  Tensor x(Shape{1, 12});
  for (double& v : x.data) v = rs.uniform01();

  Graph g;
  const Var xv = g.leaf(x);
  NetVars nv = bind_frozen(g, enc);
  g.backward(g.mean(net_forward(g, nv, enc.arch, xv)));

  auto value = [&]() {
    const Tensor out = net_eval(enc, x);
    return (out.data[0] + out.data[1] + out.data[2]) / 3.0;
  };
  const double step = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.data[i];
    x.data[i] = saved + step;
    const double up = value();
    x.data[i] = saved - step;
    const double dn = value();
    x.data[i] = saved;
    const double fd = (up - dn) / (2 * step);
    EXPECT_NEAR((*x.grad)[i], fd,
                1e-4 * std::max({std::abs(fd), std::abs((*x.grad)[i]), 1e-4}));
  }
}

TEST(Encoder, WidthMismatchRejected) {
  RandomStream rs(11);
  const NetParams enc = init_params(rs, encoder_arch(27, 5));
  EXPECT_THROW(net_eval(enc, Tensor(Shape{1, 26}, 0.5)),
               std::invalid_argument);
}

TEST(Reparameterize, DeterministicModeReturnsMean) {
  const Tensor mean = Tensor::row({0.5, -1.5, 2.0});
  const LatentCode lc = reparameterize(mean, nullptr);
  EXPECT_EQ(lc.z, mean.data);
  for (double e : lc.eta) EXPECT_DOUBLE_EQ(e, 0.0);
}

TEST(Reparameterize, PerturbationIsExactlyRecovered) {
  RandomStream rs(12);
  const Tensor mean = Tensor::row({0.1, 0.2, 0.3, 0.4});
  const LatentCode lc = reparameterize(mean, &rs);
  for (std::size_t i = 0; i < lc.z.size(); ++i) {
    EXPECT_DOUBLE_EQ(lc.z[i] - lc.mean[i], lc.eta[i]);
  }
}

TEST(Reparameterize, SampleVarianceNearUnit) {
  RandomStream rs(13);
  const Tensor mean = Tensor::row({1.0, -2.0, 0.25, 3.0});
  const int n = 10000;
  std::vector<double> sum(4, 0.0), sumsq(4, 0.0);
  for (int rep = 0; rep < n; ++rep) {
    const LatentCode lc = reparameterize(mean, &rs);
    for (int l = 0; l < 4; ++l) {
      sum[l] += lc.z[l];
      sumsq[l] += lc.z[l] * lc.z[l];
    }
  }
  for (int l = 0; l < 4; ++l) {
    const double m = sum[l] / n;
    const double var = sumsq[l] / n - m * m;
    EXPECT_NEAR(var, 1.0, 0.05);
  }
}

TEST(Generator, OutputStaysInUnitInterval) {
  RandomStream rs(14);
  const NetParams gen = init_params(rs, generator_arch(4, 27));
  for (int rep = 0; rep < 20; ++rep) {
    Tensor z(Shape{1, 4});
    for (double& v : z.data) v = 3.0 * rs.normal();
    for (double v : net_eval(gen, z).data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Generator, ZeroFinalLayerGivesMidGray) {
  RandomStream rs(15);
  NetParams gen = init_params(rs, generator_arch(4, 27));
  for (double& v : gen.weights.back().data) v = 0.0;
  for (double& v : gen.biases.back().data) v = 0.0;
  Tensor z(Shape{1, 4}, 0.7);
  for (double v : net_eval(gen, z).data) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Generator, LatentGradientMatchesFiniteDifferences) {
  RandomStream rs(16);
  NetParams gen = init_params(rs, generator_arch(4, 18));
  Tensor z(Shape{1, 4});
  for (double& v : z.data) v = rs.normal();

  Graph g;
  const Var zv = g.leaf(z);
  NetVars nv = bind_frozen(g, gen);
  g.backward(g.mean(net_forward(g, nv, gen.arch, zv)));

  auto value = [&]() {
    double s = 0.0;
    const Tensor out = net_eval(gen, z);
    for (double v : out.data) s += v;
    return s / static_cast<double>(out.size());
  };
  const double step = 1e-5;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double saved = z.data[i];
    z.data[i] = saved + step;
    const double up = value();
    z.data[i] = saved - step;
    const double dn = value();
    z.data[i] = saved;
    const double fd = (up - dn) / (2 * step);
    EXPECT_NEAR((*z.grad)[i], fd,
                1e-4 * std::max({std::abs(fd), std::abs((*z.grad)[i]), 1e-4}));
  }
}

TEST(Discriminator, ZeroParametersGiveHalf) {
  RandomStream rs(17);
  NetParams d = init_params(rs, discriminator_arch(27));
  for (Tensor* t : d.tensors()) {
    for (double& v : t->data) v = 0.0;
  }
  EXPECT_DOUBLE_EQ(net_eval(d, Tensor(Shape{1, 27}, 0.4)).data[0], 0.5);
}

TEST(Discriminator, OutputStrictlyInsideUnitAndLogsFinite) {
  RandomStream rs(18);
  NetParams d = init_params(rs, discriminator_arch(27));
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x(Shape{1, 27});
    for (double& v : x.data) v = rs.uniform01();
    const double out = net_eval(d, x).data[0];
    EXPECT_GT(out, 0.0);
    EXPECT_LT(out, 1.0);
  }
  // saturate the final layer so the clamp engages
  for (double& v : d.biases.back().data) v = 1e6;
  const double hi = net_eval(d, Tensor(Shape{1, 27}, 0.5)).data[0];
  EXPECT_DOUBLE_EQ(hi, 1.0 - kProbClamp);
  EXPECT_TRUE(std::isfinite(std::log(hi)));
  EXPECT_TRUE(std::isfinite(std::log(1.0 - hi)));
  for (double& v : d.biases.back().data) v = -1e6;
  const double lo = net_eval(d, Tensor(Shape{1, 27}, 0.5)).data[0];
  EXPECT_DOUBLE_EQ(lo, kProbClamp);
  EXPECT_TRUE(std::isfinite(std::log(lo)));
  EXPECT_TRUE(std::isfinite(std::log(1.0 - lo)));
}

TEST(Translate, DeterministicModeIsPure) {
  RandomStream rs(19);
  const Model m = init_model(rs, 8, 8, 4);
  Image src(8, 8, 3);
  for (double& p : src.px) p = rs.uniform01();
  const Image a = translate(m, src, Direction::HazyToClear, nullptr);
  const Image b = translate(m, src, Direction::HazyToClear, nullptr);
  EXPECT_EQ(a.px, b.px);
  for (double p : a.px) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Translate, UninitializedModelRejected) {
  Model m;
  m.image_h = m.image_w = 8;
  Image src(8, 8, 3, 0.5);
  EXPECT_THROW(translate(m, src, Direction::ClearToHazy), std::runtime_error);
}

TEST(Translate, WrongImageSizeRejected) {
  RandomStream rs(20);
  const Model m = init_model(rs, 8, 8, 4);
  Image src(9, 8, 3, 0.5);
  EXPECT_THROW(translate(m, src, Direction::ClearToHazy),
               std::invalid_argument);
}

TEST(Translate, EndToEndGradientMatchesFiniteDifferences) {
  const CheckSummary s = grad_check_composite(20240501, 160, 8, 4, nullptr);
  EXPECT_TRUE(s.ok());
  EXPECT_GE(s.checked, 160u);
}

TEST(Translate, CycleErrorImprovesWithToyTraining) {
  TempDir dir("cycle");
  build_dataset(8, 31, 16, dir.path);
  const DatasetManifest manifest = load_manifest(dir.path / "manifest.json");

  TrainConfig cfg;
  cfg.data_manifest = (dir.path / "manifest.json").string();
  cfg.iterations = 150;
  cfg.ckpt_every = 50;
  TrainState st = init_train_state(cfg, manifest.height, manifest.width);
  const Model untrained = st.model;

  const auto train_idx = manifest.split_indices("train");
  std::vector<Image> hazy, clear;
  for (auto idx : train_idx) {
    ScenePair p = load_pair(manifest, idx);
    hazy.push_back(std::move(p.hazy));
    clear.push_back(std::move(p.clear));
  }
  for (std::uint64_t it = 0; it < cfg.iterations; ++it) {
    train_step(st, hazy[it % hazy.size()], clear[it % clear.size()], cfg);
  }

  auto cycle_mae = [&](const Model& m) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto idx : manifest.split_indices("test")) {
      const ScenePair p = load_pair(manifest, idx);
      const Image once = translate(m, p.hazy, Direction::HazyToClear, nullptr);
      const Image back = translate(m, once, Direction::ClearToHazy, nullptr);
      for (std::size_t k = 0; k < back.size(); ++k) {
        acc += std::abs(back.px[k] - p.hazy.px[k]);
        ++n;
      }
    }
    return acc / static_cast<double>(n);
  };
  EXPECT_LT(cycle_mae(st.model), cycle_mae(untrained));
}
