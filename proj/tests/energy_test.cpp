#include <gtest/gtest.h>

#include "hsnn/energy.hpp"

namespace hsnn {
namespace {

using namespace energy;

TEST(OpCount, UnitLayer) { EXPECT_EQ(op_count_ann(LayerSpec{"u", LayerKind::Conv, 1, 1, 1, 1, 1, 1, true}), 1u); }

TEST(OpCount, SecondPaperLayer) {
  // 3 * 3 * 64 * 240 * 240 * 64 evaluated by hand.
  EXPECT_EQ(op_count_ann(LayerSpec{"c2", LayerKind::Conv, 3, 3, 64, 64, 240, 240, true}), 2'123'366'400u);
}

TEST(OpCount, PaperDeconvPair) {
  const LayerSpec t1{"t1", LayerKind::Deconv, 4, 4, 512, 256, 30, 30, false};
  const LayerSpec t2{"t2", LayerKind::Deconv, 4, 4, 256, 128, 60, 60, false};
  EXPECT_EQ(op_count_ann(t1), 1'887'436'800u);
  EXPECT_EQ(op_count_ann(t2), 1'887'436'800u);
  EXPECT_EQ(op_count_ann(t1) + op_count_ann(t2), 3'774'873'600u);
}

TEST(OpCount, ExactlyMultiplicative) {
  const LayerSpec base{"b", LayerKind::Conv, 3, 5, 7, 11, 13, 17, true};
  const auto n = op_count_ann(base);
  for (int f = 0; f < 6; ++f) {
    LayerSpec l = base;
    std::uint64_t* fields[] = {&l.k_w, &l.k_h, &l.c_in, &l.c_out, &l.h_out, &l.w_out};
    *fields[f] *= 2;
    EXPECT_EQ(op_count_ann(l), 2 * n);
  }
}

TEST(OpCount, RejectsZeroAndOverflow) {
  EXPECT_THROW(op_count_ann(LayerSpec{"z", LayerKind::Conv, 0, 1, 1, 1, 1, 1, true}), std::invalid_argument);
  EXPECT_THROW(op_count_ann(LayerSpec{"o", LayerKind::Conv, 1u << 20, 1u << 20, 1u << 20, 1u << 20, 1, 1, true}),
               std::overflow_error);
}

TEST(OpCountSnn, RateScaling) {
  const LayerSpec l{"c", LayerKind::Conv, 3, 3, 64, 64, 240, 240, true};
  EXPECT_EQ(op_count_snn(l, 1.0), static_cast<double>(op_count_ann(l)));
  EXPECT_EQ(op_count_snn(l, 0.0), 0.0);
  EXPECT_THROW(op_count_snn(l, -0.1), std::invalid_argument);
}

TEST(OpCountSnn, PrintedRateOnPaperTotal) {
  // 12,076,646,400 * 16 * 0.0001137 = 21,969,835.1...
  std::uint64_t total = 0;
  for (const auto& l : scnn_layers(ScnnConfig::paper(), 12))
    if (l.spiking) total += op_count_ann(l);
  EXPECT_NEAR(static_cast<double>(total) * 16 * 0.0001137, 21'969'835.0, 1.0);
}

TEST(ReferenceReport, SpikingAndDeconvTotals) {
  const auto r = paper_preset_report();
  // Layer 1 with 12 input channels: 9 * 12 * 240^2 * 64 = 398,131,200; the
  // rest follow the channel ladder.
  const std::uint64_t per_layer[] = {398'131'200, 2'123'366'400, 1'061'683'200, 2'123'366'400,
                                     1'061'683'200, 2'123'366'400, 1'061'683'200, 2'123'366'400};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(r.energy.layers[i].op_ann, per_layer[i]) << "layer " << i + 1;
  EXPECT_EQ(r.energy.spiking_ops, 12'076'646'400u);
  EXPECT_EQ(r.energy.nonspiking_ops, 3'774'873'600u);
}

TEST(ReferenceReport, SpikeRateAndRatio) {
  const auto r = paper_preset_report();
  EXPECT_NEAR(r.reproduced_spike_rate * 100, 0.01137, 0.00001);
  EXPECT_GE(r.energy.improvement_ratio, 264.0);
  EXPECT_LE(r.energy.improvement_ratio, 266.0);
  // Closed form from the published expression.
  const double ann = 4.6 * (12'076'646'400.0 * 16 + 3'774'873'600.0);
  const double snn = 0.9 * (12'076'646'400.0 * 16 * 0.0001137 + 3'774'873'600.0);
  EXPECT_NEAR(r.energy.ecp_ann, ann, ann * 1e-15);
  EXPECT_NEAR(r.energy.ecp_snn, snn, snn * 1e-15);
  EXPECT_LT(r.energy.ecp_snn, r.energy.ecp_ann);
}

TEST(Estimate, RateOneIsDenseAndOpsBounded) {
  const auto layers = scnn_layers(ScnnConfig::tiny());
  const auto r = estimate(layers, 4, 1.0);
  for (const auto& l : r.layers)
    if (l.spec.spiking) {
      EXPECT_EQ(l.op_snn, 4.0 * static_cast<double>(l.op_ann));
    }
  const auto q = estimate(layers, 4, 0.3);
  for (const auto& l : q.layers)
    if (l.spec.spiking) {
      EXPECT_LE(l.op_snn, 4.0 * static_cast<double>(l.op_ann));
    }
  EXPECT_THROW(estimate(layers, 0, 0.1), std::invalid_argument);
  EXPECT_THROW(estimate(layers, 4, 0.1, EnergyConstants{0, 1}), std::invalid_argument);
}

TEST(SpikeRateMeasure, SilentModelIsZero) {
  ParameterSet<double> ps;
  Rng rng(1);
  auto cfg = ScnnConfig::tiny();
  cfg.neuron.threshold = 1e12;
  Scnn<double> net(cfg, ps, rng);
  Graph<double> g;
  g.set_grad_enabled(false);
  const auto out = net.forward(g, rng.uniform_tensor<double>({4, 2, 32, 32}, 0, 3));
  const auto r = measure_spike_rate(cfg, {out.spike_counts});
  EXPECT_EQ(r.plain, 0.0);
  EXPECT_EQ(r.per_op, 0.0);
}

TEST(SpikeRateMeasure, SaturatedModelIsOne) {
  ParameterSet<double> ps;
  Rng rng(2);
  auto cfg = ScnnConfig::tiny();
  cfg.neuron.threshold = 1e-9;
  Scnn<double> net(cfg, ps, rng);
  for (auto& p : ps) p.value.fill(0.1);
  Graph<double> g;
  g.set_grad_enabled(false);
  const auto out = net.forward(g, Tensor<double>({4, 2, 32, 32}, 1.0));
  const auto r = measure_spike_rate(cfg, {out.spike_counts});
  EXPECT_DOUBLE_EQ(r.plain, 1.0);
  for (double v : r.per_layer) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(SpikeRateMeasure, ConventionsMatchRecount) {
  ParameterSet<double> ps;
  Rng rng(3);
  const auto cfg = ScnnConfig::tiny();
  Scnn<double> net(cfg, ps, rng);
  std::vector<std::vector<std::uint64_t>> counts;
  double spikes = 0;
  for (int s = 0; s < 3; ++s) {
    Tensor<double> vox({4, 2, 32, 32});
    for (auto& v : vox.storage()) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    Graph<double> g;
    g.set_grad_enabled(false);
    const auto out = net.forward(g, vox);
    counts.push_back(out.spike_counts);
    for (const auto& st : out.steps)
      for (const auto& sp : st.spikes) spikes += sp.value().sum();
  }
  spikes /= 3;
  // Neurons per step and dense ops per step of the tiny ladder, by hand.
  const double neurons = 32 * 32 * 4 * 2 + 16 * 16 * 8 * 2 + 8 * 8 * 16 * 2 + 4 * 4 * 32 * 2;
  const double ops = 9.0 * (2 * 4 * 1024 + 4 * 4 * 1024 + 4 * 8 * 256 + 8 * 8 * 256 + 8 * 16 * 64 + 16 * 16 * 64 +
                            16 * 32 * 16 + 32 * 32 * 16);
  const auto r = measure_spike_rate(cfg, counts);
  EXPECT_NEAR(r.mean_spikes, spikes, 1e-9);
  EXPECT_NEAR(r.plain, spikes / (neurons * 4), 1e-15);
  EXPECT_NEAR(r.per_op, spikes / (ops * 4), 1e-15);
  EXPECT_GE(r.plain, 0.0);
  EXPECT_LE(r.plain, 1.0);
  EXPECT_THROW(measure_spike_rate(cfg, {}), std::invalid_argument);
}

TEST(LayerSpecText, ParsesAndRejects) {
  const auto l = parse_layer_specs("# paper deconvs\ndeconv 4 512 256 30 30 0\n\nconv 3 12 64 240 240 1\n");
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(op_count_ann(l[0]), 1'887'436'800u);
  EXPECT_TRUE(l[1].spiking);
  EXPECT_EQ(op_count_ann(l[1]), 398'131'200u);
  EXPECT_THROW(parse_layer_specs("pool 2 1 1 1 1 0"), std::invalid_argument);
  EXPECT_THROW(parse_layer_specs("conv 3 1 1 1 1"), std::invalid_argument);
  EXPECT_THROW(parse_layer_specs("conv 3 1 1 1 1 2"), std::invalid_argument);
  EXPECT_THROW(parse_layer_specs("conv 3 1 1 1 1 1 9"), std::invalid_argument);
}

}  // namespace
}  // namespace hsnn
