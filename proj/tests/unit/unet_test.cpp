#include "csmri/train.hpp"
#include "csmri/unet.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace csmri;
using test::random_tensor;
using test::rel_error;

namespace {

NetworkSpec make_spec(int scales, int size, int base, int layers = 2)
{
  NetworkSpec s;
  s.n_scales = scales;
  s.layers_per_stage = layers;
  s.base_channels = base;
  s.input_h = size;
  s.input_w = size;
  return s;
}

} // namespace

TEST(Spec, ValidationAndParsing)
{
  EXPECT_THROW(make_spec(4, 12, 4).validate(), std::invalid_argument);
  EXPECT_THROW(make_spec(0, 16, 4).validate(), std::invalid_argument);
  EXPECT_NO_THROW(make_spec(3, 16, 4).validate());
  EXPECT_THROW(Network<float>(make_spec(5, 24, 2), 0), std::invalid_argument);

  auto s = parse_network_spec("n_scales=4\nbase_channels=8\ninput_h=32\ninput_w=32\nmode=single_scale\nunpool=nearest\n");
  EXPECT_EQ(s.n_scales, 4);
  EXPECT_EQ(s.base_channels, 8);
  EXPECT_EQ(s.mode, NetworkMode::SingleScale);
  EXPECT_EQ(s.unpool, UnpoolMode::Nearest);
  auto again = parse_network_spec(format_network_spec(s));
  EXPECT_EQ(format_network_spec(again), format_network_spec(s));
  EXPECT_THROW(parse_network_spec("depth=3"), std::invalid_argument);
  EXPECT_THROW(parse_network_spec("mode=deep"), std::invalid_argument);
}

TEST(Build, PaperScaleBottomIsSixteen)
{
  auto spec = NetworkSpec::paper_scale();
  EXPECT_EQ(spec.n_scales, 5);
  EXPECT_EQ(spec.input_h, 256);
  auto plan = layer_plan(spec);
  int smallest = spec.input_h;
  for (auto const &l : plan) {
    smallest = std::min(smallest, l.output.h);
  }
  EXPECT_EQ(smallest, 16);
  for (auto const &l : plan) {
    if (l.name.starts_with("bottom")) {
      EXPECT_EQ(l.output.h, 16);
      EXPECT_EQ(l.scale, 4);
    }
  }
}

TEST(Build, DeskScaleWidths)
{
  Network<float> net(NetworkSpec::desk_scale(), 1);
  std::vector<int> enc_widths;
  for (auto const &st : net.stages()) {
    if (st.role == StageRole::Encoder) {
      for (auto const &b : st.blocks) {
        EXPECT_EQ(b.conv.out_channels(), 16 << st.scale);
      }
      enc_widths.push_back(st.blocks.front().conv.out_channels());
    }
    if (st.role == StageRole::Bottom) {
      EXPECT_EQ(st.blocks.front().conv.out_channels(), 64);
      enc_widths.push_back(64);
    }
  }
  EXPECT_EQ(enc_widths, (std::vector<int>{16, 32, 64}));
  auto plan = layer_plan(NetworkSpec::desk_scale());
  for (auto const &l : plan) {
    if (l.name.starts_with("bottom")) {
      EXPECT_EQ(l.output.h, 16);
    }
  }
}

TEST(Build, ChannelDoublingAndPaths)
{
  for (auto spec : {NetworkSpec::paper_scale(), NetworkSpec::desk_scale(), make_spec(4, 32, 3)}) {
    Network<float> net(spec, 0);
    int encoders = 0;
    for (auto const &st : net.stages()) {
      if (st.role == StageRole::Encoder) {
        encoders++;
        EXPECT_EQ(st.blocks.size(), static_cast<std::size_t>(spec.layers_per_stage));
        for (auto const &b : st.blocks) {
          EXPECT_EQ(b.conv.out_channels(), spec.base_channels << st.scale);
        }
      }
      for (auto const &b : st.blocks) {
        EXPECT_EQ(b.conv.kernel_h(), 3);
      }
      if (st.role == StageRole::Terminal) {
        EXPECT_EQ(st.blocks.size(), 2u);
      }
    }
    EXPECT_EQ(encoders, spec.n_scales - 1);
    ASSERT_EQ(net.paths().size(), static_cast<std::size_t>(spec.n_scales - 1));
    for (auto const &p : net.paths()) {
      auto const &enc = net.stages()[static_cast<std::size_t>(p.encoder_stage)];
      auto const &dec = net.stages()[static_cast<std::size_t>(p.decoder_stage)];
      EXPECT_EQ(enc.role, StageRole::Encoder);
      EXPECT_EQ(dec.role, StageRole::Decoder);
      EXPECT_EQ(enc.scale, p.scale);
      EXPECT_EQ(dec.scale, p.scale);
      // Concat input of the decoder = upsampled width + encoder width at that scale.
      int const enc_out = enc.blocks.back().conv.out_channels();
      EXPECT_EQ(dec.blocks.front().conv.in_channels(), enc_out + (spec.base_channels << p.scale));
    }
    EXPECT_EQ(net.head().kernel_h(), 1);
    EXPECT_EQ(net.head().out_channels(), 1);
  }
}

TEST(Build, SingleScaleEqualsOneScaleStack)
{
  auto single = NetworkSpec::single_scale(64, 64);
  auto one = make_spec(1, 64, 64, NetworkSpec::kSingleScaleBody);
  auto a = layer_plan(single);
  auto b = layer_plan(one);
  ASSERT_EQ(a.size(), b.size());
  int convs = 0;
  for (std::size_t i = 0; i < a.size(); i++) {
    EXPECT_EQ(a[i].kind, b[i].kind);
    EXPECT_EQ(a[i].output, b[i].output);
    EXPECT_NE(a[i].kind, OpKind::Pool);
    if (a[i].kind == OpKind::Conv3) {
      convs++;
      EXPECT_EQ(a[i].output.c, 64);
      EXPECT_EQ(a[i].output.h, 64);
    }
  }
  EXPECT_EQ(convs, 18);
  EXPECT_EQ(Network<float>(single, 4).parameter_count(), Network<float>(one, 4).parameter_count());
}

TEST(Build, ShapeAudit)
{
  struct Case
  {
    int scales;
    int size;
    int base;
  };
  for (auto c : {Case{5, 256, 2}, Case{3, 64, 4}, Case{2, 16, 4}}) {
    for (auto skip : {SkipMode::Concat, SkipMode::Add}) {
      auto spec = make_spec(c.scales, c.size, c.base);
      spec.skip = skip;
      Network<float> net(spec, 2);
      std::vector<Shape> trace;
      Tensor x({2, 1, c.size, c.size});
      auto y = net.forward(x, BNMode::Infer, &trace);
      EXPECT_EQ(y.shape(), x.shape());
      auto plan = layer_plan(spec);
      ASSERT_EQ(trace.size(), plan.size()) << c.scales;
      for (std::size_t i = 0; i < plan.size(); i++) {
        Shape expect = plan[i].output;
        expect.n = 2;
        EXPECT_EQ(trace[i], expect) << plan[i].name;
      }
    }
  }
}

TEST(Build, PaperScaleParameterCount)
{
  auto spec = NetworkSpec::paper_scale();
  Network<float> net(spec, 0);
  std::size_t by_slots = 0;
  for (auto const &p : net.parameters()) {
    by_slots += p.value->size();
  }
  EXPECT_EQ(net.parameter_count(), by_slots);
  EXPECT_EQ(net.parameter_count(), 53486273u);
}

TEST(Forward, RejectsWrongInput)
{
  Network<float> net(make_spec(2, 16, 2), 0);
  EXPECT_THROW(net.forward(Tensor({1, 1, 8, 8}), BNMode::Infer), std::invalid_argument);
  EXPECT_THROW(net.forward(Tensor({1, 2, 16, 16}), BNMode::Infer), std::invalid_argument);
  EXPECT_THROW(net.backward(Tensor({1, 1, 16, 16})), std::logic_error);
  net.forward(Tensor({1, 1, 16, 16}), BNMode::Infer);
  EXPECT_THROW(net.backward(Tensor({1, 1, 16, 16})), std::logic_error);
}

TEST(Forward, ZeroHeadGivesBias)
{
  Network<double> net(make_spec(2, 16, 2), 5);
  net.head().weight.fill(0.0);
  net.head().bias[0] = 0.375;
  for (auto mode : {BNMode::Train, BNMode::Infer}) {
    auto y = net.forward(Tensor64({2, 1, 16, 16}), mode);
    for (double v : y.values()) {
      EXPECT_EQ(v, 0.375);
    }
  }
}

TEST(Forward, SeedDeterminism)
{
  auto spec = make_spec(3, 32, 4);
  Network<double> a(spec, 11);
  Network<double> b(spec, 11);
  Network<double> c(spec, 12);
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 1, 32, 32}, rng);
  auto ya = a.forward(x, BNMode::Train);
  auto yb = b.forward(x, BNMode::Train);
  EXPECT_EQ(rel_error(ya, yb), 0.0);
  EXPECT_GT(rel_error(ya, c.forward(x, BNMode::Train)), 0.0);
}

class NetworkGradient : public ::testing::TestWithParam<std::pair<SkipMode, UnpoolMode>>
{};

TEST_P(NetworkGradient, EndToEnd)
{
  auto spec = make_spec(2, 8, 2);
  spec.skip = GetParam().first;
  spec.unpool = GetParam().second;
  Network<double> net(spec, 21);
  std::mt19937_64 rng(9);
  auto x = random_tensor({2, 1, 8, 8}, rng);
  auto target = random_tensor({2, 1, 8, 8}, rng);

  auto loss_of = [&] { return mse_loss(net.forward(x, BNMode::Train), target).loss; };
  auto const l = mse_loss(net.forward(x, BNMode::Train), target);
  auto const dx = net.backward(l.grad);

  double worst = 0.0;
  for (auto const &slot : net.parameters()) {
    Tensor64 analytic = *slot.grad;
    auto numeric = test::numeric_grad(*slot.value, loss_of, 1e-6);
    if (slot.name.ends_with(".conv.bias") && !slot.name.starts_with("head")) {
      // Batch norm cancels a per-channel shift, so these gradients vanish.
      for (std::size_t i = 0; i < analytic.size(); i++) {
        EXPECT_LT(std::abs(analytic[i]), 1e-12) << slot.name;
        EXPECT_LT(std::abs(numeric[i]), 1e-8) << slot.name;
      }
      continue;
    }
    double const e = rel_error(analytic, numeric);
    EXPECT_LT(e, 1e-4) << slot.name;
    worst = std::max(worst, e);
  }
  EXPECT_LT(rel_error(dx, test::numeric_grad(x, loss_of, 1e-6)), 1e-4);
  RecordProperty("worst_relative_error", std::to_string(worst));
}

INSTANTIATE_TEST_SUITE_P(Variants, NetworkGradient,
                         ::testing::Values(std::pair{SkipMode::Concat, UnpoolMode::Switches},
                                           std::pair{SkipMode::Add, UnpoolMode::Switches},
                                           std::pair{SkipMode::Concat, UnpoolMode::Nearest}));

TEST(ReceptiveField, SingleScaleIs37)
{
  auto rows = receptive_field(NetworkSpec::single_scale(64, 64));
  EXPECT_EQ(rows.back().rf_h, 37);
  EXPECT_EQ(rows.back().rf_w, 37);
  auto paper = receptive_field(NetworkSpec::single_scale(256, 64));
  EXPECT_EQ(paper.back().rf_h, 37);
}

TEST(ReceptiveField, SingleConvIsThree)
{
  std::vector<LayerInfo> plan{{OpKind::Conv3, "c", {1, 1, 8, 8}, 0}};
  auto rows = receptive_field(plan, 8, 8);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].rf_h, 3);
}

TEST(ReceptiveField, PaperScaleCoversInput)
{
  auto spec = NetworkSpec::paper_scale();
  auto rows = receptive_field(spec);
  EXPECT_GE(rows.back().rf, 256.0);
  EXPECT_EQ(rows.back().rf_h, 256);
  double prev = 0.0;
  for (auto const &r : rows) {
    EXPECT_GE(r.rf, prev) << r.name;
    prev = r.rf;
  }
}

TEST(Train, ZeroLearningRateLeavesParameters)
{
  auto spec = make_spec(2, 8, 2);
  Network<double> net(spec, 3);
  Network<double> ref(spec, 3);
  std::mt19937_64 rng(4);
  std::vector<TrainSample> data;
  for (int i = 0; i < 3; i++) {
    data.push_back({RealArray::Random(8, 8), RealArray::Random(8, 8)});
  }
  SgdState<double> state;
  TrainOptions opts;
  opts.batch_size = 3;
  double const loss = train_epoch(net, std::span<TrainSample const>(data), state, 0.0, 1, opts);

  auto pa = net.parameters();
  auto pb = ref.parameters();
  for (std::size_t k = 0; k < pa.size(); k++) {
    EXPECT_EQ(rel_error(*pa[k].value, *pb[k].value), 0.0) << pa[k].name;
  }
  // One mini-batch holding the whole set: the epoch loss is the train-mode loss of that batch.
  std::vector<RealArray const *> in;
  std::vector<RealArray const *> tg;
  for (std::size_t i = 0; i < data.size(); i++) {
    in.push_back(&data[i].input);
    tg.push_back(&data[i].target);
  }
  double const direct = mse_loss(ref.forward(stack_images<double>(in), BNMode::Train), stack_images<double>(tg)).loss;
  EXPECT_NEAR(loss, direct, 1e-12);
  EXPECT_THROW(train_epoch(net, std::span<TrainSample const>(), state, 0.1, 1, opts), std::invalid_argument);
}

TEST(Train, SingleSampleLossDecreases)
{
  auto spec = make_spec(2, 8, 2);
  Network<double> net(spec, 6);
  std::vector<TrainSample> data{{RealArray::Random(8, 8), RealArray::Random(8, 8) * 0.5}};
  // Batch statistics need two values per channel, which one 8x8 image has at every scale.
  SgdState<double> state;
  std::vector<double> losses;
  for (int e = 0; e < 50; e++) {
    losses.push_back(train_epoch(net, std::span<TrainSample const>(data), state, 1e-3,
                                 static_cast<std::uint64_t>(e)));
  }
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Train, Deterministic)
{
  auto run = [] {
    auto spec = make_spec(2, 8, 2);
    Network<double> net(spec, 8);
    std::mt19937_64 rng(2);
    std::vector<TrainSample> data;
    for (int i = 0; i < 7; i++) {
      auto x = random_tensor({1, 1, 8, 8}, rng);
      auto y = random_tensor({1, 1, 8, 8}, rng);
      data.push_back({unstack_image(x, 0), unstack_image(y, 0)});
    }
    SgdState<double> state;
    for (int e = 0; e < 3; e++) {
      train_epoch(net, std::span<TrainSample const>(data), state, 1e-2, static_cast<std::uint64_t>(e));
    }
    std::vector<double> flat;
    for (auto const &p : net.parameters()) {
      flat.insert(flat.end(), p.value->values().begin(), p.value->values().end());
    }
    return flat;
  };
  EXPECT_EQ(run(), run());
}
