#include "csmri/unet.hpp"

#include "csmri/keyvalue.hpp"

#include <stdexcept>

namespace csmri {

void NetworkSpec::validate() const
{
  if (mode == NetworkMode::MultiScale && n_scales < 1) {
    throw std::invalid_argument("network spec: n_scales must be >= 1");
  }
  if (layers_per_stage < 1 || base_channels < 1) {
    throw std::invalid_argument("network spec: layers_per_stage and base_channels must be >= 1");
  }
  if (final_kernel != 1) {
    throw std::invalid_argument("network spec: final_kernel must be 1");
  }
  int const div = 1 << (effective_scales() - 1);
  if (input_h < 1 || input_w < 1 || input_h % div != 0 || input_w % div != 0) {
    throw std::invalid_argument("network spec: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                                " is not divisible by " + std::to_string(div));
  }
}

NetworkSpec NetworkSpec::paper_scale()
{
  NetworkSpec s;
  s.n_scales = 5;
  s.layers_per_stage = 4;
  s.base_channels = 64;
  s.input_h = s.input_w = 256;
  return s;
}

NetworkSpec NetworkSpec::desk_scale() { return NetworkSpec{}; }

NetworkSpec NetworkSpec::single_scale(int size, int width)
{
  NetworkSpec s;
  s.mode = NetworkMode::SingleScale;
  s.n_scales = 1;
  s.base_channels = width;
  s.input_h = s.input_w = size;
  return s;
}

NetworkSpec parse_network_spec(std::string const &text)
{
  NetworkSpec s;
  for (auto const &[k, v] : parse_key_values(text)) {
    if (k == "n_scales") {
      s.n_scales = parse_int(k, v);
    } else if (k == "layers_per_stage") {
      s.layers_per_stage = parse_int(k, v);
    } else if (k == "base_channels") {
      s.base_channels = parse_int(k, v);
    } else if (k == "input_h") {
      s.input_h = parse_int(k, v);
    } else if (k == "input_w") {
      s.input_w = parse_int(k, v);
    } else if (k == "final_kernel") {
      s.final_kernel = parse_int(k, v);
    } else if (k == "mode") {
      if (v == "multi_scale") {
        s.mode = NetworkMode::MultiScale;
      } else if (v == "single_scale") {
        s.mode = NetworkMode::SingleScale;
      } else {
        throw std::invalid_argument("network spec: unknown mode '" + v + "'");
      }
    } else if (k == "skip") {
      if (v == "concat") {
        s.skip = SkipMode::Concat;
      } else if (v == "add") {
        s.skip = SkipMode::Add;
      } else {
        throw std::invalid_argument("network spec: unknown skip '" + v + "'");
      }
    } else if (k == "unpool") {
      if (v == "switches") {
        s.unpool = UnpoolMode::Switches;
      } else if (v == "nearest") {
        s.unpool = UnpoolMode::Nearest;
      } else {
        throw std::invalid_argument("network spec: unknown unpool '" + v + "'");
      }
    } else {
      throw std::invalid_argument("network spec: unknown key '" + k + "'");
    }
  }
  s.validate();
  return s;
}

std::string format_network_spec(NetworkSpec const &s)
{
  KeyValues kv{{"n_scales", std::to_string(s.n_scales)},
               {"layers_per_stage", std::to_string(s.layers_per_stage)},
               {"base_channels", std::to_string(s.base_channels)},
               {"input_h", std::to_string(s.input_h)},
               {"input_w", std::to_string(s.input_w)},
               {"final_kernel", std::to_string(s.final_kernel)},
               {"mode", s.mode == NetworkMode::MultiScale ? "multi_scale" : "single_scale"},
               {"skip", s.skip == SkipMode::Concat ? "concat" : "add"},
               {"unpool", s.unpool == UnpoolMode::Switches ? "switches" : "nearest"}};
  return format_key_values(kv);
}

namespace {

struct StageLayout
{
  std::string name;
  StageRole role;
  int scale;
  int in_channels;
  int width;
  int out_width; // output of the last block
  int blocks;
};

std::vector<StageLayout> stage_layout(NetworkSpec const &spec)
{
  spec.validate();
  int const S = spec.effective_scales();
  int const L = spec.effective_layers_per_stage();
  std::vector<StageLayout> out;
  int in = 1;
  for (int s = 0; s + 1 < S; s++) {
    out.push_back({"enc" + std::to_string(s), StageRole::Encoder, s, in, spec.width(s), spec.width(s), L});
    in = spec.width(s);
  }
  // A stage that feeds an unpooling layer ends at the next finer width, so the upsampled
  // tensor matches the channel count the pooling switches were recorded on.
  auto const feed_width = [&](int scale) { return scale > 0 ? spec.width(scale - 1) : spec.width(0); };
  out.push_back({"bottom", StageRole::Bottom, S - 1, in, spec.width(S - 1), feed_width(S - 1), L});
  for (int s = S - 2; s >= 0; s--) {
    int const up = spec.width(s);
    int const dec_in = spec.skip == SkipMode::Concat ? up + spec.width(s) : up;
    out.push_back({"dec" + std::to_string(s), StageRole::Decoder, s, dec_in, spec.width(s), feed_width(s), L});
  }
  out.push_back({"term", StageRole::Terminal, 0, spec.width(0), spec.width(0), spec.width(0),
                 NetworkSpec::kTerminalBlocks});
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k)
{
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace

std::vector<LayerInfo> layer_plan(NetworkSpec const &spec)
{
  auto const layout = stage_layout(spec);
  std::vector<LayerInfo> plan;
  int h = spec.input_h;
  int w = spec.input_w;
  for (auto const &st : layout) {
    if (st.role == StageRole::Decoder) {
      h *= 2;
      w *= 2;
      int const up = spec.width(st.scale);
      plan.push_back({OpKind::Unpool, "unpool" + std::to_string(st.scale), {1, up, h, w}, st.scale});
      if (spec.skip == SkipMode::Concat) {
        plan.push_back({OpKind::Concat, "concat" + std::to_string(st.scale), {1, st.in_channels, h, w}, st.scale});
      } else {
        plan.push_back({OpKind::Add, "add" + std::to_string(st.scale), {1, up, h, w}, st.scale});
      }
    }
    for (int b = 0; b < st.blocks; b++) {
      int const c = b + 1 == st.blocks ? st.out_width : st.width;
      plan.push_back({OpKind::Conv3, st.name + ".b" + std::to_string(b), {1, c, h, w}, st.scale});
    }
    if (st.role == StageRole::Encoder) {
      h /= 2;
      w /= 2;
      plan.push_back({OpKind::Pool, "pool" + std::to_string(st.scale), {1, st.width, h, w}, st.scale + 1});
    }
  }
  plan.push_back({OpKind::Conv1, "head", {1, 1, h, w}, 0});
  return plan;
}

std::vector<RFRow> receptive_field(NetworkSpec const &spec)
{
  return receptive_field(layer_plan(spec), spec.input_h, spec.input_w);
}

std::vector<RFRow> receptive_field(std::span<LayerInfo const> plan, int input_h, int input_w)
{
  std::vector<RFRow> rows;
  double rf = 1.0;
  double jump = 1.0;
  int i = 0;
  for (auto const &op : plan) {
    switch (op.kind) {
    case OpKind::Conv3:
      rf += 2.0 * jump;
      break;
    case OpKind::Conv1:
      break;
    case OpKind::Pool:
      rf += jump;
      jump *= 2.0;
      break;
    case OpKind::Unpool:
      jump /= 2.0;
      break;
    case OpKind::Concat:
    case OpKind::Add:
      break;
    }
    int const r = static_cast<int>(rf);
    rows.push_back({i++, op.name, rf, jump, std::min(r, input_h), std::min(r, input_w)});
  }
  return rows;
}

template <typename Real>
Network<Real>::Network(NetworkSpec const &spec, std::uint64_t seed)
  : spec_(spec)
{
  std::uint64_t k = 0;
  int stage_index = 0;
  std::vector<int> encoder_index(spec.effective_scales(), -1);
  for (auto const &st : stage_layout(spec)) {
    Stage<Real> stage{st.name, st.role, st.scale, {}};
    int in = st.in_channels;
    for (int b = 0; b < st.blocks; b++) {
      int const out = b + 1 == st.blocks ? st.out_width : st.width;
      ConvBlock<Real> blk;
      blk.conv = xavier_init<Real>(3, 3, in, out, mix_seed(seed, k++));
      blk.bn = BNParams<Real>::identity(out);
      stage.blocks.push_back(std::move(blk));
      in = out;
    }
    if (st.role == StageRole::Encoder) {
      encoder_index[st.scale] = stage_index;
    }
    if (st.role == StageRole::Decoder) {
      paths_.push_back({encoder_index[st.scale], stage_index, st.scale});
    }
    stages_.push_back(std::move(stage));
    stage_index++;
  }
  head_ = xavier_init<Real>(1, 1, spec.width(0), 1, mix_seed(seed, k++));
  zero_grad();
}

template <typename Real>
void Network<Real>::zero_grad()
{
  for (auto &st : stages_) {
    for (auto &b : st.blocks) {
      b.conv_grad = {BasicTensor<Real>(b.conv.weight.shape()), BasicTensor<Real>(b.conv.bias.shape())};
      b.gamma_grad = BasicTensor<Real>(b.bn.gamma.shape());
      b.beta_grad = BasicTensor<Real>(b.bn.beta.shape());
    }
  }
  head_grad_ = {BasicTensor<Real>(head_.weight.shape()), BasicTensor<Real>(head_.bias.shape())};
}

template <typename Real>
BasicTensor<Real> Network<Real>::run_stage(Stage<Real> &stage, BasicTensor<Real> h, BNMode mode,
                                           std::vector<Shape> *trace)
{
  bool const train = mode == BNMode::Train;
  for (auto &b : stage.blocks) {
    BasicTensor<Real> z = conv2d(h, b.conv);
    if (train) {
      b.input = std::move(h);
      b.bn_out = batch_norm(z, b.bn, mode, &b.bn_cache);
      h = relu(b.bn_out);
    } else {
      h = relu(batch_norm(z, b.bn, mode));
    }
    if (trace) {
      trace->push_back(h.shape());
    }
  }
  return h;
}

template <typename Real>
BasicTensor<Real> Network<Real>::back_stage(Stage<Real> &stage, BasicTensor<Real> d)
{
  for (auto it = stage.blocks.rbegin(); it != stage.blocks.rend(); ++it) {
    auto &b = *it;
    d = relu_backward(b.bn_out, d);
    auto bg = batch_norm_backward(d, b.bn, b.bn_cache);
    b.gamma_grad = std::move(bg.dgamma);
    b.beta_grad = std::move(bg.dbeta);
    auto cg = conv2d_backward(b.input, b.conv, bg.dx);
    b.conv_grad.weight = std::move(cg.dweight);
    b.conv_grad.bias = std::move(cg.dbias);
    d = std::move(cg.dx);
  }
  return d;
}

template <typename Real>
BasicTensor<Real> Network<Real>::forward(BasicTensor<Real> const &x, BNMode mode, std::vector<Shape> *trace)
{
  Shape const s = x.shape();
  if (s.n < 1 || s.c != 1 || s.h != spec_.input_h || s.w != spec_.input_w) {
    throw std::invalid_argument("network forward: expected (N,1," + std::to_string(spec_.input_h) + "," +
                                std::to_string(spec_.input_w) + ") input, got " + s.str());
  }
  bool const train = mode == BNMode::Train;
  switches_.clear();
  skip_channels_.clear();
  std::vector<BasicTensor<Real>> skips;
  BasicTensor<Real> h = x;
  for (auto &stage : stages_) {
    switch (stage.role) {
    case StageRole::Encoder: {
      h = run_stage(stage, std::move(h), mode, trace);
      skips.push_back(h);
      auto [pooled, sw] = max_pool_2x2(h);
      h = std::move(pooled);
      switches_.push_back(std::move(sw));
      if (trace) {
        trace->push_back(h.shape());
      }
      break;
    }
    case StageRole::Decoder: {
      int const sc = stage.scale;
      h = spec_.unpool == UnpoolMode::Switches ? unpool_2x2(h, switches_[sc]) : upsample_nearest_2x(h);
      if (trace) {
        trace->push_back(h.shape());
      }
      h = spec_.skip == SkipMode::Concat ? concat_channels(h, skips[sc]) : add(h, skips[sc]);
      if (trace) {
        trace->push_back(h.shape());
      }
      h = run_stage(stage, std::move(h), mode, trace);
      break;
    }
    case StageRole::Bottom:
    case StageRole::Terminal:
      h = run_stage(stage, std::move(h), mode, trace);
      break;
    }
  }
  BasicTensor<Real> y = conv2d(h, head_);
  if (trace) {
    trace->push_back(y.shape());
  }
  if (train) {
    head_input_ = std::move(h);
  }
  have_train_forward_ = train;
  return y;
}

template <typename Real>
BasicTensor<Real> Network<Real>::backward(BasicTensor<Real> const &dy)
{
  if (!have_train_forward_) {
    throw std::logic_error("network backward: no train-mode forward pass to differentiate");
  }
  auto hg = conv2d_backward(head_input_, head_, dy);
  head_grad_.weight = std::move(hg.dweight);
  head_grad_.bias = std::move(hg.dbias);
  BasicTensor<Real> d = std::move(hg.dx);

  std::vector<BasicTensor<Real>> skip_grads(switches_.size());
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
    auto &stage = *it;
    int const sc = stage.scale;
    switch (stage.role) {
    case StageRole::Terminal:
    case StageRole::Bottom:
      d = back_stage(stage, std::move(d));
      break;
    case StageRole::Decoder: {
      d = back_stage(stage, std::move(d));
      if (spec_.skip == SkipMode::Concat) {
        auto [d_up, d_skip] = concat_channels_backward(d, spec_.width(sc));
        skip_grads[sc] = std::move(d_skip);
        d = std::move(d_up);
      } else {
        skip_grads[sc] = d;
      }
      d = spec_.unpool == UnpoolMode::Switches ? unpool_2x2_backward(d, switches_[sc]) : upsample_nearest_2x_backward(d);
      break;
    }
    case StageRole::Encoder:
      d = add(max_pool_2x2_backward(d, switches_[sc]), skip_grads[sc]);
      d = back_stage(stage, std::move(d));
      break;
    }
  }
  return d;
}

template <typename Real>
std::vector<ParamSlot<Real>> Network<Real>::parameters()
{
  std::vector<ParamSlot<Real>> out;
  for (auto &st : stages_) {
    for (std::size_t b = 0; b < st.blocks.size(); b++) {
      auto &blk = st.blocks[b];
      std::string const p = st.name + ".b" + std::to_string(b);
      out.push_back({p + ".conv.weight", &blk.conv.weight, &blk.conv_grad.weight});
      out.push_back({p + ".conv.bias", &blk.conv.bias, &blk.conv_grad.bias});
      out.push_back({p + ".bn.gamma", &blk.bn.gamma, &blk.gamma_grad});
      out.push_back({p + ".bn.beta", &blk.bn.beta, &blk.beta_grad});
    }
  }
  out.push_back({"head.conv.weight", &head_.weight, &head_grad_.weight});
  out.push_back({"head.conv.bias", &head_.bias, &head_grad_.bias});
  return out;
}

template <typename Real>
std::vector<BufferSlot<Real>> Network<Real>::buffers()
{
  std::vector<BufferSlot<Real>> out;
  for (auto &st : stages_) {
    for (std::size_t b = 0; b < st.blocks.size(); b++) {
      auto &blk = st.blocks[b];
      std::string const p = st.name + ".b" + std::to_string(b);
      out.push_back({p + ".bn.running_mean", &blk.bn.running_mean});
      out.push_back({p + ".bn.running_var", &blk.bn.running_var});
    }
  }
  return out;
}

template <typename Real>
std::size_t Network<Real>::parameter_count() const
{
  std::size_t n = head_.weight.size() + head_.bias.size();
  for (auto const &st : stages_) {
    for (auto const &b : st.blocks) {
      n += b.conv.weight.size() + b.conv.bias.size() + b.bn.gamma.size() + b.bn.beta.size();
    }
  }
  return n;
}

template class Network<float>;
template class Network<double>;

} // namespace csmri
