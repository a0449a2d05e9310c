#pragma once

#include "csmri/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace csmri {

enum class NetworkMode
{
  MultiScale,
  SingleScale
};

// How an encoder stage output rejoins the decoder at the same scale.
enum class SkipMode
{
  Concat,
  Add
};

enum class UnpoolMode
{
  Switches,
  Nearest
};

struct NetworkSpec
{
  int n_scales = 3;
  int layers_per_stage = 4;
  int base_channels = 16;
  int input_h = 64;
  int input_w = 64;
  int final_kernel = 1;
  NetworkMode mode = NetworkMode::MultiScale;
  SkipMode skip = SkipMode::Concat;
  UnpoolMode unpool = UnpoolMode::Switches;

  // The single-scale ablation: 16 + 2 sequential 3x3 blocks at base_channels, no pooling.
  static constexpr int kSingleScaleBody = 16;
  static constexpr int kTerminalBlocks = 2;

  int width(int scale) const { return base_channels << scale; }
  int effective_scales() const { return mode == NetworkMode::SingleScale ? 1 : n_scales; }
  int effective_layers_per_stage() const
  {
    return mode == NetworkMode::SingleScale ? kSingleScaleBody : layers_per_stage;
  }

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  // Five scales, four layers per stage, 256 x 256, base width 64.
  static NetworkSpec paper_scale();
  // Three scales, 64 x 64, base width 16.
  static NetworkSpec desk_scale();
  static NetworkSpec single_scale(int size, int width);
};

// key=value text, keys: n_scales layers_per_stage base_channels input_h input_w mode skip unpool.
NetworkSpec parse_network_spec(std::string const &text);
std::string format_network_spec(NetworkSpec const &spec);

enum class StageRole
{
  Encoder,
  Bottom,
  Decoder,
  Terminal
};

struct ContractingPath
{
  int encoder_stage;
  int decoder_stage;
  int scale;
};

enum class OpKind
{
  Conv3,
  Conv1,
  Pool,
  Unpool,
  Concat,
  Add
};

// One entry of the static layer plan: kind, name and declared output shape (batch left as 1).
struct LayerInfo
{
  OpKind kind;
  std::string name;
  Shape output;
  int scale;
};

std::vector<LayerInfo> layer_plan(NetworkSpec const &spec);

template <typename Real>
struct ConvBlock
{
  ConvParams<Real> conv;
  BNParams<Real> bn;

  ConvParams<Real> conv_grad;
  BasicTensor<Real> gamma_grad;
  BasicTensor<Real> beta_grad;

  // Forward caches for backward.
  BasicTensor<Real> input;
  BNCache<Real> bn_cache;
  BasicTensor<Real> bn_out;
};

template <typename Real>
struct Stage
{
  std::string name;
  StageRole role;
  int scale;
  std::vector<ConvBlock<Real>> blocks;
};

template <typename Real>
struct ParamSlot
{
  std::string name;
  BasicTensor<Real> *value;
  BasicTensor<Real> *grad;
};

template <typename Real>
struct BufferSlot
{
  std::string name;
  BasicTensor<Real> *value;
};

template <typename Real>
class Network
{
public:
  Network() = default;
  Network(NetworkSpec const &spec, std::uint64_t seed);

  NetworkSpec const &spec() const { return spec_; }
  std::vector<Stage<Real>> const &stages() const { return stages_; }
  std::vector<ContractingPath> const &paths() const { return paths_; }
  ConvParams<Real> const &head() const { return head_; }
  ConvParams<Real> &head() { return head_; }

  // x is (N, 1, H, W) at the spec's input size. The optional trace receives every op's output shape.
  BasicTensor<Real> forward(BasicTensor<Real> const &x, BNMode mode, std::vector<Shape> *trace = nullptr);

  // Backward through the most recent train-mode forward. Overwrites parameter gradients, returns dL/dx.
  BasicTensor<Real> backward(BasicTensor<Real> const &dy);

  void zero_grad();

  std::vector<ParamSlot<Real>> parameters();
  std::vector<BufferSlot<Real>> buffers();
  std::size_t parameter_count() const;

private:
  BasicTensor<Real> run_stage(Stage<Real> &stage, BasicTensor<Real> h, BNMode mode, std::vector<Shape> *trace);
  BasicTensor<Real> back_stage(Stage<Real> &stage, BasicTensor<Real> dy);

  NetworkSpec spec_;
  std::vector<Stage<Real>> stages_;
  std::vector<ContractingPath> paths_;
  ConvParams<Real> head_;
  ConvParams<Real> head_grad_;

  BasicTensor<Real> head_input_;
  std::vector<PoolSwitches> switches_;
  std::vector<int> skip_channels_;
  bool have_train_forward_ = false;
};

template <typename Real>
Network<Real> build_network(NetworkSpec const &spec, std::uint64_t seed)
{
  return Network<Real>(spec, seed);
}

struct RFRow
{
  int index;
  std::string name;
  double rf;
  double jump;
  int rf_h;
  int rf_w;
};

// Receptive field along the encoder-decoder path: rf += (k - 1) * jump, jump *= stride,
// unpooling halves the jump. rf_h / rf_w are clipped to the input size.
std::vector<RFRow> receptive_field(NetworkSpec const &spec);
std::vector<RFRow> receptive_field(std::span<LayerInfo const> plan, int input_h, int input_w);

} // namespace csmri
