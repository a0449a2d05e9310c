#include "csmri/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace csmri {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MapMat = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMapMat = Eigen::Map<RowMat<Real> const>;

// Reductions in double over eight interleaved partial sums, which vectorizes and keeps a fixed order.
template <typename Real, typename F>
double lane_sum(std::size_t n, F term)
{
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; l++) {
      acc[l] += term(i + l);
    }
  }
  double s = 0.0;
  for (; i < n; i++) {
    s += term(i);
  }
  for (double v : acc) {
    s += v;
  }
  return s;
}

template <typename Real>
double plane_sum(Real const *x, std::size_t n)
{
  return lane_sum<Real>(n, [x](std::size_t i) { return static_cast<double>(x[i]); });
}

template <typename Real>
double plane_centered_sq(Real const *x, std::size_t n, double mean)
{
  return lane_sum<Real>(n, [x, mean](std::size_t i) {
    double const d = x[i] - mean;
    return d * d;
  });
}

template <typename Real>
double plane_dot(Real const *a, Real const *b, std::size_t n)
{
  return lane_sum<Real>(n, [a, b](std::size_t i) { return static_cast<double>(a[i]) * b[i]; });
}

void check_kernel(int kh, int kw)
{
  if (!((kh == 1 && kw == 1) || (kh == 3 && kw == 3))) {
    throw std::invalid_argument("conv2d: only 1x1 and 3x3 kernels are supported");
  }
}

// Unfolds rows [y0, y1) of a (C, H, W) sample into (C * 9, (y1 - y0) * W) columns with zero padding 1.
template <typename Real>
void im2col3(Real const *x, int C, int H, int W, int y0, int y1, Real *cols)
{
  std::size_t const HW = static_cast<std::size_t>(H) * W;
  std::size_t const span = static_cast<std::size_t>(y1 - y0) * W;
  for (int c = 0; c < C; c++) {
    Real const *src = x + c * HW;
    for (int ky = 0; ky < 3; ky++) {
      for (int kx = 0; kx < 3; kx++) {
        Real *dst = cols + ((c * 3 + ky) * 3 + kx) * span;
        int const dy = ky - 1;
        int const dx = kx - 1;
        for (int y = y0; y < y1; y++) {
          Real *row = dst + static_cast<std::size_t>(y - y0) * W;
          int const sy = y + dy;
          if (sy < 0 || sy >= H) {
            std::fill(row, row + W, Real(0));
            continue;
          }
          Real const *srow = src + static_cast<std::size_t>(sy) * W;
          if (dx < 0) {
            row[0] = Real(0);
            std::copy(srow, srow + W - 1, row + 1);
          } else if (dx > 0) {
            std::copy(srow + 1, srow + W, row);
            row[W - 1] = Real(0);
          } else {
            std::copy(srow, srow + W, row);
          }
        }
      }
    }
  }
}

// Adjoint of im2col3 over the same rows: scatters columns back, accumulating into dx.
template <typename Real>
void col2im3(Real const *cols, int C, int H, int W, int y0, int y1, Real *dx)
{
  std::size_t const HW = static_cast<std::size_t>(H) * W;
  std::size_t const span = static_cast<std::size_t>(y1 - y0) * W;
  for (int c = 0; c < C; c++) {
    Real *dst = dx + c * HW;
    for (int ky = 0; ky < 3; ky++) {
      for (int kx = 0; kx < 3; kx++) {
        Real const *src = cols + ((c * 3 + ky) * 3 + kx) * span;
        int const dy = ky - 1;
        int const dxo = kx - 1;
        for (int y = y0; y < y1; y++) {
          int const sy = y + dy;
          if (sy < 0 || sy >= H) {
            continue;
          }
          Real const *row = src + static_cast<std::size_t>(y - y0) * W;
          Real *drow = dst + static_cast<std::size_t>(sy) * W;
          int const x0 = std::max(0, -dxo);
          int const x1 = std::min(W, W - dxo);
          for (int x = x0; x < x1; x++) {
            drow[x + dxo] += row[x];
          }
        }
      }
    }
  }
}

// Rows per im2col block, sized so one block of columns stays in cache.
int block_rows(int K, int H, int W)
{
  constexpr std::size_t kBlockElements = std::size_t{1} << 16;
  std::size_t const rows = kBlockElements / (static_cast<std::size_t>(K) * W);
  return static_cast<int>(std::clamp<std::size_t>(rows, 1, static_cast<std::size_t>(H)));
}

template <typename Real>
void check_conv_input(BasicTensor<Real> const &x, ConvParams<Real> const &p)
{
  check_kernel(p.kernel_h(), p.kernel_w());
  if (x.shape().c != p.in_channels()) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.shape().c) + " channels, kernel expects " +
                                std::to_string(p.in_channels()));
  }
  if (x.shape().h < p.kernel_h() || x.shape().w < p.kernel_w()) {
    throw std::invalid_argument("conv2d: spatial size smaller than kernel");
  }
  if (p.bias.size() != static_cast<std::size_t>(p.out_channels())) {
    throw std::invalid_argument("conv2d: bias length does not match output channels");
  }
}

void check_same_shape(Shape const &a, Shape const &b, char const *op)
{
  if (!(a == b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

} // namespace

template <typename Real>
BasicTensor<Real> conv2d(BasicTensor<Real> const &x, ConvParams<Real> const &p)
{
  check_conv_input(x, p);
  auto const [N, C, H, W] = x.shape();
  int const O = p.out_channels();
  int const K = C * p.kernel_h() * p.kernel_w();
  int const HW = H * W;
  BasicTensor<Real> y({N, O, H, W});
  ConstMapMat<Real> const wmat(p.weight.data(), O, K);
  bool const pointwise = p.kernel_h() == 1;
  int const rows = block_rows(K, H, W);
  RowMat<Real> cols;
  for (int n = 0; n < N; n++) {
    MapMat<Real> out(y.sample(n), O, HW);
    if (pointwise) {
      out.noalias() = wmat * ConstMapMat<Real>(x.sample(n), K, HW);
    } else {
      for (int y0 = 0; y0 < H; y0 += rows) {
        int const y1 = std::min(H, y0 + rows);
        cols.resize(K, (y1 - y0) * W);
        im2col3(x.sample(n), C, H, W, y0, y1, cols.data());
        out.middleCols(y0 * W, (y1 - y0) * W).noalias() = wmat * cols;
      }
    }
    for (int o = 0; o < O; o++) {
      out.row(o).array() += p.bias[o];
    }
  }
  debug_check_finite(y, "conv2d");
  return y;
}

template <typename Real>
ConvGrads<Real> conv2d_backward(BasicTensor<Real> const &x, ConvParams<Real> const &p, BasicTensor<Real> const &dy)
{
  check_conv_input(x, p);
  auto const [N, C, H, W] = x.shape();
  int const O = p.out_channels();
  int const K = C * p.kernel_h() * p.kernel_w();
  int const HW = H * W;
  check_same_shape(dy.shape(), Shape{N, O, H, W}, "conv2d_backward");

  ConvGrads<Real> g{BasicTensor<Real>(x.shape()), BasicTensor<Real>(p.weight.shape()), BasicTensor<Real>(p.bias.shape())};
  ConstMapMat<Real> const wmat(p.weight.data(), O, K);
  MapMat<Real> dw(g.dweight.data(), O, K);
  bool const pointwise = p.kernel_h() == 1;
  int const rows = block_rows(K, H, W);
  RowMat<Real> cols;
  RowMat<Real> dcols;
  std::vector<double> dbias(O, 0.0);
  for (int n = 0; n < N; n++) {
    ConstMapMat<Real> const g_out(dy.sample(n), O, HW);
    if (pointwise) {
      dw.noalias() += g_out * ConstMapMat<Real>(x.sample(n), K, HW).transpose();
      MapMat<Real>(g.dx.sample(n), K, HW).noalias() = wmat.transpose() * g_out;
    } else {
      for (int y0 = 0; y0 < H; y0 += rows) {
        int const y1 = std::min(H, y0 + rows);
        int const span = (y1 - y0) * W;
        cols.resize(K, span);
        im2col3(x.sample(n), C, H, W, y0, y1, cols.data());
        auto const g_blk = g_out.middleCols(y0 * W, span);
        dw.noalias() += g_blk * cols.transpose();
        dcols.noalias() = wmat.transpose() * g_blk;
        col2im3(dcols.data(), C, H, W, y0, y1, g.dx.sample(n));
      }
    }
    for (int o = 0; o < O; o++) {
      dbias[o] += plane_sum(dy.sample(n) + static_cast<std::size_t>(o) * HW, static_cast<std::size_t>(HW));
    }
  }
  for (int o = 0; o < O; o++) {
    g.dbias[o] = static_cast<Real>(dbias[o]);
  }
  return g;
}

template <typename Real>
ConvParams<Real> xavier_init(int k1, int k2, int n_in, int n_out, std::uint64_t seed)
{
  check_kernel(k1, k2);
  if (n_in < 1 || n_out < 1) {
    throw std::invalid_argument("xavier_init: channel counts must be positive");
  }
  double const fan_in = static_cast<double>(k1) * k2 * n_in;
  double const fan_out = static_cast<double>(k1) * k2 * n_out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (fan_in + fan_out)));
  ConvParams<Real> p{BasicTensor<Real>({n_out, n_in, k1, k2}), BasicTensor<Real>({1, n_out, 1, 1})};
  for (auto &v : p.weight.values()) {
    v = static_cast<Real>(normal(rng));
  }
  return p;
}

template <typename Real>
BNParams<Real> BNParams<Real>::identity(int channels)
{
  Shape const s{1, channels, 1, 1};
  return BNParams{BasicTensor<Real>(s, Real(1)), BasicTensor<Real>(s, Real(0)), BasicTensor<Real>(s, Real(0)),
                  BasicTensor<Real>(s, Real(1))};
}

template <typename Real>
BasicTensor<Real> batch_norm(BasicTensor<Real> const &x, BNParams<Real> &p, BNMode mode, BNCache<Real> *cache)
{
  auto const [N, C, H, W] = x.shape();
  if (C != p.channels()) {
    throw std::invalid_argument("batch_norm: channel count does not match parameters");
  }
  std::size_t const HW = x.shape().plane();
  double const m = static_cast<double>(N) * static_cast<double>(HW);
  BasicTensor<Real> y(x.shape());

  if (mode == BNMode::Infer) {
    for (int c = 0; c < C; c++) {
      double const inv = 1.0 / std::sqrt(static_cast<double>(p.running_var[c]) + p.epsilon);
      double const scale = p.gamma[c] * inv;
      double const shift = p.beta[c] - scale * p.running_mean[c];
      for (int n = 0; n < N; n++) {
        Real const *src = x.plane(n, c);
        Real *dst = y.plane(n, c);
        for (std::size_t i = 0; i < HW; i++) {
          dst[i] = static_cast<Real>(scale * src[i] + shift);
        }
      }
    }
    debug_check_finite(y, "batch_norm");
    return y;
  }

  if (m < 2.0) {
    throw std::invalid_argument("batch_norm: train mode needs at least two values per channel");
  }
  BNCache<Real> local;
  BNCache<Real> &cc = cache ? *cache : local;
  cc.xhat = BasicTensor<Real>(x.shape());
  cc.inv_std.assign(C, 0.0);
  for (int c = 0; c < C; c++) {
    double sum = 0.0;
    for (int n = 0; n < N; n++) {
      sum += plane_sum(x.plane(n, c), HW);
    }
    double const mean = sum / m;
    double sq = 0.0;
    for (int n = 0; n < N; n++) {
      sq += plane_centered_sq(x.plane(n, c), HW, mean);
    }
    double const var = sq / m;
    double const inv = 1.0 / std::sqrt(var + p.epsilon);
    cc.inv_std[c] = inv;
    double const g = p.gamma[c];
    double const b = p.beta[c];
    for (int n = 0; n < N; n++) {
      Real const *src = x.plane(n, c);
      Real *xh = cc.xhat.plane(n, c);
      Real *dst = y.plane(n, c);
      for (std::size_t i = 0; i < HW; i++) {
        double const v = (src[i] - mean) * inv;
        xh[i] = static_cast<Real>(v);
        dst[i] = static_cast<Real>(g * v + b);
      }
    }
    p.running_mean[c] = static_cast<Real>((1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean);
    p.running_var[c] = static_cast<Real>((1.0 - p.momentum) * p.running_var[c] + p.momentum * var * m / (m - 1.0));
  }
  debug_check_finite(y, "batch_norm");
  return y;
}

template <typename Real>
BNGrads<Real> batch_norm_backward(BasicTensor<Real> const &dy, BNParams<Real> const &p, BNCache<Real> const &cache)
{
  check_same_shape(dy.shape(), cache.xhat.shape(), "batch_norm_backward");
  auto const [N, C, H, W] = dy.shape();
  std::size_t const HW = dy.shape().plane();
  double const m = static_cast<double>(N) * static_cast<double>(HW);
  BNGrads<Real> g{BasicTensor<Real>(dy.shape()), BasicTensor<Real>(p.gamma.shape()), BasicTensor<Real>(p.beta.shape())};
  for (int c = 0; c < C; c++) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < N; n++) {
      sum_dy += plane_sum(dy.plane(n, c), HW);
      sum_dy_xhat += plane_dot(dy.plane(n, c), cache.xhat.plane(n, c), HW);
    }
    g.dgamma[c] = static_cast<Real>(sum_dy_xhat);
    g.dbeta[c] = static_cast<Real>(sum_dy);
    double const k = p.gamma[c] * cache.inv_std[c] / m;
    for (int n = 0; n < N; n++) {
      Real const *d = dy.plane(n, c);
      Real const *xh = cache.xhat.plane(n, c);
      Real *dx = g.dx.plane(n, c);
      for (std::size_t i = 0; i < HW; i++) {
        dx[i] = static_cast<Real>(k * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat));
      }
    }
  }
  return g;
}

template <typename Real>
BasicTensor<Real> relu(BasicTensor<Real> const &x)
{
  BasicTensor<Real> y(x.shape());
  auto const src = x.values();
  auto dst = y.values();
  for (std::size_t i = 0; i < src.size(); i++) {
    dst[i] = src[i] > Real(0) ? src[i] : Real(0);
  }
  return y;
}

template <typename Real>
BasicTensor<Real> relu_backward(BasicTensor<Real> const &x, BasicTensor<Real> const &dy)
{
  check_same_shape(x.shape(), dy.shape(), "relu_backward");
  BasicTensor<Real> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); i++) {
    dx[i] = x[i] > Real(0) ? dy[i] : Real(0);
  }
  return dx;
}

template <typename Real>
std::pair<BasicTensor<Real>, PoolSwitches> max_pool_2x2(BasicTensor<Real> const &x)
{
  auto const [N, C, H, W] = x.shape();
  if (H % 2 != 0 || W % 2 != 0) {
    throw std::invalid_argument("max_pool_2x2: spatial dims must be even, got " + x.shape().str());
  }
  Shape const ps{N, C, H / 2, W / 2};
  BasicTensor<Real> y(ps);
  PoolSwitches sw{ps, std::vector<std::uint8_t>(ps.count())};
  std::size_t k = 0;
  for (int n = 0; n < N; n++) {
    for (int c = 0; c < C; c++) {
      for (int i = 0; i < ps.h; i++) {
        for (int j = 0; j < ps.w; j++, k++) {
          Real best = x(n, c, 2 * i, 2 * j);
          std::uint8_t arg = 0;
          for (std::uint8_t q = 1; q < 4; q++) {
            Real const v = x(n, c, 2 * i + q / 2, 2 * j + q % 2);
            if (v > best) {
              best = v;
              arg = q;
            }
          }
          y[k] = best;
          sw.index[k] = arg;
        }
      }
    }
  }
  return {std::move(y), std::move(sw)};
}

template <typename Real>
BasicTensor<Real> max_pool_2x2_backward(BasicTensor<Real> const &dy, PoolSwitches const &sw)
{
  check_same_shape(dy.shape(), sw.pooled, "max_pool_2x2_backward");
  return unpool_2x2(dy, sw);
}

template <typename Real>
BasicTensor<Real> unpool_2x2(BasicTensor<Real> const &x, PoolSwitches const &sw)
{
  if (!(x.shape() == sw.pooled) || sw.index.size() != sw.pooled.count()) {
    throw std::invalid_argument("unpool_2x2: switches recorded for " + sw.pooled.str() + " but input is " +
                                x.shape().str());
  }
  BasicTensor<Real> y(sw.source());
  auto const [N, C, h, w] = sw.pooled;
  std::size_t k = 0;
  for (int n = 0; n < N; n++) {
    for (int c = 0; c < C; c++) {
      for (int i = 0; i < h; i++) {
        for (int j = 0; j < w; j++, k++) {
          std::uint8_t const q = sw.index[k];
          if (q > 3) {
            throw std::invalid_argument("unpool_2x2: switch index out of range");
          }
          y(n, c, 2 * i + q / 2, 2 * j + q % 2) = x[k];
        }
      }
    }
  }
  return y;
}

template <typename Real>
BasicTensor<Real> unpool_2x2_backward(BasicTensor<Real> const &dy, PoolSwitches const &sw)
{
  check_same_shape(dy.shape(), sw.source(), "unpool_2x2_backward");
  BasicTensor<Real> dx(sw.pooled);
  auto const [N, C, h, w] = sw.pooled;
  std::size_t k = 0;
  for (int n = 0; n < N; n++) {
    for (int c = 0; c < C; c++) {
      for (int i = 0; i < h; i++) {
        for (int j = 0; j < w; j++, k++) {
          std::uint8_t const q = sw.index[k];
          dx[k] = dy(n, c, 2 * i + q / 2, 2 * j + q % 2);
        }
      }
    }
  }
  return dx;
}

template <typename Real>
BasicTensor<Real> upsample_nearest_2x(BasicTensor<Real> const &x)
{
  auto const [N, C, h, w] = x.shape();
  BasicTensor<Real> y({N, C, 2 * h, 2 * w});
  for (int n = 0; n < N; n++) {
    for (int c = 0; c < C; c++) {
      for (int i = 0; i < 2 * h; i++) {
        for (int j = 0; j < 2 * w; j++) {
          y(n, c, i, j) = x(n, c, i / 2, j / 2);
        }
      }
    }
  }
  return y;
}

template <typename Real>
BasicTensor<Real> upsample_nearest_2x_backward(BasicTensor<Real> const &dy)
{
  auto const [N, C, H, W] = dy.shape();
  if (H % 2 != 0 || W % 2 != 0) {
    throw std::invalid_argument("upsample_nearest_2x_backward: odd gradient shape");
  }
  BasicTensor<Real> dx({N, C, H / 2, W / 2});
  for (int n = 0; n < N; n++) {
    for (int c = 0; c < C; c++) {
      for (int i = 0; i < H; i++) {
        for (int j = 0; j < W; j++) {
          dx(n, c, i / 2, j / 2) += dy(n, c, i, j);
        }
      }
    }
  }
  return dx;
}

template <typename Real>
BasicTensor<Real> concat_channels(BasicTensor<Real> const &a, BasicTensor<Real> const &b)
{
  Shape const sa = a.shape();
  Shape const sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument("concat_channels: incompatible shapes " + sa.str() + " and " + sb.str());
  }
  BasicTensor<Real> y({sa.n, sa.c + sb.c, sa.h, sa.w});
  std::size_t const na = static_cast<std::size_t>(sa.c) * sa.plane();
  std::size_t const nb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < sa.n; n++) {
    std::copy_n(a.sample(n), na, y.sample(n));
    std::copy_n(b.sample(n), nb, y.sample(n) + na);
  }
  return y;
}

template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> concat_channels_backward(BasicTensor<Real> const &dy, int a_channels)
{
  Shape const s = dy.shape();
  if (a_channels < 0 || a_channels > s.c) {
    throw std::invalid_argument("concat_channels_backward: split point outside channel range");
  }
  BasicTensor<Real> da({s.n, a_channels, s.h, s.w});
  BasicTensor<Real> db({s.n, s.c - a_channels, s.h, s.w});
  std::size_t const na = static_cast<std::size_t>(a_channels) * s.plane();
  std::size_t const nb = static_cast<std::size_t>(s.c - a_channels) * s.plane();
  for (int n = 0; n < s.n; n++) {
    std::copy_n(dy.sample(n), na, da.sample(n));
    std::copy_n(dy.sample(n) + na, nb, db.sample(n));
  }
  return {std::move(da), std::move(db)};
}

template <typename Real>
BasicTensor<Real> add(BasicTensor<Real> const &a, BasicTensor<Real> const &b)
{
  check_same_shape(a.shape(), b.shape(), "add");
  BasicTensor<Real> y(a.shape());
  for (std::size_t i = 0; i < a.size(); i++) {
    y[i] = a[i] + b[i];
  }
  return y;
}

#define CSMRI_INSTANTIATE_LAYERS(R)                                                                                    \
  template BasicTensor<R> conv2d(BasicTensor<R> const &, ConvParams<R> const &);                                       \
  template ConvGrads<R> conv2d_backward(BasicTensor<R> const &, ConvParams<R> const &, BasicTensor<R> const &);        \
  template ConvParams<R> xavier_init<R>(int, int, int, int, std::uint64_t);                                            \
  template struct BNParams<R>;                                                                                         \
  template BasicTensor<R> batch_norm(BasicTensor<R> const &, BNParams<R> &, BNMode, BNCache<R> *);                     \
  template BNGrads<R> batch_norm_backward(BasicTensor<R> const &, BNParams<R> const &, BNCache<R> const &);            \
  template BasicTensor<R> relu(BasicTensor<R> const &);                                                                \
  template BasicTensor<R> relu_backward(BasicTensor<R> const &, BasicTensor<R> const &);                               \
  template std::pair<BasicTensor<R>, PoolSwitches> max_pool_2x2(BasicTensor<R> const &);                               \
  template BasicTensor<R> max_pool_2x2_backward(BasicTensor<R> const &, PoolSwitches const &);                         \
  template BasicTensor<R> unpool_2x2(BasicTensor<R> const &, PoolSwitches const &);                                    \
  template BasicTensor<R> unpool_2x2_backward(BasicTensor<R> const &, PoolSwitches const &);                           \
  template BasicTensor<R> upsample_nearest_2x(BasicTensor<R> const &);                                                 \
  template BasicTensor<R> upsample_nearest_2x_backward(BasicTensor<R> const &);                                        \
  template BasicTensor<R> concat_channels(BasicTensor<R> const &, BasicTensor<R> const &);                             \
  template std::pair<BasicTensor<R>, BasicTensor<R>> concat_channels_backward(BasicTensor<R> const &, int);            \
  template BasicTensor<R> add(BasicTensor<R> const &, BasicTensor<R> const &);

CSMRI_INSTANTIATE_LAYERS(float)
CSMRI_INSTANTIATE_LAYERS(double)

} // namespace csmri
