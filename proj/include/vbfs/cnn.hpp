#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vbfs/common.hpp"
#include "vbfs/core_data.hpp"
#include "vbfs/param_store.hpp"

namespace vbfs {

enum class Mode { train, eval };

struct CnnConfig {
  int input_size = 32;
  int in_channels = 3;
  std::vector<int> conv_widths{8, 16, 32};
  std::vector<int> fc_widths{64, 64};  // the last one is the feature layer
  int outputs = static_cast<int>(kForceDim);
  double dropout = 0.5;
};

namespace detail {

// 3x3 convolution, stride 1, zero padding 1. Tensors are CHW.
inline void conv3x3_forward(std::span<const double> in, int channels, int size, std::span<const double> w,
                            std::span<const double> b, int out_channels, std::span<double> out) {
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int o = 0; o < out_channels; ++o) {
    double* op = out.data() + o * plane;
    std::fill(op, op + plane, b[o]);
    for (int c = 0; c < channels; ++c) {
      const double* ip = in.data() + c * plane;
      const double* wk = w.data() + (static_cast<std::size_t>(o) * channels + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int y_lo = std::max(0, 1 - ky), y_hi = std::min(size, size + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wk[ky * 3 + kx];
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(size, size + 1 - kx);
          for (int y = y_lo; y < y_hi; ++y) {
            double* orow = op + static_cast<std::size_t>(y) * size;
            const double* irow = ip + static_cast<std::size_t>(y + ky - 1) * size + (kx - 1);
            for (int x = x_lo; x < x_hi; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (optionally) d_in for conv3x3_forward.
inline void conv3x3_backward(std::span<const double> in, int channels, int size, std::span<const double> w,
                             int out_channels, std::span<const double> dout, std::span<double> dw,
                             std::span<double> db, std::span<double> din) {
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int o = 0; o < out_channels; ++o) {
    const double* dop = dout.data() + o * plane;
    double sb = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sb += dop[i];
    db[o] += sb;
    for (int c = 0; c < channels; ++c) {
      const double* ip = in.data() + c * plane;
      double* dip = din.empty() ? nullptr : din.data() + c * plane;
      const std::size_t widx = (static_cast<std::size_t>(o) * channels + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int y_lo = std::max(0, 1 - ky), y_hi = std::min(size, size + 1 - ky);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[widx + ky * 3 + kx];
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(size, size + 1 - kx);
          double acc = 0.0;
          for (int y = y_lo; y < y_hi; ++y) {
            const double* drow = dop + static_cast<std::size_t>(y) * size;
            const std::size_t off = static_cast<std::size_t>(y + ky - 1) * size + (kx - 1);
            const double* irow = ip + off;
            for (int x = x_lo; x < x_hi; ++x) acc += drow[x] * irow[x];
            if (dip) {
              double* dirow = dip + off;
              for (int x = x_lo; x < x_hi; ++x) dirow[x] += wv * drow[x];
            }
          }
          dw[widx + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

// 2x2 max pool, stride 2. `arg` receives the flat input index of each maximum.
inline void maxpool2_forward(std::span<const double> in, int channels, int size, std::span<double> out,
                             std::span<std::uint32_t> arg) {
  const int half = size / 2;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < half; ++y)
      for (int x = 0; x < half; ++x) {
        std::size_t best = (static_cast<std::size_t>(c) * size + 2 * y) * size + 2 * x;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(c) * size + 2 * y + dy) * size + 2 * x + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(c) * half + y) * half + x;
        out[o] = in[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
}

inline void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                          std::span<double> y) {
  const std::size_t in = x.size();
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double* row = w.data() + o * in;
    double s = b[o];
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// Accumulates dW, db; writes dx (overwritten) when non-empty.
inline void dense_backward(std::span<const double> x, std::span<const double> w, std::span<const double> dy,
                           std::span<double> dw, std::span<double> db, std::span<double> dx) {
  const std::size_t in = x.size();
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const double g = dy[o];
    db[o] += g;
    if (g == 0.0) continue;
    double* drow = dw.data() + o * in;
    const double* row = w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
    if (!dx.empty())
      for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
  }
}

}  // namespace detail

/// Small VGG-style regressor: [conv3x3 + ReLU + maxpool2] blocks, ReLU dense
/// layers with inverted dropout, and a linear 6-way head. The pre-activation of
/// the last dense layer passed through tanh is the feature vector.
class FeatureCnn {
 public:
  struct ConvRef {
    std::size_t w, b;
    int in_channels, out_channels, size;
  };
  struct DenseRef {
    std::size_t w, b;
    int in, out;
  };

  explicit FeatureCnn(CnnConfig cfg = {}, std::uint64_t seed = 0) : cfg_(std::move(cfg)), params_(seed) {
    if (cfg_.fc_widths.empty()) throw usage_error("FeatureCnn: need at least one dense layer");
    const int blocks = static_cast<int>(cfg_.conv_widths.size());
    if (cfg_.input_size % (1 << blocks) != 0)
      throw usage_error("FeatureCnn: input size must be divisible by 2^blocks");
    std::mt19937_64 rng(seed);
    int ch = cfg_.in_channels, size = cfg_.input_size;
    for (int k = 0; k < blocks; ++k) {
      const int oc = cfg_.conv_widths[k];
      const std::string p = "conv" + std::to_string(k + 1);
      ConvRef r{params_.add(p + ".w", {std::size_t(oc), std::size_t(ch), 3, 3}), params_.add(p + ".b", {std::size_t(oc)}),
                ch, oc, size};
      glorot_uniform(params_[r.w], std::size_t(ch) * 9, std::size_t(oc) * 9, rng);
      convs_.push_back(r);
      ch = oc;
      size /= 2;
    }
    int in = ch * size * size;
    for (std::size_t k = 0; k < cfg_.fc_widths.size(); ++k) {
      const int out = cfg_.fc_widths[k];
      const std::string p = "fc" + std::to_string(k + 1);
      DenseRef r{params_.add(p + ".w", {std::size_t(out), std::size_t(in)}), params_.add(p + ".b", {std::size_t(out)}), in,
                 out};
      glorot_uniform(params_[r.w], in, out, rng);
      fcs_.push_back(r);
      in = out;
    }
    head_ = DenseRef{params_.add("head.w", {std::size_t(cfg_.outputs), std::size_t(in)}),
                     params_.add("head.b", {std::size_t(cfg_.outputs)}), in, cfg_.outputs};
    glorot_uniform(params_[head_.w], in, cfg_.outputs, rng);
  }

  const CnnConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int feature_dim() const { return cfg_.fc_widths.back(); }
  std::size_t input_length() const {
    return static_cast<std::size_t>(cfg_.in_channels) * cfg_.input_size * cfg_.input_size;
  }
  const std::vector<ConvRef>& convs() const { return convs_; }
  const std::vector<DenseRef>& fcs() const { return fcs_; }
  const DenseRef& head() const { return head_; }

 private:
  CnnConfig cfg_;
  ParamStore params_;
  std::vector<ConvRef> convs_;
  std::vector<DenseRef> fcs_;
  DenseRef head_{};
};

struct CnnCache {
  Mode mode = Mode::eval;
  std::vector<std::vector<double>> conv_in;
  std::vector<std::vector<double>> conv_out;  // after ReLU
  std::vector<std::vector<std::uint32_t>> pool_arg;
  std::vector<std::vector<double>> fc_in;
  std::vector<std::vector<double>> fc_pre;
  std::vector<std::vector<double>> fc_mask;  // inverted-dropout multipliers, empty in eval
  std::vector<double> head_in;
  std::size_t param_count = 0;
};

/// Interleaved HWC image -> planar CHW tensor.
inline std::vector<double> to_chw(const Frame& f) {
  std::vector<double> out(f.pixels.size());
  const std::size_t plane = static_cast<std::size_t>(f.height) * f.width;
  for (int r = 0; r < f.height; ++r)
    for (int c = 0; c < f.width; ++c)
      for (int ch = 0; ch < f.channels; ++ch)
        out[ch * plane + static_cast<std::size_t>(r) * f.width + c] = f.at(r, c, ch);
  return out;
}

/// Forward pass. `rng` is only consulted in train mode (dropout).
inline ForceVector cnn_forward(const FeatureCnn& net, std::span<const double> input, Mode mode,
                               std::mt19937_64* rng = nullptr, CnnCache* cache = nullptr) {
  const auto& cfg = net.config();
  const auto& P = net.params();
  if (input.size() != net.input_length()) throw data_error("cnn_forward: input shape mismatch");
  if (mode == Mode::train && cfg.dropout > 0.0 && rng == nullptr)
    throw usage_error("cnn_forward: train mode needs a random generator");

  CnnCache local;
  CnnCache& cc = cache ? *cache : local;
  cc = CnnCache{};
  cc.mode = mode;
  cc.param_count = P.total_size();

  std::vector<double> x(input.begin(), input.end());
  for (const auto& cv : net.convs()) {
    const std::size_t plane = static_cast<std::size_t>(cv.size) * cv.size;
    std::vector<double> y(plane * cv.out_channels);
    detail::conv3x3_forward(x, cv.in_channels, cv.size, P[cv.w].value, P[cv.b].value, cv.out_channels, y);
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    const int half = cv.size / 2;
    std::vector<double> pooled(static_cast<std::size_t>(half) * half * cv.out_channels);
    std::vector<std::uint32_t> arg(pooled.size());
    detail::maxpool2_forward(y, cv.out_channels, cv.size, pooled, arg);
    cc.conv_in.push_back(std::move(x));
    cc.conv_out.push_back(std::move(y));
    cc.pool_arg.push_back(std::move(arg));
    x = std::move(pooled);
  }

  const double keep = 1.0 - cfg.dropout;
  for (const auto& fc : net.fcs()) {
    std::vector<double> pre(fc.out);
    detail::dense_forward(x, P[fc.w].value, P[fc.b].value, pre);
    std::vector<double> post(fc.out);
    for (int i = 0; i < fc.out; ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    std::vector<double> mask;
    if (mode == Mode::train && cfg.dropout > 0.0) {
      std::bernoulli_distribution bern(keep);
      mask.resize(fc.out);
      for (int i = 0; i < fc.out; ++i) {
        mask[i] = bern(*rng) ? 1.0 / keep : 0.0;
        post[i] *= mask[i];
      }
    }
    cc.fc_in.push_back(std::move(x));
    cc.fc_pre.push_back(std::move(pre));
    cc.fc_mask.push_back(std::move(mask));
    x = std::move(post);
  }

  ForceVector out;
  std::span<double> os(out.components.data(), out.components.size());
  if (net.head().out != static_cast<int>(kForceDim)) throw usage_error("cnn_forward: head width must be 6");
  detail::dense_forward(x, P[net.head().w].value, P[net.head().b].value, os);
  cc.head_in = std::move(x);
  return out;
}

/// Accumulates parameter gradients for upstream gradient `dy` (d loss / d output).
inline void cnn_backward(FeatureCnn& net, const CnnCache& cc, const ForceVector& dy) {
  auto& P = net.params();
  if (cc.param_count != P.total_size() || cc.conv_in.size() != net.convs().size())
    throw data_error("cnn_backward: stale cache");
  const auto& h = net.head();
  std::vector<double> dx(h.in);
  detail::dense_backward(cc.head_in, P[h.w].value, dy.components, P[h.w].grad, P[h.b].grad, dx);

  for (std::size_t k = net.fcs().size(); k-- > 0;) {
    const auto& fc = net.fcs()[k];
    std::vector<double> dpre(fc.out);
    for (int i = 0; i < fc.out; ++i) {
      double g = dx[i];
      if (!cc.fc_mask[k].empty()) g *= cc.fc_mask[k][i];
      dpre[i] = cc.fc_pre[k][i] > 0.0 ? g : 0.0;
    }
    std::vector<double> dprev(fc.in);
    detail::dense_backward(cc.fc_in[k], P[fc.w].value, dpre, P[fc.w].grad, P[fc.b].grad, dprev);
    dx = std::move(dprev);
  }

  for (std::size_t k = net.convs().size(); k-- > 0;) {
    const auto& cv = net.convs()[k];
    std::vector<double> dconv(cc.conv_out[k].size(), 0.0);
    const auto& arg = cc.pool_arg[k];
    for (std::size_t i = 0; i < arg.size(); ++i) dconv[arg[i]] += dx[i];
    for (std::size_t i = 0; i < dconv.size(); ++i)
      if (cc.conv_out[k][i] <= 0.0) dconv[i] = 0.0;
    std::vector<double> din;
    if (k > 0) din.assign(cc.conv_in[k].size(), 0.0);
    detail::conv3x3_backward(cc.conv_in[k], cv.in_channels, cv.size, P[cv.w].value, cv.out_channels, dconv,
                             P[cv.w].grad, P[cv.b].grad, din);
    dx = std::move(din);
  }
}

/// Video features: tanh of the last dense layer's pre-activation, dropout off.
inline std::vector<double> cnn_features(const FeatureCnn& net, std::span<const double> input) {
  CnnCache cc;
  cnn_forward(net, input, Mode::eval, nullptr, &cc);
  std::vector<double> f = cc.fc_pre.back();
  for (double& v : f) v = std::tanh(v);
  return f;
}

}  // namespace vbfs
