#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vbfs/cnn.hpp"
#include "vbfs/common.hpp"
#include "vbfs/param_store.hpp"

namespace vbfs {

/// Indices of one coupled input-forget gate layer inside a ParamStore.
///
///   z = tanh(W_z x + R_z h' + b_z)
///   f = sigmoid(W_f x + R_f h' + p_f * c' + b_f)
///   i = 1 - f
///   c = f * c' + i * z
///   o = sigmoid(W_o x + R_o h' + p_o * c + b_o)
///   h = o * tanh(c)
struct CifgLayer {
  std::size_t W_z, W_f, W_o, R_z, R_f, R_o, b_z, b_f, b_o, p_f, p_o;
  int input = 0;
  int hidden = 0;
  bool peepholes = true;

  /// Registers the layer's arrays under `prefix` and initializes them.
  static CifgLayer create(ParamStore& ps, const std::string& prefix, int input, int hidden, bool peepholes,
                          std::mt19937_64& rng) {
    const auto I = std::size_t(input), H = std::size_t(hidden);
    CifgLayer l{};
    l.input = input;
    l.hidden = hidden;
    l.peepholes = peepholes;
    l.W_z = ps.add(prefix + ".W_z", {H, I});
    l.W_f = ps.add(prefix + ".W_f", {H, I});
    l.W_o = ps.add(prefix + ".W_o", {H, I});
    l.R_z = ps.add(prefix + ".R_z", {H, H});
    l.R_f = ps.add(prefix + ".R_f", {H, H});
    l.R_o = ps.add(prefix + ".R_o", {H, H});
    l.b_z = ps.add(prefix + ".b_z", {H});
    l.b_f = ps.add(prefix + ".b_f", {H});
    l.b_o = ps.add(prefix + ".b_o", {H});
    l.p_f = ps.add(prefix + ".p_f", {H});
    l.p_o = ps.add(prefix + ".p_o", {H});
    for (auto w : {l.W_z, l.W_f, l.W_o}) glorot_uniform(ps[w], I, H, rng);
    for (auto r : {l.R_z, l.R_f, l.R_o}) glorot_uniform(ps[r], H, H, rng);
    for (double& b : ps[l.b_f].value) b = 1.0;
    return l;
  }
};

struct CifgCache {
  std::vector<double> x, h_prev, c_prev, z, f, o, c, tc;
};

struct CifgState {
  std::vector<double> h, c;
};

namespace detail {

// y += M v for a row-major (rows x v.size()) matrix.
inline void matvec_acc(std::span<const double> M, std::span<const double> v, std::span<double> y) {
  const std::size_t n = v.size();
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double* row = M.data() + r * n;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += row[k] * v[k];
    y[r] += s;
  }
}

// y += M^T g; dM += g v^T.
inline void matvec_backward(std::span<const double> M, std::span<const double> v, std::span<const double> g,
                            std::span<double> dM, std::span<double> dv) {
  const std::size_t n = v.size();
  for (std::size_t r = 0; r < g.size(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = M.data() + r * n;
    double* drow = dM.data() + r * n;
    for (std::size_t k = 0; k < n; ++k) drow[k] += gr * v[k];
    if (!dv.empty())
      for (std::size_t k = 0; k < n; ++k) dv[k] += gr * row[k];
  }
}

}  // namespace detail

/// One CIFG step.
inline CifgState cifg_step(const ParamStore& P, const CifgLayer& L, std::span<const double> x,
                           std::span<const double> h_prev, std::span<const double> c_prev, CifgCache* cache = nullptr) {
  const std::size_t H = L.hidden;
  if (x.size() != std::size_t(L.input) || h_prev.size() != H || c_prev.size() != H)
    throw data_error("cifg_step: dimension mismatch");
  std::vector<double> az(P[L.b_z].value), af(P[L.b_f].value), ao(P[L.b_o].value);
  detail::matvec_acc(P[L.W_z].value, x, az);
  detail::matvec_acc(P[L.R_z].value, h_prev, az);
  detail::matvec_acc(P[L.W_f].value, x, af);
  detail::matvec_acc(P[L.R_f].value, h_prev, af);
  detail::matvec_acc(P[L.W_o].value, x, ao);
  detail::matvec_acc(P[L.R_o].value, h_prev, ao);

  CifgState s{std::vector<double>(H), std::vector<double>(H)};
  std::vector<double> z(H), f(H), o(H), tc(H);
  const auto& pf = P[L.p_f].value;
  const auto& po = P[L.p_o].value;
  for (std::size_t k = 0; k < H; ++k) {
    z[k] = std::tanh(az[k]);
    f[k] = sigmoid(af[k] + (L.peepholes ? pf[k] * c_prev[k] : 0.0));
    const double i = 1.0 - f[k];
    s.c[k] = f[k] * c_prev[k] + i * z[k];
    o[k] = sigmoid(ao[k] + (L.peepholes ? po[k] * s.c[k] : 0.0));
    tc[k] = std::tanh(s.c[k]);
    s.h[k] = o[k] * tc[k];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->z = std::move(z);
    cache->f = std::move(f);
    cache->o = std::move(o);
    cache->c = s.c;
    cache->tc = std::move(tc);
  }
  return s;
}

struct CifgGrad {
  std::vector<double> dx, dh_prev, dc_prev;
};

/// Backward through one step given dL/dh (total, including the recurrent path)
/// and dL/dc from the following step. Accumulates parameter gradients.
inline CifgGrad cifg_step_backward(ParamStore& P, const CifgLayer& L, const CifgCache& cc,
                                   std::span<const double> dh, std::span<const double> dc_next) {
  const std::size_t H = L.hidden;
  std::vector<double> daz(H), daf(H), dao(H);
  CifgGrad g{std::vector<double>(L.input, 0.0), std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
  const auto& pf = P[L.p_f].value;
  const auto& po = P[L.p_o].value;
  auto& dpf = P[L.p_f].grad;
  auto& dpo = P[L.p_o].grad;
  for (std::size_t k = 0; k < H; ++k) {
    const double o = cc.o[k], tc = cc.tc[k], f = cc.f[k], z = cc.z[k];
    dao[k] = dh[k] * tc * o * (1.0 - o);
    double dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
    if (L.peepholes) {
      dc += dao[k] * po[k];
      dpo[k] += dao[k] * cc.c[k];
    }
    const double df = dc * (cc.c_prev[k] - z);
    const double dz = dc * (1.0 - f);
    daf[k] = df * f * (1.0 - f);
    daz[k] = dz * (1.0 - z * z);
    g.dc_prev[k] = dc * f;
    if (L.peepholes) {
      g.dc_prev[k] += daf[k] * pf[k];
      dpf[k] += daf[k] * cc.c_prev[k];
    }
  }
  for (std::size_t k = 0; k < H; ++k) {
    P[L.b_z].grad[k] += daz[k];
    P[L.b_f].grad[k] += daf[k];
    P[L.b_o].grad[k] += dao[k];
  }
  detail::matvec_backward(P[L.W_z].value, cc.x, daz, P[L.W_z].grad, g.dx);
  detail::matvec_backward(P[L.W_f].value, cc.x, daf, P[L.W_f].grad, g.dx);
  detail::matvec_backward(P[L.W_o].value, cc.x, dao, P[L.W_o].grad, g.dx);
  detail::matvec_backward(P[L.R_z].value, cc.h_prev, daz, P[L.R_z].grad, g.dh_prev);
  detail::matvec_backward(P[L.R_f].value, cc.h_prev, daf, P[L.R_f].grad, g.dh_prev);
  detail::matvec_backward(P[L.R_o].value, cc.h_prev, dao, P[L.R_o].grad, g.dh_prev);
  return g;
}

struct LstmConfig {
  int input_dim = 4;
  std::vector<int> hidden{64, 64};
  std::vector<double> dropout{0.25, 0.25};  // drop probability at each layer output
  bool peepholes = true;
  int outputs = static_cast<int>(kForceDim);
};

/// Stacked CIFG layers with a linear head shared across time steps.
class LstmStack {
 public:
  explicit LstmStack(LstmConfig cfg = {}, std::uint64_t seed = 0) : cfg_(std::move(cfg)), params_(seed) {
    if (cfg_.hidden.empty()) throw usage_error("LstmStack: need at least one layer");
    if (cfg_.dropout.size() != cfg_.hidden.size()) throw usage_error("LstmStack: one dropout rate per layer");
    for (double d : cfg_.dropout)
      if (d < 0.0 || d >= 1.0) throw usage_error("LstmStack: dropout rate must be in [0, 1)");
    std::mt19937_64 rng(seed);
    int in = cfg_.input_dim;
    for (std::size_t k = 0; k < cfg_.hidden.size(); ++k) {
      layers_.push_back(CifgLayer::create(params_, "lstm" + std::to_string(k + 1), in, cfg_.hidden[k],
                                          cfg_.peepholes, rng));
      in = cfg_.hidden[k];
    }
    head_w_ = params_.add("head.w", {std::size_t(cfg_.outputs), std::size_t(in)});
    head_b_ = params_.add("head.b", {std::size_t(cfg_.outputs)});
    glorot_uniform(params_[head_w_], in, cfg_.outputs, rng);
  }

  const LstmConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<CifgLayer>& layers() const { return layers_; }
  std::size_t head_w() const { return head_w_; }
  std::size_t head_b() const { return head_b_; }

 private:
  LstmConfig cfg_;
  ParamStore params_;
  std::vector<CifgLayer> layers_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

struct LstmCache {
  Mode mode = Mode::eval;
  std::vector<std::vector<CifgCache>> steps;           // [layer][t]
  std::vector<std::vector<std::vector<double>>> mask;  // [layer][t], empty in eval
  std::vector<std::vector<double>> head_in;            // [t]
  std::size_t param_count = 0;
};

/// Runs a window of T input vectors from zero state. Returns one 6-vector per
/// step; the last one is the window's estimate.
inline std::vector<ForceVector> lstm_forward(const LstmStack& net, const std::vector<std::vector<double>>& seq,
                                             Mode mode, std::mt19937_64* rng = nullptr, LstmCache* cache = nullptr) {
  if (seq.empty()) throw data_error("lstm_forward: empty sequence");
  const auto& cfg = net.config();
  const auto& P = net.params();
  const std::size_t T = seq.size(), L = net.layers().size();
  bool any_dropout = false;
  for (double d : cfg.dropout) any_dropout = any_dropout || d > 0.0;
  if (mode == Mode::train && any_dropout && rng == nullptr)
    throw usage_error("lstm_forward: train mode needs a random generator");

  LstmCache local;
  LstmCache& cc = cache ? *cache : local;
  cc = LstmCache{};
  cc.mode = mode;
  cc.param_count = P.total_size();
  cc.steps.assign(L, std::vector<CifgCache>(T));
  cc.mask.assign(L, std::vector<std::vector<double>>(T));
  cc.head_in.resize(T);

  std::vector<CifgState> state(L);
  for (std::size_t l = 0; l < L; ++l) {
    state[l].h.assign(cfg.hidden[l], 0.0);
    state[l].c.assign(cfg.hidden[l], 0.0);
  }
  std::vector<ForceVector> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (seq[t].size() != std::size_t(cfg.input_dim)) throw data_error("lstm_forward: input width mismatch");
    std::vector<double> x = seq[t];
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = net.layers()[l];
      state[l] = cifg_step(P, layer, x, state[l].h, state[l].c, &cc.steps[l][t]);
      x = state[l].h;
      if (mode == Mode::train && cfg.dropout[l] > 0.0) {
        const double keep = 1.0 - cfg.dropout[l];
        std::bernoulli_distribution bern(keep);
        auto& m = cc.mask[l][t];
        m.resize(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) {
          m[k] = bern(*rng) ? 1.0 / keep : 0.0;
          x[k] *= m[k];
        }
      }
    }
    detail::dense_forward(x, P[net.head_w()].value, P[net.head_b()].value, out[t].components);
    cc.head_in[t] = std::move(x);
  }
  return out;
}

/// Backpropagation through time. `dy[t]` is d loss / d output at step t.
/// Gradients accumulate into the stack's ParamStore.
inline void lstm_backward(LstmStack& net, const LstmCache& cc, const std::vector<ForceVector>& dy) {
  auto& P = net.params();
  const std::size_t L = net.layers().size();
  if (cc.param_count != P.total_size() || cc.steps.size() != L) throw data_error("lstm_backward: stale cache");
  const std::size_t T = cc.head_in.size();
  if (dy.size() != T) throw data_error("lstm_backward: gradient length mismatch");

  // Gradient flowing into each layer's output h_t from above (before recurrence).
  std::vector<std::vector<double>> dtop(T);
  const std::size_t top_h = net.layers().back().hidden;
  for (std::size_t t = 0; t < T; ++t) {
    dtop[t].assign(top_h, 0.0);
    detail::dense_backward(cc.head_in[t], P[net.head_w()].value, dy[t].components, P[net.head_w()].grad,
                           P[net.head_b()].grad, dtop[t]);
  }
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = net.layers()[l];
    const std::size_t H = layer.hidden;
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
    std::vector<std::vector<double>> dbelow(T);
    for (std::size_t t = T; t-- > 0;) {
      std::vector<double> dh(H);
      const auto& m = cc.mask[l][t];
      for (std::size_t k = 0; k < H; ++k) dh[k] = (m.empty() ? dtop[t][k] : dtop[t][k] * m[k]) + dh_next[k];
      auto g = cifg_step_backward(P, layer, cc.steps[l][t], dh, dc_next);
      dh_next = std::move(g.dh_prev);
      dc_next = std::move(g.dc_prev);
      dbelow[t] = std::move(g.dx);
    }
    dtop = std::move(dbelow);
  }
}

}  // namespace vbfs
