#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "octad/error.hpp"
#include "octad/rng.hpp"

namespace octad::model {

template <class S>
using Mx = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;

// 3x3 kernel, stride 2, zero padding 1.
inline int conv_out_extent(int n) { return (n - 1) / 2 + 1; }

// Backbone: a stack of stride-2 conv blocks (each followed by ReLU) into a
// global average pool; head: linear -> layer norm -> ReLU -> dropout ->
// linear to class logits. Fully convolutional, so any input extent that
// survives the stride chain works.
struct NetShape {
  int in_channels = 3;
  std::vector<int> widths = {8, 16, 32, 64};
  int head_dim = 64;
  int n_classes = 2;
  float dropout_p = 0.4f;

  int n_blocks() const { return static_cast<int>(widths.size()); }
  int block_in(int i) const { return i == 0 ? in_channels : widths[i - 1]; }
  int n_tensors() const { return 2 * n_blocks() + 6; }

  int conv_w(int i) const { return 2 * i; }
  int conv_b(int i) const { return 2 * i + 1; }
  int fc1_w() const { return 2 * n_blocks(); }
  int fc1_b() const { return 2 * n_blocks() + 1; }
  int ln_g() const { return 2 * n_blocks() + 2; }
  int ln_b() const { return 2 * n_blocks() + 3; }
  int fc2_w() const { return 2 * n_blocks() + 4; }
  int fc2_b() const { return 2 * n_blocks() + 5; }

  std::string tensor_name(int idx) const;
  std::vector<int> tensor_dims(int idx) const;

  bool operator==(const NetShape&) const = default;
};

inline std::string NetShape::tensor_name(int idx) const {
  const int nb = n_blocks();
  if (idx < 2 * nb) {
    const int blk = idx / 2;
    return "conv" + std::to_string(blk + 1) + (idx % 2 == 0 ? ".weight" : ".bias");
  }
  switch (idx - 2 * nb) {
    case 0: return "head.fc1.weight";
    case 1: return "head.fc1.bias";
    case 2: return "head.ln.gamma";
    case 3: return "head.ln.beta";
    case 4: return "head.fc2.weight";
    case 5: return "head.fc2.bias";
  }
  throw Error(Errc::invalid_argument, "tensor index out of range");
}

inline std::vector<int> NetShape::tensor_dims(int idx) const {
  const int nb = n_blocks();
  if (idx < 2 * nb) {
    const int blk = idx / 2;
    if (idx % 2 == 0) return {widths[blk], block_in(blk), 3, 3};
    return {widths[blk]};
  }
  switch (idx - 2 * nb) {
    case 0: return {head_dim, widths.back()};
    case 1: return {head_dim};
    case 2: return {head_dim};
    case 3: return {head_dim};
    case 4: return {n_classes, head_dim};
    case 5: return {n_classes};
  }
  throw Error(Errc::invalid_argument, "tensor index out of range");
}

// Named parameter tensors stored flat (row-major within each tensor).
// Conv weights flatten to the (out_channels x in_channels*9) matrix used by
// the im2col product.
template <class S>
struct ParamSet {
  NetShape shape;
  std::vector<Arr<S>> t;

  static ParamSet zeros_like(const NetShape& shape) {
    ParamSet p;
    p.shape = shape;
    p.t.resize(shape.n_tensors());
    for (int i = 0; i < shape.n_tensors(); ++i) {
      long n = 1;
      for (int d : shape.tensor_dims(i)) n *= d;
      p.t[i] = Arr<S>::Zero(n);
    }
    return p;
  }

  template <class S2>
  ParamSet<S2> cast() const {
    ParamSet<S2> out;
    out.shape = shape;
    out.t.resize(t.size());
    for (size_t i = 0; i < t.size(); ++i) out.t[i] = t[i].template cast<S2>();
    return out;
  }

  bool all_finite() const {
    for (const Arr<S>& a : t)
      if (!a.allFinite()) return false;
    return true;
  }
};

// Kaiming fan-in init for weights, zero biases, unit layer-norm scale.
template <class S>
ParamSet<S> init_params(const NetShape& shape, Rng& rng) {
  ParamSet<S> p = ParamSet<S>::zeros_like(shape);
  for (int i = 0; i < shape.n_blocks(); ++i) {
    const double std = std::sqrt(2.0 / (shape.block_in(i) * 9.0));
    for (auto& v : p.t[shape.conv_w(i)]) v = static_cast<S>(std * rng.next_normal());
  }
  {
    const double std = std::sqrt(2.0 / shape.widths.back());
    for (auto& v : p.t[shape.fc1_w()]) v = static_cast<S>(std * rng.next_normal());
  }
  {
    const double std = std::sqrt(2.0 / shape.head_dim);
    for (auto& v : p.t[shape.fc2_w()]) v = static_cast<S>(std * rng.next_normal());
  }
  p.t[shape.ln_g()].setConstant(static_cast<S>(1));
  return p;
}

namespace detail {

template <class S>
using RowMajorConstMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using RowMajorMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class S>
RowMajorConstMap<S> as_matrix(const Arr<S>& a, int rows, int cols) {
  return RowMajorConstMap<S>(a.data(), rows, cols);
}
template <class S>
RowMajorMap<S> as_matrix(Arr<S>& a, int rows, int cols) {
  return RowMajorMap<S>(a.data(), rows, cols);
}

}  // namespace detail

// Feature maps are (channels x h*w) matrices; the spatial index is r + c*h
// (column-major within a channel, matching Eigen's default layout).
template <class S>
void im2col_3x3s2p1(const Mx<S>& x, int h, int w, Mx<S>& cols) {
  const int cin = static_cast<int>(x.rows());
  const int ho = conv_out_extent(h), wo = conv_out_extent(w);
  cols.resize(cin * 9, ho * wo);
  for (int co = 0; co < wo; ++co) {
    for (int ro = 0; ro < ho; ++ro) {
      const int s_out = ro + co * ho;
      S* dst = cols.data() + static_cast<long>(s_out) * cols.rows();
      for (int ci = 0; ci < cin; ++ci) {
        for (int kh = 0; kh < 3; ++kh) {
          const int ri = 2 * ro + kh - 1;
          for (int kw = 0; kw < 3; ++kw) {
            const int c = 2 * co + kw - 1;
            *dst++ = (ri >= 0 && ri < h && c >= 0 && c < w) ? x(ci, ri + c * h) : S(0);
          }
        }
      }
    }
  }
}

template <class S>
void col2im_3x3s2p1(const Mx<S>& dcols, int h, int w, int cin, Mx<S>& dx) {
  const int ho = conv_out_extent(h), wo = conv_out_extent(w);
  dx = Mx<S>::Zero(cin, h * w);
  for (int co = 0; co < wo; ++co) {
    for (int ro = 0; ro < ho; ++ro) {
      const int s_out = ro + co * ho;
      const S* src = dcols.data() + static_cast<long>(s_out) * dcols.rows();
      for (int ci = 0; ci < cin; ++ci) {
        for (int kh = 0; kh < 3; ++kh) {
          const int ri = 2 * ro + kh - 1;
          for (int kw = 0; kw < 3; ++kw) {
            const int c = 2 * co + kw - 1;
            const S v = *src++;
            if (ri >= 0 && ri < h && c >= 0 && c < w) dx(ci, ri + c * h) += v;
          }
        }
      }
    }
  }
}

template <class S>
struct ForwardCache {
  int h0 = 0, w0 = 0;
  std::vector<int> hs, ws;      // extents after each block
  std::vector<Mx<S>> cols;      // im2col buffers per block
  std::vector<Mx<S>> z;         // pre-activation per block
  Mx<S> a_final;                // post-ReLU output of the last block
  Vec<S> gap, fc1_z, ln_xhat, ln_out, relu_out, dropped, drop_mask, logits;
  S ln_inv_sigma = 0;
  bool train_mode = false;
};

inline constexpr double kLayerNormEps = 1e-5;

// Head from the pooled feature vector onward. Factored out so the saliency
// path can reuse it.
template <class S>
void head_forward(const ParamSet<S>& p, const Vec<S>& gap, bool train_mode, Rng* rng,
                  ForwardCache<S>& c) {
  const NetShape& sh = p.shape;
  c.gap = gap;
  c.fc1_z = detail::as_matrix(p.t[sh.fc1_w()], sh.head_dim, sh.widths.back()) * gap +
            p.t[sh.fc1_b()].matrix();

  const S mu = c.fc1_z.mean();
  const S var = (c.fc1_z.array() - mu).square().mean();
  c.ln_inv_sigma = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
  c.ln_xhat = ((c.fc1_z.array() - mu) * c.ln_inv_sigma).matrix();
  c.ln_out = (p.t[sh.ln_g()] * c.ln_xhat.array() + p.t[sh.ln_b()]).matrix();

  c.relu_out = c.ln_out.cwiseMax(S(0));

  c.drop_mask = Vec<S>::Ones(sh.head_dim);
  if (train_mode && sh.dropout_p > 0) {
    if (!rng) throw Error(Errc::invalid_argument, "train-mode forward needs an rng for dropout");
    const S keep = S(1) - static_cast<S>(sh.dropout_p);
    for (int i = 0; i < sh.head_dim; ++i)
      c.drop_mask(i) = rng->next_f64() < static_cast<double>(keep) ? S(1) / keep : S(0);
  }
  c.dropped = c.relu_out.cwiseProduct(c.drop_mask);

  c.logits = detail::as_matrix(p.t[sh.fc2_w()], sh.n_classes, sh.head_dim) * c.dropped +
             p.t[sh.fc2_b()].matrix();
  c.train_mode = train_mode;
}

template <class S>
Vec<S> forward(const ParamSet<S>& p, const Mx<S>& image, int h, int w, bool train_mode, Rng* rng,
               ForwardCache<S>& c) {
  const NetShape& sh = p.shape;
  if (image.rows() != sh.in_channels || image.cols() != static_cast<long>(h) * w)
    throw Error(Errc::invalid_argument, "input shape mismatch");
  if (h < (1 << sh.n_blocks()) || w < (1 << sh.n_blocks()))
    throw Error(Errc::invalid_argument, "input too small for the stride chain");
  if (!image.allFinite()) throw Error(Errc::nonfinite, "non-finite input");

  c.h0 = h;
  c.w0 = w;
  c.hs.assign(sh.n_blocks(), 0);
  c.ws.assign(sh.n_blocks(), 0);
  c.cols.resize(sh.n_blocks());
  c.z.resize(sh.n_blocks());

  Mx<S> cur = image;
  int ch = h, cw = w;
  for (int i = 0; i < sh.n_blocks(); ++i) {
    im2col_3x3s2p1(cur, ch, cw, c.cols[i]);
    ch = conv_out_extent(ch);
    cw = conv_out_extent(cw);
    c.hs[i] = ch;
    c.ws[i] = cw;
    c.z[i].noalias() =
        detail::as_matrix(p.t[sh.conv_w(i)], sh.widths[i], sh.block_in(i) * 9) * c.cols[i];
    c.z[i].colwise() += p.t[sh.conv_b(i)].matrix();
    cur = c.z[i].cwiseMax(S(0));
  }
  c.a_final = cur;
  head_forward(p, Vec<S>(cur.rowwise().mean()), train_mode, rng, c);
  return c.logits;
}

// Backward through the head only; returns d(loss)/d(gap). Parameter
// gradients are accumulated into *grads when given.
template <class S>
Vec<S> head_backward(const ParamSet<S>& p, const ForwardCache<S>& c, const Vec<S>& dlogits,
                     ParamSet<S>* grads) {
  const NetShape& sh = p.shape;
  if (grads) {
    detail::as_matrix(grads->t[sh.fc2_w()], sh.n_classes, sh.head_dim).noalias() +=
        dlogits * c.dropped.transpose();
    grads->t[sh.fc2_b()] += dlogits.array();
  }
  Vec<S> d_dropped =
      detail::as_matrix(p.t[sh.fc2_w()], sh.n_classes, sh.head_dim).transpose() * dlogits;
  Vec<S> d_relu = d_dropped.cwiseProduct(c.drop_mask);
  Vec<S> d_ln_out =
      (d_relu.array() * (c.ln_out.array() > S(0)).template cast<S>()).matrix();

  if (grads) {
    grads->t[sh.ln_g()] += d_ln_out.array() * c.ln_xhat.array();
    grads->t[sh.ln_b()] += d_ln_out.array();
  }
  const int n = sh.head_dim;
  Arr<S> dxhat = d_ln_out.array() * p.t[sh.ln_g()];
  const S sum_dxhat = dxhat.sum();
  const S sum_dxhat_xhat = (dxhat * c.ln_xhat.array()).sum();
  Vec<S> d_fc1 = (c.ln_inv_sigma / static_cast<S>(n) *
                  (static_cast<S>(n) * dxhat - sum_dxhat - c.ln_xhat.array() * sum_dxhat_xhat))
                     .matrix();

  if (grads) {
    detail::as_matrix(grads->t[sh.fc1_w()], sh.head_dim, sh.widths.back()).noalias() +=
        d_fc1 * c.gap.transpose();
    grads->t[sh.fc1_b()] += d_fc1.array();
  }
  return detail::as_matrix(p.t[sh.fc1_w()], sh.head_dim, sh.widths.back()).transpose() * d_fc1;
}

template <class S>
void conv_backward(const ParamSet<S>& p, const ForwardCache<S>& c, const Vec<S>& dgap,
                   ParamSet<S>& grads, Mx<S>* dinput = nullptr) {
  const NetShape& sh = p.shape;
  const int nb = sh.n_blocks();
  const long n_last = static_cast<long>(c.hs[nb - 1]) * c.ws[nb - 1];

  // GAP backward: uniform spread over spatial positions.
  Mx<S> da = (dgap / static_cast<S>(n_last)).replicate(1, n_last);
  for (int i = nb - 1; i >= 0; --i) {
    Mx<S> dz = da.cwiseProduct((c.z[i].array() > S(0)).template cast<S>().matrix());
    detail::as_matrix(grads.t[sh.conv_w(i)], sh.widths[i], sh.block_in(i) * 9).noalias() +=
        dz * c.cols[i].transpose();
    grads.t[sh.conv_b(i)] += dz.rowwise().sum().array();
    if (i == 0 && !dinput) break;
    Mx<S> dcols = detail::as_matrix(p.t[sh.conv_w(i)], sh.widths[i], sh.block_in(i) * 9)
                      .transpose() *
                  dz;
    const int hin = i == 0 ? c.h0 : c.hs[i - 1];
    const int win = i == 0 ? c.w0 : c.ws[i - 1];
    Mx<S> dx;
    col2im_3x3s2p1(dcols, hin, win, sh.block_in(i), dx);
    if (i == 0) {
      *dinput = std::move(dx);
    } else {
      da = std::move(dx);
    }
  }
}

template <class S>
void backward(const ParamSet<S>& p, const ForwardCache<S>& c, const Vec<S>& dlogits,
              ParamSet<S>& grads, Mx<S>* dinput = nullptr) {
  Vec<S> dgap = head_backward(p, c, dlogits, &grads);
  conv_backward(p, c, dgap, grads, dinput);
}

template <class S>
Vec<S> softmax(const Vec<S>& z) {
  const S m = z.maxCoeff();
  Vec<S> e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

// Weighted cross-entropy over a batch: sum_i w_i * CE_i / sum_i w_i.
template <class S>
struct BatchLoss {
  S loss = 0;
  std::vector<Vec<S>> dlogits;
};

template <class S>
BatchLoss<S> weighted_ce(const std::vector<Vec<S>>& logits, const std::vector<int>& labels,
                         const std::vector<S>& weights) {
  if (logits.empty() || logits.size() != labels.size() || logits.size() != weights.size())
    throw Error(Errc::invalid_argument, "batch arrays must be nonempty and aligned");
  S wsum = 0;
  for (S w : weights) wsum += w;
  BatchLoss<S> out;
  out.dlogits.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    const Vec<S>& z = logits[i];
    const S m = z.maxCoeff();
    const S lse = m + std::log((z.array() - m).exp().sum());
    out.loss += weights[i] * (lse - z(labels[i]));
    Vec<S> dz = softmax(z);
    dz(labels[i]) -= S(1);
    out.dlogits[i] = dz * (weights[i] / wsum);
  }
  out.loss /= wsum;
  return out;
}

// Weight applied to each sample's loss: controls 1, cases decay linearly
// from 2 at diagnosis to 1 at the year cap.
inline double year_weight(const std::optional<double>& years, double year_cap) {
  if (!years) return 1.0;
  if (*years < 0) throw Error(Errc::invalid_argument, "negative years_to_diagnosis");
  if (!(year_cap > 0)) throw Error(Errc::invalid_argument, "year_cap must be > 0");
  return 1.0 + (year_cap - std::min(*years, year_cap)) / year_cap;
}

// Decoupled weight decay: p <- p - lr*wd*p - lr*m_hat/(sqrt(v_hat)+eps).
template <class S>
struct AdamW {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Arr<S>> m, v;
  long step = 0;

  void init(const ParamSet<S>& p) {
    m.clear();
    v.clear();
    for (const Arr<S>& a : p.t) {
      m.push_back(Arr<S>::Zero(a.size()));
      v.push_back(Arr<S>::Zero(a.size()));
    }
    step = 0;
  }

  void update(ParamSet<S>& p, const ParamSet<S>& g) {
    if (m.size() != p.t.size()) throw Error(Errc::invalid_argument, "optimizer not initialized");
    ++step;
    const S bc1 = S(1) - static_cast<S>(std::pow(beta1, static_cast<double>(step)));
    const S bc2 = S(1) - static_cast<S>(std::pow(beta2, static_cast<double>(step)));
    for (size_t i = 0; i < p.t.size(); ++i) {
      m[i] = static_cast<S>(beta1) * m[i] + (S(1) - static_cast<S>(beta1)) * g.t[i];
      v[i] = static_cast<S>(beta2) * v[i] + (S(1) - static_cast<S>(beta2)) * g.t[i].square();
      p.t[i] -= static_cast<S>(lr * weight_decay) * p.t[i];
      p.t[i] -= static_cast<S>(lr) * (m[i] / bc1) / ((v[i] / bc2).sqrt() + static_cast<S>(eps));
    }
  }
};

// Running arithmetic mean of parameter snapshots (one per epoch from the
// averaging start).
template <class S>
struct SwaAccumulator {
  NetShape shape;
  std::vector<Arr<S>> mean;
  long count = 0;

  void update(const ParamSet<S>& p) {
    if (count == 0) {
      shape = p.shape;
      mean.clear();
      for (const Arr<S>& a : p.t) mean.push_back(a);
      count = 1;
      return;
    }
    ++count;
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += (p.t[i] - mean[i]) / static_cast<S>(count);
  }

  ParamSet<S> finalize() const {
    if (count == 0) throw Error(Errc::invalid_argument, "SWA finalize before any update");
    ParamSet<S> out;
    out.shape = shape;
    out.t = mean;
    return out;
  }
};

}  // namespace octad::model
