#include "dtc/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "dtc/simd/kernels.hpp"

namespace dtc::model {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

template <typename T>
using ColV = Eigen::Matrix<T, Eigen::Dynamic, 1>;

std::string blk(int l, const std::string& s) { return "block" + std::to_string(l) + "." + s; }
std::string lora(int l, const char* proj, const char* f) {
  return "lora.block" + std::to_string(l) + "." + proj + "." + f;
}
std::string mlp_name(const std::string& prefix, int i, const char* f) {
  return prefix + "." + std::to_string(i) + "." + f;
}

template <typename T>
T gelu(T x) {
  const T c = T(0.7978845608028654);
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T c = T(0.7978845608028654);
  const T th = std::tanh(c * (x + T(0.044715) * x * x * x));
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * c * (T(1) + T(3 * 0.044715) * x * x);
}

// ---- dense layers -------------------------------------------------------

template <typename T>
void linear(const MatR<T>& X, const MatR<T>& W, const MatR<T>* b, MatR<T>& Y) {
  require(X.cols() == W.cols(), "linear: input width mismatch");
  Y.resize(X.rows(), W.rows());
  simd::gemm_nt<T>(X.data(), W.data(), b ? b->data() : nullptr, Y.data(), X.rows(), X.cols(), W.rows());
}

// dX += dY W, dW += dY^T X, db += column sums of dY (each optional).
template <typename T>
void linear_back(const MatR<T>& X, const MatR<T>& W, const MatR<T>& dY, MatR<T>* dX, MatR<T>* dW, MatR<T>* db) {
  if (dX) {
    if (dX->size() == 0) dX->setZero(X.rows(), X.cols());
    simd::gemm_nn_acc<T>(dY.data(), W.data(), dX->data(), dY.rows(), W.rows(), W.cols());
  }
  if (dW) simd::gemm_tn_acc<T>(dY.data(), X.data(), dW->data(), dY.rows(), W.rows(), W.cols());
  if (db) *db += dY.colwise().sum();
}

template <typename T>
struct LnCache {
  MatR<T> xhat;
  ColV<T> rstd;
};

template <typename T>
void ln_fwd(const MatR<T>& X, const MatR<T>& g, const MatR<T>& b, MatR<T>& Y, LnCache<T>& c) {
  const auto n = X.rows(), d = X.cols();
  c.xhat.resize(n, d);
  c.rstd.resize(n);
  Y.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mu = X.row(r).mean();
    const T var = (X.row(r).array() - mu).square().mean();
    const T rs = T(1) / std::sqrt(var + T(kLnEps));
    c.rstd[r] = rs;
    c.xhat.row(r) = (X.row(r).array() - mu) * rs;
    Y.row(r) = c.xhat.row(r).cwiseProduct(g) + b;
  }
}

template <typename T>
void ln_back(const MatR<T>& dY, const MatR<T>& g, const LnCache<T>& c, MatR<T>& dX, MatR<T>* dg, MatR<T>* db) {
  const auto n = dY.rows(), d = dY.cols();
  if (dX.size() == 0) dX.setZero(n, d);
  if (dg) *dg += dY.cwiseProduct(c.xhat).colwise().sum();
  if (db) *db += dY.colwise().sum();
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto dxhat = dY.row(r).cwiseProduct(g);
    const T m1 = dxhat.mean();
    const T m2 = dxhat.cwiseProduct(c.xhat.row(r)).mean();
    dX.row(r).array() += c.rstd[r] * (dxhat.array() - m1 - c.xhat.row(r).array() * m2);
  }
}

// MLP with GELU between layers: in[i] -> pre[i] = in[i] W_i^T + b_i, in[i+1] = gelu(pre[i]).
template <typename T>
struct MlpCache {
  std::vector<MatR<T>> in, pre;
};

template <typename T>
struct GradSink;

// ---- caches ---------------------------------------------------------------

template <typename T>
struct LayerCache {
  MatR<T> x_in;
  LnCache<T> ln1;
  MatR<T> u, q, k, v, tq, tv, o;
  std::vector<MatR<T>> probs;  // per (sample, head): L x L
  MatR<T> y_pre, drop_attn;
  MatR<T> x1;
  LnCache<T> ln2;
  MatR<T> z, f1, g, drop_ffn;
};

template <typename T>
struct Cache {
  int nb = 0, K = 0, L = 0;
  bool dropout = false;
  std::vector<int> first_token;  // per sample: first real token (3 * pad)
  MlpCache<T> emb_r, emb_o, emb_a;
  MatR<T> h0;
  LnCache<T> ln_emb;
  MatR<T> drop_emb;
  std::vector<LayerCache<T>> layers;
  MatR<T> x_final;
  LnCache<T> ln_f;
  MatR<T> hf;
  MlpCache<T> head;
  MatR<T> pred;
};

// Gradient destinations; null pointers mean "frozen, do not accumulate".
template <typename T>
struct GradSink {
  TensorList<T>* base = nullptr;
  TensorList<T>* adapters = nullptr;
  MatR<T>* b(const std::string& n) { return base ? &(*base)[n] : nullptr; }
  MatR<T>* a(const std::string& n) { return adapters ? &(*adapters)[n] : nullptr; }
};

template <typename T>
class Net {
 public:
  Net(const ModelConfig& cfg, const TensorList<T>& p, const TensorList<T>* ad) : cfg_(cfg), p_(p), ad_(ad) {}

  // Forward over `batch`; `sample_offset` is the global index of sample 0 (dropout streams).
  void forward(const Batch& batch, bool train, std::uint64_t seed, int sample_offset, Cache<T>& c) const;
  void backward(const Batch& batch, Cache<T>& c, const MatR<T>& dpred, GradSink<T>& gs) const;

 private:
  void mlp_fwd(const std::string& prefix, int n_layers, const MatR<T>& x, MlpCache<T>& c) const;
  void mlp_back(const std::string& prefix, int n_layers, MlpCache<T>& c, const MatR<T>& dout, MatR<T>* dx,
                GradSink<T>& gs) const;
  void attention_fwd(LayerCache<T>& lc, const Cache<T>& c) const;
  void attention_back(LayerCache<T>& lc, const Cache<T>& c, const MatR<T>& dO, MatR<T>& dQ, MatR<T>& dK,
                      MatR<T>& dV) const;

  const ModelConfig& cfg_;
  const TensorList<T>& p_;
  const TensorList<T>* ad_;
};

template <typename T>
void Net<T>::mlp_fwd(const std::string& prefix, int n_layers, const MatR<T>& x, MlpCache<T>& c) const {
  c.in.assign(n_layers, MatR<T>());
  c.pre.assign(n_layers, MatR<T>());
  c.in[0] = x;
  for (int i = 0; i < n_layers; ++i) {
    const MatR<T>& b = p_[mlp_name(prefix, i, "b")];
    linear(c.in[i], p_[mlp_name(prefix, i, "W")], &b, c.pre[i]);
    if (i + 1 < n_layers) c.in[i + 1] = c.pre[i].unaryExpr([](T v) { return gelu(v); });
  }
}

template <typename T>
void Net<T>::mlp_back(const std::string& prefix, int n_layers, MlpCache<T>& c, const MatR<T>& dout, MatR<T>* dx,
                      GradSink<T>& gs) const {
  MatR<T> d = dout;
  for (int i = n_layers - 1; i >= 0; --i) {
    MatR<T> din;
    const bool need_dx = i > 0 || dx != nullptr;
    linear_back(c.in[i], p_[mlp_name(prefix, i, "W")], d, need_dx ? &din : nullptr, gs.b(mlp_name(prefix, i, "W")),
                gs.b(mlp_name(prefix, i, "b")));
    if (i > 0) {
      d = din.cwiseProduct(c.pre[i - 1].unaryExpr([](T v) { return gelu_grad(v); }));
    } else if (dx) {
      *dx = std::move(din);
    }
  }
}

template <typename T>
void Net<T>::attention_fwd(LayerCache<T>& lc, const Cache<T>& c) const {
  const int H = cfg_.n_heads, dh = cfg_.d_head(), d = cfg_.d_model, L = c.L;
  const T scale = T(1) / std::sqrt(T(dh));
  lc.o.setZero(lc.q.rows(), d);
  lc.probs.assign(static_cast<std::size_t>(c.nb) * H, MatR<T>());
  std::vector<T> s(L);
  for (int b = 0; b < c.nb; ++b) {
    const int lo = c.first_token[b];
    for (int h = 0; h < H; ++h) {
      MatR<T>& P = lc.probs[static_cast<std::size_t>(b) * H + h];
      P.setZero(L, L);
      for (int j = lo; j < L; ++j) {
        const T* qj = lc.q.data() + (static_cast<Eigen::Index>(b) * L + j) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (int k = lo; k <= j; ++k) {
          const T* kk = lc.k.data() + (static_cast<Eigen::Index>(b) * L + k) * d + h * dh;
          s[k] = simd::dot<T>(qj, kk, dh) * scale;
          mx = std::max(mx, s[k]);
        }
        T z = 0;
        for (int k = lo; k <= j; ++k) {
          s[k] = std::exp(s[k] - mx);
          z += s[k];
        }
        T* oj = lc.o.data() + (static_cast<Eigen::Index>(b) * L + j) * d + h * dh;
        for (int k = lo; k <= j; ++k) {
          const T pk = s[k] / z;
          P(j, k) = pk;
          simd::axpy<T>(pk, lc.v.data() + (static_cast<Eigen::Index>(b) * L + k) * d + h * dh, oj, dh);
        }
      }
    }
  }
}

template <typename T>
void Net<T>::attention_back(LayerCache<T>& lc, const Cache<T>& c, const MatR<T>& dO, MatR<T>& dQ, MatR<T>& dK,
                            MatR<T>& dV) const {
  const int H = cfg_.n_heads, dh = cfg_.d_head(), d = cfg_.d_model, L = c.L;
  const T scale = T(1) / std::sqrt(T(dh));
  dQ.setZero(dO.rows(), d);
  dK.setZero(dO.rows(), d);
  dV.setZero(dO.rows(), d);
  std::vector<T> dp(L);
  for (int b = 0; b < c.nb; ++b) {
    const int lo = c.first_token[b];
    const Eigen::Index base = static_cast<Eigen::Index>(b) * L;
    for (int h = 0; h < H; ++h) {
      const MatR<T>& P = lc.probs[static_cast<std::size_t>(b) * H + h];
      for (int j = lo; j < L; ++j) {
        const T* doj = dO.data() + (base + j) * d + h * dh;
        T acc = 0;
        for (int k = lo; k <= j; ++k) {
          dp[k] = simd::dot<T>(doj, lc.v.data() + (base + k) * d + h * dh, dh);
          acc += P(j, k) * dp[k];
          simd::axpy<T>(P(j, k), doj, dV.data() + (base + k) * d + h * dh, dh);
        }
        const T* qj = lc.q.data() + (base + j) * d + h * dh;
        T* dqj = dQ.data() + (base + j) * d + h * dh;
        for (int k = lo; k <= j; ++k) {
          const T ds = P(j, k) * (dp[k] - acc) * scale;
          simd::axpy<T>(ds, lc.k.data() + (base + k) * d + h * dh, dqj, dh);
          simd::axpy<T>(ds, qj, dK.data() + (base + k) * d + h * dh, dh);
        }
      }
    }
  }
}

// Dropout masks are drawn per sample from derive_seed(seed, global sample index)
// in a fixed site order: embedding, then (attention, feedforward) per layer.
template <typename T>
std::vector<MatR<T>> dropout_masks(const ModelConfig& cfg, int nb, int L, std::uint64_t seed, int offset) {
  const int sites = 1 + 2 * cfg.n_layers, d = cfg.d_model;
  std::vector<MatR<T>> masks(sites, MatR<T>(static_cast<Eigen::Index>(nb) * L, d));
  const double p = cfg.dropout_rate;
  const T keep_scale = T(1.0 / (1.0 - p));
  for (int b = 0; b < nb; ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(offset + b)));
    for (int s = 0; s < sites; ++s)
      for (int r = 0; r < L; ++r)
        for (int j = 0; j < d; ++j)
          masks[s](static_cast<Eigen::Index>(b) * L + r, j) = rng.uniform() < p ? T(0) : keep_scale;
  }
  return masks;
}

template <typename T>
void Net<T>::forward(const Batch& batch, bool train, std::uint64_t seed, int sample_offset, Cache<T>& c) const {
  const int K = cfg_.K, L = 3 * K, d = cfg_.d_model, nb = batch.B;
  c.nb = nb;
  c.K = K;
  c.L = L;
  const Eigen::Index N = static_cast<Eigen::Index>(nb) * L;
  c.first_token.assign(nb, L);
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < K; ++k)
      if (batch.valid(b, k)) {
        c.first_token[b] = 3 * k;
        break;
      }

  const bool drop = train && cfg_.dropout_rate > 0.0;
  c.dropout = drop;
  std::vector<MatR<T>> masks;
  if (drop) masks = dropout_masks<T>(cfg_, nb, L, seed, sample_offset);

  MatR<T> rtg_in(static_cast<Eigen::Index>(nb) * K, 1);
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < K; ++k) rtg_in(b * K + k, 0) = static_cast<T>(batch.rtg(b, k) / cfg_.rtg_scale);
  const MatR<T> obs_in = batch.obs.cast<T>();
  const MatR<T> act_in = batch.act.cast<T>();
  mlp_fwd("embed.rtg", cfg_.n_embed_layers, rtg_in, c.emb_r);
  mlp_fwd("embed.obs", cfg_.n_embed_layers, obs_in, c.emb_o);
  mlp_fwd("embed.act", cfg_.n_embed_layers, act_in, c.emb_a);
  const MatR<T>& time = p_["embed.time"];
  c.h0.resize(N, d);
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < K; ++k) {
      const Eigen::Index src = static_cast<Eigen::Index>(b) * K + k;
      const Eigen::Index dst = static_cast<Eigen::Index>(b) * L + 3 * k;
      const int ts = batch.timesteps[src];
      c.h0.row(dst) = c.emb_r.pre.back().row(src) + time.row(ts);
      c.h0.row(dst + 1) = c.emb_o.pre.back().row(src) + time.row(ts);
      c.h0.row(dst + 2) = c.emb_a.pre.back().row(src) + time.row(ts);
    }
  MatR<T> x;
  ln_fwd(c.h0, p_["embed.ln.g"], p_["embed.ln.b"], x, c.ln_emb);
  if (drop) {
    c.drop_emb = std::move(masks[0]);
    x = x.cwiseProduct(c.drop_emb);
  }

  const T lscale = static_cast<T>(cfg_.lora_scale());
  c.layers.assign(cfg_.n_layers, LayerCache<T>());
  for (int l = 0; l < cfg_.n_layers; ++l) {
    LayerCache<T>& lc = c.layers[l];
    lc.x_in = std::move(x);
    ln_fwd(lc.x_in, p_[blk(l, "ln1.g")], p_[blk(l, "ln1.b")], lc.u, lc.ln1);
    linear(lc.u, p_[blk(l, "attn.Wq")], &p_[blk(l, "attn.bq")], lc.q);
    linear(lc.u, p_[blk(l, "attn.Wk")], &p_[blk(l, "attn.bk")], lc.k);
    linear(lc.u, p_[blk(l, "attn.Wv")], &p_[blk(l, "attn.bv")], lc.v);
    if (ad_ && !ad_->empty()) {
      MatR<T> tmp;
      linear(lc.u, (*ad_)[lora(l, "q", "A")], static_cast<const MatR<T>*>(nullptr), lc.tq);
      linear(lc.tq, (*ad_)[lora(l, "q", "B")], static_cast<const MatR<T>*>(nullptr), tmp);
      lc.q += lscale * tmp;
      linear(lc.u, (*ad_)[lora(l, "v", "A")], static_cast<const MatR<T>*>(nullptr), lc.tv);
      linear(lc.tv, (*ad_)[lora(l, "v", "B")], static_cast<const MatR<T>*>(nullptr), tmp);
      lc.v += lscale * tmp;
    }
    attention_fwd(lc, c);
    linear(lc.o, p_[blk(l, "attn.Wo")], &p_[blk(l, "attn.bo")], lc.y_pre);
    if (drop) {
      lc.drop_attn = std::move(masks[1 + 2 * l]);
      lc.x1 = lc.x_in + lc.y_pre.cwiseProduct(lc.drop_attn);
    } else {
      lc.x1 = lc.x_in + lc.y_pre;
    }
    ln_fwd(lc.x1, p_[blk(l, "ln2.g")], p_[blk(l, "ln2.b")], lc.z, lc.ln2);
    linear(lc.z, p_[blk(l, "ffn.W1")], &p_[blk(l, "ffn.b1")], lc.f1);
    lc.g = lc.f1.unaryExpr([](T v) { return gelu(v); });
    MatR<T> f2;
    linear(lc.g, p_[blk(l, "ffn.W2")], &p_[blk(l, "ffn.b2")], f2);
    if (drop) {
      lc.drop_ffn = std::move(masks[2 + 2 * l]);
      x = lc.x1 + f2.cwiseProduct(lc.drop_ffn);
    } else {
      x = lc.x1 + f2;
    }
  }
  c.x_final = std::move(x);
  ln_fwd(c.x_final, p_["final.ln.g"], p_["final.ln.b"], c.hf, c.ln_f);
  MatR<T> hobs(static_cast<Eigen::Index>(nb) * K, d);
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < K; ++k) hobs.row(static_cast<Eigen::Index>(b) * K + k) = c.hf.row(static_cast<Eigen::Index>(b) * L + 3 * k + 1);
  mlp_fwd("head", 2, hobs, c.head);
  c.pred = c.head.pre.back();
}

template <typename T>
void Net<T>::backward(const Batch& batch, Cache<T>& c, const MatR<T>& dpred, GradSink<T>& gs) const {
  const int K = c.K, L = c.L, d = cfg_.d_model, nb = c.nb;
  const Eigen::Index N = static_cast<Eigen::Index>(nb) * L;
  MatR<T> dhobs;
  mlp_back("head", 2, c.head, dpred, &dhobs, gs);
  MatR<T> dhf = MatR<T>::Zero(N, d);
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < K; ++k) dhf.row(static_cast<Eigen::Index>(b) * L + 3 * k + 1) = dhobs.row(static_cast<Eigen::Index>(b) * K + k);
  MatR<T> dx;
  ln_back(dhf, p_["final.ln.g"], c.ln_f, dx, gs.b("final.ln.g"), gs.b("final.ln.b"));

  const T lscale = static_cast<T>(cfg_.lora_scale());
  const bool drop = c.dropout;
  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    LayerCache<T>& lc = c.layers[l];
    // x_out = x1 + drop(ffn(ln2(x1)))
    MatR<T> df2 = drop ? MatR<T>(dx.cwiseProduct(lc.drop_ffn)) : dx;
    MatR<T> dg;
    linear_back(lc.g, p_[blk(l, "ffn.W2")], df2, &dg, gs.b(blk(l, "ffn.W2")), gs.b(blk(l, "ffn.b2")));
    MatR<T> df1 = dg.cwiseProduct(lc.f1.unaryExpr([](T v) { return gelu_grad(v); }));
    MatR<T> dz;
    linear_back(lc.z, p_[blk(l, "ffn.W1")], df1, &dz, gs.b(blk(l, "ffn.W1")), gs.b(blk(l, "ffn.b1")));
    MatR<T> dx1 = dx;
    ln_back(dz, p_[blk(l, "ln2.g")], lc.ln2, dx1, gs.b(blk(l, "ln2.g")), gs.b(blk(l, "ln2.b")));
    // x1 = x_in + drop(attn(ln1(x_in)))
    MatR<T> dy = drop ? MatR<T>(dx1.cwiseProduct(lc.drop_attn)) : dx1;
    MatR<T> dO;
    linear_back(lc.o, p_[blk(l, "attn.Wo")], dy, &dO, gs.b(blk(l, "attn.Wo")), gs.b(blk(l, "attn.bo")));
    MatR<T> dQ, dK, dV;
    attention_back(lc, c, dO, dQ, dK, dV);
    MatR<T> du;
    linear_back(lc.u, p_[blk(l, "attn.Wq")], dQ, &du, gs.b(blk(l, "attn.Wq")), gs.b(blk(l, "attn.bq")));
    linear_back(lc.u, p_[blk(l, "attn.Wk")], dK, &du, gs.b(blk(l, "attn.Wk")), gs.b(blk(l, "attn.bk")));
    linear_back(lc.u, p_[blk(l, "attn.Wv")], dV, &du, gs.b(blk(l, "attn.Wv")), gs.b(blk(l, "attn.bv")));
    if (ad_ && !ad_->empty()) {
      for (const char* proj : {"q", "v"}) {
        const MatR<T> dproj = lscale * (proj[0] == 'q' ? dQ : dV);
        const MatR<T>& t = proj[0] == 'q' ? lc.tq : lc.tv;
        MatR<T> dt;
        linear_back(t, (*ad_)[lora(l, proj, "B")], dproj, &dt, gs.a(lora(l, proj, "B")), static_cast<MatR<T>*>(nullptr));
        linear_back(lc.u, (*ad_)[lora(l, proj, "A")], dt, &du, gs.a(lora(l, proj, "A")), static_cast<MatR<T>*>(nullptr));
      }
    }
    dx = std::move(dx1);
    ln_back(du, p_[blk(l, "ln1.g")], lc.ln1, dx, gs.b(blk(l, "ln1.g")), gs.b(blk(l, "ln1.b")));
  }

  if (drop) dx = dx.cwiseProduct(c.drop_emb);
  MatR<T> dh0;
  ln_back(dx, p_["embed.ln.g"], c.ln_emb, dh0, gs.b("embed.ln.g"), gs.b("embed.ln.b"));
  MatR<T> der(static_cast<Eigen::Index>(nb) * K, d), deo(static_cast<Eigen::Index>(nb) * K, d),
      dea(static_cast<Eigen::Index>(nb) * K, d);
  MatR<T>* dtime = gs.b("embed.time");
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < K; ++k) {
      const Eigen::Index src = static_cast<Eigen::Index>(b) * K + k;
      const Eigen::Index tok = static_cast<Eigen::Index>(b) * L + 3 * k;
      der.row(src) = dh0.row(tok);
      deo.row(src) = dh0.row(tok + 1);
      dea.row(src) = dh0.row(tok + 2);
      if (dtime) dtime->row(batch.timesteps[src]) += dh0.row(tok) + dh0.row(tok + 1) + dh0.row(tok + 2);
    }
  mlp_back("embed.rtg", cfg_.n_embed_layers, c.emb_r, der, nullptr, gs);
  mlp_back("embed.obs", cfg_.n_embed_layers, c.emb_o, deo, nullptr, gs);
  mlp_back("embed.act", cfg_.n_embed_layers, c.emb_a, dea, nullptr, gs);
}

template <typename T>
void add_normal(TensorList<T>& list, const std::string& name, int r, int c, double sd, Rng& rng) {
  MatR<T> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal(0.0, sd));
  list.add(name, std::move(m), true);
}

template <typename T>
void add_const(TensorList<T>& list, const std::string& name, int r, int c, double v) {
  list.add(name, MatR<T>::Constant(r, c, static_cast<T>(v)), false);
}

// Shapes of every base tensor in creation order.
struct Shape {
  std::string name;
  int rows, cols;
  enum Kind { kWeight, kBias, kScale } kind;
};

std::vector<Shape> base_shapes(const ModelConfig& cfg) {
  std::vector<Shape> s;
  const int d = cfg.d_model;
  auto mlp = [&](const std::string& prefix, int in, int out, int layers) {
    for (int i = 0; i < layers; ++i) {
      const int fan_in = i == 0 ? in : d;
      const int fan_out = i + 1 == layers ? out : d;
      s.push_back({mlp_name(prefix, i, "W"), fan_out, fan_in, Shape::kWeight});
      s.push_back({mlp_name(prefix, i, "b"), 1, fan_out, Shape::kBias});
    }
  };
  mlp("embed.rtg", 1, d, cfg.n_embed_layers);
  mlp("embed.obs", cfg.n_o, d, cfg.n_embed_layers);
  mlp("embed.act", cfg.n_a, d, cfg.n_embed_layers);
  s.push_back({"embed.time", cfg.K, d, Shape::kWeight});
  s.push_back({"embed.ln.g", 1, d, Shape::kScale});
  s.push_back({"embed.ln.b", 1, d, Shape::kBias});
  for (int l = 0; l < cfg.n_layers; ++l) {
    s.push_back({blk(l, "ln1.g"), 1, d, Shape::kScale});
    s.push_back({blk(l, "ln1.b"), 1, d, Shape::kBias});
    for (const char* p : {"q", "k", "v", "o"}) {
      s.push_back({blk(l, std::string("attn.W") + p), d, d, Shape::kWeight});
      s.push_back({blk(l, std::string("attn.b") + p), 1, d, Shape::kBias});
    }
    s.push_back({blk(l, "ln2.g"), 1, d, Shape::kScale});
    s.push_back({blk(l, "ln2.b"), 1, d, Shape::kBias});
    s.push_back({blk(l, "ffn.W1"), cfg.d_ff, d, Shape::kWeight});
    s.push_back({blk(l, "ffn.b1"), 1, cfg.d_ff, Shape::kBias});
    s.push_back({blk(l, "ffn.W2"), d, cfg.d_ff, Shape::kWeight});
    s.push_back({blk(l, "ffn.b2"), 1, d, Shape::kBias});
  }
  s.push_back({"final.ln.g", 1, d, Shape::kScale});
  s.push_back({"final.ln.b", 1, d, Shape::kBias});
  mlp("head", d, cfg.n_a, 2);
  return s;
}

std::vector<Shape> adapter_shapes(const ModelConfig& cfg) {
  std::vector<Shape> s;
  for (int l = 0; l < cfg.n_layers; ++l)
    for (const char* p : {"q", "v"}) {
      s.push_back({lora(l, p, "A"), cfg.lora_rank, cfg.d_model, Shape::kWeight});
      s.push_back({lora(l, p, "B"), cfg.d_model, cfg.lora_rank, Shape::kWeight});
    }
  return s;
}

template <typename T>
void check_list(const std::vector<Shape>& shapes, const TensorList<T>& list, const char* what) {
  if (list.size() != shapes.size())
    throw ValidationError(std::string(what) + ": expected " + std::to_string(shapes.size()) + " tensors, found " +
                          std::to_string(list.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = list.item(i);
    const auto& s = shapes[i];
    if (t.name != s.name) throw ValidationError(std::string(what) + ": tensor " + std::to_string(i) + " is '" + t.name + "', expected '" + s.name + "'");
    if (t.value.rows() != s.rows || t.value.cols() != s.cols)
      throw ValidationError("tensor '" + s.name + "' has shape " + std::to_string(t.value.rows()) + "x" +
                            std::to_string(t.value.cols()) + ", config requires " + std::to_string(s.rows) + "x" +
                            std::to_string(s.cols));
  }
}

template <typename T>
void check_batch(const ModelConfig& cfg, const Batch& batch) {
  batch.validate();
  require(batch.K == cfg.K, "batch context length " + std::to_string(batch.K) + " differs from model K = " + std::to_string(cfg.K));
  require(batch.n_o() == cfg.n_o, "batch observation width " + std::to_string(batch.n_o()) + " differs from model n_o = " + std::to_string(cfg.n_o));
  require(batch.n_a() == cfg.n_a, "batch action width " + std::to_string(batch.n_a()) + " differs from model n_a = " + std::to_string(cfg.n_a));
  for (int ts : batch.timesteps) require(ts >= 0 && ts < cfg.K, "batch timestep outside [0, K)");
}

}  // namespace

template <typename T>
TensorList<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  TensorList<T> p;
  for (const auto& s : base_shapes(cfg)) {
    switch (s.kind) {
      case Shape::kWeight: add_normal(p, s.name, s.rows, s.cols, kInitStd, rng); break;
      case Shape::kBias: add_const(p, s.name, s.rows, s.cols, 0.0); break;
      case Shape::kScale: add_const(p, s.name, s.rows, s.cols, 1.0); break;
    }
  }
  return p;
}

template <typename T>
TensorList<T> init_adapters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TensorList<T> a;
  if (cfg.lora_rank == 0) return a;
  Rng rng(seed);
  for (const auto& s : adapter_shapes(cfg)) {
    if (s.name.back() == 'A') {
      add_normal(a, s.name, s.rows, s.cols, 1.0 / std::sqrt(double(cfg.d_model)), rng);
    } else {
      a.add(s.name, MatR<T>::Zero(s.rows, s.cols), true);
    }
  }
  return a;
}

template <typename T>
void check_shapes(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>* adapters) {
  check_list(base_shapes(cfg), params, "parameters");
  if (adapters && !adapters->empty()) {
    if (cfg.lora_rank == 0) throw ValidationError("adapters supplied but the config has lora_rank = 0");
    check_list(adapter_shapes(cfg), *adapters, "adapters");
  }
}

template <typename T>
MatR<T> forward(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>* adapters, const Batch& batch,
                bool train_mode, std::uint64_t dropout_seed) {
  check_batch<T>(cfg, batch);
  Net<T> net(cfg, params, adapters);
  Cache<T> cache;
  net.forward(batch, train_mode, dropout_seed, 0, cache);
  return std::move(cache.pred);
}

template <typename T>
double action_loss(const MatR<T>& pred, const Batch& batch) {
  require(pred.rows() == batch.act.rows() && pred.cols() == batch.act.cols(), "action_loss: shape mismatch");
  const int count = batch.n_real();
  require(count > 0, "action_loss: every position is masked");
  double s = 0.0;
  for (int b = 0; b < batch.B; ++b)
    for (int k = 0; k < batch.K; ++k) {
      if (!batch.valid(b, k)) continue;
      const Eigen::Index r = static_cast<Eigen::Index>(b) * batch.K + k;
      for (Eigen::Index j = 0; j < pred.cols(); ++j) {
        const double e = static_cast<double>(pred(r, j)) - batch.act(r, j);
        s += e * e;
      }
    }
  return s / (static_cast<double>(count) * pred.cols());
}

template <typename T>
LossGrad<T> loss_and_grad(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>* adapters,
                          const Batch& batch, Trainable trainable, bool train_mode, std::uint64_t dropout_seed, int jobs,
                          int chunk) {
  check_batch<T>(cfg, batch);
  require(chunk >= 1, "loss_and_grad: chunk must be >= 1");
  const bool has_adapters = adapters && !adapters->empty();
  require(trainable == Trainable::kAll || has_adapters, "loss_and_grad: adapters-only training without adapters");
  const int count = batch.n_real();
  require(count > 0, "loss_and_grad: every position is masked");
  const double denom = static_cast<double>(count) * cfg.n_a;

  const int n_chunks = (batch.B + chunk - 1) / chunk;
  struct Part {
    double sq = 0.0;
    TensorList<T> base, ad;
  };
  std::vector<Part> parts(n_chunks);
  auto run = [&](int ci) {
    const int b0 = ci * chunk, b1 = std::min(batch.B, b0 + chunk);
    const Batch sub = batch.slice(b0, b1);
    Net<T> net(cfg, params, adapters);
    Cache<T> cache;
    net.forward(sub, train_mode, dropout_seed, b0, cache);
    MatR<T> dpred = MatR<T>::Zero(cache.pred.rows(), cache.pred.cols());
    Part& part = parts[ci];
    for (int b = 0; b < sub.B; ++b)
      for (int k = 0; k < sub.K; ++k) {
        if (!sub.valid(b, k)) continue;
        const Eigen::Index r = static_cast<Eigen::Index>(b) * sub.K + k;
        for (Eigen::Index j = 0; j < cache.pred.cols(); ++j) {
          const double e = static_cast<double>(cache.pred(r, j)) - sub.act(r, j);
          part.sq += e * e;
          dpred(r, j) = static_cast<T>(2.0 * e / denom);
        }
      }
    GradSink<T> gs;
    if (trainable == Trainable::kAll) {
      part.base = params.zeros_like();
      gs.base = &part.base;
    }
    if (has_adapters) {
      part.ad = adapters->zeros_like();
      gs.adapters = &part.ad;
    }
    net.backward(sub, cache, dpred, gs);
  };

  jobs = std::max(1, std::min(jobs, n_chunks));
  if (jobs == 1) {
    for (int ci = 0; ci < n_chunks; ++ci) run(ci);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (int ci = w; ci < n_chunks; ci += jobs) run(ci);
      });
    for (auto& t : pool) t.join();
  }

  LossGrad<T> out;
  double sq = 0.0;
  for (const auto& part : parts) sq += part.sq;
  out.loss = sq / denom;
  auto reduce = [&](TensorList<T> Part::*member) {
    TensorList<T> total = std::move(parts[0].*member);
    for (int ci = 1; ci < n_chunks; ++ci)
      for (std::size_t i = 0; i < total.size(); ++i) total.item(i).value += (parts[ci].*member).item(i).value;
    return total;
  };
  if (trainable == Trainable::kAll) {
    TensorList<T> base = reduce(&Part::base);
    for (auto& t : base) out.grads.add(t.name, std::move(t.value), t.decay);
  }
  if (has_adapters) {
    TensorList<T> ad = reduce(&Part::ad);
    for (auto& t : ad) out.grads.add(t.name, std::move(t.value), t.decay);
  }
  for (const auto& t : out.grads)
    if (!t.value.allFinite()) throw NumericalFault("non-finite gradient in tensor '" + t.name + "'");
  return out;
}

template <typename T>
TensorList<T> lora_merge(const ModelConfig& cfg, const TensorList<T>& params, const TensorList<T>& adapters) {
  check_shapes(cfg, params, &adapters);
  TensorList<T> out = params;
  if (adapters.empty()) return out;
  const T s = static_cast<T>(cfg.lora_scale());
  for (int l = 0; l < cfg.n_layers; ++l)
    for (const char* p : {"q", "v"}) {
      const MatR<T>& A = adapters[lora(l, p, "A")];
      const MatR<T>& B = adapters[lora(l, p, "B")];
      require(A.rows() == B.cols(), "lora_merge: rank mismatch in '" + lora(l, p, "A") + "'");
      MatR<T> delta = B * A;
      out[blk(l, std::string("attn.W") + p)] += s * delta;
    }
  return out;
}

#define DTC_INSTANTIATE(T)                                                                                       \
  template TensorList<T> init_params<T>(const ModelConfig&, std::uint64_t);                                     \
  template TensorList<T> init_adapters<T>(const ModelConfig&, std::uint64_t);                                   \
  template void check_shapes<T>(const ModelConfig&, const TensorList<T>&, const TensorList<T>*);                \
  template MatR<T> forward<T>(const ModelConfig&, const TensorList<T>&, const TensorList<T>*, const Batch&, bool, \
                              std::uint64_t);                                                                    \
  template double action_loss<T>(const MatR<T>&, const Batch&);                                                 \
  template LossGrad<T> loss_and_grad<T>(const ModelConfig&, const TensorList<T>&, const TensorList<T>*,         \
                                        const Batch&, Trainable, bool, std::uint64_t, int, int);                \
  template TensorList<T> lora_merge<T>(const ModelConfig&, const TensorList<T>&, const TensorList<T>&);

DTC_INSTANTIATE(float)
DTC_INSTANTIATE(double)

}  // namespace dtc::model
