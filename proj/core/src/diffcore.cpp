#include "progeval/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "progeval/error.hpp"
#include "progeval/random.hpp"

namespace progeval::diffcore {
namespace {

constexpr double kLayerNormEps = 1e-5;

enum DropLayer : int { kDropHidden = 1, kDropEncoder = 2, kDropDecoder = 3, kDropAttention = 4 };

enum class Role { kWeight, kBias, kGain, kShift };

struct TensorShape {
  const char* name;
  int rows;
  int cols;
  int fan_in;
  Role role;
};

std::vector<TensorShape> shapes_of(const ArchSpec& a) {
  const int d = a.input_dim;
  const int h = a.hidden;
  const int dd = a.decoder;
  switch (a.kind) {
    case ArchKind::kLinear:
      return {{"w", d, 1, d, Role::kWeight}, {"b", 1, 1, d, Role::kBias}};
    case ArchKind::kUtilityMlp:
      return {{"w1", d, h, d, Role::kWeight},     {"b1", 1, h, d, Role::kBias},
              {"ln1_g", 1, h, 0, Role::kGain},    {"ln1_b", 1, h, 0, Role::kShift},
              {"w2", h, 1, h, Role::kWeight},     {"b2", 1, 1, h, Role::kBias}};
    case ArchKind::kInteraction:
      return {{"enc_w", d, h, d, Role::kWeight},          {"enc_b", 1, h, d, Role::kBias},
              {"enc_ln_g", 1, h, 0, Role::kGain},         {"enc_ln_b", 1, h, 0, Role::kShift},
              {"dec_w", 3 * h, dd, 3 * h, Role::kWeight}, {"dec_b", 1, dd, 3 * h, Role::kBias},
              {"dec_ln_g", 1, dd, 0, Role::kGain},        {"dec_ln_b", 1, dd, 0, Role::kShift},
              {"out_w", dd, 1, dd, Role::kWeight},        {"out_b", 1, 1, dd, Role::kBias}};
    case ArchKind::kAttention:
      return {{"enc_w", d, h, d, Role::kWeight},     {"enc_b", 1, h, d, Role::kBias},
              {"enc_ln_g", 1, h, 0, Role::kGain},    {"enc_ln_b", 1, h, 0, Role::kShift},
              {"attn_ln_g", 1, h, 0, Role::kGain},   {"attn_ln_b", 1, h, 0, Role::kShift},
              {"wq", h, h, h, Role::kWeight},        {"bq", 1, h, h, Role::kBias},
              {"wk", h, h, h, Role::kWeight},        {"bk", 1, h, h, Role::kBias},
              {"wv", h, h, h, Role::kWeight},        {"bv", 1, h, h, Role::kBias},
              {"wo", h, h, h, Role::kWeight},        {"bo", 1, h, h, Role::kBias},
              {"dec_w", h, dd, h, Role::kWeight},    {"dec_b", 1, dd, h, Role::kBias},
              {"dec_ln_g", 1, dd, 0, Role::kGain},   {"dec_ln_b", 1, dd, 0, Role::kShift},
              {"out_w", dd, 1, dd, Role::kWeight},   {"out_b", 1, 1, dd, Role::kBias}};
  }
  return {};
}

// ---- primitive layers -------------------------------------------------------

template <typename T>
void linear_forward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b, Matrix<T>& y) {
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
}

template <typename T>
void linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dy, Matrix<T>& dw,
                     Matrix<T>& db, Matrix<T>* dx = nullptr) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  if (dx != nullptr) dx->noalias() = dy * w.transpose();
}

template <typename T>
struct LayerNormCache {
  Matrix<T> xhat;
  Vector<T> inv_std;
};

template <typename T>
void layernorm_forward(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& shift,
                       Matrix<T>& y, LayerNormCache<T>& cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index h = x.cols();
  cache.xhat.resize(n, h);
  cache.inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mu = x.row(i).mean();
    const T var = (x.row(i).array() - mu).square().mean();
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    cache.inv_std(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mu) * inv;
  }
  y = (cache.xhat.array().rowwise() * gain.row(0).array()).rowwise() + shift.row(0).array();
}

template <typename T>
void layernorm_backward(const Matrix<T>& dy, const Matrix<T>& gain, const LayerNormCache<T>& cache,
                        Matrix<T>& dgain, Matrix<T>& dshift, Matrix<T>& dx) {
  const Eigen::Index n = dy.rows();
  const T h = static_cast<T>(dy.cols());
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dshift.row(0) += dy.colwise().sum();
  Matrix<T> dxhat = dy.array().rowwise() * gain.row(0).array();
  dx.resize(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const T sum_d = dxhat.row(i).sum();
    const T sum_dx = (dxhat.row(i).array() * cache.xhat.row(i).array()).sum();
    dx.row(i) = (cache.inv_std(i) / h) *
                (h * dxhat.row(i).array() - sum_d - cache.xhat.row(i).array() * sum_dx);
  }
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

template <typename T>
Matrix<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t key) {
  Matrix<T> mask(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const auto idx = static_cast<std::uint64_t>(i * cols + j);
      mask(i, j) = keyed_uniform(key, idx) < p ? T(0) : keep_scale;
    }
  }
  return mask;
}

// LayerNorm -> GELU -> (Dropout), applied to a pre-activation.
template <typename T>
struct NormAct {
  LayerNormCache<T> ln;
  Matrix<T> normed;
  Matrix<T> mask;  // empty when dropout is inactive

  Matrix<T> forward(const Matrix<T>& pre, const Matrix<T>& gain, const Matrix<T>& shift, double p,
                    bool train, std::uint64_t key) {
    layernorm_forward(pre, gain, shift, normed, ln);
    Matrix<T> out = normed.unaryExpr([](T v) { return gelu(v); });
    if (train && p > 0.0) {
      mask = dropout_mask<T>(out.rows(), out.cols(), p, key);
      out.array() *= mask.array();
    } else {
      mask.resize(0, 0);
    }
    return out;
  }

  Matrix<T> backward(const Matrix<T>& dout, const Matrix<T>& gain, Matrix<T>& dgain,
                     Matrix<T>& dshift) const {
    Matrix<T> d = dout;
    if (mask.size() > 0) d.array() *= mask.array();
    d.array() *= normed.unaryExpr([](T v) { return gelu_grad(v); }).array();
    Matrix<T> dpre;
    layernorm_backward(d, gain, ln, dgain, dshift, dpre);
    return dpre;
  }
};

template <typename T>
void check_finite(const Matrix<T>& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::kNonFiniteGradient, what);
}

// ---- networks ---------------------------------------------------------------

template <typename T>
class Network {
 public:
  Network(const ArchSpec& arch, const ParamSet<T>& params, const Batch<T>& batch, Mode mode,
          const DropoutKey& key)
      : arch_(arch), p_(params), batch_(batch), train_(mode == Mode::kTrain), key_(key) {}

  Vector<T> forward() {
    switch (arch_.kind) {
      case ArchKind::kLinear: return forward_linear();
      case ArchKind::kUtilityMlp: return forward_mlp();
      case ArchKind::kInteraction: return forward_interaction();
      case ArchKind::kAttention: return forward_attention();
    }
    return {};
  }

  void backward(const Vector<T>& du, ParamSet<T>& g) {
    Matrix<T> dU = du;  // n x 1
    switch (arch_.kind) {
      case ArchKind::kLinear: backward_linear(dU, g); break;
      case ArchKind::kUtilityMlp: backward_mlp(dU, g); break;
      case ArchKind::kInteraction: backward_interaction(dU, g); break;
      case ArchKind::kAttention: backward_attention(dU, g); break;
    }
  }

  // Pre-norm MHA + residual over already-encoded rows.
  Matrix<T> attention(const Matrix<T>& enc, int base) {
    const int h = arch_.hidden;
    const int heads = arch_.heads;
    const int dh = h / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    layernorm_forward(enc, p_[base + 0], p_[base + 1], attn_in_, attn_ln_);
    linear_forward(attn_in_, p_[base + 2], p_[base + 3], q_);
    linear_forward(attn_in_, p_[base + 4], p_[base + 5], k_);
    linear_forward(attn_in_, p_[base + 6], p_[base + 7], v_);
    ctx_ = Matrix<T>::Zero(enc.rows(), h);
    const int groups = batch_.groups();
    probs_.assign(static_cast<std::size_t>(groups) * heads, Matrix<T>());
    masks_.assign(static_cast<std::size_t>(groups) * heads, Matrix<T>());
    const bool drop = train_ && arch_.attn_dropout > 0.0;
    for (int g = 0; g < groups; ++g) {
      const int s = batch_.offsets[g];
      const int n = batch_.offsets[g + 1] - s;
      for (int hd = 0; hd < heads; ++hd) {
        const auto qh = q_.block(s, hd * dh, n, dh);
        const auto kh = k_.block(s, hd * dh, n, dh);
        const auto vh = v_.block(s, hd * dh, n, dh);
        Matrix<T> scores = (qh * kh.transpose()) * scale;
        for (int i = 0; i < n; ++i) {
          const T mx = scores.row(i).maxCoeff();
          scores.row(i) = (scores.row(i).array() - mx).exp();
          scores.row(i) /= scores.row(i).sum();
        }
        auto& P = probs_[static_cast<std::size_t>(g) * heads + hd];
        P = std::move(scores);
        Matrix<T> used = P;
        if (drop) {
          auto& mask = masks_[static_cast<std::size_t>(g) * heads + hd];
          const std::uint64_t key = derive_seed(key_.layer_key(kDropAttention),
                                                static_cast<std::uint64_t>(g),
                                                static_cast<std::uint64_t>(hd));
          mask = dropout_mask<T>(n, n, arch_.attn_dropout, key);
          used.array() *= mask.array();
        }
        ctx_.block(s, hd * dh, n, dh).noalias() = used * vh;
      }
    }
    Matrix<T> out;
    linear_forward(ctx_, p_[base + 8], p_[base + 9], out);
    out += enc;
    return out;
  }

 private:
  static constexpr int kEncW = 0, kEncB = 1, kEncG = 2, kEncS = 3;

  std::uint64_t key(int layer) const { return key_.layer_key(layer); }

  Vector<T> forward_linear() {
    Matrix<T> u;
    linear_forward(batch_.x, p_[0], p_[1], u);
    return u.col(0);
  }

  void backward_linear(const Matrix<T>& dU, ParamSet<T>& g) {
    linear_backward(batch_.x, p_[0], dU, g[0], g[1]);
  }

  Vector<T> forward_mlp() {
    Matrix<T> pre;
    linear_forward(batch_.x, p_[0], p_[1], pre);
    hidden_ = hidden_act_.forward(pre, p_[2], p_[3], arch_.dropout, train_, key(kDropHidden));
    Matrix<T> u;
    linear_forward(hidden_, p_[4], p_[5], u);
    return u.col(0);
  }

  void backward_mlp(const Matrix<T>& dU, ParamSet<T>& g) {
    Matrix<T> dh;
    linear_backward(hidden_, p_[4], dU, g[4], g[5], &dh);
    Matrix<T> dpre = hidden_act_.backward(dh, p_[2], g[2], g[3]);
    linear_backward(batch_.x, p_[0], dpre, g[0], g[1]);
  }

  Matrix<T> encode() {
    Matrix<T> pre;
    linear_forward(batch_.x, p_[kEncW], p_[kEncB], pre);
    return enc_act_.forward(pre, p_[kEncG], p_[kEncS], arch_.dropout, train_, key(kDropEncoder));
  }

  void encode_backward(const Matrix<T>& dE, ParamSet<T>& g) {
    Matrix<T> dpre = enc_act_.backward(dE, p_[kEncG], g[kEncG], g[kEncS]);
    linear_backward(batch_.x, p_[kEncW], dpre, g[kEncW], g[kEncB]);
  }

  Vector<T> forward_interaction() {
    const int h = arch_.hidden;
    enc_ = encode();
    const int groups = batch_.groups();
    pool_.resize(groups, 2 * h);
    argmax_.assign(static_cast<std::size_t>(groups) * h, 0);
    for (int g = 0; g < groups; ++g) {
      const int s = batch_.offsets[g];
      const int n = batch_.offsets[g + 1] - s;
      const auto block = enc_.middleRows(s, n);
      pool_.row(g).head(h) = block.colwise().mean();
      for (int c = 0; c < h; ++c) {
        int best = 0;
        for (int r = 1; r < n; ++r) {
          if (block(r, c) > block(best, c)) best = r;
        }
        argmax_[static_cast<std::size_t>(g) * h + c] = s + best;
        pool_(g, h + c) = block(best, c);
      }
    }
    const Matrix<T>& dec_w = p_[4];
    Matrix<T> pre;
    pre.noalias() = enc_ * dec_w.topRows(h);
    const Matrix<T> pooled_proj = pool_ * dec_w.bottomRows(2 * h);
    for (int g = 0; g < groups; ++g) {
      const int s = batch_.offsets[g];
      const int n = batch_.offsets[g + 1] - s;
      pre.middleRows(s, n).rowwise() += pooled_proj.row(g) + p_[5].row(0);
    }
    hidden_ = dec_act_.forward(pre, p_[6], p_[7], arch_.dropout, train_, key(kDropDecoder));
    Matrix<T> u;
    linear_forward(hidden_, p_[8], p_[9], u);
    return u.col(0);
  }

  void backward_interaction(const Matrix<T>& dU, ParamSet<T>& g) {
    const int h = arch_.hidden;
    const int groups = batch_.groups();
    Matrix<T> dh;
    linear_backward(hidden_, p_[8], dU, g[8], g[9], &dh);
    Matrix<T> dpre = dec_act_.backward(dh, p_[6], g[6], g[7]);
    const Matrix<T>& dec_w = p_[4];
    g[4].topRows(h).noalias() += enc_.transpose() * dpre;
    g[5].row(0) += dpre.colwise().sum();
    Matrix<T> dE = dpre * dec_w.topRows(h).transpose();
    Matrix<T> gsum(groups, dpre.cols());
    for (int gi = 0; gi < groups; ++gi) {
      const int s = batch_.offsets[gi];
      const int n = batch_.offsets[gi + 1] - s;
      gsum.row(gi) = dpre.middleRows(s, n).colwise().sum();
    }
    g[4].bottomRows(2 * h).noalias() += pool_.transpose() * gsum;
    const Matrix<T> dpool = gsum * dec_w.bottomRows(2 * h).transpose();
    for (int gi = 0; gi < groups; ++gi) {
      const int s = batch_.offsets[gi];
      const int n = batch_.offsets[gi + 1] - s;
      dE.middleRows(s, n).rowwise() += dpool.row(gi).head(h) / static_cast<T>(n);
      for (int c = 0; c < h; ++c) {
        dE(argmax_[static_cast<std::size_t>(gi) * h + c], c) += dpool(gi, h + c);
      }
    }
    encode_backward(dE, g);
  }

  Vector<T> forward_attention() {
    enc_ = encode();
    mixed_ = attention(enc_, 4);
    Matrix<T> pre;
    linear_forward(mixed_, p_[14], p_[15], pre);
    hidden_ = dec_act_.forward(pre, p_[16], p_[17], arch_.dropout, train_, key(kDropDecoder));
    Matrix<T> u;
    linear_forward(hidden_, p_[18], p_[19], u);
    return u.col(0);
  }

  void backward_attention(const Matrix<T>& dU, ParamSet<T>& g) {
    const int h = arch_.hidden;
    const int heads = arch_.heads;
    const int dh = h / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Matrix<T> dhid;
    linear_backward(hidden_, p_[18], dU, g[18], g[19], &dhid);
    Matrix<T> dpre = dec_act_.backward(dhid, p_[16], g[16], g[17]);
    Matrix<T> dZ;
    linear_backward(mixed_, p_[14], dpre, g[14], g[15], &dZ);

    Matrix<T> dE = dZ;  // residual path
    Matrix<T> dctx;
    linear_backward(ctx_, p_[12], dZ, g[12], g[13], &dctx);
    Matrix<T> dq = Matrix<T>::Zero(dZ.rows(), h);
    Matrix<T> dk = Matrix<T>::Zero(dZ.rows(), h);
    Matrix<T> dv = Matrix<T>::Zero(dZ.rows(), h);
    const int groups = batch_.groups();
    for (int gi = 0; gi < groups; ++gi) {
      const int s = batch_.offsets[gi];
      const int n = batch_.offsets[gi + 1] - s;
      for (int hd = 0; hd < heads; ++hd) {
        const std::size_t slot = static_cast<std::size_t>(gi) * heads + hd;
        const Matrix<T>& P = probs_[slot];
        const Matrix<T>& mask = masks_[slot];
        const auto qh = q_.block(s, hd * dh, n, dh);
        const auto kh = k_.block(s, hd * dh, n, dh);
        const auto vh = v_.block(s, hd * dh, n, dh);
        const auto doh = dctx.block(s, hd * dh, n, dh);
        Matrix<T> used = P;
        if (mask.size() > 0) used.array() *= mask.array();
        dv.block(s, hd * dh, n, dh).noalias() += used.transpose() * doh;
        Matrix<T> dP = doh * vh.transpose();
        if (mask.size() > 0) dP.array() *= mask.array();
        Matrix<T> dS(n, n);
        for (int i = 0; i < n; ++i) {
          const T dot = (dP.row(i).array() * P.row(i).array()).sum();
          dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
        }
        dq.block(s, hd * dh, n, dh).noalias() += (dS * kh) * scale;
        dk.block(s, hd * dh, n, dh).noalias() += (dS.transpose() * qh) * scale;
      }
    }
    Matrix<T> dA, tmp;
    linear_backward(attn_in_, p_[6], dq, g[6], g[7], &dA);
    linear_backward(attn_in_, p_[8], dk, g[8], g[9], &tmp);
    dA += tmp;
    linear_backward(attn_in_, p_[10], dv, g[10], g[11], &tmp);
    dA += tmp;
    Matrix<T> dE_ln;
    layernorm_backward(dA, p_[4], attn_ln_, g[4], g[5], dE_ln);
    dE += dE_ln;
    encode_backward(dE, g);
  }

  const ArchSpec& arch_;
  const ParamSet<T>& p_;
  const Batch<T>& batch_;
  bool train_;
  DropoutKey key_;

  NormAct<T> hidden_act_, enc_act_, dec_act_;
  Matrix<T> hidden_, enc_, mixed_, pool_;
  std::vector<int> argmax_;
  LayerNormCache<T> attn_ln_;
  Matrix<T> attn_in_, q_, k_, v_, ctx_;
  std::vector<Matrix<T>> probs_, masks_;
};

// Returns loss and d loss / d utilities.
template <typename T>
T loss_from_utilities(const ArchSpec& arch, const Vector<T>& u, const Batch<T>& b, Vector<T>* du) {
  if (du != nullptr) *du = Vector<T>::Zero(u.size());
  if (arch.output == OutputKind::kPerRowSigmoid) {
    T wsum = 0;
    for (int i = 0; i < u.size(); ++i) wsum += b.row_weight[i];
    if (wsum <= T(0)) return T(0);
    T total = 0;
    for (int i = 0; i < u.size(); ++i) {
      const T w = b.row_weight[i];
      if (w == T(0)) continue;
      const T x = u(i);
      const T softplus = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
      total += w * (softplus - b.labels[i] * x);
      if (du != nullptr) {
        const T sig = T(1) / (T(1) + std::exp(-x));
        (*du)(i) = w * (sig - b.labels[i]) / wsum;
      }
    }
    return total / wsum;
  }
  T wsum = 0;
  for (int g = 0; g < b.groups(); ++g) wsum += b.group_weight[g];
  if (wsum <= T(0)) return T(0);
  T total = 0;
  for (int g = 0; g < b.groups(); ++g) {
    const T w = b.group_weight[g];
    if (w == T(0)) continue;
    const int s = b.offsets[g];
    const int n = b.offsets[g + 1] - s;
    const auto seg = u.segment(s, n);
    const T mx = seg.maxCoeff();
    const T lse = mx + std::log((seg.array() - mx).exp().sum());
    total += w * (lse - seg(b.winner[g]));
    if (du != nullptr) {
      for (int i = 0; i < n; ++i) {
        const T pr = std::exp(seg(i) - lse);
        (*du)(s + i) = w * (pr - (i == b.winner[g] ? T(1) : T(0))) / wsum;
      }
    }
  }
  return total / wsum;
}

}  // namespace

std::string_view to_string(ArchKind k) {
  switch (k) {
    case ArchKind::kLinear: return "linear";
    case ArchKind::kUtilityMlp: return "utility_mlp";
    case ArchKind::kInteraction: return "interaction";
    case ArchKind::kAttention: return "attention";
  }
  return "?";
}

std::string_view to_string(OutputKind k) {
  return k == OutputKind::kPerRowSigmoid ? "row_sigmoid" : "group_softmax";
}

std::string ArchSpec::tag() const {
  return fmt::format("{}/{}/in={}/hidden={}/dec={}/heads={}", to_string(kind), to_string(output),
                     input_dim, hidden, decoder, heads);
}

void ArchSpec::validate() const {
  auto fail = [&](const std::string& why) { throw Error(ErrorKind::kShapeMismatch, tag() + ": " + why); };
  if (input_dim <= 0) fail("input_dim must be positive");
  if (dropout < 0 || dropout >= 1 || attn_dropout < 0 || attn_dropout >= 1) fail("dropout outside [0,1)");
  switch (kind) {
    case ArchKind::kLinear: break;
    case ArchKind::kUtilityMlp:
      if (hidden <= 0) fail("hidden must be positive");
      break;
    case ArchKind::kInteraction:
      if (hidden <= 0 || decoder <= 0) fail("encoder/decoder widths must be positive");
      if (output != OutputKind::kGroupSoftmax) fail("set models need group softmax");
      break;
    case ArchKind::kAttention:
      if (hidden <= 0 || decoder <= 0) fail("encoder/decoder widths must be positive");
      if (heads <= 0 || hidden % heads != 0) fail("encoder width must be divisible by heads");
      if (output != OutputKind::kGroupSoftmax) fail("set models need group softmax");
      break;
  }
}

std::uint64_t DropoutKey::layer_key(int layer) const {
  return derive_seed(seed, epoch, batch, static_cast<std::uint64_t>(layer));
}

template <typename T>
Matrix<T>& ParamSet<T>::at(std::string_view name) {
  for (auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw Error(ErrorKind::kShapeMismatch, "no parameter named " + std::string(name));
}

template <typename T>
const Matrix<T>& ParamSet<T>::at(std::string_view name) const {
  return const_cast<ParamSet<T>*>(this)->at(name);
}

template <typename T>
std::size_t ParamSet<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
  return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  ParamSet<T> out;
  for (const auto& t : tensors) {
    out.tensors.push_back({t.name, Matrix<T>::Zero(t.value.rows(), t.value.cols())});
  }
  return out;
}

template <typename T>
std::vector<T> ParamSet<T>::flatten() const {
  std::vector<T> out;
  out.reserve(num_values());
  for (const auto& t : tensors) out.insert(out.end(), t.value.data(), t.value.data() + t.value.size());
  return out;
}

template <typename T>
void ParamSet<T>::assign_flat(const std::vector<T>& values) {
  if (values.size() != num_values()) throw Error(ErrorKind::kShapeMismatch, "flat parameter count");
  std::size_t k = 0;
  for (auto& t : tensors) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(k), t.value.size(), t.value.data());
    k += static_cast<std::size_t>(t.value.size());
  }
}

template <typename T>
bool ParamSet<T>::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(),
                     [](const Tensor<T>& t) { return t.value.allFinite(); });
}

template <typename T>
ParamSet<T> init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, 0x1417));
  ParamSet<T> out;
  for (const auto& s : shapes_of(arch)) {
    Matrix<T> m(s.rows, s.cols);
    switch (s.role) {
      case Role::kWeight:
      case Role::kBias: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, s.fan_in)));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case Role::kGain: m.setOnes(); break;
      case Role::kShift: m.setZero(); break;
    }
    out.tensors.push_back({s.name, std::move(m)});
  }
  return out;
}

template <typename T>
void Batch<T>::validate(const ArchSpec& arch) const {
  auto fail = [](const std::string& why) { throw Error(ErrorKind::kShapeMismatch, why); };
  if (x.cols() != arch.input_dim) {
    fail(fmt::format("batch has {} columns, arch expects {}", x.cols(), arch.input_dim));
  }
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows()) fail("group offsets do not cover the batch");
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    if (offsets[g + 1] <= offsets[g]) fail("empty group");
  }
  if (arch.output == OutputKind::kPerRowSigmoid) {
    if (static_cast<int>(row_weight.size()) != rows() || static_cast<int>(labels.size()) != rows()) {
      fail("row weights/labels size");
    }
  } else {
    if (static_cast<int>(group_weight.size()) != groups() || static_cast<int>(winner.size()) != groups()) {
      fail("group weights/winners size");
    }
    for (int g = 0; g < groups(); ++g) {
      if (winner[g] < 0 || winner[g] >= offsets[g + 1] - offsets[g]) fail("winner index outside group");
    }
  }
}

template <typename T>
Vector<T> forward(const ArchSpec& arch, const ParamSet<T>& params, const Batch<T>& batch, Mode mode,
                  const DropoutKey& key) {
  if (batch.x.cols() != arch.input_dim) {
    throw Error(ErrorKind::kShapeMismatch,
                fmt::format("batch has {} columns, arch expects {}", batch.x.cols(), arch.input_dim));
  }
  Network<T> net(arch, params, batch, mode, key);
  return net.forward();
}

template <typename T>
Vector<T> probabilities(const ArchSpec& arch, const Vector<T>& u, const std::vector<int>& offsets) {
  Vector<T> p(u.size());
  if (arch.output == OutputKind::kPerRowSigmoid) {
    for (int i = 0; i < u.size(); ++i) p(i) = T(1) / (T(1) + std::exp(-u(i)));
    return p;
  }
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    const int s = offsets[g];
    const int n = offsets[g + 1] - s;
    const T mx = u.segment(s, n).maxCoeff();
    p.segment(s, n) = (u.segment(s, n).array() - mx).exp();
    p.segment(s, n) /= p.segment(s, n).sum();
  }
  return p;
}

template <typename T>
LossGradient<T> loss_and_gradient(const ArchSpec& arch, const ParamSet<T>& params, const Batch<T>& batch,
                                  Mode mode, const DropoutKey& key) {
  batch.validate(arch);
  Network<T> net(arch, params, batch, mode, key);
  const Vector<T> u = net.forward();
  Vector<T> du;
  LossGradient<T> out;
  out.loss = loss_from_utilities(arch, u, batch, &du);
  out.grad = params.zeros_like();
  net.backward(du, out.grad);
  for (const auto& t : out.grad.tensors) check_finite(t.value, t.name.c_str());
  return out;
}

template <typename T>
T loss(const ArchSpec& arch, const ParamSet<T>& params, const Batch<T>& batch, Mode mode,
       const DropoutKey& key) {
  batch.validate(arch);
  Network<T> net(arch, params, batch, mode, key);
  const Vector<T> u = net.forward();
  return loss_from_utilities<T>(arch, u, batch, nullptr);
}

template <typename T>
Matrix<T> attention_block(const ArchSpec& arch, const ParamSet<T>& params, const Matrix<T>& encoded,
                          const std::vector<int>& offsets) {
  if (arch.kind != ArchKind::kAttention) throw Error(ErrorKind::kShapeMismatch, "not an attention arch");
  if (encoded.cols() != arch.hidden) throw Error(ErrorKind::kShapeMismatch, "encoded width");
  Batch<T> batch;
  batch.x = Matrix<T>::Zero(encoded.rows(), arch.input_dim);
  batch.offsets = offsets;
  Network<T> net(arch, params, batch, Mode::kEval, {});
  return net.attention(encoded, 4);
}

double grad_check(const ArchSpec& arch, std::uint64_t seed, double step) {
  arch.validate();
  Rng rng(derive_seed(seed, 0x6c));
  auto params = init_params<double>(arch, seed);
  // Move LayerNorm parameters off their identity initialization.
  for (auto& t : params.tensors) {
    if (t.name.find("_ln_") != std::string::npos || t.name.rfind("ln1_", 0) == 0) {
      for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] += 0.3 * rng.normal();
    }
  }
  Batch<double> batch;
  const int groups = 5;
  batch.offsets.push_back(0);
  for (int g = 0; g < groups; ++g) {
    const int size = 1 + static_cast<int>(rng.below(6));
    batch.offsets.push_back(batch.offsets.back() + size);
    batch.group_weight.push_back(rng.uniform(0.1, 1.0));
    batch.winner.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(size))));
  }
  const int rows = batch.offsets.back();
  batch.x.resize(rows, arch.input_dim);
  for (Eigen::Index i = 0; i < batch.x.size(); ++i) batch.x.data()[i] = rng.normal();
  for (int i = 0; i < rows; ++i) {
    batch.row_weight.push_back(rng.uniform(0.1, 1.0));
    batch.labels.push_back(rng.uniform() < 0.3 ? 1.0 : 0.0);
  }
  const DropoutKey key{seed, 1, 2};
  const auto analytic = loss_and_gradient<double>(arch, params, batch, Mode::kTrain, key);

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  const std::size_t total = params.num_values();
  if (total <= 64) {
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (Eigen::Index i = 0; i < params[t].size(); ++i) coords.emplace_back(t, i);
    }
  } else {
    for (std::size_t t = 0; t < params.size(); ++t) {
      for (int k = 0; k < 3; ++k) {
        coords.emplace_back(t, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(params[t].size()))));
      }
    }
    while (coords.size() < 64) {
      const std::size_t t = rng.below(params.size());
      coords.emplace_back(t, static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(params[t].size()))));
    }
  }
  // Differences below the resolution of the central difference itself are not
  // attributable to the analytic gradient.
  const double roundoff = 1e-14 * std::max(1.0, std::abs(analytic.loss)) / step;
  double worst = 0.0;
  for (const auto& [t, i] : coords) {
    double& slot = params[t].data()[i];
    const double saved = slot;
    slot = saved + step;
    const double up = loss<double>(arch, params, batch, Mode::kTrain, key);
    slot = saved - step;
    const double down = loss<double>(arch, params, batch, Mode::kTrain, key);
    slot = saved;
    const double fd = (up - down) / (2.0 * step);
    const double an = analytic.grad[t].data()[i];
    const double diff = std::abs(an - fd);
    if (diff <= roundoff) continue;
    worst = std::max(worst, diff / std::max({std::abs(an), std::abs(fd), 1e-8}));
  }
  return worst;
}

template <typename T>
AdamState<T> AdamState<T>::init(const ParamSet<T>& params) {
  return AdamState<T>{params.zeros_like(), params.zeros_like(), 0};
}

template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state, const AdamConfig& c) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorKind::kShapeMismatch, "adam: parameter/gradient count");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T decay = static_cast<T>(1.0 - c.lr * c.weight_decay);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    const auto& g = grads[t];
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw Error(ErrorKind::kShapeMismatch, "adam: shape of " + params.tensors[t].name);
    }
    auto& m = state.m[t];
    auto& v = state.v[t];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    const auto mhat = m.array() / static_cast<T>(bc1);
    const auto vhat = v.array() / static_cast<T>(bc2);
    p.array() -= static_cast<T>(c.lr) * mhat / (vhat.sqrt() + static_cast<T>(c.eps));
    p *= decay;
    if (!p.allFinite()) throw Error(ErrorKind::kNonFiniteUpdate, params.tensors[t].name);
  }
}

namespace {
using nlohmann::json;

json arch_to_json(const ArchSpec& a) {
  return json{{"kind", std::string(to_string(a.kind))},
              {"output", std::string(to_string(a.output))},
              {"input_dim", a.input_dim},
              {"hidden", a.hidden},
              {"decoder", a.decoder},
              {"heads", a.heads},
              {"dropout", a.dropout},
              {"attn_dropout", a.attn_dropout}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  const auto kind = j.at("kind").get<std::string>();
  bool found = false;
  for (auto k : {ArchKind::kLinear, ArchKind::kUtilityMlp, ArchKind::kInteraction, ArchKind::kAttention}) {
    if (to_string(k) == kind) {
      a.kind = k;
      found = true;
    }
  }
  if (!found) throw Error(ErrorKind::kArchMismatch, "unknown arch kind " + kind);
  a.output = j.at("output").get<std::string>() == "row_sigmoid" ? OutputKind::kPerRowSigmoid
                                                                 : OutputKind::kGroupSoftmax;
  a.input_dim = j.at("input_dim").get<int>();
  a.hidden = j.at("hidden").get<int>();
  a.decoder = j.at("decoder").get<int>();
  a.heads = j.at("heads").get<int>();
  a.dropout = j.at("dropout").get<double>();
  a.attn_dropout = j.at("attn_dropout").get<double>();
  return a;
}
}  // namespace

std::string checkpoint_to_json(const Checkpoint& c) {
  json tensors = json::array();
  for (const auto& t : c.params.tensors) {
    std::vector<float> values(t.value.data(), t.value.data() + t.value.size());
    tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()},
                       {"values", values}});
  }
  json j = {{"format", "progeval-checkpoint"},
            {"version", 1},
            {"arch", arch_to_json(c.arch)},
            {"arch_tag", c.arch.tag()},
            {"seed", c.seed},
            {"initializer", c.initializer},
            {"tensors", tensors},
            {"metadata", c.metadata},
            {"arrays", c.arrays}};
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text, const ArchSpec* expected) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("checkpoint parse: ") + e.what());
  }
  if (j.value("format", "") != "progeval-checkpoint" || j.value("version", 0) != 1) {
    throw Error(ErrorKind::kVersionMismatch, "not a version-1 checkpoint");
  }
  Checkpoint c;
  c.arch = arch_from_json(j.at("arch"));
  if (expected != nullptr && !(c.arch == *expected)) {
    throw Error(ErrorKind::kArchMismatch, "checkpoint " + c.arch.tag() + " vs expected " + expected->tag());
  }
  c.seed = j.at("seed").get<std::uint64_t>();
  c.initializer = j.value("initializer", "fan_in_uniform");
  const auto shapes = shapes_of(c.arch);
  const auto& tj = j.at("tensors");
  if (tj.size() != shapes.size()) throw Error(ErrorKind::kArchMismatch, "tensor count differs from arch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = tj[i];
    if (t.at("name").get<std::string>() != shapes[i].name || t.at("rows").get<int>() != shapes[i].rows ||
        t.at("cols").get<int>() != shapes[i].cols) {
      throw Error(ErrorKind::kArchMismatch, "tensor " + t.at("name").get<std::string>() + " shape");
    }
    const auto values = t.at("values").get<std::vector<float>>();
    Matrix<float> m(shapes[i].rows, shapes[i].cols);
    if (static_cast<Eigen::Index>(values.size()) != m.size()) {
      throw Error(ErrorKind::kArchMismatch, "tensor value count");
    }
    std::copy(values.begin(), values.end(), m.data());
    c.params.tensors.push_back({shapes[i].name, std::move(m)});
  }
  c.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  c.arrays = j.at("arrays").get<std::map<std::string, std::vector<double>>>();
  return c;
}

#define PROGEVAL_INSTANTIATE(T)                                                                   \
  template class ParamSet<T>;                                                                     \
  template ParamSet<T> init_params<T>(const ArchSpec&, std::uint64_t);                            \
  template struct Batch<T>;                                                                       \
  template Vector<T> forward<T>(const ArchSpec&, const ParamSet<T>&, const Batch<T>&, Mode,       \
                                const DropoutKey&);                                               \
  template Vector<T> probabilities<T>(const ArchSpec&, const Vector<T>&, const std::vector<int>&); \
  template LossGradient<T> loss_and_gradient<T>(const ArchSpec&, const ParamSet<T>&,              \
                                                const Batch<T>&, Mode, const DropoutKey&);        \
  template T loss<T>(const ArchSpec&, const ParamSet<T>&, const Batch<T>&, Mode, const DropoutKey&); \
  template Matrix<T> attention_block<T>(const ArchSpec&, const ParamSet<T>&, const Matrix<T>&,    \
                                        const std::vector<int>&);                                 \
  template struct AdamState<T>;                                                                   \
  template void adam_step<T>(ParamSet<T>&, const ParamSet<T>&, AdamState<T>&, const AdamConfig&);

PROGEVAL_INSTANTIATE(float)
PROGEVAL_INSTANTIATE(double)

#undef PROGEVAL_INSTANTIATE

}  // namespace progeval::diffcore
