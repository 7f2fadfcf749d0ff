#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace progeval::diffcore {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class ArchKind {
  kLinear,      // u = x.w + b
  kUtilityMlp,  // one hidden layer: Linear -> LayerNorm -> GELU -> Dropout -> Linear
  kInteraction, // shared encoder -> mean+max pool -> concat -> shared decoder
  kAttention,   // shared encoder -> pre-norm MHA + residual -> shared decoder
};

enum class OutputKind { kPerRowSigmoid, kGroupSoftmax };

std::string_view to_string(ArchKind k);
std::string_view to_string(OutputKind k);

struct ArchSpec {
  ArchKind kind = ArchKind::kUtilityMlp;
  OutputKind output = OutputKind::kGroupSoftmax;
  int input_dim = 0;
  int hidden = 0;   // MLP hidden width, or encoder width for set models
  int decoder = 0;  // decoder width for set models
  int heads = 0;
  double dropout = 0.0;
  double attn_dropout = 0.0;

  /// Stable textual tag, e.g. "attention/group_softmax/in=24/hidden=30/dec=25/heads=3".
  std::string tag() const;
  void validate() const;  // Error(kShapeMismatch) on inconsistent sizes
  bool operator==(const ArchSpec&) const = default;
};

template <typename T>
struct Tensor {
  std::string name;
  Matrix<T> value;
};

/// Named parameter tensors in a fixed order determined by the ArchSpec.
template <typename T>
class ParamSet {
 public:
  std::vector<Tensor<T>> tensors;

  std::size_t size() const { return tensors.size(); }
  Matrix<T>& operator[](std::size_t i) { return tensors[i].value; }
  const Matrix<T>& operator[](std::size_t i) const { return tensors[i].value; }
  Matrix<T>& at(std::string_view name);
  const Matrix<T>& at(std::string_view name) const;

  std::size_t num_values() const;
  ParamSet zeros_like() const;
  std::vector<T> flatten() const;
  void assign_flat(const std::vector<T>& values);
  bool all_finite() const;

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.value.template cast<U>()});
    return out;
  }
};

/// Fan-in scaled uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
/// biases, unit gain / zero bias for LayerNorm.
template <typename T>
ParamSet<T> init_params(const ArchSpec& arch, std::uint64_t seed);

/// Rows grouped into contiguous (game, turn) groups.
template <typename T>
struct Batch {
  Matrix<T> x;
  std::vector<int> offsets;      // size groups+1, offsets.front()==0, back()==rows
  std::vector<T> row_weight;     // per-row sigmoid loss weight
  std::vector<T> labels;         // per-row 0/1
  std::vector<T> group_weight;   // per-group softmax loss weight
  std::vector<int> winner;       // per-group winner index relative to group start

  int rows() const { return static_cast<int>(x.rows()); }
  int groups() const { return static_cast<int>(offsets.size()) - 1; }
  void validate(const ArchSpec& arch) const;
};

enum class Mode { kEval, kTrain };

/// Dropout masks are a pure function of (seed, epoch, batch, layer, element).
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
  std::uint64_t layer_key(int layer) const;
};

template <typename T>
Vector<T> forward(const ArchSpec& arch, const ParamSet<T>& params, const Batch<T>& batch,
                  Mode mode = Mode::kEval, const DropoutKey& key = {});

/// Sigmoid per row, or softmax within each group.
template <typename T>
Vector<T> probabilities(const ArchSpec& arch, const Vector<T>& utilities,
                        const std::vector<int>& offsets);

template <typename T>
struct LossGradient {
  T loss = 0;
  ParamSet<T> grad;
};

/// Weighted loss (sum w*l / sum w) and its gradient. Throws
/// Error(kNonFiniteGradient) when any gradient entry is not finite.
template <typename T>
LossGradient<T> loss_and_gradient(const ArchSpec& arch, const ParamSet<T>& params,
                                  const Batch<T>& batch, Mode mode = Mode::kEval,
                                  const DropoutKey& key = {});

template <typename T>
T loss(const ArchSpec& arch, const ParamSet<T>& params, const Batch<T>& batch,
       Mode mode = Mode::kEval, const DropoutKey& key = {});

/// Pre-norm multi-head self-attention with residual, applied to already
/// encoded rows (eval mode). Only valid for kAttention parameter sets.
template <typename T>
Matrix<T> attention_block(const ArchSpec& arch, const ParamSet<T>& params,
                          const Matrix<T>& encoded, const std::vector<int>& offsets);

/// Max over sampled coordinates (at least 50, or all when fewer) of
/// |analytic - fd| / max(|analytic|, |fd|, 1e-8), double precision, train mode
/// with a fixed dropout key. Differences below the central-difference roundoff
/// (1e-14 * max(1, loss) / step) count as zero.
double grad_check(const ArchSpec& arch, std::uint64_t seed, double step = 1e-5);

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  std::int64_t step = 0;
  static AdamState init(const ParamSet<T>& params);
};

/// Bias-corrected adaptive-moment update, then decoupled decay
/// p <- p * (1 - lr * wd). Throws Error(kNonFiniteUpdate).
template <typename T>
void adam_step(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& state,
               const AdamConfig& config);

/// Serialized model parameters plus free-form metadata.
struct Checkpoint {
  ArchSpec arch;
  ParamSet<float> params;
  std::uint64_t seed = 0;
  std::string initializer = "fan_in_uniform";
  std::map<std::string, std::string> metadata;
  std::map<std::string, std::vector<double>> arrays;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws Error(kArchMismatch) when `expected` is given and differs.
Checkpoint checkpoint_from_json(const std::string& text, const ArchSpec* expected = nullptr);

}  // namespace progeval::diffcore
