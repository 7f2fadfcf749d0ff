#include "progeval/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "progeval/error.hpp"
#include "progeval/metrics.hpp"
#include "progeval/parallel.hpp"
#include "progeval/random.hpp"

namespace progeval {

using diffcore::ArchKind;
using diffcore::OutputKind;

std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kNaive: return "naive";
    case EstimatorKind::kScore: return "score";
    case EstimatorKind::kBaseline: return "baseline";
    case EstimatorKind::kMlp: return "mlp";
    case EstimatorKind::kGroupedMlp: return "grouped_mlp";
    case EstimatorKind::kInteractionMlp: return "interaction_mlp";
    case EstimatorKind::kAttentionMlp: return "attention_mlp";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  for (auto k : kEstimatorKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kUnknownEstimator, std::string(name));
}

bool is_neural(EstimatorKind k) {
  return k == EstimatorKind::kMlp || k == EstimatorKind::kGroupedMlp ||
         k == EstimatorKind::kInteractionMlp || k == EstimatorKind::kAttentionMlp;
}

bool is_group_normalized(EstimatorKind k) {
  return k == EstimatorKind::kNaive || k == EstimatorKind::kScore || k == EstimatorKind::kGroupedMlp ||
         k == EstimatorKind::kInteractionMlp ||
         k == EstimatorKind::kAttentionMlp;
}

EstimatorSpec EstimatorSpec::defaults(EstimatorKind kind) {
  EstimatorSpec s;
  s.kind = kind;
  auto& h = s.hp;
  switch (kind) {
    case EstimatorKind::kNaive:
    case EstimatorKind::kScore:
    case EstimatorKind::kBaseline:
      s.profile = EncodingProfile::share();
      break;
    case EstimatorKind::kMlp:
      s.profile = EncodingProfile::mixed_share();
      h.hidden = 60;
      h.dropout = 0.448;
      h.loss_tp_alpha = 0.414;
      h.epochs = 27;
      h.batch_size = 32768;
      h.lr = 2.75e-3;
      h.weight_decay = 2.80e-4;
      break;
    case EstimatorKind::kGroupedMlp:
      s.profile = EncodingProfile::mixed_share();
      h.hidden = 222;
      h.dropout = 0.211;
      h.loss_tp_alpha = 0.398;
      h.epochs = 21;
      h.batch_size = 4096;
      h.lr = 7.78e-3;
      h.weight_decay = 3.11e-3;
      break;
    case EstimatorKind::kInteractionMlp:
      s.profile = EncodingProfile::adjusted();
      h.hidden = 80;
      h.decoder = 183;
      h.dropout = 0.322;
      h.loss_tp_alpha = 0.104;
      h.epochs = 29;
      h.batch_size = 64;
      h.lr = 2.60e-4;
      h.weight_decay = 7.39e-4;
      break;
    case EstimatorKind::kAttentionMlp:
      s.profile = EncodingProfile::adjusted();
      h.hidden = 30;
      h.decoder = 25;
      h.heads = 3;
      h.dropout = 0.261;
      h.attn_dropout = 0.259;
      h.loss_tp_alpha = 0.048;
      h.epochs = 13;
      h.batch_size = 64;
      h.lr = 3.03e-3;
      h.weight_decay = 4.51e-3;
      break;
  }
  return s;
}

std::vector<std::string> EstimatorSpec::input_columns() const {
  if (kind == EstimatorKind::kNaive) return {};
  if (kind == EstimatorKind::kScore) return {"score_ratio"};
  auto cols = profile.columns();
  cols.insert(cols.end(), extra_columns.begin(), extra_columns.end());
  return cols;
}

diffcore::ArchSpec EstimatorSpec::arch() const {
  diffcore::ArchSpec a;
  a.input_dim = static_cast<int>(input_columns().size());
  a.hidden = hp.hidden;
  a.decoder = hp.decoder;
  a.heads = hp.heads;
  a.dropout = hp.dropout;
  a.attn_dropout = hp.attn_dropout;
  switch (kind) {
    case EstimatorKind::kMlp:
      a.kind = ArchKind::kUtilityMlp;
      a.output = OutputKind::kPerRowSigmoid;
      break;
    case EstimatorKind::kGroupedMlp:
      a.kind = ArchKind::kUtilityMlp;
      a.output = OutputKind::kGroupSoftmax;
      break;
    case EstimatorKind::kInteractionMlp:
      a.kind = ArchKind::kInteraction;
      a.output = OutputKind::kGroupSoftmax;
      break;
    case EstimatorKind::kAttentionMlp:
      a.kind = ArchKind::kAttention;
      a.output = OutputKind::kGroupSoftmax;
      break;
    default:
      throw Error(ErrorKind::kInvalidConfig, std::string(to_string(kind)) + " has no network");
  }
  return a;
}

void EstimatorSpec::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kInvalidConfig, fmt::format("{}: {}", to_string(kind), why));
  };
  profile.validate();
  if (hp.loss_tp_alpha < 0) fail("loss_tp_alpha must be >= 0");
  if (hp.score_exponent < 0) fail("score_exponent must be >= 0");
  if (!is_neural(kind)) return;
  if (hp.epochs < 1) fail("epochs must be >= 1");
  if (hp.batch_size < 1) fail("batch_size must be >= 1");
  if (!(hp.lr > 0)) fail("lr must be > 0");
  if (hp.weight_decay < 0 || hp.lr * hp.weight_decay >= 1) fail("weight_decay out of range");
  try {
    arch().validate();
  } catch (const Error& e) {
    fail(e.context());
  }
}

// ---- standardization, isotonic, logistic ------------------------------------

Standardizer Standardizer::fit(const RowMatrix& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mu = n > 0 ? x.col(c).mean() : 0.0;
    double var = 0;
    if (n > 1) var = (x.col(c).array() - mu).square().sum() / (n - 1);
    const double sd = std::sqrt(var);
    s.mean.push_back(mu);
    s.scale.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return s;
}

RowMatrix Standardizer::apply(const RowMatrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != mean.size()) {
    throw Error(ErrorKind::kShapeMismatch, "standardizer width");
  }
  RowMatrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out.col(c) = (x.col(c).array() - mean[c]) / scale[c];
  }
  return out;
}

std::vector<double> pav(std::span<const double> y, std::span<const double> w) {
  struct Block {
    double sum;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    blocks.push_back({y[i] * wi, wi, 1});
    while (blocks.size() > 1) {
      const auto& b = blocks[blocks.size() - 1];
      const auto& a = blocks[blocks.size() - 2];
      // Compare means without dividing by zero weights.
      if (a.sum * b.weight <= b.sum * a.weight) break;
      Block merged{a.sum + b.sum, a.weight + b.weight, a.count + b.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) {
    const double m = b.weight > 0 ? b.sum / b.weight : 0.0;
    out.insert(out.end(), b.count, m);
  }
  return out;
}

IsotonicMap IsotonicMap::fit(std::span<const double> scores, std::span<const int> labels,
                             std::span<const double> weights) {
  if (scores.size() != labels.size() || (!weights.empty() && weights.size() != scores.size())) {
    throw Error(ErrorKind::kShapeMismatch, "isotonic: lengths");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Tied scores are pooled first so the map is a function of the score.
  std::vector<double> xs, ys, ws;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double sy = 0, sw = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const double wk = weights.empty() ? 1.0 : weights[order[j]];
      sy += wk * (labels[order[j]] != 0 ? 1.0 : 0.0);
      sw += wk;
      ++j;
    }
    xs.push_back(scores[order[i]]);
    ys.push_back(sw > 0 ? sy / sw : 0.0);
    ws.push_back(sw);
    i = j;
  }
  const auto fitted = pav(ys, ws);
  IsotonicMap m;
  for (std::size_t i = 0; i < xs.size();) {
    std::size_t j = i;
    while (j < xs.size() && fitted[j] == fitted[i]) ++j;
    m.knot_x.push_back(xs[i]);
    m.knot_y.push_back(fitted[i]);
    if (j - 1 > i) {
      m.knot_x.push_back(xs[j - 1]);
      m.knot_y.push_back(fitted[i]);
    }
    i = j;
  }
  return m;
}

double IsotonicMap::operator()(double s) const {
  if (knot_x.empty()) return 0.5;
  if (s <= knot_x.front()) return knot_y.front();
  if (s >= knot_x.back()) return knot_y.back();
  const auto it = std::upper_bound(knot_x.begin(), knot_x.end(), s);
  const auto hi = static_cast<std::size_t>(it - knot_x.begin());
  const auto lo = hi - 1;
  const double span = knot_x[hi] - knot_x[lo];
  if (span <= 0) return knot_y[hi];
  const double t = (s - knot_x[lo]) / span;
  return knot_y[lo] + t * (knot_y[hi] - knot_y[lo]);
}

double LogisticFit::linear(const double* row) const {
  double z = intercept;
  for (std::size_t j = 0; j < coef.size(); ++j) z += coef[j] * row[j];
  return z;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

struct LogisticObjective {
  const RowMatrix& x;
  std::span<const int> y;
  double l2;

  double value(const Eigen::VectorXd& beta) const {
    const Eigen::Index p = x.cols();
    const Eigen::VectorXd z = (x * beta.head(p)).array() + beta(p);
    double total = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z(i)) - (y[i] != 0 ? z(i) : 0.0);
    return total / static_cast<double>(x.rows()) + 0.5 * l2 * beta.head(p).squaredNorm();
  }
};

}  // namespace

LogisticFit fit_logistic(const RowMatrix& x, std::span<const int> y, const LogisticOptions& o) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != y.size()) throw Error(ErrorKind::kShapeMismatch, "logistic: rows");
  LogisticObjective obj{x, y, o.l2};
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  const double base = std::clamp(std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n), 1e-6, 1 - 1e-6);
  beta(p) = std::log(base / (1 - base));
  double f = obj.value(beta);
  LogisticFit fit;
  bool converged = false;
  for (int it = 0; it < o.max_iter; ++it) {
    const Eigen::VectorXd z = (x * beta.head(p)).array() + beta(p);
    Eigen::VectorXd r(n), d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigmoid(z(i));
      r(i) = s - (y[i] != 0 ? 1.0 : 0.0);
      d(i) = s * (1 - s);
    }
    Eigen::VectorXd grad(p + 1);
    grad.head(p) = x.transpose() * r / static_cast<double>(n) + o.l2 * beta.head(p);
    grad(p) = r.sum() / static_cast<double>(n);
    fit.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() < o.tol) {
      converged = true;
      break;
    }
    Eigen::MatrixXd h(p + 1, p + 1);
    const RowMatrix xd = x.array().colwise() * d.array();
    h.topLeftCorner(p, p) = x.transpose() * xd / static_cast<double>(n);
    h.topLeftCorner(p, p).diagonal().array() += o.l2;
    const Eigen::VectorXd xsum = xd.colwise().sum().transpose() / static_cast<double>(n);
    h.topRightCorner(p, 1) = xsum;
    h.bottomLeftCorner(1, p) = xsum.transpose();
    h(p, p) = d.sum() / static_cast<double>(n) + 1e-12;
    const Eigen::VectorXd step = h.ldlt().solve(grad);
    if (grad.dot(step) < 1e-12) {
      // Inside the quadratic region the objective change is below round-off;
      // a full Newton step is taken without line search.
      beta -= step;
      f = obj.value(beta);
      continue;
    }
    double t = 1.0;
    double fnew = f;
    Eigen::VectorXd cand;
    for (int ls = 0; ls < 60; ++ls) {
      cand = beta - t * step;
      fnew = obj.value(cand);
      if (fnew <= f - 1e-4 * t * grad.dot(step)) break;
      t *= 0.5;
    }
    if (!(fnew <= f)) {
      // No descent possible at machine precision: accept current point.
      converged = grad.lpNorm<Eigen::Infinity>() < std::sqrt(o.tol);
      break;
    }
    beta = cand;
    f = fnew;
  }
  if (!converged) {
    throw Error(ErrorKind::kNonConvergence, fmt::format("logistic regression after {} iterations", fit.iterations));
  }
  fit.coef.assign(beta.data(), beta.data() + p);
  fit.intercept = beta(p);
  double min_pos = std::numeric_limits<double>::infinity();
  double max_neg = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = fit.linear(x.row(i).data());
    if (y[i] != 0) {
      min_pos = std::min(min_pos, zi);
    } else {
      max_neg = std::max(max_neg, zi);
    }
  }
  fit.separable = min_pos > max_neg;
  return fit;
}

// ---- naive and score --------------------------------------------------------

std::vector<double> predict_naive(const Dataset& d) {
  std::vector<double> p(static_cast<std::size_t>(d.rows()));
  for (const auto& g : d.groups) {
    for (int i = 0; i < g.size; ++i) p[g.begin + i] = 1.0 / g.size;
  }
  return p;
}

std::vector<double> score_probabilities(const Dataset& d, std::span<const double> scores, double k) {
  std::vector<double> p(static_cast<std::size_t>(d.rows()));
  for (const auto& g : d.groups) {
    double mx = 0;
    for (int i = 0; i < g.size; ++i) {
      if (scores[g.begin + i] < 0) throw Error(ErrorKind::kNegativeInput, "negative score");
      mx = std::max(mx, scores[g.begin + i]);
    }
    if (mx <= 0) {
      for (int i = 0; i < g.size; ++i) p[g.begin + i] = 1.0 / g.size;
      continue;
    }
    // (s / max)^k keeps large exponents finite.
    double total = 0;
    for (int i = 0; i < g.size; ++i) {
      p[g.begin + i] = std::pow(scores[g.begin + i] / mx, k);
      total += p[g.begin + i];
    }
    for (int i = 0; i < g.size; ++i) p[g.begin + i] /= total;
  }
  return p;
}

double fit_score_exponent(const Dataset& d, std::span<const double> scores) {
  auto objective = [&](double logk) {
    const auto p = score_probabilities(d, scores, std::exp(logk));
    return log_loss(p, d.won);
  };
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(0.5);
  double b = std::log(12.0);
  double c = b - phi * (b - a);
  double e = a + phi * (b - a);
  double fc = objective(c);
  double fe = objective(e);
  while (b - a > 1e-6) {
    if (fc <= fe) {
      b = e;
      e = c;
      fe = fc;
      c = b - phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = e;
      fc = fe;
      e = a + phi * (b - a);
      fe = objective(e);
    }
  }
  // The search interval is closed; compare with its ends.
  double best = 0.5 * (a + b);
  double fbest = objective(best);
  for (double end : {std::log(0.5), std::log(12.0)}) {
    const double fend = objective(end);
    if (fend < fbest) {
      best = end;
      fbest = fend;
    }
  }
  return std::exp(best);
}

// ---- neural training --------------------------------------------------------

namespace {

using FMatrix = diffcore::Matrix<float>;

std::vector<double> network_predict(const FittedModel& m, const EstimatorSpec& spec, const Dataset& d) {
  const auto cols = d.column_indices(spec.input_columns());
  const FMatrix xf = m.standardizer.apply(d.select(cols)).cast<float>();
  const auto params = m.network.params;
  std::vector<double> out(static_cast<std::size_t>(d.rows()));
  constexpr std::size_t kChunk = 2048;
  for (std::size_t g0 = 0; g0 < d.groups.size(); g0 += kChunk) {
    const std::size_t g1 = std::min(d.groups.size(), g0 + kChunk);
    const int begin = d.groups[g0].begin;
    const int end = d.groups[g1 - 1].begin + d.groups[g1 - 1].size;
    diffcore::Batch<float> batch;
    batch.x = xf.middleRows(begin, end - begin);
    batch.offsets.push_back(0);
    for (std::size_t g = g0; g < g1; ++g) batch.offsets.push_back(d.groups[g].begin + d.groups[g].size - begin);
    const auto u = diffcore::forward(m.network.arch, params, batch);
    const auto p = diffcore::probabilities(m.network.arch, u, batch.offsets);
    for (int i = 0; i < end - begin; ++i) out[static_cast<std::size_t>(begin + i)] = p(i);
  }
  return out;
}

double tp_weight(double tp, double alpha) { return alpha == 0.0 ? 1.0 : std::pow(tp, alpha); }

}  // namespace

FittedModel fit_neural(const EstimatorSpec& spec, const Dataset& train) {
  spec.validate();
  if (!is_neural(spec.kind)) throw Error(ErrorKind::kInvalidConfig, "fit_neural on non-neural kind");
  if (train.rows() == 0) throw Error(ErrorKind::kTooFewGames, "empty training split");
  const auto arch = spec.arch();
  const auto cols = train.column_indices(spec.input_columns());
  FittedModel m;
  m.kind = spec.kind;
  const RowMatrix raw = train.select(cols);
  m.standardizer = Standardizer::fit(raw);
  const FMatrix xf = m.standardizer.apply(raw).cast<float>();

  auto params = diffcore::init_params<float>(arch, spec.seed);
  const double alpha = spec.hp.loss_tp_alpha;
  if (arch.output == OutputKind::kPerRowSigmoid) {
    // Start the output bias at the weighted base rate.
    double pos = 0, tot = 0;
    for (int r = 0; r < train.rows(); ++r) {
      const double w = tp_weight(train.turn_progress[r], alpha);
      pos += w * train.won[r];
      tot += w;
    }
    const double rate = std::clamp(tot > 0 ? pos / tot : 0.5, 1e-4, 1 - 1e-4);
    params.at("b2")(0, 0) = static_cast<float>(std::log(rate / (1 - rate)));
  }
  auto state = diffcore::AdamState<float>::init(params);
  const diffcore::AdamConfig adam{spec.hp.lr, spec.hp.weight_decay};

  const bool per_row = arch.output == OutputKind::kPerRowSigmoid;
  const std::size_t units = per_row ? static_cast<std::size_t>(train.rows()) : train.groups.size();
  std::vector<int> order(units);
  std::iota(order.begin(), order.end(), 0);
  const auto batch_units = static_cast<std::size_t>(spec.hp.batch_size);

  for (int epoch = 0; epoch < spec.hp.epochs && !m.metrics.aborted; ++epoch) {
    Rng rng(derive_seed(spec.seed, 0xE90C, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<int>(order));
    double epoch_loss = 0, epoch_weight = 0;
    std::uint64_t batch_index = 0;
    for (std::size_t b0 = 0; b0 < units; b0 += batch_units, ++batch_index) {
      const std::size_t b1 = std::min(units, b0 + batch_units);
      diffcore::Batch<float> batch;
      double batch_weight = 0;
      if (per_row) {
        const auto n = static_cast<Eigen::Index>(b1 - b0);
        batch.x.resize(n, xf.cols());
        for (std::size_t k = b0; k < b1; ++k) {
          const int r = order[k];
          batch.x.row(static_cast<Eigen::Index>(k - b0)) = xf.row(r);
          const auto w = static_cast<float>(tp_weight(train.turn_progress[r], alpha));
          batch.row_weight.push_back(w);
          batch.labels.push_back(static_cast<float>(train.won[r]));
          batch_weight += w;
        }
        batch.offsets = {0, static_cast<int>(n)};
      } else {
        int n = 0;
        for (std::size_t k = b0; k < b1; ++k) n += train.groups[order[k]].size;
        batch.x.resize(n, xf.cols());
        batch.offsets.push_back(0);
        int r = 0;
        for (std::size_t k = b0; k < b1; ++k) {
          const auto& g = train.groups[order[k]];
          batch.x.middleRows(r, g.size) = xf.middleRows(g.begin, g.size);
          r += g.size;
          batch.offsets.push_back(r);
          const auto w = static_cast<float>(tp_weight(g.turn_progress, alpha));
          batch.group_weight.push_back(w);
          batch.winner.push_back(g.winner);
          batch_weight += w;
        }
      }
      const diffcore::DropoutKey key{spec.seed, static_cast<std::uint64_t>(epoch), batch_index};
      try {
        auto lg = diffcore::loss_and_gradient(arch, params, batch, diffcore::Mode::kTrain, key);
        if (!std::isfinite(lg.loss)) throw Error(ErrorKind::kNonFiniteLoss, "loss");
        auto next = params;
        auto next_state = state;
        diffcore::adam_step(next, lg.grad, next_state, adam);
        params = std::move(next);
        state = std::move(next_state);
        epoch_loss += lg.loss * batch_weight;
        epoch_weight += batch_weight;
      } catch (const Error& e) {
        m.metrics.aborted = true;
        m.metrics.abort_reason = fmt::format("epoch {} batch {}: {} {}", epoch, batch_index,
                                             to_string(e.kind()), e.context());
        break;
      }
    }
    if (!m.metrics.aborted) m.metrics.epoch_loss.push_back(epoch_weight > 0 ? epoch_loss / epoch_weight : 0.0);
  }

  m.network.arch = arch;
  m.network.params = std::move(params);
  m.network.seed = spec.seed;
  m.network.metadata["estimator"] = std::string(to_string(spec.kind));
  m.network.metadata["epochs_completed"] = std::to_string(m.metrics.epoch_loss.size());
  m.network.arrays["standardizer_mean"] = m.standardizer.mean;
  m.network.arrays["standardizer_scale"] = m.standardizer.scale;
  m.network.arrays["epoch_loss"] = m.metrics.epoch_loss;
  return m;
}

// ---- baseline -----------------------------------------------------------------

FittedModel fit_baseline(const EstimatorSpec& spec, const Dataset& train) {
  if (train.games.size() < 2) throw Error(ErrorKind::kTooFewGames, "baseline needs at least 2 games");
  const auto cols = train.column_indices(spec.input_columns());
  FittedModel m;
  m.kind = EstimatorKind::kBaseline;
  const RowMatrix raw = train.select(cols);
  m.standardizer = Standardizer::fit(raw);
  const RowMatrix xs = m.standardizer.apply(raw);
  m.logistic = fit_logistic(xs, train.won);

  // Inner out-of-fold scores for the calibration map.
  const int inner = std::min<int>(5, static_cast<int>(train.games.size()));
  const auto fold_of = fold_assignment(train, inner, derive_seed(spec.seed, 0xCA11));
  std::vector<double> oof(static_cast<std::size_t>(train.rows()));
  for (int f = 0; f < inner; ++f) {
    std::vector<int> fit_games, held_games;
    for (int g = 0; g < static_cast<int>(train.games.size()); ++g) {
      (fold_of[g] == f ? held_games : fit_games).push_back(g);
    }
    const Dataset fit_part = train.subset_games(fit_games);
    const Standardizer st = Standardizer::fit(fit_part.select(cols));
    const auto lf = fit_logistic(st.apply(fit_part.select(cols)), fit_part.won);
    for (int r = 0; r < train.rows(); ++r) {
      if (fold_of[train.game[r]] != f) continue;
      Eigen::RowVectorXd row = raw.row(r);
      for (Eigen::Index c = 0; c < row.size(); ++c) row(c) = (row(c) - st.mean[c]) / st.scale[c];
      oof[static_cast<std::size_t>(r)] = sigmoid(lf.linear(row.data()));
    }
  }
  m.calibration = IsotonicMap::fit(oof, train.won);
  return m;
}

FittedModel fit_model(const EstimatorSpec& spec, const Dataset& train) {
  switch (spec.kind) {
    case EstimatorKind::kNaive: {
      FittedModel m;
      m.kind = spec.kind;
      return m;
    }
    case EstimatorKind::kScore: {
      FittedModel m;
      m.kind = spec.kind;
      if (spec.hp.score_exponent > 0) {
        m.score_exponent = spec.hp.score_exponent;
      } else {
        const auto scores = train.select(train.column_indices({"score_ratio"}));
        const std::vector<double> s(scores.data(), scores.data() + scores.size());
        m.score_exponent = fit_score_exponent(train, s);
      }
      return m;
    }
    case EstimatorKind::kBaseline: return fit_baseline(spec, train);
    default: {
      auto m = fit_neural(spec, train);
      if (m.metrics.aborted) throw Error(ErrorKind::kNonFiniteLoss, m.metrics.abort_reason);
      return m;
    }
  }
}

std::vector<double> FittedModel::predict(const Dataset& d, const EstimatorSpec& spec) const {
  switch (kind) {
    case EstimatorKind::kNaive: return predict_naive(d);
    case EstimatorKind::kScore: {
      const auto scores = d.select(d.column_indices({"score_ratio"}));
      const std::vector<double> s(scores.data(), scores.data() + scores.size());
      return score_probabilities(d, s, score_exponent);
    }
    case EstimatorKind::kBaseline: {
      const RowMatrix xs = standardizer.apply(d.select(d.column_indices(spec.input_columns())));
      std::vector<double> p(static_cast<std::size_t>(d.rows()));
      for (int r = 0; r < d.rows(); ++r) p[r] = calibration(sigmoid(logistic.linear(xs.row(r).data())));
      return p;
    }
    default: return network_predict(*this, spec, d);
  }
}

// ---- serialization ------------------------------------------------------------

namespace {
using nlohmann::json;

json spec_to_json(const EstimatorSpec& s) {
  json enc = json::array();
  for (auto e : s.profile.encodings) enc.push_back(std::string(to_string(e)));
  const auto& h = s.hp;
  return json{{"kind", std::string(to_string(s.kind))},
              {"encodings", enc},
              {"include_turn_progress", s.profile.include_turn_progress},
              {"seed", s.seed},
              {"extra_columns", s.extra_columns},
              {"hp",
               {{"hidden", h.hidden},
                {"decoder", h.decoder},
                {"heads", h.heads},
                {"dropout", h.dropout},
                {"attn_dropout", h.attn_dropout},
                {"loss_tp_alpha", h.loss_tp_alpha},
                {"epochs", h.epochs},
                {"batch_size", h.batch_size},
                {"lr", h.lr},
                {"weight_decay", h.weight_decay},
                {"score_exponent", h.score_exponent}}}};
}

Encoding parse_encoding(const std::string& s) {
  for (auto e : {Encoding::kShare, Encoding::kRawShare, Encoding::kAdj, Encoding::kAbsolute}) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorKind::kInvalidProfile, "unknown encoding " + s);
}

EstimatorSpec spec_from_json(const json& j) {
  EstimatorSpec s;
  s.kind = parse_estimator_kind(j.at("kind").get<std::string>());
  const auto enc = j.at("encodings");
  for (int i = 0; i < kNumFeatures; ++i) s.profile.encodings[i] = parse_encoding(enc.at(i).get<std::string>());
  s.profile.include_turn_progress = j.at("include_turn_progress").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.extra_columns = j.at("extra_columns").get<std::vector<std::string>>();
  const auto& h = j.at("hp");
  s.hp.hidden = h.at("hidden");
  s.hp.decoder = h.at("decoder");
  s.hp.heads = h.at("heads");
  s.hp.dropout = h.at("dropout");
  s.hp.attn_dropout = h.at("attn_dropout");
  s.hp.loss_tp_alpha = h.at("loss_tp_alpha");
  s.hp.epochs = h.at("epochs");
  s.hp.batch_size = h.at("batch_size");
  s.hp.lr = h.at("lr");
  s.hp.weight_decay = h.at("weight_decay");
  s.hp.score_exponent = h.at("score_exponent");
  return s;
}
}  // namespace

std::string fitted_model_to_json(const FittedModel& m, const EstimatorSpec& spec) {
  json j = {{"format", "progeval-model"}, {"version", 1}, {"spec", spec_to_json(spec)}};
  j["kind"] = std::string(to_string(m.kind));
  j["score_exponent"] = m.score_exponent;
  j["standardizer"] = {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}};
  if (m.kind == EstimatorKind::kBaseline) {
    j["logistic"] = {{"coef", m.logistic.coef},
                     {"intercept", m.logistic.intercept},
                     {"iterations", m.logistic.iterations},
                     {"separable", m.logistic.separable}};
    j["calibration"] = {{"x", m.calibration.knot_x}, {"y", m.calibration.knot_y}};
  }
  if (is_neural(m.kind)) j["network"] = json::parse(diffcore::checkpoint_to_json(m.network));
  j["epoch_loss"] = m.metrics.epoch_loss;
  j["aborted"] = m.metrics.aborted;
  return j.dump();
}

FittedModel fitted_model_from_json(const std::string& text, EstimatorSpec* spec) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("model parse: ") + e.what());
  }
  if (j.value("format", "") != "progeval-model" || j.value("version", 0) != 1) {
    throw Error(ErrorKind::kVersionMismatch, "not a version-1 model file");
  }
  const auto s = spec_from_json(j.at("spec"));
  if (spec != nullptr) *spec = s;
  FittedModel m;
  m.kind = parse_estimator_kind(j.at("kind").get<std::string>());
  m.score_exponent = j.at("score_exponent");
  m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
  m.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
  if (m.kind == EstimatorKind::kBaseline) {
    const auto& l = j.at("logistic");
    m.logistic.coef = l.at("coef").get<std::vector<double>>();
    m.logistic.intercept = l.at("intercept");
    m.logistic.iterations = l.at("iterations");
    m.logistic.separable = l.at("separable");
    m.calibration.knot_x = j.at("calibration").at("x").get<std::vector<double>>();
    m.calibration.knot_y = j.at("calibration").at("y").get<std::vector<double>>();
  }
  if (is_neural(m.kind)) {
    const auto expected = s.arch();
    m.network = diffcore::checkpoint_from_json(j.at("network").dump(), &expected);
  }
  m.metrics.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  m.metrics.aborted = j.at("aborted");
  return m;
}

// ---- prediction tables --------------------------------------------------------

PredictionTable make_prediction_table(EstimatorKind kind, const Dataset& d, std::span<const double> probs,
                                      bool out_of_fold) {
  PredictionTable t;
  t.kind = kind;
  for (int r = 0; r < d.rows(); ++r) {
    if (std::isnan(probs[r])) continue;
    t.rows.push_back({d.games[d.game[r]].game_id, d.turn[r], d.seat[r], probs[r], out_of_fold});
  }
  return t;
}

std::vector<double> align_predictions(const PredictionTable& table, const Dataset& d) {
  std::unordered_map<std::string, double> index;
  index.reserve(table.rows.size());
  for (const auto& r : table.rows) index[fmt::format("{}|{}|{}", r.game_id, r.turn, r.seat_id)] = r.probability;
  std::vector<double> out(static_cast<std::size_t>(d.rows()));
  for (int r = 0; r < d.rows(); ++r) {
    const auto key = fmt::format("{}|{}|{}", d.games[d.game[r]].game_id, d.turn[r], d.seat[r]);
    auto it = index.find(key);
    if (it == index.end()) throw Error(ErrorKind::kKeyMismatch, "no prediction for " + key);
    out[static_cast<std::size_t>(r)] = it->second;
  }
  return out;
}

void write_predictions_csv(std::ostream& out, const PredictionTable& t) {
  out << "game_id,turn,seat_id,probability,estimator,out_of_fold\n";
  for (const auto& r : t.rows) {
    out << fmt::format("{},{},{},{:.10g},{},{}\n", r.game_id, r.turn, r.seat_id, r.probability,
                       to_string(t.kind), r.out_of_fold ? 1 : 0);
  }
}

PredictionTable read_predictions_csv(std::istream& in) {
  PredictionTable t;
  std::string line;
  bool header = true;
  bool kind_set = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw Error(ErrorKind::kMalformedLine, "prediction row: " + line);
    try {
      t.rows.push_back({f[0], std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3]), f[5] == "1"});
    } catch (const std::exception&) {
      throw Error(ErrorKind::kMalformedLine, "prediction row: " + line);
    }
    if (!kind_set) {
      t.kind = parse_estimator_kind(f[4]);
      kind_set = true;
    }
  }
  return t;
}

// ---- cross-validation -----------------------------------------------------------

std::string_view to_string(SplitMode m) {
  switch (m) {
    case SplitMode::kGroupedKFold: return "grouped_kfold";
    case SplitMode::kTrainNonLlm: return "llm_vs_nonllm";
    case SplitMode::kTrainLlm: return "nonllm_vs_llm";
  }
  return "?";
}

SplitMode parse_split_mode(std::string_view s) {
  for (auto m : {SplitMode::kGroupedKFold, SplitMode::kTrainNonLlm, SplitMode::kTrainLlm}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::kConfigError, "split_mode=" + std::string(s));
}

std::vector<int> fold_assignment(const Dataset& d, int folds, std::uint64_t seed) {
  std::vector<std::pair<std::uint64_t, int>> keyed;
  for (int g = 0; g < static_cast<int>(d.games.size()); ++g) {
    keyed.emplace_back(derive_seed(seed, hash_string(d.games[g].game_id)), g);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> fold(d.games.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) fold[keyed[i].second] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return fold;
}

std::vector<double> TrainedEstimator::predict(const Dataset& d) const {
  std::vector<double> out(static_cast<std::size_t>(d.rows()), 0.0);
  std::vector<std::vector<int>> by_fold(folds.size());
  std::vector<int> unknown;
  for (int g = 0; g < static_cast<int>(d.games.size()); ++g) {
    auto it = fold_of_game.find(d.games[g].game_id);
    if (it != fold_of_game.end() && it->second >= 0 && it->second < static_cast<int>(folds.size())) {
      by_fold[it->second].push_back(g);
    } else {
      unknown.push_back(g);
    }
  }
  // Map rows of a game subset back into the full dataset.
  auto scatter = [&](const std::vector<int>& games, const std::vector<double>& p, double scale) {
    std::vector<std::vector<int>> rows_of(d.games.size());
    for (int r = 0; r < d.rows(); ++r) rows_of[d.game[r]].push_back(r);
    std::size_t k = 0;
    for (int g : games) {
      for (int r : rows_of[g]) out[static_cast<std::size_t>(r)] += scale * p[k++];
    }
  };
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (by_fold[f].empty()) continue;
    const Dataset part = d.subset_games(by_fold[f]);
    scatter(by_fold[f], folds[f].predict(part, spec), 1.0);
  }
  if (!unknown.empty()) {
    const Dataset part = d.subset_games(unknown);
    for (const auto& fm : folds) scatter(unknown, fm.predict(part, spec), 1.0 / static_cast<double>(folds.size()));
  }
  return out;
}

CvResult cross_validate(const EstimatorSpec& spec, const Dataset& d, const CvOptions& o) {
  spec.validate();
  CvResult res;
  res.model.spec = spec;
  const int ngames = static_cast<int>(d.games.size());
  std::vector<int> fold(static_cast<std::size_t>(ngames));
  int nfolds = o.folds;
  if (o.mode == SplitMode::kGroupedKFold) {
    if (o.folds < 2 || ngames < o.folds) {
      throw Error(ErrorKind::kTooFewGames, fmt::format("{} games for {} folds", ngames, o.folds));
    }
    fold = fold_assignment(d, o.folds, o.seed);
  } else {
    // One model: fold 0 = evaluated corpus, fold 1 = training corpus.
    nfolds = 1;
    const bool eval_llm = o.mode == SplitMode::kTrainNonLlm;
    for (int g = 0; g < ngames; ++g) {
      const bool is_llm = d.games[g].corpus_tag == CorpusTag::kLlm;
      fold[g] = is_llm == eval_llm ? 0 : 1;
    }
    const auto n_eval = std::count(fold.begin(), fold.end(), 0);
    if (n_eval == 0 || n_eval == ngames) throw Error(ErrorKind::kTooFewGames, "corpus split leaves an empty side");
  }

  std::vector<FittedModel> models(static_cast<std::size_t>(nfolds));
  parallel_for(static_cast<std::size_t>(nfolds), [&](std::size_t f) {
    std::vector<int> train_games;
    for (int g = 0; g < ngames; ++g) {
      const bool held = o.mode == SplitMode::kGroupedKFold ? fold[g] == static_cast<int>(f) : fold[g] == 0;
      if (!held) train_games.push_back(g);
    }
    EstimatorSpec fs = spec;
    fs.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(f));
    models[f] = fit_model(fs, d.subset_games(train_games));
  });
  res.model.folds = std::move(models);
  for (int g = 0; g < ngames; ++g) {
    if (o.mode == SplitMode::kGroupedKFold || fold[g] == 0) {
      res.model.fold_of_game[d.games[g].game_id] = 0;
    }
  }
  if (o.mode == SplitMode::kGroupedKFold) {
    for (int g = 0; g < ngames; ++g) res.model.fold_of_game[d.games[g].game_id] = fold[g];
    res.probs = res.model.predict(d);
  } else {
    std::vector<int> eval_games;
    for (int g = 0; g < ngames; ++g) {
      if (fold[g] == 0) eval_games.push_back(g);
    }
    const Dataset part = d.subset_games(eval_games);
    const auto p = res.model.folds[0].predict(part, spec);
    res.probs.assign(static_cast<std::size_t>(d.rows()), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::vector<int>> rows_of(d.games.size());
    for (int r = 0; r < d.rows(); ++r) rows_of[d.game[r]].push_back(r);
    std::size_t k = 0;
    for (int g : eval_games) {
      for (int r : rows_of[g]) res.probs[static_cast<std::size_t>(r)] = p[k++];
    }
  }
  res.predictions = make_prediction_table(spec.kind, d, res.probs, true);
  return res;
}

// ---- hyperparameter search ------------------------------------------------------

double search_objective(double train_ll, double val_ll, double lambda_gap) {
  return val_ll + lambda_gap * std::max(0.0, val_ll - train_ll);
}

Hyperparams sample_hyperparams(EstimatorKind kind, std::uint64_t seed) {
  Rng rng(seed);
  auto log_uniform = [&](double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); };
  auto width = [&] { return 16 + static_cast<int>(rng.below(241)); };
  Hyperparams h = EstimatorSpec::defaults(kind).hp;
  if (!is_neural(kind)) return h;
  h.hidden = width();
  if (kind == EstimatorKind::kInteractionMlp || kind == EstimatorKind::kAttentionMlp) h.decoder = width();
  if (kind == EstimatorKind::kAttentionMlp) {
    h.heads = 1 + static_cast<int>(rng.below(4));
    h.hidden = std::max(h.heads, h.hidden - h.hidden % h.heads);
    h.attn_dropout = rng.uniform(0.0, 0.5);
  }
  h.dropout = rng.uniform(0.0, 0.5);
  h.lr = log_uniform(1e-4, 1e-2);
  h.weight_decay = log_uniform(1e-5, 1e-2);
  h.loss_tp_alpha = rng.uniform(0.0, 1.0);
  h.epochs = 5 + static_cast<int>(rng.below(36));
  return h;
}

SearchResult hyper_search(const EstimatorSpec& base, const Dataset& d, const SearchOptions& o) {
  if (d.games.size() < 2) throw Error(ErrorKind::kTooFewGames, "search needs at least 2 games");
  std::vector<std::pair<std::uint64_t, int>> keyed;
  for (int g = 0; g < static_cast<int>(d.games.size()); ++g) {
    keyed.emplace_back(derive_seed(o.seed, 0x5EA, hash_string(d.games[g].game_id)), g);
  }
  std::sort(keyed.begin(), keyed.end());
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(o.validation_fraction * static_cast<double>(keyed.size()))), 1,
      keyed.size() - 1);
  std::vector<int> val_games, train_games;
  for (std::size_t i = 0; i < keyed.size(); ++i) (i < n_val ? val_games : train_games).push_back(keyed[i].second);
  std::sort(val_games.begin(), val_games.end());
  std::sort(train_games.begin(), train_games.end());
  const Dataset train = d.subset_games(train_games);
  const Dataset val = d.subset_games(val_games);

  const int trials = is_neural(base.kind) ? std::max(1, o.trials) : 1;
  SearchResult res;
  res.trials.resize(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t t) {
    Trial& tr = res.trials[t];
    tr.index = static_cast<int>(t);
    EstimatorSpec spec = base;
    if (is_neural(base.kind)) {
      spec.hp = sample_hyperparams(base.kind, derive_seed(o.seed, 0x7121, t));
      spec.hp.batch_size = base.hp.batch_size;
    }
    tr.hp = spec.hp;
    try {
      const auto m = fit_model(spec, train);
      tr.train_log_loss = log_loss(m.predict(train, spec), train.won);
      tr.val_log_loss = log_loss(m.predict(val, spec), val.won);
      tr.objective = search_objective(tr.train_log_loss, tr.val_log_loss, o.lambda_gap);
      if (!std::isfinite(tr.objective)) throw Error(ErrorKind::kNonFiniteLoss, "objective");
    } catch (const Error& e) {
      tr.failed = true;
      tr.failure = fmt::format("{}: {}", to_string(e.kind()), e.context());
    }
  });
  for (const auto& tr : res.trials) {
    if (tr.failed) continue;
    if (res.best_trial < 0 || tr.objective < res.trials[static_cast<std::size_t>(res.best_trial)].objective) {
      res.best_trial = tr.index;
    }
  }
  res.best = base;
  if (res.best_trial >= 0) res.best.hp = res.trials[static_cast<std::size_t>(res.best_trial)].hp;
  return res;
}

void write_trial_log(std::ostream& out, const SearchResult& r) {
  out << "trial,hidden,decoder,heads,dropout,attn_dropout,loss_tp_alpha,epochs,batch_size,lr,weight_decay,"
         "train_ll,val_ll,objective,failed\n";
  for (const auto& t : r.trials) {
    const auto& h = t.hp;
    out << fmt::format("{},{},{},{},{:.6g},{:.6g},{:.6g},{},{},{:.6g},{:.6g},{:.10g},{:.10g},{:.10g},{}\n", t.index,
                       h.hidden, h.decoder, h.heads, h.dropout, h.attn_dropout, h.loss_tp_alpha, h.epochs,
                       h.batch_size, h.lr, h.weight_decay, t.train_log_loss, t.val_log_loss, t.objective,
                       t.failed ? 1 : 0);
  }
}

}  // namespace progeval
