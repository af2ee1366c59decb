#pragma once

#include <bit>
#include <chrono>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "afpipe/common.hpp"

namespace afpipe {

// Small dense row-major matrix; sparsity is represented by zero entries and
// enforced by hard thresholding, which keeps the training code simple at the
// parameter counts this model targets (hundreds of entries).
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
  std::size_t numel() const { return rows * cols; }

  std::size_t nnz() const {
    std::size_t n = 0;
    for (double v : a) n += v != 0.0;
    return n;
  }
  double squared_norm() const {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
  }

  // Dot of row r with vector x.
  double row_dot(std::size_t r, std::span<const double> x) const {
    double s = 0.0;
    const double* p = a.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += p[c] * x[c];
    return s;
  }

  bool operator==(const Matrix&) const = default;
};

struct TrainConfig {
  int depth = 2;
  int d_proj = 6;
  double budget_z = 0.5;      // fraction of Z entries kept, per input column
  double budget_w = 1.0;
  double budget_v = 1.0;
  double budget_theta = 1.0;
  double sigma = 1.0;         // prediction nonlinearity scale
  double learning_rate = 0.1;
  double momentum = 0.9;
  int epochs = 200;
  int batch_size = 32;
  int warmup_epochs = 60;     // dense epochs before hard thresholding starts
  double reg_z = 1e-4, reg_w = 1e-4, reg_v = 1e-4, reg_theta = 1e-4;
  double anneal_start = 1.0;  // branching temperature schedule
  double anneal_end = 64.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (depth < 0 || depth > 8) throw ConfigError("bonsai: depth out of range [0, 8]");
    if (d_proj < 1 || d_proj > 127) throw ConfigError("bonsai: d_proj out of range [1, 127]");
    for (double b : {budget_z, budget_w, budget_v, budget_theta}) {
      if (b <= 0 || b > 1) throw ConfigError("bonsai: budgets must lie in (0, 1]");
    }
    if (budget_z * d_proj < 1.0)
      throw ConfigError("bonsai: budget_z keeps no Z entry per input feature");
    if (epochs < 1) throw ConfigError("bonsai: epochs must be positive");
    if (batch_size < 1) throw ConfigError("bonsai: batch_size must be positive");
    if (learning_rate <= 0) throw ConfigError("bonsai: learning_rate must be positive");
    if (sigma <= 0) throw ConfigError("bonsai: sigma must be positive");
    if (anneal_start <= 0 || anneal_end < anneal_start)
      throw ConfigError("bonsai: need 0 < anneal_start <= anneal_end");
  }
};

// Shallow sparse tree over a learned projection. Nodes are heap-indexed:
// root 0, children of k at 2k+1 / 2k+2; the first internal_nodes() indices
// are internal. Every node, internal or leaf, contributes
// (W_k. z) * tanh(sigma * V_k. z) when it lies on the traversed path.
//
// The projection sees the standardized input with a constant 1 appended, so
// Z carries d_in + 1 columns. Without that bias column the node score is an
// even function of z and mirror-symmetric classes are not separable.
struct BonsaiModel {
  int depth = 0;
  int d_proj = 0;
  int d_in = 0;
  double sigma = 1.0;
  std::vector<double> feat_mean, feat_std;  // input standardization, length d_in
  std::vector<std::string> feature_names;   // length d_in, <= 8 ASCII chars each
  Matrix Z;      // d_proj x (d_in + 1); last column multiplies the constant 1
  Matrix W, V;   // total_nodes x d_proj
  Matrix Theta;  // internal_nodes x d_proj

  std::size_t total_nodes() const { return (std::size_t{1} << (depth + 1)) - 1; }
  std::size_t internal_nodes() const { return (std::size_t{1} << depth) - 1; }

  void validate() const {
    if (depth < 0 || d_proj < 1 || d_in < 1) throw ValidationError("bonsai model: bad dimensions");
    if (feat_mean.size() != static_cast<std::size_t>(d_in) ||
        feat_std.size() != static_cast<std::size_t>(d_in))
      throw ValidationError("bonsai model: standardization vectors must have length d_in");
    if (feature_names.size() != static_cast<std::size_t>(d_in))
      throw ValidationError("bonsai model: feature name count must equal d_in");
    if (Z.rows != static_cast<std::size_t>(d_proj) || Z.cols != static_cast<std::size_t>(d_in) + 1)
      throw ValidationError("bonsai model: Z must be d_proj x (d_in + 1)");
    if (W.rows != total_nodes() || W.cols != static_cast<std::size_t>(d_proj) || V.rows != W.rows ||
        V.cols != W.cols)
      throw ValidationError("bonsai model: W/V must be total_nodes x d_proj");
    if (Theta.rows != internal_nodes() || (Theta.rows > 0 && Theta.cols != static_cast<std::size_t>(d_proj)))
      throw ValidationError("bonsai model: Theta must be internal_nodes x d_proj");
  }
};

struct Prediction {
  double score = 0.0;
  Rhythm label = Rhythm::NonAf;
};

namespace detail {

// Standardizes and appends the constant bias input.
inline std::vector<double> standardize_input(const BonsaiModel& m, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(m.d_in))
    throw ValidationError("predict: input has " + std::to_string(x.size()) +
                          " features, model expects " + std::to_string(m.d_in));
  std::vector<double> xs(x.size() + 1);
  for (std::size_t i = 0; i < x.size(); ++i) xs[i] = (x[i] - m.feat_mean[i]) / m.feat_std[i];
  xs.back() = 1.0;
  return xs;
}

inline std::vector<double> project(const BonsaiModel& m, std::span<const double> xs) {
  std::vector<double> z(m.d_proj);
  for (std::size_t r = 0; r < z.size(); ++r) z[r] = m.Z.row_dot(r, xs);
  return z;
}

}  // namespace detail

// Hard-path inference: walk the tree by sign of Theta_k . z (ties go right),
// summing node contributions along the way. AF iff the summed score is
// strictly positive.
inline Prediction predict(const BonsaiModel& m, std::span<const double> x) {
  const std::vector<double> xs = detail::standardize_input(m, x);
  const std::vector<double> z = detail::project(m, xs);

  double score = 0.0;
  std::size_t k = 0;
  const std::size_t internal = m.internal_nodes();
  for (;;) {
    score += m.W.row_dot(k, z) * std::tanh(m.sigma * m.V.row_dot(k, z));
    if (k >= internal) break;
    k = m.Theta.row_dot(k, z) > 0.0 ? 2 * k + 1 : 2 * k + 2;
  }
  return {score, score > 0.0 ? Rhythm::Af : Rhythm::NonAf};
}

// ---------------------------------------------------------------------------
// Training: joint gradient descent on all parameters with a soft (temperature-
// annealed) path assignment, plus periodic hard thresholding to the sparsity
// budgets. Exposed at header scope so the finite-difference gradient check in
// the test suite exercises exactly the code the trainer runs.
// ---------------------------------------------------------------------------

struct BonsaiGradient {
  double loss = 0.0;
  Matrix dZ, dW, dV, dTheta;
};

// Soft path score: node k is weighted by the product of branching factors
// (1 +- tanh(temp * Theta_a . z)) / 2 along its ancestor chain. Training
// internals operate on pre-standardized inputs that already carry the bias
// entry, i.e. length d_in + 1.
inline double bonsai_soft_score(const BonsaiModel& m, std::span<const double> xs, double temp) {
  if (xs.size() != m.Z.cols)
    throw ValidationError("soft score: expected standardized input of length d_in + 1");
  const std::vector<double> z = detail::project(m, xs);
  const std::size_t total = m.total_nodes(), internal = m.internal_nodes();
  std::vector<double> reach(total, 0.0);
  reach[0] = 1.0;
  for (std::size_t k = 0; k < internal; ++k) {
    const double b = std::tanh(temp * m.Theta.row_dot(k, z));
    reach[2 * k + 1] = reach[k] * (1.0 + b) / 2.0;
    reach[2 * k + 2] = reach[k] * (1.0 - b) / 2.0;
  }
  double score = 0.0;
  for (std::size_t k = 0; k < total; ++k) {
    score += reach[k] * m.W.row_dot(k, z) * std::tanh(m.sigma * m.V.row_dot(k, z));
  }
  return score;
}

// Mean hinge loss over the batch, max(0, 1 - y * score) with y = +1 for AF,
// plus 0.5 * lambda * ||.||^2 per matrix.
inline double bonsai_soft_loss(const BonsaiModel& m,
                               const std::vector<std::vector<double>>& xs_batch,
                               const std::vector<int>& labels, double temp,
                               const TrainConfig& cfg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < xs_batch.size(); ++i) {
    const double y = labels[i] ? 1.0 : -1.0;
    loss += std::max(0.0, 1.0 - y * bonsai_soft_score(m, xs_batch[i], temp));
  }
  loss /= static_cast<double>(xs_batch.size());
  loss += 0.5 * (cfg.reg_z * m.Z.squared_norm() + cfg.reg_w * m.W.squared_norm() +
                 cfg.reg_v * m.V.squared_norm() + cfg.reg_theta * m.Theta.squared_norm());
  return loss;
}

inline BonsaiGradient bonsai_soft_loss_grad(const BonsaiModel& m,
                                            const std::vector<std::vector<double>>& xs_batch,
                                            const std::vector<int>& labels, double temp,
                                            const TrainConfig& cfg) {
  const std::size_t total = m.total_nodes(), internal = m.internal_nodes();
  const auto dp = static_cast<std::size_t>(m.d_proj);

  BonsaiGradient g;
  g.dZ = Matrix(m.Z.rows, m.Z.cols);
  g.dW = Matrix(m.W.rows, m.W.cols);
  g.dV = Matrix(m.V.rows, m.V.cols);
  g.dTheta = Matrix(m.Theta.rows, m.Theta.cols);

  const double inv_b = 1.0 / static_cast<double>(xs_batch.size());
  std::vector<double> reach(total), branch(internal), wz(total), tanh_vz(total), node_gain(total);

  for (std::size_t i = 0; i < xs_batch.size(); ++i) {
    const std::vector<double>& xs = xs_batch[i];
    const std::vector<double> z = detail::project(m, xs);
    const double y = labels[i] ? 1.0 : -1.0;

    reach[0] = 1.0;
    for (std::size_t k = 0; k < internal; ++k) {
      branch[k] = std::tanh(temp * m.Theta.row_dot(k, z));
      reach[2 * k + 1] = reach[k] * (1.0 + branch[k]) / 2.0;
      reach[2 * k + 2] = reach[k] * (1.0 - branch[k]) / 2.0;
    }
    double score = 0.0;
    for (std::size_t k = 0; k < total; ++k) {
      wz[k] = m.W.row_dot(k, z);
      tanh_vz[k] = std::tanh(m.sigma * m.V.row_dot(k, z));
      score += reach[k] * wz[k] * tanh_vz[k];
    }

    if (1.0 - y * score <= 0.0) continue;  // hinge inactive
    const double gs = -y * inv_b;          // dLoss/dscore

    // node_gain[k] = dscore/dreach[k], accumulated bottom-up.
    for (std::size_t k = total; k-- > 0;) {
      node_gain[k] = wz[k] * tanh_vz[k];
      if (k < internal) {
        node_gain[k] += (1.0 + branch[k]) / 2.0 * node_gain[2 * k + 1] +
                        (1.0 - branch[k]) / 2.0 * node_gain[2 * k + 2];
      }
    }

    std::vector<double> dz(dp, 0.0);
    for (std::size_t k = 0; k < total; ++k) {
      const double dw_coeff = gs * reach[k] * tanh_vz[k];
      const double dv_coeff = gs * reach[k] * wz[k] * m.sigma * (1.0 - tanh_vz[k] * tanh_vz[k]);
      for (std::size_t c = 0; c < dp; ++c) {
        g.dW.at(k, c) += dw_coeff * z[c];
        g.dV.at(k, c) += dv_coeff * z[c];
        dz[c] += reach[k] * (tanh_vz[k] * m.W.at(k, c) +
                             wz[k] * m.sigma * (1.0 - tanh_vz[k] * tanh_vz[k]) * m.V.at(k, c));
      }
    }
    for (std::size_t k = 0; k < internal; ++k) {
      const double db = reach[k] * (node_gain[2 * k + 1] - node_gain[2 * k + 2]) / 2.0;
      const double dtheta_coeff = gs * db * (1.0 - branch[k] * branch[k]) * temp;
      for (std::size_t c = 0; c < dp; ++c) {
        g.dTheta.at(k, c) += dtheta_coeff * z[c];
        dz[c] += db * (1.0 - branch[k] * branch[k]) * temp * m.Theta.at(k, c);
      }
    }
    for (std::size_t r = 0; r < dp; ++r) {
      const double coeff = gs * dz[r];
      for (std::size_t c = 0; c < xs.size(); ++c) g.dZ.at(r, c) += coeff * xs[c];
    }
  }

  for (std::size_t i = 0; i < g.dZ.a.size(); ++i) g.dZ.a[i] += cfg.reg_z * m.Z.a[i];
  for (std::size_t i = 0; i < g.dW.a.size(); ++i) g.dW.a[i] += cfg.reg_w * m.W.a[i];
  for (std::size_t i = 0; i < g.dV.a.size(); ++i) g.dV.a[i] += cfg.reg_v * m.V.a[i];
  for (std::size_t i = 0; i < g.dTheta.a.size(); ++i) g.dTheta.a[i] += cfg.reg_theta * m.Theta.a[i];

  g.loss = bonsai_soft_loss(m, xs_batch, labels, temp, cfg);
  return g;
}

namespace detail {

// Keep the k largest-magnitude entries of a range, zero the rest. Ties break
// by position so the projection is deterministic.
inline void hard_threshold(std::span<double> entries, std::size_t keep) {
  if (keep >= entries.size()) return;
  std::vector<std::pair<double, std::size_t>> order(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) order[i] = {std::abs(entries[i]), i};
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = keep; i < order.size(); ++i) entries[order[i].second] = 0.0;
}

// Z keeps floor(budget * d_proj) entries per input column, so every feature
// retains projection weight and the serialized Z payload is the same for
// every column.
inline void project_budgets(BonsaiModel& m, const TrainConfig& cfg) {
  const auto keep_z = static_cast<std::size_t>(cfg.budget_z * m.d_proj + 1e-9);
  std::vector<double> col(m.Z.rows);
  for (std::size_t c = 0; c < m.Z.cols; ++c) {
    for (std::size_t r = 0; r < m.Z.rows; ++r) col[r] = m.Z.at(r, c);
    hard_threshold(col, keep_z);
    for (std::size_t r = 0; r < m.Z.rows; ++r) m.Z.at(r, c) = col[r];
  }
  hard_threshold(m.W.a, static_cast<std::size_t>(cfg.budget_w * m.W.numel() + 1e-9));
  hard_threshold(m.V.a, static_cast<std::size_t>(cfg.budget_v * m.V.numel() + 1e-9));
  if (m.Theta.numel() > 0)
    hard_threshold(m.Theta.a, static_cast<std::size_t>(cfg.budget_theta * m.Theta.numel() + 1e-9));
}

}  // namespace detail

// Joint training. rows are raw feature vectors restricted to feature_names'
// order; labels are 0/1. Standardization statistics are computed from the
// training set and stored in the model. Deterministic for a fixed seed.
inline BonsaiModel train(const std::vector<std::vector<double>>& rows,
                         const std::vector<int>& labels,
                         const std::vector<std::string>& feature_names, const TrainConfig& cfg) {
  cfg.validate();
  if (rows.size() != labels.size()) throw TrainingError("train: rows and labels differ in length");
  if (rows.empty()) throw TrainingError("train: empty dataset");
  const std::size_t d_in = feature_names.size();
  if (d_in == 0 || d_in > 65535) throw TrainingError("train: bad feature count");
  for (const auto& r : rows) {
    if (r.size() != d_in) throw TrainingError("train: row width != feature count");
  }
  {
    bool has0 = false, has1 = false;
    for (int y : labels) (y ? has1 : has0) = true;
    if (!has0 || !has1) throw TrainingError("train: both classes must be present");
  }
  for (const std::string& n : feature_names) {
    if (n.empty() || n.size() > 8)
      throw TrainingError("train: feature name '" + n + "' must be 1..8 characters");
  }

  BonsaiModel m;
  m.depth = cfg.depth;
  m.d_proj = cfg.d_proj;
  m.d_in = static_cast<int>(d_in);
  m.sigma = cfg.sigma;
  m.feature_names = feature_names;

  // Per-column standardization; constant columns get unit scale.
  m.feat_mean.assign(d_in, 0.0);
  m.feat_std.assign(d_in, 1.0);
  for (std::size_t j = 0; j < d_in; ++j) {
    double s = 0.0;
    for (const auto& r : rows) s += r[j];
    m.feat_mean[j] = s / static_cast<double>(rows.size());
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[j] - m.feat_mean[j]) * (r[j] - m.feat_mean[j]);
    const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
    m.feat_std[j] = sd > 1e-12 ? sd : 1.0;
  }

  std::vector<std::vector<double>> xs(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xs[i].resize(d_in + 1);
    for (std::size_t j = 0; j < d_in; ++j) xs[i][j] = (rows[i][j] - m.feat_mean[j]) / m.feat_std[j];
    xs[i][d_in] = 1.0;  // bias input
  }

  Rng rng(cfg.seed);
  const auto init = [&rng](Matrix& mat, double scale) {
    for (double& v : mat.a) v = rng.uniform(-scale, scale);
  };
  m.Z = Matrix(cfg.d_proj, d_in + 1);
  m.W = Matrix(m.total_nodes(), cfg.d_proj);
  m.V = Matrix(m.total_nodes(), cfg.d_proj);
  m.Theta = Matrix(m.internal_nodes(), m.internal_nodes() > 0 ? cfg.d_proj : 0);
  init(m.Z, 1.0 / std::sqrt(static_cast<double>(d_in)));
  init(m.W, 1.0 / std::sqrt(static_cast<double>(cfg.d_proj)));
  init(m.V, 1.0 / std::sqrt(static_cast<double>(cfg.d_proj)));
  init(m.Theta, 1.0);

  Matrix mZ(m.Z.rows, m.Z.cols), mW(m.W.rows, m.W.cols), mV(m.V.rows, m.V.cols),
      mTheta(m.Theta.rows, m.Theta.cols);

  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::vector<double>> batch_x;
  std::vector<int> batch_y;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 1.0;
    const double temp = cfg.anneal_start * std::pow(cfg.anneal_end / cfg.anneal_start, frac);

    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t nbatches = 0;
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t stop = std::min(start + bsz, order.size());
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch_x.push_back(xs[order[i]]);
        batch_y.push_back(labels[order[i]]);
      }
      const BonsaiGradient g = bonsai_soft_loss_grad(m, batch_x, batch_y, temp, cfg);
      epoch_loss += g.loss;
      ++nbatches;

      const auto step = [&](Matrix& param, Matrix& vel, const Matrix& grad) {
        for (std::size_t i = 0; i < param.a.size(); ++i) {
          vel.a[i] = cfg.momentum * vel.a[i] - cfg.learning_rate * grad.a[i];
          param.a[i] += vel.a[i];
        }
      };
      step(m.Z, mZ, g.dZ);
      step(m.W, mW, g.dW);
      step(m.V, mV, g.dV);
      step(m.Theta, mTheta, g.dTheta);
    }

    if (!std::isfinite(epoch_loss / nbatches))
      throw TrainingError("train: loss diverged at epoch " + std::to_string(epoch));
    if (epoch >= cfg.warmup_epochs) detail::project_budgets(m, cfg);
  }
  detail::project_budgets(m, cfg);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Serialization. Little-endian, f32 values, LEB128 varints. Layout is
// documented byte-by-byte in docs/model-format.md and pinned by a golden file
// in the test suite.
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'B', 'N', 'S', 'I'};
inline constexpr std::uint16_t kModelVersion = 1;

namespace detail {

inline void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(v) | 0x80);
    v >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::size_t varint_size(std::uint64_t v) {
  std::size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_f32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct ByteReader {
  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos + n > buf.size())
      throw SerializationError(std::string("model truncated at offset ") + std::to_string(pos) +
                               " while reading " + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return buf[pos++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
    pos += 2;
    return v;
  }
  double f32(const char* what) {
    need(4, what);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return static_cast<double>(std::bit_cast<float>(bits));
  }
  std::uint64_t varint(const char* what) {
    std::uint64_t v = 0;
    int shift = 0;
    for (;;) {
      const std::uint8_t b = u8(what);
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if (!(b & 0x80)) return v;
      shift += 7;
      if (shift > 63)
        throw SerializationError("varint overflow at offset " + std::to_string(pos));
    }
  }
};

// Generic matrix block: varint nnz, then either all values row-major (dense,
// nnz == numel) or nnz (varint flat index, f32 value) pairs in index order.
inline void put_matrix(std::vector<std::uint8_t>& out, const Matrix& m) {
  const std::size_t nnz = m.nnz();
  put_varint(out, nnz);
  if (nnz == m.numel()) {
    for (double v : m.a) put_f32(out, v);
    return;
  }
  for (std::size_t i = 0; i < m.a.size(); ++i) {
    if (m.a[i] != 0.0) {
      put_varint(out, i);
      put_f32(out, m.a[i]);
    }
  }
}

inline Matrix get_matrix(ByteReader& r, std::size_t rows, std::size_t cols, const char* what) {
  Matrix m(rows, cols);
  const std::uint64_t nnz = r.varint(what);
  if (nnz > m.numel())
    throw SerializationError(std::string(what) + ": nnz " + std::to_string(nnz) +
                             " exceeds matrix size at offset " + std::to_string(r.pos));
  if (nnz == m.numel()) {
    for (double& v : m.a) v = r.f32(what);
    return m;
  }
  for (std::uint64_t i = 0; i < nnz; ++i) {
    const std::uint64_t idx = r.varint(what);
    if (idx >= m.numel())
      throw SerializationError(std::string(what) + ": entry index " + std::to_string(idx) +
                               " out of bounds at offset " + std::to_string(r.pos));
    m.a[idx] = r.f32(what);
  }
  return m;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const BonsaiModel& m) {
  m.validate();
  for (const std::string& n : m.feature_names) {
    if (n.empty() || n.size() > 8)
      throw SerializationError("feature name '" + n + "' must be 1..8 characters");
  }

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  detail::put_u16(out, kModelVersion);
  out.push_back(static_cast<std::uint8_t>(m.depth));
  out.push_back(static_cast<std::uint8_t>(m.d_proj));
  detail::put_u16(out, static_cast<std::uint16_t>(m.d_in));
  detail::put_f32(out, m.sigma);
  for (double v : m.feat_mean) detail::put_f32(out, v);
  for (double v : m.feat_std) detail::put_f32(out, v);
  for (const std::string& n : m.feature_names) {
    char padded[8] = {};
    std::memcpy(padded, n.data(), n.size());
    out.insert(out.end(), padded, padded + 8);
  }

  // Z column by column (d_in feature columns then the bias column): varint
  // nnz, then (varint row, f32 value) pairs.
  for (std::size_t c = 0; c < m.Z.cols; ++c) {
    std::size_t nnz = 0;
    for (std::size_t r = 0; r < m.Z.rows; ++r) nnz += m.Z.at(r, c) != 0.0;
    detail::put_varint(out, nnz);
    for (std::size_t r = 0; r < m.Z.rows; ++r) {
      if (m.Z.at(r, c) != 0.0) {
        detail::put_varint(out, r);
        detail::put_f32(out, m.Z.at(r, c));
      }
    }
  }
  detail::put_matrix(out, m.W);
  detail::put_matrix(out, m.V);
  detail::put_matrix(out, m.Theta);
  return out;
}

inline BonsaiModel deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    throw SerializationError("bad magic at offset 0");
  r.pos = 4;
  const std::uint16_t version = r.u16("version");
  if (version != kModelVersion)
    throw SerializationError("unsupported model version " + std::to_string(version) +
                             " at offset 4");

  BonsaiModel m;
  m.depth = r.u8("depth");
  m.d_proj = r.u8("d_proj");
  m.d_in = r.u16("d_in");
  if (m.d_proj < 1 || m.d_in < 1)
    throw SerializationError("bad dimensions in header at offset 7");
  m.sigma = r.f32("sigma");
  m.feat_mean.resize(m.d_in);
  m.feat_std.resize(m.d_in);
  for (double& v : m.feat_mean) v = r.f32("feat_mean");
  for (double& v : m.feat_std) v = r.f32("feat_std");
  m.feature_names.resize(m.d_in);
  for (std::string& n : m.feature_names) {
    r.need(8, "feature name");
    const char* p = reinterpret_cast<const char*>(bytes.data() + r.pos);
    n.assign(p, strnlen(p, 8));
    r.pos += 8;
  }

  m.Z = Matrix(m.d_proj, static_cast<std::size_t>(m.d_in) + 1);
  for (std::size_t c = 0; c < m.Z.cols; ++c) {
    const std::uint64_t nnz = r.varint("Z column nnz");
    if (nnz > m.Z.rows)
      throw SerializationError("Z column nnz out of range at offset " + std::to_string(r.pos));
    for (std::uint64_t i = 0; i < nnz; ++i) {
      const std::uint64_t row = r.varint("Z row index");
      if (row >= m.Z.rows)
        throw SerializationError("Z row index out of range at offset " + std::to_string(r.pos));
      m.Z.at(row, c) = r.f32("Z value");
    }
  }
  m.W = detail::get_matrix(r, m.total_nodes(), m.d_proj, "W");
  m.V = detail::get_matrix(r, m.total_nodes(), m.d_proj, "V");
  m.Theta = detail::get_matrix(r, m.internal_nodes(), m.internal_nodes() > 0 ? m.d_proj : 0, "Theta");
  if (r.pos != bytes.size())
    throw SerializationError("trailing bytes at offset " + std::to_string(r.pos));
  m.validate();
  return m;
}

// Byte length of serialize(m), computed from counts alone. The header costs
// 14 + 16 * d_in bytes; each matrix block follows the encodings above.
inline std::size_t serialized_size_bytes(const BonsaiModel& m) {
  std::size_t size = 14 + 16 * static_cast<std::size_t>(m.d_in);
  for (std::size_t c = 0; c < m.Z.cols; ++c) {
    std::size_t nnz = 0;
    for (std::size_t r = 0; r < m.Z.rows; ++r) nnz += m.Z.at(r, c) != 0.0;
    size += detail::varint_size(nnz);
    for (std::size_t r = 0; r < m.Z.rows; ++r) {
      if (m.Z.at(r, c) != 0.0) size += detail::varint_size(r) + 4;
    }
  }
  for (const Matrix* mat : {&m.W, &m.V, &m.Theta}) {
    const std::size_t nnz = mat->nnz();
    size += detail::varint_size(nnz);
    if (nnz == mat->numel()) {
      size += 4 * nnz;
    } else {
      for (std::size_t i = 0; i < mat->a.size(); ++i) {
        if (mat->a[i] != 0.0) size += detail::varint_size(i) + 4;
      }
    }
  }
  return size;
}

// ---------------------------------------------------------------------------
// Predict-only timing. Each measurement times `reps` consecutive calls and
// divides, so sub-microsecond predictions are resolvable against clock
// overhead. A volatile sink keeps the calls from being optimized away.
// ---------------------------------------------------------------------------

struct TimingStats {
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

inline TimingStats time_predict(const BonsaiModel& m,
                                const std::vector<std::vector<double>>& rows, int reps = 32) {
  if (rows.empty()) throw ValidationError("time_predict: no rows");
  volatile double sink = 0.0;
  std::vector<double> per_row_ms;
  per_row_ms.reserve(rows.size());
  for (const auto& row : rows) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) sink = sink + predict(m, row).score;
    const auto t1 = std::chrono::steady_clock::now();
    per_row_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / reps);
  }
  (void)sink;
  return {median(per_row_ms), quantile(per_row_ms, 0.95)};
}

}  // namespace afpipe
