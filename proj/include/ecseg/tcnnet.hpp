#pragma once

// Multi-stage dilated temporal convolutional network for framewise binary
// segmentation: a prediction stage of dual dilated layers followed by
// refinement stages of dilated residual layers. Forward, loss, reverse-mode
// gradients, Adam and checkpointing are implemented here without an autodiff
// framework.
//
// Tensors are channels x time (one column per frame).

#include <Eigen/Core>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecseg/errors.hpp"

namespace ecseg::tcn {

using Matrix = Eigen::MatrixXd;

enum class DilationSchedule { exponential, linear_paper };

inline std::string schedule_name(DilationSchedule s) {
  return s == DilationSchedule::exponential ? "exponential" : "linear_paper";
}

inline DilationSchedule parse_schedule(const std::string& s) {
  if (s == "exponential") return DilationSchedule::exponential;
  if (s == "linear_paper") return DilationSchedule::linear_paper;
  throw ConfigError("unknown dilation schedule '" + s + "'");
}

struct NetConfig {
  int input_dim = 8;
  int num_filters = 64;
  int num_classes = 2;
  int prediction_layers = 11;
  int refinement_layers = 10;
  int refinement_stages = 3;
  int kernel_size = 3;
  DilationSchedule schedule = DilationSchedule::exponential;
  double lambda = 0.15;    // weight of the smoothing loss
  double tau_trunc = 4.0;  // clamp on adjacent log-probability differences

  int num_stages() const { return 1 + refinement_stages; }

  void validate() const {
    if (input_dim < 1 || num_filters < 1 || num_classes < 2 || prediction_layers < 1 || refinement_layers < 1 ||
        refinement_stages < 0 || kernel_size < 1 || kernel_size % 2 == 0) {
      throw ConfigError("invalid network configuration");
    }
    if (!(lambda >= 0) || !(tau_trunc > 0)) throw ConfigError("invalid loss configuration");
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Dilation pair of dual layer l (0-based).
inline std::pair<int, int> dual_dilations(const NetConfig& c, int l) {
  if (c.schedule == DilationSchedule::exponential) return {1 << l, 1 << (c.prediction_layers - 1 - l)};
  const int one_based = l + 1;
  return {std::max(1, one_based), std::max(1, c.prediction_layers - one_based)};
}

inline int refinement_dilation(const NetConfig&, int l) { return 1 << l; }

/// Half-width (frames) of the prediction stage's receptive field.
inline int prediction_receptive_radius(const NetConfig& c) {
  const int half = c.kernel_size / 2;
  int r = 0;
  for (int l = 0; l < c.prediction_layers; ++l) {
    auto [a, b] = dual_dilations(c, l);
    r += half * std::max(a, b);
  }
  return r;
}

inline nlohmann::json config_to_json(const NetConfig& c) {
  return {{"input_dim", c.input_dim},
          {"num_filters", c.num_filters},
          {"num_classes", c.num_classes},
          {"prediction_layers", c.prediction_layers},
          {"refinement_layers", c.refinement_layers},
          {"refinement_stages", c.refinement_stages},
          {"kernel_size", c.kernel_size},
          {"dilation_schedule", schedule_name(c.schedule)},
          {"lambda", c.lambda},
          {"tau_trunc", c.tau_trunc}};
}

inline NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.num_filters = j.at("num_filters").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.prediction_layers = j.at("prediction_layers").get<int>();
  c.refinement_layers = j.at("refinement_layers").get<int>();
  c.refinement_stages = j.at("refinement_stages").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.schedule = parse_schedule(j.at("dilation_schedule").get<std::string>());
  c.lambda = j.at("lambda").get<double>();
  c.tau_trunc = j.at("tau_trunc").get<double>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

struct Conv1d {
  int dilation = 1;
  std::vector<Matrix> taps;  // kernel_size matrices, out x in
  Matrix bias;               // out x 1
};

struct DualLayer {
  Conv1d a, b, fuse;  // fuse: pointwise 2F -> F
};

struct ResidualLayer {
  Conv1d dilated, pointwise;
};

struct Stage {
  Conv1d input;  // pointwise projection to num_filters
  std::vector<DualLayer> dual;
  std::vector<ResidualLayer> residual;
  Conv1d classifier;
};

struct TcnParameters {
  NetConfig config;
  std::vector<Stage> stages;
};

namespace detail {

inline Conv1d make_conv(int out, int in, int kernel, int dilation) {
  Conv1d c;
  c.dilation = dilation;
  c.taps.assign(kernel, Matrix::Zero(out, in));
  c.bias = Matrix::Zero(out, 1);
  return c;
}

template <class Conv, class Fn>
void visit_conv(Conv& c, const std::string& name, Fn& fn) {
  for (std::size_t k = 0; k < c.taps.size(); ++k) fn(name + ".w" + std::to_string(k), c.taps[k]);
  fn(name + ".b", c.bias);
}

}  // namespace detail

/// Zero-valued parameters with the shapes implied by the config.
inline TcnParameters zeros_like(const NetConfig& c) {
  c.validate();
  TcnParameters p;
  p.config = c;
  const int F = c.num_filters;
  const int K = c.kernel_size;
  for (int s = 0; s < c.num_stages(); ++s) {
    Stage st;
    st.input = detail::make_conv(F, s == 0 ? c.input_dim : c.num_classes, 1, 1);
    if (s == 0) {
      for (int l = 0; l < c.prediction_layers; ++l) {
        auto [da, db] = dual_dilations(c, l);
        st.dual.push_back({detail::make_conv(F, F, K, da), detail::make_conv(F, F, K, db), detail::make_conv(F, 2 * F, 1, 1)});
      }
    } else {
      for (int l = 0; l < c.refinement_layers; ++l) {
        st.residual.push_back({detail::make_conv(F, F, K, refinement_dilation(c, l)), detail::make_conv(F, F, 1, 1)});
      }
    }
    st.classifier = detail::make_conv(c.num_classes, F, 1, 1);
    p.stages.push_back(std::move(st));
  }
  return p;
}

/// Calls fn(name, Matrix&) for every tensor in a fixed order.
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    auto& st = p.stages[s];
    const std::string prefix = "stage" + std::to_string(s);
    detail::visit_conv(st.input, prefix + ".input", fn);
    for (std::size_t l = 0; l < st.dual.size(); ++l) {
      const std::string n = prefix + ".dual" + std::to_string(l);
      detail::visit_conv(st.dual[l].a, n + ".a", fn);
      detail::visit_conv(st.dual[l].b, n + ".b", fn);
      detail::visit_conv(st.dual[l].fuse, n + ".fuse", fn);
    }
    for (std::size_t l = 0; l < st.residual.size(); ++l) {
      const std::string n = prefix + ".res" + std::to_string(l);
      detail::visit_conv(st.residual[l].dilated, n + ".dilated", fn);
      detail::visit_conv(st.residual[l].pointwise, n + ".pointwise", fn);
    }
    detail::visit_conv(st.classifier, prefix + ".classifier", fn);
  }
}

inline std::size_t parameter_count(const TcnParameters& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

/// Uniform in +-1/sqrt(fan_in) for kernels, zero biases; deterministic in seed.
inline TcnParameters init(const NetConfig& config, std::uint64_t seed) {
  TcnParameters p = zeros_like(config);
  std::mt19937_64 rng(seed);
  auto init_conv = [&](Conv1d& c) {
    const double fan_in = static_cast<double>(c.taps[0].cols() * static_cast<Eigen::Index>(c.taps.size()));
    std::uniform_real_distribution<double> U(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (auto& w : c.taps) {
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = U(rng);
    }
  };
  for (auto& st : p.stages) {
    init_conv(st.input);
    for (auto& d : st.dual) {
      init_conv(d.a);
      init_conv(d.b);
      init_conv(d.fuse);
    }
    for (auto& r : st.residual) {
      init_conv(r.dilated);
      init_conv(r.pointwise);
    }
    init_conv(st.classifier);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward

namespace detail {

// Offset of tap k in frames; symmetric zero padding keeps the length.
inline Eigen::Index tap_offset(const Conv1d& c, std::size_t k) {
  const auto half = static_cast<Eigen::Index>(c.taps.size() / 2);
  return (static_cast<Eigen::Index>(k) - half) * c.dilation;
}

inline Matrix conv_forward(const Conv1d& c, const Matrix& x) {
  const Eigen::Index T = x.cols();
  Matrix out = c.bias.replicate(1, T);
  for (std::size_t k = 0; k < c.taps.size(); ++k) {
    const Eigen::Index o = tap_offset(c, k);
    const Eigen::Index n = T - std::abs(o);
    if (n <= 0) continue;
    if (o >= 0) {
      out.leftCols(n).noalias() += c.taps[k] * x.rightCols(n);
    } else {
      out.rightCols(n).noalias() += c.taps[k] * x.leftCols(n);
    }
  }
  return out;
}

// Accumulates parameter gradients into g; adds input gradient into dx when given.
inline void conv_backward(const Conv1d& c, const Matrix& x, const Matrix& dout, Conv1d& g, Matrix* dx) {
  const Eigen::Index T = x.cols();
  g.bias.noalias() += dout.rowwise().sum();
  for (std::size_t k = 0; k < c.taps.size(); ++k) {
    const Eigen::Index o = tap_offset(c, k);
    const Eigen::Index n = T - std::abs(o);
    if (n <= 0) continue;
    if (o >= 0) {
      g.taps[k].noalias() += dout.leftCols(n) * x.rightCols(n).transpose();
      if (dx) dx->rightCols(n).noalias() += c.taps[k].transpose() * dout.leftCols(n);
    } else {
      g.taps[k].noalias() += dout.rightCols(n) * x.leftCols(n).transpose();
      if (dx) dx->leftCols(n).noalias() += c.taps[k].transpose() * dout.rightCols(n);
    }
  }
}

inline Matrix softmax_columns(const Matrix& z) {
  Matrix p = z;
  for (Eigen::Index t = 0; t < z.cols(); ++t) {
    const double m = z.col(t).maxCoeff();
    p.col(t) = (z.col(t).array() - m).exp().matrix();
    p.col(t) /= p.col(t).sum();
  }
  return p;
}

inline Matrix log_softmax_columns(const Matrix& z) {
  Matrix ls = z;
  for (Eigen::Index t = 0; t < z.cols(); ++t) {
    const double m = z.col(t).maxCoeff();
    const double lse = m + std::log((z.col(t).array() - m).exp().sum());
    ls.col(t).array() -= lse;
  }
  return ls;
}

}  // namespace detail

struct StageCache {
  Matrix input;                  // stage input (features or previous probabilities)
  std::vector<Matrix> hidden;    // hidden[l] = input to layer l; back() = classifier input
  std::vector<Matrix> pre_relu;  // per layer
};

struct ForwardCache {
  std::vector<StageCache> stages;
};

struct ForwardResult {
  std::vector<Matrix> logits;  // per stage, num_classes x T
  ForwardCache cache;
};

inline ForwardResult forward(const TcnParameters& p, const Matrix& features) {
  const NetConfig& c = p.config;
  if (features.rows() != c.input_dim) {
    throw DataError("forward: feature dimension " + std::to_string(features.rows()) + " != " +
                    std::to_string(c.input_dim));
  }
  if (features.cols() < 1) throw DataError("forward: empty sequence");
  const Eigen::Index F = c.num_filters;
  ForwardResult res;
  Matrix stage_input = features;
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    const Stage& st = p.stages[s];
    StageCache sc;
    sc.input = std::move(stage_input);
    Matrix h = detail::conv_forward(st.input, sc.input);
    for (const auto& layer : st.dual) {
      Matrix pre(2 * F, h.cols());
      pre.topRows(F) = detail::conv_forward(layer.a, h);
      pre.bottomRows(F) = detail::conv_forward(layer.b, h);
      Matrix act = pre.cwiseMax(0.0);
      Matrix next = h + detail::conv_forward(layer.fuse, act);
      sc.hidden.push_back(std::move(h));
      sc.pre_relu.push_back(std::move(pre));
      h = std::move(next);
    }
    for (const auto& layer : st.residual) {
      Matrix pre = detail::conv_forward(layer.dilated, h);
      Matrix next = h + detail::conv_forward(layer.pointwise, pre.cwiseMax(0.0));
      sc.hidden.push_back(std::move(h));
      sc.pre_relu.push_back(std::move(pre));
      h = std::move(next);
    }
    Matrix logits = detail::conv_forward(st.classifier, h);
    sc.hidden.push_back(std::move(h));
    stage_input = detail::softmax_columns(logits);
    res.logits.push_back(std::move(logits));
    res.cache.stages.push_back(std::move(sc));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
  double total = 0;
  std::vector<double> per_stage;
  std::vector<double> classification;  // per stage
  std::vector<double> smoothing;       // per stage, before lambda
  std::vector<Matrix> dlogits;         // d total / d logits, per stage
};

/// Per stage: mean cross-entropy + lambda * mean truncated squared difference of
/// adjacent log-probabilities; the frame t-1 term is held constant. When
/// frozen_prev is given, those log-probabilities supply the t-1 terms.
inline LossResult loss(std::span<const Matrix> stage_logits, std::span<const std::uint8_t> labels, const NetConfig& c,
                       const std::vector<Matrix>* frozen_prev = nullptr) {
  LossResult r;
  for (std::size_t s = 0; s < stage_logits.size(); ++s) {
    const Matrix& z = stage_logits[s];
    const Eigen::Index T = z.cols();
    const Eigen::Index C = z.rows();
    if (static_cast<std::size_t>(T) != labels.size()) throw DataError("loss: label length mismatch");
    const Matrix ls = detail::log_softmax_columns(z);
    const Matrix prob = ls.array().exp().matrix();
    Matrix dz = prob;
    double cls = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
      const int y = labels[t];
      if (y < 0 || y >= C) throw DataError("loss: label out of range");
      cls -= ls(y, t);
      dz(y, t) -= 1.0;
    }
    cls /= static_cast<double>(T);
    dz /= static_cast<double>(T);

    double smooth = 0;
    if (T > 1) {
      const Matrix& prev = frozen_prev ? (*frozen_prev)[s] : ls;
      const double norm = static_cast<double>((T - 1) * C);
      Matrix dls = Matrix::Zero(C, T);
      for (Eigen::Index t = 1; t < T; ++t) {
        for (Eigen::Index k = 0; k < C; ++k) {
          const double diff = ls(k, t) - prev(k, t - 1);
          const double m = std::min(std::abs(diff), c.tau_trunc);
          smooth += m * m;
          if (std::abs(diff) < c.tau_trunc) dls(k, t) = 2.0 * diff / norm;
        }
      }
      smooth /= norm;
      // Back through log-softmax: dz = dls - p * sum(dls).
      for (Eigen::Index t = 1; t < T; ++t) {
        dz.col(t) += c.lambda * (dls.col(t) - prob.col(t) * dls.col(t).sum());
      }
    }
    r.classification.push_back(cls);
    r.smoothing.push_back(smooth);
    r.per_stage.push_back(cls + c.lambda * smooth);
    r.total += r.per_stage.back();
    r.dlogits.push_back(std::move(dz));
  }
  return r;
}

/// Log-probabilities of each stage, for freezing the t-1 term in gradient checks.
inline std::vector<Matrix> stage_log_probs(std::span<const Matrix> stage_logits) {
  std::vector<Matrix> out;
  for (const auto& z : stage_logits) out.push_back(detail::log_softmax_columns(z));
  return out;
}

// ---------------------------------------------------------------------------
// Backward

/// Gradients of the loss with respect to every parameter, given d loss / d logits.
inline TcnParameters backward(const TcnParameters& p, const ForwardCache& cache, std::span<const Matrix> dlogits) {
  TcnParameters g = zeros_like(p.config);
  const Eigen::Index F = p.config.num_filters;
  Matrix d_next_input;  // gradient w.r.t. the input of stage s+1
  for (std::size_t si = p.stages.size(); si-- > 0;) {
    const Stage& st = p.stages[si];
    Stage& gs = g.stages[si];
    const StageCache& sc = cache.stages[si];
    Matrix dz = dlogits[si];
    if (si + 1 < p.stages.size()) {
      // Next stage consumed softmax(logits): dz += p * (dp - sum(dp * p)).
      const Matrix prob = cache.stages[si + 1].input;
      for (Eigen::Index t = 0; t < dz.cols(); ++t) {
        const double dot = d_next_input.col(t).dot(prob.col(t));
        dz.col(t).array() += prob.col(t).array() * (d_next_input.col(t).array() - dot);
      }
    }
    Matrix dh = Matrix::Zero(F, dz.cols());
    detail::conv_backward(st.classifier, sc.hidden.back(), dz, gs.classifier, &dh);

    const std::size_t layers = st.dual.size() + st.residual.size();
    for (std::size_t l = layers; l-- > 0;) {
      const Matrix& h_in = sc.hidden[l];
      const Matrix& pre = sc.pre_relu[l];
      const Matrix act = pre.cwiseMax(0.0);
      if (!st.dual.empty()) {
        const DualLayer& layer = st.dual[l];
        DualLayer& gl = gs.dual[l];
        Matrix dact = Matrix::Zero(2 * F, dh.cols());
        detail::conv_backward(layer.fuse, act, dh, gl.fuse, &dact);
        const Matrix dpre = (pre.array() > 0).select(dact, 0.0);
        Matrix dh_in = dh;  // residual path
        detail::conv_backward(layer.a, h_in, dpre.topRows(F), gl.a, &dh_in);
        detail::conv_backward(layer.b, h_in, dpre.bottomRows(F), gl.b, &dh_in);
        dh = std::move(dh_in);
      } else {
        const ResidualLayer& layer = st.residual[l];
        ResidualLayer& gl = gs.residual[l];
        Matrix dact = Matrix::Zero(F, dh.cols());
        detail::conv_backward(layer.pointwise, act, dh, gl.pointwise, &dact);
        const Matrix dpre = (pre.array() > 0).select(dact, 0.0);
        Matrix dh_in = dh;
        detail::conv_backward(layer.dilated, h_in, dpre, gl.dilated, &dh_in);
        dh = std::move(dh_in);
      }
    }
    if (si > 0) {
      d_next_input = Matrix::Zero(sc.input.rows(), sc.input.cols());
      detail::conv_backward(st.input, sc.input, dh, gs.input, &d_next_input);
    } else {
      detail::conv_backward(st.input, sc.input, dh, gs.input, nullptr);
    }
  }
  return g;
}

struct LossAndGradients {
  LossResult loss;
  TcnParameters gradients;
};

inline LossAndGradients loss_and_gradients(const TcnParameters& p, const Matrix& features,
                                           std::span<const std::uint8_t> labels) {
  auto fwd = forward(p, features);
  auto l = loss(fwd.logits, labels, p.config);
  auto g = backward(p, fwd.cache, l.dlogits);
  return {std::move(l), std::move(g)};
}

// ---------------------------------------------------------------------------
// Optimiser

struct AdamOptions {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m, v;
  std::int64_t step = 0;
};

inline void adam_step(TcnParameters& p, const TcnParameters& g, AdamState& state, const AdamOptions& opt = {}) {
  std::vector<Matrix*> params;
  std::vector<const Matrix*> grads;
  for_each_tensor(p, [&](const std::string&, Matrix& m) { params.push_back(&m); });
  for_each_tensor(g, [&](const std::string&, const Matrix& m) { grads.push_back(&m); });
  if (params.size() != grads.size()) throw DataError("adam_step: parameter/gradient structure mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
      throw DataError("adam_step: shape mismatch");
    }
    if (!grads[i]->allFinite()) throw DataError("adam_step: non-finite gradient");
  }
  if (state.m.empty()) {
    for (auto* m : params) {
      state.m.push_back(Matrix::Zero(m->rows(), m->cols()));
      state.v.push_back(Matrix::Zero(m->rows(), m->cols()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * *grads[i];
    state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grads[i]->cwiseProduct(*grads[i]);
    params[i]->array() -= opt.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + opt.eps);
  }
}

// ---------------------------------------------------------------------------
// Prediction

/// Argmax of the final stage per frame; ties go to label 0.
inline std::vector<std::uint8_t> predict(const TcnParameters& p, const Matrix& features) {
  const auto fwd = forward(p, features);
  const Matrix& z = fwd.logits.back();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index t = 0; t < z.cols(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.rows(); ++k) {
      if (z(k, t) > z(best, t)) best = k;
    }
    out[static_cast<std::size_t>(t)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then raw little-endian float64 payload.

struct Checkpoint {
  TcnParameters params;
  int iteration = 0;
  nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

inline void append_le(std::string& buf, double x) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  char raw[sizeof(double)];
  std::memcpy(raw, &x, sizeof(double));
  buf.append(raw, sizeof(double));
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "ecseg-tcn-checkpoint";

inline void save_checkpoint(const TcnParameters& p, const std::string& path, int iteration = 0,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  for_each_tensor(p, [&](const std::string& name, const Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) detail::append_le(payload, m(i, j));
  });
  const auto checksum =
      detail::fnv1a(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  nlohmann::json header{{"format", kCheckpointMagic},
                        {"format_version", 1},
                        {"config", config_to_json(p.config)},
                        {"iteration", iteration},
                        {"meta", meta},
                        {"tensors", tensors},
                        {"payload_bytes", payload.size()},
                        {"checksum", detail::hex64(checksum)}};
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint '" + path + "': missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw DataError("checkpoint '" + path + "': corrupted header");
  }
  if (header.value("format", "") != kCheckpointMagic) throw DataError("checkpoint '" + path + "': not a checkpoint");
  Checkpoint ck;
  try {
    ck.params = zeros_like(config_from_json(header.at("config")));
    ck.iteration = header.at("iteration").get<int>();
    ck.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': " + e.what());
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto expected_bytes = header.value("payload_bytes", std::size_t{0});
  const auto checksum = detail::fnv1a(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  if (payload.size() != expected_bytes || detail::hex64(checksum) != header.value("checksum", "")) {
    throw DataError("checkpoint '" + path + "': checksum mismatch");
  }
  std::size_t offset = 0;
  std::size_t index = 0;
  const auto& tensors = header.at("tensors");
  for_each_tensor(ck.params, [&](const std::string& name, Matrix& m) {
    if (index >= tensors.size() || tensors[index].at("name") != name || tensors[index].at("rows") != m.rows() ||
        tensors[index].at("cols") != m.cols()) {
      throw DataError("checkpoint '" + path + "': tensor layout does not match config at '" + name + "'");
    }
    ++index;
    const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
    if (offset + bytes > payload.size()) throw DataError("checkpoint '" + path + "': truncated payload");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::memcpy(&m(i, j), payload.data() + offset, sizeof(double));
        offset += sizeof(double);
      }
    }
  });
  if (index != tensors.size() || offset != payload.size()) {
    throw DataError("checkpoint '" + path + "': tensor layout does not match config");
  }
  return ck;
}

/// Loads a checkpoint and rejects it unless its config equals expected.
inline Checkpoint load_checkpoint(const std::string& path, const NetConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.params.config == expected)) throw DataError("checkpoint '" + path + "': config mismatch");
  return ck;
}

}  // namespace ecseg::tcn
