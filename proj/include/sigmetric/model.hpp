#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sigmetric/dataset.hpp"
#include "sigmetric/matrix.hpp"
#include "sigmetric/tape.hpp"

namespace sigmetric {

enum class TaskKind { classification, regression };

inline std::string task_kind_to_string(TaskKind t) {
  return t == TaskKind::classification ? "classification" : "regression";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw ParseError("unknown task '" + s +
                   "' (expected classification|regression)");
}

struct EncoderConfig {
  int embedding_dim = 64;
  int n_residual_blocks = 4;
  std::vector<int> channels_per_block = {16, 32, 64, 64};
  int kernel_size = 7;
  bool use_batchnorm = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
    if (n_residual_blocks < 1)
      throw ConfigError("n_residual_blocks must be >= 1");
    if (channels_per_block.size() !=
        static_cast<std::size_t>(n_residual_blocks))
      throw ConfigError("channels_per_block must list one width per block");
    for (std::size_t i = 0; i < channels_per_block.size(); ++i) {
      if (channels_per_block[i] < 1)
        throw ConfigError("channel widths must be >= 1");
      // Shortcuts are parameter-free (pool + zero-pad), so widths never shrink.
      if (i > 0 && channels_per_block[i] < channels_per_block[i - 1])
        throw ConfigError("channels_per_block must be non-decreasing");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("kernel_size must be a positive odd integer");
  }
};

struct HeadConfig {
  int hidden_dim = 32;
  double dropout_rate = 0.3;
  TaskKind task = TaskKind::classification;

  void validate() const {
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("dropout_rate must lie in [0, 1)");
  }
};

// Parameter store plus bookkeeping.  Parameters live in a deque so pointers
// taken by tape leaves stay valid for the model's lifetime.
template <class Real>
struct Model {
  EncoderConfig encoder_cfg;
  std::optional<HeadConfig> head_cfg;
  int input_leads = 0;
  Mode mode = Mode::train;
  std::int64_t step_count = 0;
  // Output affine for regression heads: prediction_mmhg = raw * std + mean.
  // Training standardizes targets so early optimizer steps are well-scaled.
  double target_mean = 0.0;
  double target_std = 1.0;

  std::deque<Param<Real>> params;
  std::unordered_map<std::string, std::size_t> index;

  Param<Real>& add_param(const std::string& name, std::vector<int> shape,
                         bool trainable) {
    if (index.count(name))
      throw InternalError("duplicate parameter name '" + name + "'");
    params.emplace_back(name, Tensor<Real>(std::move(shape)), trainable);
    index.emplace(name, params.size() - 1);
    return params.back();
  }

  Param<Real>& param(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end())
      throw InternalError("unknown parameter '" + name + "'");
    return params[it->second];
  }
  const Param<Real>& param(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end())
      throw InternalError("unknown parameter '" + name + "'");
    return params[it->second];
  }

  void zero_grads() {
    for (auto& p : params) p.grad.fill(Real(0));
  }

  void set_trainable_prefix(const std::string& prefix, bool trainable) {
    for (auto& p : params)
      if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
  }
};

namespace detail {

template <class Real>
void he_uniform_init(Tensor<Real>& t, int fan_in, std::uint64_t seed) {
  const double limit = std::sqrt(6.0 / fan_in);
  Rng rng(seed);
  for (auto& v : t.values)
    v = static_cast<Real>((rng.next_unit() * 2.0 - 1.0) * limit);
}

}  // namespace detail

// Builds the parameter set for the encoder (and optionally the head).
// Initialization: He-uniform for conv/affine weights drawn from per-name
// streams of the config seed; zero biases; batchnorm gamma=1, beta=0, running
// mean=0, var=1.  Each residual block's second conv is zero-initialized so the
// block starts as the identity on its shortcut path.
template <class Real>
Model<Real> init_model(const EncoderConfig& enc,
                       const std::optional<HeadConfig>& head, int input_leads) {
  enc.validate();
  if (head) head->validate();
  if (input_leads < 1) throw DimensionError("input_leads must be >= 1");

  Model<Real> m;
  m.encoder_cfg = enc;
  m.head_cfg = head;
  m.input_leads = input_leads;

  auto add_conv = [&](const std::string& name, int cout, int cin, int k,
                      bool zero_init) {
    auto& w = m.add_param(name + ".w", {cout, cin, k}, true);
    if (!zero_init)
      detail::he_uniform_init(w.value, cin * k, derive_seed(enc.seed, name + ".w"));
    m.add_param(name + ".b", {cout}, true);
  };
  auto add_bn = [&](const std::string& name, int ch) {
    auto& g = m.add_param(name + ".gamma", {ch}, true);
    g.value.fill(Real(1));
    m.add_param(name + ".beta", {ch}, true);
    m.add_param(name + ".running_mean", {ch}, false);
    auto& rv = m.add_param(name + ".running_var", {ch}, false);
    rv.value.fill(Real(1));
  };
  auto add_affine = [&](const std::string& name, int din, int dout) {
    auto& w = m.add_param(name + ".w", {din, dout}, true);
    detail::he_uniform_init(w.value, din, derive_seed(enc.seed, name + ".w"));
    m.add_param(name + ".b", {dout}, true);
  };

  const auto& ch = enc.channels_per_block;
  add_conv("encoder.stem.conv", ch[0], input_leads, enc.kernel_size, false);
  if (enc.use_batchnorm) add_bn("encoder.stem.bn", ch[0]);
  for (int i = 0; i < enc.n_residual_blocks; ++i) {
    const int cin = i == 0 ? ch[0] : ch[i - 1];
    const int cout = ch[i];
    const std::string base = "encoder.block" + std::to_string(i);
    add_conv(base + ".conv1", cout, cin, enc.kernel_size, false);
    if (enc.use_batchnorm) add_bn(base + ".bn1", cout);
    add_conv(base + ".conv2", cout, cout, enc.kernel_size, true);
    if (enc.use_batchnorm) add_bn(base + ".bn2", cout);
  }
  add_affine("encoder.project", ch.back(), enc.embedding_dim);

  if (head) {
    add_affine("head.fc1", enc.embedding_dim, head->hidden_dim);
    add_bn("head.bn", head->hidden_dim);
    add_affine("head.fc2", head->hidden_dim, 1);
  }
  return m;
}

// Packs records into a [B, leads, T] tensor.
template <class Real>
Tensor<Real> records_to_tensor(std::span<const SignalRecord> batch,
                               int expected_leads) {
  if (batch.empty()) throw DimensionError("empty batch");
  const int leads = batch.front().leads;
  const int samples = batch.front().samples;
  if (leads != expected_leads)
    throw DimensionError("batch has " + std::to_string(leads) +
                         " leads, model expects " + std::to_string(expected_leads));
  Tensor<Real> x({static_cast<int>(batch.size()), leads, samples});
  std::size_t off = 0;
  for (const auto& r : batch) {
    if (r.leads != leads || r.samples != samples)
      throw DimensionError("record '" + r.record_id +
                           "': shape differs within batch");
    for (float v : r.data) x.values[off++] = static_cast<Real>(v);
  }
  return x;
}

// Encoder forward on an existing tape.  Returns the [B, D] embedding node.
template <class Real>
typename Tape<Real>::Node* encoder_forward(Tape<Real>& tape, Model<Real>& m,
                                           typename Tape<Real>::Node* x) {
  using Node = typename Tape<Real>::Node;
  const EncoderConfig& cfg = m.encoder_cfg;
  if (x->value.rank() != 3 || x->value.dim(1) != m.input_leads)
    throw DimensionError("encoder input must be [B," +
                         std::to_string(m.input_leads) + ",T], got " +
                         x->value.shape_string());

  auto bn = [&](Node* h, const std::string& name) -> Node* {
    if (!cfg.use_batchnorm) return h;
    return tape.batchnorm(h, tape.leaf(m.param(name + ".gamma")),
                          tape.leaf(m.param(name + ".beta")),
                          m.param(name + ".running_mean"),
                          m.param(name + ".running_var"), m.mode);
  };
  auto conv = [&](Node* h, const std::string& name, int stride) -> Node* {
    return tape.conv1d(h, tape.leaf(m.param(name + ".w")),
                       tape.leaf(m.param(name + ".b")), stride);
  };

  Node* h = conv(x, "encoder.stem.conv", 2);
  h = bn(h, "encoder.stem.bn");
  h = tape.relu(h);

  const auto& ch = cfg.channels_per_block;
  for (int i = 0; i < cfg.n_residual_blocks; ++i) {
    const int cin = i == 0 ? ch[0] : ch[i - 1];
    const int cout = ch[i];
    const int stride = i == 0 ? 1 : 2;
    const std::string base = "encoder.block" + std::to_string(i);

    Node* main = conv(h, base + ".conv1", stride);
    main = bn(main, base + ".bn1");
    main = tape.relu(main);
    main = conv(main, base + ".conv2", 1);
    main = bn(main, base + ".bn2");

    Node* shortcut = h;
    if (stride != 1) shortcut = tape.avg_pool_stride(shortcut, stride);
    if (cout != cin) shortcut = tape.channel_pad(shortcut, cout);
    h = tape.relu(tape.add(main, shortcut));
  }

  Node* pooled = tape.global_avg_pool(h);
  return tape.affine(pooled, tape.leaf(m.param("encoder.project.w")),
                     tape.leaf(m.param("encoder.project.b")));
}

// Task head forward: FC -> BN -> ReLU -> dropout -> FC (-> sigmoid for
// classification).  Returns the [B, 1] prediction node.  `dropout_step`
// selects the seeded mask; use the optimizer step count during training.
template <class Real>
typename Tape<Real>::Node* head_forward(Tape<Real>& tape, Model<Real>& m,
                                        typename Tape<Real>::Node* emb,
                                        std::uint64_t dropout_step) {
  using Node = typename Tape<Real>::Node;
  if (!m.head_cfg) throw ConfigError("model has no task head");
  const HeadConfig& cfg = *m.head_cfg;
  if (emb->value.rank() != 2 ||
      emb->value.dim(1) != m.encoder_cfg.embedding_dim)
    throw DimensionError("head input must be [B," +
                         std::to_string(m.encoder_cfg.embedding_dim) +
                         "], got " + emb->value.shape_string());

  Node* h = tape.affine(emb, tape.leaf(m.param("head.fc1.w")),
                        tape.leaf(m.param("head.fc1.b")));
  h = tape.batchnorm(h, tape.leaf(m.param("head.bn.gamma")),
                     tape.leaf(m.param("head.bn.beta")),
                     m.param("head.bn.running_mean"),
                     m.param("head.bn.running_var"), m.mode);
  h = tape.relu(h);
  h = tape.dropout(h, cfg.dropout_rate, m.mode,
                   derive_seed(m.encoder_cfg.seed, "head_dropout"),
                   dropout_step);
  h = tape.affine(h, tape.leaf(m.param("head.fc2.w")),
                  tape.leaf(m.param("head.fc2.b")));
  if (cfg.task == TaskKind::classification) h = tape.sigmoid(h);
  return h;
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over all trainable parameters.  Non-finite
// gradients abort with the offending parameter's name.
template <class Real>
void optimizer_step(Model<Real>& m, const AdamHyper& hyper) {
  m.step_count += 1;
  const double t = static_cast<double>(m.step_count);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (auto& p : m.params) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = static_cast<double>(p.grad.values[i]);
      if (!std::isfinite(g))
        throw TrainError("non-finite gradient in parameter '" + p.name + "'");
      const double mnew =
          hyper.beta1 * static_cast<double>(p.adam_m.values[i]) +
          (1.0 - hyper.beta1) * g;
      const double vnew =
          hyper.beta2 * static_cast<double>(p.adam_v.values[i]) +
          (1.0 - hyper.beta2) * g * g;
      p.adam_m.values[i] = static_cast<Real>(mnew);
      p.adam_v.values[i] = static_cast<Real>(vnew);
      const double mhat = mnew / bc1;
      const double vhat = vnew / bc2;
      p.value.values[i] = static_cast<Real>(
          static_cast<double>(p.value.values[i]) -
          hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

// Eval-mode embeddings for a record list, processed in fixed-size chunks.
template <class Real>
RowMatrix embed_records(Model<Real>& m, std::span<const SignalRecord> records,
                        int batch_size = 64) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const Mode saved = m.mode;
  m.mode = Mode::eval;
  RowMatrix out(static_cast<int>(records.size()), m.encoder_cfg.embedding_dim);
  for (std::size_t lo = 0; lo < records.size(); lo += batch_size) {
    const std::size_t hi = std::min(records.size(), lo + batch_size);
    Tape<Real> tape;
    auto* x = tape.input(
        records_to_tensor<Real>(records.subspan(lo, hi - lo), m.input_leads));
    auto* emb = encoder_forward(tape, m, x);
    for (std::size_t r = lo; r < hi; ++r)
      for (int c = 0; c < out.cols; ++c)
        out.at(static_cast<int>(r), c) = static_cast<double>(
            emb->value.values[(r - lo) * out.cols + c]);
  }
  m.mode = saved;
  return out;
}

// Eval-mode head predictions; regression outputs are mapped back to mmHg via
// the stored target affine.
template <class Real>
std::vector<double> predict_records(Model<Real>& m,
                                    std::span<const SignalRecord> records,
                                    int batch_size = 64) {
  if (!m.head_cfg) throw ConfigError("model has no task head");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const Mode saved = m.mode;
  m.mode = Mode::eval;
  std::vector<double> out;
  out.reserve(records.size());
  for (std::size_t lo = 0; lo < records.size(); lo += batch_size) {
    const std::size_t hi = std::min(records.size(), lo + batch_size);
    Tape<Real> tape;
    auto* x = tape.input(
        records_to_tensor<Real>(records.subspan(lo, hi - lo), m.input_leads));
    auto* emb = encoder_forward(tape, m, x);
    auto* pred = head_forward(tape, m, emb, 0);
    for (std::size_t r = lo; r < hi; ++r) {
      double v = static_cast<double>(pred->value.values[r - lo]);
      if (m.head_cfg->task == TaskKind::regression)
        v = v * m.target_std + m.target_mean;
      out.push_back(v);
    }
  }
  m.mode = saved;
  return out;
}

}  // namespace sigmetric
