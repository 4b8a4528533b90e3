#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sigmetric/mining.hpp"
#include "sigmetric/tensor.hpp"

namespace sigmetric {

inline constexpr double kObjectivePi = 3.14159265358979323846;

enum class MetricLossKind { none, triplet_raw, triplet_hinge, margin, angular, npair };
enum class TaskLossKind { none, cross_entropy, rmse };

inline std::string metric_loss_to_string(MetricLossKind k) {
  switch (k) {
    case MetricLossKind::none: return "none";
    case MetricLossKind::triplet_raw: return "triplet_raw";
    case MetricLossKind::triplet_hinge: return "triplet_hinge";
    case MetricLossKind::margin: return "margin";
    case MetricLossKind::angular: return "angular";
    case MetricLossKind::npair: return "npair";
  }
  throw InternalError("unreachable metric loss kind");
}

inline MetricLossKind metric_loss_from_string(const std::string& s) {
  if (s == "none") return MetricLossKind::none;
  if (s == "triplet_raw") return MetricLossKind::triplet_raw;
  if (s == "triplet_hinge") return MetricLossKind::triplet_hinge;
  if (s == "margin") return MetricLossKind::margin;
  if (s == "angular") return MetricLossKind::angular;
  if (s == "npair") return MetricLossKind::npair;
  throw ParseError("unknown metric loss '" + s + "'");
}

inline std::string task_loss_to_string(TaskLossKind k) {
  switch (k) {
    case TaskLossKind::none: return "none";
    case TaskLossKind::cross_entropy: return "cross_entropy";
    case TaskLossKind::rmse: return "rmse";
  }
  throw InternalError("unreachable task loss kind");
}

inline TaskLossKind task_loss_from_string(const std::string& s) {
  if (s == "none") return TaskLossKind::none;
  if (s == "cross_entropy") return TaskLossKind::cross_entropy;
  if (s == "rmse") return TaskLossKind::rmse;
  throw ParseError("unknown task loss '" + s + "'");
}

struct ObjectiveSpec {
  MetricLossKind metric_loss = MetricLossKind::triplet_hinge;
  TaskLossKind task_loss = TaskLossKind::cross_entropy;
  double alpha_scale = 1.0;       // weight of the metric term in the joint loss
  double triplet_margin = 0.2;    // hinge triplet γ
  double margin_beta_init = 1.2;  // learnable boundary β start
  double margin_beta_lr = 0.0005;
  double margin_gamma = 0.2;      // margin-loss γ
  // Verbatim squared-distance, unhinged margin expression instead of the
  // hinged convention.
  bool margin_literal_formula = false;
  double angular_margin = kObjectivePi / 4.0;
  double angular_lambda = 2.0;
  double npair_nu = 0.005;
  bool normalize_embeddings = false;

  void validate() const {
    if (alpha_scale < 0) throw ConfigError("alpha_scale must be >= 0");
    if (angular_margin <= 0 || angular_margin >= kObjectivePi / 2)
      throw ConfigError("angular_margin must lie in (0, pi/2)");
    if (npair_nu < 0) throw ConfigError("npair_nu must be >= 0");
    if (angular_lambda < 0) throw ConfigError("angular_lambda must be >= 0");
    if (margin_beta_lr < 0) throw ConfigError("margin_beta_lr must be >= 0");
  }
};

// Scalar boundary β of the margin loss; updated by plain gradient descent
// with its own learning rate, independent of the main optimizer.
struct LearnableBoundary {
  double beta = 1.2;
  double lr = 0.0005;

  void apply_gradient(double beta_grad) { beta -= lr * beta_grad; }
};

template <class Real>
struct MetricLossOutcome {
  Real value{};
  Tensor<Real> emb_grad;  // dL/d(embeddings), same shape as the input
  double beta_grad = 0.0; // margin loss only
  bool empty = false;     // no triples/pairs contributed (zero loss, zero grad)
};

template <class Real>
struct TaskLossOutcome {
  Real value{};
  std::vector<Real> grad;  // dL/d(prediction), parallel to predictions
};

enum class TripletVariant { raw, hinge };

struct LabeledPair {
  int i = 0;
  int j = 0;
  bool same = false;
};

// Margin loss consumes the anchor-positive (same) and anchor-negative
// (different) pairs of the mined triples.
inline std::vector<LabeledPair> pairs_from_triples(const TripletIndexBatch& t) {
  std::vector<LabeledPair> pairs;
  pairs.reserve(t.triples.size() * 2);
  for (const Triple& tr : t.triples) {
    pairs.push_back({tr.anchor, tr.positive, true});
    pairs.push_back({tr.anchor, tr.negative, false});
  }
  return pairs;
}

namespace detail {

inline double softplus(double x) {
  // log(1 + e^x), overflow-safe.
  return std::log1p(std::exp(-std::abs(x))) + (x > 0 ? x : 0.0);
}

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

template <class Real>
double row_dot(const Tensor<Real>& emb, int i, int j) {
  const int d = emb.dim(1);
  const Real* a = emb.values.data() + static_cast<std::size_t>(i) * d;
  const Real* b = emb.values.data() + static_cast<std::size_t>(j) * d;
  double s = 0.0;
  for (int c = 0; c < d; ++c)
    s += static_cast<double>(a[c]) * static_cast<double>(b[c]);
  return s;
}

template <class Real>
double row_distance(const Tensor<Real>& emb, int i, int j) {
  const int d = emb.dim(1);
  const Real* a = emb.values.data() + static_cast<std::size_t>(i) * d;
  const Real* b = emb.values.data() + static_cast<std::size_t>(j) * d;
  double s = 0.0;
  for (int c = 0; c < d; ++c) {
    const double diff = static_cast<double>(a[c]) - static_cast<double>(b[c]);
    s += diff * diff;
  }
  return std::sqrt(s);
}

// Adds w * (e_i - e_j) into grad rows i (+) and j (-).
template <class Real>
void add_difference_grad(const Tensor<Real>& emb, Tensor<Real>& grad, int i,
                         int j, double w) {
  const int d = emb.dim(1);
  const Real* a = emb.values.data() + static_cast<std::size_t>(i) * d;
  const Real* b = emb.values.data() + static_cast<std::size_t>(j) * d;
  Real* gi = grad.values.data() + static_cast<std::size_t>(i) * d;
  Real* gj = grad.values.data() + static_cast<std::size_t>(j) * d;
  for (int c = 0; c < d; ++c) {
    const double diff = static_cast<double>(a[c]) - static_cast<double>(b[c]);
    gi[c] += static_cast<Real>(w * diff);
    gj[c] -= static_cast<Real>(w * diff);
  }
}

template <class Real>
void add_row_grad(const Tensor<Real>& emb, Tensor<Real>& grad, int dst, int src,
                  double w) {
  const int d = emb.dim(1);
  const Real* s = emb.values.data() + static_cast<std::size_t>(src) * d;
  Real* g = grad.values.data() + static_cast<std::size_t>(dst) * d;
  for (int c = 0; c < d; ++c) g[c] += static_cast<Real>(w * s[c]);
}

template <class Real>
void check_embeddings(const Tensor<Real>& emb) {
  if (emb.rank() != 2)
    throw DimensionError("loss expects [B,D] embeddings, got " +
                         emb.shape_string());
}

}  // namespace detail

// L_triplet: mean over triples of (d_ap - d_an) (raw) or
// max(0, d_ap - d_an + γ) (hinge), with unsquared L2 distances.
template <class Real>
MetricLossOutcome<Real> triplet_loss(const Tensor<Real>& emb,
                                     const TripletIndexBatch& triples,
                                     TripletVariant variant, double gamma) {
  detail::check_embeddings(emb);
  MetricLossOutcome<Real> out;
  out.emb_grad = Tensor<Real>(emb.shape);
  const std::size_t b = triples.triples.size();
  if (b == 0) {
    out.empty = true;
    return out;
  }
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (const Triple& t : triples.triples) {
    const double d_ap = detail::row_distance(emb, t.anchor, t.positive);
    const double d_an = detail::row_distance(emb, t.anchor, t.negative);
    const double term = d_ap - d_an;
    const bool active =
        variant == TripletVariant::raw || term + gamma > 0.0;
    loss += variant == TripletVariant::raw ? term
                                           : std::max(0.0, term + gamma);
    if (!active) continue;
    // d(d_ap)/de: (e_a - e_p)/d_ap on the anchor row, negated on the positive.
    if (d_ap > 0) {
      detail::add_difference_grad(emb, out.emb_grad, t.anchor, t.positive,
                                  inv_b / d_ap);
    }
    if (d_an > 0) {
      detail::add_difference_grad(emb, out.emb_grad, t.anchor, t.negative,
                                  -inv_b / d_an);
    }
  }
  out.value = static_cast<Real>(loss * inv_b);
  return out;
}

// Margin loss with learnable boundary β over labeled pairs.
// Hinged form (default): mean over pairs of max(0, γ + s·(d − β)), s = +1 for
// same-label and −1 for different-label pairs, d unsquared.
// Literal form: mean over pairs of s·(d² − β) + γ.
template <class Real>
MetricLossOutcome<Real> margin_loss(const Tensor<Real>& emb,
                                    const std::vector<LabeledPair>& pairs,
                                    const LearnableBoundary& boundary,
                                    double gamma, bool literal_formula) {
  detail::check_embeddings(emb);
  MetricLossOutcome<Real> out;
  out.emb_grad = Tensor<Real>(emb.shape);
  if (pairs.empty()) {
    out.empty = true;
    return out;
  }
  const double inv_p = 1.0 / static_cast<double>(pairs.size());
  double loss = 0.0;
  double beta_grad = 0.0;
  for (const LabeledPair& pr : pairs) {
    const double s = pr.same ? 1.0 : -1.0;
    if (literal_formula) {
      const double d = detail::row_distance(emb, pr.i, pr.j);
      loss += s * (d * d - boundary.beta) + gamma;
      detail::add_difference_grad(emb, out.emb_grad, pr.i, pr.j,
                                  inv_p * s * 2.0);
      beta_grad += -s * inv_p;
    } else {
      const double d = detail::row_distance(emb, pr.i, pr.j);
      const double h = gamma + s * (d - boundary.beta);
      if (h <= 0) continue;
      loss += h;
      if (d > 0)
        detail::add_difference_grad(emb, out.emb_grad, pr.i, pr.j,
                                    inv_p * s / d);
      beta_grad += -s * inv_p;
    }
  }
  out.value = static_cast<Real>(loss * inv_p);
  out.beta_grad = beta_grad;
  return out;
}

// L_npair = (1/b) Σ_t log(1 + exp(aᵀn − aᵀp)) + (ν/b) Σ_i ||e_i||², with the
// regularizer running over every batch embedding.  With no triples the
// regularizer alone remains (b treated as 1).
template <class Real>
MetricLossOutcome<Real> npair_loss(const Tensor<Real>& emb,
                                   const TripletIndexBatch& triples, double nu) {
  detail::check_embeddings(emb);
  MetricLossOutcome<Real> out;
  out.emb_grad = Tensor<Real>(emb.shape);
  const std::size_t b = triples.triples.size();
  const double inv_b = 1.0 / static_cast<double>(std::max<std::size_t>(b, 1));
  double loss = 0.0;
  for (const Triple& t : triples.triples) {
    const double q = detail::row_dot(emb, t.anchor, t.negative) -
                     detail::row_dot(emb, t.anchor, t.positive);
    loss += detail::softplus(q) * inv_b;
    const double w = detail::logistic(q) * inv_b;
    // dq/da = n − p, dq/dp = −a, dq/dn = a.
    detail::add_row_grad(emb, out.emb_grad, t.anchor, t.negative, w);
    detail::add_row_grad(emb, out.emb_grad, t.anchor, t.positive, -w);
    detail::add_row_grad(emb, out.emb_grad, t.positive, t.anchor, -w);
    detail::add_row_grad(emb, out.emb_grad, t.negative, t.anchor, w);
  }
  const int rows = emb.dim(0);
  for (int i = 0; i < rows; ++i) {
    loss += nu * inv_b * detail::row_dot(emb, i, i);
    detail::add_row_grad(emb, out.emb_grad, i, i, 2.0 * nu * inv_b);
  }
  out.value = static_cast<Real>(loss);
  out.empty = b == 0;
  return out;
}

// L_angular = L_npair + (λ/b) Σ_t log(1 + exp(e_t)) with
// e_t = 4 tan²(margin)·(a+p)ᵀn − 2(1+tan²(margin))·aᵀp.
template <class Real>
MetricLossOutcome<Real> angular_loss(const Tensor<Real>& emb,
                                     const TripletIndexBatch& triples,
                                     double angular_margin, double lambda,
                                     double nu) {
  MetricLossOutcome<Real> out = npair_loss(emb, triples, nu);
  const std::size_t b = triples.triples.size();
  if (b == 0) return out;
  const double tan2 = std::tan(angular_margin) * std::tan(angular_margin);
  const double c_an = 4.0 * tan2;
  const double c_ap = 2.0 * (1.0 + tan2);
  const double w_b = lambda / static_cast<double>(b);
  double extra = 0.0;
  for (const Triple& t : triples.triples) {
    const double apn = detail::row_dot(emb, t.anchor, t.negative) +
                       detail::row_dot(emb, t.positive, t.negative);
    const double e_t = c_an * apn - c_ap * detail::row_dot(emb, t.anchor, t.positive);
    extra += detail::softplus(e_t);
    const double w = w_b * detail::logistic(e_t);
    // de/da = c_an·n − c_ap·p; de/dp = c_an·n − c_ap·a; de/dn = c_an·(a+p).
    detail::add_row_grad(emb, out.emb_grad, t.anchor, t.negative, w * c_an);
    detail::add_row_grad(emb, out.emb_grad, t.anchor, t.positive, -w * c_ap);
    detail::add_row_grad(emb, out.emb_grad, t.positive, t.negative, w * c_an);
    detail::add_row_grad(emb, out.emb_grad, t.positive, t.anchor, -w * c_ap);
    detail::add_row_grad(emb, out.emb_grad, t.negative, t.anchor, w * c_an);
    detail::add_row_grad(emb, out.emb_grad, t.negative, t.positive, w * c_an);
  }
  out.value = static_cast<Real>(static_cast<double>(out.value) + w_b * extra);
  return out;
}

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
// The gradient is taken with respect to the incoming probabilities and is
// zero where the clamp is active.
template <class Real>
TaskLossOutcome<Real> cross_entropy(const std::vector<Real>& probabilities,
                                    const std::vector<int>& binary_labels) {
  if (probabilities.size() != binary_labels.size())
    throw DimensionError("cross_entropy: size mismatch");
  if (probabilities.empty()) throw DimensionError("cross_entropy: empty batch");
  constexpr double kClamp = 1e-7;
  TaskLossOutcome<Real> out;
  out.grad.assign(probabilities.size(), Real(0));
  const double inv_n = 1.0 / static_cast<double>(probabilities.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = static_cast<double>(probabilities[i]);
    const double pc = std::min(1.0 - kClamp, std::max(kClamp, p));
    const double y = binary_labels[i] ? 1.0 : 0.0;
    loss += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    if (p > kClamp && p < 1.0 - kClamp)
      out.grad[i] = static_cast<Real>(inv_n * (pc - y) / (pc * (1.0 - pc)));
  }
  out.value = static_cast<Real>(loss * inv_n);
  return out;
}

// L_RMSE = sqrt(mean (pred − y)²); gradients flow through the root.
template <class Real>
TaskLossOutcome<Real> rmse_loss(const std::vector<Real>& predictions,
                                const std::vector<double>& targets) {
  if (predictions.size() != targets.size())
    throw DimensionError("rmse_loss: size mismatch");
  if (predictions.empty()) throw DimensionError("rmse_loss: empty batch");
  TaskLossOutcome<Real> out;
  out.grad.assign(predictions.size(), Real(0));
  const double inv_n = 1.0 / static_cast<double>(predictions.size());
  double mse = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = static_cast<double>(predictions[i]) - targets[i];
    mse += d * d;
  }
  mse *= inv_n;
  const double rmse = std::sqrt(mse);
  out.value = static_cast<Real>(rmse);
  if (rmse > 0) {
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const double d = static_cast<double>(predictions[i]) - targets[i];
      out.grad[i] = static_cast<Real>(inv_n * d / rmse);
    }
  }
  return out;
}

// Row-wise L2 normalization e / (||e|| + 1e-12) plus the chain rule mapping a
// gradient on the normalized embeddings back to the raw ones.
template <class Real>
Tensor<Real> normalize_rows(const Tensor<Real>& emb) {
  detail::check_embeddings(emb);
  Tensor<Real> out(emb.shape);
  const int rows = emb.dim(0);
  const int d = emb.dim(1);
  for (int i = 0; i < rows; ++i) {
    const double norm = std::sqrt(detail::row_dot(emb, i, i));
    const double inv = 1.0 / (norm + 1e-12);
    const Real* src = emb.values.data() + static_cast<std::size_t>(i) * d;
    Real* dst = out.values.data() + static_cast<std::size_t>(i) * d;
    for (int c = 0; c < d; ++c)
      dst[c] = static_cast<Real>(static_cast<double>(src[c]) * inv);
  }
  return out;
}

template <class Real>
Tensor<Real> normalize_rows_backward(const Tensor<Real>& emb,
                                     const Tensor<Real>& grad_normed) {
  detail::check_embeddings(emb);
  if (!same_shape(emb, grad_normed))
    throw DimensionError("normalize backward: shape mismatch");
  Tensor<Real> out(emb.shape);
  const int rows = emb.dim(0);
  const int d = emb.dim(1);
  for (int i = 0; i < rows; ++i) {
    const Real* e = emb.values.data() + static_cast<std::size_t>(i) * d;
    const Real* g = grad_normed.values.data() + static_cast<std::size_t>(i) * d;
    Real* o = out.values.data() + static_cast<std::size_t>(i) * d;
    const double norm = std::sqrt(detail::row_dot(emb, i, i));
    const double s = norm + 1e-12;
    double dot_eg = 0.0;
    for (int c = 0; c < d; ++c)
      dot_eg += static_cast<double>(e[c]) * static_cast<double>(g[c]);
    for (int c = 0; c < d; ++c) {
      double v = static_cast<double>(g[c]) / s;
      if (norm > 0)
        v -= dot_eg * static_cast<double>(e[c]) / (s * s * norm);
      o[c] = static_cast<Real>(v);
    }
  }
  return out;
}

// Dispatcher: applies optional embedding normalization, evaluates the chosen
// metric loss, and chains gradients back to the raw embeddings.
template <class Real>
MetricLossOutcome<Real> metric_loss(const ObjectiveSpec& spec,
                                    const Tensor<Real>& emb,
                                    const TripletIndexBatch& triples,
                                    const LearnableBoundary* boundary) {
  spec.validate();
  if (spec.metric_loss == MetricLossKind::none) {
    MetricLossOutcome<Real> out;
    out.emb_grad = Tensor<Real>(emb.shape);
    out.empty = true;
    return out;
  }
  const Tensor<Real>* target = &emb;
  Tensor<Real> normed;
  if (spec.normalize_embeddings) {
    normed = normalize_rows(emb);
    target = &normed;
  }
  MetricLossOutcome<Real> out;
  switch (spec.metric_loss) {
    case MetricLossKind::triplet_raw:
      out = triplet_loss(*target, triples, TripletVariant::raw,
                         spec.triplet_margin);
      break;
    case MetricLossKind::triplet_hinge:
      out = triplet_loss(*target, triples, TripletVariant::hinge,
                         spec.triplet_margin);
      break;
    case MetricLossKind::margin: {
      if (!boundary)
        throw InternalError("margin loss requires a LearnableBoundary");
      out = margin_loss(*target, pairs_from_triples(triples), *boundary,
                        spec.margin_gamma, spec.margin_literal_formula);
      break;
    }
    case MetricLossKind::angular:
      out = angular_loss(*target, triples, spec.angular_margin,
                         spec.angular_lambda, spec.npair_nu);
      break;
    case MetricLossKind::npair:
      out = npair_loss(*target, triples, spec.npair_nu);
      break;
    case MetricLossKind::none:
      break;  // handled above
  }
  if (spec.normalize_embeddings)
    out.emb_grad = normalize_rows_backward(emb, out.emb_grad);
  return out;
}

}  // namespace sigmetric
