#include "sigmetric/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sigmetric/rng.hpp"

namespace sigmetric {

namespace {

// Midranks (average rank for ties), 1-based.
std::vector<double> midranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

void check_scores_labels(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("scores and labels differ in length");
  if (scores.empty()) throw UndefinedMetricError("empty score list");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("non-finite score");
  for (int l : labels)
    if (l != 0 && l != 1) throw DataError("labels must be binary 0/1");
}

}  // namespace

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_scores_labels(scores, labels);
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += static_cast<std::size_t>(l);
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetricError("auc undefined: only one class present");
  const std::vector<double> ranks = midranks(scores);
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) rank_sum_pos += ranks[i];
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  check_scores_labels(scores, labels);
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += static_cast<std::size_t>(l);
  if (n_pos == 0)
    throw UndefinedMetricError("average precision undefined: no positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double recall_prev = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  // Tied scores form a single threshold: precision/recall step once per group.
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t group_tp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_tp += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    tp += group_tp;
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

double rmse_metric(const std::vector<double>& predictions,
                   const std::vector<double>& targets) {
  if (predictions.size() != targets.size())
    throw DimensionError("predictions and targets differ in length");
  if (predictions.empty()) throw UndefinedMetricError("rmse of an empty set");
  double mse = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    mse += d * d;
  }
  return std::sqrt(mse / static_cast<double>(predictions.size()));
}

namespace {

// Indices of the k nearest rows to `anchor` (self excluded), squared
// Euclidean, ties broken by lower index.
std::vector<int> k_nearest(const RowMatrix& emb, int anchor, int k) {
  std::vector<std::pair<double, int>> dist;
  dist.reserve(static_cast<std::size_t>(emb.rows) - 1);
  for (int j = 0; j < emb.rows; ++j) {
    if (j == anchor) continue;
    dist.emplace_back(squared_row_distance(emb, anchor, j), j);
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(dist[static_cast<std::size_t>(i)].second);
  return out;
}

}  // namespace

double recall_at_k(const RowMatrix& embeddings, const std::vector<int>& labels,
                   int k) {
  const int n = embeddings.rows;
  if (static_cast<int>(labels.size()) != n)
    throw DimensionError("recall_at_k: label count != embedding rows");
  if (k < 1) throw ConfigError("recall_at_k: k must be >= 1");
  if (n <= k)
    throw ConfigError("recall_at_k requires more samples than k (" +
                      std::to_string(n) + " <= " + std::to_string(k) + ")");
  int hits = 0;
  for (int a = 0; a < n; ++a) {
    for (int j : k_nearest(embeddings, a, k)) {
      if (labels[j] == labels[a]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double knn_same_group_proportion(const RowMatrix& embeddings,
                                 const std::vector<int>& group_flags, int k,
                                 int target_group) {
  const int n = embeddings.rows;
  if (static_cast<int>(group_flags.size()) != n)
    throw DimensionError("knn proportion: flag count != embedding rows");
  if (k < 1) throw ConfigError("knn proportion: k must be >= 1");
  if (n <= k)
    throw ConfigError("knn proportion requires more samples than k");
  double sum = 0.0;
  int anchors = 0;
  for (int a = 0; a < n; ++a) {
    if (group_flags[a] != target_group) continue;
    int same = 0;
    for (int j : k_nearest(embeddings, a, k))
      if (group_flags[j] == target_group) ++same;
    sum += static_cast<double>(same) / static_cast<double>(k);
    ++anchors;
  }
  if (anchors == 0)
    throw UndefinedMetricError("knn proportion: target group is empty");
  return sum / static_cast<double>(anchors);
}

BootstrapResult bootstrap_metric(const IndexMetricFn& metric_fn, int n_records,
                                 int n_replicates, std::uint64_t seed,
                                 bool resample) {
  if (n_records < 1) throw UndefinedMetricError("bootstrap over an empty set");
  if (n_replicates < 1) throw ConfigError("n_replicates must be >= 1");
  BootstrapResult out;
  out.n_replicates = n_replicates;
  out.replicates.reserve(static_cast<std::size_t>(n_replicates));

  std::vector<int> identity(static_cast<std::size_t>(n_records));
  std::iota(identity.begin(), identity.end(), 0);

  const int max_redraws = n_replicates / 2;
  for (int r = 0; r < n_replicates; ++r) {
    Rng rng(derive_seed(seed, "bootstrap_replicate", static_cast<std::uint64_t>(r)));
    for (;;) {
      std::vector<int> idx;
      if (resample) {
        idx.resize(static_cast<std::size_t>(n_records));
        for (int i = 0; i < n_records; ++i)
          idx[static_cast<std::size_t>(i)] =
              static_cast<int>(rng.next_below(static_cast<std::size_t>(n_records)));
      } else {
        idx = identity;
      }
      try {
        out.replicates.push_back(metric_fn(idx));
        break;
      } catch (const UndefinedMetricError&) {
        if (!resample)
          throw;  // identity resample can never become defined by redrawing
        ++out.redraws;
        if (out.redraws > max_redraws)
          throw UndefinedMetricError(
              "bootstrap degenerate: more than half of the replicate budget (" +
              std::to_string(out.redraws) + " redraws) was undefined");
      }
    }
  }

  double mean = 0.0;
  for (double v : out.replicates) mean += v;
  mean /= static_cast<double>(out.replicates.size());
  out.mean = mean;
  if (out.replicates.size() > 1) {
    double ss = 0.0;
    for (double v : out.replicates) {
      const double d = v - mean;
      ss += d * d;
    }
    out.stddev = std::sqrt(ss / static_cast<double>(out.replicates.size() - 1));
  }
  return out;
}

GenderGapResult subgroup_gap_gender(const IndexMetricFn& metric_fn,
                                    const std::vector<Gender>& genders) {
  std::vector<int> male_idx;
  std::vector<int> female_idx;
  for (std::size_t i = 0; i < genders.size(); ++i)
    (genders[i] == Gender::male ? male_idx : female_idx)
        .push_back(static_cast<int>(i));
  if (male_idx.empty() || female_idx.empty())
    throw UndefinedMetricError("gender gap undefined: a group is empty");
  GenderGapResult out;
  out.male_value = metric_fn(male_idx);
  out.female_value = metric_fn(female_idx);
  out.gap = out.male_value - out.female_value;
  return out;
}

AgeGapResult subgroup_gap_age(const IndexMetricFn& metric_fn,
                              const std::vector<double>& ages) {
  std::array<std::vector<int>, kAgeBinCount> bins;
  for (std::size_t i = 0; i < ages.size(); ++i) {
    const int b = age_bin_index(ages[i]);
    if (b < 0) continue;  // below the youngest bin edge
    bins[static_cast<std::size_t>(b)].push_back(static_cast<int>(i));
  }
  AgeGapResult out;
  std::vector<double> usable;
  for (int b = 0; b < kAgeBinCount; ++b) {
    if (bins[static_cast<std::size_t>(b)].empty()) {
      out.warnings.push_back(std::string("age bin ") + kAgeBinLabels[b] +
                             " is empty; excluded from the gap");
      continue;
    }
    try {
      const double v = metric_fn(bins[static_cast<std::size_t>(b)]);
      out.bin_values[static_cast<std::size_t>(b)] = v;
      usable.push_back(v);
    } catch (const UndefinedMetricError& e) {
      out.warnings.push_back(std::string("age bin ") + kAgeBinLabels[b] +
                             ": metric undefined (" + e.what() +
                             "); excluded from the gap");
    }
  }
  if (usable.size() < 2)
    throw UndefinedMetricError(
        "age gap undefined: fewer than two usable age bins");
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < usable.size(); ++i)
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      sum += std::abs(usable[i] - usable[j]);
      ++pairs;
    }
  out.average_gap = sum / static_cast<double>(pairs);
  return out;
}

namespace {

double gamma_p_series(double a, double x) {
  // Lower regularized P(a,x) by series; converges fast for x < a + 1.
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 10000; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_continued_fraction(double a, double x) {
  // Upper regularized Q(a,x) by Lentz's continued fraction; for x >= a + 1.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 10000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (a <= 0) throw ConfigError("regularized_gamma_q: a must be positive");
  if (x < 0) throw ConfigError("regularized_gamma_q: x must be non-negative");
  if (x == 0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_continued_fraction(a, x);
}

double chi_square_survival(double x, int df) {
  if (df < 1) throw ConfigError("chi_square_survival: df must be >= 1");
  if (x < 0) throw ConfigError("chi_square_survival: x must be non-negative");
  return regularized_gamma_q(static_cast<double>(df) / 2.0, x / 2.0);
}

KruskalWallisResult kruskal_wallis(
    const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2)
    throw UndefinedMetricError("kruskal_wallis needs at least two groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty())
      throw UndefinedMetricError("kruskal_wallis: empty group");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const std::size_t n = pooled.size();
  const std::vector<double> ranks = midranks(pooled);

  double h = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
    h += rank_sum * rank_sum / static_cast<double>(g.size());
    offset += g.size();
  }
  const double dn = static_cast<double>(n);
  h = 12.0 / (dn * (dn + 1.0)) * h - 3.0 * (dn + 1.0);

  // Tie correction: divide by 1 - sum(t^3 - t) / (n^3 - n).
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_sum += t * t * t - t;
    i = j + 1;
  }
  const double correction = 1.0 - tie_sum / (dn * dn * dn - dn);
  KruskalWallisResult out;
  if (correction <= 0.0) {
    // Every pooled value identical: no rank information at all.
    out.h = 0.0;
    out.p = 1.0;
    return out;
  }
  out.h = h / correction;
  if (out.h < 0 && out.h > -1e-12) out.h = 0.0;  // rounding guard
  out.p = chi_square_survival(out.h, static_cast<int>(groups.size()) - 1);
  return out;
}

}  // namespace sigmetric
