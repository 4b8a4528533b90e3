#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sigmetric/dataset.hpp"
#include "sigmetric/matrix.hpp"

namespace sigmetric {

// Tie-aware Mann-Whitney AUC: (#{(pos,neg): s_pos > s_neg} + 0.5·ties) /
// (n_pos·n_neg), computed via midranks.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Average precision with ties grouped at a single threshold:
// sum over descending thresholds of (R_n - R_{n-1}) * P_n.
double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels);

double rmse_metric(const std::vector<double>& predictions,
                   const std::vector<double>& targets);

// Fraction of samples whose k nearest neighbors (Euclidean in embedding
// space, self excluded, distance ties broken by lower index) contain at least
// one sample with the same label.
double recall_at_k(const RowMatrix& embeddings, const std::vector<int>& labels,
                   int k);

// Over anchors belonging to target_group: the fraction of their k nearest
// neighbors that are also in target_group, averaged over anchors.
double knn_same_group_proportion(const RowMatrix& embeddings,
                                 const std::vector<int>& group_flags, int k,
                                 int target_group);

// metric_fn receives a multiset of record indices (a resample) and returns
// the metric value, throwing UndefinedMetricError when undefined.
using IndexMetricFn = std::function<double(const std::vector<int>&)>;

struct BootstrapResult {
  double mean = 0.0;
  double stddev = 0.0;  // (n-1)-denominator
  int n_replicates = 0;
  int redraws = 0;
  std::vector<double> replicates;
};

// Record-level resampling with replacement; undefined-metric resamples are
// redrawn (from the same replicate stream) and counted.  More redraws than
// half the replicate budget aborts with UndefinedMetricError.  With
// resample=false every replicate evaluates the identity index set.
BootstrapResult bootstrap_metric(const IndexMetricFn& metric_fn, int n_records,
                                 int n_replicates, std::uint64_t seed,
                                 bool resample = true);

struct GenderGapResult {
  double male_value = 0.0;
  double female_value = 0.0;
  double gap = 0.0;  // male - female
};

GenderGapResult subgroup_gap_gender(const IndexMetricFn& metric_fn,
                                    const std::vector<Gender>& genders);

struct AgeGapResult {
  std::array<std::optional<double>, kAgeBinCount> bin_values;
  double average_gap = 0.0;  // mean over unordered non-empty bin pairs of |vi - vj|
  std::vector<std::string> warnings;
};

// Bins ages with age_bin_index.  Bins that are empty, or on which the metric
// is undefined, are excluded with a warning; fewer than two usable bins is an
// undefined-metric error.
AgeGapResult subgroup_gap_age(const IndexMetricFn& metric_fn,
                              const std::vector<double>& ages);

struct KruskalWallisResult {
  double h = 0.0;
  double p = 1.0;
};

// Midrank-based H with tie correction; p from the chi-square survival
// function with (#groups - 1) degrees of freedom.  All values identical
// across all groups yields H = 0, p = 1.
KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Upper-tail probability P(X > x) for a chi-square with df degrees of
// freedom, via the regularized incomplete gamma function.
double chi_square_survival(double x, int df);

// Regularized upper incomplete gamma Q(a, x) (series / continued fraction).
double regularized_gamma_q(double a, double x);

}  // namespace sigmetric
