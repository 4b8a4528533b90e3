#include "sigmetric/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sigmetric/rng.hpp"
#include "sigmetric/train.hpp"

namespace sigmetric {

namespace {

using nlohmann::json;

std::vector<int> subset_of(const std::vector<int>& membership, int wanted) {
  std::vector<int> out;
  for (std::size_t i = 0; i < membership.size(); ++i)
    if (membership[i] == wanted) out.push_back(static_cast<int>(i));
  return out;
}

// Bootstrap over a subset: replicate indices are local to the subset and
// mapped back to global record indices before scoring.
BootstrapResult bootstrap_subset(const IndexMetricFn& fn,
                                 const std::vector<int>& subset,
                                 int n_replicates, std::uint64_t seed) {
  IndexMetricFn local = [&fn, &subset](const std::vector<int>& idx) {
    std::vector<int> global;
    global.reserve(idx.size());
    for (int i : idx) global.push_back(subset[i]);
    return fn(global);
  };
  return bootstrap_metric(local, static_cast<int>(subset.size()), n_replicates,
                          seed);
}

struct SubgroupResults {
  std::vector<SubgroupEntry> entries;
  std::map<std::string, double> gaps;
  std::map<std::string, KruskalWallisResult> kw;
};

SubgroupResults subgroup_analysis(const IndexMetricFn& fn,
                                  const std::string& metric,
                                  const std::vector<Gender>& genders,
                                  const std::vector<double>& ages,
                                  const EvalConfig& cfg,
                                  std::vector<std::string>& warnings) {
  SubgroupResults out;
  std::vector<std::vector<double>> gender_replicates;

  std::vector<int> gender_flags(genders.size());
  for (std::size_t i = 0; i < genders.size(); ++i)
    gender_flags[i] = genders[i] == Gender::female ? 1 : 0;
  for (int flag : {0, 1}) {
    const std::string name = flag == 0 ? "male" : "female";
    const std::vector<int> subset = subset_of(gender_flags, flag);
    if (subset.empty()) {
      warnings.push_back(metric + ": no " + name + " records");
      continue;
    }
    try {
      SubgroupEntry entry;
      entry.name = name;
      entry.n = static_cast<int>(subset.size());
      entry.estimate = fn(subset);
      BootstrapResult boot = bootstrap_subset(
          fn, subset, cfg.bootstrap_replicates,
          derive_seed(derive_seed(cfg.seed, "boot_" + metric), name));
      entry.boot_mean = boot.mean;
      entry.boot_std = boot.stddev;
      out.entries.push_back(entry);
      gender_replicates.push_back(std::move(boot.replicates));
    } catch (const UndefinedMetricError& e) {
      warnings.push_back(metric + " undefined for " + name + ": " + e.what());
    }
  }

  try {
    const GenderGapResult gap = subgroup_gap_gender(fn, genders);
    out.gaps["gender_gap"] = gap.gap;
    out.gaps["gender_gap_abs"] = std::abs(gap.gap);
  } catch (const UndefinedMetricError& e) {
    warnings.push_back(metric + ": gender gap undefined: " + e.what());
  }
  if (gender_replicates.size() == 2)
    out.kw["gender"] = kruskal_wallis(gender_replicates);
  else
    warnings.push_back(metric +
                       ": Kruskal-Wallis across genders skipped (need both)");

  std::vector<int> age_bins(ages.size());
  for (std::size_t i = 0; i < ages.size(); ++i)
    age_bins[i] = age_bin_index(ages[i]);
  std::vector<std::vector<double>> age_replicates;
  for (int b = 0; b < kAgeBinCount; ++b) {
    const std::vector<int> subset = subset_of(age_bins, b);
    if (subset.empty()) continue;  // subgroup_gap_age reports the warning
    try {
      SubgroupEntry entry;
      entry.name = kAgeBinLabels[b];
      entry.n = static_cast<int>(subset.size());
      entry.estimate = fn(subset);
      BootstrapResult boot = bootstrap_subset(
          fn, subset, cfg.bootstrap_replicates,
          derive_seed(derive_seed(cfg.seed, "boot_" + metric), entry.name));
      entry.boot_mean = boot.mean;
      entry.boot_std = boot.stddev;
      out.entries.push_back(entry);
      age_replicates.push_back(std::move(boot.replicates));
    } catch (const UndefinedMetricError& e) {
      warnings.push_back(metric + " undefined for " +
                         std::string(kAgeBinLabels[b]) + ": " + e.what());
    }
  }
  try {
    const AgeGapResult age_gap = subgroup_gap_age(fn, ages);
    for (const std::string& w : age_gap.warnings)
      warnings.push_back(metric + ": " + w);
    out.gaps["age_average_gap"] = age_gap.average_gap;
  } catch (const UndefinedMetricError& e) {
    warnings.push_back(metric + ": age gap undefined: " + e.what());
  }
  if (age_replicates.size() >= 2)
    out.kw["age"] = kruskal_wallis(age_replicates);
  else
    warnings.push_back(metric +
                       ": Kruskal-Wallis across age bins skipped (<2 bins)");
  return out;
}

MetricBlock make_block(const std::string& metric, const IndexMetricFn& fn,
                       int n_records, const EvalConfig& cfg) {
  MetricBlock block;
  block.metric = metric;
  std::vector<int> all(n_records);
  for (int i = 0; i < n_records; ++i) all[i] = i;
  block.estimate = fn(all);
  const BootstrapResult boot =
      bootstrap_metric(fn, n_records, cfg.bootstrap_replicates,
                       derive_seed(cfg.seed, "boot_" + metric));
  block.boot_mean = boot.mean;
  block.boot_std = boot.stddev;
  block.n_replicates = boot.n_replicates;
  block.redraws = boot.redraws;
  return block;
}

}  // namespace

EvaluationReport evaluate_model(Model<float>& model, const LabeledDataset& data,
                                const EvalConfig& cfg) {
  cfg.validate();
  if (!model.head_cfg)
    throw ConfigError("checkpoint has no task head; evaluation requires one");
  data.validate();
  const int n = static_cast<int>(data.records.size());
  if (n < 2) throw DataError("evaluation needs at least 2 records");

  EvaluationReport report;
  report.task = model.head_cfg->task;
  report.n_records = n;
  report.seed = cfg.seed;
  report.bootstrap_replicates = cfg.bootstrap_replicates;
  report.subgroups = cfg.subgroups;

  const std::span<const SignalRecord> records(data.records);
  const std::vector<double> preds =
      predict_records(model, records, cfg.batch_size);
  const RowMatrix embeddings = embed_records(model, records, cfg.batch_size);

  std::vector<int> labels(data.labels.size());
  std::vector<double> targets(data.labels.size());
  std::vector<Gender> genders(data.records.size());
  std::vector<double> ages(data.records.size());
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    labels[i] = binarize_label(data.labels[i].mpcwp_mmhg, cfg.threshold_mmhg);
    targets[i] = data.labels[i].mpcwp_mmhg;
    genders[i] = data.records[i].demographics.gender;
    ages[i] = data.records[i].demographics.age_years;
  }

  const IndexMetricFn auc_fn = [&](const std::vector<int>& idx) {
    std::vector<double> s;
    std::vector<int> l;
    s.reserve(idx.size());
    l.reserve(idx.size());
    for (int i : idx) {
      s.push_back(preds[i]);
      l.push_back(labels[i]);
    }
    return auc(s, l);
  };
  const IndexMetricFn apr_fn = [&](const std::vector<int>& idx) {
    std::vector<double> s;
    std::vector<int> l;
    for (int i : idx) {
      s.push_back(preds[i]);
      l.push_back(labels[i]);
    }
    return average_precision(s, l);
  };
  const IndexMetricFn rmse_fn = [&](const std::vector<int>& idx) {
    std::vector<double> p, t;
    for (int i : idx) {
      p.push_back(preds[i]);
      t.push_back(targets[i]);
    }
    return rmse_metric(p, t);
  };
  const IndexMetricFn recall_fn = [&](const std::vector<int>& idx) {
    RowMatrix sub(static_cast<int>(idx.size()), embeddings.cols);
    std::vector<int> l;
    l.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (int c = 0; c < embeddings.cols; ++c)
        sub.at(static_cast<int>(r), c) = embeddings.at(idx[r], c);
      l.push_back(labels[idx[r]]);
    }
    return recall_at_k(sub, l, 1);
  };

  struct Planned {
    std::string name;
    const IndexMetricFn* fn;
    bool stratify;
  };
  std::vector<Planned> plan;
  if (report.task == TaskKind::classification) {
    plan.push_back({"auc", &auc_fn, true});
    plan.push_back({"apr", &apr_fn, true});
  } else {
    plan.push_back({"rmse", &rmse_fn, true});
  }
  plan.push_back({"recall_at_1", &recall_fn, false});

  for (const Planned& p : plan) {
    MetricBlock block = make_block(p.name, *p.fn, n, cfg);
    if (cfg.subgroups && p.stratify) {
      SubgroupResults sub = subgroup_analysis(*p.fn, p.name, genders, ages,
                                              cfg, report.warnings);
      block.subgroups = std::move(sub.entries);
      block.gaps = std::move(sub.gaps);
      block.kruskal_wallis = std::move(sub.kw);
    }
    report.metrics.push_back(std::move(block));
  }

  if (cfg.subgroups) {
    int female_count = 0;
    for (Gender g : genders)
      if (g == Gender::female) ++female_count;
    const int male_count = n - female_count;
    // Minority gender (ties go to female, matching typical cohort skew).
    const Gender target =
        female_count <= male_count ? Gender::female : Gender::male;
    report.knn_target_group = gender_to_string(target);
    std::vector<int> flags(genders.size());
    for (std::size_t i = 0; i < genders.size(); ++i)
      flags[i] = genders[i] == target ? 1 : 0;
    for (int k : cfg.knn_k) {
      if (k >= n) {
        report.warnings.push_back("knn k=" + std::to_string(k) +
                                  " skipped: needs more than k records");
        continue;
      }
      try {
        report.knn_same_gender["k" + std::to_string(k)] =
            knn_same_group_proportion(embeddings, flags, k, 1);
      } catch (const UndefinedMetricError& e) {
        report.warnings.push_back("knn k=" + std::to_string(k) +
                                  " undefined: " + e.what());
      }
    }
  }
  return report;
}

namespace {

json block_to_json(const MetricBlock& b) {
  json subs = json::array();
  for (const SubgroupEntry& e : b.subgroups)
    subs.push_back(json{{"name", e.name},
                        {"n", e.n},
                        {"estimate", e.estimate},
                        {"boot_mean", e.boot_mean},
                        {"boot_std", e.boot_std}});
  json kw = json::object();
  for (const auto& [name, r] : b.kruskal_wallis)
    kw[name] = json{{"h", r.h}, {"p", r.p}};
  return json{{"metric", b.metric},
              {"estimate", b.estimate},
              {"boot_mean", b.boot_mean},
              {"boot_std", b.boot_std},
              {"n_replicates", b.n_replicates},
              {"redraws", b.redraws},
              {"subgroups", subs},
              {"gaps", b.gaps},
              {"kruskal_wallis", kw}};
}

}  // namespace

void write_report_json(const EvaluationReport& report,
                       const std::filesystem::path& file) {
  json blocks = json::array();
  for (const MetricBlock& b : report.metrics) blocks.push_back(block_to_json(b));
  const json j = {{"task", task_kind_to_string(report.task)},
                  {"n_records", report.n_records},
                  {"seed", report.seed},
                  {"bootstrap_replicates", report.bootstrap_replicates},
                  {"subgroups", report.subgroups},
                  {"metrics", blocks},
                  {"knn_same_gender", report.knn_same_gender},
                  {"knn_target_group", report.knn_target_group},
                  {"warnings", report.warnings}};
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write report: " + file.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("report write failed: " + file.string());
}

void write_report_csv(const EvaluationReport& report,
                      const std::filesystem::path& file) {
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write report: " + file.string());
  out << "metric,subgroup,estimate,boot_mean,boot_std\n";
  for (const MetricBlock& b : report.metrics) {
    out << b.metric << ",all," << format_double(b.estimate) << ','
        << format_double(b.boot_mean) << ',' << format_double(b.boot_std)
        << '\n';
    for (const SubgroupEntry& e : b.subgroups)
      out << b.metric << ',' << e.name << ',' << format_double(e.estimate)
          << ',' << format_double(e.boot_mean) << ','
          << format_double(e.boot_std) << '\n';
    for (const auto& [name, value] : b.gaps)
      out << b.metric << ',' << name << ',' << format_double(value) << ",,\n";
  }
  for (const auto& [key, value] : report.knn_same_gender)
    out << "knn_same_gender_" << key << ',' << report.knn_target_group << ','
        << format_double(value) << ",,\n";
  if (!out) throw DataError("report write failed: " + file.string());
}

}  // namespace sigmetric
