#include "sigmetric/train.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "sigmetric/evaluate.hpp"
#include "sigmetric/metrics.hpp"
#include "sigmetric/rng.hpp"
#include "sigmetric/tape.hpp"

namespace sigmetric {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// The run seed is the single source of randomness for a training run: the
// encoder/head initialization and head dropout derive from "init", mining
// from "mining".  Seeds carried inside EncoderConfig / MinerSpec only apply
// to direct library calls.
EncoderConfig encoder_for_run(const TrainConfig& cfg) {
  EncoderConfig enc = cfg.encoder;
  enc.seed = derive_seed(cfg.seed, "init");
  return enc;
}

MinerSpec miner_for_run(const TrainConfig& cfg) {
  MinerSpec spec = cfg.miner;
  spec.seed = derive_seed(cfg.seed, "mining");
  return spec;
}

void check_task_coupling(const TrainConfig& cfg) {
  const TaskKind task = cfg.head.task;
  const TaskLossKind loss = cfg.objective.task_loss;
  if (task == TaskKind::classification && loss != TaskLossKind::cross_entropy)
    throw ConfigError("classification head requires task_loss cross_entropy");
  if (task == TaskKind::regression && loss != TaskLossKind::rmse)
    throw ConfigError("regression head requires task_loss rmse");
}

std::vector<int> batch_binary_labels(const LabeledDataset& data,
                                     const std::vector<int>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = data.labels[idx[i]].elevated;
  return out;
}

std::vector<double> batch_mpcwp(const LabeledDataset& data,
                                const std::vector<int>& idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = data.labels[idx[i]].mpcwp_mmhg;
  return out;
}

std::vector<SignalRecord> gather_records(const std::vector<SignalRecord>& recs,
                                         const std::vector<int>& idx) {
  std::vector<SignalRecord> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(recs[i]);
  return out;
}

// Consecutive chunks of the (already shuffled) order; a trailing chunk
// smaller than 3 is dropped (too small for batch norm and mining).
std::vector<std::vector<int>> chunk_batches(const std::vector<int>& order,
                                            int batch_size) {
  std::vector<std::vector<int>> batches;
  for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
    const std::size_t hi =
        std::min(order.size(), lo + static_cast<std::size_t>(batch_size));
    if (hi - lo < 3) break;
    batches.emplace_back(order.begin() + lo, order.begin() + hi);
  }
  return batches;
}

std::vector<int> identity_order(std::size_t n) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  return order;
}

RowMatrix embeddings_as_matrix(const Tensor<float>& emb) {
  RowMatrix m(emb.dim(0), emb.dim(1));
  for (std::size_t i = 0; i < emb.values.size(); ++i)
    m.values[i] = static_cast<double>(emb.values[i]);
  return m;
}

void dump_triples(const std::filesystem::path& dir, std::int64_t step,
                  const TripletIndexBatch& batch) {
  std::filesystem::create_directories(dir);
  char name[32];
  std::snprintf(name, sizeof(name), "step_%06lld.csv",
                static_cast<long long>(step));
  std::ofstream out(dir / name, std::ios::trunc);
  if (!out) throw DataError("cannot write triplet dump in " + dir.string());
  out << "anchor,positive,negative\n";
  for (const Triple& t : batch.triples)
    out << t.anchor << ',' << t.positive << ',' << t.negative << '\n';
}

double validation_metric(Model<float>& model, const LabeledDataset& valid,
                         int batch_size) {
  const std::vector<double> preds =
      predict_records(model, std::span<const SignalRecord>(valid.records),
                      batch_size);
  if (model.head_cfg->task == TaskKind::classification) {
    std::vector<int> labels(valid.labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      labels[i] = valid.labels[i].elevated;
    return auc(preds, labels);
  }
  std::vector<double> targets(valid.labels.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    targets[i] = valid.labels[i].mpcwp_mmhg;
  return rmse_metric(preds, targets);
}

bool improves(TaskKind task, double candidate, double best) {
  return task == TaskKind::classification ? candidate > best : candidate < best;
}

// Shared supervised epoch loop (joint training and finetuning).  The metric
// path only runs when the objective has a metric loss with alpha > 0, and the
// batching/shuffle streams do not depend on that, so an alpha = 0 run is
// bitwise identical to a metric-free one.
TrainOutcome supervised_loop(Model<float> model, const SplitResult& splits,
                             const TrainConfig& cfg) {
  const LabeledDataset& train = splits.train;
  const std::size_t n = train.records.size();
  if (n < 3) throw ConfigError("training split needs at least 3 records");
  if (splits.valid.records.empty())
    throw ConfigError("validation split is empty");

  const bool metric_on = cfg.objective.metric_loss != MetricLossKind::none &&
                         cfg.objective.alpha_scale > 0.0;
  if (metric_on && cfg.miner.kind == MinerKind::distance_ranked)
    throw ConfigError(
        "the distance_ranked miner is for self-supervised pretraining");
  const double alpha = cfg.objective.alpha_scale;
  const MinerSpec miner = miner_for_run(cfg);
  const AdamHyper adam{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  LearnableBoundary boundary{cfg.objective.margin_beta_init,
                             cfg.objective.margin_beta_lr};

  if (model.head_cfg->task == TaskKind::regression) {
    double mean = 0.0;
    for (const auto& l : train.labels) mean += l.mpcwp_mmhg;
    mean /= static_cast<double>(train.labels.size());
    double var = 0.0;
    for (const auto& l : train.labels) {
      const double d = l.mpcwp_mmhg - mean;
      var += d * d;
    }
    var /= static_cast<double>(train.labels.size());
    model.target_mean = mean;
    model.target_std = var > 1e-24 ? std::sqrt(var) : 1.0;
  }

  TrainOutcome out;
  out.best_val_metric =
      model.head_cfg->task == TaskKind::classification
          ? -std::numeric_limits<double>::infinity()
          : std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::vector<int> order = identity_order(n);
    Rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)))
        .shuffle(order);
    const auto batches = chunk_batches(order, cfg.batch_size);
    if (batches.empty())
      throw ConfigError("no usable batches: training split too small");

    double task_sum = 0.0, metric_sum = 0.0;
    for (const auto& planned : batches) {
      model.mode = Mode::train;
      std::vector<int> batch = planned;
      const std::int64_t step = model.step_count;

      // Miner starvation redraws the batch from a dedicated stream; the
      // planned batches of later steps are unaffected.
      int attempt = 0;
      for (;;) {
        Tape<float> tape;
        const std::vector<SignalRecord> recs = gather_records(train.records, batch);
        auto* x = tape.input(records_to_tensor<float>(
            std::span<const SignalRecord>(recs), model.input_leads));
        auto* emb = encoder_forward(tape, model, x);
        auto* pred = head_forward(tape, model, emb,
                                  static_cast<std::uint64_t>(step));

        MiningResult mined;
        MetricLossOutcome<float> metric;
        if (metric_on) {
          const std::vector<int> labels = batch_binary_labels(train, batch);
          const std::vector<double> values = batch_mpcwp(train, batch);
          const RowMatrix embmat = embeddings_as_matrix(emb->value);
          mined = mine(miner, &embmat, &labels, &values, nullptr,
                       static_cast<std::uint64_t>(step));
          if (mined.starved) {
            ++attempt;
            if (attempt > cfg.resample_attempts)
              throw TrainError("miner starved after " +
                               std::to_string(cfg.resample_attempts) +
                               " batch resamples at step " +
                               std::to_string(step));
            std::vector<int> fresh = identity_order(n);
            Rng(derive_seed(derive_seed(cfg.seed, "resample",
                                        static_cast<std::uint64_t>(step)),
                            "attempt", static_cast<std::uint64_t>(attempt)))
                .shuffle(fresh);
            fresh.resize(std::min(n, static_cast<std::size_t>(cfg.batch_size)));
            batch = fresh;
            continue;
          }
          mined.batch.validate(static_cast<int>(batch.size()));
          metric = metric_loss(cfg.objective, emb->value, mined.batch,
                               &boundary);
          if (cfg.triplet_dump) dump_triples(*cfg.triplet_dump, step, mined.batch);
        }

        std::vector<float> preds(pred->value.values.begin(),
                                 pred->value.values.end());
        TaskLossOutcome<float> task;
        if (model.head_cfg->task == TaskKind::classification) {
          task = cross_entropy(preds, batch_binary_labels(train, batch));
        } else {
          std::vector<double> targets = batch_mpcwp(train, batch);
          for (double& t : targets)
            t = (t - model.target_mean) / model.target_std;
          task = rmse_loss(preds, targets);
        }
        if (!std::isfinite(static_cast<double>(task.value)))
          throw TrainError("non-finite task loss at step " +
                           std::to_string(step));

        for (std::size_t i = 0; i < task.grad.size(); ++i)
          pred->grad.values[i] = task.grad[i];
        double metric_value = 0.0;
        if (metric_on && !metric.empty) {
          metric_value = static_cast<double>(metric.value);
          if (!std::isfinite(metric_value))
            throw TrainError("non-finite metric loss at step " +
                             std::to_string(step));
          for (std::size_t i = 0; i < metric.emb_grad.values.size(); ++i)
            emb->grad.values[i] +=
                static_cast<float>(alpha) * metric.emb_grad.values[i];
        }

        tape.run_backward();
        if (metric_on && !metric.empty &&
            cfg.objective.metric_loss == MetricLossKind::margin)
          boundary.apply_gradient(alpha * metric.beta_grad);
        optimizer_step(model, adam);
        model.zero_grads();

        task_sum += static_cast<double>(task.value);
        metric_sum += metric_value;
        break;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss_task = task_sum / static_cast<double>(batches.size());
    stats.loss_metric = metric_sum / static_cast<double>(batches.size());
    stats.val_metric = validation_metric(model, splits.valid, cfg.batch_size);
    stats.seconds = elapsed_seconds(t0);
    out.history.epochs.push_back(stats);

    if (improves(model.head_cfg->task, stats.val_metric, out.best_val_metric)) {
      out.best_val_metric = stats.val_metric;
      out.best_epoch = epoch;
      out.model = model;
    }
  }
  out.model.mode = Mode::eval;
  return out;
}

}  // namespace

void copy_parameters(const Model<float>& src, Model<float>& dst,
                     const std::string& prefix) {
  for (auto& p : dst.params) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    auto it = src.index.find(p.name);
    if (it == src.index.end())
      throw DimensionError("checkpoint is missing parameter '" + p.name + "'");
    const auto& s = src.params[it->second];
    if (s.value.shape != p.value.shape)
      throw DimensionError("shape mismatch for '" + p.name + "': checkpoint " +
                           s.value.shape_string() + " vs model " +
                           p.value.shape_string());
    p.value = s.value;
  }
}

TrainOutcome train_supervised_joint(const SplitResult& splits,
                                    const TrainConfig& cfg,
                                    const Model<float>* warm_start) {
  cfg.validate();
  check_task_coupling(cfg);
  if (cfg.objective.task_loss == TaskLossKind::none)
    throw ConfigError("supervised training requires a task loss");
  if (splits.train.records.empty())
    throw ConfigError("training split is empty");

  Model<float> model = init_model<float>(encoder_for_run(cfg), cfg.head,
                                         splits.train.records.front().leads);
  if (warm_start) {
    copy_parameters(*warm_start, model, "");
    model.step_count = warm_start->step_count;
    model.target_mean = warm_start->target_mean;
    model.target_std = warm_start->target_std;
  }
  if (cfg.freeze_encoder) model.set_trainable_prefix("encoder.", false);
  return supervised_loop(std::move(model), splits, cfg);
}

TrainOutcome pretrain_selfsup(const UnlabeledDataset& unlabeled,
                              const TrainConfig& cfg,
                              const Model<float>* warm_start) {
  cfg.validate();
  if (cfg.objective.task_loss != TaskLossKind::none)
    throw ConfigError("pretraining is metric-only; set task_loss to none");
  if (cfg.objective.metric_loss == MetricLossKind::none)
    throw ConfigError("pretraining requires a metric loss");
  if (cfg.miner.kind != MinerKind::distance_ranked)
    throw ConfigError("pretraining uses the distance_ranked miner");
  const std::size_t n = unlabeled.records.size();
  if (n < 3) throw ConfigError("pretraining needs at least 3 records");

  Model<float> model = init_model<float>(encoder_for_run(cfg), std::nullopt,
                                         unlabeled.records.front().leads);
  if (warm_start) {
    copy_parameters(*warm_start, model, "");
    model.step_count = warm_start->step_count;
  }
  const MinerSpec miner = miner_for_run(cfg);
  const AdamHyper adam{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  LearnableBoundary boundary{cfg.objective.margin_beta_init,
                             cfg.objective.margin_beta_lr};

  TrainOutcome out;
  int current_group = -1;
  std::vector<std::vector<int>> batches;
  std::vector<PairwiseDistanceMatrix> matrices;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const int group = (epoch - 1) / cfg.distance_reshuffle_epochs;
    if (group != current_group) {
      current_group = group;
      std::vector<int> order = identity_order(n);
      Rng(derive_seed(cfg.seed, "pretrain_shuffle",
                      static_cast<std::uint64_t>(group)))
          .shuffle(order);
      batches = chunk_batches(order, cfg.batch_size);
      if (batches.empty())
        throw ConfigError("no usable batches: pretraining set too small");

      matrices.clear();
      matrices.reserve(batches.size());
      for (std::size_t bi = 0; bi < batches.size(); ++bi) {
        const std::vector<SignalRecord> recs =
            gather_records(unlabeled.records, batches[bi]);
        std::filesystem::path prefix;
        if (cfg.distance_cache) {
          char name[48];
          std::snprintf(name, sizeof(name), "group%04d_batch%05d", group,
                        static_cast<int>(bi));
          prefix = *cfg.distance_cache / name;
        }
        if (cfg.distance_cache &&
            std::filesystem::exists(prefix.string() + ".bin")) {
          PairwiseDistanceMatrix m = load_matrix(prefix);
          for (std::size_t r = 0; r < recs.size(); ++r)
            if (m.record_ids.size() != recs.size() ||
                m.record_ids[r] != recs[r].record_id)
              throw DataError("stale distance cache at " + prefix.string() +
                              ": record ids do not match the batch");
          matrices.push_back(std::move(m));
        } else {
          PairwiseDistanceMatrix m = pairwise_matrix(
              std::span<const SignalRecord>(recs), cfg.miner.measure);
          quantize_matrix_f32(m);
          if (cfg.distance_cache) {
            std::filesystem::create_directories(*cfg.distance_cache);
            dump_matrix(m, prefix);
          }
          matrices.push_back(std::move(m));
        }
      }
    }

    double metric_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      model.mode = Mode::train;
      const std::int64_t step = model.step_count;
      const std::vector<SignalRecord> recs =
          gather_records(unlabeled.records, batches[bi]);
      Tape<float> tape;
      auto* x = tape.input(records_to_tensor<float>(
          std::span<const SignalRecord>(recs), model.input_leads));
      auto* emb = encoder_forward(tape, model, x);

      MiningResult mined = mine(miner, nullptr, nullptr, nullptr,
                                &matrices[bi], static_cast<std::uint64_t>(step));
      if (mined.starved || mined.batch.triples.empty())
        throw TrainError("distance-ranked mining yielded no triples at step " +
                         std::to_string(step));
      mined.batch.validate(static_cast<int>(recs.size()));
      if (cfg.triplet_dump) dump_triples(*cfg.triplet_dump, step, mined.batch);

      MetricLossOutcome<float> metric =
          metric_loss(cfg.objective, emb->value, mined.batch, &boundary);
      const double metric_value = static_cast<double>(metric.value);
      if (!std::isfinite(metric_value))
        throw TrainError("non-finite metric loss at step " +
                         std::to_string(step));
      for (std::size_t i = 0; i < metric.emb_grad.values.size(); ++i)
        emb->grad.values[i] += metric.emb_grad.values[i];

      tape.run_backward();
      if (!metric.empty && cfg.objective.metric_loss == MetricLossKind::margin)
        boundary.apply_gradient(metric.beta_grad);
      optimizer_step(model, adam);
      model.zero_grads();
      metric_sum += metric_value;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss_task = 0.0;
    stats.loss_metric = metric_sum / static_cast<double>(batches.size());
    stats.val_metric = stats.loss_metric;  // no labeled validation set
    stats.seconds = elapsed_seconds(t0);
    out.history.epochs.push_back(stats);
    out.best_val_metric = stats.val_metric;
    out.best_epoch = epoch;
  }
  model.mode = Mode::eval;
  out.model = std::move(model);
  return out;
}

TrainOutcome finetune(const Model<float>* pretrained, const SplitResult& splits,
                      const TrainConfig& cfg) {
  cfg.validate();
  check_task_coupling(cfg);
  if (cfg.objective.metric_loss != MetricLossKind::none)
    throw ConfigError("finetuning trains the task loss only; set metric_loss to none");
  if (splits.train.records.empty())
    throw ConfigError("training split is empty");

  Model<float> model = init_model<float>(encoder_for_run(cfg), cfg.head,
                                         splits.train.records.front().leads);
  if (pretrained) {
    if (pretrained->input_leads != model.input_leads)
      throw DimensionError("checkpoint expects " +
                           std::to_string(pretrained->input_leads) +
                           " leads, data has " +
                           std::to_string(model.input_leads));
    copy_parameters(*pretrained, model, "encoder.");
  }
  if (cfg.freeze_encoder) model.set_trainable_prefix("encoder.", false);
  return supervised_loop(std::move(model), splits, cfg);
}

SweepTable sweep_alpha(const std::vector<double>& grid,
                       const SplitResult& splits, const TrainConfig& base) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  SweepTable table;
  for (double alpha : grid) {
    SweepRow row;
    row.alpha = alpha;

    TrainConfig cls = base;
    cls.objective.alpha_scale = alpha;
    cls.head.task = TaskKind::classification;
    cls.objective.task_loss = TaskLossKind::cross_entropy;
    try {
      TrainOutcome out = train_supervised_joint(splits, cls);
      row.auc = out.best_val_metric;
      const std::vector<double> preds = predict_records(
          out.model, std::span<const SignalRecord>(splits.valid.records),
          cls.batch_size);
      std::vector<int> labels(splits.valid.labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = splits.valid.labels[i].elevated;
      row.apr = average_precision(preds, labels);
    } catch (const TrainError& e) {
      row.error = std::string("classification: ") + e.what();
    } catch (const UndefinedMetricError& e) {
      row.error = std::string("classification: ") + e.what();
    }

    TrainConfig reg = base;
    reg.objective.alpha_scale = alpha;
    reg.head.task = TaskKind::regression;
    reg.objective.task_loss = TaskLossKind::rmse;
    try {
      TrainOutcome out = train_supervised_joint(splits, reg);
      row.rmse = out.best_val_metric;
    } catch (const TrainError& e) {
      if (!row.error.empty()) row.error += "; ";
      row.error += std::string("regression: ") + e.what();
    } catch (const UndefinedMetricError& e) {
      if (!row.error.empty()) row.error += "; ";
      row.error += std::string("regression: ") + e.what();
    }
    table.rows.push_back(std::move(row));
  }

  int best_cls = -1, best_reg = -1;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const SweepRow& r = table.rows[i];
    if (r.auc && (best_cls < 0 || *r.auc > *table.rows[best_cls].auc))
      best_cls = static_cast<int>(i);
    if (r.rmse && (best_reg < 0 || *r.rmse < *table.rows[best_reg].rmse))
      best_reg = static_cast<int>(i);
  }
  if (best_cls >= 0) table.rows[best_cls].best_classification = true;
  if (best_reg >= 0) table.rows[best_reg].best_regression = true;
  return table;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_history_csv(const TrainHistory& history,
                       const std::filesystem::path& file) {
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write history: " + file.string());
  out << "epoch,loss_task,loss_metric,val_metric,seconds\n";
  for (const EpochStats& e : history.epochs)
    out << e.epoch << ',' << format_double(e.loss_task) << ','
        << format_double(e.loss_metric) << ',' << format_double(e.val_metric)
        << ',' << format_double(e.seconds) << '\n';
  if (!out) throw DataError("history write failed: " + file.string());
}

TrainHistory read_history_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open history: " + file.string());
  std::string line;
  if (!std::getline(in, line) ||
      line != "epoch,loss_task,loss_metric,val_metric,seconds")
    throw ParseError("bad history header in " + file.string());
  TrainHistory history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    EpochStats e;
    std::array<double, 4> vals{};
    if (!std::getline(row, cell, ',')) throw ParseError("bad history row");
    e.epoch = std::stoi(cell);
    for (double& v : vals) {
      if (!std::getline(row, cell, ','))
        throw ParseError("bad history row in " + file.string());
      v = std::strtod(cell.c_str(), nullptr);
    }
    e.loss_task = vals[0];
    e.loss_metric = vals[1];
    e.val_metric = vals[2];
    e.seconds = vals[3];
    history.epochs.push_back(e);
  }
  return history;
}

void write_sweep_csv(const SweepTable& table,
                     const std::filesystem::path& file) {
  if (file.has_parent_path())
    std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write sweep table: " + file.string());
  out << "alpha,auc,apr,rmse,best_classification,best_regression,error\n";
  for (const SweepRow& r : table.rows) {
    out << format_double(r.alpha) << ',';
    out << (r.auc ? format_double(*r.auc) : "") << ',';
    out << (r.apr ? format_double(*r.apr) : "") << ',';
    out << (r.rmse ? format_double(*r.rmse) : "") << ',';
    out << (r.best_classification ? 1 : 0) << ','
        << (r.best_regression ? 1 : 0) << ',';
    out << csv_escape(r.error) << '\n';
  }
  if (!out) throw DataError("sweep write failed: " + file.string());
}

}  // namespace sigmetric
