#include "sigmetric/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "sigmetric/dataset_io.hpp"
#include "sigmetric/evaluate.hpp"
#include "sigmetric/model_io.hpp"
#include "sigmetric/serde.hpp"
#include "sigmetric/train.hpp"

namespace sigmetric {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kUsage = R"(usage: sigmetric <command> [options]

commands:
  generate   synthesize a cohort and export it (--out required)
  train      supervised joint training on a labeled dataset
  pretrain   self-supervised distance-ranked pretraining on unlabeled data
  finetune   task-only training from a pretrained encoder (or --no-pretrain)
  evaluate   metric report for a checkpoint on a labeled dataset
  sweep      alpha grid sweep (classification and regression per cell)

common options:
  --config PATH            JSON run configuration (layered over defaults)
  --data PATH              dataset directory (or its parent from `generate`)
  --out PATH               output directory
  --checkpoint PATH        model checkpoint (finetune input, evaluate input)
  --init-checkpoint PATH   warm-start parameters for train/pretrain
  --exclude-patients-from PATH
                           labeled dataset whose patients are dropped before
                           pretraining
  --distance-cache PATH    pretraining distance-matrix cache directory
  --grid A,B,C             sweep alpha grid
  --no-pretrain            finetune from random initialization
  --frozen-encoder         finetune the head only
  --subgroups              evaluate with subgroup breakdowns and gaps
  --KEY VALUE              config override; KEY is a dotted path into the run
                           configuration (e.g. --train.lr 0.001) or one of the
                           aliases: alpha, seed, epochs, lr, batch-size, miner,
                           metric-loss, task, threshold, replicates
)";

struct CliArgs {
  std::string command;
  std::optional<fs::path> config, data, out, checkpoint, init_checkpoint;
  std::optional<fs::path> exclude_from, distance_cache;
  std::optional<std::string> grid;
  bool no_pretrain = false;
  bool subgroups = false;
  bool frozen_encoder = false;
  bool help = false;
  std::vector<std::pair<std::string, std::string>> overrides;
};

CliArgs parse_args(const std::vector<std::string>& args) {
  CliArgs out;
  std::size_t i = 0;
  if (i < args.size() && args[i].rfind("--", 0) != 0) out.command = args[i++];
  for (; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0)
      throw ConfigError("unexpected positional argument '" + a + "'");
    const std::string key = a.substr(2);
    if (key == "help") {
      out.help = true;
      continue;
    }
    if (key == "no-pretrain") {
      out.no_pretrain = true;
      continue;
    }
    if (key == "subgroups") {
      out.subgroups = true;
      continue;
    }
    if (key == "frozen-encoder") {
      out.frozen_encoder = true;
      continue;
    }
    if (i + 1 >= args.size())
      throw ConfigError("flag --" + key + " needs a value");
    const std::string value = args[++i];
    if (key == "config")
      out.config = value;
    else if (key == "data")
      out.data = value;
    else if (key == "out")
      out.out = value;
    else if (key == "checkpoint")
      out.checkpoint = value;
    else if (key == "init-checkpoint")
      out.init_checkpoint = value;
    else if (key == "exclude-patients-from")
      out.exclude_from = value;
    else if (key == "distance-cache")
      out.distance_cache = value;
    else if (key == "grid")
      out.grid = value;
    else
      out.overrides.emplace_back(key, value);
  }
  return out;
}

// Expands alias keys to dotted config paths; --task also keeps the objective
// coupled to the head.
void apply_cli_override(RunConfig& cfg, const std::string& command,
                        const std::string& key, const std::string& value) {
  if (key == "task") {
    apply_override(cfg, "train.head.task", value);
    if (value == "classification")
      apply_override(cfg, "train.objective.task_loss", "cross_entropy");
    else if (value == "regression")
      apply_override(cfg, "train.objective.task_loss", "rmse");
    else
      throw ConfigError("unknown task '" + value + "'");
    return;
  }
  std::string dotted = key;
  if (key == "alpha")
    dotted = "train.objective.alpha_scale";
  else if (key == "epochs")
    dotted = "train.epochs";
  else if (key == "lr")
    dotted = "train.lr";
  else if (key == "batch-size" || key == "batch_size")
    dotted = "train.batch_size";
  else if (key == "miner")
    dotted = "train.miner.kind";
  else if (key == "metric-loss" || key == "metric_loss")
    dotted = "train.objective.metric_loss";
  else if (key == "threshold")
    dotted = "evaluate.threshold_mmhg";
  else if (key == "replicates")
    dotted = "evaluate.bootstrap_replicates";
  else if (key == "seed")
    dotted = command == "generate"
                 ? "cohort.seed"
                 : (command == "evaluate" ? "evaluate.seed" : "train.seed");
  apply_override(cfg, dotted, value);
}

RunConfig build_config(const CliArgs& args) {
  RunConfig cfg;
  if (args.config) load_config_file(*args.config, cfg);
  for (const auto& [key, value] : args.overrides)
    apply_cli_override(cfg, args.command, key, value);
  if (args.subgroups) cfg.evaluate.subgroups = true;
  if (args.frozen_encoder) cfg.train.freeze_encoder = true;
  if (args.distance_cache) cfg.train.distance_cache = *args.distance_cache;
  return cfg;
}

fs::path require_out(const CliArgs& args) {
  if (!args.out) throw ConfigError(args.command + " requires --out");
  fs::create_directories(*args.out);
  return *args.out;
}

fs::path resolve_dataset_dir(const fs::path& dir, const char* preferred) {
  if (fs::exists(dir / "manifest.json")) return dir;
  if (fs::exists(dir / preferred / "manifest.json")) return dir / preferred;
  throw DataError("no dataset manifest under " + dir.string());
}

DatasetBundle import_from(const CliArgs& args, const char* preferred) {
  if (!args.data) throw ConfigError(args.command + " requires --data");
  return import_dataset(resolve_dataset_dir(*args.data, preferred));
}

void write_run_json(const CliArgs& args, const RunConfig& cfg,
                    const fs::path& out_dir) {
  auto path_or_null = [](const std::optional<fs::path>& p) {
    return p ? json(p->string()) : json(nullptr);
  };
  const json j = {{"command", args.command},
                  {"paths",
                   {{"config", path_or_null(args.config)},
                    {"data", path_or_null(args.data)},
                    {"out", path_or_null(args.out)},
                    {"checkpoint", path_or_null(args.checkpoint)},
                    {"init_checkpoint", path_or_null(args.init_checkpoint)},
                    {"exclude_patients_from", path_or_null(args.exclude_from)}}},
                  {"flags",
                   {{"no_pretrain", args.no_pretrain},
                    {"subgroups", args.subgroups},
                    {"frozen_encoder", args.frozen_encoder}}},
                  {"config", cfg}};
  std::ofstream out(out_dir / "run.json", std::ios::trunc);
  if (!out) throw DataError("cannot write run.json in " + out_dir.string());
  out << j.dump(2) << '\n';
}

json split_provenance(const RunConfig& cfg, const char* command,
                      std::uint64_t fingerprint) {
  return json{{"command", command},
              {"split", cfg.split},
              {"dataset_fingerprint", fingerprint},
              {"task", task_kind_to_string(cfg.train.head.task)},
              {"seed", cfg.train.seed}};
}

int cmd_generate(const CliArgs& args, RunConfig& cfg, std::ostream& out) {
  const fs::path out_dir = require_out(args);
  const SyntheticCohort cohort = generate_synthetic_cohort(cfg.cohort);
  export_dataset(cohort.labeled, out_dir / "labeled");
  if (!cohort.unlabeled.records.empty())
    export_dataset(cohort.unlabeled, out_dir / "unlabeled");
  write_run_json(args, cfg, out_dir);

  int elevated = 0, female = 0;
  for (const auto& l : cohort.labeled.labels) elevated += l.elevated;
  for (const auto& r : cohort.labeled.records)
    female += r.demographics.gender == Gender::female ? 1 : 0;
  const double n_labeled = static_cast<double>(cohort.labeled.records.size());
  out << "patients=" << cfg.cohort.n_patients
      << " labeled_records=" << cohort.labeled.records.size()
      << " unlabeled_records=" << cohort.unlabeled.records.size()
      << " prevalence=" << format_double(elevated / n_labeled)
      << " female_fraction=" << format_double(female / n_labeled)
      << " fingerprint=" << dataset_fingerprint(cohort.labeled.records)
      << "\n";
  return 0;
}

int cmd_train(const CliArgs& args, RunConfig& cfg, std::ostream& out) {
  const fs::path out_dir = require_out(args);
  const DatasetBundle bundle = import_from(args, "labeled");
  if (!bundle.fully_labeled())
    throw DataError("train requires a fully labeled dataset");
  const LabeledDataset data = bundle.to_labeled(cfg.evaluate.threshold_mmhg);
  const std::uint64_t fp = dataset_fingerprint(data.records);
  const SplitResult splits = split_by_patient(data, cfg.split);

  std::optional<LoadedCheckpoint> warm;
  if (args.init_checkpoint) warm = load_checkpoint(*args.init_checkpoint);
  const TrainOutcome result = train_supervised_joint(
      splits, cfg.train, warm ? &warm->model : nullptr);

  save_checkpoint(result.model, out_dir / "checkpoint.bin",
                  split_provenance(cfg, "train", fp));
  write_history_csv(result.history, out_dir / "history.csv");
  write_run_json(args, cfg, out_dir);
  out << "best_epoch=" << result.best_epoch
      << " best_val=" << format_double(result.best_val_metric) << "\n";
  return 0;
}

int cmd_pretrain(const CliArgs& args, RunConfig& cfg, std::ostream& out) {
  const fs::path out_dir = require_out(args);
  const DatasetBundle bundle = import_from(args, "unlabeled");
  UnlabeledDataset data = bundle.to_unlabeled();
  if (args.exclude_from) {
    const DatasetBundle held =
        import_dataset(resolve_dataset_dir(*args.exclude_from, "labeled"));
    data = remove_patient_overlap(data, held.to_labeled());
  }
  const std::uint64_t fp = dataset_fingerprint(data.records);

  std::optional<LoadedCheckpoint> warm;
  if (args.init_checkpoint) warm = load_checkpoint(*args.init_checkpoint);
  const TrainOutcome result =
      pretrain_selfsup(data, cfg.train, warm ? &warm->model : nullptr);

  save_checkpoint(result.model, out_dir / "checkpoint.bin",
                  json{{"command", "pretrain"},
                       {"dataset_fingerprint", fp},
                       {"seed", cfg.train.seed}});
  write_history_csv(result.history, out_dir / "history.csv");
  write_run_json(args, cfg, out_dir);
  out << "epochs=" << result.history.epochs.size() << " final_metric_loss="
      << format_double(result.history.epochs.back().loss_metric) << "\n";
  return 0;
}

int cmd_finetune(const CliArgs& args, RunConfig& cfg, std::ostream& out) {
  const fs::path out_dir = require_out(args);
  if (args.checkpoint && args.no_pretrain)
    throw ConfigError("pass either --checkpoint or --no-pretrain, not both");
  if (!args.checkpoint && !args.no_pretrain)
    throw ConfigError("finetune needs --checkpoint (or --no-pretrain)");

  const DatasetBundle bundle = import_from(args, "labeled");
  if (!bundle.fully_labeled())
    throw DataError("finetune requires a fully labeled dataset");
  const LabeledDataset data = bundle.to_labeled(cfg.evaluate.threshold_mmhg);
  const std::uint64_t fp = dataset_fingerprint(data.records);
  const SplitResult splits = split_by_patient(data, cfg.split);

  std::optional<LoadedCheckpoint> pretrained;
  if (args.checkpoint) pretrained = load_checkpoint(*args.checkpoint);
  const TrainOutcome result =
      finetune(pretrained ? &pretrained->model : nullptr, splits, cfg.train);

  json prov = split_provenance(cfg, "finetune", fp);
  prov["pretrained"] =
      args.checkpoint ? json(args.checkpoint->string()) : json(nullptr);
  save_checkpoint(result.model, out_dir / "checkpoint.bin", prov);
  write_history_csv(result.history, out_dir / "history.csv");
  write_run_json(args, cfg, out_dir);
  out << "best_epoch=" << result.best_epoch
      << " best_val=" << format_double(result.best_val_metric) << "\n";
  return 0;
}

int cmd_evaluate(const CliArgs& args, RunConfig& cfg, std::ostream& out) {
  const fs::path out_dir = require_out(args);
  if (!args.checkpoint) throw ConfigError("evaluate requires --checkpoint");
  LoadedCheckpoint loaded = load_checkpoint(*args.checkpoint);

  const DatasetBundle bundle = import_from(args, "labeled");
  if (!bundle.fully_labeled())
    throw DataError("evaluate requires a fully labeled dataset");
  const LabeledDataset data = bundle.to_labeled(cfg.evaluate.threshold_mmhg);

  // When the data is the training dataset (fingerprint match), re-derive the
  // recorded patient split and evaluate on its held-out test part; otherwise
  // treat the whole dataset as an external test set.
  LabeledDataset eval_set = data;
  std::string split_note = "external (full dataset)";
  const json& prov = loaded.provenance;
  if (prov.is_object() && prov.contains("split") &&
      prov.contains("dataset_fingerprint") &&
      prov.at("dataset_fingerprint").get<std::uint64_t>() ==
          dataset_fingerprint(data.records)) {
    const SplitSpec spec = prov.at("split").get<SplitSpec>();
    eval_set = split_by_patient(data, spec).test;
    split_note = "held-out test split";
  }

  const EvaluationReport report =
      evaluate_model(loaded.model, eval_set, cfg.evaluate);
  write_report_json(report, out_dir / "report.json");
  write_report_csv(report, out_dir / "report.csv");
  write_run_json(args, cfg, out_dir);

  out << "evaluated " << report.n_records << " records (" << split_note
      << ")\n";
  for (const MetricBlock& b : report.metrics)
    out << b.metric << "=" << format_double(b.estimate)
        << " boot_mean=" << format_double(b.boot_mean)
        << " boot_std=" << format_double(b.boot_std) << "\n";
  for (const auto& [key, value] : report.knn_same_gender)
    out << "knn_same_gender_" << key << "(" << report.knn_target_group
        << ")=" << format_double(value) << "\n";
  for (const std::string& w : report.warnings) out << "warning: " << w << "\n";
  return 0;
}

int cmd_sweep(const CliArgs& args, RunConfig& cfg, std::ostream& out) {
  const fs::path out_dir = require_out(args);
  const DatasetBundle bundle = import_from(args, "labeled");
  if (!bundle.fully_labeled())
    throw DataError("sweep requires a fully labeled dataset");
  const LabeledDataset data = bundle.to_labeled(cfg.evaluate.threshold_mmhg);
  const SplitResult splits = split_by_patient(data, cfg.split);

  std::vector<double> grid = cfg.sweep_grid;
  if (args.grid) {
    grid.clear();
    std::istringstream ss(*args.grid);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        grid.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("bad --grid entry '" + cell + "'");
      }
    }
    cfg.sweep_grid = grid;
  }

  const SweepTable table = sweep_alpha(grid, splits, cfg.train);
  write_sweep_csv(table, out_dir / "sweep.csv");
  write_run_json(args, cfg, out_dir);

  out << "alpha,auc,apr,rmse,best_classification,best_regression,error\n";
  for (const SweepRow& r : table.rows)
    out << format_double(r.alpha) << ','
        << (r.auc ? format_double(*r.auc) : "") << ','
        << (r.apr ? format_double(*r.apr) : "") << ','
        << (r.rmse ? format_double(*r.rmse) : "") << ','
        << (r.best_classification ? 1 : 0) << ','
        << (r.best_regression ? 1 : 0) << ',' << r.error << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  try {
    const CliArgs cli = parse_args(args);
    if (cli.help || cli.command.empty()) {
      (cli.help ? out : err) << kUsage;
      return cli.help ? 0 : 2;
    }
    RunConfig cfg = build_config(cli);
    if (cli.command == "generate") return cmd_generate(cli, cfg, out);
    if (cli.command == "train") return cmd_train(cli, cfg, out);
    if (cli.command == "pretrain") return cmd_pretrain(cli, cfg, out);
    if (cli.command == "finetune") return cmd_finetune(cli, cfg, out);
    if (cli.command == "evaluate") return cmd_evaluate(cli, cfg, out);
    if (cli.command == "sweep") return cmd_sweep(cli, cfg, out);
    throw ConfigError("unknown command '" + cli.command + "'");
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const TrainError& e) {
    err << "training error: " << e.what() << "\n";
    return 4;
  } catch (const UndefinedMetricError& e) {
    err << "undefined metric: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sigmetric
