#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msinet/data.hpp"
#include "msinet/errors.hpp"
#include "msinet/kernels.hpp"
#include "msinet/metrics.hpp"
#include "msinet/models.hpp"
#include "msinet/train.hpp"

namespace fs = std::filesystem;
using namespace msinet;

namespace {

void load_config_file(const std::string& path, TrainConfig& cfg) {
  std::ifstream is(path);
  if (!is) {
    throw ValueError("config file not found: " + path);
  }
  std::string line;
  int64_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValueError("config line " + std::to_string(row) +
                       " is not key=value: '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (!cfg.apply_kv(key, value)) {
      throw ValueError("unknown config key '" + key + "' on line " +
                       std::to_string(row));
    }
  }
}

std::vector<double> parse_rates(const std::string& csv) {
  std::vector<double> out;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string out_csv = "train_log.csv";
  std::string ckpt = "model.ckpt";
  std::string arch;
  double width_mult = 1.0;
  int64_t input_hw = 224;
  std::string fc_dropout;
  TrainConfig cfg;
};

int run_train(const TrainArgs& args, const CLI::App* sub) {
  TrainConfig cfg;
  if (!args.config.empty()) load_config_file(args.config, cfg);
  // command-line flags override file values
  if (sub->count("--seed")) cfg.seed = args.cfg.seed;
  if (sub->count("--epochs")) cfg.epochs = args.cfg.epochs;
  if (sub->count("--batch")) cfg.batch_size = args.cfg.batch_size;
  if (sub->count("--lr")) cfg.learning_rate = args.cfg.learning_rate;
  if (sub->count("--threads")) cfg.thread_count = args.cfg.thread_count;
  cfg.validate();

  if (!is_known_arch(args.arch)) {
    throw ValueError("unknown architecture '" + args.arch + "'");
  }
  const fs::path manifest_csv = fs::path(args.data_dir) / "manifest.csv";
  if (!fs::exists(manifest_csv)) {
    throw ValueError("no manifest at " + manifest_csv.string());
  }

  kernels::set_thread_count(cfg.thread_count);

  const Manifest manifest = load_manifest(manifest_csv);
  const auto splits = split_train_val_test(manifest, cfg.seed);
  const Dataset train_set = materialize(splits[0], args.input_hw);
  const Dataset val_set = materialize(splits[1], args.input_hw);
  std::cerr << "train=" << train_set.size() << " val=" << val_set.size()
            << " test=" << splits[2].entries.size() << "\n";

  BuiltModel built =
      build_model(args.arch, args.width_mult, args.input_hw, cfg.seed,
                  args.fc_dropout.empty() ? std::vector<double>{}
                                          : parse_rates(args.fc_dropout));
  AdamState state = AdamState::init_like(built.model.parameters());

  auto log_epoch = [](const EpochRecord& r, Model&) {
    std::fprintf(stderr, "epoch %lld train_loss %.6f val_loss %.6f\n",
                 static_cast<long long>(r.epoch), r.train_loss, r.val_loss);
    return true;
  };
  fit(built.model, train_set, val_set, cfg, &state, args.out_csv, log_epoch);

  save_checkpoint(built.model, &state, cfg, args.ckpt);
  std::cerr << "wrote " << args.out_csv << " and " << args.ckpt << "\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt;
  std::string data_dir;
  std::string split = "val";
  std::string report;
  int64_t batch = 0;  // 0 = use checkpoint batch size
};

int run_eval(const EvalArgs& args) {
  LoadedCheckpoint loaded = load_checkpoint(args.ckpt);
  Model& model = loaded.built.model;
  const ArchDescriptor& desc = loaded.built.descriptor;
  kernels::set_thread_count(loaded.cfg.thread_count);

  const fs::path manifest_csv = fs::path(args.data_dir) / "manifest.csv";
  if (!fs::exists(manifest_csv)) {
    throw ValueError("no manifest at " + manifest_csv.string());
  }
  const Manifest manifest = load_manifest(manifest_csv);

  Manifest chosen;
  if (args.split == "all") {
    chosen = manifest;
  } else {
    const auto splits = split_train_val_test(manifest, loaded.cfg.seed);
    if (args.split == "train") chosen = splits[0];
    else if (args.split == "val") chosen = splits[1];
    else if (args.split == "test") chosen = splits[2];
    else throw ValueError("--split must be train, val, test or all");
  }
  if (chosen.entries.empty()) {
    throw ValueError("selected split is empty");
  }

  const Dataset data = materialize(chosen, desc.input_hw);
  const int64_t batch = args.batch > 0 ? args.batch : loaded.cfg.batch_size;
  const double loss = evaluate_loss(model, data, batch);
  const auto [pred, actual] = predict_dataset(model, data, batch);
  const ConfusionCounts counts = confusion_matrix(pred, actual);
  const double acc = accuracy(counts);
  const auto prf = f1_score(counts, 1);

  std::printf("split=%s\n", args.split.c_str());
  std::printf("n=%zu\n", data.size());
  std::printf("loss=%.9f\n", loss);
  std::printf("tp=%lld\nfp=%lld\nfn=%lld\ntn=%lld\n",
              static_cast<long long>(counts.tp),
              static_cast<long long>(counts.fp),
              static_cast<long long>(counts.fn),
              static_cast<long long>(counts.tn));
  std::printf("accuracy=%.4f\n", acc);
  std::printf("precision=%.4f\n", prf.precision);
  std::printf("recall=%.4f\n", prf.recall);
  std::printf("f1=%.4f\n", prf.f1);

  if (!args.report.empty()) {
    std::ofstream os(args.report, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write report: " + args.report);
    os << report_csv({{desc.name, counts}});
  }
  return 0;
}

struct GradcheckArgs {
  std::string arch;
  int64_t input_hw = 32;
  uint64_t seed = 0;
  double width_mult = 1.0;
  double tol = 1e-4;
  int64_t batch = 2;
};

int run_gradcheck(const GradcheckArgs& args) {
  if (!is_known_arch(args.arch)) {
    throw ValueError("unknown architecture '" + args.arch + "'");
  }
  BuiltModel built = build_model(args.arch, args.width_mult, args.input_hw,
                                 args.seed, {});
  Tensor input = create({args.batch, 3, args.input_hw, args.input_hw},
                        InitSpec::uniform(-1.0, 1.0, mix_seed(args.seed, 1)));
  LossSpec loss;
  loss.kind = LossSpec::Kind::Bce;
  loss.seed = mix_seed(args.seed, 2);

  const GradReport report = grad_check(built.model, input, loss, args.tol,
                                       Mode::Train, mix_seed(args.seed, 3));
  std::printf("%-40s %12s %8s\n", "parameter", "max_rel_err", "checked");
  for (const auto& e : report.entries) {
    std::printf("%-40s %12.3e %8lld%s\n", e.param.c_str(), e.max_rel_err,
                static_cast<long long>(e.checked), e.finite ? "" : "  NONFINITE");
  }
  std::printf("%s (tolerance %.1e, worst %.3e)\n",
              report.pass() ? "PASS" : "FAIL", report.tolerance,
              report.worst());
  if (!report.pass()) {
    throw NumericError("gradient check failed");
  }
  return 0;
}

struct SynthArgs {
  std::string out_dir;
  int64_t n_per_class = 200;
  int64_t input_hw = 64;
  uint64_t seed = 0;
};

int run_synth(const SynthArgs& args) {
  const Manifest manifest =
      generate_synthetic(args.n_per_class, args.input_hw, args.seed,
                         args.out_dir);
  const auto counts = manifest.class_counts();
  std::printf("wrote %zu images to %s (class0=%lld class1=%lld)\n",
              manifest.entries.size(), args.out_dir.c_str(),
              static_cast<long long>(counts[0]),
              static_cast<long long>(counts[1]));
  return 0;
}

struct ConfmatArgs {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  int positive = 1;
};

int run_confmat(const ConfmatArgs& args) {
  ConfusionCounts c{args.tp, args.fp, args.fn, args.tn};
  const double acc = accuracy(c);
  const auto prf = f1_score(c, args.positive);
  std::printf("accuracy=%.4f\n", acc);
  std::printf("precision=%.4f\n", prf.precision);
  std::printf("recall=%.4f\n", prf.recall);
  std::printf("f1=%.4f\n", prf.f1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MSI/MSS histology classifier toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", train_args.config, "key=value config file");
  train_cmd->add_option("--data", train_args.data_dir,
                        "directory containing manifest.csv")->required();
  train_cmd->add_option("--out", train_args.out_csv, "epoch CSV path");
  train_cmd->add_option("--ckpt", train_args.ckpt, "checkpoint output path");
  train_cmd->add_option("--arch", train_args.arch, "architecture name")
      ->required();
  train_cmd->add_option("--width-mult", train_args.width_mult);
  train_cmd->add_option("--input", train_args.input_hw, "input H=W");
  train_cmd->add_option("--seed", train_args.cfg.seed);
  train_cmd->add_option("--epochs", train_args.cfg.epochs);
  train_cmd->add_option("--batch", train_args.cfg.batch_size);
  train_cmd->add_option("--lr", train_args.cfg.learning_rate);
  train_cmd->add_option("--threads", train_args.cfg.thread_count);
  train_cmd->add_option("--fc-dropout", train_args.fc_dropout,
                        "comma list of FC head dropout rates");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", eval_args.ckpt)->required();
  eval_cmd->add_option("--data", eval_args.data_dir)->required();
  eval_cmd->add_option("--split", eval_args.split, "train|val|test|all");
  eval_cmd->add_option("--report", eval_args.report, "metrics CSV path");
  eval_cmd->add_option("--batch", eval_args.batch);

  GradcheckArgs gc_args;
  auto* gc_cmd = app.add_subcommand("gradcheck",
                                    "finite-difference gradient check");
  gc_cmd->add_option("--arch", gc_args.arch)->required();
  gc_cmd->add_option("--input", gc_args.input_hw);
  gc_cmd->add_option("--seed", gc_args.seed);
  gc_cmd->add_option("--width-mult", gc_args.width_mult);
  gc_cmd->add_option("--tol", gc_args.tol);
  gc_cmd->add_option("--batch", gc_args.batch);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic data");
  synth_cmd->add_option("--out", synth_args.out_dir)->required();
  synth_cmd->add_option("--n", synth_args.n_per_class, "images per class");
  synth_cmd->add_option("--input", synth_args.input_hw);
  synth_cmd->add_option("--seed", synth_args.seed);

  ConfmatArgs cm_args;
  auto* cm_cmd = app.add_subcommand(
      "confmat-metrics", "derive accuracy and F1 from raw counts");
  cm_cmd->add_option("--tp", cm_args.tp)->required();
  cm_cmd->add_option("--fp", cm_args.fp)->required();
  cm_cmd->add_option("--fn", cm_args.fn)->required();
  cm_cmd->add_option("--tn", cm_args.tn)->required();
  cm_cmd->add_option("--positive", cm_args.positive, "positive class (0|1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_args, train_cmd);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (gc_cmd->parsed()) return run_gradcheck(gc_args);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (cm_cmd->parsed()) return run_confmat(cm_args);
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
