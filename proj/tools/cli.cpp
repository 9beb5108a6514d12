#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "pclreid/checkpoint.hpp"
#include "pclreid/cluster.hpp"
#include "pclreid/config.hpp"
#include "pclreid/dataio.hpp"
#include "pclreid/errors.hpp"
#include "pclreid/metrics.hpp"
#include "pclreid/numerics.hpp"
#include "pclreid/train.hpp"

namespace pclreid::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kFlagKeys = {"fixed-bank", "freeze-layer1", "freeze-projection",
                                         "calibrate-bn", "camera-filtering"};

/// Config keys bound to one subcommand, plus the --config file option.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> help = {
      {"epochs", "training epochs (50)"},
      {"iters", "iterations per epoch (200)"},
      {"ids-per-batch", "identities per batch, P (16)"},
      {"instances-per-id", "samples per identity, K (4)"},
      {"lr", "base learning rate (3.5e-4)"},
      {"wd", "weight decay (5e-4)"},
      {"schedule", "step | warmup"},
      {"mu", "bank momentum (0.2)"},
      {"tau", "contrastive temperature (0.05)"},
      {"momentum-convention", "old: mu weights the old centroid | new: mu weights the feature"},
      {"bank-update", "sample | batch-mean"},
      {"fixed-bank", "never update the centroid bank"},
      {"loss", "comma list of pcl,id,tri[,name:weight] (pcl)"},
      {"label-smoothing", "ID loss smoothing (0.1)"},
      {"margin", "triplet margin (0.3)"},
      {"eps", "DBSCAN radius in cosine distance (0.5)"},
      {"min-samples", "DBSCAN core threshold (4)"},
      {"seed", "run seed (0)"},
      {"freeze-layer1", "true | false | auto (auto: off supervised, on unsupervised)"},
      {"freeze-projection", "keep the projection layer fixed"},
      {"calibrate-bn", "set BNNeck statistics from the training set before embedding it"},
      {"hidden-dim", "first layer width (64)"},
      {"proj-dim", "projection width (32)"},
      {"stage1-lr", "stage-1 learning rate (3.5e-4)"},
      {"stage1-tau", "stage-1 temperature (0.05)"},
      {"stage1-steps", "stage-1 steps, 0 = 120 * classes / P"},
      {"camera-filtering", "drop same-identity same-camera gallery entries"},
  };
  return help;
}

void add_config_flags(CLI::App& cmd, ConfigFlags& flags) {
  cmd.add_option("--config", flags.config_path, "key = value configuration file");
  for (const std::string& key : config_keys()) {
    std::string& slot = flags.values[key];
    const auto it = key_help().find(key);
    const std::string help = it == key_help().end() ? "configuration key" : it->second;
    CLI::Option* opt = kFlagKeys.count(key)
                           ? cmd.add_flag("--" + key + "{true}", slot, help + "; =false clears")
                           : cmd.add_option("--" + key, slot, help)->type_name("VALUE");
    flags.options.emplace_back(key, opt);
  }
}

/// Defaults, then the --config file, then explicit flags.
TrainConfig resolve_config(const ConfigFlags& flags) {
  TrainConfig cfg;
  if (!flags.config_path.empty()) cfg = parse_config_file(flags.config_path);
  for (const auto& [key, opt] : flags.options) {
    if (opt->count() > 0) set_config_value(cfg, key, flags.values.at(key));
  }
  cfg.validate();
  return cfg;
}

class EventLog {
 public:
  EventLog(std::ostream& err, std::string command, bool quiet)
      : err_(err), command_(std::move(command)), quiet_(quiet) {}

  void emit(const std::string& event, const std::vector<std::pair<std::string, std::string>>& kv) {
    if (quiet_) return;
    err_ << "pclreid " << command_ << ": event=" << event;
    for (const auto& [k, v] : kv) err_ << ' ' << k << '=' << v;
    err_ << '\n';
  }

  void epoch(const EpochMetrics& m) {
    std::vector<std::pair<std::string, std::string>> kv = {{"epoch", std::to_string(m.epoch)},
                                                           {"lr", num(m.lr, "%.6g")}};
    if (m.skipped) kv.emplace_back("skipped", "true");
    for (const auto& [name, value] : m.losses) kv.emplace_back("loss_" + name, num(value, "%.6f"));
    if (m.cluster_count) kv.emplace_back("clusters", std::to_string(*m.cluster_count));
    if (m.purity) kv.emplace_back("purity", num(*m.purity, "%.4f"));
    if (m.mAP) kv.emplace_back("mAP", num(*m.mAP, "%.4f"));
    if (m.rank1) kv.emplace_back("rank1", num(*m.rank1, "%.4f"));
    emit("epoch", kv);
  }

  static std::string num(double v, const char* fmt) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
  }

  static std::string quote(std::string_view text) {
    std::string q = "\"";
    for (char c : text) {
      if (c == '"' || c == '\\') q += '\\';
      q += (c == '\n') ? ' ' : c;
    }
    return q + "\"";
  }

 private:
  std::ostream& err_;
  std::string command_;
  bool quiet_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

LabeledDataset normalized(LabeledDataset d) {
  if (d.size() > 0) d.features = l2_normalize_rows(d.features).unit;
  return d;
}

/// Training inputs: explicit files, or the standard synthetic set for the seed.
struct TrainInputs {
  LabeledDataset train;
  std::optional<LabeledDataset> query;
  std::optional<LabeledDataset> gallery;
};

TrainInputs load_inputs(const std::string& features, const std::string& query,
                        const std::string& gallery, std::uint64_t seed, EventLog& log) {
  TrainInputs in;
  if (features.empty()) {
    const LabeledDataset all = gen_synthetic(SyntheticSpec::standard(seed));
    in.train = select_split(all, Split::train);
    in.query = select_split(all, Split::query);
    in.gallery = select_split(all, Split::gallery);
    log.emit("data", {{"source", "synthetic-standard"}, {"seed", std::to_string(seed)},
                      {"train", std::to_string(in.train.size())}});
  } else {
    in.train = read_features(features);
    log.emit("data", {{"source", EventLog::quote(features)},
                      {"rows", std::to_string(in.train.size())},
                      {"dim", std::to_string(in.train.dim())}});
  }
  if (!query.empty() || !gallery.empty()) {
    if (query.empty() || gallery.empty()) {
      throw UsageError("--query and --gallery must be given together");
    }
    in.query = read_features(query);
    in.gallery = read_features(gallery);
  }
  return in;
}

EvalSet as_eval_set(const LabeledDataset& d) {
  return {d.features, d.labels, d.has_cameras() ? d.cameras : std::vector<int>(d.size(), 0)};
}

EncoderHead load_head(const std::string& ckpt) { return load_checkpoint(ckpt).head; }

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double frobenius(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config:
      return kUsage;
    case ErrorKind::numeric:
      return kNumeric;
    case ErrorKind::shape:
    case ErrorKind::format:
    case ErrorKind::data:
    case ErrorKind::degenerate:
      return kData;
  }
  return kData;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::format: return "format";
    case ErrorKind::data: return "data";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::numeric: return "numeric";
  }
  return "error";
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototypical contrastive learning for re-identification on feature vectors"};
  app.name(argv.empty() ? "pclreid" : fs::path(argv[0]).filename().string());
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  bool quiet = false;
  std::string out_path, features, query, gallery, ckpt;

  // gen-data
  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic train/query/gallery split");
  std::string preset = "standard", precision = "f64";
  SyntheticSpec spec;
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--preset", preset, "standard or hard")->check(CLI::IsMember({"standard", "hard"}));
  std::optional<std::size_t> classes, per_class, dim, cameras;
  std::optional<double> sigma, sigma_cam, train_fraction, query_fraction;
  std::uint64_t camera_variant = 0;
  gen->add_option("--classes", classes, "identity count");
  gen->add_option("--samples-per-class", per_class, "samples per identity");
  gen->add_option("--dim", dim, "feature width");
  gen->add_option("--sigma", sigma, "intra-class noise");
  gen->add_option("--cameras", cameras, "camera count");
  gen->add_option("--sigma-cam", sigma_cam, "camera bias scale");
  gen->add_option("--train-fraction", train_fraction, "share of each identity used for training");
  gen->add_option("--query-fraction", query_fraction, "share of each identity used as queries");
  gen->add_option("--camera-variant", camera_variant, "re-draws only the camera biases");
  gen->add_option("--precision", precision, "f64 or f32 storage")->check(CLI::IsMember({"f64", "f32"}));
  gen->add_flag("--quiet", quiet, "suppress the event log");

  // train / train-unsup
  ConfigFlags train_flags, unsup_flags, stage1_flags, cluster_flags, eval_flags;
  CLI::App* train = app.add_subcommand("train", "Supervised training with the centroid bank");
  CLI::App* unsup = app.add_subcommand("train-unsup", "Clustering-based training without labels");
  for (auto [cmd, flags] : {std::pair{train, &train_flags}, std::pair{unsup, &unsup_flags}}) {
    cmd->add_option("--out", out_path, "output directory (model.pclc, metrics.tsv, config.txt)")
        ->required();
    cmd->add_option("--features", features,
                    "training features (PCLF); default: standard synthetic set for --seed");
    cmd->add_option("--query", query, "query features for per-epoch evaluation");
    cmd->add_option("--gallery", gallery, "gallery features for per-epoch evaluation");
    cmd->add_flag("--quiet", quiet, "suppress the event log");
    add_config_flags(*cmd, *flags);
  }

  // stage1
  CLI::App* stage1 = app.add_subcommand("stage1", "Learn one vector per identity against a frozen head");
  stage1->add_option("--out", out_path, "output directory (id_vectors.pclf, alignment.tsv)")->required();
  stage1->add_option("--features", features, "training features; default: standard synthetic set");
  stage1->add_option("--ckpt", ckpt, "frozen head; default: the initial head for --seed");
  stage1->add_flag("--quiet", quiet, "suppress the event log");
  add_config_flags(*stage1, stage1_flags);

  // eval
  CLI::App* eval = app.add_subcommand("eval", "mAP and CMC of query features against a gallery");
  bool json = false;
  eval->add_option("--query", query, "query features (PCLF)")->required();
  eval->add_option("--gallery", gallery, "gallery features (PCLF)")->required();
  eval->add_option("--ckpt", ckpt, "embed both sets with this head first");
  eval->add_flag("--json", json, "print the report as JSON");
  eval->add_flag("--quiet", quiet, "suppress the event log");
  add_config_flags(*eval, eval_flags);

  // cluster
  CLI::App* cluster = app.add_subcommand("cluster", "Cosine DBSCAN over a feature file");
  cluster->add_option("--features", features, "features (PCLF)")->required();
  cluster->add_option("--ckpt", ckpt, "embed with this head first");
  cluster->add_option("--out", out_path, "assignment file (index<TAB>cluster, -1 = noise)");
  cluster->add_flag("--quiet", quiet, "suppress the event log");
  add_config_flags(*cluster, cluster_flags);

  // inspect-ckpt
  CLI::App* inspect = app.add_subcommand("inspect-ckpt", "Summarize a checkpoint file");
  inspect->add_option("checkpoint,--ckpt", ckpt, "checkpoint path")->required();

  if (argv.size() > 1 && !argv[1].empty() && argv[1][0] != '-') {
    bool known = false;
    for (const CLI::App* sub : app.get_subcommands({})) known = known || sub->get_name() == argv[1];
    if (!known) {
      err << app.get_name() << ": unknown subcommand '" << argv[1] << "'\n\n" << app.help();
      return kUsage;
    }
  }

  try {
    std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << app.get_name() << ": " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  EventLog log(err, cmd->get_name(), quiet);
  try {
    if (cmd == gen) {
      SyntheticSpec s = preset == "hard" ? SyntheticSpec::hard(spec.seed)
                                         : SyntheticSpec::standard(spec.seed);
      if (classes) s.classes = *classes;
      if (per_class) s.samples_per_class = *per_class;
      if (dim) s.dim = *dim;
      if (sigma) s.sigma = *sigma;
      if (cameras) s.cameras = *cameras;
      if (sigma_cam) s.sigma_cam = *sigma_cam;
      if (train_fraction) s.train_fraction = *train_fraction;
      if (query_fraction) s.query_fraction = *query_fraction;
      s.camera_variant = camera_variant;
      const LabeledDataset all = gen_synthetic(s);
      ensure_dir(out_path);
      const StoragePrecision p = precision == "f32" ? StoragePrecision::f32 : StoragePrecision::f64;
      for (auto [name, split] : {std::pair{"train", Split::train}, std::pair{"query", Split::query},
                                 std::pair{"gallery", Split::gallery}}) {
        const LabeledDataset part = select_split(all, split);
        const fs::path path = fs::path(out_path) / (std::string(name) + ".pclf");
        write_features(path, part, p);
        log.emit("wrote", {{"path", EventLog::quote(path.string())},
                           {"rows", std::to_string(part.size())}});
      }
      return kOk;
    }

    if (cmd == train || cmd == unsup) {
      const bool supervised = cmd == train;
      const TrainConfig cfg = resolve_config(supervised ? train_flags : unsup_flags);
      TrainInputs in = load_inputs(features, query, gallery, cfg.seed, log);
      TrainOptions opt;
      opt.eval_query = in.query;
      opt.eval_gallery = in.gallery;
      opt.on_epoch = [&](const EpochMetrics& m) { log.epoch(m); };
      opt.log = [&](std::string_view line) { log.emit("note", {{"message", EventLog::quote(line)}}); };
      log.emit("start", {{"epochs", std::to_string(cfg.epochs)},
                         {"iters", std::to_string(cfg.iters_per_epoch)},
                         {"loss", format_loss_weights(cfg.losses)},
                         {"seed", std::to_string(cfg.seed)}});
      const TrainResult result =
          supervised ? train_supervised(in.train, cfg, opt) : train_unsupervised(in.train, cfg, opt);
      ensure_dir(out_path);
      const fs::path dir(out_path);
      save_checkpoint(dir / "model.pclc", result.checkpoint());
      write_text(dir / "metrics.tsv", format_metrics_log(result.log));
      write_text(dir / "config.txt", serialize_config(cfg));
      if (!supervised && result.last_clusters) {
        write_assignment(dir / "clusters.tsv", *result.last_clusters);
      }
      log.emit("done", {{"out", EventLog::quote(dir.string())}});
      if (!result.log.empty() && result.log.back().mAP) {
        out << "mAP\t" << EventLog::num(*result.log.back().mAP, "%.4f") << "\nRank-1\t"
            << EventLog::num(*result.log.back().rank1, "%.4f") << "\n";
      }
      return kOk;
    }

    if (cmd == stage1) {
      const TrainConfig cfg = resolve_config(stage1_flags);
      TrainInputs in = load_inputs(features, "", "", cfg.seed, log);
      const EncoderHead head = ckpt.empty() ? initial_head(in.train.features, cfg) : load_head(ckpt);
      const IdVectorTable table = learn_centroids_stage1(in.train, head, cfg);
      const Alignment al =
          centroid_alignment(table.vectors, encoder_embed(head, in.train.features), in.train.labels);
      ensure_dir(out_path);
      const fs::path dir(out_path);
      LabeledDataset vectors;
      vectors.features = table.vectors;
      for (std::size_t c = 0; c < table.vectors.rows(); ++c) vectors.labels.push_back(static_cast<int>(c));
      write_features(dir / "id_vectors.pclf", vectors);
      std::string tsv = "# class\talignment\n";
      for (std::size_t c = 0; c < al.per_class.size(); ++c) {
        tsv += std::to_string(c) + "\t" + EventLog::num(al.per_class[c], "%.6f") + "\n";
      }
      write_text(dir / "alignment.tsv", tsv);
      std::string trace = "# step\tloss\n";
      for (std::size_t i = 0; i < table.loss_trace.size(); ++i) {
        trace += std::to_string(i) + "\t" + EventLog::num(table.loss_trace[i], "%.6f") + "\n";
      }
      write_text(dir / "stage1_loss.tsv", trace);
      log.emit("done", {{"steps", std::to_string(table.loss_trace.size())},
                        {"alignment", EventLog::num(al.mean, "%.4f")}});
      out << "alignment\t" << EventLog::num(al.mean, "%.4f") << "\n";
      return kOk;
    }

    if (cmd == eval) {
      const TrainConfig cfg = resolve_config(eval_flags);
      const LabeledDataset q = read_features(query);
      const LabeledDataset g = read_features(gallery);
      if (!q.has_labels() || !g.has_labels()) throw DataError("eval needs identity labels in both files");
      const bool filtering = cfg.camera_filtering && q.has_cameras() && g.has_cameras();
      if (cfg.camera_filtering && !filtering) {
        log.emit("note", {{"message", "\"camera ids missing; camera filtering disabled\""}});
      }
      EvalReport report;
      if (ckpt.empty()) {
        report = evaluate(as_eval_set(normalized(q)), as_eval_set(normalized(g)), filtering);
      } else {
        report = evaluate_head(load_head(ckpt), q, g, filtering);
      }
      out << (json ? format_report_json(report) + "\n" : format_report_tsv(report));
      log.emit("done", {{"mAP", EventLog::num(report.mAP, "%.4f")},
                        {"excluded", std::to_string(report.excluded_queries)}});
      return kOk;
    }

    if (cmd == cluster) {
      const TrainConfig cfg = resolve_config(cluster_flags);
      const LabeledDataset data = read_features(features);
      const Matrix f = ckpt.empty() ? normalized(data).features
                                    : encoder_embed(load_head(ckpt), data.features);
      const ClusterAssignment a = cosine_dbscan(f, cfg.eps, cfg.min_samples);
      if (!out_path.empty()) write_assignment(out_path, a);
      out << "clusters\t" << a.cluster_count << "\nnoise\t" << a.noise_count() << "\n";
      if (data.has_labels()) {
        const Purity p = cluster_purity(a, data.labels);
        out << "purity\t" << EventLog::num(p.value, "%.4f") << "\n";
        if (p.all_noise) log.emit("warning", {{"message", "\"every sample is noise\""}});
      }
      log.emit("done", {{"clusters", std::to_string(a.cluster_count)},
                        {"eps", EventLog::num(cfg.eps, "%g")}});
      return kOk;
    }

    if (cmd == inspect) {
      const Checkpoint c = load_checkpoint(ckpt);
      const EncoderDims d = c.head.dims();
      out << "format\tPCLC v" << kCheckpointVersion << "\n"
          << "input_dim\t" << d.input << "\nhidden_dim\t" << d.hidden << "\nprojection_dim\t"
          << d.projection << "\noutput_dim\t" << d.output() << "\nepoch\t" << c.epoch << "\n"
          << "rng_state\t" << hex64(c.rng[0]) << hex64(c.rng[1]) << hex64(c.rng[2])
          << hex64(c.rng[3]) << "\n"
          << "layer1_weight_norm\t" << EventLog::num(frobenius(c.head.layer1().weight.values()), "%.6f")
          << "\nlayer2_weight_norm\t"
          << EventLog::num(frobenius(c.head.layer2().weight.values()), "%.6f") << "\n";
      if (c.bank) {
        out << "bank\t" << c.bank->class_count() << " x " << c.bank->dim() << " (mu "
            << EventLog::num(c.bank->momentum(), "%g") << ", tau "
            << EventLog::num(c.bank->temperature(), "%g") << ", "
            << to_string(c.bank->convention()) << ")\n";
      } else {
        out << "bank\tnone\n";
      }
      if (c.classifier) {
        out << "classifier\t" << c.classifier->rows() << " x " << c.classifier->cols() << "\n";
      } else {
        out << "classifier\tnone\n";
      }
      return kOk;
    }
  } catch (const Error& e) {
    log.emit("error", {{"kind", kind_name(e.kind())}, {"message", EventLog::quote(e.what())}});
    err << app.get_name() << " " << cmd->get_name() << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << app.get_name() << " " << cmd->get_name() << ": " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace pclreid::cli
