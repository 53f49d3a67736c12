#include "slip/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "slip/error.hpp"
#include "slip/evaluation.hpp"
#include "slip/io.hpp"
#include "slip/report.hpp"
#include "slip/synth.hpp"
#include "slip/trainer.hpp"

namespace slip::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct EncoderFlags {
  std::uint64_t seed = 42;
  std::size_t token_dim = 16;
  std::size_t hash_buckets = 4096;

  void add_to(CLI::App& app) {
    app.add_option("--encoder-seed", seed, "Seed of the frozen text encoder weights");
    app.add_option("--token-dim", token_dim, "Token embedding width of the text encoder");
    app.add_option("--hash-buckets", hash_buckets, "Tokenizer hash buckets");
  }
  EncoderConfig config(std::size_t embed_dim) const { return {hash_buckets, token_dim, embed_dim, seed}; }
};

std::size_t default_threads() {
  if (const char* env = std::getenv("SLIP_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::optional<std::size_t> parse_shots(const std::string& text) {
  if (text == "all") return std::nullopt;
  try {
    std::size_t used = 0;
    const long v = std::stol(text, &used);
    if (used == text.size() && v > 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidArgument, "--shots must be a positive count or 'all', got '" + text + "'");
}

Dataset load_dataset(const std::string& path) {
  Dataset ds = read_dataset(path);
  normalize_patches(ds);
  return ds;
}

std::vector<std::string> load_class_names(const std::string& path, const Dataset& ds) {
  auto names = read_tissue_prompts(path);
  if (names.size() != ds.num_classes) {
    throw Error(ErrorKind::DimensionMismatch, path + " lists " + std::to_string(names.size()) +
                                                  " classes but the dataset has " + std::to_string(ds.num_classes));
  }
  return names;
}

fs::path sidecar(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  return fs::path(p.string() + suffix);
}

json spec_to_json(const SynthSpec& s) {
  return {{"classes", s.num_classes},       {"tissues", s.num_tissues},
          {"min_patches", s.min_patches},   {"max_patches", s.max_patches},
          {"bags_per_class", s.bags_per_class}, {"signal_fraction", s.signal_fraction},
          {"noise_sigma", s.noise_sigma},   {"dim", s.dim},
          {"seed", s.seed}};
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string preset;
  std::string spec_file;
  std::optional<std::uint64_t> seed;
  SynthSpec inline_spec;
  std::string out;
  std::string tissues_out;
  std::string classes_out;
  EncoderFlags encoder;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec;
  if (!a.preset.empty()) {
    auto preset = synth_preset(a.preset);
    if (!preset) throw Error(ErrorKind::InvalidArgument, "unknown preset '" + a.preset + "'");
    spec = *preset;
    if (a.seed) spec.seed = *a.seed;
  } else if (!a.spec_file.empty()) {
    json j;
    try {
      j = json::parse(read_text_file(a.spec_file));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaError, a.spec_file + ": " + e.what());
    }
    auto take = [&](const char* key, auto& dst) {
      if (j.contains(key)) dst = j.at(key).get<std::remove_reference_t<decltype(dst)>>();
    };
    spec = a.inline_spec;
    try {
      take("classes", spec.num_classes);
      take("tissues", spec.num_tissues);
      take("min_patches", spec.min_patches);
      take("max_patches", spec.max_patches);
      take("bags_per_class", spec.bags_per_class);
      take("signal_fraction", spec.signal_fraction);
      take("noise_sigma", spec.noise_sigma);
      take("dim", spec.dim);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaError, a.spec_file + ": " + e.what());
    }
    if (a.seed) {
      spec.seed = *a.seed;
    } else if (j.contains("seed") && j.at("seed").is_number_unsigned()) {
      spec.seed = j.at("seed").get<std::uint64_t>();
    } else {
      throw Error(ErrorKind::InvalidArgument,
                  "an explicit seed is required (--seed or a \"seed\" field in the --spec file)");
    }
  } else {
    if (!a.seed) throw Error(ErrorKind::InvalidArgument, "an explicit --seed is required (or use --preset)");
    spec = a.inline_spec;
    spec.seed = *a.seed;
  }

  const FrozenEncoderWeights weights(a.encoder.config(spec.dim));
  const SyntheticWorld world = generate(spec, weights);
  Dataset ds{spec.num_classes, spec.dim, world.bags};
  write_dataset(ds, a.out);

  const fs::path tissues_out = a.tissues_out.empty() ? sidecar(a.out, ".tissues.txt") : fs::path(a.tissues_out);
  const fs::path classes_out = a.classes_out.empty() ? sidecar(a.out, ".classes.txt") : fs::path(a.classes_out);
  std::string tissue_text = "# synthetic tissue descriptions; the first " + std::to_string(spec.num_classes) +
                            " are class-informative\n";
  for (const auto& t : world.tissue_descriptions) tissue_text += t + "\n";
  write_text_file(tissues_out, tissue_text);
  std::string class_text;
  for (const auto& c : world.class_names) class_text += c + "\n";
  write_text_file(classes_out, class_text);

  out << "wrote " << a.out << ": C=" << spec.num_classes << " K=" << spec.num_tissues << " bags=" << ds.bags.size()
      << " d_v=" << spec.dim << "\n";
  out << "tissues: " << tissues_out.string() << "\nclasses: " << classes_out.string() << "\n";
  out << "spec: " << spec_to_json(spec).dump() << "\n";
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string tissues;
  std::string classes;
  std::string shots = "all";
  std::string pooling = "slip";
  double tau = 0.01;
  double lr = 2e-4;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t context_length = 4;
  bool per_class_context = false;
  std::size_t topk = 16;
  bool exclude_positive = false;
  std::string aggregation = "majority";
  bool prompted_tissue_relevance = false;
  std::size_t threads = 1;
  bool no_timestamp = false;
  EncoderFlags encoder;
};

std::unique_ptr<PooledPredictor> trained_predictor(const TrainConfig& cfg, const TissuePromptSet& tissues,
                                                   const std::vector<std::string>& class_names,
                                                   const FrozenEncoderWeights& weights, const PromptContext& context,
                                                   bool prompted_tissue_relevance) {
  SlidePooler pooler = make_pooler(cfg, tissues, class_names, weights);
  ClassPromptSet prompted = ClassPromptSet::encode(weights, class_names, context);
  if (prompted_tissue_relevance) pooler.set_tissue_relevance_from(prompted);
  return std::make_unique<PooledPredictor>(std::move(pooler), std::move(prompted));
}

void print_metrics(std::ostream& out, const char* title, const Metrics& m) {
  out << title << ": class-averaged accuracy " << m.class_averaged_accuracy << ", bag accuracy " << m.bag_accuracy
      << " (" << m.num_patients << " patients, " << m.num_bags << " bags)\n";
}

int run_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg;
  cfg.temperature = a.tau;
  cfg.learning_rate = a.lr;
  cfg.epochs = a.epochs;
  cfg.shots = parse_shots(a.shots);
  cfg.seed = a.seed;
  cfg.pooling = parse_pooling(a.pooling);
  cfg.context_length = a.context_length;
  cfg.per_class_context = a.per_class_context;
  cfg.topk = a.topk;
  cfg.exclude_positive = a.exclude_positive;
  cfg.validate();
  const EvalOptions eval_opts{parse_patient_aggregation(a.aggregation), a.threads};

  const Dataset ds = load_dataset(a.data);
  const auto class_names = load_class_names(a.classes, ds);
  const FrozenEncoderWeights weights(a.encoder.config(ds.dim));
  const TissuePromptSet tissues = TissuePromptSet::encode(weights, read_tissue_prompts(a.tissues));

  const FewShotSplit split = select_few_shot(ds.bags, ds.num_classes, cfg.shots);
  std::vector<WsiBag> train_set;
  for (std::size_t i : split.train) train_set.push_back(ds.bags[i]);
  TrainHistory history = train_prompts(train_set, tissues, class_names, weights, cfg);
  for (auto& step : history.steps) step.bag = split.train[step.bag];

  const auto predictor =
      trained_predictor(cfg, tissues, class_names, weights, history.final_context, a.prompted_tissue_relevance);

  RunReport report;
  report.config = cfg;
  report.encoder = weights.config();
  report.aggregation = eval_opts.aggregation;
  report.prompted_tissue_relevance = a.prompted_tissue_relevance;
  report.data_path = a.data;
  report.tissues_path = a.tissues;
  report.classes_path = a.classes;
  report.class_names = class_names;
  report.tissues = tissues.descriptions;
  report.train_bags = split.train;
  report.eval_bags = split.eval.empty() ? split.train : split.eval;
  report.eval_pool = split.eval.empty() ? "training" : "held_out";
  report.steps = history.steps;
  report.context = history.final_context;
  report.metrics = evaluate(ds.bags, report.eval_bags, *predictor, ds.num_classes, eval_opts);
  report.train_metrics = evaluate(ds.bags, split.train, *predictor, ds.num_classes, eval_opts);
  report.created_at = a.no_timestamp ? "" : utc_timestamp();
  write_report(report, a.out);

  out << "trained " << to_string(cfg.pooling) << " prompts on " << split.train.size() << " bags for " << cfg.epochs
      << " epochs (tau=" << cfg.temperature << ", lr=" << cfg.learning_rate << ")\n";
  if (!history.steps.empty()) out << "final loss " << history.steps.back().loss << "\n";
  print_metrics(out, "train", *report.train_metrics);
  print_metrics(out, report.eval_pool == "held_out" ? "held-out" : "training (no held-out bags)", report.metrics);
  out << "report: " << a.out << "\n";
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string report;
  bool zero_shot = false;
  std::string classes;
  std::string shots = "all";
  double tau = 0.01;
  std::string aggregation = "majority";
  std::size_t threads = 1;
  std::string out;
  EncoderFlags encoder;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  std::optional<RunReport> report;
  if (!a.report.empty()) report = read_report(a.report);

  if (a.zero_shot) {
    // Zero-shot ignores --shots: nothing is trained, every bag is scored.
    parse_shots(a.shots);
    if (a.data.empty() && !report) throw Error(ErrorKind::InvalidArgument, "--data is required");
    const Dataset ds = load_dataset(a.data.empty() ? report->data_path : a.data);
    std::vector<std::string> class_names;
    if (!a.classes.empty()) {
      class_names = load_class_names(a.classes, ds);
    } else if (report) {
      class_names = report->class_names;
    } else {
      throw Error(ErrorKind::InvalidArgument, "--classes is required for zero-shot evaluation");
    }
    EncoderConfig enc = report ? report->encoder : a.encoder.config(ds.dim);
    const FrozenEncoderWeights weights(enc);
    const double tau = report ? report->config.temperature : a.tau;
    const ZeroShotPredictor predictor(ClassPromptSet::encode(weights, class_names), tau);
    std::vector<std::size_t> all(ds.bags.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Metrics m = evaluate(ds.bags, all, predictor, ds.num_classes,
                               {parse_patient_aggregation(a.aggregation), a.threads});
    print_metrics(out, "zero-shot", m);
    if (!a.out.empty()) write_text_file(a.out, json{{"mode", "zero-shot"}, {"metrics", to_json(m)}}.dump(2) + "\n");
    return kExitOk;
  }

  if (!report) throw Error(ErrorKind::InvalidArgument, "--report-with-context is required unless --zero-shot");
  if (!report->context) throw Error(ErrorKind::SchemaError, a.report + " has no trained context");
  const Dataset ds = load_dataset(a.data.empty() ? report->data_path : a.data);
  if (report->class_names.size() != ds.num_classes) {
    throw Error(ErrorKind::DimensionMismatch, "report and dataset disagree on class count");
  }
  const FrozenEncoderWeights weights(report->encoder);
  const TissuePromptSet tissues = TissuePromptSet::encode(weights, report->tissues);
  const auto predictor = trained_predictor(report->config, tissues, report->class_names, weights, *report->context,
                                           report->prompted_tissue_relevance);
  const FewShotSplit split = select_few_shot(ds.bags, ds.num_classes, report->config.shots);
  const auto& indices = split.eval.empty() ? split.train : split.eval;
  const Metrics m = evaluate(ds.bags, indices, *predictor, ds.num_classes, {report->aggregation, a.threads});
  print_metrics(out, split.eval.empty() ? "training" : "held-out", m);
  const bool matches = m == report->metrics;
  out << "matches stored metrics: " << (matches ? "yes" : "no") << "\n";
  if (!a.out.empty()) {
    write_text_file(a.out, json{{"mode", "trained"}, {"matches_report", matches}, {"metrics", to_json(m)}}.dump(2) +
                               "\n");
  }
  return kExitOk;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string grid;
  std::string out;
  std::string table;
  std::size_t threads = 1;
};

int run_ablate(const AblateArgs& a, std::ostream& out) {
  json g;
  try {
    g = json::parse(read_text_file(a.grid));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SchemaError, a.grid + ": " + e.what());
  }
  const fs::path base = fs::path(a.grid).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  auto need = [&](const char* key) -> const json& {
    if (!g.contains(key)) throw Error(ErrorKind::SchemaError, std::string("grid is missing '") + key + "'");
    return g.at(key);
  };

  AblationGrid grid;
  EncoderFlags enc;
  try {
    const Dataset ds = load_dataset(resolve(need("data").get<std::string>()).string());
    const auto class_names = load_class_names(resolve(need("classes").get<std::string>()).string(), ds);
    for (const auto& v : need("variants")) grid.variants.push_back(parse_variant(v.get<std::string>()));
    for (const auto& s : need("shots")) {
      grid.shots.push_back(s.is_string() ? parse_shots(s.get<std::string>()) : parse_shots(std::to_string(s.get<long>())));
    }
    for (const auto& t : need("tissues")) {
      const fs::path p = resolve(t.get<std::string>());
      grid.tissue_sets.push_back({p.stem().string(), read_tissue_prompts(p)});
    }
    grid.seeds = need("seeds").get<std::vector<std::uint64_t>>();
    if (g.contains("config")) {
      const json& c = g.at("config");
      grid.base.temperature = c.value("tau", grid.base.temperature);
      grid.base.learning_rate = c.value("learning_rate", grid.base.learning_rate);
      grid.base.epochs = c.value("epochs", grid.base.epochs);
      grid.base.context_length = c.value("context_length", grid.base.context_length);
      grid.base.per_class_context = c.value("per_class_context", grid.base.per_class_context);
      grid.base.topk = c.value("topk", grid.base.topk);
      grid.base.exclude_positive = c.value("exclude_positive", grid.base.exclude_positive);
    }
    if (g.contains("encoder")) {
      const json& e = g.at("encoder");
      enc.seed = e.value("seed", enc.seed);
      enc.token_dim = e.value("token_dim", enc.token_dim);
      enc.hash_buckets = e.value("hash_buckets", enc.hash_buckets);
    }
    grid.eval.aggregation = parse_patient_aggregation(g.value("patient_aggregation", std::string("majority")));
    grid.eval.threads = a.threads;
    grid.base.validate();

    const FrozenEncoderWeights weights(enc.config(ds.dim));
    const auto rows = run_ablation(ds.bags, class_names, weights, grid);
    const std::string table = format_ablation_table(rows);
    out << table;
    if (!a.out.empty()) write_text_file(a.out, ablation_to_json(rows, grid).dump(2) + "\n");
    if (!a.table.empty()) write_text_file(a.table, table);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaError, a.grid + ": " + e.what());
  }
  return kExitOk;
}

// --- heatmap ---------------------------------------------------------------

struct HeatmapArgs {
  std::string data;
  std::size_t bag = 0;
  std::size_t class_index = 0;
  std::string out_prefix;
  std::string tissues;
  std::string classes;
  double tau = 0.01;
  EncoderFlags encoder;
};

int run_heatmap(const HeatmapArgs& a, std::ostream& out) {
  const Dataset ds = load_dataset(a.data);
  if (a.bag >= ds.bags.size()) {
    throw Error(ErrorKind::InvalidArgument, "bag index " + std::to_string(a.bag) + " >= " + std::to_string(ds.bags.size()));
  }
  if (a.class_index >= ds.num_classes) {
    throw Error(ErrorKind::ClassOutOfRange, "class " + std::to_string(a.class_index) + " >= " +
                                                std::to_string(ds.num_classes));
  }
  const auto class_names = load_class_names(a.classes, ds);
  const FrozenEncoderWeights weights(a.encoder.config(ds.dim));
  const TissuePromptSet tissues = TissuePromptSet::encode(weights, read_tissue_prompts(a.tissues));
  const ClassPromptSet classes = ClassPromptSet::encode(weights, class_names);
  const WsiBag& bag = ds.bags[a.bag];
  const Matrix corr = patch_slide_correlation(patch_tissue_similarity(bag, tissues, a.tau),
                                              tissue_wsi_similarity(classes, tissues, a.tau));
  const HeatmapExport hm = export_heatmap(bag, corr, a.class_index);
  write_heatmap(hm, a.out_prefix);
  out << "heatmap " << hm.width << "x" << hm.height << " for bag " << a.bag << " class '" << class_names[a.class_index]
      << "' -> " << a.out_prefix << ".{csv,pgm,extremes.json}\n";
  out << "top:";
  for (auto i : hm.top) out << ' ' << i;
  out << "\nbottom:";
  for (auto i : hm.bottom) out << ' ' << i;
  out << "\n";
  return kExitOk;
}

// Fills options that were not given on the command line from a flat INI file.
void apply_config_file(CLI::App& cmd, const std::string& path) {
  std::istringstream in(read_text_file(path));
  for (const auto& item : CLI::ConfigINI().from_config(in)) {
    const std::string key = item.fullname();
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") throw Error(ErrorKind::InvalidArgument, path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    for (const auto& value : item.inputs) opt->add_result(value);
    opt->run_callback();
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-similarity slide pooling and few-shot prompt learning on patch embeddings", "slip"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with planted tissue structure");
  synth_cmd->option_defaults()->always_capture_default();
  auto* preset_opt = synth_cmd->add_option("--preset", synth.preset, "Named preset (separable-easy, needle)");
  auto* spec_opt = synth_cmd->add_option("--spec", synth.spec_file, "JSON file with spec fields");
  preset_opt->excludes(spec_opt);
  synth_cmd->add_option("--seed", synth.seed, "Generator seed (required unless a preset supplies one)");
  synth_cmd->add_option("--classes-count", synth.inline_spec.num_classes, "Number of classes C");
  synth_cmd->add_option("--tissues-count", synth.inline_spec.num_tissues, "Number of tissue archetypes K");
  synth_cmd->add_option("--min-patches", synth.inline_spec.min_patches, "Minimum patches per bag");
  synth_cmd->add_option("--max-patches", synth.inline_spec.max_patches, "Maximum patches per bag");
  synth_cmd->add_option("--bags-per-class", synth.inline_spec.bags_per_class, "Bags per class");
  synth_cmd->add_option("--signal-fraction", synth.inline_spec.signal_fraction, "Fraction of class-informative patches");
  synth_cmd->add_option("--noise-sigma", synth.inline_spec.noise_sigma, "Per-coordinate Gaussian noise");
  synth_cmd->add_option("--dim", synth.inline_spec.dim, "Embedding dimension d_v");
  synth_cmd->add_option("--out", synth.out, "Output dataset container")->required();
  synth_cmd->add_option("--tissues-out", synth.tissues_out, "Tissue description file (default <out>.tissues.txt)");
  synth_cmd->add_option("--classes-out", synth.classes_out, "Class name file (default <out>.classes.txt)");
  synth.encoder.add_to(*synth_cmd);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Few-shot prompt training followed by held-out evaluation");
  train_cmd->option_defaults()->always_capture_default();
  std::string train_config;
  train_cmd->add_option("--config", train_config, "Flat key = value file mirroring these flags");
  train_cmd->add_option("--data", train.data, "Dataset container")->required();
  train_cmd->add_option("--tissues", train.tissues, "Tissue descriptions, one per line")->required();
  train_cmd->add_option("--classes", train.classes, "Class names, one per line")->required();
  train_cmd->add_option("--shots", train.shots, "Training bags per class, or 'all'");
  train_cmd->add_option("--pooling", train.pooling, "slip | topk | avg")
      ->check(CLI::IsMember({"slip", "topk", "avg"}));
  train_cmd->add_option("--tau", train.tau, "Softmax / InfoNCE temperature");
  train_cmd->add_option("--lr", train.lr, "SGD learning rate");
  train_cmd->add_option("--epochs", train.epochs, "Passes over the training bags");
  train_cmd->add_option("--seed", train.seed, "Training seed (context init and shuffling)")->required();
  train_cmd->add_option("--out", train.out, "Report JSON path")->required();
  train_cmd->add_option("--context-length", train.context_length, "Learnable context vectors M");
  train_cmd->add_flag("--per-class-context", train.per_class_context, "One context block per class");
  train_cmd->add_option("--topk", train.topk, "k for top-k pooling (clamped to bag size)");
  train_cmd->add_flag("--exclude-positive", train.exclude_positive, "Drop the positive pair from the loss denominator");
  train_cmd->add_option("--patient-aggregation", train.aggregation, "majority | mean-scores")
      ->check(CLI::IsMember({"majority", "mean-scores"}));
  train_cmd->add_flag("--prompted-tissue-relevance", train.prompted_tissue_relevance,
                      "Recompute class-tissue relevance from prompted class embeddings at evaluation");
  train_cmd->add_option("--threads", train.threads, "Evaluation threads (fallback: SLIP_THREADS)");
  train_cmd->add_flag("--no-timestamp", train.no_timestamp, "Leave created_at empty");
  train.encoder.add_to(*train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained report or the zero-shot baseline");
  eval_cmd->option_defaults()->always_capture_default();
  eval_cmd->add_option("--data", ev.data, "Dataset container (default: the report's)");
  eval_cmd->add_option("--report-with-context", ev.report, "Report written by train");
  eval_cmd->add_flag("--zero-shot", ev.zero_shot, "Per-patch class softmax averaged over the bag");
  eval_cmd->add_option("--classes", ev.classes, "Class names (zero-shot without a report)");
  eval_cmd->add_option("--shots", ev.shots, "Accepted for symmetry; zero-shot scores every bag");
  eval_cmd->add_option("--tau", ev.tau, "Temperature for zero-shot scoring");
  eval_cmd->add_option("--patient-aggregation", ev.aggregation, "majority | mean-scores (zero-shot)")
      ->check(CLI::IsMember({"majority", "mean-scores"}));
  eval_cmd->add_option("--threads", ev.threads, "Evaluation threads (fallback: SLIP_THREADS)");
  eval_cmd->add_option("--out", ev.out, "Optional metrics JSON path");
  ev.encoder.add_to(*eval_cmd);

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run a pooling x shots x tissue-set x seed grid");
  ablate_cmd->option_defaults()->always_capture_default();
  ablate_cmd->add_option("--grid", ab.grid, "Grid JSON file")->required();
  ablate_cmd->add_option("--out", ab.out, "Ablation report JSON path");
  ablate_cmd->add_option("--table", ab.table, "Plain-text table path");
  ablate_cmd->add_option("--threads", ab.threads, "Evaluation threads (fallback: SLIP_THREADS)");

  HeatmapArgs hm;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Export patch-to-class scores of one bag as CSV and PGM");
  heatmap_cmd->option_defaults()->always_capture_default();
  heatmap_cmd->add_option("--data", hm.data, "Dataset container")->required();
  heatmap_cmd->add_option("--bag", hm.bag, "Bag index")->required();
  heatmap_cmd->add_option("--class", hm.class_index, "Class index")->required();
  heatmap_cmd->add_option("--out-prefix", hm.out_prefix, "Output path prefix")->required();
  heatmap_cmd->add_option("--tissues", hm.tissues, "Tissue descriptions")->required();
  heatmap_cmd->add_option("--classes", hm.classes, "Class names")->required();
  heatmap_cmd->add_option("--tau", hm.tau, "Temperature");
  hm.encoder.add_to(*heatmap_cmd);

  const std::size_t env_threads = default_threads();
  train.threads = ev.threads = ab.threads = env_threads;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*train_cmd && !train_config.empty()) apply_config_file(*train_cmd, train_config);
    if (*synth_cmd) return run_synth(synth, out);
    if (*train_cmd) return run_train(train, out);
    if (*eval_cmd) return run_eval(ev, out);
    if (*ablate_cmd) return run_ablate(ab, out);
    if (*heatmap_cmd) return run_heatmap(hm, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace slip::cli
