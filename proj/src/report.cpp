#include "slip/report.hpp"

#include <chrono>
#include <ctime>

#include "slip/error.hpp"
#include "slip/io.hpp"

namespace slip {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::SchemaError, std::string("missing field '") + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("field '") + key + "': " + e.what());
  }
}

json shots_json(const std::optional<std::size_t>& shots) { return shots ? json(*shots) : json("all"); }

std::optional<std::size_t> shots_from(const json& j) {
  if (j.is_string() && j.get<std::string>() == "all") return std::nullopt;
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  throw Error(ErrorKind::SchemaError, "shots must be a count or \"all\"");
}

}  // namespace

json to_json(const TrainConfig& c) {
  return {{"tau", c.temperature},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"shots", shots_json(c.shots)},
          {"seed", c.seed},
          {"pooling", std::string(to_string(c.pooling))},
          {"context_length", c.context_length},
          {"per_class_context", c.per_class_context},
          {"topk", c.topk},
          {"exclude_positive", c.exclude_positive},
          {"init_half_width", c.init_half_width}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.temperature = get<double>(j, "tau");
  c.learning_rate = get<double>(j, "learning_rate");
  c.epochs = get<std::size_t>(j, "epochs");
  c.batch_size = get<std::size_t>(j, "batch_size");
  c.shots = shots_from(field(j, "shots"));
  c.seed = get<std::uint64_t>(j, "seed");
  try {
    c.pooling = parse_pooling(get<std::string>(j, "pooling"));
  } catch (const Error& e) {
    throw Error(ErrorKind::SchemaError, e.what());
  }
  c.context_length = get<std::size_t>(j, "context_length");
  c.per_class_context = get<bool>(j, "per_class_context");
  c.topk = get<std::size_t>(j, "topk");
  c.exclude_positive = get<bool>(j, "exclude_positive");
  c.init_half_width = get<double>(j, "init_half_width");
  return c;
}

json to_json(const Metrics& m) {
  json per_class = json::array();
  for (const auto& a : m.per_class_accuracy) per_class.push_back(a ? json(*a) : json(nullptr));
  return {{"class_averaged_accuracy", m.class_averaged_accuracy},
          {"bag_accuracy", m.bag_accuracy},
          {"per_class_accuracy", per_class},
          {"confusion", m.confusion},
          {"num_bags", m.num_bags},
          {"num_patients", m.num_patients},
          {"bag_predictions", m.bag_predictions}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.class_averaged_accuracy = get<double>(j, "class_averaged_accuracy");
  m.bag_accuracy = get<double>(j, "bag_accuracy");
  for (const auto& a : field(j, "per_class_accuracy")) {
    if (a.is_null()) {
      m.per_class_accuracy.emplace_back(std::nullopt);
    } else if (a.is_number()) {
      m.per_class_accuracy.emplace_back(a.get<double>());
    } else {
      throw Error(ErrorKind::SchemaError, "per_class_accuracy entries must be numbers or null");
    }
  }
  m.confusion = get<std::vector<std::vector<std::size_t>>>(j, "confusion");
  m.num_bags = get<std::size_t>(j, "num_bags");
  m.num_patients = get<std::size_t>(j, "num_patients");
  m.bag_predictions = get<std::vector<std::size_t>>(j, "bag_predictions");
  return m;
}

json to_json(const PromptContext& ctx) {
  json blocks = json::array();
  for (std::size_t g = 0; g < ctx.groups(); ++g) {
    const auto v = ctx.block(g).values();
    blocks.push_back(std::vector<double>(v.begin(), v.end()));
  }
  return {{"length", ctx.length()}, {"token_dim", ctx.token_dim()}, {"shared", ctx.shared()}, {"blocks", blocks}};
}

PromptContext context_from_json(const json& j) {
  const auto length = get<std::size_t>(j, "length");
  const auto token_dim = get<std::size_t>(j, "token_dim");
  const auto blocks = get<std::vector<std::vector<double>>>(j, "blocks");
  if (blocks.empty()) throw Error(ErrorKind::SchemaError, "context has no blocks");
  PromptContext ctx(length, token_dim, blocks.size());
  for (std::size_t g = 0; g < blocks.size(); ++g) {
    if (blocks[g].size() != length * token_dim) throw Error(ErrorKind::SchemaError, "context block has wrong size");
    std::copy(blocks[g].begin(), blocks[g].end(), ctx.block(g).values().begin());
  }
  return ctx;
}

json to_json(const RunReport& r) {
  json steps = json::array();
  for (const auto& s : r.steps) steps.push_back({{"epoch", s.epoch}, {"bag", s.bag}, {"loss", s.loss}});
  json j = {{"schema", kRunReportSchema},
            {"schema_version", kReportSchemaVersion},
            {"created_at", r.created_at},
            {"config", to_json(r.config)},
            {"encoder",
             {{"hash_buckets", r.encoder.hash_buckets},
              {"token_dim", r.encoder.token_dim},
              {"embed_dim", r.encoder.embed_dim},
              {"seed", r.encoder.seed}}},
            {"evaluation",
             {{"patient_aggregation", std::string(to_string(r.aggregation))},
              {"prompted_tissue_relevance", r.prompted_tissue_relevance},
              {"pool", r.eval_pool}}},
            {"inputs", {{"data", r.data_path}, {"tissues", r.tissues_path}, {"classes", r.classes_path}}},
            {"class_names", r.class_names},
            {"tissues", r.tissues},
            {"train_bags", r.train_bags},
            {"eval_bags", r.eval_bags},
            {"history", steps},
            {"metrics", to_json(r.metrics)}};
  if (r.context) j["context"] = to_json(*r.context);
  if (r.train_metrics) j["train_metrics"] = to_json(*r.train_metrics);
  return j;
}

RunReport run_report_from_json(const json& j) {
  if (get<std::string>(j, "schema") != kRunReportSchema) throw Error(ErrorKind::SchemaError, "not a run report");
  if (get<int>(j, "schema_version") != kReportSchemaVersion) {
    throw Error(ErrorKind::SchemaError, "unsupported report schema version");
  }
  RunReport r;
  r.created_at = get<std::string>(j, "created_at");
  r.config = train_config_from_json(field(j, "config"));
  const json& enc = field(j, "encoder");
  r.encoder.hash_buckets = get<std::size_t>(enc, "hash_buckets");
  r.encoder.token_dim = get<std::size_t>(enc, "token_dim");
  r.encoder.embed_dim = get<std::size_t>(enc, "embed_dim");
  r.encoder.seed = get<std::uint64_t>(enc, "seed");
  const json& ev = field(j, "evaluation");
  try {
    r.aggregation = parse_patient_aggregation(get<std::string>(ev, "patient_aggregation"));
  } catch (const Error& e) {
    throw Error(ErrorKind::SchemaError, e.what());
  }
  r.prompted_tissue_relevance = get<bool>(ev, "prompted_tissue_relevance");
  r.eval_pool = get<std::string>(ev, "pool");
  const json& inputs = field(j, "inputs");
  r.data_path = get<std::string>(inputs, "data");
  r.tissues_path = get<std::string>(inputs, "tissues");
  r.classes_path = get<std::string>(inputs, "classes");
  r.class_names = get<std::vector<std::string>>(j, "class_names");
  r.tissues = get<std::vector<std::string>>(j, "tissues");
  r.train_bags = get<std::vector<std::size_t>>(j, "train_bags");
  r.eval_bags = get<std::vector<std::size_t>>(j, "eval_bags");
  for (const auto& s : field(j, "history")) {
    r.steps.push_back({get<std::size_t>(s, "epoch"), get<std::size_t>(s, "bag"), get<double>(s, "loss")});
  }
  r.metrics = metrics_from_json(field(j, "metrics"));
  if (j.contains("context")) r.context = context_from_json(j.at("context"));
  if (j.contains("train_metrics")) r.train_metrics = metrics_from_json(j.at("train_metrics"));
  return r;
}

void write_report(const RunReport& report, const std::filesystem::path& path) {
  write_text_file(path, to_json(report).dump(2) + "\n");
}

RunReport read_report(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
  }
  return run_report_from_json(j);
}

json ablation_to_json(std::span<const AblationRow> rows, const AblationGrid& grid) {
  json out_rows = json::array();
  for (const auto& r : rows) {
    out_rows.push_back({{"variant", std::string(to_string(r.variant))},
                        {"shots", shots_json(r.shots)},
                        {"tissue_set", r.tissue_set},
                        {"num_tissues", r.num_tissues},
                        {"seed", r.seed},
                        {"train_bags", r.train_bags},
                        {"eval_bags", r.eval_bags},
                        {"metrics", to_json(r.metrics)}});
  }
  json tissue_sets = json::array();
  for (const auto& t : grid.tissue_sets) tissue_sets.push_back({{"name", t.name}, {"size", t.descriptions.size()}});
  return {{"schema", kAblationReportSchema},
          {"schema_version", kReportSchemaVersion},
          {"base_config", to_json(grid.base)},
          {"patient_aggregation", std::string(to_string(grid.eval.aggregation))},
          {"tissue_sets", tissue_sets},
          {"rows", out_rows}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace slip
