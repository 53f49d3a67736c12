#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slip/encoder.hpp"
#include "slip/evaluation.hpp"
#include "slip/trainer.hpp"

namespace slip {

inline constexpr const char* kRunReportSchema = "slip-run-report";
inline constexpr const char* kAblationReportSchema = "slip-ablation-report";
inline constexpr int kReportSchemaVersion = 1;

/// Everything a `train` run produces, in the shape written to disk.
struct RunReport {
  TrainConfig config;
  EncoderConfig encoder;
  PatientAggregation aggregation = PatientAggregation::MajorityVote;
  bool prompted_tissue_relevance = false;
  std::string data_path;
  std::string tissues_path;
  std::string classes_path;
  std::vector<std::string> class_names;
  std::vector<std::string> tissues;
  std::vector<std::size_t> train_bags;
  std::vector<std::size_t> eval_bags;
  /// "held_out" or "training" (when no bags were left out).
  std::string eval_pool = "held_out";
  std::vector<StepRecord> steps;
  std::optional<PromptContext> context;
  Metrics metrics;
  std::optional<Metrics> train_metrics;
  std::string created_at;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Metrics& metrics);
Metrics metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PromptContext& context);
PromptContext context_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunReport& report);
/// Throws SchemaError on a missing or mistyped required field.
RunReport run_report_from_json(const nlohmann::json& j);

void write_report(const RunReport& report, const std::filesystem::path& path);
RunReport read_report(const std::filesystem::path& path);

nlohmann::json ablation_to_json(std::span<const AblationRow> rows, const AblationGrid& grid);

/// Current UTC time, ISO-8601.
std::string utc_timestamp();

}  // namespace slip
