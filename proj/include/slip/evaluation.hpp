#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slip/encoder.hpp"
#include "slip/pooling.hpp"
#include "slip/trainer.hpp"

namespace slip {

/// argmax_j F[:, j] . t_j over the diagonal pairings; ties go to the lowest
/// class index.
std::size_t classify(const SlideFeature& feature, const ClassPromptSet& classes);

/// Diagonal alignment scores F[:, j] . t_j.
std::vector<double> diagonal_scores(const SlideFeature& feature, const ClassPromptSet& classes);

/// First index of the maximum.
std::size_t argmax(std::span<const double> scores);

struct FewShotSplit {
  std::vector<std::size_t> train;  // dataset indices, ascending
  std::vector<std::size_t> eval;   // the remaining indices, ascending
};

/// Per class, the `shots` bags with the most patches (ties by dataset
/// order). nullopt selects every bag.
FewShotSplit select_few_shot(std::span<const WsiBag> dataset, std::size_t num_classes,
                             std::optional<std::size_t> shots);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> scores;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Prediction predict(const WsiBag& bag) const = 0;
};

/// Pooled slide feature scored against class prompts.
class PooledPredictor final : public Predictor {
 public:
  PooledPredictor(SlidePooler pooler, ClassPromptSet classes)
      : pooler_(std::move(pooler)), classes_(std::move(classes)) {}

  Prediction predict(const WsiBag& bag) const override;

  const SlidePooler& pooler() const noexcept { return pooler_; }

 private:
  SlidePooler pooler_;
  ClassPromptSet classes_;
};

/// Per-patch class softmax averaged over the bag; no tissue prompts.
class ZeroShotPredictor final : public Predictor {
 public:
  ZeroShotPredictor(ClassPromptSet classes, double tau) : classes_(std::move(classes)), tau_(tau) {}

  Prediction predict(const WsiBag& bag) const override;

 private:
  ClassPromptSet classes_;
  double tau_;
};

enum class PatientAggregation { MajorityVote, MeanScores };

std::string_view to_string(PatientAggregation aggregation) noexcept;
PatientAggregation parse_patient_aggregation(std::string_view name);

struct EvalOptions {
  PatientAggregation aggregation = PatientAggregation::MajorityVote;
  std::size_t threads = 1;
};

struct Metrics {
  /// Unweighted mean over classes (with at least one patient) of per-class
  /// patient accuracy.
  double class_averaged_accuracy = 0.0;
  double bag_accuracy = 0.0;
  /// nullopt for classes without patients in the evaluated set.
  std::vector<std::optional<double>> per_class_accuracy;
  /// Patient-level confusion: confusion[true][predicted].
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t num_bags = 0;
  std::size_t num_patients = 0;
  std::vector<std::size_t> bag_predictions;  // aligned with the evaluated indices

  bool operator==(const Metrics&) const = default;
};

/// Predicts every indexed bag, groups bags by patient and scores patients.
Metrics evaluate(std::span<const WsiBag> dataset, std::span<const std::size_t> indices, const Predictor& predictor,
                 std::size_t num_classes, const EvalOptions& options = {});

/// Bag-level predictions in index order; parallel across bags when
/// options.threads > 1.
std::vector<Prediction> predict_all(std::span<const WsiBag> dataset, std::span<const std::size_t> indices,
                                    const Predictor& predictor, std::size_t threads);

enum class Variant { Slip, TopK, Average, SlipZero, ZeroShot };

std::string_view to_string(Variant variant) noexcept;
Variant parse_variant(std::string_view name);
bool is_trained(Variant variant) noexcept;

struct NamedTissueSet {
  std::string name;
  std::vector<std::string> descriptions;
};

struct AblationGrid {
  std::vector<Variant> variants;
  std::vector<std::optional<std::size_t>> shots;
  std::vector<NamedTissueSet> tissue_sets;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;  // seed, pooling and shots are overridden per cell
  EvalOptions eval;
};

struct AblationRow {
  Variant variant = Variant::Slip;
  std::optional<std::size_t> shots;
  std::string tissue_set;
  std::size_t num_tissues = 0;
  std::uint64_t seed = 0;
  Metrics metrics;
  std::size_t train_bags = 0;
  std::size_t eval_bags = 0;
};

/// Trained variants: few-shot split, train, evaluate on the held-out pool.
/// Untrained variants (slip-zero, zero-shot) evaluate every bag, so their
/// rows do not depend on the shot count.
std::vector<AblationRow> run_ablation(std::span<const WsiBag> dataset, const std::vector<std::string>& class_names,
                                      const FrozenEncoderWeights& weights, const AblationGrid& grid);

/// Fixed-width text rendering of ablation rows.
std::string format_ablation_table(std::span<const AblationRow> rows);

}  // namespace slip
