#include "slip/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "slip/error.hpp"

namespace slip {

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw Error(ErrorKind::InvalidArgument, "argmax of empty score vector");
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return best;
}

std::vector<double> diagonal_scores(const SlideFeature& feature, const ClassPromptSet& classes) {
  if (feature.num_classes() != classes.size() || feature.dim() != classes.embeddings.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "slide feature and class prompts have inconsistent shapes");
  }
  std::vector<double> scores(classes.size());
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = dot(feature.column(j), classes.embeddings.row(j));
  return scores;
}

std::size_t classify(const SlideFeature& feature, const ClassPromptSet& classes) {
  return argmax(diagonal_scores(feature, classes));
}

FewShotSplit select_few_shot(std::span<const WsiBag> dataset, std::size_t num_classes,
                             std::optional<std::size_t> shots) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "no bags to select from");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dataset[i].validate(num_classes);
    by_class[dataset[i].label].push_back(i);
  }
  std::vector<bool> chosen(dataset.size(), false);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    const std::size_t take = shots.value_or(members.size());
    if (take > members.size() || (shots && *shots == 0)) {
      throw Error(ErrorKind::InsufficientBags, "class " + std::to_string(c) + " has " +
                                                   std::to_string(members.size()) + " bags, " +
                                                   std::to_string(take) + " shots requested");
    }
    std::stable_sort(members.begin(), members.end(),
                     [&](std::size_t a, std::size_t b) { return dataset[a].size() > dataset[b].size(); });
    for (std::size_t s = 0; s < take; ++s) chosen[members[s]] = true;
  }
  FewShotSplit split;
  for (std::size_t i = 0; i < dataset.size(); ++i) (chosen[i] ? split.train : split.eval).push_back(i);
  return split;
}

Prediction PooledPredictor::predict(const WsiBag& bag) const {
  Prediction p;
  p.scores = diagonal_scores(pooler_.feature(bag), classes_);
  p.label = argmax(p.scores);
  return p;
}

Prediction ZeroShotPredictor::predict(const WsiBag& bag) const {
  Prediction p;
  p.scores = zero_shot_scores(bag, classes_, tau_);
  p.label = argmax(p.scores);
  return p;
}

std::string_view to_string(PatientAggregation aggregation) noexcept {
  return aggregation == PatientAggregation::MajorityVote ? "majority" : "mean-scores";
}

PatientAggregation parse_patient_aggregation(std::string_view name) {
  if (name == "majority") return PatientAggregation::MajorityVote;
  if (name == "mean-scores") return PatientAggregation::MeanScores;
  throw Error(ErrorKind::InvalidArgument,
              "unknown patient aggregation '" + std::string(name) + "' (expected majority|mean-scores)");
}

std::vector<Prediction> predict_all(std::span<const WsiBag> dataset, std::span<const std::size_t> indices,
                                    const Predictor& predictor, std::size_t threads) {
  std::vector<Prediction> out(indices.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = predictor.predict(dataset[indices[i]]);
  };
  threads = std::max<std::size_t>(1, std::min(threads, indices.size()));
  if (threads == 1) {
    work(0, indices.size());
    return out;
  }
  // Each worker owns a contiguous slice of `out`; results land in index
  // order regardless of scheduling.
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (indices.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(indices.size(), t * chunk);
    const std::size_t end = std::min(indices.size(), begin + chunk);
    pool.emplace_back([&, t, begin, end] {
      try {
        work(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Metrics evaluate(std::span<const WsiBag> dataset, std::span<const std::size_t> indices, const Predictor& predictor,
                 std::size_t num_classes, const EvalOptions& options) {
  if (indices.empty()) throw Error(ErrorKind::EmptyDataset, "no bags to evaluate");
  for (std::size_t i : indices) {
    if (i >= dataset.size()) throw Error(ErrorKind::InvalidArgument, "bag index out of range");
    dataset[i].validate(num_classes);
  }
  const auto predictions = predict_all(dataset, indices, predictor, options.threads);

  Metrics m;
  m.num_bags = indices.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t bag_correct = 0;

  struct Patient {
    std::size_t label = 0;
    std::vector<std::size_t> votes;
    std::vector<double> score_sum;
  };
  // Patients in order of first appearance.
  std::vector<Patient> patients;
  std::map<std::string, std::size_t> patient_index;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const WsiBag& bag = dataset[indices[k]];
    const Prediction& pred = predictions[k];
    m.bag_predictions.push_back(pred.label);
    if (pred.label == bag.label) ++bag_correct;

    auto [it, inserted] = patient_index.emplace(bag.patient_id, patients.size());
    if (inserted) {
      patients.push_back({bag.label, std::vector<std::size_t>(num_classes, 0), std::vector<double>(num_classes, 0.0)});
    }
    Patient& p = patients[it->second];
    if (p.label != bag.label) {
      throw Error(ErrorKind::InvalidArgument, "patient '" + bag.patient_id + "' has bags with different labels");
    }
    ++p.votes[pred.label];
    if (pred.scores.size() != num_classes) throw Error(ErrorKind::DimensionMismatch, "score vector length");
    for (std::size_t c = 0; c < num_classes; ++c) p.score_sum[c] += pred.scores[c];
  }
  m.bag_accuracy = static_cast<double>(bag_correct) / static_cast<double>(indices.size());
  m.num_patients = patients.size();

  std::vector<std::size_t> class_patients(num_classes, 0), class_correct(num_classes, 0);
  for (const Patient& p : patients) {
    std::size_t predicted = 0;
    if (options.aggregation == PatientAggregation::MajorityVote) {
      predicted = static_cast<std::size_t>(std::max_element(p.votes.begin(), p.votes.end()) - p.votes.begin());
    } else {
      predicted = argmax(p.score_sum);
    }
    ++m.confusion[p.label][predicted];
    ++class_patients[p.label];
    if (predicted == p.label) ++class_correct[p.label];
  }

  double sum = 0.0;
  std::size_t counted = 0;
  m.per_class_accuracy.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (class_patients[c] == 0) continue;
    const double acc = static_cast<double>(class_correct[c]) / static_cast<double>(class_patients[c]);
    m.per_class_accuracy[c] = acc;
    sum += acc;
    ++counted;
  }
  m.class_averaged_accuracy = sum / static_cast<double>(counted);
  return m;
}

std::string_view to_string(Variant variant) noexcept {
  switch (variant) {
    case Variant::Slip: return "slip";
    case Variant::TopK: return "topk";
    case Variant::Average: return "avg";
    case Variant::SlipZero: return "slip-zero";
    case Variant::ZeroShot: return "zero-shot";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "slip") return Variant::Slip;
  if (name == "topk") return Variant::TopK;
  if (name == "avg") return Variant::Average;
  if (name == "slip-zero") return Variant::SlipZero;
  if (name == "zero-shot") return Variant::ZeroShot;
  throw Error(ErrorKind::InvalidArgument,
              "unknown variant '" + std::string(name) + "' (expected slip|topk|avg|slip-zero|zero-shot)");
}

bool is_trained(Variant variant) noexcept { return variant != Variant::SlipZero && variant != Variant::ZeroShot; }

namespace {

Pooling pooling_for(Variant v) {
  switch (v) {
    case Variant::TopK: return Pooling::TopK;
    case Variant::Average: return Pooling::Average;
    default: return Pooling::Slip;
  }
}

}  // namespace

std::vector<AblationRow> run_ablation(std::span<const WsiBag> dataset, const std::vector<std::string>& class_names,
                                      const FrozenEncoderWeights& weights, const AblationGrid& grid) {
  if (grid.variants.empty() || grid.shots.empty() || grid.tissue_sets.empty() || grid.seeds.empty()) {
    throw Error(ErrorKind::InvalidArgument, "ablation grid has an empty axis");
  }
  const std::size_t num_classes = class_names.size();
  std::vector<std::size_t> all(dataset.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const ClassPromptSet raw = ClassPromptSet::encode(weights, class_names);

  std::vector<AblationRow> rows;
  for (const auto& tissue_set : grid.tissue_sets) {
    const TissuePromptSet tissues = TissuePromptSet::encode(weights, tissue_set.descriptions);
    for (Variant variant : grid.variants) {
      for (const auto& shots : grid.shots) {
        for (std::uint64_t seed : grid.seeds) {
          AblationRow row;
          row.variant = variant;
          row.shots = shots;
          row.tissue_set = tissue_set.name;
          row.num_tissues = tissues.size();
          row.seed = seed;
          if (variant == Variant::ZeroShot) {
            row.metrics = evaluate(dataset, all, ZeroShotPredictor(raw, grid.base.temperature), num_classes, grid.eval);
            row.eval_bags = all.size();
          } else if (variant == Variant::SlipZero) {
            PooledPredictor predictor(
                SlidePooler(Pooling::Slip, tissues, raw, grid.base.temperature, grid.base.topk), raw);
            row.metrics = evaluate(dataset, all, predictor, num_classes, grid.eval);
            row.eval_bags = all.size();
          } else {
            TrainConfig cfg = grid.base;
            cfg.seed = seed;
            cfg.shots = shots;
            cfg.pooling = pooling_for(variant);
            const FewShotSplit split = select_few_shot(dataset, num_classes, shots);
            std::vector<WsiBag> train;
            for (std::size_t i : split.train) train.push_back(dataset[i]);
            const TrainHistory history = train_prompts(train, tissues, class_names, weights, cfg);
            PooledPredictor predictor(make_pooler(cfg, tissues, class_names, weights),
                                      ClassPromptSet::encode(weights, class_names, history.final_context));
            const auto& eval_idx = split.eval.empty() ? split.train : split.eval;
            row.metrics = evaluate(dataset, eval_idx, predictor, num_classes, grid.eval);
            row.train_bags = split.train.size();
            row.eval_bags = eval_idx.size();
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %6s %-16s %4s %8s %10s %10s %6s\n", "variant", "shots", "tissues", "K",
                "seed", "class_acc", "bag_acc", "bags");
  out << line;
  for (const auto& r : rows) {
    const std::string shots = r.shots ? std::to_string(*r.shots) : "all";
    std::snprintf(line, sizeof line, "%-10s %6s %-16s %4zu %8llu %10.4f %10.4f %6zu\n",
                  std::string(to_string(r.variant)).c_str(), shots.c_str(), r.tissue_set.c_str(), r.num_tissues,
                  static_cast<unsigned long long>(r.seed), r.metrics.class_averaged_accuracy,
                  r.metrics.bag_accuracy, r.eval_bags);
    out << line;
  }
  return out.str();
}

}  // namespace slip
