#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slip/encoder.hpp"
#include "slip/pooling.hpp"

namespace slip {

struct TrainConfig {
  double temperature = 0.01;
  double learning_rate = 2e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 1;
  /// nullopt means every available bag ("all" shots).
  std::optional<std::size_t> shots;
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::Slip;
  std::size_t context_length = 4;
  bool per_class_context = false;
  std::size_t topk = 16;
  /// Drop the positive pair from the loss denominator (ablation only).
  bool exclude_positive = false;
  /// Half-width of the uniform context initialisation.
  double init_half_width = 0.01;

  /// Throws InvalidArgument / NonPositiveTemperature on bad settings.
  void validate() const;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t bag = 0;  // index into the training set handed to train_prompts
  double loss = 0.0;

  bool operator==(const StepRecord&) const = default;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  PromptContext initial_context;
  PromptContext final_context;
};

/// Supervised InfoNCE over all C x C (feature, prompt) pairs:
/// -log(exp(z_cc / tau) / sum_ij exp(z_ij / tau)), z_ij = F[:, i] . t_j.
double infonce_loss(const SlideFeature& feature, const ClassPromptSet& classes, std::size_t label, double tau,
                    bool exclude_positive = false);

/// Gradient of infonce_loss with respect to the prompt context. The slide
/// feature is held constant; class prompts are re-encoded through `context`.
PromptContext infonce_grad(const SlideFeature& feature, const ClassPromptSet& classes, std::size_t label, double tau,
                           const FrozenEncoderWeights& weights, const PromptContext& context,
                           bool exclude_positive = false);

/// Plain SGD with batch size one over seeded shuffles of `dataset`.
TrainHistory train_prompts(std::span<const WsiBag> dataset, const TissuePromptSet& tissues,
                           const std::vector<std::string>& class_names, const FrozenEncoderWeights& weights,
                           const TrainConfig& config);

/// Pooler matching the trainer's choice of features for `config`.
SlidePooler make_pooler(const TrainConfig& config, const TissuePromptSet& tissues,
                        const std::vector<std::string>& class_names, const FrozenEncoderWeights& weights);

}  // namespace slip
