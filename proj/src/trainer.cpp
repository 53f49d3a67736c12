#include "slip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "slip/error.hpp"
#include "slip/random.hpp"

namespace slip {

void TrainConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::NonPositiveTemperature, "temperature must be positive");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::InvalidArgument, "learning rate must be finite and non-negative");
  }
  if (batch_size != 1) throw Error(ErrorKind::InvalidArgument, "only batch size 1 is supported");
  if (shots && *shots == 0) throw Error(ErrorKind::InvalidArgument, "shots must be positive");
  if (topk == 0) throw Error(ErrorKind::KOutOfRange, "top-k must be at least 1");
  if (!(init_half_width >= 0.0)) throw Error(ErrorKind::InvalidArgument, "init half-width must be non-negative");
}

namespace {

struct PairLogits {
  Matrix scaled;  // z / tau, C x C, row = feature column i, col = prompt j
};

Matrix pair_logits(const SlideFeature& feature, const ClassPromptSet& classes, std::size_t label, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::NonPositiveTemperature, "temperature must be positive");
  if (feature.num_classes() != classes.size()) {
    throw Error(ErrorKind::DimensionMismatch, "slide feature and class prompts disagree on class count");
  }
  if (feature.dim() != classes.embeddings.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "slide feature and class prompts disagree on dimension");
  }
  if (label >= classes.size()) {
    throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " >= " + std::to_string(classes.size()));
  }
  Matrix u = matmul_transposed(feature.class_major(), classes.embeddings);
  for (double& v : u.values()) v /= tau;
  return u;
}

// Softmax weights over the denominator set and the loss value.
struct PairSoftmax {
  Matrix probs;
  double loss = 0.0;
};

PairSoftmax pair_softmax(const Matrix& u, std::size_t label, bool exclude_positive) {
  const std::size_t c = label;
  const double positive = u(c, c);
  auto in_denominator = [&](std::size_t i, std::size_t j) { return !(exclude_positive && i == c && j == c); };

  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
      if (in_denominator(i, j)) peak = std::max(peak, u(i, j));
    }
  }
  if (!std::isfinite(peak)) throw Error(ErrorKind::InvalidArgument, "loss denominator is empty");

  PairSoftmax out{Matrix(u.rows(), u.cols()), 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
      if (!in_denominator(i, j)) continue;
      out.probs(i, j) = std::exp(u(i, j) - peak);
      total += out.probs(i, j);
    }
  }
  for (double& p : out.probs.values()) p /= total;

  if (!exclude_positive && positive >= peak) {
    // Positive pair is the largest logit: log(1 + rest) keeps full relative
    // precision when the loss is tiny.
    double rest = 0.0;
    for (std::size_t i = 0; i < u.rows(); ++i) {
      for (std::size_t j = 0; j < u.cols(); ++j) {
        if (i == c && j == c) continue;
        rest += std::exp(u(i, j) - positive);
      }
    }
    out.loss = std::log1p(rest);
  } else {
    out.loss = (peak - positive) + std::log(total);
  }
  return out;
}

}  // namespace

double infonce_loss(const SlideFeature& feature, const ClassPromptSet& classes, std::size_t label, double tau,
                    bool exclude_positive) {
  return pair_softmax(pair_logits(feature, classes, label, tau), label, exclude_positive).loss;
}

PromptContext infonce_grad(const SlideFeature& feature, const ClassPromptSet& classes, std::size_t label, double tau,
                           const FrozenEncoderWeights& weights, const PromptContext& context, bool exclude_positive) {
  const Matrix u = pair_logits(feature, classes, label, tau);
  const PairSoftmax sm = pair_softmax(u, label, exclude_positive);
  const std::size_t num_classes = classes.size();

  PromptContext grad(context.length(), context.token_dim(), context.groups());
  if (context.length() == 0) return grad;

  std::vector<double> upstream(feature.dim());
  for (std::size_t j = 0; j < num_classes; ++j) {
    // dL/dt_j = sum_i (dL/dz_ij) F[:, i]
    std::fill(upstream.begin(), upstream.end(), 0.0);
    for (std::size_t i = 0; i < num_classes; ++i) {
      const double g = (sm.probs(i, j) - ((i == label && j == label) ? 1.0 : 0.0)) / tau;
      if (g == 0.0) continue;
      auto col = feature.column(i);
      for (std::size_t d = 0; d < upstream.size(); ++d) upstream[d] += g * col[d];
    }
    const Matrix g_ctx = encode_text_grad(weights, context.for_class(j), classes.class_names[j], upstream);
    auto dst = grad.block(context.shared() ? 0 : j).values();
    auto src = g_ctx.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  return grad;
}

SlidePooler make_pooler(const TrainConfig& config, const TissuePromptSet& tissues,
                        const std::vector<std::string>& class_names, const FrozenEncoderWeights& weights) {
  return SlidePooler(config.pooling, tissues, ClassPromptSet::encode(weights, class_names), config.temperature,
                     config.topk);
}

TrainHistory train_prompts(std::span<const WsiBag> dataset, const TissuePromptSet& tissues,
                           const std::vector<std::string>& class_names, const FrozenEncoderWeights& weights,
                           const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  const std::size_t num_classes = class_names.size();
  std::vector<bool> seen(num_classes, false);
  for (const auto& bag : dataset) {
    bag.validate(num_classes);
    seen[bag.label] = true;
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!seen[c]) throw Error(ErrorKind::MissingClass, "class '" + class_names[c] + "' has no training bag");
  }

  const SlidePooler pooler = make_pooler(config, tissues, class_names, weights);
  std::vector<SlideFeature> features;
  features.reserve(dataset.size());
  for (const auto& bag : dataset) features.push_back(pooler.feature(bag));

  const std::size_t groups = config.per_class_context ? num_classes : 1;
  TrainHistory history;
  history.initial_context = PromptContext::uniform(config.context_length, weights.token_dim(), groups,
                                                   config.init_half_width, mix_seed(config.seed, 1));
  PromptContext context = history.initial_context;
  history.steps.reserve(config.epochs * dataset.size());

  Rng shuffle_rng(mix_seed(config.seed, 2));
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    for (std::size_t b : order) {
      const ClassPromptSet prompted = ClassPromptSet::encode(weights, class_names, context);
      const std::size_t label = dataset[b].label;
      const double loss = infonce_loss(features[b], prompted, label, config.temperature, config.exclude_positive);
      if (!std::isfinite(loss)) throw Error(ErrorKind::NonFinite, "training loss diverged");
      const PromptContext grad = infonce_grad(features[b], prompted, label, config.temperature, weights, context,
                                              config.exclude_positive);
      context.subtract_scaled(grad, config.learning_rate);
      history.steps.push_back({epoch, b, loss});
    }
  }
  history.final_context = std::move(context);
  return history;
}

}  // namespace slip
