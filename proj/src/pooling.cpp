#include "slip/pooling.hpp"

#include <algorithm>
#include <numeric>

#include "slip/error.hpp"

namespace slip {

TissuePromptSet TissuePromptSet::encode(const FrozenEncoderWeights& weights, std::vector<std::string> descriptions) {
  if (descriptions.empty()) throw Error(ErrorKind::EmptyPromptSet, "no tissue descriptions");
  auto embeddings = encode_texts(weights, descriptions, EmbeddingKind::TissueText);
  return TissuePromptSet{std::move(descriptions), std::move(embeddings)};
}

ClassPromptSet ClassPromptSet::encode(const FrozenEncoderWeights& weights, std::vector<std::string> class_names) {
  if (class_names.empty()) throw Error(ErrorKind::EmptyPromptSet, "no class names");
  auto embeddings = encode_texts(weights, class_names, EmbeddingKind::ClassText);
  return ClassPromptSet{std::move(class_names), std::move(embeddings), false};
}

ClassPromptSet ClassPromptSet::encode(const FrozenEncoderWeights& weights, std::vector<std::string> class_names,
                                      const PromptContext& context) {
  if (class_names.empty()) throw Error(ErrorKind::EmptyPromptSet, "no class names");
  if (!context.shared() && context.groups() != class_names.size()) {
    throw Error(ErrorKind::DimensionMismatch, "per-class context has " + std::to_string(context.groups()) +
                                                  " blocks for " + std::to_string(class_names.size()) + " classes");
  }
  Matrix out(class_names.size(), weights.embed_dim());
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto e = encode_text(weights, context.for_class(c), class_names[c]);
    std::copy(e.begin(), e.end(), out.row(c).begin());
  }
  return ClassPromptSet{std::move(class_names), EmbeddingMatrix(std::move(out), EmbeddingKind::ClassText), true};
}

SlideFeature::SlideFeature(Matrix class_major) : columns_(std::move(class_major)) {}

SimilarityMatrix tissue_wsi_similarity(const ClassPromptSet& classes, const TissuePromptSet& tissues, double tau) {
  return softmax_rows(cosine_matrix(classes.embeddings, tissues.embeddings), tau);
}

SimilarityMatrix patch_tissue_similarity(const WsiBag& bag, const TissuePromptSet& tissues, double tau) {
  return softmax_rows(cosine_matrix(bag.patches, tissues.embeddings), tau);
}

Matrix patch_slide_correlation(const SimilarityMatrix& s_patch, const SimilarityMatrix& s_wsi) {
  if (s_patch.cols() != s_wsi.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "patch and class similarity matrices disagree on tissue count");
  }
  return matmul_transposed(s_patch, s_wsi);
}

SlideFeature slip_pool(const WsiBag& bag, const SimilarityMatrix& s_patch, const SimilarityMatrix& s_wsi) {
  if (s_patch.rows() != bag.size()) {
    throw Error(ErrorKind::DimensionMismatch, "patch similarity rows differ from bag size");
  }
  const Matrix corr = patch_slide_correlation(s_patch, s_wsi);
  const std::size_t num_classes = corr.cols();
  const std::size_t dim = bag.dim();
  Matrix columns(num_classes, dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto col = columns.row(c);
    // At small temperatures the weights can be ~1e-80; rescaling by the
    // largest keeps the zero-norm check relative to the weights themselves.
    double peak = 0.0;
    for (std::size_t n = 0; n < bag.size(); ++n) peak = std::max(peak, corr(n, c));
    if (!(peak > 0.0)) {
      throw Error(ErrorKind::ZeroVector, "all patch weights for class " + std::to_string(c) + " underflow to zero");
    }
    for (std::size_t n = 0; n < bag.size(); ++n) {
      const double w = corr(n, c) / peak;
      auto patch = bag.patches.row(n);
      for (std::size_t d = 0; d < dim; ++d) col[d] += w * patch[d];
    }
    const double norm = l2_norm(col);
    if (!(norm >= kNormFloor)) {
      throw Error(ErrorKind::ZeroVector, "pooled feature for class " + std::to_string(c) + " cancels to zero");
    }
    for (double& v : col) v /= norm;
  }
  return SlideFeature(std::move(columns));
}

namespace {

std::vector<double> normalized_mean(const WsiBag& bag, std::span<const std::size_t> indices) {
  std::vector<double> sum(bag.dim(), 0.0);
  for (std::size_t n : indices) {
    auto patch = bag.patches.row(n);
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += patch[d];
  }
  for (double& v : sum) v /= static_cast<double>(indices.size());
  return l2_normalize(sum);
}

}  // namespace

std::vector<double> pool_average(const WsiBag& bag) {
  std::vector<std::size_t> all(bag.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return normalized_mean(bag, all);
}

SlideFeature pool_topk(const WsiBag& bag, const ClassPromptSet& classes, std::size_t k) {
  if (k == 0 || k > bag.size()) {
    throw Error(ErrorKind::KOutOfRange, "top-k needs 1 <= k <= " + std::to_string(bag.size()) + ", got " +
                                            std::to_string(k));
  }
  const Matrix cos = cosine_matrix(bag.patches, classes.embeddings);
  Matrix columns(classes.size(), bag.dim());
  std::vector<std::size_t> order(bag.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cos(a, c) > cos(b, c); });
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());
    const auto col = normalized_mean(bag, chosen);
    std::copy(col.begin(), col.end(), columns.row(c).begin());
  }
  return SlideFeature(std::move(columns));
}

std::vector<double> zero_shot_scores(const WsiBag& bag, const ClassPromptSet& classes, double tau) {
  const SimilarityMatrix per_patch = softmax_rows(cosine_matrix(bag.patches, classes.embeddings), tau);
  std::vector<double> mean(classes.size(), 0.0);
  for (std::size_t n = 0; n < per_patch.rows(); ++n) {
    auto row = per_patch.row(n);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(per_patch.rows());
  return mean;
}

std::string_view to_string(Pooling pooling) noexcept {
  switch (pooling) {
    case Pooling::Slip: return "slip";
    case Pooling::TopK: return "topk";
    case Pooling::Average: return "avg";
  }
  return "unknown";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "slip") return Pooling::Slip;
  if (name == "topk") return Pooling::TopK;
  if (name == "avg") return Pooling::Average;
  throw Error(ErrorKind::InvalidArgument, "unknown pooling '" + std::string(name) + "' (expected slip|topk|avg)");
}

SlidePooler::SlidePooler(Pooling pooling, TissuePromptSet tissues, ClassPromptSet raw_classes, double tau,
                         std::size_t topk)
    : pooling_(pooling),
      tissues_(std::move(tissues)),
      raw_classes_(std::move(raw_classes)),
      tau_(tau),
      topk_(topk),
      s_wsi_(tissue_wsi_similarity(raw_classes_, tissues_, tau)) {
  if (topk_ == 0) throw Error(ErrorKind::KOutOfRange, "top-k must be at least 1");
}

void SlidePooler::set_tissue_relevance_from(const ClassPromptSet& classes) {
  s_wsi_ = tissue_wsi_similarity(classes, tissues_, tau_);
}

SlideFeature SlidePooler::feature(const WsiBag& bag) const {
  switch (pooling_) {
    case Pooling::Slip:
      return slip_pool(bag, patch_tissue_similarity(bag, tissues_, tau_), s_wsi_);
    case Pooling::TopK:
      return pool_topk(bag, raw_classes_, std::min(topk_, bag.size()));
    case Pooling::Average: {
      const auto avg = pool_average(bag);
      Matrix columns(raw_classes_.size(), avg.size());
      for (std::size_t c = 0; c < columns.rows(); ++c) std::copy(avg.begin(), avg.end(), columns.row(c).begin());
      return SlideFeature(std::move(columns));
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unhandled pooling");
}

}  // namespace slip
