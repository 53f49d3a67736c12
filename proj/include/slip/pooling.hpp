#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slip/embedding.hpp"
#include "slip/encoder.hpp"

namespace slip {

/// K tissue descriptions and their context-free text embeddings.
struct TissuePromptSet {
  std::vector<std::string> descriptions;
  EmbeddingMatrix embeddings;

  static TissuePromptSet encode(const FrozenEncoderWeights& weights, std::vector<std::string> descriptions);
  std::size_t size() const noexcept { return embeddings.rows(); }
};

/// C slide class names and their text embeddings, with or without the
/// learnable context prepended.
struct ClassPromptSet {
  std::vector<std::string> class_names;
  EmbeddingMatrix embeddings;
  bool with_context = false;

  static ClassPromptSet encode(const FrozenEncoderWeights& weights, std::vector<std::string> class_names);
  static ClassPromptSet encode(const FrozenEncoderWeights& weights, std::vector<std::string> class_names,
                               const PromptContext& context);
  std::size_t size() const noexcept { return embeddings.rows(); }
};

/// Class-specific slide features. Stored class-major: column(c) is the
/// d_v-dimensional feature for class c.
class SlideFeature {
 public:
  explicit SlideFeature(Matrix class_major);

  std::size_t num_classes() const noexcept { return columns_.rows(); }
  std::size_t dim() const noexcept { return columns_.cols(); }
  std::span<const double> column(std::size_t c) const { return columns_.row(c); }
  const Matrix& class_major() const noexcept { return columns_; }

 private:
  Matrix columns_;
};

/// Relevance of each tissue type to each class: C x K, softmax over tissues
/// of cos(class_i, tissue_j) / tau.
SimilarityMatrix tissue_wsi_similarity(const ClassPromptSet& classes, const TissuePromptSet& tissues, double tau);

/// Alignment of each patch with each tissue type: N x K.
SimilarityMatrix patch_tissue_similarity(const WsiBag& bag, const TissuePromptSet& tissues, double tau);

/// Patch-to-slide correlation S = s_patch * transpose(s_wsi), N x C.
Matrix patch_slide_correlation(const SimilarityMatrix& s_patch, const SimilarityMatrix& s_wsi);

/// Column c = normalize(sum_n S[n][c] * patch_n).
SlideFeature slip_pool(const WsiBag& bag, const SimilarityMatrix& s_patch, const SimilarityMatrix& s_wsi);

/// normalize(mean of patch embeddings).
std::vector<double> pool_average(const WsiBag& bag);

/// Per class, the k patches most similar to that class prompt (ties to the
/// lower patch index), averaged and normalised.
SlideFeature pool_topk(const WsiBag& bag, const ClassPromptSet& classes, std::size_t k);

/// Per-patch softmax over classes, averaged over patches.
std::vector<double> zero_shot_scores(const WsiBag& bag, const ClassPromptSet& classes, double tau);

enum class Pooling { Slip, TopK, Average };

std::string_view to_string(Pooling pooling) noexcept;
Pooling parse_pooling(std::string_view name);

/// Builds the slide feature for a bag under one pooling rule. Class prompts
/// used here are the context-free ones, so features stay fixed while the
/// prompt context is trained.
class SlidePooler {
 public:
  SlidePooler(Pooling pooling, TissuePromptSet tissues, ClassPromptSet raw_classes, double tau,
              std::size_t topk = 16);

  SlideFeature feature(const WsiBag& bag) const;

  /// Re-derive the tissue relevance from a different (e.g. prompted) class set.
  void set_tissue_relevance_from(const ClassPromptSet& classes);

  Pooling pooling() const noexcept { return pooling_; }
  const TissuePromptSet& tissues() const noexcept { return tissues_; }
  const ClassPromptSet& raw_classes() const noexcept { return raw_classes_; }
  const SimilarityMatrix& tissue_relevance() const noexcept { return s_wsi_; }
  double tau() const noexcept { return tau_; }

 private:
  Pooling pooling_;
  TissuePromptSet tissues_;
  ClassPromptSet raw_classes_;
  double tau_;
  std::size_t topk_;
  SimilarityMatrix s_wsi_;
};

}  // namespace slip
