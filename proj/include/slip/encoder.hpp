#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slip/embedding.hpp"
#include "slip/matrix.hpp"

namespace slip {

struct EncoderConfig {
  std::size_t hash_buckets = 4096;
  std::size_t token_dim = 16;
  std::size_t embed_dim = 32;
  std::uint64_t seed = 42;
};

/// Hashing tokenizer: lowercase, split on non-alphanumeric runs, FNV-1a
/// hash of each token (salted by the seed) modulo the bucket count.
class Vocabulary {
 public:
  Vocabulary(std::size_t hash_buckets, std::uint64_t seed);

  std::size_t id(std::string_view lowercase_token) const;
  std::vector<std::size_t> tokenize(std::string_view text) const;

  std::size_t hash_buckets() const noexcept { return hash_buckets_; }

 private:
  std::size_t hash_buckets_;
  std::uint64_t seed_;
};

/// Stand-in for a pretrained text tower. All weights are drawn from the seed
/// at construction and never change afterwards.
class FrozenEncoderWeights {
 public:
  explicit FrozenEncoderWeights(const EncoderConfig& config = {});

  const EncoderConfig& config() const noexcept { return config_; }
  const Vocabulary& vocabulary() const noexcept { return vocabulary_; }
  /// hash_buckets x token_dim
  const Matrix& token_table() const noexcept { return token_table_; }
  /// token_dim x embed_dim
  const Matrix& projection() const noexcept { return projection_; }

  std::size_t token_dim() const noexcept { return config_.token_dim; }
  std::size_t embed_dim() const noexcept { return config_.embed_dim; }

 private:
  EncoderConfig config_;
  Vocabulary vocabulary_;
  Matrix token_table_;
  Matrix projection_;
};

/// Learnable context vectors prepended to class-name token embeddings.
/// One block of `length` rows shared by all classes, or one block per class.
class PromptContext {
 public:
  PromptContext() = default;
  PromptContext(std::size_t length, std::size_t token_dim, std::size_t groups = 1);

  /// Entries drawn uniformly from [-half_width, half_width].
  static PromptContext uniform(std::size_t length, std::size_t token_dim, std::size_t groups, double half_width,
                               std::uint64_t seed);

  std::size_t length() const noexcept { return length_; }
  std::size_t token_dim() const noexcept { return token_dim_; }
  std::size_t groups() const noexcept { return blocks_.size(); }
  bool shared() const noexcept { return blocks_.size() == 1; }

  Matrix& block(std::size_t group) { return blocks_.at(group); }
  const Matrix& block(std::size_t group) const { return blocks_.at(group); }
  const Matrix& for_class(std::size_t class_index) const { return blocks_.at(shared() ? 0 : class_index); }

  /// this <- this - step * gradient, blockwise.
  void subtract_scaled(const PromptContext& gradient, double step);

  bool operator==(const PromptContext&) const = default;

 private:
  std::size_t length_ = 0;
  std::size_t token_dim_ = 0;
  std::vector<Matrix> blocks_;
};

std::vector<std::size_t> tokenize(const Vocabulary& vocabulary, std::string_view text);

/// Mean of the token rows, projected and normalised to unit length.
std::vector<double> encode_text(const FrozenEncoderWeights& weights, std::string_view text);

/// As above with `context` rows (length x token_dim) prepended to the token
/// sequence before the mean. A zero-row context is the same as no context.
std::vector<double> encode_text(const FrozenEncoderWeights& weights, const Matrix& context, std::string_view text);

/// Gradient of dot(upstream, encode_text(weights, context, text)) with respect
/// to every context entry.
Matrix encode_text_grad(const FrozenEncoderWeights& weights, const Matrix& context, std::string_view text,
                        std::span<const double> upstream);

/// Context-free encoding of several strings, one unit row each.
EmbeddingMatrix encode_texts(const FrozenEncoderWeights& weights, std::span<const std::string> texts,
                             EmbeddingKind kind);

}  // namespace slip
