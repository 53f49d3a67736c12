#include "slip/encoder.hpp"

#include <cctype>
#include <cmath>

#include "slip/error.hpp"
#include "slip/random.hpp"

namespace slip {

Vocabulary::Vocabulary(std::size_t hash_buckets, std::uint64_t seed) : hash_buckets_(hash_buckets), seed_(seed) {
  if (hash_buckets_ == 0) throw Error(ErrorKind::InvalidArgument, "vocabulary needs at least one hash bucket");
}

std::size_t Vocabulary::id(std::string_view lowercase_token) const {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix_seed(seed_, 0);
  for (unsigned char ch : lowercase_token) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(mix_seed(h, 1) % hash_buckets_);
}

std::vector<std::size_t> Vocabulary::tokenize(std::string_view text) const {
  std::vector<std::size_t> ids;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      ids.push_back(id(token));
      token.clear();
    }
  };
  for (unsigned char ch : text) {
    // Bytes >= 0x80 are kept so UTF-8 words stay intact.
    if (std::isalnum(ch) || ch >= 0x80) {
      token.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      flush();
    }
  }
  flush();
  return ids;
}

std::vector<std::size_t> tokenize(const Vocabulary& vocabulary, std::string_view text) {
  return vocabulary.tokenize(text);
}

FrozenEncoderWeights::FrozenEncoderWeights(const EncoderConfig& config)
    : config_(config), vocabulary_(config.hash_buckets, config.seed) {
  if (config.token_dim == 0 || config.embed_dim == 0) {
    throw Error(ErrorKind::InvalidArgument, "encoder dimensions must be positive");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.token_dim));
  Rng table_rng(mix_seed(config.seed, 11));
  token_table_ = Matrix(config.hash_buckets, config.token_dim);
  for (double& v : token_table_.values()) v = table_rng.uniform(-bound, bound);
  Rng projection_rng(mix_seed(config.seed, 12));
  projection_ = Matrix(config.token_dim, config.embed_dim);
  for (double& v : projection_.values()) v = projection_rng.uniform(-bound, bound);
}

PromptContext::PromptContext(std::size_t length, std::size_t token_dim, std::size_t groups)
    : length_(length), token_dim_(token_dim), blocks_(groups, Matrix(length, token_dim)) {
  if (groups == 0) throw Error(ErrorKind::InvalidArgument, "prompt context needs at least one group");
}

PromptContext PromptContext::uniform(std::size_t length, std::size_t token_dim, std::size_t groups,
                                     double half_width, std::uint64_t seed) {
  PromptContext ctx(length, token_dim, groups);
  Rng rng(seed);
  for (auto& block : ctx.blocks_) {
    for (double& v : block.values()) v = rng.uniform(-half_width, half_width);
  }
  return ctx;
}

void PromptContext::subtract_scaled(const PromptContext& gradient, double step) {
  if (gradient.groups() != groups() || gradient.length() != length() || gradient.token_dim() != token_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient shape differs from context shape");
  }
  for (std::size_t g = 0; g < blocks_.size(); ++g) {
    auto dst = blocks_[g].values();
    auto src = gradient.blocks_[g].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= step * src[i];
  }
}

namespace {

struct Forward {
  std::size_t sequence_length = 0;
  std::vector<double> projected;  // e, before normalisation
  double norm = 0.0;
};

Forward forward(const FrozenEncoderWeights& weights, const Matrix& context, std::string_view text) {
  const std::size_t dt = weights.token_dim();
  if (context.rows() > 0 && context.cols() != dt) {
    throw Error(ErrorKind::DimensionMismatch, "context width differs from token dimension");
  }
  const auto ids = weights.vocabulary().tokenize(text);
  Forward fw;
  fw.sequence_length = context.rows() + ids.size();
  if (fw.sequence_length == 0) throw Error(ErrorKind::EmptySequence, "no context and no tokens in '" + std::string(text) + "'");

  std::vector<double> mean(dt, 0.0);
  for (std::size_t r = 0; r < context.rows(); ++r) {
    auto row = context.row(r);
    for (std::size_t k = 0; k < dt; ++k) mean[k] += row[k];
  }
  for (std::size_t id : ids) {
    auto row = weights.token_table().row(id);
    for (std::size_t k = 0; k < dt; ++k) mean[k] += row[k];
  }
  const double inv_len = 1.0 / static_cast<double>(fw.sequence_length);
  for (double& v : mean) v *= inv_len;

  const Matrix& proj = weights.projection();
  fw.projected.assign(weights.embed_dim(), 0.0);
  for (std::size_t k = 0; k < dt; ++k) {
    auto prow = proj.row(k);
    for (std::size_t j = 0; j < fw.projected.size(); ++j) fw.projected[j] += mean[k] * prow[j];
  }
  fw.norm = l2_norm(fw.projected);
  if (!(fw.norm >= kNormFloor)) throw Error(ErrorKind::ZeroVector, "projected text embedding has zero norm");
  return fw;
}

}  // namespace

std::vector<double> encode_text(const FrozenEncoderWeights& weights, std::string_view text) {
  return encode_text(weights, Matrix(0, weights.token_dim()), text);
}

std::vector<double> encode_text(const FrozenEncoderWeights& weights, const Matrix& context, std::string_view text) {
  Forward fw = forward(weights, context, text);
  for (double& v : fw.projected) v /= fw.norm;
  return std::move(fw.projected);
}

Matrix encode_text_grad(const FrozenEncoderWeights& weights, const Matrix& context, std::string_view text,
                        std::span<const double> upstream) {
  const Forward fw = forward(weights, context, text);
  if (upstream.size() != weights.embed_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "upstream gradient length differs from embedding dimension");
  }
  // d(u . e/|e|)/de = (u - (u . o) o) / |e| with o = e/|e|.
  std::vector<double> unit(fw.projected);
  for (double& v : unit) v /= fw.norm;
  const double along = dot(upstream, unit);
  std::vector<double> grad_e(unit.size());
  for (std::size_t j = 0; j < unit.size(); ++j) grad_e[j] = (upstream[j] - along * unit[j]) / fw.norm;

  // Back through the projection, then the mean: each sequence row gets 1/L.
  const Matrix& proj = weights.projection();
  const double inv_len = 1.0 / static_cast<double>(fw.sequence_length);
  std::vector<double> grad_row(weights.token_dim());
  for (std::size_t k = 0; k < grad_row.size(); ++k) grad_row[k] = dot(proj.row(k), grad_e) * inv_len;

  Matrix grad(context.rows(), context.cols());
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    auto dst = grad.row(r);
    std::copy(grad_row.begin(), grad_row.end(), dst.begin());
  }
  return grad;
}

EmbeddingMatrix encode_texts(const FrozenEncoderWeights& weights, std::span<const std::string> texts,
                             EmbeddingKind kind) {
  Matrix out(texts.size(), weights.embed_dim());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto e = encode_text(weights, texts[i]);
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return EmbeddingMatrix(std::move(out), kind);
}

}  // namespace slip
