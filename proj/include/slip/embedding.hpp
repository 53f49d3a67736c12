#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slip/matrix.hpp"

namespace slip {

enum class EmbeddingKind { Patch, TissueText, ClassText };

/// Rows are feature vectors (patch-major). Non-empty and finite by
/// construction.
class EmbeddingMatrix : public Matrix {
 public:
  EmbeddingMatrix(Matrix values, EmbeddingKind kind);

  EmbeddingKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return cols(); }

 private:
  EmbeddingKind kind_;
};

/// Row-wise temperature softmax output. Rows sum to one.
class SimilarityMatrix : public Matrix {
 public:
  SimilarityMatrix(Matrix values, double temperature)
      : Matrix(std::move(values)), temperature_(temperature) {}

  double temperature() const noexcept { return temperature_; }

 private:
  double temperature_;
};

struct GridCoord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;

  bool operator==(const GridCoord&) const = default;
};

/// One slide: N patch embeddings with their grid positions and a bag label.
struct WsiBag {
  EmbeddingMatrix patches;
  std::vector<GridCoord> coords;
  std::size_t label = 0;
  std::string patient_id;

  std::size_t size() const noexcept { return patches.rows(); }
  std::size_t dim() const noexcept { return patches.cols(); }

  /// Throws if coords and patches disagree or the label is out of range.
  void validate(std::size_t num_classes) const;
};

std::vector<double> l2_normalize(std::span<const double> v);

/// Divides each row by its Euclidean norm; throws ZeroVector for rows with
/// norm below 1e-12.
EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m);

/// result(i, j) = a.row(i) . b.row(j); inputs are expected to be unit rows.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

/// Row-wise softmax of logits / temperature with per-row max subtraction.
SimilarityMatrix softmax_rows(const Matrix& logits, double temperature);

/// Same normalisation for a single vector.
std::vector<double> softmax(std::span<const double> logits, double temperature);

inline constexpr double kNormFloor = 1e-12;

}  // namespace slip
