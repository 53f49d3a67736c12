#include "slip/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "slip/error.hpp"

namespace slip {

EmbeddingMatrix::EmbeddingMatrix(Matrix values, EmbeddingKind kind) : Matrix(std::move(values)), kind_(kind) {
  if (rows() == 0 || cols() == 0) {
    throw Error(ErrorKind::InvalidArgument, "embedding matrix needs at least one row and one column");
  }
  if (!all_finite()) throw Error(ErrorKind::NonFinite, "embedding matrix has non-finite entries");
}

void WsiBag::validate(std::size_t num_classes) const {
  if (coords.size() != patches.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "bag has " + std::to_string(patches.rows()) + " patches but " +
                                                  std::to_string(coords.size()) + " coordinates");
  }
  if (label >= num_classes) {
    throw Error(ErrorKind::LabelOutOfRange,
                "bag label " + std::to_string(label) + " >= class count " + std::to_string(num_classes));
  }
}

std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n >= kNormFloor)) throw Error(ErrorKind::ZeroVector, "vector norm below 1e-12");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = l2_norm(m.row(r));
    if (!(n >= kNormFloor)) throw Error(ErrorKind::ZeroVector, "row " + std::to_string(r) + " has norm below 1e-12");
    auto dst = out.row(r);
    auto src = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = src[c] / n;
  }
  return EmbeddingMatrix(std::move(out), m.kind());
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorKind::DimensionMismatch,
                "cosine of " + std::to_string(a.cols()) + "-dim and " + std::to_string(b.cols()) + "-dim rows");
  }
  return matmul_transposed(a, b);
}

namespace {

void softmax_into(std::span<const double> logits, double temperature, std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp((logits[j] - peak) / temperature);
    total += out[j];
  }
  for (double& v : out) v /= total;
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::NonPositiveTemperature, "temperature must be a positive finite number");
  }
}

}  // namespace

SimilarityMatrix softmax_rows(const Matrix& logits, double temperature) {
  check_temperature(temperature);
  if (!logits.all_finite()) throw Error(ErrorKind::NonFinite, "softmax logits must be finite");
  Matrix out(logits.rows(), logits.cols());
  if (logits.cols() > 0) {
    for (std::size_t r = 0; r < logits.rows(); ++r) softmax_into(logits.row(r), temperature, out.row(r));
  }
  return SimilarityMatrix(std::move(out), temperature);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  check_temperature(temperature);
  std::vector<double> out(logits.size());
  if (!logits.empty()) softmax_into(logits, temperature, out);
  return out;
}

}  // namespace slip
