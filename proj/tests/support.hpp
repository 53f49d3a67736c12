#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oracle.hpp"
#include "slip/embedding.hpp"
#include "slip/encoder.hpp"
#include "slip/pooling.hpp"
#include "slip/random.hpp"

namespace testing {

inline oracle::Rows rows_of(const slip::Matrix& m) {
  oracle::Rows out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

inline slip::Matrix random_unit_rows(slip::Rng& rng, std::size_t rows, std::size_t cols) {
  slip::Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (auto& x : m.row(r)) {
      x = rng.normal();
      n2 += x * x;
    }
    for (auto& x : m.row(r)) x /= std::sqrt(n2);
  }
  return m;
}

inline slip::WsiBag make_bag(slip::Matrix patches, std::size_t label = 0, std::string patient = "P0") {
  const std::size_t n = patches.rows();
  const auto width = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<slip::GridCoord> coords;
  for (std::size_t i = 0; i < n; ++i) {
    coords.push_back({static_cast<std::uint32_t>(i % width), static_cast<std::uint32_t>(i / width)});
  }
  return {slip::EmbeddingMatrix(std::move(patches), slip::EmbeddingKind::Patch), std::move(coords), label,
          std::move(patient)};
}

inline slip::TissuePromptSet raw_tissues(slip::Matrix m) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < m.rows(); ++k) names.push_back("t" + std::to_string(k));
  return {std::move(names), slip::EmbeddingMatrix(std::move(m), slip::EmbeddingKind::TissueText)};
}

inline slip::ClassPromptSet raw_classes(slip::Matrix m) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < m.rows(); ++c) names.push_back("c" + std::to_string(c));
  return {std::move(names), slip::EmbeddingMatrix(std::move(m), slip::EmbeddingKind::ClassText), false};
}

inline double max_abs_diff(const oracle::Rows& a, const oracle::Rows& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  }
  return worst;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

/// Vocabulary-sized class names that tokenize to a few words each.
inline std::vector<std::string> class_names(std::size_t c) {
  static const char* words[] = {"solid", "acinar", "papillary", "lepidic", "micropapillary", "mucinous"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < c; ++i) out.push_back(std::string(words[i % 6]) + " pattern adenocarcinoma");
  return out;
}

}  // namespace testing

namespace testing {

/// One corrupted copy of an encoded dataset. Mutations hit the fixed header
/// (magic, version, dim, bag count, class count), the first bag's patch
/// count, or cut the file short; every one of them must be rejected.
inline std::vector<std::uint8_t> corrupt_header(const std::vector<std::uint8_t>& bytes, slip::Rng& rng) {
  std::vector<std::uint8_t> out = bytes;
  switch (rng.below(3)) {
    case 0: {
      const std::size_t pos = rng.below(28);
      out[pos] ^= static_cast<std::uint8_t>(1 + rng.below(255));
      break;
    }
    case 1: {
      const std::size_t field = 8 + 4 * rng.below(5);
      const std::uint32_t v = rng.below(3) == 0 ? 0u : static_cast<std::uint32_t>(rng.next());
      for (int i = 0; i < 4; ++i) out[field + i] = static_cast<std::uint8_t>(v >> (8 * i));
      if (v == static_cast<std::uint32_t>(bytes[field] | bytes[field + 1] << 8 | bytes[field + 2] << 16 |
                                          static_cast<std::uint32_t>(bytes[field + 3]) << 24)) {
        out[field] ^= 1;
      }
      break;
    }
    default:
      out.resize(rng.below(bytes.size()));
      break;
  }
  return out;
}

}  // namespace testing
