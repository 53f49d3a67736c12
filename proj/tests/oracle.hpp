#pragma once

// Scalar-loop reference implementations for tests. Nothing here calls into
// the library; inputs and outputs are plain nested vectors.

#include <cstddef>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

std::vector<double> softmax(const std::vector<double>& logits, double tau);

/// out[i][j] = softmax_j(a_i . b_j / tau)
Rows similarity(const Rows& a, const Rows& b, double tau);

/// out[n][c] = sum_k s_patch[n][k] * s_wsi[c][k]
Rows correlation(const Rows& s_patch, const Rows& s_wsi);

/// One unit row per class: normalize(sum_n S[n][c] * patch_n).
Rows slip_pool(const Rows& patches, const Rows& s_patch, const Rows& s_wsi);

std::vector<double> average(const Rows& patches);

/// One row per class: mean of the k patches with the largest dot product
/// against that class (lower index wins ties), normalised.
Rows topk(const Rows& patches, const Rows& classes, std::size_t k);

std::vector<double> zero_shot(const Rows& patches, const Rows& classes, double tau);

/// -log softmax over all C x C pairs of the (label, label) entry.
double infonce(const Rows& features, const Rows& prompts, std::size_t label, double tau,
               bool exclude_positive = false);

std::size_t classify(const Rows& features, const Rows& prompts);

/// (max_x + 1) x (max_y + 1) pixels, row-major, min-max scaled scores.
std::vector<unsigned> heatmap_pixels(const std::vector<unsigned>& xs, const std::vector<unsigned>& ys,
                                     const std::vector<double>& scores);

}  // namespace oracle
