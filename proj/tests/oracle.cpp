#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

namespace {

long double dot(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

std::vector<double> unit(const std::vector<long double>& v) {
  long double n = 0.0L;
  for (long double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i] / n);
  return out;
}

std::vector<long double> softmax_ld(const std::vector<long double>& z, long double tau) {
  long double m = z[0];
  for (long double x : z) m = std::max(m, x);
  std::vector<long double> e(z.size());
  long double total = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = std::exp((z[i] - m) / tau);
    total += e[i];
  }
  for (auto& x : e) x /= total;
  return e;
}

}  // namespace

std::vector<double> softmax(const std::vector<double>& logits, double tau) {
  std::vector<long double> z(logits.begin(), logits.end());
  auto p = softmax_ld(z, tau);
  return {p.begin(), p.end()};
}

Rows similarity(const Rows& a, const Rows& b, double tau) {
  Rows out;
  for (const auto& ra : a) {
    std::vector<long double> z;
    for (const auto& rb : b) z.push_back(dot(ra, rb));
    auto p = softmax_ld(z, tau);
    out.emplace_back(p.begin(), p.end());
  }
  return out;
}

Rows correlation(const Rows& s_patch, const Rows& s_wsi) {
  Rows out(s_patch.size(), std::vector<double>(s_wsi.size()));
  for (std::size_t n = 0; n < s_patch.size(); ++n) {
    for (std::size_t c = 0; c < s_wsi.size(); ++c) out[n][c] = static_cast<double>(dot(s_patch[n], s_wsi[c]));
  }
  return out;
}

Rows slip_pool(const Rows& patches, const Rows& s_patch, const Rows& s_wsi) {
  const std::size_t d = patches[0].size();
  Rows out;
  for (std::size_t c = 0; c < s_wsi.size(); ++c) {
    std::vector<long double> acc(d, 0.0L);
    for (std::size_t n = 0; n < patches.size(); ++n) {
      long double w = 0.0L;
      for (std::size_t k = 0; k < s_wsi[c].size(); ++k) w += static_cast<long double>(s_patch[n][k]) * s_wsi[c][k];
      for (std::size_t i = 0; i < d; ++i) acc[i] += w * patches[n][i];
    }
    out.push_back(unit(acc));
  }
  return out;
}

std::vector<double> average(const Rows& patches) {
  std::vector<long double> acc(patches[0].size(), 0.0L);
  for (const auto& p : patches) {
    for (std::size_t i = 0; i < p.size(); ++i) acc[i] += p[i];
  }
  return unit(acc);
}

Rows topk(const Rows& patches, const Rows& classes, std::size_t k) {
  Rows out;
  for (const auto& cls : classes) {
    std::vector<std::size_t> chosen;
    std::vector<bool> used(patches.size(), false);
    for (std::size_t pick = 0; pick < k; ++pick) {
      std::size_t best = patches.size();
      long double best_score = 0.0L;
      for (std::size_t n = 0; n < patches.size(); ++n) {
        if (used[n]) continue;
        const long double s = dot(patches[n], cls);
        if (best == patches.size() || s > best_score) {
          best = n;
          best_score = s;
        }
      }
      used[best] = true;
    }
    for (std::size_t n = 0; n < patches.size(); ++n) {
      if (used[n]) chosen.push_back(n);
    }
    std::vector<long double> acc(patches[0].size(), 0.0L);
    for (std::size_t n : chosen) {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += patches[n][i];
    }
    out.push_back(unit(acc));
  }
  return out;
}

std::vector<double> zero_shot(const Rows& patches, const Rows& classes, double tau) {
  std::vector<long double> acc(classes.size(), 0.0L);
  for (const auto& row : similarity(patches, classes, tau)) {
    for (std::size_t c = 0; c < row.size(); ++c) acc[c] += row[c];
  }
  std::vector<double> out(acc.size());
  for (std::size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<double>(acc[c] / patches.size());
  return out;
}

double infonce(const Rows& features, const Rows& prompts, std::size_t label, double tau, bool exclude_positive) {
  const std::size_t c_count = features.size();
  const long double positive = dot(features[label], prompts[label]) / tau;
  long double m = positive;
  std::vector<long double> z;
  for (std::size_t i = 0; i < c_count; ++i) {
    for (std::size_t j = 0; j < c_count; ++j) {
      if (exclude_positive && i == label && j == label) continue;
      z.push_back(dot(features[i], prompts[j]) / tau);
      m = std::max(m, z.back());
    }
  }
  long double total = 0.0L;
  for (long double x : z) total += std::exp(x - m);
  return static_cast<double>(m + std::log(total) - positive);
}

std::size_t classify(const Rows& features, const Rows& prompts) {
  std::size_t best = 0;
  long double best_score = dot(features[0], prompts[0]);
  for (std::size_t c = 1; c < features.size(); ++c) {
    const long double s = dot(features[c], prompts[c]);
    if (s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

std::vector<unsigned> heatmap_pixels(const std::vector<unsigned>& xs, const std::vector<unsigned>& ys,
                                     const std::vector<double>& scores) {
  const unsigned w = *std::max_element(xs.begin(), xs.end()) + 1;
  const unsigned h = *std::max_element(ys.begin(), ys.end()) + 1;
  const double lo = *std::min_element(scores.begin(), scores.end());
  const double hi = *std::max_element(scores.begin(), scores.end());
  std::vector<unsigned> px(static_cast<std::size_t>(w) * h, 0);
  for (std::size_t n = 0; n < scores.size(); ++n) {
    const double v = hi > lo ? std::round(255.0 * (scores[n] - lo) / (hi - lo)) : 255.0;
    auto& cell = px[static_cast<std::size_t>(ys[n]) * w + xs[n]];
    cell = std::max(cell, static_cast<unsigned>(v));
  }
  return px;
}

}  // namespace oracle
