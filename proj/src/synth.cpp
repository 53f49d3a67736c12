#include "slip/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "slip/error.hpp"
#include "slip/random.hpp"

namespace slip {

namespace {

constexpr std::array<std::string_view, 8> kClassWords = {
    "lepidic", "acinar", "solid", "papillary", "micropapillary", "mucinous", "signet", "tubular"};

constexpr std::array<std::string_view, 80> kFillerWords = {
    "glandular",  "nuclei",      "stroma",      "necrosis",    "fibrosis",    "mitotic",     "pleomorphic",
    "crowded",    "hyperchromatic", "vesicular", "nucleoli",   "cytoplasm",   "eosinophilic", "basophilic",
    "mucin",      "vacuoles",    "lumen",       "cribriform",  "trabecular",  "sheets",      "nests",
    "cords",      "infiltrative", "desmoplastic", "lymphocytes", "plasma",    "neutrophils", "macrophages",
    "hemorrhage", "edema",       "capillaries", "vessels",     "muscularis",  "submucosa",   "mucosa",
    "foveolar",   "parietal",    "chief",       "goblet",      "metaplasia",  "dysplasia",   "atypia",
    "keratin",    "squamous",    "columnar",    "cuboidal",    "alveolar",    "septa",       "pneumocytes",
    "bronchiolar", "cartilage",  "adipose",     "serosa",      "ulceration",  "granulation", "calcification",
    "psammoma",   "fibrin",      "collagen",    "elastic",     "spindle",     "polygonal",   "discohesive",
    "solitary",   "clustered",   "budding",     "perineural",  "lymphatic",   "invasion",    "margin",
    "ductal",     "villous",     "serrated",    "cystic",      "papillae",    "fronds",      "nuclear",
    "chromatin",  "apoptotic",   "inflamed"};

std::string class_name(std::size_t c) {
  if (c < kClassWords.size()) return std::string(kClassWords[c]);
  return "subtype" + std::to_string(c);
}

std::string filler_word(std::size_t i) {
  if (i < kFillerWords.size()) return std::string(kFillerWords[i]);
  return "morphology" + std::to_string(i);
}

constexpr std::size_t kFillersPerTissue = 3;
constexpr std::size_t kAttemptsPerTissue = 2000;

}  // namespace

void SynthSpec::validate() const {
  if (num_classes == 0 || num_tissues == 0 || min_patches == 0 || bags_per_class == 0 || dim == 0) {
    throw Error(ErrorKind::InvalidArgument, "synthetic spec counts must all be at least 1");
  }
  if (min_patches > max_patches) throw Error(ErrorKind::InvalidArgument, "min_patches exceeds max_patches");
  if (!(signal_fraction > 0.0 && signal_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "signal_fraction must lie in (0, 1]");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorKind::InvalidArgument, "noise_sigma must be finite and non-negative");
  }
  if (num_tissues < num_classes) {
    throw Error(ErrorKind::InvalidArgument, "need at least one tissue archetype per class");
  }
}

std::optional<SynthSpec> synth_preset(std::string_view name) {
  if (name == "separable-easy") {
    return SynthSpec{.num_classes = 3,
                     .num_tissues = 3,
                     .min_patches = 4,
                     .max_patches = 9,
                     .bags_per_class = 10,
                     .signal_fraction = 0.9,
                     .noise_sigma = 0.05,
                     .dim = 32,
                     .seed = 3};
  }
  if (name == "needle") {
    return SynthSpec{.num_classes = 3,
                     .num_tissues = 8,
                     .min_patches = 10,
                     .max_patches = 20,
                     .bags_per_class = 20,
                     .signal_fraction = 0.1,
                     .noise_sigma = 0.05,
                     .dim = 32,
                     .seed = 11};
  }
  return std::nullopt;
}

std::vector<std::string> synth_preset_names() { return {"separable-easy", "needle"}; }

std::size_t signal_patch_count(double signal_fraction, std::size_t n) {
  const auto raw = static_cast<std::size_t>(std::ceil(signal_fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(raw, 1, n);
}

SyntheticWorld generate(const SynthSpec& spec, const FrozenEncoderWeights& weights) {
  spec.validate();
  if (spec.dim != weights.embed_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "spec dimension " + std::to_string(spec.dim) +
                                                  " differs from encoder dimension " +
                                                  std::to_string(weights.embed_dim()));
  }
  const std::size_t C = spec.num_classes;
  const std::size_t K = spec.num_tissues;

  SyntheticWorld world{spec, {}, {}, {}, EmbeddingMatrix(Matrix(1, 1, 1.0), EmbeddingKind::TissueText), {}};
  std::vector<std::vector<double>> class_emb;
  for (std::size_t c = 0; c < C; ++c) {
    world.class_names.push_back(class_name(c));
    class_emb.push_back(encode_text(weights, world.class_names.back()));
  }

  // Tissue k < C is informative for class k. Descriptions are drawn until the
  // archetypes are well separated and every class prefers its own tissue.
  Rng text_rng(mix_seed(spec.seed, 100));
  std::vector<bool> used(std::max<std::size_t>(kFillerWords.size(), K * kFillersPerTissue * 2), false);
  std::vector<std::vector<double>> tissue_emb;
  for (std::size_t k = 0; k < K; ++k) {
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < kAttemptsPerTissue && !accepted; ++attempt) {
      std::vector<std::size_t> free_words;
      for (std::size_t w = 0; w < used.size(); ++w) {
        if (!used[w]) free_words.push_back(w);
      }
      if (free_words.size() < kFillersPerTissue) break;
      std::vector<std::size_t> picks;
      for (std::size_t i = 0; i < kFillersPerTissue; ++i) {
        std::swap(free_words[i], free_words[i + text_rng.below(free_words.size() - i)]);
        picks.push_back(free_words[i]);
      }
      std::string text = k < C ? world.class_names[k] : std::string();
      for (std::size_t w : picks) text += (text.empty() ? "" : " ") + filler_word(w);
      const auto emb = encode_text(weights, text);

      bool ok = true;
      for (const auto& prev : tissue_emb) ok = ok && dot(prev, emb) < kArchetypeMaxCosine;
      for (std::size_t c = 0; ok && c < C; ++c) {
        if (c < k) {
          ok = dot(class_emb[c], emb) + kClassTissueMargin <= dot(class_emb[c], tissue_emb[c]);
        } else if (c == k) {
          const double own = dot(class_emb[c], emb);
          for (const auto& prev : tissue_emb) ok = ok && dot(class_emb[c], prev) + kClassTissueMargin <= own;
        }
      }
      if (!ok) continue;
      for (std::size_t w : picks) used[w] = true;
      world.tissue_descriptions.push_back(std::move(text));
      tissue_emb.push_back(emb);
      accepted = true;
    }
    if (!accepted) {
      throw Error(ErrorKind::RejectionExhausted, "could not place tissue archetype " + std::to_string(k) + " of " +
                                                     std::to_string(K) + " in dimension " +
                                                     std::to_string(spec.dim));
    }
  }
  Matrix archetypes(K, spec.dim);
  for (std::size_t k = 0; k < K; ++k) std::copy(tissue_emb[k].begin(), tissue_emb[k].end(), archetypes.row(k).begin());
  world.archetypes = EmbeddingMatrix(std::move(archetypes), EmbeddingKind::TissueText);
  world.informative_tissue.resize(C);
  std::iota(world.informative_tissue.begin(), world.informative_tissue.end(), std::size_t{0});

  Rng bag_rng(mix_seed(spec.seed, 200));
  const std::size_t span = spec.max_patches - spec.min_patches + 1;
  for (std::size_t b = 0; b < spec.bags_per_class; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      // Background comes from archetypes no class owns, when there are any.
      std::vector<std::size_t> background;
      for (std::size_t k = 0; k < K; ++k) {
        const bool informative = k < C;
        if (K > C ? !informative : k != c) background.push_back(k);
      }

      const std::size_t n = spec.min_patches + bag_rng.below(span);
      const std::size_t n_signal = signal_patch_count(spec.signal_fraction, n);
      std::vector<std::size_t> source(n, c);
      for (std::size_t i = n_signal; i < n; ++i) {
        source[i] = background.empty() ? c : background[bag_rng.below(background.size())];
      }
      for (std::size_t i = n; i > 1; --i) std::swap(source[i - 1], source[bag_rng.below(i)]);

      Matrix patches(n, spec.dim);
      for (std::size_t i = 0; i < n; ++i) {
        auto dst = patches.row(i);
        auto arch = world.archetypes.row(source[i]);
        if (spec.noise_sigma == 0.0) {
          std::copy(arch.begin(), arch.end(), dst.begin());
          continue;
        }
        for (std::size_t d = 0; d < spec.dim; ++d) dst[d] = arch[d] + spec.noise_sigma * bag_rng.normal();
        const auto unit = l2_normalize(dst);
        std::copy(unit.begin(), unit.end(), dst.begin());
      }

      const auto width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
      std::vector<GridCoord> coords(n);
      for (std::size_t i = 0; i < n; ++i) {
        coords[i] = {static_cast<std::uint32_t>(i % width), static_cast<std::uint32_t>(i / width)};
      }
      const std::size_t index = world.bags.size();
      char pid[32];
      std::snprintf(pid, sizeof pid, "P%04zu", index);
      world.bags.push_back(WsiBag{EmbeddingMatrix(std::move(patches), EmbeddingKind::Patch), std::move(coords), c, pid});
    }
  }
  return world;
}

}  // namespace slip
