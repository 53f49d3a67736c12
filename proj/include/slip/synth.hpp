#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slip/embedding.hpp"
#include "slip/encoder.hpp"

namespace slip {

/// Parameters of a synthetic world with planted tissue structure.
struct SynthSpec {
  std::size_t num_classes = 3;
  std::size_t num_tissues = 3;
  std::size_t min_patches = 6;
  std::size_t max_patches = 12;
  std::size_t bags_per_class = 10;
  /// Fraction of each bag drawn near the class-informative archetype.
  double signal_fraction = 0.9;
  double noise_sigma = 0.05;
  std::size_t dim = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Named presets: "separable-easy" and "needle". Presets carry their seed.
std::optional<SynthSpec> synth_preset(std::string_view name);
std::vector<std::string> synth_preset_names();

struct SyntheticWorld {
  SynthSpec spec;
  std::vector<WsiBag> bags;
  std::vector<std::string> class_names;
  /// Tissue descriptions; the first num_classes are the informative ones.
  std::vector<std::string> tissue_descriptions;
  /// Unit archetypes, one per tissue: the encoded tissue descriptions.
  EmbeddingMatrix archetypes;
  /// informative_tissue[c] = index of class c's planted tissue.
  std::vector<std::size_t> informative_tissue;
};

inline constexpr double kArchetypeMaxCosine = 0.3;
/// Every class name is closer to its own tissue than to any other by this much.
inline constexpr double kClassTissueMargin = 0.1;

/// Deterministic given (spec, encoder weights). Throws RejectionExhausted if
/// the separation constraints cannot be met.
SyntheticWorld generate(const SynthSpec& spec, const FrozenEncoderWeights& weights);

/// Number of patches near the class archetype in a bag of n patches.
std::size_t signal_patch_count(double signal_fraction, std::size_t n);

}  // namespace slip
