#include "doctest.h"

#include <cmath>
#include <set>

#include "slip/error.hpp"
#include "slip/synth.hpp"
#include "support.hpp"

using namespace slip;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.num_classes = 3;
  s.num_tissues = 5;
  s.min_patches = 3;
  s.max_patches = 7;
  s.bags_per_class = 4;
  s.signal_fraction = 0.5;
  s.noise_sigma = 0.1;
  s.dim = 32;
  s.seed = 19;
  return s;
}

const FrozenEncoderWeights& weights() {
  static const FrozenEncoderWeights w{};
  return w;
}

}  // namespace

TEST_CASE("pure signal without noise copies the class archetype") {
  auto spec = small_spec();
  spec.signal_fraction = 1.0;
  spec.noise_sigma = 0.0;
  const auto world = generate(spec, weights());
  for (const auto& bag : world.bags) {
    const auto arch = world.archetypes.row(world.informative_tissue[bag.label]);
    for (std::size_t n = 0; n < bag.size(); ++n) {
      const auto row = bag.patches.row(n);
      CHECK(std::equal(row.begin(), row.end(), arch.begin()));
    }
  }
}

TEST_CASE("single-patch bags") {
  auto spec = small_spec();
  spec.bags_per_class = 1;
  spec.min_patches = spec.max_patches = 1;
  const auto world = generate(spec, weights());
  REQUIRE(world.bags.size() == spec.num_classes);
  std::set<std::size_t> labels;
  for (const auto& b : world.bags) {
    CHECK(b.size() == 1);
    labels.insert(b.label);
  }
  CHECK(labels.size() == spec.num_classes);
}

TEST_CASE("generated worlds satisfy their structural guarantees") {
  for (const auto& name : synth_preset_names()) {
    const auto spec = *synth_preset(name);
    const auto world = generate(spec, weights());
    CHECK(world.bags.size() == spec.num_classes * spec.bags_per_class);
    CHECK(world.class_names.size() == spec.num_classes);
    CHECK(world.tissue_descriptions.size() == spec.num_tissues);
    CHECK(world.archetypes.rows() == spec.num_tissues);

    for (std::size_t a = 0; a < spec.num_tissues; ++a) {
      const auto enc = encode_text(weights(), world.tissue_descriptions[a]);
      CHECK(std::equal(enc.begin(), enc.end(), world.archetypes.row(a).begin()));
      for (std::size_t b = a + 1; b < spec.num_tissues; ++b) {
        CHECK(dot(world.archetypes.row(a), world.archetypes.row(b)) < kArchetypeMaxCosine);
      }
    }
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      const auto cls = encode_text(weights(), world.class_names[c]);
      const double own = dot(cls, world.archetypes.row(world.informative_tissue[c]));
      for (std::size_t k = 0; k < spec.num_tissues; ++k) {
        if (k != world.informative_tissue[c]) CHECK(own >= dot(cls, world.archetypes.row(k)) + kClassTissueMargin);
      }
    }
    for (const auto& bag : world.bags) {
      CHECK(bag.size() >= spec.min_patches);
      CHECK(bag.size() <= spec.max_patches);
      CHECK_NOTHROW(bag.validate(spec.num_classes));
      for (std::size_t n = 0; n < bag.size(); ++n) CHECK(std::abs(l2_norm(bag.patches.row(n)) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("generation is bitwise deterministic") {
  const auto a = generate(small_spec(), weights());
  const auto b = generate(small_spec(), weights());
  REQUIRE(a.bags.size() == b.bags.size());
  for (std::size_t i = 0; i < a.bags.size(); ++i) {
    CHECK(a.bags[i].patches == b.bags[i].patches);
    CHECK(a.bags[i].coords == b.bags[i].coords);
    CHECK(a.bags[i].label == b.bags[i].label);
    CHECK(a.bags[i].patient_id == b.bags[i].patient_id);
  }
  CHECK(a.tissue_descriptions == b.tissue_descriptions);
  auto other = small_spec();
  other.seed = 20;
  CHECK_FALSE(generate(other, weights()).bags[0].patches == a.bags[0].patches);
}

TEST_CASE("presets") {
  const auto easy = *synth_preset("separable-easy");
  CHECK(easy.num_classes == 3);
  CHECK(easy.num_tissues == 3);
  CHECK(easy.signal_fraction == 0.9);
  CHECK(easy.noise_sigma == 0.05);
  CHECK(easy.seed == 3);
  const auto needle = *synth_preset("needle");
  CHECK(needle.signal_fraction == 0.1);
  CHECK(needle.num_classes == 3);
  CHECK(needle.bags_per_class == 20);
  CHECK_FALSE(synth_preset("hard").has_value());
}

TEST_CASE("average pooling separates separable-easy when prompts are the archetypes") {
  const auto world = generate(*synth_preset("separable-easy"), weights());
  std::size_t correct = 0;
  for (const auto& bag : world.bags) {
    const auto avg = pool_average(bag);
    std::vector<double> scores;
    for (std::size_t c = 0; c < world.class_names.size(); ++c) {
      scores.push_back(dot(avg, world.archetypes.row(world.informative_tissue[c])));
    }
    correct += static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin()) == bag.label;
  }
  CHECK(static_cast<double>(correct) / world.bags.size() >= 0.9);
}

TEST_CASE("signal patch counts") {
  CHECK(signal_patch_count(0.1, 10) == 1);
  CHECK(signal_patch_count(0.1, 20) == 2);
  CHECK(signal_patch_count(0.1, 3) == 1);
  CHECK(signal_patch_count(0.9, 9) == 9);
  CHECK(signal_patch_count(0.5, 7) == 4);
  CHECK(signal_patch_count(1.0, 5) == 5);
}

TEST_CASE("spec validation and rejection failure") {
  auto bad = small_spec();
  bad.signal_fraction = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = small_spec();
  bad.min_patches = 8;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = small_spec();
  bad.num_tissues = 2;
  CHECK_THROWS_AS(bad.validate(), Error);

  auto crowded = small_spec();
  crowded.dim = 4;
  crowded.num_tissues = 40;
  try {
    generate(crowded, FrozenEncoderWeights({4096, 16, 4, 42}));
    FAIL("expected RejectionExhausted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RejectionExhausted);
  }
  CHECK_THROWS_AS(generate(small_spec(), FrozenEncoderWeights({4096, 16, 8, 42})), Error);
}
