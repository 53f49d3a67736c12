#include "doctest.h"

#include <cmath>
#include <limits>

#include "slip/error.hpp"
#include "slip/evaluation.hpp"
#include "slip/synth.hpp"
#include "slip/trainer.hpp"
#include "support.hpp"

using namespace slip;
using testing::rows_of;

namespace {

const FrozenEncoderWeights& weights() {
  static const FrozenEncoderWeights w{};
  return w;
}

SlideFeature random_feature(Rng& rng, std::size_t c, std::size_t d) {
  return SlideFeature(testing::random_unit_rows(rng, c, d));
}

double loss_at(const SlideFeature& f, const std::vector<std::string>& names, const PromptContext& ctx,
               std::size_t label, double tau, bool exclude_positive = false) {
  return infonce_loss(f, ClassPromptSet::encode(weights(), names, ctx), label, tau, exclude_positive);
}

// Worst elementwise relative error of infonce_grad against central differences.
double grad_check(const SlideFeature& f, const std::vector<std::string>& names, const PromptContext& ctx,
                  std::size_t label, double tau, bool exclude_positive = false) {
  const auto classes = ClassPromptSet::encode(weights(), names, ctx);
  const PromptContext g = infonce_grad(f, classes, label, tau, weights(), ctx, exclude_positive);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t b = 0; b < ctx.groups(); ++b) {
    for (std::size_t i = 0; i < ctx.block(b).values().size(); ++i) {
      PromptContext plus = ctx, minus = ctx;
      plus.block(b).values()[i] += h;
      minus.block(b).values()[i] -= h;
      const double fd = (loss_at(f, names, plus, label, tau, exclude_positive) -
                         loss_at(f, names, minus, label, tau, exclude_positive)) /
                        (2 * h);
      worst = std::max(worst, testing::rel_err(g.block(b).values()[i], fd));
    }
  }
  return worst;
}

std::vector<WsiBag> separable_bags(Rng& rng, std::size_t per_class, const ClassPromptSet& classes) {
  std::vector<WsiBag> bags;
  for (std::size_t b = 0; b < per_class; ++b) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      Matrix p(3, classes.embeddings.cols());
      for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t i = 0; i < p.cols(); ++i) p(n, i) = classes.embeddings(c, i) + 0.05 * rng.normal();
      }
      auto bag = testing::make_bag(l2_normalize_rows(EmbeddingMatrix(p, EmbeddingKind::Patch)), c,
                                   "P" + std::to_string(bags.size()));
      bags.push_back(std::move(bag));
    }
  }
  return bags;
}

}  // namespace

TEST_CASE("infonce_loss examples") {
  Rng rng(1);
  const auto one_f = random_feature(rng, 1, 8);
  const auto one_c = testing::raw_classes(testing::random_unit_rows(rng, 1, 8));
  CHECK(infonce_loss(one_f, one_c, 0, 0.01) == 0.0);

  // Orthogonal features and prompts put every pair at z = 0.
  const SlideFeature flat(Matrix{{1, 0, 0, 0}, {0, 1, 0, 0}});
  const auto flat_c = testing::raw_classes(Matrix{{0, 0, 1, 0}, {0, 0, 0, 1}});
  CHECK(std::abs(infonce_loss(flat, flat_c, 1, 0.01) - std::log(4.0)) < 1e-12);
  CHECK(std::abs(infonce_loss(flat, flat_c, 0, 0.01) - 1.3862944) < 1e-7);

  for (int t = 0; t < 30; ++t) {
    const auto f = random_feature(rng, 3, 8);
    const auto c = testing::raw_classes(testing::random_unit_rows(rng, 3, 8));
    const std::size_t label = rng.below(3);
    const double got = infonce_loss(f, c, label, 0.01);
    CHECK(std::abs(got - oracle::infonce(rows_of(f.class_major()), rows_of(c.embeddings), label, 0.01)) < 1e-10);
    const double ex = infonce_loss(f, c, label, 0.01, true);
    CHECK(std::abs(ex - oracle::infonce(rows_of(f.class_major()), rows_of(c.embeddings), label, 0.01, true)) < 1e-10);
  }
}

TEST_CASE("infonce_loss errors") {
  Rng rng(2);
  const auto f = random_feature(rng, 2, 4);
  const auto c = testing::raw_classes(testing::random_unit_rows(rng, 2, 4));
  try {
    infonce_loss(f, c, 2, 0.01);
    FAIL("expected LabelOutOfRange");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::LabelOutOfRange);
  }
  CHECK_THROWS_AS(infonce_loss(f, c, 0, 0.0), Error);
  CHECK_THROWS_AS(infonce_loss(random_feature(rng, 3, 4), c, 0, 0.1), Error);
}

TEST_CASE("infonce_loss bounds") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = 1 + rng.below(4);
    const auto f = random_feature(rng, c, 6);
    const auto cls = testing::raw_classes(testing::random_unit_rows(rng, c, 6));
    const double tau = t % 2 ? 0.01 : 0.5;
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double z = dot(f.column(i), cls.embeddings.row(j));
        lo = std::min(lo, z);
        hi = std::max(hi, z);
      }
    }
    const double loss = infonce_loss(f, cls, rng.below(c), tau);
    CHECK(loss >= 0.0);
    CHECK(loss <= std::log(static_cast<double>(c * c)) + (hi - lo) / tau + 1e-9);
  }
}

TEST_CASE("infonce_grad is zero for a single class") {
  Rng rng(4);
  const auto ctx = PromptContext::uniform(4, weights().token_dim(), 1, 0.01, 5);
  const std::vector<std::string> names = {"solid pattern"};
  const auto g = infonce_grad(random_feature(rng, 1, 32), ClassPromptSet::encode(weights(), names, ctx), 0, 0.01,
                              weights(), ctx);
  for (double x : g.block(0).values()) CHECK(x == 0.0);
}

TEST_CASE("infonce_grad matches central finite differences") {
  Rng rng(5);
  for (int draw = 0; draw < 25; ++draw) {
    const std::size_t c = 2 + rng.below(3);
    const auto ctx = PromptContext::uniform(1 + rng.below(4), weights().token_dim(), 1, 0.05, rng.next());
    const auto f = random_feature(rng, c, 32);
    const auto names = testing::class_names(c);
    const std::size_t label = rng.below(c);
    CHECK(grad_check(f, names, ctx, label, 0.01) < 1e-5);
    CHECK(grad_check(f, names, ctx, label, 0.02) < 1e-5);
    if (draw % 3 == 0) CHECK(grad_check(f, names, ctx, label, 0.1, true) < 1e-5);
  }
}

TEST_CASE("per-class context gradients match finite differences to their resolution") {
  // Tolerance includes central-difference roundoff, eps * (|L| + 1) / h.
  Rng rng(9);
  const double h = 1e-6;
  for (int draw = 0; draw < 25; ++draw) {
    const std::size_t c = 2 + rng.below(3);
    const auto names = testing::class_names(c);
    const auto ctx = PromptContext::uniform(1 + rng.below(4), weights().token_dim(), c, 0.05, rng.next());
    const auto f = random_feature(rng, c, 32);
    const std::size_t label = rng.below(c);
    const double tau = draw % 2 ? 0.01 : 0.1;
    const auto classes = ClassPromptSet::encode(weights(), names, ctx);
    const PromptContext g = infonce_grad(f, classes, label, tau, weights(), ctx);
    const double noise = 4.0 * std::numeric_limits<double>::epsilon() *
                         (std::abs(infonce_loss(f, classes, label, tau)) + 1.0) / h;
    for (std::size_t b = 0; b < c; ++b) {
      for (std::size_t i = 0; i < ctx.block(b).values().size(); ++i) {
        PromptContext plus = ctx, minus = ctx;
        plus.block(b).values()[i] += h;
        minus.block(b).values()[i] -= h;
        const double fd = (loss_at(f, names, plus, label, tau) - loss_at(f, names, minus, label, tau)) / (2 * h);
        const double a = g.block(b).values()[i];
        CHECK(std::abs(a - fd) <= 1e-5 * std::max(std::abs(a), std::abs(fd)) + noise);
      }
    }
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK(cfg.temperature == 0.01);
  CHECK(cfg.learning_rate == 2e-4);
  CHECK(cfg.epochs == 50);
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 2;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.shots = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("train_prompts errors") {
  Rng rng(6);
  const auto raw = ClassPromptSet::encode(weights(), testing::class_names(3));
  const auto tissues = TissuePromptSet::encode(weights(), {"fibrous stroma", "mucin pools"});
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train_prompts({}, tissues, raw.class_names, weights(), cfg);
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDataset);
  }
  auto bags = separable_bags(rng, 1, raw);
  bags.pop_back();
  try {
    train_prompts(bags, tissues, raw.class_names, weights(), cfg);
    FAIL("expected MissingClass");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingClass);
  }
}

TEST_CASE("train_prompts step accounting and no-op learning rate") {
  Rng rng(7);
  const auto tissues = TissuePromptSet::encode(weights(), {"fibrous stroma", "mucin pools", "necrosis"});

  const auto one = ClassPromptSet::encode(weights(), {"solid pattern"});
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto bags1 = separable_bags(rng, 1, one);
  const auto h1 = train_prompts(bags1, tissues, one.class_names, weights(), cfg);
  CHECK(h1.steps.size() == 1);

  const auto raw = ClassPromptSet::encode(weights(), testing::class_names(3));
  const auto bags = separable_bags(rng, 2, raw);
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  const auto h0 = train_prompts(bags, tissues, raw.class_names, weights(), cfg);
  CHECK(h0.final_context == h0.initial_context);
  CHECK(h0.steps.size() == 3 * bags.size());
  for (const auto& s : h0.steps) CHECK(std::isfinite(s.loss));

  cfg.learning_rate = 2e-4;
  const auto a = train_prompts(bags, tissues, raw.class_names, weights(), cfg);
  const auto b = train_prompts(bags, tissues, raw.class_names, weights(), cfg);
  CHECK(a.steps == b.steps);
  CHECK(a.final_context == b.final_context);
  CHECK_FALSE(a.final_context == a.initial_context);
  CHECK(a.initial_context == h0.initial_context);

  // Every epoch visits every bag once.
  for (std::size_t e = 0; e < 3; ++e) {
    std::vector<int> seen(bags.size(), 0);
    for (std::size_t i = 0; i < bags.size(); ++i) {
      const auto& s = a.steps[e * bags.size() + i];
      CHECK(s.epoch == e);
      ++seen[s.bag];
    }
    for (int v : seen) CHECK(v == 1);
  }

  cfg.per_class_context = true;
  const auto pc = train_prompts(bags, tissues, raw.class_names, weights(), cfg);
  CHECK(pc.final_context.groups() == 3);
}

TEST_CASE("a tiny SGD step never increases the loss of its bag") {
  Rng rng(8);
  for (int draw = 0; draw < 25; ++draw) {
    const std::size_t c = 2 + rng.below(3);
    const auto names = testing::class_names(c);
    const auto ctx = PromptContext::uniform(4, weights().token_dim(), 1, 0.01, rng.next());
    const auto f = random_feature(rng, c, 32);
    const std::size_t label = rng.below(c);
    const auto classes = ClassPromptSet::encode(weights(), names, ctx);
    const double before = infonce_loss(f, classes, label, 0.01);
    PromptContext next = ctx;
    next.subtract_scaled(infonce_grad(f, classes, label, 0.01, weights(), ctx), 1e-8);
    CHECK(loss_at(f, names, next, label, 0.01) <= before + 1e-12);
  }
}

TEST_CASE("training reaches full accuracy on separable-easy") {
  const auto spec = *synth_preset("separable-easy");
  const FrozenEncoderWeights w({4096, 16, spec.dim, 42});
  const auto world = generate(spec, w);
  const auto tissues = TissuePromptSet::encode(w, world.tissue_descriptions);
  TrainConfig cfg;
  cfg.seed = 3;
  const auto history = train_prompts(world.bags, tissues, world.class_names, w, cfg);
  CHECK(history.steps.size() == cfg.epochs * world.bags.size());
  const PooledPredictor predictor(make_pooler(cfg, tissues, world.class_names, w),
                                  ClassPromptSet::encode(w, world.class_names, history.final_context));
  std::vector<std::size_t> all(world.bags.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CHECK(evaluate(world.bags, all, predictor, spec.num_classes).class_averaged_accuracy == 1.0);
}
