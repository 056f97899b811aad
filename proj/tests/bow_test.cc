#include <gtest/gtest.h>

#include <cmath>

#include "cga/bow.h"
#include "cga/error.h"
#include "cga/random.h"
#include "cga/synthetic.h"
#include "test_util.h"

namespace cga {
namespace {

using testing::make_conversation;

// Loss written out directly from the definition, independent of bow.cc.
double reference_loss(const std::vector<double>& w, const BowExample& ex) {
  double z = w.back();
  for (const auto& [i, v] : ex.features) z += w[i] * v;
  const double p = 1.0 / (1.0 + std::exp(-z));
  return -(ex.target * std::log(p) + (1.0 - ex.target) * std::log(1.0 - p));
}

BowExample random_example(Rng& rng, std::size_t dim) {
  BowExample ex;
  for (std::size_t i = 0; i + 1 < dim; ++i) {
    if (rng.bernoulli(0.5)) ex.features.emplace_back(i, static_cast<double>(rng.between(1, 3)));
  }
  ex.target = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return ex;
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_NEAR(sigmoid(2.0) + sigmoid(-2.0), 1.0, 1e-15);
}

TEST(BowGradient, ZeroWeightsUnitVector) {
  const std::vector<double> w(4, 0.0);
  const BowExample ex{{{1, 1.0}}, 1.0};
  const std::vector<double> g = bow_gradient(w, ex);
  EXPECT_EQ(g, (std::vector<double>{0.0, -0.5, 0.0, -0.5}));
}

TEST(BowGradient, FirstStepIsHalfFeaturesAtZero) {
  const std::vector<double> w(5, 0.0);
  const BowExample ex{{{0, 2.0}, {3, 1.0}}, 1.0};
  const std::vector<double> g = bow_gradient(w, ex);
  EXPECT_EQ(g, (std::vector<double>{-1.0, 0.0, 0.0, -0.5, -0.5}));
}

TEST(BowGradient, StationaryWhenTargetEqualsPrediction) {
  const std::vector<double> w = {0.3, -1.2, 0.4};
  BowExample ex{{{0, 1.0}, {1, 2.0}}, 0.0};
  ex.target = sigmoid(logit(w, ex.features));
  for (double gi : bow_gradient(w, ex)) EXPECT_EQ(gi, 0.0);
}

TEST(BowGradient, DimensionMismatch) {
  const std::vector<double> w(3, 0.0);
  EXPECT_THROW(bow_gradient(w, BowExample{{{5, 1.0}}, 1.0}), ValidationError);
}

TEST(BowGradient, MatchesCentralDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = static_cast<std::size_t>(rng.between(2, 12));
    std::vector<double> w(dim);
    for (double& wi : w) wi = rng.unit() * 2.0 - 1.0;
    const BowExample ex = random_example(rng, dim);
    const std::vector<double> g = bow_gradient(w, ex);
    for (std::size_t i = 0; i < dim; ++i) {
      const double h = 1e-6;
      std::vector<double> up = w;
      std::vector<double> down = w;
      up[i] += h;
      down[i] -= h;
      const double numeric = (reference_loss(up, ex) - reference_loss(down, ex)) / (2 * h);
      const double scale = std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
      EXPECT_LE(std::abs(g[i] - numeric) / scale, 1e-5) << "trial " << trial << " coord " << i;
    }
  }
}

TEST(CrossEntropy, MatchesReference) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(6);
    for (double& wi : w) wi = rng.unit() * 4.0 - 2.0;
    const BowExample ex = random_example(rng, 6);
    // The naive reference loses digits in log(1 - p) as p nears 1.
    const double ref = reference_loss(w, ex);
    EXPECT_NEAR(cross_entropy(w, ex), ref, 1e-11 * std::max(1.0, std::abs(ref)));
  }
}

std::vector<const Conversation*> pointers(const std::vector<Conversation>& v) {
  std::vector<const Conversation*> out;
  for (const Conversation& c : v) out.push_back(&c);
  return out;
}

TEST(FitBow, DisjointVocabulariesSeparate) {
  const std::vector<Conversation> train = {
      make_conversation("pos", 3, Label::kDerailing, {"angry words", "more anger"}),
      make_conversation("neg", 3, Label::kCivil, {"kind thanks", "lovely day"})};
  const BowModel model = fit_bow(pointers(train), {});
  for (const Conversation& c : train) {
    const double p = model.predict(model.featurize(prefix(c, c.forecastable()).utterances()));
    EXPECT_EQ(p > 0.5, c.derails()) << c.id;
  }
}

TEST(FitBow, FinalUtteranceNeverEntersVocabulary) {
  const std::vector<Conversation> train = {
      make_conversation("pos", 3, Label::kDerailing, {"a", "b", "secret"}),
      make_conversation("neg", 3, Label::kCivil, {"c", "d", "hidden"})};
  const BowModel model = fit_bow(pointers(train), {});
  EXPECT_FALSE(model.index.contains("secret"));
  EXPECT_FALSE(model.index.contains("hidden"));
  EXPECT_EQ(model.dimension(), model.vocabulary.size() + 1);
}

TEST(FitBow, Errors) {
  const std::vector<Conversation> one_class = {make_conversation("a", 3, Label::kCivil),
                                               make_conversation("b", 3, Label::kCivil)};
  EXPECT_THROW(fit_bow(pointers(one_class), {}), ValidationError);
  EXPECT_THROW(fit_bow({}, {}), ValidationError);
  const std::vector<Conversation> no_words = {make_conversation("a", 2, Label::kCivil, {"..."}),
                                              make_conversation("b", 2, Label::kDerailing, {"!!"})};
  EXPECT_THROW(fit_bow(pointers(no_words), {}), ValidationError);
}

TEST(FitBow, LossNeverIncreases) {
  const Corpus corpus = generate_synthetic(3, 60);
  for (double rate : {0.001, 0.05, 1.0, 50.0}) {
    BowHyper hyper;
    hyper.learning_rate = rate;
    hyper.epochs = 15;
    const BowModel model = fit_bow(corpus.in_split(Split::kTrain), hyper);
    const auto& curve = model.meta.loss_curve;
    ASSERT_EQ(curve.size(), 16u);
    EXPECT_NEAR(curve[0], std::log(2.0), 1e-15);
    for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i], curve[i - 1]) << "rate " << rate;
  }
}

TEST(FitBow, BitDeterministic) {
  const Corpus corpus = generate_synthetic(4, 50);
  BowHyper hyper;
  hyper.seed = 17;
  const BowModel a = fit_bow(corpus.in_split(Split::kTrain), hyper);
  const BowModel b = fit_bow(corpus.in_split(Split::kTrain), hyper);
  EXPECT_EQ(a, b);
  hyper.seed = 18;
  EXPECT_NE(fit_bow(corpus.in_split(Split::kTrain), hyper).weights, a.weights);
}

TEST(FitBow, HeldOutSnapshotAccuracy) {
  const Corpus corpus = generate_synthetic(1, 200);
  const BowModel model = fit_bow(corpus.in_split(Split::kTrain), {});
  std::size_t correct = 0;
  const auto test = corpus.in_split(Split::kTest);
  for (const Conversation* c : test) {
    const double p = model.predict(model.featurize(prefix(*c, c->forecastable()).utterances()));
    correct += (p > 0.5) == c->derails() ? 1 : 0;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(test.size()), 0.9);
}

TEST(BowModel, JsonRoundTripIsExact) {
  const Corpus corpus = generate_synthetic(2, 30);
  const BowModel model = fit_bow(corpus.in_split(Split::kTrain), {});
  testing::TempDir dir("bow");
  save_bow(model, dir / "model.json");
  const BowModel loaded = load_bow(dir / "model.json");
  EXPECT_EQ(loaded, model);
  EXPECT_EQ(loaded.index, model.index);
}

TEST(BowForecaster, ScoresPrefixCounts) {
  const std::vector<Conversation> train = {
      make_conversation("pos", 3, Label::kDerailing, {"angry words", "more anger"}),
      make_conversation("neg", 3, Label::kCivil, {"kind thanks", "lovely day"})};
  auto model = std::make_shared<const BowModel>(fit_bow(pointers(train), {}));
  const BowForecaster f(model);
  const Conversation probe = make_conversation("probe", 4, Label::kCivil, {"angry", "unknown token", "anger"});
  for (std::size_t t = 1; t <= 3; ++t) {
    const PrefixView p = prefix(probe, t);
    EXPECT_EQ(f.score(p), sigmoid(logit(model->weights, model->featurize(p.utterances()))));
  }
}

}  // namespace
}  // namespace cga
