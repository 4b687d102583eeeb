#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "buscbm/heads.hpp"
#include "oracles.hpp"

using namespace buscbm;

namespace {

HeadConfig linear_config() {
  HeadConfig c;
  c.variant = HeadVariant::linear;
  return c;
}

HeadParams linear_params(std::array<double, 5> w, double b) {
  HeadParams p = zero_params(linear_config());
  for (std::size_t i = 0; i < 5; ++i) p.layers[0].weights[i] = w[i];
  p.layers[0].bias[0] = b;
  return p;
}

TrainRecord record(std::array<double, 5> c, bool y, std::vector<double> side = {}) {
  TrainRecord r;
  r.concept_logits = ConceptLogits{c};
  r.cancer_label = y;
  r.side_features = std::move(side);
  return r;
}

/// Labels from a fixed hyperplane, so the set is linearly separable.
std::vector<TrainRecord> separable_set(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 2.0);
  std::vector<TrainRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainRecord r;
    for (std::size_t k = 0; k < 5; ++k) r.concept_logits[k] = z(gen);
    const double s = r.concept_logits[0] + r.concept_logits[1] - 0.5 * r.concept_logits[3];
    r.cancer_label = s > 0.0;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Forward, ZeroLinearHeadIsOneHalf) {
  const auto p = zero_params(linear_config());
  EXPECT_EQ(forward(p, linear_config(), ConceptLogits{{3, -1, 7, 0, 2}}), 0.5);
}

TEST(Forward, LinearExample) {
  const auto p = linear_params({0.5, 0.5, 0.5, 0.5, 0.5}, 0.0);
  EXPECT_NEAR(forward(p, linear_config(), ConceptLogits{{1, 1, 1, 1, 1}}), 0.924142, 5e-7);
  EXPECT_DOUBLE_EQ(forward(p, linear_config(), ConceptLogits{{1, 1, 1, 1, 1}}), sigmoid(2.5));
}

TEST(Forward, IntermediateSigmoidAppliesToConcepts) {
  auto c = linear_config();
  c.intermediate_sigmoid = true;
  const auto p = linear_params({1, 1, 1, 1, 1}, 0.0);
  EXPECT_DOUBLE_EQ(forward(p, c, ConceptLogits{{0, 0, 0, 0, 0}}), sigmoid(2.5));
}

TEST(Forward, LinearIncreasingInPositiveWeightConcept) {
  const auto p = linear_params({0.3, 0.1, 0.2, 0.4, 0.05}, -0.2);
  double prev = 0.0;
  for (double x = -5; x <= 5; x += 0.5) {
    const double y = forward(p, linear_config(), ConceptLogits{{x, 0, 0, 0, 0}});
    EXPECT_GT(y, prev);
    prev = y;
  }
}

TEST(Forward, OutputStrictlyInsideUnitInterval) {
  const auto p = linear_params({100, 100, 100, 100, 100}, 0.0);
  const double hi = forward(p, linear_config(), ConceptLogits{{50, 50, 50, 50, 50}});
  const double lo = forward(p, linear_config(), ConceptLogits{{-50, -50, -50, -50, -50}});
  EXPECT_LT(hi, 1.0);
  EXPECT_GT(lo, 0.0);
}

TEST(Forward, ShapeAndInputErrors) {
  HeadConfig nl;
  nl.variant = HeadVariant::nonlinear;
  nl.hidden_width = 64;
  EXPECT_THROW(forward(zero_params(linear_config()), nl, ConceptLogits{}), InputError);
  HeadConfig side = nl;
  side.variant = HeadVariant::nonlinear_side;
  side.side_feature_dim = 2;
  const auto p = zero_params(side);
  EXPECT_THROW(forward(p, side, ConceptLogits{}, std::vector<double>{1.0}), InputError);
  EXPECT_NO_THROW(forward(p, side, ConceptLogits{}, std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(forward(zero_params(linear_config()), linear_config(), ConceptLogits{{NAN, 0, 0, 0, 0}}), InputError);
}

TEST(Forward, ZeroSideOutputEqualsNonlinearOnPaddedBottleneck) {
  HeadConfig side;
  side.variant = HeadVariant::nonlinear_side;
  side.hidden_width = 64;
  side.side_feature_dim = 3;
  side.seed = 9;
  auto p = init_params(side);
  auto& side_out = p.layers[1];
  std::fill(side_out.weights.begin(), side_out.weights.end(), 0.0);
  side_out.bias[0] = 0.0;

  HeadConfig nl = side;
  nl.variant = HeadVariant::nonlinear;
  nl.side_feature_dim = 0;
  HeadParams q = zero_params(nl);
  const auto& hidden = p.layers[2];
  for (int o = 0; o < 64; ++o) {
    for (int i = 0; i < 5; ++i) q.layers[0].weights[static_cast<std::size_t>(o) * 5 + i] = hidden.weight(o, i);
    q.layers[0].bias[static_cast<std::size_t>(o)] = hidden.bias[static_cast<std::size_t>(o)];
  }
  q.layers[1] = p.layers[3];

  std::mt19937_64 gen(1);
  std::normal_distribution<double> z(0, 2);
  for (int t = 0; t < 50; ++t) {
    ConceptLogits c;
    for (std::size_t k = 0; k < 5; ++k) c[k] = z(gen);
    const std::vector<double> s{z(gen), z(gen), z(gen)};
    EXPECT_EQ(forward(p, side, c, s), forward(q, nl, c));
  }
}

TEST(Loss, Examples) {
  const auto p = linear_params({0.5, 0.5, 0.5, 0.5, 0.5}, 0.0);
  const std::vector<TrainRecord> one{record({1, 1, 1, 1, 1}, true)};
  EXPECT_NEAR(loss(p, linear_config(), one), 0.078889, 1e-6);
  EXPECT_DOUBLE_EQ(loss(p, linear_config(), one), -std::log(sigmoid(2.5)));

  const std::vector<TrainRecord> half{record({1, 2, 3, 4, 5}, true), record({0, 0, 0, 0, 0}, false)};
  EXPECT_DOUBLE_EQ(loss(zero_params(linear_config()), linear_config(), half), std::log(2.0));

  const auto sure = linear_params({100, 0, 0, 0, 0}, 0.0);
  const std::vector<TrainRecord> exact{record({10, 0, 0, 0, 0}, true), record({-10, 0, 0, 0, 0}, false)};
  EXPECT_LE(loss(sure, linear_config(), exact), 1e-11);

  EXPECT_THROW(loss(p, linear_config(), std::vector<TrainRecord>{}), InputError);
}

TEST(Loss, WeightsAreNormalized) {
  const auto p = linear_params({0.2, -0.1, 0.4, 0.0, 0.3}, 0.1);
  auto a = record({1, 2, -1, 0, 1}, true);
  auto b = record({-1, 0, 2, 1, -2}, false);
  const double la = loss(p, linear_config(), std::vector<TrainRecord>{a});
  const double lb = loss(p, linear_config(), std::vector<TrainRecord>{b});
  a.weight = 3.0;
  EXPECT_NEAR(loss(p, linear_config(), std::vector<TrainRecord>{a, b}), (3 * la + lb) / 4, 1e-15);
}

TEST(Gradient, BiasDerivativeIsResidual) {
  const auto p = linear_params({0.5, -0.2, 0.1, 0.3, -0.4}, 0.25);
  for (bool y : {true, false}) {
    const std::vector<TrainRecord> one{record({1, 2, -3, 0.5, 1}, y)};
    const double prob = forward(p, linear_config(), one[0]);
    const auto g = gradient(p, linear_config(), one);
    EXPECT_NEAR(g.layers[0].bias[0], prob - (y ? 1.0 : 0.0), 1e-15);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(g.layers[0].weights[i], (prob - (y ? 1.0 : 0.0)) * one[0].concept_logits[i], 1e-15);
    }
  }
}

TEST(Gradient, SymmetricBalancedBatchHasZeroWeightGradient) {
  const auto p = zero_params(linear_config());
  const std::vector<TrainRecord> batch{record({1, -2, 3, 0.5, 2}, true), record({-1, 2, -3, -0.5, -2}, true),
                                       record({1, -2, 3, 0.5, 2}, false), record({-1, 2, -3, -0.5, -2}, false)};
  const auto g = gradient(p, linear_config(), batch);
  for (double w : g.layers[0].weights) EXPECT_EQ(w, 0.0);
}

TEST(Gradient, MatchesCentralDifferencesForEveryVariant) {
  std::mt19937_64 gen(31337);
  const std::array<HeadVariant, 3> variants{HeadVariant::linear, HeadVariant::nonlinear, HeadVariant::nonlinear_side};
  for (int t = 0; t < 30; ++t) {
    const auto c = oracle::random_gradient_case(gen, variants[static_cast<std::size_t>(t % 3)]);
    EXPECT_LE(oracle::gradient_check_error(c), 1e-4) << "case " << t << " variant " << to_string(c.config.variant);
  }
}

TEST(LearningRate, WarmupRamp) {
  HeadConfig c;
  c.base_learning_rate = 0.1;
  c.warmup_steps = 10;
  c.warmup_factor = 0.001;
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 0), 1e-4);
  EXPECT_DOUBLE_EQ(learning_rate_at(c, 5), 0.1 * (0.001 * 0.5 + 0.5));
  EXPECT_EQ(learning_rate_at(c, 10), 0.1);
  EXPECT_EQ(learning_rate_at(c, 1000), 0.1);
  c.warmup_factor = 0.0;
  EXPECT_EQ(learning_rate_at(c, 0), 0.0);
  for (std::size_t s = 1; s < 12; ++s) EXPECT_GE(learning_rate_at(c, s), learning_rate_at(c, s - 1));
}

TEST(Init, GlorotBoundsAndZeroBias) {
  HeadConfig c;
  c.variant = HeadVariant::nonlinear_side;
  c.hidden_width = 128;
  c.side_feature_dim = 4;
  c.seed = 3;
  const auto p = init_params(c);
  for (const auto& l : p.layers) {
    const double limit = std::sqrt(6.0 / (l.in + l.out));
    for (double w : l.weights) EXPECT_LE(std::abs(w), limit);
    for (double b : l.bias) EXPECT_EQ(b, 0.0);
  }
  EXPECT_EQ(p, init_params(c));
  c.seed = 4;
  EXPECT_NE(p, init_params(c));
}

TEST(Config, Validation) {
  HeadConfig c;
  c.hidden_width = 100;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.variant = HeadVariant::nonlinear_side;
  EXPECT_THROW(c.validate(), InputError);
  EXPECT_THROW(head_config_from_json(Json{{"widht", 64}}), InputError);
  EXPECT_EQ(head_config_from_json(Json{{"variant", "nonlinear"}}).variant, HeadVariant::nonlinear);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  auto c = linear_config();
  c.epochs = 0;
  c.seed = 5;
  const auto data = separable_set(1, 40);
  const auto r = train(c, data, {});
  EXPECT_EQ(r.params, init_params(c));
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.steps, 0u);
}

TEST(Train, LossDecreasesOnSeparableSet) {
  auto c = linear_config();
  c.epochs = 10;
  c.base_learning_rate = 0.01;
  c.momentum = 0.9;
  const auto data = separable_set(2, 200);
  const auto r = train(c, data, {});
  EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
  EXPECT_EQ(r.best_epoch, 10);
  EXPECT_EQ(r.steps, 10u * 13u);
}

TEST(Train, NonlinearVariantsLearn) {
  const auto data = separable_set(3, 160);
  for (auto v : {HeadVariant::nonlinear, HeadVariant::nonlinear_side}) {
    HeadConfig c;
    c.variant = v;
    c.hidden_width = 64;
    c.epochs = 8;
    c.base_learning_rate = 0.01;
    c.momentum = 0.9;
    auto d = data;
    if (v == HeadVariant::nonlinear_side) {
      c.side_feature_dim = 2;
      for (auto& r : d) r.side_features = {r.cancer_label ? 1.0 : -1.0, 0.5};
    }
    const auto r = train(c, d, {});
    EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss) << to_string(v);
  }
}

TEST(Train, SelectsBestValidationEpoch) {
  auto c = linear_config();
  c.epochs = 6;
  c.base_learning_rate = 0.01;
  const auto data = separable_set(4, 120);
  const auto val = separable_set(5, 60);
  const auto r = train(c, data, val);
  ASSERT_TRUE(r.best_val_auroc);
  double best = -1;
  int best_epoch = 0;
  for (const auto& e : r.log) {
    if (e.epoch > 0 && *e.val_auroc > best) {
      best = *e.val_auroc;
      best_epoch = e.epoch;
    }
  }
  EXPECT_EQ(r.best_epoch, best_epoch);
  EXPECT_EQ(*r.best_val_auroc, best);
  EXPECT_EQ(validation_auroc(r.params, c, val), best);
}

TEST(Train, DeterministicForSeed) {
  HeadConfig c;
  c.variant = HeadVariant::nonlinear;
  c.hidden_width = 64;
  c.epochs = 3;
  c.seed = 11;
  const auto data = separable_set(6, 100);
  const auto a = train(c, data, {});
  const auto b = train(c, data, {});
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
  c.seed = 12;
  EXPECT_NE(train(c, data, {}).params, a.params);
}

TEST(Train, Errors) {
  EXPECT_THROW(train(linear_config(), std::vector<TrainRecord>{}, {}), InputError);
  auto c = linear_config();
  c.base_learning_rate = 1e308;
  c.warmup_steps = 0;
  // Whatever the sign of w0, one record is badly wrong and the step overflows.
  const std::vector<TrainRecord> data{record({10, 0, 0, 0, 0}, true), record({-10, 0, 0, 0, 0}, true)};
  try {
    train(c, data, {});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("learning rate"), std::string::npos);
  }
}

TEST(Linear, PositiveScalingKeepsPredictionOrder) {
  std::mt19937_64 gen(19);
  std::normal_distribution<double> z(0, 2);
  const auto p = linear_params({0.4, -0.3, 0.2, 0.7, -0.1}, 0.3);
  auto q = p;
  for (double& w : q.layers[0].weights) w *= 2.5;
  q.layers[0].bias[0] *= 2.5;
  std::vector<TrainRecord> rs;
  for (int i = 0; i < 50; ++i) rs.push_back(record({z(gen), z(gen), z(gen), z(gen), z(gen)}, false));
  const auto a = predict(p, linear_config(), rs);
  const auto b = predict(q, linear_config(), rs);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[i] < a[j], b[i] < b[j]);
}

TEST(Serialization, RoundTripIsExact) {
  HeadConfig c;
  c.variant = HeadVariant::nonlinear_side;
  c.hidden_width = 64;
  c.side_feature_dim = 3;
  c.seed = 77;
  const HeadModel m{c, init_params(c)};
  const auto back = head_from_json(Json::parse(head_to_json(m).dump()));
  EXPECT_EQ(back.params, m.params);
  EXPECT_EQ(head_config_to_json(back.config), head_config_to_json(m.config));
}

TEST(Serialization, RejectsBadFiles) {
  const HeadModel m{linear_config(), init_params(linear_config())};
  auto j = head_to_json(m);
  j["version"] = 2;
  EXPECT_THROW(head_from_json(j), InputError);
  j = head_to_json(m);
  j["layers"][0]["weights"].erase(0);
  EXPECT_THROW(head_from_json(j), InputError);
  j = head_to_json(m);
  j["config"]["variant"] = "nonlinear";
  EXPECT_THROW(head_from_json(j), InputError);
  EXPECT_THROW(head_from_json(Json::object()), InputError);
}
