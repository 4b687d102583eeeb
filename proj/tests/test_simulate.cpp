#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "buscbm/io.hpp"
#include "buscbm/simulate.hpp"

using namespace buscbm;

namespace {

std::string serialize(const SimulationOutput& s) {
  std::ostringstream out;
  write_cohort(out, s.cohort);
  write_detections(out, s.detections);
  out << s.oracle_json.dump();
  return out.str();
}

SimConfig small_config(int n_women = 200) {
  SimConfig c;
  c.n_women = n_women;
  return c;
}

}  // namespace

TEST(Simulate, ExactCaseCount) {
  const auto s = simulate_cohort(SimConfig{}, 1);
  ASSERT_EQ(s.cohort.size(), 1000u);
  std::size_t cases = 0;
  for (const auto& w : s.cohort) cases += w.is_case ? 1 : 0;
  EXPECT_EQ(cases, 250u);
  EXPECT_EQ(s.oracle_json["n_cases"], 250);
}

TEST(Simulate, ByteIdenticalForSameSeed) {
  const auto a = serialize(simulate_cohort(small_config(), 17));
  const auto b = serialize(simulate_cohort(small_config(), 17));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, serialize(simulate_cohort(small_config(), 18)));
}

TEST(Simulate, NoiselessConceptsBinarizeToTruth) {
  auto c = small_config(150);
  c.concept_noise = 0.0;
  c.max_lesions_per_image = 1;
  c.false_positives_per_image = 0.0;
  const auto s = simulate_cohort(c, 3);
  std::map<std::string, const LesionAnnotation*> lesion_of;
  for (const auto& w : s.cohort)
    for (const auto& im : w.images)
      if (!im.lesions.empty()) lesion_of[im.image_id] = &im.lesions[0];
  ASSERT_FALSE(s.detections.empty());
  for (const auto& d : s.detections) {
    ASSERT_TRUE(lesion_of.count(d.image_id));
    EXPECT_EQ(binarize_logits(d.concept_logits), lesion_of[d.image_id]->labels());
  }
}

TEST(Simulate, ConceptRatesMatchConditionals) {
  const SimConfig c;
  const auto s = simulate_cohort(c, 11);
  std::array<double, 5> pos_m{}, pos_b{};
  double n_m = 0, n_b = 0;
  for (const auto& w : s.cohort)
    for (const auto& im : w.images)
      for (const auto& l : im.lesions) {
        const auto y = l.labels();
        for (std::size_t q = 0; q < 5; ++q) (l.malignant ? pos_m : pos_b)[q] += y[q] ? 1 : 0;
        (l.malignant ? n_m : n_b) += 1;
      }
  ASSERT_GT(n_m, 100);
  for (std::size_t q = 0; q < 5; ++q) {
    const double pm = c.concept_given_malignant[q], pb = c.concept_given_benign[q];
    EXPECT_NEAR(pos_m[q] / n_m, pm, 3 * std::sqrt(pm * (1 - pm) / n_m)) << kConceptNames[q];
    EXPECT_NEAR(pos_b[q] / n_b, pb, 3 * std::sqrt(pb * (1 - pb) / n_b)) << kConceptNames[q];
  }
}

TEST(Simulate, ControlsHaveOnlyBenignLesions) {
  const auto s = simulate_cohort(small_config(), 4);
  for (const auto& w : s.cohort) {
    if (w.is_case) continue;
    for (const auto& im : w.images)
      for (const auto& l : im.lesions) EXPECT_FALSE(l.malignant);
  }
}

TEST(Oracle, IsTheBayesPosterior) {
  const SimConfig c;
  const double prev = 0.2;
  const auto m = OracleModel::from_config(c, prev);
  for (unsigned bits = 0; bits < 32; ++bits) {
    ConceptLabels y;
    double l1 = 1, l0 = 1;
    for (std::size_t q = 0; q < 5; ++q) {
      y[q] = (bits >> q) & 1U;
      l1 *= y[q] ? c.concept_given_malignant[q] : 1 - c.concept_given_malignant[q];
      l0 *= y[q] ? c.concept_given_benign[q] : 1 - c.concept_given_benign[q];
    }
    EXPECT_NEAR(m.probability(y), prev * l1 / (prev * l1 + (1 - prev) * l0), 1e-12);
  }
}

TEST(Oracle, AnalyticAurocMatchesMonteCarlo) {
  const auto s = simulate_cohort(SimConfig{}, 23);
  EXPECT_NEAR(s.bayes_auroc_empirical, s.bayes_auroc_analytic, 0.02);
  EXPECT_GT(s.bayes_auroc_analytic, 0.5);
  EXPECT_LT(s.bayes_auroc_analytic, 1.0);
  EXPECT_EQ(s.oracle_json["bayes_auroc_analytic"].get<double>(), s.bayes_auroc_analytic);
}

TEST(Simulate, GeometryIsConsistent) {
  const auto s = simulate_cohort(small_config(), 6);
  for (const auto& w : s.cohort)
    for (const auto& im : w.images)
      for (const auto& l : im.lesions) {
        ASSERT_TRUE(l.mask);
        EXPECT_GT(l.mask->area(), 0u);
        EXPECT_EQ(*mask_bbox(*l.mask), l.bbox);
        EXPECT_EQ(rasterize(*l.polygon, im.height, im.width), *l.mask);
      }
  for (const auto& d : s.detections) {
    EXPECT_GE(d.score, 0.0);
    EXPECT_LE(d.score, 1.0);
    EXPECT_EQ(d.side_features.size(), 4u);
    ASSERT_TRUE(d.mask);
    EXPECT_EQ(*mask_bbox(*d.mask), d.bbox);
  }
}

TEST(Simulate, GroupsFollowMatching) {
  const auto s = simulate_cohort(small_config(400), 8);
  std::map<std::string, std::vector<const WomanRecord*>> groups;
  for (const auto& w : s.cohort) groups[w.group_id].push_back(&w);
  for (const auto& [g, members] : groups) {
    std::size_t cases = 0;
    for (const auto* w : members) cases += w->is_case ? 1 : 0;
    EXPECT_LE(cases, 1u);
    EXPECT_LE(members.size(), 4u);
    for (const auto* w : members) {
      EXPECT_EQ(w->manufacturer, members[0]->manufacturer);
      EXPECT_LE(std::abs(w->birth_year - members[0]->birth_year), 4);
    }
  }
  EXPECT_EQ(s.matching.groups.size(), 100u);
}

TEST(SimConfigJson, RoundTripAndStrictKeys) {
  SimConfig c;
  c.n_women = 77;
  c.concept_noise = 1.25;
  const auto back = sim_config_from_json(sim_config_to_json(c));
  EXPECT_EQ(sim_config_to_json(back), sim_config_to_json(c));
  try {
    sim_config_from_json(Json{{"n_woman", 5}});
    FAIL() << "expected an error";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("n_woman"), std::string::npos);
  }
  EXPECT_THROW(sim_config_from_json(Json{{"case_prevalence", 1.5}}), InputError);
  EXPECT_THROW(sim_config_from_json(Json{{"n_women", 0}}), InputError);
  EXPECT_THROW(sim_config_from_json(Json{{"concept_noise", -1.0}}), InputError);
}
