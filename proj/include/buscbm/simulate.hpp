#pragma once

// Synthetic case-control cohort with a known generating model.
//
// Lesion malignancy is drawn first (controls: benign; cases: malignant with
// probability `case_lesion_malignancy`), then each binarized concept
// independently from its class-conditional rate. The posterior P(malignant |
// concepts) is therefore exactly logistic in the binarized concepts, with
// per-concept weights equal to the log likelihood ratios; that logistic model
// is the emitted oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "buscbm/cohort.hpp"
#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/metrics.hpp"
#include "buscbm/random.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

struct SimConfig {
  int n_women = 1000;
  double case_prevalence = 0.25;
  int controls_per_case = 3;
  int year_tolerance = 2;
  // Probability a generated control is drawn near an eligible case.
  double near_match_rate = 0.85;
  int birth_year_min = 1930;
  int birth_year_max = 1985;
  std::array<double, 4> manufacturer_weights{0.46, 0.47, 0.07, 0.0};
  int images_min = 2;
  int images_max = 8;
  int image_height = 128;
  int image_width = 160;
  double lesion_image_rate = 0.8;
  double extra_lesion_rate = 0.2;
  int max_lesions_per_image = 3;
  double case_lesion_malignancy = 0.8;
  std::array<double, kNumConcepts> concept_given_malignant{0.75, 0.35, 0.70, 0.97, 0.50};
  std::array<double, kNumConcepts> concept_given_benign{0.10, 0.03, 0.07, 0.54, 0.17};
  double concept_logit_center = 2.0;
  double concept_noise = 2.4;
  double detect_rate = 0.9;
  double iou_jitter = 0.08;
  double false_positives_per_image = 0.3;
  int side_feature_dim = 4;
  double side_signal = 1.0;
  std::array<double, kNumExclusionFlags> flag_rates{0.004, 0.037, 0.011, 0.006, 0.029,
                                                    0.020, 0.001, 0.017, 0.017};

  void validate() const {
    auto prob = [](double p, const char* name, bool open) {
      const bool ok = open ? (p > 0.0 && p < 1.0) : (p >= 0.0 && p <= 1.0);
      if (!ok) throw InputError(std::string("simulation config: '") + name + "' must lie in " + (open ? "(0, 1)" : "[0, 1]"));
    };
    if (n_women < 1) throw InputError("simulation config: 'n_women' must be >= 1");
    prob(case_prevalence, "case_prevalence", false);
    if (controls_per_case < 1) throw InputError("simulation config: 'controls_per_case' must be >= 1");
    if (year_tolerance < 0) throw InputError("simulation config: 'year_tolerance' must be >= 0");
    prob(near_match_rate, "near_match_rate", false);
    if (birth_year_max < birth_year_min) throw InputError("simulation config: birth year range is empty");
    double wsum = 0.0;
    for (double w : manufacturer_weights) {
      if (!(w >= 0.0)) throw InputError("simulation config: 'manufacturer_weights' must be non-negative");
      wsum += w;
    }
    if (!(wsum > 0.0)) throw InputError("simulation config: 'manufacturer_weights' must not all be zero");
    if (images_min < 1 || images_max < images_min) throw InputError("simulation config: invalid images_min/images_max");
    if (image_height < 32 || image_width < 32) throw InputError("simulation config: images must be at least 32x32");
    prob(lesion_image_rate, "lesion_image_rate", false);
    prob(extra_lesion_rate, "extra_lesion_rate", false);
    if (max_lesions_per_image < 1) throw InputError("simulation config: 'max_lesions_per_image' must be >= 1");
    prob(case_lesion_malignancy, "case_lesion_malignancy", false);
    for (double p : concept_given_malignant) prob(p, "concept_given_malignant", true);
    for (double p : concept_given_benign) prob(p, "concept_given_benign", true);
    if (!(concept_logit_center > 0.0)) throw InputError("simulation config: 'concept_logit_center' must be positive");
    if (!(concept_noise >= 0.0)) throw InputError("simulation config: 'concept_noise' must be >= 0");
    prob(detect_rate, "detect_rate", false);
    if (!(iou_jitter >= 0.0)) throw InputError("simulation config: 'iou_jitter' must be >= 0");
    if (!(false_positives_per_image >= 0.0)) throw InputError("simulation config: 'false_positives_per_image' must be >= 0");
    if (side_feature_dim < 0) throw InputError("simulation config: 'side_feature_dim' must be >= 0");
    for (double p : flag_rates) prob(p, "flag_rates", false);
  }
};

inline Json sim_config_to_json(const SimConfig& c) {
  Json flags = Json::object();
  for (std::size_t i = 0; i < kNumExclusionFlags; ++i) flags[std::string(kExclusionFlagNames[i])] = c.flag_rates[i];
  return Json{{"n_women", c.n_women},
              {"case_prevalence", c.case_prevalence},
              {"controls_per_case", c.controls_per_case},
              {"year_tolerance", c.year_tolerance},
              {"near_match_rate", c.near_match_rate},
              {"birth_year_min", c.birth_year_min},
              {"birth_year_max", c.birth_year_max},
              {"manufacturer_weights", c.manufacturer_weights},
              {"images_min", c.images_min},
              {"images_max", c.images_max},
              {"image_height", c.image_height},
              {"image_width", c.image_width},
              {"lesion_image_rate", c.lesion_image_rate},
              {"extra_lesion_rate", c.extra_lesion_rate},
              {"max_lesions_per_image", c.max_lesions_per_image},
              {"case_lesion_malignancy", c.case_lesion_malignancy},
              {"concept_given_malignant", c.concept_given_malignant},
              {"concept_given_benign", c.concept_given_benign},
              {"concept_logit_center", c.concept_logit_center},
              {"concept_noise", c.concept_noise},
              {"detect_rate", c.detect_rate},
              {"iou_jitter", c.iou_jitter},
              {"false_positives_per_image", c.false_positives_per_image},
              {"side_feature_dim", c.side_feature_dim},
              {"side_signal", c.side_signal},
              {"flag_rates", flags}};
}

/// Overlays `j` onto the defaults. Unknown keys are an error naming the key.
inline SimConfig sim_config_from_json(const Json& j, SimConfig c = {}) {
  if (!j.is_object()) throw InputError("simulation config must be a JSON object");
  auto arr = [](const Json& v, auto& target, const std::string& key) {
    if (!v.is_array() || v.size() != target.size()) {
      throw InputError("simulation config key '" + key + "' must be an array of " + std::to_string(target.size()));
    }
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = v[i].get<double>();
  };
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n_women") c.n_women = v.get<int>();
      else if (key == "case_prevalence") c.case_prevalence = v.get<double>();
      else if (key == "controls_per_case") c.controls_per_case = v.get<int>();
      else if (key == "year_tolerance") c.year_tolerance = v.get<int>();
      else if (key == "near_match_rate") c.near_match_rate = v.get<double>();
      else if (key == "birth_year_min") c.birth_year_min = v.get<int>();
      else if (key == "birth_year_max") c.birth_year_max = v.get<int>();
      else if (key == "manufacturer_weights") arr(v, c.manufacturer_weights, key);
      else if (key == "images_min") c.images_min = v.get<int>();
      else if (key == "images_max") c.images_max = v.get<int>();
      else if (key == "image_height") c.image_height = v.get<int>();
      else if (key == "image_width") c.image_width = v.get<int>();
      else if (key == "lesion_image_rate") c.lesion_image_rate = v.get<double>();
      else if (key == "extra_lesion_rate") c.extra_lesion_rate = v.get<double>();
      else if (key == "max_lesions_per_image") c.max_lesions_per_image = v.get<int>();
      else if (key == "case_lesion_malignancy") c.case_lesion_malignancy = v.get<double>();
      else if (key == "concept_given_malignant") arr(v, c.concept_given_malignant, key);
      else if (key == "concept_given_benign") arr(v, c.concept_given_benign, key);
      else if (key == "concept_logit_center") c.concept_logit_center = v.get<double>();
      else if (key == "concept_noise") c.concept_noise = v.get<double>();
      else if (key == "detect_rate") c.detect_rate = v.get<double>();
      else if (key == "iou_jitter") c.iou_jitter = v.get<double>();
      else if (key == "false_positives_per_image") c.false_positives_per_image = v.get<double>();
      else if (key == "side_feature_dim") c.side_feature_dim = v.get<int>();
      else if (key == "side_signal") c.side_signal = v.get<double>();
      else if (key == "flag_rates") {
        if (!v.is_object()) throw InputError("simulation config key 'flag_rates' must be an object");
        for (const auto& [flag, rate] : v.items()) {
          const auto f = parse_exclusion_flag(flag);
          c.flag_rates[static_cast<std::size_t>(f)] = rate.get<double>();
        }
      } else {
        throw InputError("unknown simulation config key '" + key + "'");
      }
    } catch (const Json::exception& e) {
      throw InputError("simulation config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

/// The generating logistic model over binarized true concepts.
struct OracleModel {
  std::array<double, kNumConcepts> weights{};
  double intercept = 0.0;
  std::array<double, kNumConcepts> given_malignant{};
  std::array<double, kNumConcepts> given_benign{};

  static OracleModel from_config(const SimConfig& c, double prevalence) {
    OracleModel m;
    m.given_malignant = c.concept_given_malignant;
    m.given_benign = c.concept_given_benign;
    m.intercept = logit(std::clamp(prevalence, 1e-9, 1.0 - 1e-9));
    for (std::size_t i = 0; i < kNumConcepts; ++i) {
      const double p1 = c.concept_given_malignant[i];
      const double p0 = c.concept_given_benign[i];
      m.weights[i] = std::log(p1 / p0) - std::log((1.0 - p1) / (1.0 - p0));
      m.intercept += std::log((1.0 - p1) / (1.0 - p0));
    }
    return m;
  }

  double logit_score(const ConceptLabels& c) const {
    double z = intercept;
    for (std::size_t i = 0; i < kNumConcepts; ++i) z += c[i] ? weights[i] : 0.0;
    return z;
  }

  double probability(const ConceptLabels& c) const { return sigmoid(logit_score(c)); }

  /// Exact AUROC of the oracle score under the generating distribution,
  /// enumerating all 32 concept patterns per class.
  double analytic_auroc() const {
    std::array<double, 32> score{};
    std::array<double, 32> p_pos{};
    std::array<double, 32> p_neg{};
    for (unsigned bits = 0; bits < 32; ++bits) {
      ConceptLabels c;
      double pp = 1.0;
      double pn = 1.0;
      for (std::size_t i = 0; i < kNumConcepts; ++i) {
        c[i] = (bits >> i) & 1U;
        pp *= c[i] ? given_malignant[i] : 1.0 - given_malignant[i];
        pn *= c[i] ? given_benign[i] : 1.0 - given_benign[i];
      }
      score[bits] = logit_score(c);
      p_pos[bits] = pp;
      p_neg[bits] = pn;
    }
    double auc = 0.0;
    for (unsigned a = 0; a < 32; ++a) {
      for (unsigned b = 0; b < 32; ++b) {
        if (score[a] > score[b]) auc += p_pos[a] * p_neg[b];
        else if (score[a] == score[b]) auc += 0.5 * p_pos[a] * p_neg[b];
      }
    }
    return auc;
  }
};

struct SimulationOutput {
  Cohort cohort;
  std::vector<Detection> detections;
  CaseControlMatching matching;
  OracleModel oracle;
  double bayes_auroc_empirical = 0.0;
  double bayes_auroc_analytic = 0.0;
  std::size_t n_lesions = 0;
  std::size_t n_malignant = 0;
  Json oracle_json;
};

namespace detail {

inline std::string numbered(const char* prefix, std::size_t n, int width) {
  std::string digits = std::to_string(n);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

inline double round_to(double x, double step) { return std::round(x / step) * step; }

struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double a = 0.0;
  double b = 0.0;
  double angle = 0.0;

  Polygon polygon(int height, int width, int vertices = 24) const {
    Polygon p;
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    for (int k = 0; k < vertices; ++k) {
      const double t = 2.0 * std::numbers::pi * k / vertices;
      const double ex = a * std::cos(t);
      const double ey = b * std::sin(t);
      const double x = std::clamp(cx + ex * ca - ey * sa, 0.0, static_cast<double>(width));
      const double y = std::clamp(cy + ex * sa + ey * ca, 0.0, static_cast<double>(height));
      p.vertices.push_back({round_to(x, 0.01), round_to(y, 0.01)});
    }
    return p;
  }
};

inline Ellipse random_ellipse(Rng& rng, int height, int width) {
  Ellipse e;
  e.a = rng.uniform(6.0, std::min(24.0, width / 4.0));
  e.b = rng.uniform(6.0, std::min(20.0, height / 4.0));
  const double r = std::max(e.a, e.b);
  e.cx = rng.uniform(r, width - r);
  e.cy = rng.uniform(r, height - r);
  e.angle = rng.uniform(0.0, std::numbers::pi);
  return e;
}

inline int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  double prod = rng.uniform();
  int k = 0;
  while (prod > limit) {
    prod *= rng.uniform();
    ++k;
  }
  return k;
}

// A lexicon descriptor consistent with the given binarized concepts; the
// malignancy-indicative category is chosen uniformly among the non-benign ones.
inline MassDescriptor descriptor_for(const ConceptLabels& c, Rng& rng) {
  auto pick = [&](bool positive, std::size_t n) { return positive ? 1 + rng.index(n - 1) : 0; };
  MassDescriptor d;
  d.shape = static_cast<Shape>(pick(c[0], category_count<Shape>()));
  d.orientation = static_cast<Orientation>(pick(c[1], category_count<Orientation>()));
  d.margin = static_cast<Margin>(pick(c[2], category_count<Margin>()));
  d.echo_pattern = static_cast<EchoPattern>(pick(c[3], category_count<EchoPattern>()));
  d.posterior = static_cast<Posterior>(pick(c[4], category_count<Posterior>()));
  return d;
}

inline Manufacturer draw_manufacturer(Rng& rng, const std::array<double, 4>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return static_cast<Manufacturer>(i);
    u -= weights[i];
  }
  for (std::size_t i = weights.size(); i > 0; --i) {
    if (weights[i - 1] > 0.0) return static_cast<Manufacturer>(i - 1);
  }
  return Manufacturer::other;
}

/// Brute-force pair count: (concordant + 0.5 tied) / (n_pos * n_neg).
inline double pair_count_auroc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) concordant += 1.0;
      else if (scores[i] == scores[j]) concordant += 0.5;
    }
  }
  return pairs > 0.0 ? concordant / pairs : 0.5;
}

}  // namespace detail

/// Generates a cohort file, a detection file emulating an upstream detector
/// and the oracle description. Output depends only on (config, seed).
inline SimulationOutput simulate_cohort(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  SimulationOutput out;
  Rng women_rng(derive_seed(seed, 101));
  Rng image_rng(derive_seed(seed, 102));
  Rng detect_rng(derive_seed(seed, 103));

  const auto n_women = static_cast<std::size_t>(config.n_women);
  const auto n_cases = static_cast<std::size_t>(std::llround(config.n_women * config.case_prevalence));
  const std::size_t n_controls = n_women - n_cases;

  struct Person {
    bool is_case = false;
    int birth_year = 0;
    Manufacturer manufacturer = Manufacturer::other;
  };
  std::vector<Person> people;
  for (std::size_t k = 0; k < n_cases; ++k) {
    people.push_back({true, women_rng.integer(config.birth_year_min, config.birth_year_max),
                      detail::draw_manufacturer(women_rng, config.manufacturer_weights)});
  }
  for (std::size_t k = 0; k < n_controls; ++k) {
    Person p{false, 0, Manufacturer::other};
    if (n_cases > 0 && women_rng.bernoulli(config.near_match_rate)) {
      const Person& anchor = people[k % n_cases];
      p.birth_year = anchor.birth_year + women_rng.integer(-config.year_tolerance, config.year_tolerance);
      p.manufacturer = anchor.manufacturer;
    } else {
      p.birth_year = women_rng.integer(config.birth_year_min, config.birth_year_max);
      p.manufacturer = detail::draw_manufacturer(women_rng, config.manufacturer_weights);
    }
    people.push_back(p);
  }
  // Ids are assigned after a shuffle so that id order carries no case status.
  women_rng.shuffle(people);
  const int id_width = std::max(4, static_cast<int>(std::to_string(n_women).size()));

  std::vector<MatchCandidate> cases;
  std::vector<MatchCandidate> controls;
  for (std::size_t i = 0; i < people.size(); ++i) {
    MatchCandidate m{detail::numbered("W", i + 1, id_width), people[i].birth_year, people[i].manufacturer};
    (people[i].is_case ? cases : controls).push_back(m);
  }
  out.matching = match_case_controls(cases, controls, config.controls_per_case, config.year_tolerance);
  std::map<std::string, std::string> group_of;
  std::size_t group_no = 0;
  for (const auto& g : out.matching.groups) {
    const std::string gid = detail::numbered("G", ++group_no, id_width);
    group_of[g.case_id] = gid;
    for (const auto& c : g.control_ids) group_of[c] = gid;
  }
  for (const auto& c : out.matching.unused_controls) group_of[c] = detail::numbered("G", ++group_no, id_width);

  const auto& pm = config.concept_given_malignant;
  const auto& pb = config.concept_given_benign;
  std::vector<double> oracle_inputs_scores;
  std::vector<bool> oracle_labels;
  std::vector<ConceptLabels> lesion_concepts;

  for (std::size_t i = 0; i < people.size(); ++i) {
    WomanRecord w;
    w.woman_id = detail::numbered("W", i + 1, id_width);
    w.group_id = group_of.at(w.woman_id);
    w.is_case = people[i].is_case;
    w.birth_year = people[i].birth_year;
    w.manufacturer = people[i].manufacturer;
    const int n_images = image_rng.integer(config.images_min, config.images_max);
    for (int k = 1; k <= n_images; ++k) {
      ImageRecord im;
      im.image_id = w.woman_id + detail::numbered("-I", static_cast<std::size_t>(k), 2);
      im.height = config.image_height;
      im.width = config.image_width;
      for (std::size_t f = 0; f < kNumExclusionFlags; ++f) {
        if (image_rng.bernoulli(config.flag_rates[f])) im.flags.push_back(static_cast<ExclusionFlag>(f));
      }
      int n_lesions = 0;
      if (image_rng.bernoulli(config.lesion_image_rate)) {
        n_lesions = 1;
        while (n_lesions < config.max_lesions_per_image && image_rng.bernoulli(config.extra_lesion_rate)) ++n_lesions;
      }
      std::vector<detail::Ellipse> shapes;
      for (int l = 1; l <= n_lesions; ++l) {
        LesionAnnotation lesion;
        lesion.lesion_id = im.image_id + detail::numbered("-L", static_cast<std::size_t>(l), 1);
        lesion.malignant = w.is_case && image_rng.bernoulli(config.case_lesion_malignancy);
        ConceptLabels c;
        for (std::size_t q = 0; q < kNumConcepts; ++q) c[q] = image_rng.bernoulli(lesion.malignant ? pm[q] : pb[q]);
        lesion.descriptor = detail::descriptor_for(c, image_rng);
        detail::Ellipse e;
        RasterMask mask;
        do {
          e = detail::random_ellipse(image_rng, im.height, im.width);
          lesion.polygon = e.polygon(im.height, im.width);
          mask = rasterize(*lesion.polygon, im.height, im.width);
        } while (mask.area() == 0);
        lesion.bbox = *mask_bbox(mask);
        lesion.mask = std::move(mask);
        shapes.push_back(e);
        lesion_concepts.push_back(c);
        oracle_labels.push_back(lesion.malignant);
        im.lesions.push_back(std::move(lesion));
      }
      const bool any_malignant = std::any_of(im.lesions.begin(), im.lesions.end(),
                                             [](const LesionAnnotation& l) { return l.malignant; });
      im.birads_assessment = im.lesions.empty() ? "1" : (any_malignant ? "4" : "2");

      // Detector emulation: jittered copies of the lesions plus spurious boxes.
      auto emit = [&](const detail::Ellipse& e, double score, const ConceptLabels& truth, bool malignant) {
        Detection d;
        d.image_id = im.image_id;
        const auto mask = rasterize(e.polygon(im.height, im.width), im.height, im.width);
        if (mask.area() == 0) return;
        d.bbox = *mask_bbox(mask);
        d.mask = mask;
        d.score = detail::round_to(score, 1e-4);
        for (std::size_t q = 0; q < kNumConcepts; ++q) {
          const double center = truth[q] ? config.concept_logit_center : -config.concept_logit_center;
          d.concept_logits[q] = center + (config.concept_noise > 0.0 ? detect_rng.normal(0.0, config.concept_noise) : 0.0);
        }
        for (int s = 0; s < config.side_feature_dim; ++s) {
          d.side_features.push_back((malignant ? config.side_signal : 0.0) + detect_rng.normal());
        }
        out.detections.push_back(std::move(d));
      };
      for (std::size_t l = 0; l < im.lesions.size(); ++l) {
        if (!detect_rng.bernoulli(config.detect_rate)) continue;
        detail::Ellipse e = shapes[l];
        const double j = config.iou_jitter;
        e.cx += detect_rng.normal(0.0, j * e.a);
        e.cy += detect_rng.normal(0.0, j * e.b);
        e.a *= std::exp(detect_rng.normal(0.0, j));
        e.b *= std::exp(detect_rng.normal(0.0, j));
        e.angle += detect_rng.normal(0.0, j);
        emit(e, detect_rng.uniform(0.55, 1.0), im.lesions[l].labels(), im.lesions[l].malignant);
      }
      const int n_fp = detail::poisson(detect_rng, config.false_positives_per_image);
      for (int f = 0; f < n_fp; ++f) {
        const auto e = detail::random_ellipse(detect_rng, im.height, im.width);
        ConceptLabels c;
        for (std::size_t q = 0; q < kNumConcepts; ++q) c[q] = detect_rng.bernoulli(pb[q]);
        emit(e, detect_rng.uniform(0.05, 0.7), c, false);
      }
      w.images.push_back(std::move(im));
    }
    out.cohort.push_back(std::move(w));
  }

  out.n_lesions = oracle_labels.size();
  out.n_malignant = static_cast<std::size_t>(std::count(oracle_labels.begin(), oracle_labels.end(), true));
  const double prevalence = out.n_lesions ? static_cast<double>(out.n_malignant) / out.n_lesions : 0.0;
  out.oracle = OracleModel::from_config(config, prevalence);
  for (const auto& c : lesion_concepts) oracle_inputs_scores.push_back(out.oracle.logit_score(c));
  out.bayes_auroc_analytic = out.oracle.analytic_auroc();
  out.bayes_auroc_empirical = detail::pair_count_auroc(oracle_inputs_scores, oracle_labels);

  const boost::math::normal_distribution<double> standard;
  out.oracle_json = Json{{"seed", seed},
                         {"config", sim_config_to_json(config)},
                         {"weights", out.oracle.weights},
                         {"intercept", out.oracle.intercept},
                         {"concept_given_malignant", out.oracle.given_malignant},
                         {"concept_given_benign", out.oracle.given_benign},
                         {"lesion_prevalence", prevalence},
                         {"n_lesions", out.n_lesions},
                         {"n_malignant_lesions", out.n_malignant},
                         {"n_cases", n_cases},
                         {"n_controls", n_controls},
                         {"complete_groups", out.matching.groups.size() - out.matching.incomplete_cases.size()},
                         {"incomplete_groups", out.matching.incomplete_cases.size()},
                         {"unmatched_controls", out.matching.unused_controls.size()},
                         {"bayes_auroc_empirical", out.bayes_auroc_empirical},
                         {"bayes_auroc_analytic", out.bayes_auroc_analytic},
                         {"concept_auroc_expected",
                          config.concept_noise > 0.0
                              ? boost::math::cdf(standard, std::sqrt(2.0) * config.concept_logit_center / config.concept_noise)
                              : 1.0}};
  return out;
}

}  // namespace buscbm
