#pragma once

// ACR BI-RADS ultrasound masses lexicon and its binarization into
// malignancy-indicative concepts.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "buscbm/error.hpp"

namespace buscbm {

enum class Shape : std::uint8_t { oval, round, irregular };
enum class Orientation : std::uint8_t { parallel, not_parallel };
enum class Margin : std::uint8_t { circumscribed, indistinct, angular, microlobulated, spiculated };
enum class EchoPattern : std::uint8_t {
  anechoic,
  hyperechoic,
  complex_cystic_solid,
  hypoechoic,
  isoechoic,
  heterogeneous
};
enum class Posterior : std::uint8_t { none, enhancement, shadowing, combined };

/// Vocabulary for one lexicon property. `names` holds the canonical file
/// spelling; `identifiers` holds the enumerator spelling, also accepted on
/// input. Index 0 is always the benign-indicative category.
template <typename E>
struct CategoryTraits;

template <>
struct CategoryTraits<Shape> {
  static constexpr std::string_view field = "shape";
  static constexpr std::array<std::string_view, 3> names = {"oval", "round", "irregular"};
  static constexpr std::array<std::string_view, 3> identifiers = {"oval", "round", "irregular"};
};

template <>
struct CategoryTraits<Orientation> {
  static constexpr std::string_view field = "orientation";
  static constexpr std::array<std::string_view, 2> names = {"parallel", "not parallel"};
  static constexpr std::array<std::string_view, 2> identifiers = {"parallel", "not_parallel"};
};

template <>
struct CategoryTraits<Margin> {
  static constexpr std::string_view field = "margin";
  static constexpr std::array<std::string_view, 5> names = {
      "circumscribed", "indistinct", "angular", "microlobulated", "spiculated"};
  static constexpr std::array<std::string_view, 5> identifiers = names;
};

template <>
struct CategoryTraits<EchoPattern> {
  static constexpr std::string_view field = "echo_pattern";
  static constexpr std::array<std::string_view, 6> names = {
      "anechoic",  "hyperechoic", "complex cystic and solid",
      "hypoechoic", "isoechoic",  "heterogeneous"};
  static constexpr std::array<std::string_view, 6> identifiers = {
      "anechoic",  "hyperechoic", "complex_cystic_solid",
      "hypoechoic", "isoechoic",  "heterogeneous"};
};

template <>
struct CategoryTraits<Posterior> {
  static constexpr std::string_view field = "posterior";
  static constexpr std::array<std::string_view, 4> names = {"none", "enhancement", "shadowing",
                                                            "combined"};
  static constexpr std::array<std::string_view, 4> identifiers = names;
};

template <typename E>
constexpr std::size_t category_count() {
  return CategoryTraits<E>::names.size();
}

template <typename E>
constexpr std::string_view to_string(E value) {
  return CategoryTraits<E>::names[static_cast<std::size_t>(value)];
}

namespace detail {

// Lowercase, '_' and '-' become spaces, runs of whitespace collapse.
inline std::string normalize_category(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || ch == '_' || ch == '-') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace detail

template <typename E>
E parse_category(std::string_view text) {
  using Traits = CategoryTraits<E>;
  const std::string key = detail::normalize_category(text);
  for (std::size_t i = 0; i < Traits::names.size(); ++i) {
    if (key == detail::normalize_category(Traits::names[i]) ||
        key == detail::normalize_category(Traits::identifiers[i])) {
      return static_cast<E>(i);
    }
  }
  throw InputError("unknown " + std::string(Traits::field) + " category '" + std::string(text) +
                   "'");
}

struct MassDescriptor {
  Shape shape = Shape::oval;
  Orientation orientation = Orientation::parallel;
  Margin margin = Margin::circumscribed;
  EchoPattern echo_pattern = EchoPattern::anechoic;
  Posterior posterior = Posterior::none;

  friend bool operator==(const MassDescriptor&, const MassDescriptor&) = default;
};

inline constexpr std::size_t kNumConcepts = 5;

// Canonical concept order used by every array in the library.
enum class Concept : std::uint8_t { shape, orientation, margin, echo, posterior };

inline constexpr std::array<std::string_view, kNumConcepts> kConceptNames = {
    "shape", "orientation", "margin", "echo", "posterior"};

inline Concept parse_concept(std::string_view name) {
  const std::string key = detail::normalize_category(name);
  for (std::size_t i = 0; i < kNumConcepts; ++i) {
    if (key == kConceptNames[i]) return static_cast<Concept>(i);
  }
  if (key == "echo pattern") return Concept::echo;
  throw InputError("unknown concept '" + std::string(name) + "'");
}

/// Binarized concepts; true means malignancy-indicative.
struct ConceptLabels {
  std::array<bool, kNumConcepts> values{};

  bool operator[](std::size_t i) const { return values[i]; }
  bool& operator[](std::size_t i) { return values[i]; }
  bool any() const { return std::any_of(values.begin(), values.end(), [](bool v) { return v; }); }

  friend bool operator==(const ConceptLabels&, const ConceptLabels&) = default;
};

struct ConceptLogits {
  std::array<double, kNumConcepts> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const ConceptLogits&, const ConceptLogits&) = default;
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Benign-indicative only for oval, parallel, circumscribed, anechoic and no
/// posterior features; every other category is malignancy-indicative.
inline ConceptLabels binarize(const MassDescriptor& d) {
  ConceptLabels out;
  out[0] = d.shape != Shape::oval;
  out[1] = d.orientation != Orientation::parallel;
  out[2] = d.margin != Margin::circumscribed;
  out[3] = d.echo_pattern != EchoPattern::anechoic;
  out[4] = d.posterior != Posterior::none;
  return out;
}

/// A concept is malignancy-indicative when sigmoid(logit) >= threshold_prob.
/// A logit of exactly zero at the default threshold resolves to true.
inline ConceptLabels binarize_logits(const ConceptLogits& logits, double threshold_prob = 0.5) {
  if (!logits.finite()) throw InputError("binarize_logits: non-finite concept logit");
  if (!(threshold_prob > 0.0 && threshold_prob < 1.0)) {
    throw InputError("binarize_logits: threshold must lie in (0, 1)");
  }
  const double cut = threshold_prob == 0.5 ? 0.0 : logit(threshold_prob);
  ConceptLabels out;
  for (std::size_t i = 0; i < kNumConcepts; ++i) out[i] = logits[i] >= cut;
  return out;
}

inline MassDescriptor parse_descriptor(std::string_view shape, std::string_view orientation,
                                       std::string_view margin, std::string_view echo_pattern,
                                       std::string_view posterior) {
  MassDescriptor d;
  d.shape = parse_category<Shape>(shape);
  d.orientation = parse_category<Orientation>(orientation);
  d.margin = parse_category<Margin>(margin);
  d.echo_pattern = parse_category<EchoPattern>(echo_pattern);
  d.posterior = parse_category<Posterior>(posterior);
  return d;
}

// Canonical spellings in concept order.
inline std::array<std::string, kNumConcepts> serialize_descriptor(const MassDescriptor& d) {
  return {std::string(to_string(d.shape)), std::string(to_string(d.orientation)),
          std::string(to_string(d.margin)), std::string(to_string(d.echo_pattern)),
          std::string(to_string(d.posterior))};
}

}  // namespace buscbm
