#pragma once

// Cohort and detection records as they appear in the line-delimited files.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/lexicon.hpp"

namespace buscbm {

using Json = nlohmann::json;

/// Image-level exclusion reasons, in precedence order. An image carrying
/// several flags is reported under the first one in this order.
enum class ExclusionFlag : std::uint8_t {
  clip_marker,
  biopsy_needle,
  implant,
  biopsy_session,
  invalid,
  elastography,
  linkage_missing,
  incomplete_annotation,
  annotator_unsure,
};

inline constexpr std::size_t kNumExclusionFlags = 9;

inline constexpr std::array<std::string_view, kNumExclusionFlags> kExclusionFlagNames = {
    "clip_marker",    "biopsy_needle",   "implant",
    "biopsy_session", "invalid",         "elastography",
    "linkage_missing", "incomplete_annotation", "annotator_unsure"};

inline std::string_view to_string(ExclusionFlag f) {
  return kExclusionFlagNames[static_cast<std::size_t>(f)];
}

inline ExclusionFlag parse_exclusion_flag(std::string_view s) {
  for (std::size_t i = 0; i < kNumExclusionFlags; ++i) {
    if (s == kExclusionFlagNames[i]) return static_cast<ExclusionFlag>(i);
  }
  throw InputError("unknown exclusion flag '" + std::string(s) + "'");
}

enum class Manufacturer : std::uint8_t { philips, siemens, atl, other };

inline constexpr std::array<std::string_view, 4> kManufacturerNames = {"philips", "siemens", "atl",
                                                                       "other"};

inline std::string_view to_string(Manufacturer m) {
  return kManufacturerNames[static_cast<std::size_t>(m)];
}

inline Manufacturer parse_manufacturer(std::string_view s) {
  const std::string key = detail::normalize_category(s);
  for (std::size_t i = 0; i < kManufacturerNames.size(); ++i) {
    if (key == kManufacturerNames[i]) return static_cast<Manufacturer>(i);
  }
  throw InputError("unknown manufacturer '" + std::string(s) + "'");
}

enum class Split : std::uint8_t { train, val, test };

inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

inline std::string_view to_string(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

inline Split parse_split(std::string_view s) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (s == kSplitNames[i]) return static_cast<Split>(i);
  }
  if (s == "validation") return Split::val;
  throw InputError("unknown split '" + std::string(s) + "'");
}

struct LesionAnnotation {
  std::string lesion_id;
  BBox bbox;
  std::optional<RasterMask> mask;
  std::optional<Polygon> polygon;
  MassDescriptor descriptor;
  bool malignant = false;
  // Mask rasterized from the polygon on load; not written back.
  bool mask_derived = false;
  Json extra = Json::object();

  ConceptLabels labels() const { return binarize(descriptor); }
};

struct Detection {
  std::string image_id;
  BBox bbox;
  std::optional<RasterMask> mask;
  double score = 0.0;
  ConceptLogits concept_logits;
  std::vector<double> side_features;
  std::optional<double> cancer_prob;
  Json extra = Json::object();
};

struct ImageRecord {
  std::string image_id;
  int height = 0;
  int width = 0;
  std::vector<ExclusionFlag> flags;
  std::optional<std::string> birads_assessment;
  std::vector<LesionAnnotation> lesions;
  Json extra = Json::object();
};

struct WomanRecord {
  std::string woman_id;
  std::string group_id;
  bool is_case = false;
  int birth_year = 0;
  Manufacturer manufacturer = Manufacturer::other;
  std::vector<ImageRecord> images;
  std::optional<Split> split;
  Json extra = Json::object();
};

using Cohort = std::vector<WomanRecord>;

/// Detections and ground truth of one image, the unit every evaluation
/// routine iterates over.
struct ImageEval {
  std::string image_id;
  std::vector<Detection> detections;
  std::vector<LesionAnnotation> ground_truths;
};

}  // namespace buscbm
