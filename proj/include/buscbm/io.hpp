#pragma once

// Line-delimited JSON cohort and detection files.
//
// Cohort: one woman per line
//   {woman_id, group_id, is_case, birth_year, manufacturer, split?,
//    images: [{image_id, height, width, flags: [...], birads_assessment?,
//              lesions: [{lesion_id, bbox: [x0,y0,x1,y1],
//                         mask: {height, width, runs}, polygon?: [[x,y],...],
//                         shape, orientation, margin, echo_pattern, posterior,
//                         malignant}]}]}
// Detections: one detection per line
//   {image_id, bbox, mask?, score, concept_logits: [5], side_features: [...],
//    cancer_prob?}
// `concept_probs: [5]` may replace concept_logits on input; it is converted to
// logits once. Unknown fields are carried through to the output.

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

namespace detail {

/// Reads the fields of one JSON object, remembering which keys were consumed
/// so the rest can be preserved, and prefixing every error with a location.
class FieldReader {
 public:
  FieldReader(const Json& object, std::string where) : object_(object), where_(std::move(where)) {
    if (!object_.is_object()) fail("expected a JSON object");
  }

  [[noreturn]] void fail(const std::string& message) const { throw InputError(where_ + ": " + message); }

  const std::string& where() const { return where_; }

  bool has(const std::string& key) const { return object_.contains(key); }

  const Json& required(const std::string& key) {
    known_.insert(key);
    const auto it = object_.find(key);
    if (it == object_.end()) fail("missing required field '" + key + "'");
    return *it;
  }

  const Json* optional(const std::string& key) {
    known_.insert(key);
    const auto it = object_.find(key);
    return it == object_.end() || it->is_null() ? nullptr : &*it;
  }

  template <typename T>
  T get(const std::string& key) {
    return convert<T>(required(key), key);
  }

  template <typename T>
  T convert(const Json& value, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!value.is_number()) fail("field '" + key + "' must be a number");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!value.is_number_integer()) fail("field '" + key + "' must be an integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!value.is_boolean()) fail("field '" + key + "' must be a boolean");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!value.is_string()) fail("field '" + key + "' must be a string");
      }
      return value.get<T>();
    } catch (const Json::exception& e) {
      fail("field '" + key + "': " + e.what());
    }
  }

  Json extras() const {
    Json out = Json::object();
    for (const auto& [key, value] : object_.items()) {
      if (!known_.count(key)) out[key] = value;
    }
    return out;
  }

 private:
  const Json& object_;
  std::string where_;
  std::set<std::string> known_;
};

inline void merge_extras(Json& out, const Json& extra) {
  for (const auto& [key, value] : extra.items()) {
    if (!out.contains(key)) out[key] = value;
  }
}

inline BBox read_bbox(FieldReader& r) {
  const Json& v = r.required("bbox");
  if (!v.is_array() || v.size() != 4) r.fail("field 'bbox' must be [x_min, y_min, x_max, y_max]");
  for (const auto& x : v) {
    if (!x.is_number()) r.fail("field 'bbox' must contain numbers");
  }
  BBox b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
  if (!b.valid()) r.fail("field 'bbox' is not a valid box (x_max >= x_min, y_max >= y_min)");
  return b;
}

inline Json bbox_json(const BBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

inline RasterMask read_mask(const Json& v, const std::string& where) {
  FieldReader r(v, where + ", mask");
  const int h = r.get<int>("height");
  const int w = r.get<int>("width");
  const Json& runs_json = r.required("runs");
  if (!runs_json.is_array()) r.fail("field 'runs' must be an array");
  std::vector<std::uint32_t> runs;
  for (const auto& x : runs_json) {
    if (!x.is_number_unsigned() && !(x.is_number_integer() && x.get<long long>() >= 0)) {
      r.fail("field 'runs' must contain non-negative integers");
    }
    runs.push_back(x.get<std::uint32_t>());
  }
  try {
    return RasterMask(h, w, std::move(runs));
  } catch (const InputError& e) {
    r.fail(e.what());
  }
}

inline Json mask_json(const RasterMask& m) {
  return Json{{"height", m.height()}, {"width", m.width()}, {"runs", m.runs()}};
}

inline Polygon read_polygon(const Json& v, const FieldReader& r) {
  if (!v.is_array()) r.fail("field 'polygon' must be an array of [x, y] points");
  Polygon p;
  for (const auto& pt : v) {
    if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
      r.fail("field 'polygon' must contain [x, y] number pairs");
    }
    p.vertices.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  if (!p.valid()) r.fail("field 'polygon' needs at least 3 finite vertices");
  return p;
}

inline Json polygon_json(const Polygon& p) {
  Json out = Json::array();
  for (const auto& v : p.vertices) out.push_back(Json::array({v.x, v.y}));
  return out;
}

template <typename E>
E read_category(FieldReader& r, const std::string& key) {
  const auto text = r.get<std::string>(key);
  try {
    return parse_category<E>(text);
  } catch (const InputError& e) {
    r.fail(e.what());
  }
}

}  // namespace detail

inline LesionAnnotation lesion_from_json(const Json& j, int height, int width, const std::string& where) {
  detail::FieldReader r(j, where);
  LesionAnnotation l;
  l.lesion_id = r.get<std::string>("lesion_id");
  detail::FieldReader located(j, where + ", lesion " + l.lesion_id);
  located.required("lesion_id");
  l.bbox = detail::read_bbox(located);
  if (const Json* m = located.optional("mask")) l.mask = detail::read_mask(*m, located.where());
  if (const Json* p = located.optional("polygon")) l.polygon = detail::read_polygon(*p, located);
  if (!l.mask && !l.polygon) located.fail("missing required field 'mask' (or 'polygon')");
  l.descriptor.shape = detail::read_category<Shape>(located, "shape");
  l.descriptor.orientation = detail::read_category<Orientation>(located, "orientation");
  l.descriptor.margin = detail::read_category<Margin>(located, "margin");
  l.descriptor.echo_pattern = detail::read_category<EchoPattern>(located, "echo_pattern");
  l.descriptor.posterior = detail::read_category<Posterior>(located, "posterior");
  l.malignant = located.get<bool>("malignant");

  const BBox& b = l.bbox;
  if (b.x_min < 0.0 || b.y_min < 0.0 || b.x_max > width || b.y_max > height) {
    located.fail("bbox lies outside the " + std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  if (l.polygon) {
    for (const auto& v : l.polygon->vertices) {
      if (v.x < 0.0 || v.y < 0.0 || v.x > width || v.y > height) located.fail("polygon lies outside the image");
    }
  }
  if (l.mask) {
    if (l.mask->height() != height || l.mask->width() != width) {
      located.fail("mask is " + std::to_string(l.mask->height()) + "x" + std::to_string(l.mask->width()) +
                   " but the image is " + std::to_string(height) + "x" + std::to_string(width));
    }
    if (const auto tight = mask_bbox(*l.mask)) {
      if (std::abs(tight->x_min - b.x_min) > 0.5 || std::abs(tight->y_min - b.y_min) > 0.5 ||
          std::abs(tight->x_max - b.x_max) > 0.5 || std::abs(tight->y_max - b.y_max) > 0.5) {
        located.fail("bbox is not the tight box of the mask");
      }
    }
  } else {
    l.mask = rasterize(*l.polygon, height, width);
    l.mask_derived = true;
  }
  l.extra = located.extras();
  return l;
}

inline Json lesion_to_json(const LesionAnnotation& l) {
  Json out{{"lesion_id", l.lesion_id},
           {"bbox", detail::bbox_json(l.bbox)},
           {"shape", to_string(l.descriptor.shape)},
           {"orientation", to_string(l.descriptor.orientation)},
           {"margin", to_string(l.descriptor.margin)},
           {"echo_pattern", to_string(l.descriptor.echo_pattern)},
           {"posterior", to_string(l.descriptor.posterior)},
           {"malignant", l.malignant}};
  if (l.mask && !l.mask_derived) out["mask"] = detail::mask_json(*l.mask);
  if (l.polygon) out["polygon"] = detail::polygon_json(*l.polygon);
  detail::merge_extras(out, l.extra);
  return out;
}

inline ImageRecord image_from_json(const Json& j, const std::string& where) {
  detail::FieldReader r(j, where);
  ImageRecord im;
  im.image_id = r.get<std::string>("image_id");
  detail::FieldReader located(j, where + ", image " + im.image_id);
  located.required("image_id");
  im.height = located.get<int>("height");
  im.width = located.get<int>("width");
  if (im.height <= 0 || im.width <= 0) located.fail("image dimensions must be positive");
  const Json& flags = located.required("flags");
  if (!flags.is_array()) located.fail("field 'flags' must be an array");
  for (const auto& f : flags) {
    if (!f.is_string()) located.fail("field 'flags' must contain strings");
    try {
      im.flags.push_back(parse_exclusion_flag(f.get<std::string>()));
    } catch (const InputError& e) {
      located.fail(e.what());
    }
  }
  if (const Json* b = located.optional("birads_assessment")) {
    im.birads_assessment = located.convert<std::string>(*b, "birads_assessment");
  }
  const Json& lesions = located.required("lesions");
  if (!lesions.is_array()) located.fail("field 'lesions' must be an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < lesions.size(); ++i) {
    im.lesions.push_back(
        lesion_from_json(lesions[i], im.height, im.width, located.where() + ", lesions[" + std::to_string(i) + "]"));
    if (!ids.insert(im.lesions.back().lesion_id).second) {
      located.fail("duplicate lesion_id '" + im.lesions.back().lesion_id + "'");
    }
  }
  im.extra = located.extras();
  return im;
}

inline Json image_to_json(const ImageRecord& im) {
  Json flags = Json::array();
  for (auto f : im.flags) flags.push_back(to_string(f));
  Json lesions = Json::array();
  for (const auto& l : im.lesions) lesions.push_back(lesion_to_json(l));
  Json out{{"image_id", im.image_id}, {"height", im.height}, {"width", im.width},
           {"flags", flags},          {"lesions", lesions}};
  if (im.birads_assessment) out["birads_assessment"] = *im.birads_assessment;
  detail::merge_extras(out, im.extra);
  return out;
}

inline WomanRecord woman_from_json(const Json& j, const std::string& where) {
  detail::FieldReader r(j, where);
  WomanRecord w;
  w.woman_id = r.get<std::string>("woman_id");
  detail::FieldReader located(j, where + ", woman " + w.woman_id);
  located.required("woman_id");
  w.group_id = located.get<std::string>("group_id");
  w.is_case = located.get<bool>("is_case");
  w.birth_year = located.get<int>("birth_year");
  try {
    w.manufacturer = parse_manufacturer(located.get<std::string>("manufacturer"));
    if (const Json* s = located.optional("split")) w.split = parse_split(located.convert<std::string>(*s, "split"));
  } catch (const InputError& e) {
    if (std::string(e.what()).rfind(located.where(), 0) == 0) throw;
    located.fail(e.what());
  }
  const Json& images = located.required("images");
  if (!images.is_array()) located.fail("field 'images' must be an array");
  for (std::size_t i = 0; i < images.size(); ++i) {
    w.images.push_back(image_from_json(images[i], located.where() + ", images[" + std::to_string(i) + "]"));
  }
  w.extra = located.extras();
  return w;
}

inline Json woman_to_json(const WomanRecord& w) {
  Json images = Json::array();
  for (const auto& im : w.images) images.push_back(image_to_json(im));
  Json out{{"woman_id", w.woman_id},
           {"group_id", w.group_id},
           {"is_case", w.is_case},
           {"birth_year", w.birth_year},
           {"manufacturer", to_string(w.manufacturer)},
           {"images", images}};
  if (w.split) out["split"] = to_string(*w.split);
  detail::merge_extras(out, w.extra);
  return out;
}

namespace detail {

template <typename Fn>
void for_each_line(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + " line " + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw InputError(where + ": invalid JSON (" + e.what() + ")");
    }
    fn(j, where);
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace detail

inline Cohort read_cohort(std::istream& in, const std::string& source = "cohort") {
  Cohort cohort;
  std::set<std::string> women;
  std::set<std::string> images;
  detail::for_each_line(in, source, [&](const Json& j, const std::string& where) {
    cohort.push_back(woman_from_json(j, where));
    const auto& w = cohort.back();
    if (!women.insert(w.woman_id).second) throw InputError(where + ": duplicate woman_id '" + w.woman_id + "'");
    for (const auto& im : w.images) {
      if (!images.insert(im.image_id).second) {
        throw InputError(where + ": duplicate image_id '" + im.image_id + "'");
      }
    }
  });
  return cohort;
}

inline void write_cohort(std::ostream& out, const Cohort& cohort) {
  for (const auto& w : cohort) out << woman_to_json(w).dump() << '\n';
}

inline Detection detection_from_json(const Json& j, const std::string& where) {
  detail::FieldReader r(j, where);
  Detection d;
  d.image_id = r.get<std::string>("image_id");
  d.bbox = detail::read_bbox(r);
  if (const Json* m = r.optional("mask")) d.mask = detail::read_mask(*m, where);
  d.score = r.get<double>("score");
  if (!(d.score >= 0.0 && d.score <= 1.0)) r.fail("field 'score' must lie in [0, 1]");

  auto read_five = [&](const Json& v, const std::string& key) {
    if (!v.is_array() || v.size() != kNumConcepts) r.fail("field '" + key + "' must hold 5 numbers");
    std::array<double, kNumConcepts> out{};
    for (std::size_t i = 0; i < kNumConcepts; ++i) {
      if (!v[i].is_number()) r.fail("field '" + key + "' must hold 5 numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  };
  if (const Json* logits = r.optional("concept_logits")) {
    d.concept_logits.values = read_five(*logits, "concept_logits");
  } else if (const Json* probs = r.optional("concept_probs")) {
    const auto p = read_five(*probs, "concept_probs");
    for (std::size_t i = 0; i < kNumConcepts; ++i) {
      if (!(p[i] > 0.0 && p[i] < 1.0)) r.fail("field 'concept_probs' values must lie in (0, 1)");
      d.concept_logits[i] = logit(p[i]);
    }
  } else {
    r.fail("missing required field 'concept_logits'");
  }
  if (!d.concept_logits.finite()) r.fail("field 'concept_logits' must be finite");

  const Json& side = r.required("side_features");
  if (!side.is_array()) r.fail("field 'side_features' must be an array");
  for (const auto& v : side) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) r.fail("field 'side_features' must hold finite numbers");
    d.side_features.push_back(v.get<double>());
  }
  if (const Json* p = r.optional("cancer_prob")) {
    d.cancer_prob = r.convert<double>(*p, "cancer_prob");
    if (!(*d.cancer_prob >= 0.0 && *d.cancer_prob <= 1.0)) r.fail("field 'cancer_prob' must lie in [0, 1]");
  }
  d.extra = r.extras();
  return d;
}

inline Json detection_to_json(const Detection& d) {
  Json out{{"image_id", d.image_id},
           {"bbox", detail::bbox_json(d.bbox)},
           {"score", d.score},
           {"concept_logits", d.concept_logits.values},
           {"side_features", d.side_features}};
  if (d.mask) out["mask"] = detail::mask_json(*d.mask);
  if (d.cancer_prob) out["cancer_prob"] = *d.cancer_prob;
  detail::merge_extras(out, d.extra);
  return out;
}

inline std::vector<Detection> read_detections(std::istream& in, const std::string& source = "detections") {
  std::vector<Detection> out;
  detail::for_each_line(in, source, [&](const Json& j, const std::string& where) {
    out.push_back(detection_from_json(j, where));
  });
  return out;
}

inline void write_detections(std::ostream& out, std::span<const Detection> dets) {
  for (const auto& d : dets) out << detection_to_json(d).dump() << '\n';
}

inline Cohort read_cohort_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_cohort(in, path);
}

inline void write_cohort_file(const std::string& path, const Cohort& cohort) {
  auto out = detail::open_output(path);
  write_cohort(out, cohort);
}

inline std::vector<Detection> read_detections_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_detections(in, path);
}

inline void write_detections_file(const std::string& path, std::span<const Detection> dets) {
  auto out = detail::open_output(path);
  write_detections(out, dets);
}

inline Json read_json_file(const std::string& path) {
  auto in = detail::open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(path + ": invalid JSON (" + e.what() + ")");
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

}  // namespace buscbm
