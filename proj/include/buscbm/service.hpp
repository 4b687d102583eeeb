#pragma once

// Read-only JSON API over a loaded session: case listing, per-image payloads,
// stateless what-if interventions and raw head predictions. Handlers are plain
// functions from request data to (status, body); http.hpp binds them to a
// server.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "buscbm/dataset.hpp"
#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/heads.hpp"
#include "buscbm/intervention.hpp"
#include "buscbm/io.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

struct Response {
  int status = 200;
  Json body;
};

inline Response error_response(int status, const std::string& message) {
  return {status, Json{{"error", message}, {"status", status}}};
}

/// Immutable state behind the service.
class SessionBundle {
 public:
  /// `images` may arrive in any order; they are served sorted by image_id.
  SessionBundle(std::vector<ImageEval> images, std::vector<NamedHead> heads, Json metadata = Json::object())
      : images_(std::move(images)), heads_(std::move(heads)), metadata_(std::move(metadata)) {
    std::sort(images_.begin(), images_.end(),
              [](const ImageEval& a, const ImageEval& b) { return a.image_id < b.image_id; });
    for (std::size_t i = 0; i < images_.size(); ++i) {
      if (!index_.emplace(images_[i].image_id, i).second) {
        throw InputError("session bundle: duplicate image id '" + images_[i].image_id + "'");
      }
    }
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const auto& head = heads_[h];
      if (!head_index_.emplace(head.name, h).second) {
        throw InputError("session bundle: duplicate head name '" + head.name + "'");
      }
      check_shapes(head.model.params, head.model.config);
      for (const auto& im : images_) {
        for (const auto& d : im.detections) {
          try {
            detail::check_input(head.model.config, d.concept_logits, d.side_features);
          } catch (const InputError& e) {
            throw InputError("session bundle: head '" + head.name + "' cannot score detections of image " +
                             im.image_id + ": " + e.what());
          }
        }
      }
    }
  }

  const std::vector<ImageEval>& images() const { return images_; }
  const std::vector<NamedHead>& heads() const { return heads_; }
  const Json& metadata() const { return metadata_; }

  const ImageEval* find_image(const std::string& id) const {
    const auto it = index_.find(id);
    return it == index_.end() ? nullptr : &images_[it->second];
  }

  const NamedHead* find_head(const std::string& name) const {
    const auto it = head_index_.find(name);
    return it == head_index_.end() ? nullptr : &heads_[it->second];
  }

 private:
  std::vector<ImageEval> images_;
  std::vector<NamedHead> heads_;
  Json metadata_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::size_t> head_index_;
};

/// Selects the split (test by default) of a post-exclusion cohort and joins
/// its detections.
inline SessionBundle load_session(const Cohort& cohort, std::span<const Detection> detections,
                                  std::vector<NamedHead> heads, std::optional<Split> split = Split::test,
                                  Json metadata = Json::object()) {
  return SessionBundle(build_image_evals(cohort, detections, split), std::move(heads), std::move(metadata));
}

class Service {
 public:
  static constexpr int kDefaultPageSize = 20;
  static constexpr int kMaxPageSize = 200;

  Service() = default;
  explicit Service(std::shared_ptr<const SessionBundle> bundle) : bundle_(std::move(bundle)) {}

  bool loaded() const { return bundle_ != nullptr; }

  Response healthz() const {
    Json body{{"status", loaded() ? "ready" : "not_loaded"}, {"loaded", loaded()}};
    if (loaded()) {
      body["images"] = bundle_->images().size();
      Json heads = Json::array();
      for (const auto& h : bundle_->heads()) heads.push_back(h.name);
      body["heads"] = heads;
    }
    return {loaded() ? 200 : 503, body};
  }

  /// GET /api/cases?page=&page_size= ; pages are 1-based.
  Response list_cases(const std::optional<std::string>& page_param,
                      const std::optional<std::string>& page_size_param) const {
    if (!loaded()) return error_response(503, "no session bundle loaded");
    const auto page = parse_positive(page_param, 1);
    const auto page_size = parse_positive(page_size_param, kDefaultPageSize);
    if (!page) return error_response(400, "page must be a positive integer");
    if (!page_size || *page_size > kMaxPageSize) {
      return error_response(400, "page_size must be an integer in [1, " + std::to_string(kMaxPageSize) + "]");
    }
    const auto& images = bundle_->images();
    Json cases = Json::array();
    const std::size_t start = static_cast<std::size_t>(*page - 1) * static_cast<std::size_t>(*page_size);
    for (std::size_t i = start; i < images.size() && i < start + static_cast<std::size_t>(*page_size); ++i) {
      const auto& im = images[i];
      cases.push_back(Json{{"image_id", im.image_id},
                           {"n_detections", im.detections.size()},
                           {"n_ground_truths", im.ground_truths.size()},
                           {"has_ground_truth", !im.ground_truths.empty()}});
    }
    return {200, Json{{"page", *page}, {"page_size", *page_size}, {"total", images.size()}, {"cases", cases}}};
  }

  /// GET /api/cases/{image_id}
  Response get_case(const std::string& image_id) const {
    if (!loaded()) return error_response(503, "no session bundle loaded");
    const ImageEval* im = bundle_->find_image(image_id);
    if (!im) return error_response(404, "unknown image id '" + image_id + "'");
    Json gts = Json::array();
    for (const auto& gt : im->ground_truths) gts.push_back(lesion_to_json(gt));
    Json lesions = Json::array();
    for (std::size_t i = 0; i < im->detections.size(); ++i) {
      const auto& d = im->detections[i];
      Json l{{"index", i}, {"bbox", detail::bbox_json(d.bbox)}, {"score", d.score}};
      if (d.mask) l["mask"] = detail::mask_json(*d.mask);
      l["concept_logits"] = logits_json(d.concept_logits);
      l["concept_probs"] = probs_json(d.concept_logits);
      l["side_features"] = d.side_features;
      l["cancer_prob"] = cancer_probs(d.concept_logits, d.side_features);
      lesions.push_back(std::move(l));
    }
    return {200, Json{{"image_id", im->image_id}, {"ground_truths", gts}, {"lesions", lesions}}};
  }

  /// POST /api/intervene
  /// {image_id, lesion_index, edits: {concept: true|false|probability}, strategy}
  Response intervene(const std::string& body) const {
    if (!loaded()) return error_response(503, "no session bundle loaded");
    Json req;
    try {
      req = Json::parse(body);
    } catch (const Json::exception& e) {
      return error_response(400, std::string("request body is not valid JSON: ") + e.what());
    }
    if (!req.is_object()) return error_response(400, "request body must be a JSON object");
    if (!req.contains("image_id") || !req["image_id"].is_string()) {
      return error_response(400, "'image_id' (string) is required");
    }
    if (!req.contains("lesion_index") || !req["lesion_index"].is_number_integer()) {
      return error_response(400, "'lesion_index' (integer) is required");
    }
    const std::string image_id = req["image_id"].get<std::string>();
    const ImageEval* im = bundle_->find_image(image_id);
    if (!im) return error_response(404, "unknown image id '" + image_id + "'");
    const auto index = req["lesion_index"].get<long long>();
    if (index < 0 || static_cast<std::size_t>(index) >= im->detections.size()) {
      return error_response(404, "image " + image_id + " has no lesion " + std::to_string(index));
    }
    CorrectionStrategy strategy{CorrectionKind::minimal};
    if (req.contains("strategy") && !req["strategy"].is_null()) {
      if (!req["strategy"].is_string()) return error_response(400, "'strategy' must be a string");
      try {
        strategy.kind = parse_correction(req["strategy"].get<std::string>());
      } catch (const InputError& e) {
        return error_response(400, e.what());
      }
    }
    const Json edits = req.value("edits", Json::object());
    if (!edits.is_object()) return error_response(400, "'edits' must be an object keyed by concept name");

    const Detection& det = im->detections[static_cast<std::size_t>(index)];
    const ConceptLabels predicted = binarize_logits(det.concept_logits);
    ConceptLogits corrected = det.concept_logits;
    Json log = Json::array();
    std::array<Json, kNumConcepts> edit_of;
    for (const auto& [name, value] : edits.items()) {
      std::size_t c = 0;
      try {
        c = static_cast<std::size_t>(parse_concept(name));
      } catch (const InputError& e) {
        return error_response(400, e.what());
      }
      if (!edit_of[c].is_null()) return error_response(400, "concept '" + name + "' edited twice");
      if (value.is_boolean()) {
        const bool truth = value.get<bool>();
        if (predicted[c] != truth && strategy.kind != CorrectionKind::none) corrected[c] = strategy.target_logit(truth);
        edit_of[c] = Json{{"kind", "label"}, {"value", truth}};
      } else if (value.is_number()) {
        const double p = value.get<double>();
        if (!(p > 0.0 && p < 1.0)) {
          return error_response(400, "probability edit for '" + name + "' must lie strictly between 0 and 1");
        }
        corrected[c] = logit(p);
        edit_of[c] = Json{{"kind", "probability"}, {"value", p}};
      } else if (!value.is_null()) {
        return error_response(400, "edit for '" + name + "' must be a boolean label or a probability");
      }
    }
    for (std::size_t c = 0; c < kNumConcepts; ++c) {
      log.push_back(Json{{"concept", kConceptNames[c]},
                         {"original_logit", det.concept_logits[c]},
                         {"corrected_logit", corrected[c]},
                         {"edit", edit_of[c]},
                         {"changed", corrected[c] != det.concept_logits[c]}});
    }
    return {200, Json{{"image_id", image_id},
                      {"lesion_index", index},
                      {"strategy", to_string(strategy.kind)},
                      {"original_logits", logits_json(det.concept_logits)},
                      {"corrected_logits", logits_json(corrected)},
                      {"corrected_probs", probs_json(corrected)},
                      {"original_cancer_prob", cancer_probs(det.concept_logits, det.side_features)},
                      {"cancer_prob", cancer_probs(corrected, det.side_features)},
                      {"log", log}}};
  }

  /// POST /api/predict {concept_logits:[5], side_features:[...], variant}
  Response predict(const std::string& body) const {
    if (!loaded()) return error_response(503, "no session bundle loaded");
    Json req;
    try {
      req = Json::parse(body);
    } catch (const Json::exception& e) {
      return error_response(400, std::string("request body is not valid JSON: ") + e.what());
    }
    if (!req.is_object()) return error_response(400, "request body must be a JSON object");
    const Json logits_j = req.value("concept_logits", Json());
    if (!logits_j.is_array() || logits_j.size() != kNumConcepts) {
      return error_response(400, "'concept_logits' must be an array of 5 numbers");
    }
    ConceptLogits logits;
    for (std::size_t c = 0; c < kNumConcepts; ++c) {
      if (!logits_j[c].is_number()) return error_response(400, "'concept_logits' must be an array of 5 numbers");
      logits[c] = logits_j[c].get<double>();
    }
    std::vector<double> side;
    const Json side_j = req.value("side_features", Json::array());
    if (!side_j.is_array()) return error_response(400, "'side_features' must be an array of numbers");
    for (const auto& v : side_j) {
      if (!v.is_number()) return error_response(400, "'side_features' must be an array of numbers");
      side.push_back(v.get<double>());
    }
    if (!logits.finite() || !std::all_of(side.begin(), side.end(), [](double x) { return std::isfinite(x); })) {
      return error_response(400, "inputs must be finite");
    }
    const NamedHead* head = nullptr;
    if (req.contains("variant") && !req["variant"].is_null()) {
      if (!req["variant"].is_string()) return error_response(400, "'variant' must be a string");
      head = bundle_->find_head(req["variant"].get<std::string>());
      if (!head) return error_response(404, "head '" + req["variant"].get<std::string>() + "' is not loaded");
    } else if (bundle_->heads().size() == 1) {
      head = &bundle_->heads().front();
    } else {
      return error_response(400, "'variant' is required when several heads are loaded");
    }
    try {
      const double p = forward(head->model.params, head->model.config, logits, side);
      return {200, Json{{"variant", head->name}, {"cancer_prob", p}}};
    } catch (const InputError& e) {
      return error_response(400, e.what());
    }
  }

 private:
  static std::optional<int> parse_positive(const std::optional<std::string>& text, int fallback) {
    if (!text) return fallback;
    const std::string& s = *text;
    if (s.empty() || s.size() > 9 || !std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      return std::nullopt;
    }
    const int v = std::stoi(s);
    return v >= 1 ? std::optional<int>(v) : std::nullopt;
  }

  static Json logits_json(const ConceptLogits& l) { return Json(l.values); }

  static Json probs_json(const ConceptLogits& l) {
    Json out = Json::object();
    for (std::size_t c = 0; c < kNumConcepts; ++c) out[std::string(kConceptNames[c])] = sigmoid(l[c]);
    return out;
  }

  Json cancer_probs(const ConceptLogits& logits, const std::vector<double>& side) const {
    Json out = Json::object();
    for (const auto& h : bundle_->heads()) out[h.name] = forward(h.model.params, h.model.config, logits, side);
    return out;
  }

  std::shared_ptr<const SessionBundle> bundle_;
};

}  // namespace buscbm
