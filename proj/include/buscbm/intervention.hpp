#pragma once

// Concept correction (minimal / maximal) and the corrected-concept cancer
// evaluation.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/heads.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/metrics.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

enum class CorrectionKind : std::uint8_t { none, minimal, maximal };

inline constexpr std::array<std::string_view, 3> kCorrectionNames = {"none", "minimal", "maximal"};

inline std::string_view to_string(CorrectionKind k) { return kCorrectionNames[static_cast<std::size_t>(k)]; }

inline CorrectionKind parse_correction(std::string_view s) {
  for (std::size_t i = 0; i < kCorrectionNames.size(); ++i) {
    if (s == kCorrectionNames[i]) return static_cast<CorrectionKind>(i);
  }
  throw InputError("unknown correction strategy '" + std::string(s) + "'");
}

struct CorrectionStrategy {
  CorrectionKind kind = CorrectionKind::none;

  /// Pseudo-probability a wrong concept is moved to: 0.51 / 0.99 toward a
  /// malignancy-indicative truth, 0.49 / 0.01 toward a benign one.
  double target_probability(bool truth) const {
    const double p = kind == CorrectionKind::maximal ? 0.99 : 0.51;
    return truth ? p : 1.0 - p;
  }

  double target_logit(bool truth) const { return logit(target_probability(truth)); }
};

struct ConceptCorrection {
  double original = 0.0;
  double corrected = 0.0;
  bool was_wrong = false;
};

struct InterventionLog {
  std::string image_id;
  std::size_t detection_index = 0;
  std::optional<std::string> matched_ground_truth;
  CorrectionKind strategy = CorrectionKind::none;
  std::array<ConceptCorrection, kNumConcepts> concepts{};
};

/// Wrong concepts (by the 0.5 rule) move to the strategy's target in sigmoid
/// space and back to logit space; correct concepts are left as they are.
inline std::pair<ConceptLogits, InterventionLog> correct_concepts(const ConceptLogits& pred,
                                                                  const ConceptLabels& truth,
                                                                  CorrectionStrategy strategy) {
  const ConceptLabels predicted = binarize_logits(pred);
  ConceptLogits out = pred;
  InterventionLog log;
  log.strategy = strategy.kind;
  for (std::size_t i = 0; i < kNumConcepts; ++i) {
    const bool wrong = predicted[i] != truth[i];
    if (wrong && strategy.kind != CorrectionKind::none) out[i] = strategy.target_logit(truth[i]);
    log.concepts[i] = {pred[i], out[i], wrong};
  }
  return {out, log};
}

struct InterventionResult {
  std::vector<Detection> detections;
  std::vector<InterventionLog> logs;  // one per detection
};

/// One ground truth: every detection is corrected toward it. Several: each
/// detection follows its maximal-IoU ground truth and zero-IoU detections are
/// left alone. None: nothing changes.
inline InterventionResult intervene_image(std::span<const Detection> dets,
                                          std::span<const LesionAnnotation> gts,
                                          CorrectionStrategy strategy,
                                          GeometryKind geometry = GeometryKind::mask) {
  InterventionResult out;
  out.detections.assign(dets.begin(), dets.end());
  std::vector<std::optional<std::size_t>> target(dets.size());
  if (gts.size() == 1) {
    for (auto& t : target) t = 0;
  } else if (gts.size() > 1) {
    const auto match = match_max_iou(dets, gts, geometry);
    for (const auto& p : match.pairs) target[p.detection] = p.ground_truth;
  }
  for (std::size_t i = 0; i < dets.size(); ++i) {
    InterventionLog log;
    if (target[i]) {
      const auto& gt = gts[*target[i]];
      auto [corrected, l] = correct_concepts(dets[i].concept_logits, gt.labels(), strategy);
      out.detections[i].concept_logits = corrected;
      log = std::move(l);
      log.matched_ground_truth = gt.lesion_id;
    } else {
      log.strategy = strategy.kind;
      for (std::size_t c = 0; c < kNumConcepts; ++c) {
        log.concepts[c] = {dets[i].concept_logits[c], dets[i].concept_logits[c], false};
      }
    }
    log.image_id = dets[i].image_id;
    log.detection_index = i;
    out.logs.push_back(std::move(log));
  }
  return out;
}

inline Json intervention_log_to_json(const InterventionLog& log) {
  Json concepts = Json::array();
  for (std::size_t c = 0; c < kNumConcepts; ++c) {
    concepts.push_back({{"concept", kConceptNames[c]},
                        {"original_logit", log.concepts[c].original},
                        {"corrected_logit", log.concepts[c].corrected},
                        {"was_wrong", log.concepts[c].was_wrong}});
  }
  return Json{{"image_id", log.image_id},
              {"detection_index", log.detection_index},
              {"matched_ground_truth", log.matched_ground_truth ? Json(*log.matched_ground_truth) : Json(nullptr)},
              {"strategy", to_string(log.strategy)},
              {"concepts", concepts}};
}

struct CorrectionShift {
  CorrectionKind strategy = CorrectionKind::none;
  std::size_t wrong_concepts = 0;
  std::size_t concepts_seen = 0;      // concepts of detections that had a correction target
  double mean_abs_delta_logit = 0.0;  // over wrong concepts; 0 when none are wrong
};

/// How far a strategy moves the wrong concepts, pooled over all images.
inline CorrectionShift correction_shift(std::span<const ImageEval> images, CorrectionKind kind,
                                        GeometryKind geometry = GeometryKind::mask) {
  CorrectionShift out;
  out.strategy = kind;
  double total = 0.0;
  for (const auto& im : images) {
    for (const auto& log : intervene_image(im.detections, im.ground_truths, {kind}, geometry).logs) {
      if (!log.matched_ground_truth) continue;
      for (const auto& c : log.concepts) {
        ++out.concepts_seen;
        if (!c.was_wrong) continue;
        ++out.wrong_concepts;
        total += std::abs(c.corrected - c.original);
      }
    }
  }
  if (out.wrong_concepts > 0) out.mean_abs_delta_logit = total / static_cast<double>(out.wrong_concepts);
  return out;
}

/// Cancer probabilities from a head on each detection's current logits; side
/// features are passed through untouched.
inline void score_detections(std::span<Detection> dets, const HeadModel& head) {
  for (auto& d : dets) d.cancer_prob = forward(head.params, head.config, d.concept_logits, d.side_features);
}

struct CorrectionRow {
  std::string head;
  CorrectionKind strategy = CorrectionKind::none;
  double iou_threshold = 0.5;
  AurocEstimate estimate;
};

struct NamedHead {
  std::string name;
  HeadModel model;
};

/// Cancer AUROC per head x strategy x IoU threshold on corrected concepts.
inline std::vector<CorrectionRow> evaluate_with_correction(
    std::span<const ImageEval> images, std::span<const NamedHead> heads,
    std::span<const CorrectionKind> strategies, std::span<const double> iou_thresholds,
    GeometryKind geometry = GeometryKind::mask, UnmatchedPolicy policy = UnmatchedPolicy::exclude) {
  std::vector<CorrectionRow> rows;
  for (const auto& head : heads) {
    for (CorrectionKind kind : strategies) {
      std::vector<ImageEval> corrected;
      corrected.reserve(images.size());
      for (const auto& im : images) {
        ImageEval c{im.image_id, {}, im.ground_truths};
        c.detections = intervene_image(im.detections, im.ground_truths, {kind}, geometry).detections;
        score_detections(c.detections, head.model);
        corrected.push_back(std::move(c));
      }
      for (double t : iou_thresholds) {
        rows.push_back({head.name, kind, t,
                        matched_classification_auroc(corrected, t, ClassificationTarget::cancer(), geometry,
                                                     policy)});
      }
    }
  }
  return rows;
}

}  // namespace buscbm
