#pragma once

// Joins a cohort with its detection file into per-image evaluation units and
// cancer-head training records.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/heads.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

/// Images of the selected split (all women when `split` is empty), in cohort
/// order, each with its detections in file order. Detections of images outside
/// the selection are ignored.
inline std::vector<ImageEval> build_image_evals(const Cohort& cohort, std::span<const Detection> detections,
                                                std::optional<Split> split = std::nullopt) {
  std::map<std::string, std::vector<Detection>> by_image;
  for (const auto& d : detections) by_image[d.image_id].push_back(d);
  std::vector<ImageEval> out;
  for (const auto& w : cohort) {
    if (split) {
      if (!w.split) throw InputError("woman " + w.woman_id + " has no split assignment; run `split` first");
      if (*w.split != *split) continue;
    }
    for (const auto& im : w.images) {
      ImageEval e;
      e.image_id = im.image_id;
      e.ground_truths = im.lesions;
      if (auto it = by_image.find(im.image_id); it != by_image.end()) e.detections = it->second;
      out.push_back(std::move(e));
    }
  }
  return out;
}

enum class ConceptSource { predicted, ground_truth };

/// Logit magnitude used for ground-truth concepts in the ablation: the
/// pseudo-probability 0.99 / 0.01 mapped back to logit space.
inline double ground_truth_concept_logit(bool label) { return logit(label ? 0.99 : 0.01); }

/// One record per detection matched one-to-one to a ground-truth lesion at
/// `iou_threshold`; the label is that lesion's malignancy. With the
/// ground-truth source the matched lesion's binarized concepts replace the
/// predicted logits.
inline std::vector<TrainRecord> build_train_records(std::span<const ImageEval> images, double iou_threshold = 0.5,
                                                    GeometryKind geometry = GeometryKind::mask,
                                                    ConceptSource source = ConceptSource::predicted) {
  std::vector<TrainRecord> out;
  for (const auto& im : images) {
    const auto match = match_greedy_one_to_one(std::span<const Detection>(im.detections),
                                               std::span<const LesionAnnotation>(im.ground_truths),
                                               iou_threshold, geometry);
    for (const auto& p : match.pairs) {
      const auto& det = im.detections[p.detection];
      const auto& gt = im.ground_truths[p.ground_truth];
      TrainRecord r;
      r.concept_logits = det.concept_logits;
      if (source == ConceptSource::ground_truth) {
        const auto labels = gt.labels();
        for (std::size_t c = 0; c < kNumConcepts; ++c) r.concept_logits[c] = ground_truth_concept_logit(labels[c]);
      }
      r.side_features = det.side_features;
      r.cancer_label = gt.malignant;
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace buscbm
