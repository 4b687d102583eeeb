#pragma once

// Evaluation statistics: COCO-style average precision, AUROC with DeLong
// confidence intervals, Cohen's kappa and the matched-detection protocols.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "buscbm/error.hpp"
#include "buscbm/geometry.hpp"
#include "buscbm/lexicon.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

// ---------------------------------------------------------------------------
// Average precision

inline constexpr std::size_t kNumIouThresholds = 10;
inline constexpr std::size_t kNumRecallPoints = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline constexpr double ap_iou_threshold(std::size_t k) {
  return static_cast<double>(50 + 5 * k) / 100.0;
}

struct APTriple {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::array<double, kNumIouThresholds> per_threshold{};
};

struct APReport {
  APTriple box;
  APTriple mask;
  int max_dets = 10;
  std::size_t n_images = 0;
  std::size_t n_ground_truths = 0;
  std::size_t n_detections = 0;  // after the per-image cap
};

/// 101-point interpolated area under a precision-recall sweep. `tp` flags are
/// given in descending-score order; `n_gt` is the number of ground truths.
inline double interpolated_ap(const std::vector<bool>& tp, std::size_t n_gt) {
  const std::size_t n = tp.size();
  if (n == 0) return 0.0;
  std::vector<double> recall(n);
  std::vector<double> precision(n);
  double tps = 0.0;
  double fps = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp[i]) {
      tps += 1.0;
    } else {
      fps += 1.0;
    }
    recall[i] = tps / static_cast<double>(n_gt);
    precision[i] = tps / (tps + fps);
  }
  for (std::size_t i = n - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (std::size_t k = 0; k < kNumRecallPoints; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / static_cast<double>(kNumRecallPoints);
}

/// COCO-convention AP for one geometry: per image keep the top `max_dets`
/// detections by score, match greedily one-to-one at each IoU threshold, pool
/// images and sweep by descending score (stable across image order).
inline APTriple average_precision(std::span<const ImageEval> images, GeometryKind geometry,
                                  int max_dets = 10) {
  if (max_dets < 1) throw InputError("average_precision: max_dets must be positive");
  std::size_t n_gt = 0;
  for (const auto& im : images) n_gt += im.ground_truths.size();
  if (n_gt == 0) throw UndefinedMetricError("average_precision: no ground truths (recall undefined)");

  struct Kept {
    std::vector<double> scores;
    IouMatrix iou;
  };
  std::vector<Kept> kept;
  kept.reserve(images.size());
  for (const auto& im : images) {
    std::vector<double> all_scores;
    for (const auto& d : im.detections) all_scores.push_back(d.score);
    auto order = score_order(all_scores);
    if (order.size() > static_cast<std::size_t>(max_dets)) order.resize(static_cast<std::size_t>(max_dets));
    Kept k;
    k.iou = IouMatrix(order.size(), im.ground_truths.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& det = im.detections[order[r]];
      k.scores.push_back(det.score);
      for (std::size_t j = 0; j < im.ground_truths.size(); ++j) {
        k.iou(r, j) = region_iou(det, im.ground_truths[j], geometry);
      }
    }
    kept.push_back(std::move(k));
  }

  std::vector<double> pooled_scores;
  for (const auto& k : kept) pooled_scores.insert(pooled_scores.end(), k.scores.begin(), k.scores.end());
  const auto pooled_order = score_order(pooled_scores);

  APTriple out;
  for (std::size_t t = 0; t < kNumIouThresholds; ++t) {
    std::vector<bool> flags;
    flags.reserve(pooled_scores.size());
    for (const auto& k : kept) {
      const auto m = match_greedy_one_to_one(k.scores, k.iou, ap_iou_threshold(t));
      std::vector<bool> local(k.scores.size(), false);
      for (const auto& p : m.pairs) local[p.detection] = true;
      flags.insert(flags.end(), local.begin(), local.end());
    }
    std::vector<bool> swept;
    swept.reserve(flags.size());
    for (std::size_t idx : pooled_order) swept.push_back(flags[idx]);
    out.per_threshold[t] = interpolated_ap(swept, n_gt);
  }
  double sum = 0.0;
  for (double v : out.per_threshold) sum += v;
  out.ap = sum / static_cast<double>(kNumIouThresholds);
  out.ap50 = out.per_threshold[0];
  out.ap75 = out.per_threshold[5];
  return out;
}

inline APReport average_precision_report(std::span<const ImageEval> images, int max_dets = 10) {
  APReport r;
  r.max_dets = max_dets;
  r.n_images = images.size();
  for (const auto& im : images) {
    r.n_ground_truths += im.ground_truths.size();
    r.n_detections += std::min(im.detections.size(), static_cast<std::size_t>(max_dets));
  }
  r.box = average_precision(images, GeometryKind::box, max_dets);
  r.mask = average_precision(images, GeometryKind::mask, max_dets);
  return r;
}

// ---------------------------------------------------------------------------
// AUROC and DeLong

namespace detail {

// 1-based average ranks; tied values share the mean of their positions.
inline std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline void check_scores(std::span<const double> scores, const std::vector<bool>& labels,
                         const char* who) {
  if (scores.size() != labels.size()) {
    throw InputError(std::string(who) + ": scores and labels differ in length");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw InputError(std::string(who) + ": NaN score");
  }
}

}  // namespace detail

/// Mann-Whitney concordance: (concordant + 0.5 * tied) / (n_pos * n_neg).
inline double auroc(std::span<const double> scores, const std::vector<bool>& labels) {
  detail::check_scores(scores, labels, "auroc");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("auroc: need at least one positive and one negative (got " +
                               std::to_string(n_pos) + " positive, " + std::to_string(n_neg) +
                               " negative)");
  }
  const auto ranks = detail::midranks(scores);
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) pos_rank_sum += ranks[i];
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct AurocEstimate {
  double auc = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  std::size_t n() const { return n_pos + n_neg; }
};

/// AUROC with a DeLong normal-approximation interval, using the midrank
/// formulation of the structural components. Needs two of each class.
inline AurocEstimate delong_ci(std::span<const double> scores, const std::vector<bool>& labels,
                               double level = 0.95) {
  detail::check_scores(scores, labels, "delong_ci");
  if (!(level > 0.0 && level < 1.0)) throw InputError("delong_ci: level must lie in (0, 1)");
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  const std::size_t m = pos.size();
  const std::size_t n = neg.size();
  if (m < 2 || n < 2) {
    throw UndefinedMetricError("delong_ci: need at least two positives and two negatives (got " +
                               std::to_string(m) + " positive, " + std::to_string(n) +
                               " negative)");
  }
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  const auto tx = detail::midranks(pos);
  const auto ty = detail::midranks(neg);
  const auto tz = detail::midranks(all);
  const double md = static_cast<double>(m);
  const double nd = static_cast<double>(n);

  std::vector<double> v10(m);
  std::vector<double> v01(n);
  for (std::size_t i = 0; i < m; ++i) v10[i] = (tz[i] - tx[i]) / nd;
  for (std::size_t j = 0; j < n; ++j) v01[j] = 1.0 - (tz[m + j] - ty[j]) / md;

  auto sample_variance = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
  };

  AurocEstimate est;
  est.auc = auroc(scores, labels);
  est.variance = std::max(0.0, sample_variance(v10) / md + sample_variance(v01) / nd);
  est.level = level;
  est.n_pos = m;
  est.n_neg = n;
  const boost::math::normal_distribution<double> standard;
  const double z = boost::math::quantile(standard, 0.5 + level / 2.0);
  const double half = z * std::sqrt(est.variance);
  est.ci_low = std::clamp(est.auc - half, 0.0, 1.0);
  est.ci_high = std::clamp(est.auc + half, 0.0, 1.0);
  return est;
}

// ---------------------------------------------------------------------------
// Cohen's kappa

/// K x K contingency counts; rater A indexes rows, rater B columns.
class AgreementTable {
 public:
  AgreementTable() : AgreementTable(2) {}
  explicit AgreementTable(std::size_t k) : k_(k), counts_(k * k, 0) {
    if (k == 0) throw InputError("agreement table needs at least one category");
  }
  AgreementTable(std::initializer_list<std::initializer_list<std::int64_t>> rows)
      : AgreementTable(rows.size()) {
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != k_) throw InputError("agreement table must be square");
      std::size_t j = 0;
      for (auto v : row) {
        if (v < 0) throw InputError("agreement counts must be non-negative");
        at(i, j++) = v;
      }
      ++i;
    }
  }

  std::size_t categories() const { return k_; }
  std::int64_t& at(std::size_t a, std::size_t b) { return counts_[a * k_ + b]; }
  std::int64_t at(std::size_t a, std::size_t b) const { return counts_[a * k_ + b]; }
  void add(std::size_t a, std::size_t b) { ++at(a, b); }

  std::int64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }
  std::int64_t trace() const {
    std::int64_t t = 0;
    for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
    return t;
  }

  friend bool operator==(const AgreementTable&, const AgreementTable&) = default;

 private:
  std::size_t k_;
  std::vector<std::int64_t> counts_;
};

inline double cohens_kappa(const AgreementTable& table) {
  const std::int64_t total = table.total();
  if (total < 1) throw UndefinedMetricError("cohens_kappa: empty agreement table");
  const double n = static_cast<double>(total);
  const std::size_t k = table.categories();
  double pe = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t o = 0; o < k; ++o) {
      row += static_cast<double>(table.at(c, o));
      col += static_cast<double>(table.at(o, c));
    }
    pe += row * col;
  }
  pe /= n * n;
  if (pe == 1.0) throw UndefinedMetricError("cohens_kappa: chance agreement is 1 (kappa undefined)");
  const double po = static_cast<double>(table.trace()) / n;
  return (po - pe) / (1.0 - pe);
}

/// Lesion annotations of one reader, keyed by image id.
using AnnotationSet = std::map<std::string, std::vector<LesionAnnotation>>;

struct ConcurrenceTables {
  std::array<AgreementTable, kNumConcepts> properties;
  AgreementTable existence;  // image level: index 1 = at least one lesion
  std::size_t n_pairs = 0;
  std::size_t n_lesions_a = 0;
  std::size_t n_lesions_b = 0;
  std::size_t n_images = 0;
};

/// Pairs lesions one-to-one per image by descending IoU, keeping only pairs
/// with IoU >= iou_min; ties go to the lower (A, B) index pair. Masks are used
/// when both lesions carry one, boxes otherwise.
inline std::vector<MatchPair> pair_annotations(std::span<const LesionAnnotation> a,
                                               std::span<const LesionAnnotation> b,
                                               double iou_min) {
  std::vector<MatchPair> candidates;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const bool masks = a[i].mask.has_value() && b[j].mask.has_value();
      const double iou = region_iou(a[i], b[j], masks ? GeometryKind::mask : GeometryKind::box);
      if (iou >= iou_min && iou > 0.0) candidates.push_back({i, j, iou});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const MatchPair& x, const MatchPair& y) { return x.iou > y.iou; });
  std::vector<bool> used_a(a.size(), false);
  std::vector<bool> used_b(b.size(), false);
  std::vector<MatchPair> out;
  for (const auto& c : candidates) {
    if (used_a[c.detection] || used_b[c.ground_truth]) continue;
    used_a[c.detection] = true;
    used_b[c.ground_truth] = true;
    out.push_back(c);
  }
  return out;
}

inline ConcurrenceTables concurrence_tables(const AnnotationSet& reads_a,
                                            const AnnotationSet& reads_b, double iou_min = 0.25) {
  ConcurrenceTables out;
  std::map<std::string, std::pair<std::span<const LesionAnnotation>, std::span<const LesionAnnotation>>>
      images;
  for (const auto& [id, lesions] : reads_a) images[id].first = lesions;
  for (const auto& [id, lesions] : reads_b) images[id].second = lesions;
  for (const auto& [id, pair] : images) {
    const auto& [a, b] = pair;
    ++out.n_images;
    out.n_lesions_a += a.size();
    out.n_lesions_b += b.size();
    out.existence.add(a.empty() ? 0 : 1, b.empty() ? 0 : 1);
    for (const auto& p : pair_annotations(a, b, iou_min)) {
      const auto la = a[p.detection].labels();
      const auto lb = b[p.ground_truth].labels();
      for (std::size_t c = 0; c < kNumConcepts; ++c) out.properties[c].add(la[c] ? 1 : 0, lb[c] ? 1 : 0);
      ++out.n_pairs;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matched classification

struct ClassificationTarget {
  enum class Kind { cancer, property };
  Kind kind = Kind::cancer;
  Concept concept_index = Concept::shape;

  static ClassificationTarget cancer() { return {}; }
  static ClassificationTarget concept_target(Concept c) { return {Kind::property, c}; }

  std::string name() const {
    return kind == Kind::cancer ? "cancer" : std::string(kConceptNames[static_cast<std::size_t>(concept_index)]);
  }
};

/// What happens to detections with no ground truth at the threshold. The
/// default leaves them out of the scored population.
enum class UnmatchedPolicy { exclude, label_negative };

struct ScoredPopulation {
  std::vector<double> scores;
  std::vector<bool> labels;
  std::size_t n_matched = 0;
};

inline ScoredPopulation matched_population(std::span<const ImageEval> images, double iou_threshold,
                                           ClassificationTarget target,
                                           GeometryKind geometry = GeometryKind::mask,
                                           UnmatchedPolicy policy = UnmatchedPolicy::exclude) {
  ScoredPopulation pop;
  const auto c = static_cast<std::size_t>(target.concept_index);
  auto score_of = [&](const Detection& d) {
    if (target.kind == ClassificationTarget::Kind::property) return d.concept_logits[c];
    if (!d.cancer_prob) throw InputError("detection in image " + d.image_id + " has no cancer_prob");
    return *d.cancer_prob;
  };
  for (const auto& im : images) {
    const auto match = match_greedy_one_to_one(std::span<const Detection>(im.detections),
                                               std::span<const LesionAnnotation>(im.ground_truths),
                                               iou_threshold, geometry);
    for (const auto& p : match.pairs) {
      const auto& gt = im.ground_truths[p.ground_truth];
      pop.scores.push_back(score_of(im.detections[p.detection]));
      pop.labels.push_back(target.kind == ClassificationTarget::Kind::property ? gt.labels()[c]
                                                                              : gt.malignant);
      ++pop.n_matched;
    }
    if (policy == UnmatchedPolicy::label_negative) {
      for (std::size_t i : match.unmatched_detections) {
        pop.scores.push_back(score_of(im.detections[i]));
        pop.labels.push_back(false);
      }
    }
  }
  return pop;
}

inline AurocEstimate matched_classification_auroc(std::span<const ImageEval> images,
                                                  double iou_threshold, ClassificationTarget target,
                                                  GeometryKind geometry = GeometryKind::mask,
                                                  UnmatchedPolicy policy = UnmatchedPolicy::exclude,
                                                  double level = 0.95) {
  const auto pop = matched_population(images, iou_threshold, target, geometry, policy);
  try {
    return delong_ci(pop.scores, pop.labels, level);
  } catch (const UndefinedMetricError& e) {
    throw UndefinedMetricError(target.name() + " AUROC at IoU " + std::to_string(iou_threshold) +
                               ": " + e.what());
  }
}

}  // namespace buscbm
