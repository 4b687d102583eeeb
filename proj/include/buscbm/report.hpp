#pragma once

// Machine-readable (JSON) and aligned-text renderings of every report the CLI
// writes. The JSON form is normative; the text form is for reading.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "buscbm/cohort.hpp"
#include "buscbm/intervention.hpp"
#include "buscbm/metrics.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

namespace detail {

inline std::string fixed(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string iou_key(double t) { return fixed(t, 2); }

}  // namespace detail

inline Json estimate_json(const AurocEstimate& e) {
  return Json{{"auc", e.auc},         {"ci_low", e.ci_low}, {"ci_high", e.ci_high}, {"variance", e.variance},
              {"level", e.level},     {"n", e.n()},         {"n_pos", e.n_pos},     {"n_neg", e.n_neg}};
}

/// "0.863 (0.833, 0.892)"
inline std::string estimate_text(const AurocEstimate& e) {
  return detail::fixed(e.auc) + " (" + detail::fixed(e.ci_low) + ", " + detail::fixed(e.ci_high) + ")";
}

// ---------------------------------------------------------------------------
// Detection

inline Json ap_triple_json(const APTriple& t) {
  Json per = Json::array();
  for (std::size_t k = 0; k < t.per_threshold.size(); ++k) {
    per.push_back(Json{{"iou", ap_iou_threshold(k)}, {"ap", t.per_threshold[k]}});
  }
  return Json{{"ap", t.ap}, {"ap50", t.ap50}, {"ap75", t.ap75}, {"per_threshold", per}};
}

inline Json detection_report_json(const APReport& r) {
  return Json{{"report", "detection"},
              {"max_dets", r.max_dets},
              {"n_images", r.n_images},
              {"n_ground_truths", r.n_ground_truths},
              {"n_detections", r.n_detections},
              {"mask", ap_triple_json(r.mask)},
              {"box", ap_triple_json(r.box)}};
}

inline std::string detection_report_text(const APReport& r) {
  std::ostringstream os;
  os << "Lesion detection (max " << r.max_dets << " detections per image; " << r.n_images << " images, "
     << r.n_ground_truths << " lesions, " << r.n_detections << " detections)\n";
  os << detail::pad("", 10) << detail::pad("AP", 16) << detail::pad("AP50", 16) << "AP75\n";
  os << detail::pad("", 10);
  for (int i = 0; i < 3; ++i) os << detail::pad("Segm", 8) << detail::pad("BBox", 8);
  os << "\n" << detail::pad("model", 10);
  os << detail::pad(detail::fixed(r.mask.ap), 8) << detail::pad(detail::fixed(r.box.ap), 8);
  os << detail::pad(detail::fixed(r.mask.ap50), 8) << detail::pad(detail::fixed(r.box.ap50), 8);
  os << detail::pad(detail::fixed(r.mask.ap75), 8) << detail::fixed(r.box.ap75) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Concept and cancer AUROC at matched IoU thresholds

struct ThresholdRow {
  std::string label;
  std::vector<AurocEstimate> cells;  // one per threshold
};

inline Json threshold_table_json(const std::string& report, const std::vector<double>& thresholds,
                                 const std::vector<ThresholdRow>& rows, const char* row_key) {
  Json out{{"report", report}, {"iou_thresholds", thresholds}};
  Json js = Json::array();
  for (const auto& r : rows) {
    Json cells = Json::object();
    for (std::size_t t = 0; t < thresholds.size(); ++t) cells[detail::iou_key(thresholds[t])] = estimate_json(r.cells[t]);
    js.push_back(Json{{row_key, r.label}, {"by_iou", cells}});
  }
  out["rows"] = js;
  return out;
}

inline std::string threshold_table_text(const std::string& title, const std::vector<double>& thresholds,
                                        const std::vector<ThresholdRow>& rows) {
  std::ostringstream os;
  os << title << " (AUROC, 95% CI in parentheses)\n" << detail::pad("", 14);
  for (double t : thresholds) os << detail::pad("AUROC @ IoU = " + detail::iou_key(t), 30);
  os << "\n";
  for (const auto& r : rows) {
    os << detail::pad(r.label, 14);
    for (const auto& c : r.cells) os << detail::pad(estimate_text(c) + " n=" + std::to_string(c.n()), 30);
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Corrected-concept grid

inline Json correction_report_json(const std::vector<CorrectionRow>& rows, const std::vector<double>& thresholds,
                                   const std::vector<CorrectionShift>& shifts) {
  Json grid = Json::array();
  std::vector<std::pair<std::string, CorrectionKind>> keys;
  for (const auto& r : rows) {
    if (keys.empty() || keys.back() != std::make_pair(r.head, r.strategy)) keys.emplace_back(r.head, r.strategy);
  }
  for (const auto& [head, strategy] : keys) {
    Json cells = Json::object();
    for (const auto& r : rows) {
      if (r.head == head && r.strategy == strategy) cells[detail::iou_key(r.iou_threshold)] = estimate_json(r.estimate);
    }
    grid.push_back(Json{{"head", head}, {"correction", std::string(to_string(strategy))}, {"by_iou", cells}});
  }
  Json sh = Json::array();
  for (const auto& s : shifts) {
    sh.push_back(Json{{"correction", std::string(to_string(s.strategy))},
                      {"wrong_concepts", s.wrong_concepts},
                      {"concepts_seen", s.concepts_seen},
                      {"mean_abs_delta_logit", s.mean_abs_delta_logit}});
  }
  return Json{{"report", "cancer_with_correction"}, {"iou_thresholds", thresholds}, {"rows", grid}, {"logit_shift", sh}};
}

inline std::string correction_report_text(const std::vector<CorrectionRow>& rows, const std::vector<double>& thresholds,
                                          const std::vector<CorrectionShift>& shifts) {
  std::ostringstream os;
  os << "Cancer classification with and without concept correction (AUROC, 95% CI)\n";
  os << detail::pad("head", 16) << detail::pad("correction", 12);
  for (double t : thresholds) os << detail::pad("AUROC @ IoU = " + detail::iou_key(t), 26);
  os << "\n";
  for (std::size_t i = 0; i < rows.size(); i += thresholds.size()) {
    os << detail::pad(rows[i].head, 16) << detail::pad(std::string(to_string(rows[i].strategy)), 12);
    for (std::size_t t = 0; t < thresholds.size() && i + t < rows.size(); ++t) {
      os << detail::pad(estimate_text(rows[i + t].estimate), 26);
    }
    os << "\n";
  }
  if (!shifts.empty()) {
    os << "\nmean |delta logit| over wrong concepts\n";
    for (const auto& s : shifts) {
      os << detail::pad(std::string(to_string(s.strategy)), 12) << detail::fixed(s.mean_abs_delta_logit, 4) << "  ("
         << s.wrong_concepts << " of " << s.concepts_seen << " concepts wrong)\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Inter-rater agreement

inline Json agreement_table_json(const AgreementTable& t) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.categories(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < t.categories(); ++c) row.push_back(t.at(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Json kappa_cell_json(const AgreementTable& t) {
  Json out{{"table", agreement_table_json(t)}, {"n", t.total()}};
  try {
    out["kappa"] = cohens_kappa(t);
  } catch (const UndefinedMetricError& e) {
    out["kappa"] = nullptr;
    out["undefined"] = e.what();
  }
  return out;
}

inline Json kappa_report_json(const ConcurrenceTables& t, double iou_min) {
  Json props = Json::array();
  for (std::size_t c = 0; c < kNumConcepts; ++c) {
    Json cell = kappa_cell_json(t.properties[c]);
    cell["property"] = std::string(kConceptNames[c]);
    props.push_back(cell);
  }
  return Json{{"report", "agreement"},   {"iou_min", iou_min},         {"n_pairs", t.n_pairs},
              {"n_lesions_a", t.n_lesions_a}, {"n_lesions_b", t.n_lesions_b}, {"n_images", t.n_images},
              {"properties", props},     {"existence", kappa_cell_json(t.existence)}};
}

inline std::string kappa_report_text(const Json& j) {
  std::ostringstream os;
  os << "Binarized inter-rater agreement (Cohen's kappa; lesion pairs with IoU >= "
     << detail::fixed(j.at("iou_min").get<double>(), 2) << ": " << j.at("n_pairs").get<std::size_t>() << ")\n";
  auto line = [&](const std::string& name, const Json& cell) {
    os << detail::pad(name, 20);
    if (cell.at("kappa").is_null()) os << "undefined";
    else os << detail::fixed(cell.at("kappa").get<double>());
    os << "  n=" << cell.at("n").get<long long>() << "\n";
  };
  for (const auto& p : j.at("properties")) line(p.at("property").get<std::string>(), p);
  line("lesion existence", j.at("existence"));
  return os.str();
}

// ---------------------------------------------------------------------------
// Cohort bookkeeping

inline Json exclusion_report_json(const ExclusionReport& r) {
  Json reasons = Json::array();
  for (std::size_t i = 0; i < kNumExclusionFlags; ++i) {
    reasons.push_back(Json{{"reason", std::string(kExclusionFlagNames[i])}, {"images", r.by_reason[i]}});
  }
  return Json{{"report", "exclusions"},        {"images_in", r.images_in},       {"images_kept", r.images_kept},
              {"images_excluded", r.images_excluded}, {"women_in", r.women_in}, {"women_dropped", r.women_dropped},
              {"by_reason", reasons}};
}

inline std::string exclusion_report_text(const ExclusionReport& r) {
  std::ostringstream os;
  os << "Image exclusions (each image counted once, under its first flag)\n";
  for (std::size_t i = 0; i < kNumExclusionFlags; ++i) {
    os << detail::pad(std::string(kExclusionFlagNames[i]), 24) << r.by_reason[i] << "\n";
  }
  os << detail::pad("images in", 24) << r.images_in << "\n";
  os << detail::pad("images excluded", 24) << r.images_excluded << "\n";
  os << detail::pad("images kept", 24) << r.images_kept << "\n";
  os << detail::pad("women dropped", 24) << r.women_dropped << " of " << r.women_in << "\n";
  return os.str();
}

inline Json split_summary_json(const std::vector<SplitSummary>& cols) {
  Json out = Json::array();
  for (const auto& s : cols) {
    Json concepts = Json::object();
    for (std::size_t c = 0; c < kNumConcepts; ++c) concepts[std::string(kConceptNames[c])] = s.concept_positive[c];
    out.push_back(Json{{"split", s.name},
                       {"women_control", s.women_control},
                       {"women_case", s.women_case},
                       {"groups", s.groups},
                       {"images", s.images},
                       {"images_per_woman", {{"mean", s.images_per_woman.mean}, {"sd", s.images_per_woman.sd}}},
                       {"lesions_per_lesion_image",
                        {{"mean", s.lesions_per_lesion_image.mean}, {"sd", s.lesions_per_lesion_image.sd}}},
                       {"lesions_benign", s.lesions_benign},
                       {"lesions_malignant", s.lesions_malignant},
                       {"malignancy_indicative", concepts}});
  }
  return Json{{"report", "split_summary"}, {"columns", out}};
}

inline std::string split_summary_text(const std::vector<SplitSummary>& cols) {
  std::ostringstream os;
  os << detail::pad("", 28);
  for (const auto& s : cols) os << detail::pad(s.name, 16);
  os << "\n";
  auto row = [&](const std::string& name, auto&& get) {
    os << detail::pad(name, 28);
    for (const auto& s : cols) os << detail::pad(get(s), 16);
    os << "\n";
  };
  row("women (control)", [](const SplitSummary& s) { return std::to_string(s.women_control); });
  row("women (case)", [](const SplitSummary& s) { return std::to_string(s.women_case); });
  row("case-control groups", [](const SplitSummary& s) { return std::to_string(s.groups); });
  row("images", [](const SplitSummary& s) { return std::to_string(s.images); });
  row("images per woman", [](const SplitSummary& s) {
    return detail::fixed(s.images_per_woman.mean, 2) + " (" + detail::fixed(s.images_per_woman.sd, 2) + ")";
  });
  row("lesions per lesion image", [](const SplitSummary& s) {
    return detail::fixed(s.lesions_per_lesion_image.mean, 2) + " (" + detail::fixed(s.lesions_per_lesion_image.sd, 2) + ")";
  });
  row("lesions (benign)", [](const SplitSummary& s) { return std::to_string(s.lesions_benign); });
  row("lesions (malignant)", [](const SplitSummary& s) { return std::to_string(s.lesions_malignant); });
  for (std::size_t c = 0; c < kNumConcepts; ++c) {
    row(std::string(kConceptNames[c]) + " (indicative)",
        [c](const SplitSummary& s) { return std::to_string(s.concept_positive[c]); });
  }
  return os.str();
}

}  // namespace buscbm
