#pragma once

// Cohort bookkeeping: image exclusions, 1:k case-control matching,
// group-atomic train/val/test splitting and per-split summaries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "buscbm/error.hpp"
#include "buscbm/random.hpp"
#include "buscbm/records.hpp"

namespace buscbm {

struct ExclusionReport {
  std::array<std::size_t, kNumExclusionFlags> by_reason{};
  std::size_t images_in = 0;
  std::size_t images_kept = 0;
  std::size_t images_excluded = 0;
  std::size_t women_in = 0;
  std::size_t women_dropped = 0;
};

inline std::optional<ExclusionFlag> primary_exclusion(const ImageRecord& image) {
  std::optional<ExclusionFlag> first;
  for (ExclusionFlag f : image.flags) {
    if (!first || f < *first) first = f;
  }
  return first;
}

/// Drops flagged images (counted once, under the highest-precedence flag) and
/// then women left without images.
inline std::pair<Cohort, ExclusionReport> apply_exclusions(const Cohort& cohort) {
  ExclusionReport report;
  Cohort kept;
  for (const auto& woman : cohort) {
    ++report.women_in;
    WomanRecord w = woman;
    w.images.clear();
    for (const auto& image : woman.images) {
      ++report.images_in;
      if (const auto reason = primary_exclusion(image)) {
        ++report.by_reason[static_cast<std::size_t>(*reason)];
        ++report.images_excluded;
      } else {
        ++report.images_kept;
        w.images.push_back(image);
      }
    }
    if (w.images.empty()) {
      ++report.women_dropped;
    } else {
      kept.push_back(std::move(w));
    }
  }
  return {std::move(kept), report};
}

// ---------------------------------------------------------------------------
// Case-control matching

struct MatchCandidate {
  std::string id;
  int birth_year = 0;
  Manufacturer manufacturer = Manufacturer::other;
};

struct CaseControlGroup {
  std::string case_id;
  std::vector<std::string> control_ids;
};

struct CaseControlMatching {
  std::vector<CaseControlGroup> groups;        // one per case, in case-id order
  std::vector<std::string> incomplete_cases;  // fewer than `ratio` controls
  std::vector<std::string> unused_controls;
  int ratio = 3;
};

/// Greedy over cases in id order: each claims up to `ratio` unclaimed controls
/// with the same manufacturer and birth year within `year_tolerance`, nearest
/// year first, lower id on ties.
inline CaseControlMatching match_case_controls(std::span<const MatchCandidate> cases,
                                               std::span<const MatchCandidate> controls, int ratio = 3,
                                               int year_tolerance = 2) {
  if (ratio < 1) throw InputError("match_case_controls: ratio must be >= 1");
  if (year_tolerance < 0) throw InputError("match_case_controls: year tolerance must be >= 0");
  std::vector<const MatchCandidate*> case_order;
  for (const auto& c : cases) case_order.push_back(&c);
  std::sort(case_order.begin(), case_order.end(),
            [](const MatchCandidate* a, const MatchCandidate* b) { return a->id < b->id; });

  CaseControlMatching out;
  out.ratio = ratio;
  std::vector<bool> used(controls.size(), false);
  for (const MatchCandidate* c : case_order) {
    std::vector<std::size_t> eligible;
    for (std::size_t j = 0; j < controls.size(); ++j) {
      if (!used[j] && controls[j].manufacturer == c->manufacturer &&
          std::abs(controls[j].birth_year - c->birth_year) <= year_tolerance) {
        eligible.push_back(j);
      }
    }
    std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
      const int da = std::abs(controls[a].birth_year - c->birth_year);
      const int db = std::abs(controls[b].birth_year - c->birth_year);
      return da != db ? da < db : controls[a].id < controls[b].id;
    });
    CaseControlGroup g{c->id, {}};
    for (std::size_t j : eligible) {
      if (static_cast<int>(g.control_ids.size()) == ratio) break;
      used[j] = true;
      g.control_ids.push_back(controls[j].id);
    }
    if (static_cast<int>(g.control_ids.size()) < ratio) out.incomplete_cases.push_back(c->id);
    out.groups.push_back(std::move(g));
  }
  for (std::size_t j = 0; j < controls.size(); ++j) {
    if (!used[j]) out.unused_controls.push_back(controls[j].id);
  }
  std::sort(out.unused_controls.begin(), out.unused_controls.end());
  return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitAssignment {
  std::map<std::string, Split> groups;
  std::array<double, 3> fractions{0.7, 0.1, 0.2};
  std::uint64_t seed = 0;

  std::array<std::size_t, 3> counts() const {
    std::array<std::size_t, 3> c{};
    for (const auto& [g, s] : groups) ++c[static_cast<std::size_t>(s)];
    return c;
  }
};

/// Largest-remainder apportionment of n items; ties favour the lower index.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rema{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double raw = static_cast<double>(n) * fractions[i];
    sizes[i] = static_cast<std::size_t>(std::floor(raw + 1e-9));
    rema[i] = raw - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rema[a] > rema[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

/// Seeded shuffle of the (sorted, de-duplicated) group ids, then contiguous
/// train / val / test slices.
inline SplitAssignment split_groups(std::vector<std::string> group_ids,
                                    std::array<double, 3> fractions = {0.7, 0.1, 0.2},
                                    std::uint64_t seed = 0) {
  double sum = 0.0;
  std::size_t nonzero = 0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw InputError("split fractions must be non-negative");
    sum += f;
    if (f > 0.0) ++nonzero;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InputError("split fractions must sum to 1");
  std::sort(group_ids.begin(), group_ids.end());
  group_ids.erase(std::unique(group_ids.begin(), group_ids.end()), group_ids.end());
  if (group_ids.size() < nonzero) {
    throw InputError("split_groups: " + std::to_string(group_ids.size()) + " groups cannot fill " +
                     std::to_string(nonzero) + " non-empty splits");
  }
  Rng rng(derive_seed(seed, 3));
  rng.shuffle(group_ids);
  const auto sizes = apportion(group_ids.size(), fractions);
  SplitAssignment out;
  out.fractions = fractions;
  out.seed = seed;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < sizes[s]; ++k) out.groups[group_ids[pos++]] = static_cast<Split>(s);
  }
  return out;
}

inline std::vector<std::string> group_ids(const Cohort& cohort) {
  std::set<std::string> ids;
  for (const auto& w : cohort) ids.insert(w.group_id);
  return {ids.begin(), ids.end()};
}

inline Cohort assign_splits(Cohort cohort, const SplitAssignment& assignment) {
  for (auto& w : cohort) {
    const auto it = assignment.groups.find(w.group_id);
    if (it == assignment.groups.end()) {
      throw InputError("woman " + w.woman_id + ": group '" + w.group_id + "' has no split assignment");
    }
    w.split = it->second;
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Summary statistics

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

struct SplitSummary {
  std::string name;
  std::size_t women_control = 0;
  std::size_t women_case = 0;
  std::size_t groups = 0;
  std::size_t images = 0;
  MeanSd images_per_woman;
  MeanSd lesions_per_lesion_image;
  std::size_t lesions_benign = 0;
  std::size_t lesions_malignant = 0;
  std::array<std::size_t, kNumConcepts> concept_positive{};  // malignancy-indicative lesion counts
};

inline SplitSummary summarize(const Cohort& cohort, std::string name,
                              std::optional<Split> only = std::nullopt) {
  SplitSummary s;
  s.name = std::move(name);
  std::set<std::string> groups;
  std::vector<double> images_per_woman;
  std::vector<double> lesions_per_image;
  for (const auto& w : cohort) {
    if (only && w.split != only) continue;
    (w.is_case ? s.women_case : s.women_control)++;
    groups.insert(w.group_id);
    images_per_woman.push_back(static_cast<double>(w.images.size()));
    for (const auto& im : w.images) {
      ++s.images;
      if (!im.lesions.empty()) lesions_per_image.push_back(static_cast<double>(im.lesions.size()));
      for (const auto& l : im.lesions) {
        (l.malignant ? s.lesions_malignant : s.lesions_benign)++;
        const auto labels = l.labels();
        for (std::size_t c = 0; c < kNumConcepts; ++c) s.concept_positive[c] += labels[c] ? 1 : 0;
      }
    }
  }
  s.groups = groups.size();
  s.images_per_woman = mean_sd(images_per_woman);
  s.lesions_per_lesion_image = mean_sd(lesions_per_image);
  return s;
}

/// Train, validation, test and overall columns.
inline std::vector<SplitSummary> summarize_splits(const Cohort& cohort) {
  return {summarize(cohort, "train", Split::train), summarize(cohort, "val", Split::val),
          summarize(cohort, "test", Split::test), summarize(cohort, "overall")};
}

}  // namespace buscbm
