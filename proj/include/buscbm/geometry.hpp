#pragma once

// Lesion geometry: boxes, run-length raster masks, polygons, IoU and
// detection-to-ground-truth matching.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "buscbm/error.hpp"

namespace buscbm {

struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_max >= x_min && y_max >= y_min;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Polygon {
  std::vector<Point> vertices;  // implicitly closed

  bool valid() const {
    return vertices.size() >= 3 &&
           std::all_of(vertices.begin(), vertices.end(),
                       [](const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); });
  }

  double signed_area() const {
    double twice = 0.0;
    for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++) {
      twice += vertices[j].x * vertices[i].y - vertices[i].x * vertices[j].y;
    }
    return 0.5 * twice;
  }

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

/// Half-open range of row-major pixel indices.
struct PixelRun {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

/// Binary mask stored as row-major run lengths. Runs alternate background and
/// foreground, starting with a (possibly empty) background run; every run
/// after the first is positive and the runs sum to height * width.
class RasterMask {
 public:
  RasterMask() = default;

  RasterMask(int height, int width, std::vector<std::uint32_t> runs)
      : height_(height), width_(width), runs_(std::move(runs)) {
    if (height <= 0 || width <= 0) throw InputError("mask dimensions must be positive");
    if (runs_.empty()) throw InputError("mask runs must not be empty");
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      if (i > 0 && runs_[i] == 0) throw InputError("mask run " + std::to_string(i) + " is zero");
      total += runs_[i];
    }
    if (total != pixel_count()) {
      throw InputError("mask runs sum to " + std::to_string(total) + ", expected " +
                       std::to_string(pixel_count()));
    }
  }

  static RasterMask empty(int height, int width) {
    return RasterMask(height, width,
                      {static_cast<std::uint32_t>(static_cast<std::uint64_t>(height) * width)});
  }

  static RasterMask from_bitmap(int height, int width, std::span<const std::uint8_t> bits) {
    if (height <= 0 || width <= 0) throw InputError("mask dimensions must be positive");
    if (bits.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
      throw InputError("bitmap size does not match mask dimensions");
    }
    std::vector<std::uint32_t> runs;
    bool current = false;
    std::uint32_t count = 0;
    for (std::uint8_t b : bits) {
      const bool on = b != 0;
      if (on != current) {
        runs.push_back(count);
        current = on;
        count = 0;
      }
      ++count;
    }
    runs.push_back(count);
    return RasterMask(height, width, std::move(runs));
  }

  static RasterMask from_runs(int height, int width, std::span<const PixelRun> fg) {
    std::vector<std::uint32_t> runs;
    std::uint64_t pos = 0;
    for (const auto& r : fg) {
      if (r.end <= r.begin) continue;
      if (!runs.empty() && r.begin == pos) {
        runs.back() += static_cast<std::uint32_t>(r.end - r.begin);
      } else {
        runs.push_back(static_cast<std::uint32_t>(r.begin - pos));
        runs.push_back(static_cast<std::uint32_t>(r.end - r.begin));
      }
      pos = r.end;
    }
    const std::uint64_t total = static_cast<std::uint64_t>(height) * width;
    if (runs.empty()) return empty(height, width);
    if (pos < total) runs.push_back(static_cast<std::uint32_t>(total - pos));
    return RasterMask(height, width, std::move(runs));
  }

  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }
  std::uint64_t pixel_count() const { return static_cast<std::uint64_t>(height_) * width_; }

  std::uint64_t area() const {
    std::uint64_t a = 0;
    for (std::size_t i = 1; i < runs_.size(); i += 2) a += runs_[i];
    return a;
  }

  std::vector<PixelRun> foreground() const {
    std::vector<PixelRun> out;
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      if (i % 2 == 1) out.push_back({pos, pos + runs_[i]});
      pos += runs_[i];
    }
    return out;
  }

  std::vector<std::uint8_t> to_bitmap() const {
    std::vector<std::uint8_t> bits(pixel_count(), 0);
    for (const auto& r : foreground()) {
      std::fill(bits.begin() + static_cast<std::ptrdiff_t>(r.begin),
                bits.begin() + static_cast<std::ptrdiff_t>(r.end), std::uint8_t{1});
    }
    return bits;
  }

  friend bool operator==(const RasterMask&, const RasterMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint32_t> runs_;
};

inline double box_iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline std::uint64_t mask_intersection(const RasterMask& a, const RasterMask& b) {
  const auto fa = a.foreground();
  const auto fb = b.foreground();
  std::uint64_t inter = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < fa.size() && j < fb.size()) {
    const std::uint64_t lo = std::max(fa[i].begin, fb[j].begin);
    const std::uint64_t hi = std::min(fa[i].end, fb[j].end);
    if (hi > lo) inter += hi - lo;
    if (fa[i].end < fb[j].end) {
      ++i;
    } else {
      ++j;
    }
  }
  return inter;
}

inline double mask_iou(const RasterMask& a, const RasterMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw InputError("mask_iou: shape mismatch (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
  const std::uint64_t inter = mask_intersection(a, b);
  const std::uint64_t uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

namespace detail {

// Smallest column c in [0, width] with c + 0.5 >= x.
inline int center_lower_bound(double x, int width) {
  double guess = std::ceil(x - 0.5);
  guess = std::clamp(guess, 0.0, static_cast<double>(width));
  int c = static_cast<int>(guess);
  while (c > 0 && (c - 1) + 0.5 >= x) --c;
  while (c < width && c + 0.5 < x) ++c;
  return c;
}

}  // namespace detail

/// Pixel (r, c) is foreground when its center (c + 0.5, r + 0.5) is inside the
/// polygon by the even-odd crossing rule. Scanline evaluation of the same
/// crossing test a per-pixel point-in-polygon check would perform.
inline RasterMask rasterize(const Polygon& polygon, int height, int width) {
  if (height <= 0 || width <= 0) throw InputError("rasterize: dimensions must be positive");
  if (!polygon.valid()) throw InputError("rasterize: polygon needs >= 3 finite vertices");
  const auto& v = polygon.vertices;
  if (polygon.signed_area() == 0.0) return RasterMask::empty(height, width);

  std::vector<PixelRun> fg;
  std::vector<double> xs;
  for (int r = 0; r < height; ++r) {
    const double ty = r + 0.5;
    xs.clear();
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
      if ((v[i].y > ty) != (v[j].y > ty)) {
        xs.push_back((v[j].x - v[i].x) * (ty - v[i].y) / (v[j].y - v[i].y) + v[i].x);
      }
    }
    std::sort(xs.begin(), xs.end());
    // Inside iff an odd number of crossings lie strictly right of the center,
    // which makes each span [xs[2k], xs[2k+1]) half-open.
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int c0 = detail::center_lower_bound(xs[k], width);
      const int c1 = detail::center_lower_bound(xs[k + 1], width);
      if (c1 > c0) {
        const std::uint64_t base = static_cast<std::uint64_t>(r) * width;
        fg.push_back({base + static_cast<std::uint64_t>(c0), base + static_cast<std::uint64_t>(c1)});
      }
    }
  }
  return RasterMask::from_runs(height, width, fg);
}

/// Tight pixel-boundary box of the foreground, or nullopt for an empty mask.
inline std::optional<BBox> mask_bbox(const RasterMask& mask) {
  const auto fg = mask.foreground();
  if (fg.empty()) return std::nullopt;
  const auto w = static_cast<std::uint64_t>(mask.width());
  std::uint64_t c_min = w;
  std::uint64_t c_max = 0;
  const std::uint64_t r_min = fg.front().begin / w;
  const std::uint64_t r_max = (fg.back().end - 1) / w;
  for (const auto& run : fg) {
    const std::uint64_t first_row = run.begin / w;
    const std::uint64_t last_row = (run.end - 1) / w;
    if (first_row != last_row) {
      c_min = 0;
      c_max = w - 1;
      break;
    }
    c_min = std::min(c_min, run.begin % w);
    c_max = std::max(c_max, (run.end - 1) % w);
  }
  return BBox{static_cast<double>(c_min), static_cast<double>(r_min),
              static_cast<double>(c_max + 1), static_cast<double>(r_max + 1)};
}

enum class GeometryKind { box, mask };

inline std::string_view to_string(GeometryKind g) { return g == GeometryKind::box ? "box" : "mask"; }

inline GeometryKind parse_geometry(std::string_view s) {
  if (s == "box" || s == "bbox") return GeometryKind::box;
  if (s == "mask" || s == "segm") return GeometryKind::mask;
  throw InputError("unknown geometry '" + std::string(s) + "' (expected box or mask)");
}

/// Dense detections x ground-truths IoU table, row-major.
struct IouMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  IouMatrix() = default;
  IouMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

/// Anything carrying a box and an optional raster mask (lesions, detections).
template <typename T>
concept Region = requires(const T& t) {
  { t.bbox } -> std::convertible_to<BBox>;
  { t.mask } -> std::convertible_to<std::optional<RasterMask>>;
};

template <Region R>
const RasterMask& require_mask(const R& region) {
  if (!region.mask) throw InputError("mask geometry requested but region has no mask");
  return *region.mask;
}

template <Region A, Region B>
double region_iou(const A& a, const B& b, GeometryKind geometry) {
  if (geometry == GeometryKind::box) return box_iou(a.bbox, b.bbox);
  return mask_iou(require_mask(a), require_mask(b));
}

template <Region D, Region G>
IouMatrix iou_matrix(std::span<const D> dets, std::span<const G> gts, GeometryKind geometry) {
  IouMatrix m(dets.size(), gts.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) m(i, j) = region_iou(dets[i], gts[j], geometry);
  }
  return m;
}

struct MatchPair {
  std::size_t detection = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;

  friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // ordered by detection index
  std::vector<std::size_t> unmatched_detections;
  std::vector<std::size_t> unmatched_ground_truths;

  std::optional<std::size_t> ground_truth_of(std::size_t det) const {
    for (const auto& p : pairs) {
      if (p.detection == det) return p.ground_truth;
    }
    return std::nullopt;
  }
};

namespace detail {

inline void finish_match(MatchResult& out, std::size_t n_dets, std::size_t n_gts) {
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const MatchPair& a, const MatchPair& b) { return a.detection < b.detection; });
  std::vector<bool> det_used(n_dets, false);
  std::vector<bool> gt_used(n_gts, false);
  for (const auto& p : out.pairs) {
    det_used[p.detection] = true;
    gt_used[p.ground_truth] = true;
  }
  for (std::size_t i = 0; i < n_dets; ++i) {
    if (!det_used[i]) out.unmatched_detections.push_back(i);
  }
  for (std::size_t j = 0; j < n_gts; ++j) {
    if (!gt_used[j]) out.unmatched_ground_truths.push_back(j);
  }
}

}  // namespace detail

/// Each detection pairs with its maximal-IoU ground truth (several detections
/// may share one). Zero-IoU detections stay unmatched; ties go to the lowest
/// ground-truth index.
inline MatchResult match_max_iou(const IouMatrix& iou) {
  MatchResult out;
  for (std::size_t i = 0; i < iou.rows; ++i) {
    double best = 0.0;
    std::optional<std::size_t> best_j;
    for (std::size_t j = 0; j < iou.cols; ++j) {
      if (iou(i, j) > best) {
        best = iou(i, j);
        best_j = j;
      }
    }
    if (best_j) out.pairs.push_back({i, *best_j, best});
  }
  detail::finish_match(out, iou.rows, iou.cols);
  return out;
}

/// Indices sorted by descending score; equal scores keep input order.
inline std::vector<std::size_t> score_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

/// Greedy one-to-one matching: detections in descending score each claim the
/// highest-IoU unclaimed ground truth whose IoU reaches the threshold.
inline MatchResult match_greedy_one_to_one(std::span<const double> scores, const IouMatrix& iou,
                                           double iou_threshold) {
  if (scores.size() != iou.rows) throw InputError("match: score count does not match IoU rows");
  MatchResult out;
  std::vector<bool> claimed(iou.cols, false);
  for (std::size_t i : score_order(scores)) {
    std::optional<std::size_t> best_j;
    double best = -1.0;
    for (std::size_t j = 0; j < iou.cols; ++j) {
      if (claimed[j] || iou(i, j) < iou_threshold || iou(i, j) <= 0.0) continue;
      if (iou(i, j) > best) {
        best = iou(i, j);
        best_j = j;
      }
    }
    if (best_j) {
      claimed[*best_j] = true;
      out.pairs.push_back({i, *best_j, best});
    }
  }
  detail::finish_match(out, iou.rows, iou.cols);
  return out;
}

template <Region D, Region G>
MatchResult match_max_iou(std::span<const D> dets, std::span<const G> gts, GeometryKind geometry) {
  return match_max_iou(iou_matrix(dets, gts, geometry));
}

template <typename D, typename G>
  requires Region<D> && Region<G> && requires(const D& d) {
    { d.score } -> std::convertible_to<double>;
  }
MatchResult match_greedy_one_to_one(std::span<const D> dets, std::span<const G> gts,
                                    double iou_threshold, GeometryKind geometry) {
  std::vector<double> scores;
  scores.reserve(dets.size());
  for (const auto& d : dets) scores.push_back(d.score);
  return match_greedy_one_to_one(scores, iou_matrix(dets, gts, geometry), iou_threshold);
}

}  // namespace buscbm
