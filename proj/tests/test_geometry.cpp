#include <gtest/gtest.h>

#include <random>

#include "buscbm/geometry.hpp"
#include "buscbm/records.hpp"
#include "oracles.hpp"

using namespace buscbm;

namespace {

RasterMask mask_of(int h, int w, std::initializer_list<std::pair<int, int>> pixels) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(h) * w, 0);
  for (auto [r, c] : pixels) bits[static_cast<std::size_t>(r) * w + c] = 1;
  return RasterMask::from_bitmap(h, w, bits);
}

Detection det_box(BBox b, double score = 1.0) {
  Detection d;
  d.bbox = b;
  d.score = score;
  return d;
}

LesionAnnotation gt_box(BBox b) {
  LesionAnnotation l;
  l.bbox = b;
  return l;
}

IouMatrix matrix(std::vector<std::vector<double>> rows) {
  IouMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

}  // namespace

TEST(BoxIou, Examples) {
  const BBox a{0, 0, 10, 10};
  EXPECT_EQ(box_iou(a, a), 1.0);
  EXPECT_EQ(box_iou(a, BBox{20, 20, 30, 30}), 0.0);
  EXPECT_DOUBLE_EQ(box_iou(a, BBox{5, 0, 15, 10}), 50.0 / 150.0);
  EXPECT_EQ(box_iou(BBox{1, 1, 1, 1}, BBox{1, 1, 1, 1}), 0.0);
}

TEST(BoxIou, MatchesPixelCountOnIntegerGrid) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> u(0, 12);
  for (int t = 0; t < 500; ++t) {
    int x0 = u(gen), x1 = u(gen), y0 = u(gen), y1 = u(gen);
    int a0 = u(gen), a1 = u(gen), b0 = u(gen), b1 = u(gen);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    if (a0 > a1) std::swap(a0, a1);
    if (b0 > b1) std::swap(b0, b1);
    std::vector<std::uint8_t> p(144, 0), q(144, 0);
    for (int r = y0; r < y1; ++r)
      for (int c = x0; c < x1; ++c) p[r * 12 + c] = 1;
    for (int r = b0; r < b1; ++r)
      for (int c = a0; c < a1; ++c) q[r * 12 + c] = 1;
    const BBox A{double(x0), double(y0), double(x1), double(y1)};
    const BBox B{double(a0), double(b0), double(a1), double(b1)};
    EXPECT_NEAR(box_iou(A, B), oracle::bitmap_iou(p, q), 1e-15);
    EXPECT_EQ(box_iou(A, B), box_iou(B, A));
  }
}

TEST(MaskIou, Examples) {
  const auto left = mask_of(4, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 0}, {2, 1}, {3, 0}, {3, 1}});
  const auto top = mask_of(4, 4, {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 0}, {1, 1}, {1, 2}, {1, 3}});
  EXPECT_DOUBLE_EQ(mask_iou(left, top), 4.0 / 12.0);
  EXPECT_EQ(mask_iou(left, left), 1.0);
  EXPECT_EQ(mask_iou(mask_of(4, 4, {{0, 0}}), mask_of(4, 4, {{3, 3}})), 0.0);
  EXPECT_EQ(mask_iou(RasterMask::empty(4, 4), RasterMask::empty(4, 4)), 0.0);
  EXPECT_THROW(mask_iou(left, RasterMask::empty(4, 5)), InputError);
}

TEST(MaskIou, MatchesBitmapOracle) {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 300; ++t) {
    const auto a = oracle::random_bitmap(gen, 7, 9, 0.4);
    const auto b = oracle::random_bitmap(gen, 7, 9, 0.4);
    const auto ma = RasterMask::from_bitmap(7, 9, a);
    const auto mb = RasterMask::from_bitmap(7, 9, b);
    EXPECT_DOUBLE_EQ(mask_iou(ma, mb), oracle::bitmap_iou(a, b));
    EXPECT_EQ(mask_iou(ma, mb), mask_iou(mb, ma));
  }
}

TEST(RasterMask, RunLengthRoundTripOnRandomBitmaps) {
  std::mt19937_64 gen(17);
  std::uniform_int_distribution<int> dim(1, 20);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const int h = dim(gen), w = dim(gen);
    const auto bits = oracle::random_bitmap(gen, h, w, density(gen));
    const auto m = RasterMask::from_bitmap(h, w, bits);
    EXPECT_EQ(m.to_bitmap(), bits);
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < m.runs().size(); ++i) {
      if (i > 0) {
        EXPECT_GT(m.runs()[i], 0u);
      }
      total += m.runs()[i];
    }
    EXPECT_EQ(total, static_cast<std::uint64_t>(h) * w);
    EXPECT_EQ(RasterMask(h, w, m.runs()), m);
  }
}

TEST(RasterMask, ValidatesRuns) {
  EXPECT_THROW(RasterMask(2, 2, {1, 2}), InputError);
  EXPECT_THROW(RasterMask(2, 2, {1, 0, 3}), InputError);
  EXPECT_THROW(RasterMask(0, 2, {0}), InputError);
  EXPECT_NO_THROW(RasterMask(2, 2, {0, 4}));
  EXPECT_EQ(RasterMask(2, 2, {0, 4}).area(), 4u);
}

TEST(Rasterize, WholeImageRectangle) {
  const Polygon p{{{0, 0}, {6, 0}, {6, 4}, {0, 4}}};
  const auto m = rasterize(p, 4, 6);
  EXPECT_EQ(m.area(), 24u);
}

TEST(Rasterize, DegeneratePolygonIsEmpty) {
  const Polygon p{{{0, 0}, {2, 2}, {4, 4}}};
  EXPECT_EQ(rasterize(p, 5, 5).area(), 0u);
}

TEST(Rasterize, RightTriangleCoversSixPixels) {
  const Polygon p{{{0, 0}, {4, 0}, {0, 4}}};
  const auto m = rasterize(p, 4, 4);
  EXPECT_EQ(m.area(), 6u);
  EXPECT_EQ(m.to_bitmap(), oracle::rasterize_bitmap(p, 4, 4));
}

TEST(Rasterize, AgreesWithPerPixelCrossingTest) {
  std::mt19937_64 gen(23);
  std::uniform_real_distribution<double> coord(-3.0, 19.0);
  std::uniform_int_distribution<int> nv(3, 9);
  std::uniform_int_distribution<int> grid(-2, 18);
  for (int t = 0; t < 400; ++t) {
    Polygon p;
    const int n = nv(gen);
    const bool on_grid = t % 2 == 0;  // half the polygons put vertices on pixel edges and centers
    for (int k = 0; k < n; ++k) {
      if (on_grid) p.vertices.push_back({grid(gen) * 0.5, grid(gen) * 0.5});
      else p.vertices.push_back({coord(gen), coord(gen)});
    }
    const auto m = rasterize(p, 16, 16);
    if (p.signed_area() == 0.0) {
      EXPECT_EQ(m.area(), 0u);
      continue;
    }
    EXPECT_EQ(m.to_bitmap(), oracle::rasterize_bitmap(p, 16, 16)) << "polygon " << t;
  }
}

TEST(Rasterize, SelfIouIsOne) {
  const Polygon p{{{2.3, 1.1}, {9.7, 3.2}, {6.1, 8.8}}};
  const auto m = rasterize(p, 12, 12);
  ASSERT_GT(m.area(), 0u);
  EXPECT_EQ(mask_iou(m, rasterize(p, 12, 12)), 1.0);
}

TEST(MaskBbox, TightBox) {
  EXPECT_FALSE(mask_bbox(RasterMask::empty(3, 3)).has_value());
  const auto b = mask_bbox(mask_of(5, 6, {{1, 2}, {3, 4}, {2, 3}}));
  ASSERT_TRUE(b);
  EXPECT_EQ(*b, (BBox{2, 1, 5, 4}));
  const auto wrap = mask_bbox(mask_of(3, 4, {{0, 3}, {1, 0}}));
  EXPECT_EQ(*wrap, (BBox{0, 0, 4, 2}));
}

TEST(MatchMaxIou, Examples) {
  auto r = match_max_iou(matrix({{1.0}}));
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], (MatchPair{0, 0, 1.0}));

  r = match_max_iou(matrix({{0.0, 0.0}}));
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.unmatched_detections, std::vector<std::size_t>{0});

  r = match_max_iou(matrix({{0.4, 0.4}}));
  EXPECT_EQ(r.pairs[0].ground_truth, 0u);
}

TEST(MatchMaxIou, ManyToOneAndOrderIndependent) {
  const std::vector<Detection> dets{det_box({0, 0, 10, 10}), det_box({1, 1, 10, 10}), det_box({50, 50, 60, 60})};
  const std::vector<LesionAnnotation> gts{gt_box({0, 0, 10, 10}), gt_box({30, 30, 40, 40})};
  const auto r = match_max_iou(std::span<const Detection>(dets), std::span<const LesionAnnotation>(gts), GeometryKind::box);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].ground_truth, 0u);
  EXPECT_EQ(r.pairs[1].ground_truth, 0u);
  EXPECT_EQ(r.unmatched_detections, std::vector<std::size_t>{2});
  EXPECT_EQ(r.unmatched_ground_truths, std::vector<std::size_t>{1});

  const std::vector<Detection> reversed{dets[2], dets[1], dets[0]};
  const auto rr =
      match_max_iou(std::span<const Detection>(reversed), std::span<const LesionAnnotation>(gts), GeometryKind::box);
  EXPECT_EQ(rr.ground_truth_of(2), r.ground_truth_of(0));
  EXPECT_EQ(rr.ground_truth_of(1), r.ground_truth_of(1));
  EXPECT_FALSE(rr.ground_truth_of(0));
}

TEST(MatchGreedy, HigherScoreWins) {
  const auto r = match_greedy_one_to_one(std::vector<double>{0.3, 0.9}, matrix({{0.8}, {0.7}}), 0.5);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].detection, 1u);
  EXPECT_EQ(r.unmatched_detections, std::vector<std::size_t>{0});
}

TEST(MatchGreedy, BelowThresholdIsUnmatched) {
  const auto r = match_greedy_one_to_one(std::vector<double>{0.9}, matrix({{0.6}}), 0.75);
  EXPECT_TRUE(r.pairs.empty());
}

TEST(MatchGreedy, TraceOfTwoByTwo) {
  const auto r = match_greedy_one_to_one(std::vector<double>{0.9, 0.8}, matrix({{0.6, 0.9}, {0.8, 0.85}}), 0.5);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0], (MatchPair{0, 1, 0.9}));
  EXPECT_EQ(r.pairs[1], (MatchPair{1, 0, 0.8}));
}

TEST(MatchGreedy, ScoreTiesKeepInputOrder) {
  const auto r = match_greedy_one_to_one(std::vector<double>{0.5, 0.5}, matrix({{0.7}, {0.9}}), 0.5);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].detection, 0u);
}

TEST(MatchGreedy, NeverPairsBelowThresholdOrTwice) {
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t nd = 1 + gen() % 6, ng = 1 + gen() % 5;
    IouMatrix m(nd, ng);
    std::vector<double> scores(nd);
    for (auto& s : scores) s = u(gen);
    for (auto& v : m.values) v = u(gen) < 0.3 ? 0.0 : u(gen);
    const double thr = u(gen);
    const auto r = match_greedy_one_to_one(scores, m, thr);
    std::vector<int> used(ng, 0);
    for (const auto& p : r.pairs) {
      EXPECT_GE(p.iou, thr);
      EXPECT_GT(p.iou, 0.0);
      EXPECT_EQ(++used[p.ground_truth], 1);
    }
    EXPECT_EQ(r.pairs.size() + r.unmatched_detections.size(), nd);
    EXPECT_EQ(r.pairs.size() + r.unmatched_ground_truths.size(), ng);
  }
}

TEST(RegionIou, MaskGeometryNeedsMasks) {
  const auto d = det_box({0, 0, 1, 1});
  const auto g = gt_box({0, 0, 1, 1});
  EXPECT_THROW(region_iou(d, g, GeometryKind::mask), InputError);
  EXPECT_EQ(parse_geometry("box"), GeometryKind::box);
  EXPECT_THROW(parse_geometry("polygon"), InputError);
}
