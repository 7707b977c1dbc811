#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <limits>
#include <set>

#include "ap_oracle.hpp"
#include "sodgelan/eval/results.hpp"

using namespace sodgelan;
using namespace sodgelan::eval;
namespace fs = std::filesystem;
using testutil::box;
using testutil::oracle_ap;
using testutil::random_gts;
using testutil::random_preds;

namespace {

DetectionSet tiny_set(int n, std::uint64_t seed) {
  DetectionSet s;
  s.image_size = 160;
  Rng rng = make_rng(seed);
  for (int i = 0; i < n; ++i) {
    std::vector<float> img(3 * 160 * 160, 0.0f);
    std::vector<BoundingBox> labels;
    for (int k = 0; k < 2; ++k) {
      const int x = uniform_int(rng, 10, 140), y = uniform_int(rng, 10, 140), w = uniform_int(rng, 2, 12);
      for (int c = 0; c < 3; ++c)
        for (int yy = y; yy < y + w; ++yy)
          for (int xx = x; xx < x + w; ++xx) img[(static_cast<std::size_t>(c) * 160 + yy) * 160 + xx] = 0.9f;
      labels.push_back(BoundingBox::from_corners(x / 160.0, y / 160.0, (x + w) / 160.0, (y + w) / 160.0));
    }
    s.images.push_back(img);
    s.labels.push_back(labels);
    s.names.push_back("img" + std::to_string(i));
  }
  return s;
}

}  // namespace

TEST(Iou, HandCases) {
  EXPECT_NEAR(iou(box(0.5, 0.5, 0.2, 0.2), box(0.5, 0.5, 0.2, 0.2)), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(iou(box(0.2, 0.2, 0.1, 0.1), box(0.7, 0.7, 0.1, 0.1)), 0.0);
  // unit squares offset by half a side
  EXPECT_NEAR(iou(box(0.5, 0.5, 1, 1), box(1.0, 0.5, 1, 1)), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(iou(box(0.5, 0.5, 0, 0), box(0.5, 0.5, 0, 0)), 0.0);
}

TEST(Iou, SymmetricAndBounded) {
  Rng rng = make_rng(3);
  for (int i = 0; i < 5000; ++i) {
    auto a = random_gts(rng, 1)[0], b = random_gts(rng, 1)[0];
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(iou(a, a), 1.0, 1e-12);
  }
}

TEST(Ap, MatchesExhaustiveOracle) {
  Rng rng = make_rng(11);
  int compared = 0;
  for (int trial = 0; trial < 1500; ++trial) {
    const auto gts = random_gts(rng, uniform_int(rng, 0, 5));
    const auto preds = random_preds(rng, gts, uniform_int(rng, 0, 8));
    for (double t : kIouThresholds) {
      const auto ap = match_and_ap(preds, gts, t);
      const double o = oracle_ap({preds}, {gts}, t);
      if (std::isnan(o)) {
        EXPECT_FALSE(ap);
        continue;
      }
      ASSERT_TRUE(ap);
      ASSERT_NEAR(*ap, o, 1e-9) << "trial " << trial << " t=" << t;
      ++compared;
    }
  }
  EXPECT_GT(compared, 10000);
}

TEST(Ap, PooledMetricsMatchOracle) {
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const int images = uniform_int(rng, 1, 4);
    std::vector<std::vector<BoundingBox>> gts;
    std::vector<std::vector<Detection>> preds;
    for (int i = 0; i < images; ++i) {
      gts.push_back(random_gts(rng, uniform_int(rng, 0, 5)));
      preds.push_back(random_preds(rng, gts.back(), uniform_int(rng, 0, 8)));
    }
    const auto r = map_metrics(preds, gts);
    double mean = 0;
    for (int k = 0; k < kNumThresholds; ++k) {
      double o = oracle_ap(preds, gts, kIouThresholds[k]);
      if (std::isnan(o)) o = 0;
      ASSERT_NEAR(r.per_threshold_ap[k], o, 1e-9) << "trial " << trial;
      mean += o / kNumThresholds;
    }
    EXPECT_NEAR(r.map5095, mean, 1e-12);
    EXPECT_EQ(r.map50, r.per_threshold_ap[0]);
    EXPECT_LE(r.map5095, r.map50 + 1e-12);
  }
}

TEST(Ap, EdgeConventions) {
  const std::vector<BoundingBox> gts{box(0.3, 0.3, 0.2, 0.2), box(0.7, 0.7, 0.1, 0.2)};
  std::vector<Detection> perfect;
  for (auto& g : gts) perfect.push_back({g, 1.0, 0});
  EXPECT_DOUBLE_EQ(*match_and_ap(perfect, gts, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(*match_and_ap({{box(0.1, 0.9, 0.05, 0.05), 0.9, 0}}, gts, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(*match_and_ap(perfect, {}, 0.5), 0.0);
  EXPECT_FALSE(match_and_ap({}, {}, 0.5));
  EXPECT_DOUBLE_EQ(*match_and_ap({}, gts, 0.5), 0.0);
  // one ground truth, two matching predictions: the second is a false positive
  EXPECT_DOUBLE_EQ(*match_and_ap({{gts[0], 0.9, 0}, {gts[0], 0.8, 0}}, {gts[0]}, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(*match_and_ap({{gts[0], 0.8, 0}, {box(0.9, 0.1, 0.05, 0.05), 0.9, 0}}, {gts[0]}, 0.5), 0.5);
}

TEST(Ap, AddingTopTruePositiveNeverLowersAp) {
  Rng rng = make_rng(13);
  for (int trial = 0; trial < 2000; ++trial) {
    auto gts = random_gts(rng, uniform_int(rng, 1, 5));
    auto preds = random_preds(rng, gts, uniform_int(rng, 0, 8));
    const double before = *match_and_ap(preds, gts, 0.5);
    // a new object and an exact prediction for it, ranked first
    gts.push_back(box(0.95, 0.95, 0.02, 0.02));
    auto with = preds;
    with.push_back({gts.back(), 2.0, 0});
    EXPECT_GE(*match_and_ap(with, gts, 0.5) + 1e-12, *match_and_ap(preds, gts, 0.5));
    EXPECT_GE(before, 0.0);
  }
}

TEST(MapMetrics, PerfectEmptyAndShrunk) {
  Rng rng = make_rng(14);
  std::vector<std::vector<BoundingBox>> gts;
  std::vector<std::vector<Detection>> perfect, empty, shrunk;
  for (int i = 0; i < 20; ++i) {
    // one object per column so a shrunk box can only match its own target
    gts.emplace_back();
    for (int j = 0, n = uniform_int(rng, 1, 5); j < n; ++j)
      gts.back().push_back(box(0.1 + 0.2 * j, uniform(rng, 0.3, 0.7), uniform(rng, 0.02, 0.15), uniform(rng, 0.02, 0.3)));
    perfect.emplace_back();
    shrunk.emplace_back();
    empty.emplace_back();
    for (auto& g : gts.back()) {
      perfect.back().push_back({g, 1.0, 0});
      BoundingBox s = g;
      s.w *= std::sqrt(0.62);
      s.h *= std::sqrt(0.62);
      shrunk.back().push_back({s, 0.9, 0});
    }
  }
  auto p = map_metrics(perfect, gts);
  EXPECT_DOUBLE_EQ(p.map50, 1.0);
  EXPECT_DOUBLE_EQ(p.map5095, 1.0);
  auto e = map_metrics(empty, gts);
  EXPECT_EQ(e.map50, 0.0);
  EXPECT_EQ(e.map5095, 0.0);
  // nested boxes at 62% area have IoU 0.62 with their targets
  auto s = map_metrics(shrunk, gts);
  EXPECT_DOUBLE_EQ(s.map50, 1.0);
  EXPECT_DOUBLE_EQ(s.per_threshold_ap[2], 1.0);
  for (int k = 3; k < kNumThresholds; ++k) EXPECT_EQ(s.per_threshold_ap[k], 0.0);
  for (int k = 1; k < kNumThresholds; ++k) EXPECT_LE(s.per_threshold_ap[k], s.per_threshold_ap[k - 1]);
  EXPECT_THROW(map_metrics(perfect, {}), InvalidInput);
}

// Plain CIoU with the aspect weight frozen at `alpha`, all in cell units.
double oracle_ciou(const double r[4], int gx, int gy, double tcx, double tcy, double tw, double th, double* alpha) {
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
  const double px = gx - 0.5 + 2 * sig(r[0]), py = gy - 0.5 + 2 * sig(r[1]), pw = std::exp(r[2]), ph = std::exp(r[3]);
  const double ix = std::max(0.0, std::min(px + pw / 2, tcx + tw / 2) - std::max(px - pw / 2, tcx - tw / 2));
  const double iy = std::max(0.0, std::min(py + ph / 2, tcy + th / 2) - std::max(py - ph / 2, tcy - th / 2));
  const double u = pw * ph + tw * th - ix * iy, o = ix * iy / u;
  const double cw = std::max(px + pw / 2, tcx + tw / 2) - std::min(px - pw / 2, tcx - tw / 2);
  const double chh = std::max(py + ph / 2, tcy + th / 2) - std::min(py - ph / 2, tcy - th / 2);
  const double v = 4 / (M_PI * M_PI) * std::pow(std::atan(tw / th) - std::atan(pw / ph), 2);
  if (*alpha < 0) *alpha = v / (v - o + 1);
  return o - ((px - tcx) * (px - tcx) + (py - tcy) * (py - tcy)) / (cw * cw + chh * chh) - *alpha * v;
}

TEST(Loss, CiouGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    double r[4] = {uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 1), uniform(rng, -2, 1)};
    const double tcx = 3 + uniform(rng, -0.4, 1.4), tcy = 4 + uniform(rng, -0.4, 1.4);
    const double tw = uniform(rng, 0.1, 3), th = uniform(rng, 0.1, 3);
    const auto g = ciou_from_raw({r[0], r[1], r[2], r[3]}, 3, 4, tcx, tcy, tw, th);
    double alpha = -1;
    EXPECT_NEAR(g.ciou, oracle_ciou(r, 3, 4, tcx, tcy, tw, th, &alpha), 1e-8);
    for (int k = 0; k < 4; ++k) {
      double a[4], b[4];
      std::copy(r, r + 4, a);
      std::copy(r, r + 4, b);
      a[k] += 1e-6;
      b[k] -= 1e-6;
      const double fd = (oracle_ciou(a, 3, 4, tcx, tcy, tw, th, &alpha) - oracle_ciou(b, 3, 4, tcx, tcy, tw, th, &alpha)) / 2e-6;
      EXPECT_NEAR(g.grad[k], fd, 1e-5 + 1e-4 * std::abs(fd)) << "trial " << trial << " k " << k;
    }
    EXPECT_LE(g.ciou, 1.0);
    EXPECT_GE(g.ciou, -1.5);
  }
  const auto exact = ciou_from_raw(model::encode_box(box(0.45, 0.55, 0.1, 0.2), 4, 5, 8, 80), 4, 5, 4.5, 5.5, 1, 2);
  EXPECT_NEAR(exact.ciou, 1.0, 1e-6);
  // beyond the size clamp the size has no gradient
  EXPECT_EQ(ciou_from_raw({0, 0, 9, 0}, 0, 0, 0.5, 0.5, 1, 1).grad[2], 0.0);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const std::vector<int> strides{8, 16, 32};
  Rng rng = make_rng(22);
  std::vector<Tensor<double>> raw;
  for (int s : strides) {
    Tensor<double> t({2, 6, 64 / s, 64 / s});
    for (auto& v : t.values()) v = uniform(rng, -1.5, 1.5);
    raw.push_back(t);
  }
  std::vector<std::vector<BoundingBox>> gts{{{0, 0.3, 0.4, 0.1, 0.15}, {1, 0.7, 0.2, 0.5, 0.4}}, {{0, 0.55, 0.6, 0.05, 0.2}}};
  // the CIoU part is checked against its own oracle above; here the L1 and class terms are exact
  const LossWeights w{0.0, 1.0, 0.5};
  std::vector<Tensor<double>> grad;
  detection_loss(raw, gts, strides, 64, w, &grad);
  for (std::size_t l = 0; l < raw.size(); ++l)
    for (std::size_t i = 0; i < raw[l].size(); ++i) {
      auto plus = raw, minus = raw;
      plus[l].values()[i] += 1e-6;
      minus[l].values()[i] -= 1e-6;
      const double fd =
          (detection_loss(plus, gts, strides, 64, w).total - detection_loss(minus, gts, strides, 64, w).total) / 2e-6;
      ASSERT_NEAR(grad[l].values()[i], fd, 1e-5 + 1e-4 * std::abs(fd)) << "level " << l << " index " << i;
    }
  // box weight contributes exactly box_w * (1 - ciou) summed gradient
  std::vector<Tensor<double>> g_box, g_none;
  const auto full = detection_loss(raw, gts, strides, 64, {7.5, 1.0, 0.5}, &g_box);
  const auto part = detection_loss(raw, gts, strides, 64, w, &g_none);
  EXPECT_NEAR(full.total - part.total, 7.5 * full.box * 2, 1e-9);
  EXPECT_GT(full.num_pos, 0);
}

TEST(Loss, AssignmentCoversEveryBox) {
  Rng rng = make_rng(23);
  const std::vector<int> strides{8, 16, 32};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::vector<BoundingBox>> gts{random_gts(rng, uniform_int(rng, 1, 4))};
    for (auto& b : gts[0]) {
      b.w = std::exp(uniform(rng, std::log(1.0 / 160), std::log(0.9)));
      b.h = b.w * uniform(rng, 0.5, 2.0);
    }
    auto targets = assign_targets(gts, strides, 160);
    std::vector<int> hits(gts[0].size(), 0);
    for (auto& t : targets) {
      const auto& b = gts[0][static_cast<std::size_t>(t.gt)];
      EXPECT_TRUE(model::cell_covers(b, t.gx, t.gy, strides[static_cast<std::size_t>(t.level)], 160));
      ++hits[static_cast<std::size_t>(t.gt)];
    }
    // a box can only lose cells to a smaller box sharing them
    for (std::size_t k = 0; k < hits.size(); ++k)
      if (hits[k] == 0) {
        bool shadowed = false;
        for (std::size_t j = 0; j < gts[0].size(); ++j) shadowed |= j != k && gts[0][j].area() <= gts[0][k].area();
        EXPECT_TRUE(shadowed);
      }
  }
  // level follows size: 4 px -> stride 8, 64 px -> 16, 128 px -> 32 (at 640)
  auto lv = [&](double px) {
    return assign_targets({{box(0.5, 0.5, px / 640, px / 640)}}, strides, 640).front().level;
  };
  EXPECT_EQ(lv(4), 0);
  EXPECT_EQ(lv(64), 1);
  EXPECT_EQ(lv(128), 2);
  EXPECT_EQ(lv(600), 2);

  // a 2 px object gets one cell; a box spanning several cells also gets both neighbors
  EXPECT_EQ(assign_targets({{box(0.51, 0.51, 2.0 / 160, 2.0 / 160)}}, strides, 160).size(), 1u);
  EXPECT_EQ(assign_targets({{box(0.51, 0.51, 40.0 / 160, 40.0 / 160)}}, strides, 160).size(), 3u);
}

TEST(Loss, EncodedTargetsDecodeToPerfectDetections) {
  const std::vector<int> strides{8, 16, 32};
  std::vector<std::vector<BoundingBox>> gts{{box(0.3, 0.3, 0.1, 0.08), box(0.7, 0.6, 0.4, 0.3)}, {box(0.5, 0.5, 0.02, 0.02)}};
  std::vector<Tensor<float>> raw;
  for (int s : strides) raw.emplace_back(Shape{2, 5, 160 / s, 160 / s}, -12.0f);
  for (auto& t : assign_targets(gts, strides, 160)) {
    const auto c = model::encode_box(gts[t.image][t.gt], t.gx, t.gy, strides[t.level], 160);
    auto& r = raw[t.level];
    r.at(t.image, 0, t.gy, t.gx) = static_cast<float>(c.tx);
    r.at(t.image, 1, t.gy, t.gx) = static_cast<float>(c.ty);
    r.at(t.image, 2, t.gy, t.gx) = static_cast<float>(c.tw);
    r.at(t.image, 3, t.gy, t.gx) = static_cast<float>(c.th);
    r.at(t.image, 4, t.gy, t.gx) = 12.0f;
  }
  auto lp = detection_loss(raw, gts, strides, 160);
  EXPECT_LT(lp.box, 1e-5);
  EXPECT_LT(lp.l1, 1e-4);
  auto dets = model::decode_and_nms(raw, strides, 160);
  auto r = map_metrics(dets, gts);
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
  EXPECT_GT(r.map5095, 0.99);
}

TEST(Loss, RejectsBadInputs) {
  std::vector<Tensor<double>> raw{Tensor<double>({1, 5, 8, 8})};
  EXPECT_THROW(detection_loss(raw, {{}, {}}, {8}, 64), ShapeMismatch);
  EXPECT_THROW(detection_loss(raw, {{}}, {16}, 64), ShapeMismatch);
  EXPECT_THROW(detection_loss(raw, {{{3, 0.5, 0.5, 0.1, 0.1}}}, {8}, 64), InvalidInput);
  auto lp = detection_loss(raw, {{}}, {8}, 64);
  EXPECT_EQ(lp.num_pos, 0);
  EXPECT_NEAR(lp.cls, 64 * std::log(2.0), 1e-12);
}

TEST(Optim, SgdStepMatchesHandComputation) {
  nn::Parameter<double> w(Shape{2, 1}), b(Shape{2});
  w.value[0] = 1.0;
  w.value[1] = -2.0;
  b.value[0] = 0.5;
  b.value[1] = 0.25;
  nn::ParamList<double> ps{{"w", &w}, {"b", &b}};
  Sgd<double> opt(ps, {0.9, 0.1, false});
  w.grad[0] = 0.2;
  w.grad[1] = 0.0;
  b.grad[0] = 1.0;
  b.grad[1] = -1.0;
  opt.step(0.5);
  EXPECT_DOUBLE_EQ(w.value[0], 1.0 - 0.5 * (0.2 + 0.1 * 1.0));
  EXPECT_DOUBLE_EQ(w.value[1], -2.0 - 0.5 * (0.1 * -2.0));
  EXPECT_DOUBLE_EQ(b.value[0], 0.5 - 0.5 * 1.0);  // no decay on rank-1 tensors
  const double v0 = 0.2 + 0.1 * 1.0, w0 = w.value[0];
  opt.step(0.5);  // same gradient again, momentum carries the first velocity
  EXPECT_DOUBLE_EQ(w.value[0], w0 - 0.5 * (0.9 * v0 + 0.2 + 0.1 * w0));
  opt.zero_grad();
  EXPECT_EQ(w.grad[0], 0.0);

  Sgd<double> nest(ps, {0.9, 0.0, true});
  b.grad[0] = 1.0;
  const double b0 = b.value[0];
  nest.step(0.1);
  EXPECT_DOUBLE_EQ(b.value[0], b0 - 0.1 * (1.0 + 0.9 * 1.0));
}

TEST(Optim, AdamWFirstStepsMatchHandComputation) {
  nn::Parameter<double> w(Shape{1, 2}), b(Shape{1});
  w.value[0] = 1.0;
  w.value[1] = 2.0;
  b.value[0] = 3.0;
  nn::ParamList<double> ps{{"w", &w}, {"b", &b}};
  SgdConfig cfg{0.9, 0.01, false, OptimizerKind::AdamW, 0.999, 1e-8};
  auto opt = make_optimizer(ps, cfg);
  w.grad[0] = 0.5;
  w.grad[1] = -4.0;
  b.grad[0] = 1e-3;
  opt->step(0.1);
  // bias correction makes the first step lr * g / (|g| + eps), plus decoupled decay on weights
  EXPECT_NEAR(w.value[0], 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w.value[1], 2.0 - 0.1 * 0.01 * 2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(b.value[0], 3.0 - 0.1 * 1e-3 / (1e-3 + 1e-8), 1e-15);
  // second step with a zero gradient keeps moving along the first moment
  const double w0 = w.value[0];
  opt->zero_grad();
  opt->step(0.1);
  const double m = 0.9 * 0.05 / (1 - 0.81), v = 0.999 * 0.001 * 0.25 / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w.value[0], w0 - 0.1 * 0.01 * w0 - 0.1 * m / (std::sqrt(v) + 1e-8), 1e-15);
  EXPECT_THROW(parse_optimizer("lion"), ConfigError);
}

TEST(Optim, CosineScheduleEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.01, 0.01, 0.0), 0.01);
  EXPECT_NEAR(cosine_lr(0.01, 0.01, 1.0), 1e-4, 1e-18);
  EXPECT_NEAR(cosine_lr(0.01, 0.01, 0.5), 0.01 * (0.01 + 0.99 * 0.5), 1e-18);
}

TEST(Augment, FlipsMoveLabelsWithPixels) {
  auto set = tiny_set(4, 31);
  for (int epoch = 0; epoch < 20; ++epoch)
    for (std::size_t i = 0; i < set.size(); ++i) {
      std::vector<float> img;
      std::vector<BoundingBox> boxes;
      augmented_sample(set, i, HyperProfile::Adjusted, 7, epoch, img, boxes);
      ASSERT_EQ(boxes.size(), set.labels[i].size());
      for (auto& b : boxes) {
        const int x = static_cast<int>(b.cx * 160), y = static_cast<int>(b.cy * 160);
        EXPECT_GT(img[static_cast<std::size_t>(y) * 160 + x], 0.5f) << "label center off its object";
      }
      std::vector<float> again;
      std::vector<BoundingBox> boxes2;
      augmented_sample(set, i, HyperProfile::Adjusted, 7, epoch, again, boxes2);
      EXPECT_EQ(img, again);
    }
}

TEST(Augment, MosaicPlacesQuartersWithScaledLabels) {
  auto set = tiny_set(6, 32);
  std::vector<float> img;
  std::vector<BoundingBox> boxes;
  augmented_sample(set, 2, HyperProfile::Default, 9, 0, img, boxes);
  EXPECT_EQ(boxes.size(), 8u);
  for (auto& b : boxes) {
    EXPECT_GT(b.w, 0);
    EXPECT_LE(b.w, 6.0 / 160 + 1e-12);
    EXPECT_GE(b.x1(), -1e-12);
    EXPECT_LE(b.x2(), 1 + 1e-12);
    // label quadrant is a single quadrant
    EXPECT_EQ(b.x1() < 0.5 - 1e-12, b.x2() <= 0.5 + 1e-12);
  }
}

TEST(Benchmark, ProtocolAccounting) {
  auto m = make_seeded_model<float>(model::ModelVariant::GelanT, model::ScaleProfile::Tiny, 1);
  auto set = tiny_set(3, 41);
  ConstantPowerSampler stub(100.0);
  auto r = benchmark(m, set.images, {25, 5}, &stub);
  ASSERT_EQ(r.times_ms.size(), 25u);
  EXPECT_EQ(r.runs_total, 25);
  EXPECT_EQ(r.warmup_discarded, 5);
  double sum = 0;
  for (int i = 5; i < 25; ++i) sum += r.times_ms[static_cast<std::size_t>(i)];
  EXPECT_DOUBLE_EQ(r.mean_inference_ms, sum / 20);
  ASSERT_TRUE(r.power);
  EXPECT_EQ(r.power->mean_mw, 100.0);
  EXPECT_EQ(r.power->peak_mw, 100.0);
  EXPECT_EQ(r.params, m.count_parameters());
  EXPECT_GT(r.gflops, 0);
  EXPECT_GE(r.mean_mem_bytes, 0);
  EXPECT_LE(r.mean_mem_bytes, static_cast<double>(r.peak_mem_bytes));
  ConstantPowerSampler offset(100.0, 40.0);
  EXPECT_EQ(benchmark(m, set.images, {6, 1}, &offset).power->peak_mw, 60.0);
  EXPECT_THROW(benchmark(m, set.images, {5, 5}), ConfigError);
  EXPECT_THROW(benchmark(m, {}, {}), InvalidInput);
  EXPECT_FALSE(benchmark(m, set.images, {3, 1}).power);
}

TEST(Seed, InitializationFollowsGlobalSeed) {
  auto a = make_seeded_model<float>(model::ModelVariant::GelanSE, model::ScaleProfile::Tiny, 1);
  EXPECT_EQ(global_seed(), 1u);
  auto b = make_seeded_model<float>(model::ModelVariant::GelanSE, model::ScaleProfile::Tiny, 1);
  auto c = make_seeded_model<float>(model::ModelVariant::GelanSE, model::ScaleProfile::Tiny, 2);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  double diff = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_TRUE(pa[i].param->value == pb[i].param->value);
    for (std::size_t k = 0; k < pa[i].param->value.size(); ++k)
      diff = std::max(diff, static_cast<double>(std::abs(pa[i].param->value[k] - pc[i].param->value[k])));
  }
  EXPECT_GT(diff, 0);
}

TEST(Train, BookkeepingAndDeterminism) {
  auto set = tiny_set(6, 51);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  std::vector<TrainResult> runs;
  for (std::uint64_t seed : {1u, 1u, 2u}) {
    cfg.seed = seed;
    auto m = make_seeded_model<float>(model::ModelVariant::GelanSE, model::ScaleProfile::Tiny, seed);
    runs.push_back(train(m, set, set, cfg));
  }
  const auto& h = runs[0].history;
  ASSERT_EQ(h.size(), 3u);
  EXPECT_TRUE(std::isfinite(h[0].loss));
  EXPECT_GT(h[0].loss, 0);
  EXPECT_EQ(runs[0].best.seed, 1u);
  EXPECT_EQ(runs[2].best.seed, 2u);
  const auto argmax = std::max_element(h.begin(), h.end(), [](auto& a, auto& b) { return a.map50 < b.map50; });
  EXPECT_EQ(runs[0].best.best_epoch, argmax->epoch);
  EXPECT_LE(runs[0].best.best_epoch, cfg.epochs);
  for (std::size_t e = 0; e < h.size(); ++e) {
    EXPECT_EQ(h[e].loss, runs[1].history[e].loss);
    EXPECT_EQ(h[e].map50, runs[1].history[e].map50);
  }
  EXPECT_NE(h[0].loss, runs[2].history[0].loss);
  const auto csv = history_csv(h);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Train, DivergenceRestoresLastFiniteState) {
  auto set = tiny_set(4, 61);
  set.images[2][100] = std::numeric_limits<float>::quiet_NaN();
  auto m = make_seeded_model<float>(model::ModelVariant::GelanT, model::ScaleProfile::Tiny, 1);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.augment = false;
  EXPECT_THROW(train(m, set, set, cfg), TrainingDiverged);
  for (auto& p : m.parameters()) EXPECT_TRUE(p.param->value.all_finite()) << p.path;
  for (auto& b : m.buffers()) EXPECT_TRUE(b.buffer->all_finite()) << b.path;
}

TEST(Train, RejectsBadConfig) {
  auto set = tiny_set(2, 71);
  auto m = make_seeded_model<float>(model::ModelVariant::GelanT, model::ScaleProfile::Tiny, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(m, set, set, cfg), ConfigError);
  cfg.epochs = 1;
  set.image_size = 128;
  EXPECT_THROW(train(m, set, set, cfg), ShapeMismatch);
}

TEST(Results, JsonRoundTripAndAggregate) {
  RunRecord r;
  r.variant = "gelan-se";
  r.seed = 2;
  r.params = 1234;
  r.gflops = 5.3;
  EvalResult e;
  e.map50 = 0.7;
  e.map5095 = 0.3;
  e.per_threshold_ap.fill(0.3);
  e.best_epoch = 12;
  r.metrics = e;
  BenchmarkResult b;
  b.times_ms = std::vector<double>(25, 2.0);
  b.runs_total = 25;
  b.warmup_discarded = 5;
  b.mean_inference_ms = 2.0;
  b.peak_mem_bytes = 4096;
  b.power = PowerReading{100, 120};
  r.bench = b;
  auto back = run_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));

  RunRecord r1 = r;
  r1.seed = 1;
  r1.metrics->map50 = 0.5;
  const auto csv = aggregate_csv({r, r1}, {"gelan-t", "gelan-se"});
  EXPECT_NE(csv.find("gelan-se,1,0.500000"), std::string::npos) << csv;
  EXPECT_NE(csv.find("gelan-se,avg,0.600000"), std::string::npos) << csv;
  EXPECT_EQ(csv.find("gelan-t"), std::string::npos);
  EXPECT_LT(csv.find("gelan-se,1,"), csv.find("gelan-se,2,"));
}

TEST(Data, LoadSplitFromGeneratedDataset) {
  const auto dir = fs::temp_directory_path() / "sodgelan_eval_data";
  fs::remove_all(dir);
  scene::GeneratorConfig g;
  g.total_images = 12;
  g.image_size = 80;
  g.out_dir = dir;
  generate_dataset(g);
  auto train_set = load_split(dir, "train", 80);
  auto test_set = load_split(dir, "test", 160);
  EXPECT_EQ(train_set.size(), 9u);
  EXPECT_EQ(test_set.size(), 3u);
  EXPECT_EQ(test_set.images[0].size(), 3u * 160 * 160);
  // same size: exact byte -> float conversion
  const auto png = scene::read_png(dir / "images/train" / (train_set.names[0] + ".png"));
  EXPECT_FLOAT_EQ(train_set.images[0][5 * 80 + 7], png.px(7, 5)[0] / 255.0f);
  auto bal = train_set.balanced_head(3);
  std::set<scene::DistanceBin> bins(bal.bins.begin(), bal.bins.end());
  EXPECT_EQ(bins.size(), 3u);
  EXPECT_THROW(load_split(dir, "val", 80), InvalidInput);
  fs::remove_all(dir);
}
