#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "sodgelan/core/box.hpp"
#include "sodgelan/core/error.hpp"

namespace sodgelan::eval {

inline constexpr int kNumThresholds = 10;

// 0.50, 0.55, ..., 0.95
inline constexpr std::array<double, kNumThresholds> kIouThresholds{0.50, 0.55, 0.60, 0.65, 0.70,
                                                                   0.75, 0.80, 0.85, 0.90, 0.95};

struct EvalResult {
  double map50 = 0, map5095 = 0;
  std::array<double, kNumThresholds> per_threshold_ap{};
  std::uint64_t seed = 0;
  int best_epoch = -1;
};

// One scored prediction in a pooled ranking: which image it came from and whether it matched.
struct RankedMatch {
  double score;
  bool tp;
};

// Area under the all-point interpolated precision/recall curve. `ranked` must already be in
// ranking order. Returns nothing when there is no ground truth and no prediction.
inline std::optional<double> ap_from_ranking(const std::vector<RankedMatch>& ranked, std::size_t num_gt) {
  if (num_gt == 0) return ranked.empty() ? std::nullopt : std::optional<double>(0.0);
  const std::size_t n = ranked.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked[i].tp;
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // monotone envelope from the right
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev) * precision[i];
    prev = recall[i];
  }
  return ap;
}

// Greedy matching for one image at IoU threshold t. Predictions are visited in descending score
// (stable for ties); each takes the highest-IoU unmatched ground truth of its class with IoU >= t.
// Returns the TP flag of every prediction in the order given.
inline std::vector<bool> greedy_match(const std::vector<Detection>& preds, const std::vector<BoundingBox>& gts,
                                      double t) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  std::vector<bool> used(gts.size(), false), tp(preds.size(), false);
  for (std::size_t i : order) {
    double best = -1;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].class_id != preds[i].class_id) continue;
      const double o = iou(preds[i].box, gts[j]);
      if (o >= t && o > best) {
        best = o;
        best_j = j;
      }
    }
    if (best_j < gts.size()) {
      used[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

// AP of one class pooled over images at threshold t.
inline std::optional<double> pooled_ap(const std::vector<std::vector<Detection>>& preds,
                                       const std::vector<std::vector<BoundingBox>>& gts, double t, int class_id) {
  SODGELAN_REQUIRE(preds.size() == gts.size(), InvalidInput, "prediction and ground-truth image counts differ (",
                   preds.size(), " vs ", gts.size(), ")");
  struct Item {
    double score;
    std::size_t image, index;
    bool tp;
  };
  std::vector<Item> items;
  std::size_t num_gt = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::vector<Detection> p;
    std::vector<BoundingBox> g;
    for (auto& d : preds[i])
      if (d.class_id == class_id) p.push_back(d);
    for (auto& b : gts[i])
      if (b.class_id == class_id) g.push_back(b);
    num_gt += g.size();
    auto tp = greedy_match(p, g, t);
    for (std::size_t k = 0; k < p.size(); ++k) items.push_back({p[k].score, i, k, tp[k]});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });
  std::vector<RankedMatch> ranked;
  ranked.reserve(items.size());
  for (auto& it : items) ranked.push_back({it.score, it.tp});
  return ap_from_ranking(ranked, num_gt);
}

// AP of a single image's predictions against its ground truths.
inline std::optional<double> match_and_ap(const std::vector<Detection>& preds, const std::vector<BoundingBox>& gts,
                                          double t) {
  std::set<int> classes;
  for (auto& d : preds) classes.insert(d.class_id);
  for (auto& b : gts) classes.insert(b.class_id);
  double sum = 0;
  int n = 0;
  for (int c : classes)
    if (auto ap = pooled_ap({preds}, {gts}, t, c)) {
      sum += *ap;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

// Dataset-level metrics. Per threshold, AP is averaged over the classes that appear in either
// predictions or ground truth; a class with predictions but no ground truth scores 0.
inline EvalResult map_metrics(const std::vector<std::vector<Detection>>& preds,
                              const std::vector<std::vector<BoundingBox>>& gts) {
  SODGELAN_REQUIRE(preds.size() == gts.size(), InvalidInput, "prediction and ground-truth image counts differ (",
                   preds.size(), " vs ", gts.size(), ")");
  std::set<int> classes;
  for (auto& v : preds)
    for (auto& d : v) classes.insert(d.class_id);
  for (auto& v : gts)
    for (auto& b : v) classes.insert(b.class_id);
  EvalResult r;
  for (int k = 0; k < kNumThresholds; ++k) {
    double sum = 0;
    int n = 0;
    for (int c : classes)
      if (auto ap = pooled_ap(preds, gts, kIouThresholds[k], c)) {
        sum += *ap;
        ++n;
      }
    r.per_threshold_ap[k] = n ? sum / n : 0.0;
  }
  r.map50 = r.per_threshold_ap[0];
  r.map5095 = std::accumulate(r.per_threshold_ap.begin(), r.per_threshold_ap.end(), 0.0) / kNumThresholds;
  return r;
}

}  // namespace sodgelan::eval
