#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sodgelan/core/box.hpp"
#include "sodgelan/core/rng.hpp"

namespace testutil {

using sodgelan::BoundingBox;
using sodgelan::Detection;

inline BoundingBox box(double cx, double cy, double w, double h) { return {0, cx, cy, w, h}; }

// Independent AP oracle: explicit greedy matching over a pooled ranking, then AP as the mean,
// over the recall levels k/G, of the best precision reached at recall >= k/G.
inline double oracle_ap(const std::vector<std::vector<Detection>>& preds, const std::vector<std::vector<BoundingBox>>& gts,
                        double t) {
  struct P {
    double score;
    std::size_t img, k;
  };
  std::vector<P> all;
  std::size_t g = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    g += gts[i].size();
    for (std::size_t k = 0; k < preds[i].size(); ++k) all.push_back({preds[i][k].score, i, k});
  }
  if (g == 0) return all.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  // per-image matching in score order, ties by original position
  std::vector<std::vector<bool>> tp(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp[i].assign(preds[i].size(), false);
    std::vector<std::size_t> ord(preds[i].size());
    for (std::size_t k = 0; k < ord.size(); ++k) ord[k] = k;
    for (std::size_t a = 0; a < ord.size(); ++a)  // insertion sort keeps ties stable
      for (std::size_t b = a; b > 0 && preds[i][ord[b]].score > preds[i][ord[b - 1]].score; --b)
        std::swap(ord[b], ord[b - 1]);
    std::vector<bool> taken(gts[i].size(), false);
    for (auto k : ord) {
      int pick = -1;
      double best = 0;
      for (std::size_t j = 0; j < gts[i].size(); ++j) {
        const double o = sodgelan::iou(preds[i][k].box, gts[i][j]);
        if (!taken[j] && o >= t && (pick < 0 || o > best)) {
          pick = static_cast<int>(j);
          best = o;
        }
      }
      if (pick >= 0) {
        taken[static_cast<std::size_t>(pick)] = true;
        tp[i][k] = true;
      }
    }
  }
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a; b > 0 && all[b].score > all[b - 1].score; --b) std::swap(all[b], all[b - 1]);
  std::vector<std::pair<double, double>> pr;  // (recall, precision) after each prediction
  std::size_t hits = 0;
  for (std::size_t r = 0; r < all.size(); ++r) {
    hits += tp[all[r].img][all[r].k];
    pr.push_back({static_cast<double>(hits) / g, static_cast<double>(hits) / (r + 1)});
  }
  double ap = 0;
  for (std::size_t k = 1; k <= g; ++k) {
    double best = 0;
    for (auto& [rec, prec] : pr)
      if (rec >= static_cast<double>(k) / g - 1e-12) best = std::max(best, prec);
    ap += best;
  }
  return ap / g;
}

inline std::vector<BoundingBox> random_gts(sodgelan::Rng& rng, int n) {
  std::vector<BoundingBox> v;
  for (int i = 0; i < n; ++i)
    v.push_back(box(sodgelan::uniform(rng, 0.2, 0.8), sodgelan::uniform(rng, 0.2, 0.8), sodgelan::uniform(rng, 0.05, 0.3), sodgelan::uniform(rng, 0.05, 0.3)));
  return v;
}

// Predictions near the ground truths, some jittered far, scores on a coarse grid so ties occur.
inline std::vector<Detection> random_preds(sodgelan::Rng& rng, const std::vector<BoundingBox>& gts, int n) {
  std::vector<Detection> v;
  for (int i = 0; i < n; ++i) {
    BoundingBox b;
    if (!gts.empty() && sodgelan::uniform01(rng) < 0.7) {
      b = gts[static_cast<std::size_t>(sodgelan::uniform_int(rng, 0, static_cast<int>(gts.size()) - 1))];
      const double j = sodgelan::uniform(rng, 0.0, 0.4);
      b.cx += j * b.w * sodgelan::uniform(rng, -1, 1);
      b.cy += j * b.h * sodgelan::uniform(rng, -1, 1);
      b.w *= sodgelan::uniform(rng, 0.7, 1.3);
      b.h *= sodgelan::uniform(rng, 0.7, 1.3);
    } else {
      b = random_gts(rng, 1)[0];
    }
    v.push_back({b, std::round(sodgelan::uniform01(rng) * 10) / 10, 0});
  }
  return v;
}

}  // namespace testutil
