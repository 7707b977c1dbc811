#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sodgelan/eval/results.hpp"
#include "sodgelan/model/config.hpp"

namespace sodgelan::report {

// Two-sided 95% Student t quantile.
inline double t_critical_95(int df) {
  SODGELAN_REQUIRE(df >= 1, InvalidInput, "t quantile needs df >= 1");
  static constexpr std::array<double, 30> table{12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060,
                                                2.2622,  2.2281, 2.2010, 2.1788, 2.1604, 2.1448, 2.1314, 2.1199,
                                                2.1098,  2.1009, 2.0930, 2.0860, 2.0796, 2.0739, 2.0687, 2.0639,
                                                2.0595,  2.0555, 2.0518, 2.0484, 2.0452, 2.0423};
  if (df <= 30) return table[static_cast<std::size_t>(df - 1)];
  // Cornish-Fisher expansion around the normal quantile
  const double z = 1.959964, d = df;
  return z + (z * z * z + z) / (4 * d) + (5 * std::pow(z, 5) + 16 * z * z * z + 3 * z) / (96 * d * d);
}

struct Interval {
  double mean = 0;
  double half_width = 0;  // 0 for a single value
  int n = 0;
};

inline std::optional<Interval> ci95(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  Interval iv;
  iv.n = static_cast<int>(xs.size());
  for (double x : xs) iv.mean += x / iv.n;
  if (iv.n > 1) {
    double sq = 0;
    for (double x : xs) sq += (x - iv.mean) * (x - iv.mean);
    iv.half_width = t_critical_95(iv.n - 1) * std::sqrt(sq / (iv.n - 1)) / std::sqrt(iv.n);
  }
  return iv;
}

// One table row: runs of a variant pooled across seeds.
struct VariantSummary {
  std::string variant;
  int runs = 0;
  std::optional<Interval> map50, map5095, latency_ms, peak_mem_mb;
  std::optional<double> gflops;
  std::optional<std::size_t> params;
};

inline std::vector<std::string> variant_order() {
  std::vector<std::string> out;
  for (auto v : model::kAllVariants) out.emplace_back(model::variant_name(v));
  return out;
}

// Rows for every known variant in table order, plus any unknown variant names after them.
inline std::vector<VariantSummary> summarize(const std::vector<eval::RunRecord>& runs) {
  auto order = variant_order();
  for (auto& r : runs)
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  std::vector<VariantSummary> rows;
  for (auto& v : order) {
    VariantSummary s;
    s.variant = v;
    std::vector<double> m50, m95, lat, mem;
    for (auto& r : runs) {
      if (r.variant != v) continue;
      ++s.runs;
      if (r.params) s.params = r.params;
      if (r.gflops > 0) s.gflops = r.gflops;
      if (r.metrics) {
        m50.push_back(r.metrics->map50);
        m95.push_back(r.metrics->map5095);
      }
      if (r.bench) {
        lat.push_back(r.bench->mean_inference_ms);
        mem.push_back(static_cast<double>(r.bench->peak_mem_bytes) / (1024.0 * 1024.0));
      }
    }
    s.map50 = ci95(m50);
    s.map5095 = ci95(m95);
    s.latency_ms = ci95(lat);
    s.peak_mem_mb = ci95(mem);
    rows.push_back(s);
  }
  return rows;
}

inline constexpr const char* kMissing = "—";

inline std::string cell(const std::optional<Interval>& iv, int prec) {
  if (!iv) return kMissing;
  std::string s = eval::fmt(iv->mean, prec);
  if (iv->n > 1) s += " ± " + eval::fmt(iv->half_width, prec);
  return s;
}

// Markdown comparison table; intervals are 95% t-intervals over runs.
inline std::string markdown_table(const std::vector<VariantSummary>& rows) {
  std::string out =
      "| Model | Runs | mAP50 | mAP50:95 | GFLOPs | Params | Latency (ms) | Peak mem (MB) |\n"
      "|---|---|---|---|---|---|---|---|\n";
  for (auto& r : rows) {
    out += "| " + r.variant + " | " + std::to_string(r.runs) + " | " + cell(r.map50, 3) + " | " + cell(r.map5095, 3) +
           " | " + (r.gflops ? eval::fmt(*r.gflops, *r.gflops < 1 ? 3 : 1) : kMissing) + " | " +
           (r.params ? std::to_string(*r.params) : kMissing) + " | " + cell(r.latency_ms, 2) + " | " +
           cell(r.peak_mem_mb, 1) + " |\n";
  }
  return out;
}

// Names of variants with no data for the table's metric columns.
inline std::vector<std::string> missing_variants(const std::vector<VariantSummary>& rows) {
  std::vector<std::string> out;
  for (auto& r : rows)
    if (!r.map50 || !r.latency_ms) out.push_back(r.variant);
  return out;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

// Static SVG bar chart with 95% interval whiskers. Variants without data get an empty slot.
inline std::string bar_chart_svg(const std::vector<std::pair<std::string, std::optional<Interval>>>& bars,
                                 const std::string& title, const std::string& y_label) {
  const int bw = 60, gap = 30, left = 70, top = 40, ph = 260, bottom = 90;
  const int width = left + static_cast<int>(bars.size()) * (bw + gap) + gap;
  const int height = top + ph + bottom;
  double ymax = 0;
  for (auto& [_, iv] : bars)
    if (iv) ymax = std::max(ymax, iv->mean + iv->half_width);
  if (ymax <= 0) ymax = 1;
  ymax *= 1.1;
  auto ypix = [&](double v) { return top + ph - v / ymax * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                  std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + std::to_string(width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       xml_escape(title) + "</text>\n";
  s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top) + "\" x2=\"" + std::to_string(left) +
       "\" y2=\"" + std::to_string(top + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + std::to_string(left) + "\" y1=\"" + std::to_string(top + ph) + "\" x2=\"" +
       std::to_string(width) + "\" y2=\"" + std::to_string(top + ph) + "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = ymax * k / 4;
    s += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + eval::fmt(ypix(v) + 4, 1) +
         "\" text-anchor=\"end\">" + eval::fmt(v, 3) + "</text>\n";
  }
  s += "<text transform=\"translate(16," + std::to_string(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       xml_escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& [name, iv] = bars[i];
    const int x = left + gap + static_cast<int>(i) * (bw + gap);
    const int cx = x + bw / 2;
    if (iv) {
      const double y = ypix(iv->mean);
      s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + eval::fmt(y, 2) + "\" width=\"" + std::to_string(bw) +
           "\" height=\"" + eval::fmt(top + ph - y, 2) + "\" fill=\"#4c72b0\"/>\n";
      if (iv->half_width > 0) {
        const double lo = ypix(std::max(0.0, iv->mean - iv->half_width)), hi = ypix(iv->mean + iv->half_width);
        s += "<line x1=\"" + std::to_string(cx) + "\" y1=\"" + eval::fmt(lo, 2) + "\" x2=\"" + std::to_string(cx) +
             "\" y2=\"" + eval::fmt(hi, 2) + "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
        for (double yy : {lo, hi})
          s += "<line x1=\"" + std::to_string(cx - 8) + "\" y1=\"" + eval::fmt(yy, 2) + "\" x2=\"" +
               std::to_string(cx + 8) + "\" y2=\"" + eval::fmt(yy, 2) + "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
      }
      s += "<text x=\"" + std::to_string(cx) + "\" y=\"" + eval::fmt(ypix(iv->mean + iv->half_width) - 5, 2) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + eval::fmt(iv->mean, 3) + "</text>\n";
    } else {
      s += "<text x=\"" + std::to_string(cx) + "\" y=\"" + std::to_string(top + ph - 5) +
           "\" text-anchor=\"middle\">" + kMissing + "</text>\n";
    }
    s += "<text transform=\"translate(" + std::to_string(cx) + "," + std::to_string(top + ph + 14) +
         ") rotate(35)\" text-anchor=\"start\">" + xml_escape(name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

enum class Metric { Map50, Map5095, Latency, Memory };

inline std::string chart_for(const std::vector<VariantSummary>& rows, Metric m) {
  std::vector<std::pair<std::string, std::optional<Interval>>> bars;
  for (auto& r : rows) {
    const auto& iv = m == Metric::Map50     ? r.map50
                     : m == Metric::Map5095 ? r.map5095
                     : m == Metric::Latency ? r.latency_ms
                                            : r.peak_mem_mb;
    bars.emplace_back(r.variant, iv);
  }
  switch (m) {
    case Metric::Map50: return bar_chart_svg(bars, "mAP50 (95% CI)", "mAP50");
    case Metric::Map5095: return bar_chart_svg(bars, "mAP50:95 (95% CI)", "mAP50:95");
    case Metric::Latency: return bar_chart_svg(bars, "Inference latency (95% CI)", "ms");
    case Metric::Memory: return bar_chart_svg(bars, "Peak memory (95% CI)", "MB");
  }
  return {};
}

}  // namespace sodgelan::report
