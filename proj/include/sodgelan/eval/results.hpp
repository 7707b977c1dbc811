#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sodgelan/eval/benchmark.hpp"
#include "sodgelan/eval/train.hpp"

namespace sodgelan::eval {

// One trained or benchmarked model.
struct RunRecord {
  std::string variant, scale = "tiny", profile = "adjusted";
  std::uint64_t seed = 0;
  std::optional<EvalResult> metrics;
  std::size_t params = 0;
  double gflops = 0;
  std::optional<BenchmarkResult> bench;
};

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j;
  j["variant"] = r.variant;
  j["scale"] = r.scale;
  j["profile"] = r.profile;
  j["seed"] = r.seed;
  j["params"] = r.params;
  j["gflops"] = r.gflops;
  if (r.metrics) {
    j["map50"] = r.metrics->map50;
    j["map5095"] = r.metrics->map5095;
    j["per_threshold_ap"] = r.metrics->per_threshold_ap;
    j["best_epoch"] = r.metrics->best_epoch;
  }
  if (r.bench) {
    auto& b = *r.bench;
    j["benchmark"] = {{"times_ms", b.times_ms},
                      {"runs_total", b.runs_total},
                      {"warmup_discarded", b.warmup_discarded},
                      {"mean_inference_ms", b.mean_inference_ms},
                      {"std_inference_ms", b.std_inference_ms},
                      {"peak_mem_bytes", b.peak_mem_bytes},
                      {"mean_mem_bytes", b.mean_mem_bytes}};
    if (b.power) j["benchmark"]["power"] = {{"mean_mw", b.power->mean_mw}, {"peak_mw", b.power->peak_mw}};
  }
  return j;
}

inline RunRecord run_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.variant = j.at("variant").get<std::string>();
  r.scale = j.value("scale", "tiny");
  r.profile = j.value("profile", "adjusted");
  r.seed = j.value<std::uint64_t>("seed", 0);
  r.params = j.value<std::size_t>("params", 0);
  r.gflops = j.value("gflops", 0.0);
  if (j.contains("map50")) {
    EvalResult e;
    e.map50 = j["map50"].get<double>();
    e.map5095 = j["map5095"].get<double>();
    e.per_threshold_ap = j["per_threshold_ap"].get<std::array<double, kNumThresholds>>();
    e.best_epoch = j.value("best_epoch", -1);
    e.seed = r.seed;
    r.metrics = e;
  }
  if (j.contains("benchmark")) {
    const auto& b = j["benchmark"];
    BenchmarkResult br;
    br.times_ms = b["times_ms"].get<std::vector<double>>();
    br.runs_total = b["runs_total"].get<int>();
    br.warmup_discarded = b["warmup_discarded"].get<int>();
    br.mean_inference_ms = b["mean_inference_ms"].get<double>();
    br.std_inference_ms = b.value("std_inference_ms", 0.0);
    br.peak_mem_bytes = b["peak_mem_bytes"].get<std::size_t>();
    br.mean_mem_bytes = b["mean_mem_bytes"].get<double>();
    br.gflops = r.gflops;
    br.params = r.params;
    if (b.contains("power")) br.power = PowerReading{b["power"]["mean_mw"], b["power"]["peak_mw"]};
    r.bench = br;
  }
  return r;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream f(p);
  SODGELAN_REQUIRE(f.good(), Error, "cannot write ", p.string());
  f << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream f(p);
  SODGELAN_REQUIRE(f.good(), InvalidInput, "cannot read ", p.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
}

inline std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,box_loss,l1_loss,cls_loss,loss,lr,map50,map5095\n";
  for (auto& e : h)
    out += std::to_string(e.epoch) + "," + fmt(e.box_loss) + "," + fmt(e.l1_loss) + "," + fmt(e.cls_loss) + "," +
           fmt(e.loss) + "," + fmt(e.lr, 8) + "," + fmt(e.map50) + "," + fmt(e.map5095) + "\n";
  return out;
}

// Rows per (variant, seed) followed by one "avg" row per variant, in the given variant order.
inline std::string aggregate_csv(const std::vector<RunRecord>& runs, const std::vector<std::string>& variant_order) {
  std::string out = "variant,seed,map50,map5095,gflops,params,latency_ms,peak_mem_bytes\n";
  auto cell = [](const std::optional<double>& v, int prec = 6) { return v ? fmt(*v, prec) : std::string(); };
  for (const auto& v : variant_order) {
    std::vector<const RunRecord*> rows;
    for (auto& r : runs)
      if (r.variant == v) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    if (rows.empty()) continue;
    std::map<std::string, std::pair<double, int>> sums;
    auto acc = [&](const std::string& k, const std::optional<double>& x) {
      if (x) {
        sums[k].first += *x;
        ++sums[k].second;
      }
    };
    for (auto* r : rows) {
      std::optional<double> m50, m95, lat, mem;
      if (r->metrics) {
        m50 = r->metrics->map50;
        m95 = r->metrics->map5095;
      }
      if (r->bench) {
        lat = r->bench->mean_inference_ms;
        mem = static_cast<double>(r->bench->peak_mem_bytes);
      }
      acc("map50", m50);
      acc("map5095", m95);
      acc("lat", lat);
      acc("mem", mem);
      out += v + "," + std::to_string(r->seed) + "," + cell(m50) + "," + cell(m95) + "," + fmt(r->gflops, 4) + "," +
             std::to_string(r->params) + "," + cell(lat, 4) + "," + cell(mem, 0) + "\n";
    }
    auto mean = [&](const std::string& k) -> std::optional<double> {
      auto it = sums.find(k);
      if (it == sums.end() || it->second.second == 0) return std::nullopt;
      return it->second.first / it->second.second;
    };
    out += v + ",avg," + cell(mean("map50")) + "," + cell(mean("map5095")) + "," + fmt(rows[0]->gflops, 4) + "," +
           std::to_string(rows[0]->params) + "," + cell(mean("lat"), 4) + "," + cell(mean("mem"), 0) + "\n";
  }
  return out;
}

}  // namespace sodgelan::eval
