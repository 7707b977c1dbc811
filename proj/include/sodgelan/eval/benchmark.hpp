#pragma once

#include <chrono>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sodgelan/eval/data.hpp"
#include "sodgelan/model/detection_model.hpp"

namespace sodgelan::eval {

struct PowerReading {
  double mean_mw = 0, peak_mw = 0;
};

// Power telemetry source. baseline() is read before the timed window and subtracted.
class PowerSampler {
 public:
  virtual ~PowerSampler() = default;
  virtual double baseline_mw() { return 0; }
  virtual void start() = 0;
  virtual void stop() = 0;
  virtual PowerReading read() = 0;
};

// Reports the same value for every sample.
class ConstantPowerSampler : public PowerSampler {
 public:
  explicit ConstantPowerSampler(double mw, double baseline = 0) : mw_(mw), baseline_(baseline) {}
  double baseline_mw() override { return baseline_; }
  void start() override { running_ = true; }
  void stop() override { running_ = false; }
  PowerReading read() override { return {mw_, mw_}; }

 private:
  double mw_, baseline_;
  bool running_ = false;
};

// Resident set size of this process, in bytes (0 when /proc is unavailable).
inline std::size_t current_rss_bytes() {
  std::ifstream f("/proc/self/status");
  std::string key;
  while (f >> key) {
    if (key == "VmRSS:") {
      std::size_t kb = 0;
      f >> kb;
      return kb * 1024;
    }
    f.ignore(4096, '\n');
  }
  return 0;
}

struct BenchmarkConfig {
  int runs = 25;
  int warmup = 5;
};

struct BenchmarkResult {
  std::vector<double> times_ms;  // every run, warmup included
  int runs_total = 0, warmup_discarded = 0;
  double mean_inference_ms = 0, std_inference_ms = 0;
  std::size_t peak_mem_bytes = 0;  // RSS above the pre-run baseline
  double mean_mem_bytes = 0;
  double gflops = 0;
  std::size_t params = 0;
  std::optional<PowerReading> power;
};

// Mean and sample standard deviation of times[warmup:].
inline std::pair<double, double> measured_stats(const std::vector<double>& times, int warmup) {
  const auto first = times.begin() + warmup;
  const double n = static_cast<double>(times.end() - first);
  const double mean = std::accumulate(first, times.end(), 0.0) / n;
  double sq = 0;
  for (auto it = first; it != times.end(); ++it) sq += (*it - mean) * (*it - mean);
  return {mean, n > 1 ? std::sqrt(sq / (n - 1)) : 0.0};
}

// Sequential batch-1 inference over `images` (cycled). Only runs after the warmup count.
template <class T>
BenchmarkResult benchmark(model::DetectionModel<T>& m, const std::vector<std::vector<float>>& images,
                          const BenchmarkConfig& cfg = {}, PowerSampler* power = nullptr) {
  SODGELAN_REQUIRE(cfg.warmup >= 0 && cfg.runs > cfg.warmup, ConfigError, "benchmark needs runs (", cfg.runs,
                   ") > warmup (", cfg.warmup, ")");
  SODGELAN_REQUIRE(!images.empty(), InvalidInput, "benchmark needs at least one image");
  m.set_mode(nn::Mode::Eval);
  BenchmarkResult r;
  r.runs_total = cfg.runs;
  r.warmup_discarded = cfg.warmup;
  r.gflops = m.count_gflops();
  r.params = m.count_parameters();

  std::vector<Tensor<T>> inputs;
  for (auto& img : images) inputs.push_back(stack_images<T>({&img}, m.input_size()));
  const std::size_t base_rss = current_rss_bytes();
  const double base_power = power ? power->baseline_mw() : 0.0;
  double mem_sum = 0;
  for (int i = 0; i < cfg.runs; ++i) {
    if (power && i == cfg.warmup) power->start();
    const auto& x = inputs[static_cast<std::size_t>(i) % inputs.size()];
    const auto t0 = std::chrono::steady_clock::now();
    auto out = m.forward(x);
    const auto t1 = std::chrono::steady_clock::now();
    r.times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (i >= cfg.warmup) {
      const std::size_t rss = current_rss_bytes();
      const std::size_t delta = rss > base_rss ? rss - base_rss : 0;
      r.peak_mem_bytes = std::max(r.peak_mem_bytes, delta);
      mem_sum += static_cast<double>(delta);
    }
  }
  if (power) {
    power->stop();
    auto p = power->read();
    r.power = PowerReading{p.mean_mw - base_power, p.peak_mw - base_power};
  }
  std::tie(r.mean_inference_ms, r.std_inference_ms) = measured_stats(r.times_ms, cfg.warmup);
  r.mean_mem_bytes = mem_sum / (cfg.runs - cfg.warmup);
  return r;
}

}  // namespace sodgelan::eval
