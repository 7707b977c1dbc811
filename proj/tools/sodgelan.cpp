// sodgelan: dataset generation, training, evaluation, benchmarking and reports.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "sodgelan/eval/results.hpp"
#include "sodgelan/report/report.hpp"

namespace fs = std::filesystem;
using namespace sodgelan;
using nlohmann::json;

namespace {

struct UsageError : Error {
  using Error::Error;
};

// Every setting a command can read. Defaults here are the lowest-precedence layer.
struct Options {
  std::vector<std::string> variants{"gelan-se"};
  std::vector<std::uint64_t> seeds{1};
  std::string scale = "tiny", profile = "adjusted", mode = "single", optimizer = "sgd", split = "test";
  std::string data, out, weights;
  int total = 600, size = 640, runs = 25, warmup = 5, epochs = 300, batch = 16, subset = 0;
  double lr = 0.01;
  bool augment = true, jitter = false, oracle = false;
  double power_stub = -1;  // mW; negative means no sampler
};

json to_json(const Options& o) {
  return {{"variant", o.variants}, {"seed", o.seeds},     {"scale", o.scale},     {"profile", o.profile},
          {"mode", o.mode},        {"optimizer", o.optimizer}, {"split", o.split}, {"data", o.data},
          {"out", o.out},          {"weights", o.weights}, {"total", o.total},     {"size", o.size},
          {"runs", o.runs},        {"warmup", o.warmup},   {"epochs", o.epochs},   {"batch", o.batch},
          {"subset", o.subset},    {"lr", o.lr},           {"augment", o.augment}, {"jitter", o.jitter},
          {"oracle", o.oracle},    {"power-stub", o.power_stub}};
}

template <class V>
void take(const json& j, const char* key, V& v) {
  if (!j.contains(key)) return;
  try {
    v = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

void apply_config(const json& j, Options& o) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  const json known = to_json(o);
  for (auto& [k, _] : j.items())
    if (!known.contains(k) && k != "command") throw UsageError("unknown config key '" + k + "'");
  take(j, "variant", o.variants);
  take(j, "seed", o.seeds);
  take(j, "scale", o.scale);
  take(j, "profile", o.profile);
  take(j, "mode", o.mode);
  take(j, "optimizer", o.optimizer);
  take(j, "split", o.split);
  take(j, "data", o.data);
  take(j, "out", o.out);
  take(j, "weights", o.weights);
  take(j, "total", o.total);
  take(j, "size", o.size);
  take(j, "runs", o.runs);
  take(j, "warmup", o.warmup);
  take(j, "epochs", o.epochs);
  take(j, "batch", o.batch);
  take(j, "subset", o.subset);
  take(j, "lr", o.lr);
  take(j, "augment", o.augment);
  take(j, "jitter", o.jitter);
  take(j, "oracle", o.oracle);
  take(j, "power-stub", o.power_stub);
}

// Flags are bound to `flags`; after parsing, only the ones actually given override `merged`.
struct Command {
  CLI::App* app;
  Options flags;
  std::string config;
  std::vector<std::pair<CLI::Option*, std::function<void(Options&, const Options&)>>> bound;

  template <class V>
  void opt(const std::string& name, V Options::*field, const std::string& help) {
    auto* o = app->add_option(name, flags.*field, help);
    bound.emplace_back(o, [field](Options& dst, const Options& src) { dst.*field = src.*field; });
  }
  void flag(const std::string& name, bool Options::*field, bool value, const std::string& help) {
    auto* o = app->add_flag(name, help);
    bound.emplace_back(o, [field, value](Options& dst, const Options&) { dst.*field = value; });
  }

  Options resolve() const {
    Options merged;
    if (!config.empty()) {
      try {
        apply_config(eval::read_json(config), merged);
      } catch (const InvalidInput& e) {
        throw UsageError(e.what());
      }
    }
    for (auto& [o, copy] : bound)
      if (o->count() > 0) copy(merged, flags);
    return merged;
  }
};

void require_out(const Options& o, bool force) {
  if (o.out.empty()) throw UsageError("--out is required");
  if (fs::exists(o.out) && !fs::is_empty(o.out)) {
    if (!force) throw UsageError("output directory " + o.out + " is not empty (pass --force to overwrite)");
    fs::remove_all(o.out);
  }
  fs::create_directories(o.out);
}

void freeze(const Options& o, const std::string& command) {
  json j = to_json(o);
  j["command"] = command;
  eval::write_json(fs::path(o.out) / "config.json", j);
}

model::ModelVariant variant_of(const std::string& s) {
  try {
    return model::parse_variant(s);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

template <class F>
auto usage_guard(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  SODGELAN_REQUIRE(f.good(), Error, "cannot write ", p.string());
  f << s;
}

int cmd_generate(const Options& o, bool force) {
  scene::GeneratorConfig g;
  g.seed = o.seeds.front();
  g.total_images = o.total;
  g.mode = usage_guard([&] { return scene::parse_mode(o.mode); });
  g.image_size = o.size;
  g.aim_jitter = o.jitter;
  g.out_dir = o.out;
  g.overwrite = force;
  if (o.out.empty()) throw UsageError("--out is required");
  if (o.seeds.size() > 1) throw UsageError("generate takes a single --seed");
  if (fs::exists(o.out) && !fs::is_empty(o.out) && !force)
    throw UsageError("output directory " + o.out + " is not empty (pass --force to overwrite)");
  usage_guard([&] {
    scene::validate(g);
    return 0;
  });
  const auto m = scene::generate_dataset(g);
  freeze(o, "generate");
  const auto bins = m.bin_counts();
  std::printf("generated %zu images (%s mode, seed %llu) in %s\n", m.images.size(), scene::mode_name(m.mode).c_str(),
              static_cast<unsigned long long>(m.seed), o.out.c_str());
  std::printf("bins: near %d, mid %d, far %d\nsplit: train %d, test %d\n", bins[0], bins[1], bins[2],
              m.split_count("train"), m.split_count("test"));
  return 0;
}

eval::TrainConfig train_config(const Options& o, std::uint64_t seed) {
  eval::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.seed = seed;
  cfg.profile = usage_guard([&] { return eval::parse_profile(o.profile); });
  cfg.augment = o.augment;
  cfg.lr0 = o.lr;
  cfg.sgd.kind = usage_guard([&] { return eval::parse_optimizer(o.optimizer); });
  usage_guard([&] {
    cfg.validate();
    return 0;
  });
  return cfg;
}

int cmd_train(const Options& o, bool force) {
  if (o.data.empty()) throw UsageError("--data is required");
  std::vector<model::ModelVariant> variants;
  for (auto& v : o.variants) variants.push_back(variant_of(v));
  const auto scale = usage_guard([&] { return model::parse_scale(o.scale); });
  for (auto s : o.seeds) train_config(o, s);
  require_out(o, force);
  freeze(o, "train");

  std::vector<eval::RunRecord> records;
  std::map<int, std::pair<eval::DetectionSet, eval::DetectionSet>> sets;  // by input size
  for (auto v : variants)
    for (auto seed : o.seeds) {
      auto m = eval::make_seeded_model<float>(v, scale, seed);
      auto it = sets.find(m.input_size());
      if (it == sets.end()) {
        auto train = eval::load_split(o.data, "train", m.input_size());
        if (o.subset > 0) train = train.balanced_head(static_cast<std::size_t>(o.subset));
        auto test = o.subset > 0 ? train : eval::load_split(o.data, "test", m.input_size());
        it = sets.emplace(m.input_size(), std::make_pair(std::move(train), std::move(test))).first;
      }
      const std::string name(model::variant_name(v));
      std::printf("training %s seed %llu on %zu images\n", name.c_str(), static_cast<unsigned long long>(seed),
                  it->second.first.size());
      std::fflush(stdout);
      auto r = eval::train(m, it->second.first, it->second.second, train_config(o, seed),
                           [](const eval::EpochRecord& e) {
                             std::printf("  epoch %4d loss %.4f map50 %.4f map50:95 %.4f\n", e.epoch, e.loss, e.map50,
                                         e.map5095);
                             std::fflush(stdout);
                           });
      eval::RunRecord rec;
      rec.variant = name;
      rec.scale = o.scale;
      rec.profile = o.profile;
      rec.seed = seed;
      rec.metrics = r.best;
      rec.params = m.count_parameters();
      rec.gflops = m.count_gflops();
      const fs::path dir = fs::path(o.out) / name / ("seed" + std::to_string(seed));
      fs::create_directories(dir);
      eval::write_json(dir / "run.json", eval::to_json(rec));
      write_text(dir / "history.csv", eval::history_csv(r.history));
      m.save(dir / "model");
      records.push_back(rec);
    }
  const auto csv = eval::aggregate_csv(records, report::variant_order());
  write_text(fs::path(o.out) / "runs.csv", csv);
  std::printf("%s", csv.c_str());
  return 0;
}

int cmd_eval(const Options& o, bool force) {
  if (o.data.empty()) throw UsageError("--data is required");
  if (o.split != "train" && o.split != "test") throw UsageError("--split must be train or test");
  if (!o.oracle && o.weights.empty()) throw UsageError("eval needs --weights or --oracle");
  require_out(o, force);
  freeze(o, "eval");

  eval::RunRecord rec;
  rec.variant = "oracle";
  rec.scale = o.scale;
  rec.seed = o.seeds.front();
  rec.profile = o.profile;
  std::vector<std::vector<Detection>> preds;
  eval::DetectionSet set;
  if (o.oracle) {
    // predictor stub: every ground-truth box at full confidence
    set = eval::load_split(o.data, o.split, 32);
    for (auto& labels : set.labels) {
      preds.emplace_back();
      for (auto& b : labels) preds.back().push_back({b, 1.0, b.class_id});
    }
  } else {
    auto m = model::DetectionModel<float>::load(o.weights);
    rec.variant = std::string(model::variant_name(m.variant()));
    rec.scale = std::string(model::scale_name(m.scale()));
    set = eval::load_split(o.data, o.split, m.input_size());
    preds = eval::predict(m, set);
    rec.params = m.count_parameters();
    rec.gflops = m.count_gflops();
  }
  auto r = eval::map_metrics(preds, set.labels);
  r.seed = rec.seed;
  rec.metrics = r;
  eval::write_json(fs::path(o.out) / "eval.json", eval::to_json(rec));
  std::printf("%s on %zu %s images: mAP50 %.4f mAP50:95 %.4f\n", rec.variant.c_str(), set.size(), o.split.c_str(),
              r.map50, r.map5095);
  return 0;
}

int cmd_benchmark(const Options& o, bool force) {
  std::vector<model::ModelVariant> variants;
  for (auto& v : o.variants) variants.push_back(variant_of(v));
  const auto scale = usage_guard([&] { return model::parse_scale(o.scale); });
  if (o.runs <= o.warmup || o.warmup < 0) throw UsageError("--runs must exceed --warmup");
  require_out(o, force);
  freeze(o, "benchmark");
  for (auto v : variants) {
    auto m = eval::make_seeded_model<float>(v, scale, o.seeds.front());
    std::vector<std::vector<float>> images;
    if (!o.data.empty()) {
      images = eval::load_split(o.data, "test", m.input_size()).head(static_cast<std::size_t>(o.runs)).images;
    } else {
      Rng rng = make_rng(o.seeds.front(), {0x62656e6368ULL});
      images.assign(1, std::vector<float>(static_cast<std::size_t>(3) * m.input_size() * m.input_size()));
      for (auto& x : images[0]) x = static_cast<float>(uniform01(rng));
    }
    std::unique_ptr<eval::ConstantPowerSampler> stub;
    if (o.power_stub >= 0) stub = std::make_unique<eval::ConstantPowerSampler>(o.power_stub);
    auto b = eval::benchmark(m, images, {o.runs, o.warmup}, stub.get());
    eval::RunRecord rec;
    rec.variant = std::string(model::variant_name(v));
    rec.scale = o.scale;
    rec.profile = o.profile;
    rec.seed = o.seeds.front();
    rec.params = b.params;
    rec.gflops = b.gflops;
    rec.bench = b;
    eval::write_json(fs::path(o.out) / ("bench_" + rec.variant + ".json"), eval::to_json(rec));
    std::printf("%-16s %8.2f ms (sd %.2f) over %d runs, peak mem +%.1f MB, %.2f GFLOPs, %zu params\n",
                rec.variant.c_str(), b.mean_inference_ms, b.std_inference_ms, b.runs_total - b.warmup_discarded,
                static_cast<double>(b.peak_mem_bytes) / (1024.0 * 1024.0), b.gflops, b.params);
  }
  return 0;
}

int cmd_report(const Options& o, bool force) {
  if (o.data.empty()) throw UsageError("--data (directory of run outputs) is required");
  if (!fs::is_directory(o.data)) throw UsageError("--data " + o.data + " is not a directory");
  std::vector<fs::path> files;
  for (auto& e : fs::recursive_directory_iterator(o.data))
    if (e.is_regular_file() && e.path().extension() == ".json" && e.path().filename() != "config.json")
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<eval::RunRecord> runs;
  for (auto& f : files) {
    auto j = eval::read_json(f);
    if (j.is_object() && j.contains("variant") && j["variant"] != "oracle") runs.push_back(eval::run_from_json(j));
  }
  require_out(o, force);
  freeze(o, "report");
  const auto rows = report::summarize(runs);
  const auto table = report::markdown_table(rows);
  write_text(fs::path(o.out) / "table.md", table);
  write_text(fs::path(o.out) / "table.csv", eval::aggregate_csv(runs, report::variant_order()));
  write_text(fs::path(o.out) / "map50.svg", report::chart_for(rows, report::Metric::Map50));
  write_text(fs::path(o.out) / "map5095.svg", report::chart_for(rows, report::Metric::Map5095));
  write_text(fs::path(o.out) / "latency.svg", report::chart_for(rows, report::Metric::Latency));
  write_text(fs::path(o.out) / "memory.svg", report::chart_for(rows, report::Metric::Memory));
  std::printf("%s", table.c_str());
  for (auto& v : report::missing_variants(rows))
    std::fprintf(stderr, "warning: no %s data for %s\n", runs.empty() ? "run" : "complete", v.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Satellite detection experiments: generate, train, eval, benchmark, report"};
  app.require_subcommand(1);
  bool force = false;
  app.add_flag("--force", force, "Overwrite existing outputs");

  std::vector<std::unique_ptr<Command>> cmds;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->app->add_option("--config", c->config, "JSON config file (flags take precedence)");
    c->app->add_flag("--force", force, "Overwrite existing outputs");
    cmds.push_back(std::move(c));
    return *cmds.back();
  };

  auto& gen = add("generate", "Render a labeled dataset");
  gen.opt("--seed", &Options::seeds, "Generator seed");
  gen.opt("--total", &Options::total, "Number of images (multiple of 12)");
  gen.opt("--mode", &Options::mode, "single or multi");
  gen.opt("--size", &Options::size, "Image side in pixels");
  gen.opt("--out", &Options::out, "Dataset directory");
  gen.flag("--jitter", &Options::jitter, true, "Jitter the camera aim");

  auto& tr = add("train", "Train one or more variants over one or more seeds");
  tr.opt("--variant", &Options::variants, "Model variant (repeatable)");
  tr.opt("--seed", &Options::seeds, "Seed (repeatable)");
  tr.opt("--scale", &Options::scale, "full or tiny");
  tr.opt("--profile", &Options::profile, "adjusted or default");
  tr.opt("--data", &Options::data, "Dataset directory");
  tr.opt("--out", &Options::out, "Output directory");
  tr.opt("--epochs", &Options::epochs, "Training epochs");
  tr.opt("--batch", &Options::batch, "Batch size");
  tr.opt("--subset", &Options::subset, "Train and evaluate on the first N bin-balanced training images");
  tr.opt("--lr", &Options::lr, "Initial learning rate");
  tr.opt("--optimizer", &Options::optimizer, "sgd or adamw");
  tr.flag("--no-augment", &Options::augment, false, "Disable augmentation");

  auto& ev = add("eval", "Evaluate saved weights (or the ground-truth oracle) on a split");
  ev.opt("--seed", &Options::seeds, "Seed recorded with the result");
  ev.opt("--data", &Options::data, "Dataset directory");
  ev.opt("--split", &Options::split, "train or test");
  ev.opt("--weights", &Options::weights, "Model directory written by train");
  ev.opt("--out", &Options::out, "Output directory");
  ev.flag("--oracle", &Options::oracle, true, "Predict the ground truth (harness check)");

  auto& bm = add("benchmark", "Batch-1 latency and memory");
  bm.opt("--variant", &Options::variants, "Model variant (repeatable)");
  bm.opt("--seed", &Options::seeds, "Initialization seed");
  bm.opt("--scale", &Options::scale, "full or tiny");
  bm.opt("--runs", &Options::runs, "Total inferences");
  bm.opt("--warmup", &Options::warmup, "Leading inferences to discard");
  bm.opt("--data", &Options::data, "Dataset directory (test images); random input if absent");
  bm.opt("--out", &Options::out, "Output directory");
  bm.opt("--power-stub", &Options::power_stub, "Constant power reading in mW");

  auto& rp = add("report", "Tables and charts from run outputs");
  rp.opt("--data", &Options::data, "Directory holding run JSON files");
  rp.opt("--out", &Options::out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& c : cmds) {
      if (!c->app->parsed()) continue;
      const Options o = c->resolve();
      const std::string name = c->app->get_name();
      if (name == "generate") return cmd_generate(o, force);
      if (name == "train") return cmd_train(o, force);
      if (name == "eval") return cmd_eval(o, force);
      if (name == "benchmark") return cmd_benchmark(o, force);
      if (name == "report") return cmd_report(o, force);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
