// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if all pass.
//   acceptance [criterion numbers...]
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>

#include "ap_oracle.hpp"
#include "sodgelan/blocks/gelan.hpp"
#include "sodgelan/eval/results.hpp"
#include "sodgelan/se/se_block.hpp"
#include "test_util.hpp"

using namespace sodgelan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string num(double v, int prec = 4) { return eval::fmt(v, prec); }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sodgelan_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- 1. parameter counts

std::size_t se_params(int c) {
  const std::size_t h = (c + 15) / 16;
  return 2 * c * h + h + c;
}

Outcome parameter_counts() {
  using namespace model;
  Outcome o;
  const double t = static_cast<double>(DetectionModel<float>(ModelVariant::GelanT, ScaleProfile::Full).count_parameters());
  o.check(std::abs(t / 1913443.0 - 1) <= 0.02, "gelan-t " + std::to_string(static_cast<long>(t)) + " vs 1913443");
  for (auto [b, s, target] : {std::tuple{ModelVariant::GelanRepViT, ModelVariant::GelanRepViTSE, 10648.0},
                              std::tuple{ModelVariant::GelanViT, ModelVariant::GelanViTSE, 16944.0}}) {
    DetectionModel<float> mb(b, ScaleProfile::Full), ms(s, ScaleProfile::Full);
    const auto& a = ms.arch();
    const std::size_t formula = se_params(a.h4b_mid + 2 * a.h4b_branch) + se_params(a.h5 + 2 * (a.h5 / 2));
    const std::size_t delta = ms.count_parameters() - mb.count_parameters();
    o.check(delta == formula, std::string(variant_name(s)) + " delta " + std::to_string(delta) + " = formula " +
                                  std::to_string(formula));
    o.check(std::abs(delta / target - 1) <= 0.2, "within 20% of " + std::to_string(static_cast<long>(target)));
  }
  return o;
}

// ---------------------------------------------------------------- 2. GFLOPs

Outcome gflops() {
  using namespace model;
  Outcome o;
  const double g = DetectionModel<float>(ModelVariant::GelanT, ScaleProfile::Full).count_gflops(640);
  o.check(std::abs(g / 7.3 - 1) <= 0.10, "gelan-t " + num(g, 3) + " GFLOPs vs 7.3");
  // 3x3 conv, 3 -> 4 channels, 8x8 output: 2 * 9 * 3 * 4 * 64
  LayerGraph<float> graph;
  Rng rng = make_rng(1);
  graph.add("c", -1, std::make_unique<nn::Conv2d<float>>(nn::Conv2dSpec{3, 4, 3, 1, 1, false}, rng));
  nn::FlopCounter f;
  graph.infer({1, 3, 8, 8}, &f);
  o.check(f.flops == 13824.0, "3x3 conv hand count " + num(f.flops, 0) + " = 13824");
  LayerGraph<float> strided;
  strided.add("c", -1, std::make_unique<nn::Conv2d<float>>(nn::Conv2dSpec{2, 5, 3, 2, 1, false}, rng));
  nn::FlopCounter f2;
  strided.infer({1, 2, 16, 16}, &f2);
  o.check(f2.flops == 2.0 * 9 * 2 * 5 * 64, "stride-2 conv hand count " + num(f2.flops, 0));
  return o;
}

// ---------------------------------------------------------------- 3. SE math

Outcome se_math() {
  Outcome o;
  Rng rng = make_rng(3);
  se::SqueezeExcite<float> gate(8, 2, rng);
  gate.force_gates(true);
  bool identity = true;
  for (int t = 0; t < 50; ++t) {
    auto x = testutil::random_tensor<float>({2, 8, 5, 5}, rng, -100, 100);
    identity = identity && gate.forward(x) == x;
  }
  o.check(identity, "z=1 passthrough exact");

  bool range = true, capacity = true;
  for (int t = 0; t < 500; ++t) {
    const int c = uniform_int(rng, 1, 48);
    auto w = se::SEWeights::random(c, uniform_int(rng, 1, 16), rng);
    for (auto& b : w.b2) b = uniform(rng, -5, 5);
    se::ChannelDescriptor s(c);
    for (auto& v : s) v = uniform(rng, -4, 4);
    const auto z = se::excite(s, w);
    for (double v : z) range = range && v > 0 && v < 1;
    const double cap = se::effective_capacity(z);
    capacity = capacity && cap >= 0 && cap <= c;
  }
  o.check(range, "z in (0,1) over 500 random gates");
  o.check(capacity, "0 <= sum z <= C");
  o.check(se::effective_capacity(se::ScaleVector(64, 1.0)) == 64.0, "sum z = C at saturation");

  se::SqueezeExcite<double> m(6, 2, rng);
  auto w = se::SEWeights::random(6, 2, rng);
  for (auto& b : w.b1) b = uniform(rng, -0.3, 0.3);
  for (auto& b : w.b2) b = uniform(rng, -0.3, 0.3);
  m.set_weights(w);
  m.set_mode(nn::Mode::Train);
  auto rep = testutil::grad_check(m, testutil::random_tensor<double>({2, 6, 4, 5}, rng), rng, 40);
  o.check(rep.worst < 1e-4, "gradient rel. err " + num(rep.worst, 8) + " < 1e-4");
  return o;
}

// ---------------------------------------------------------------- 4. block equivalence

blocks::ElanBlockSpec elan_spec(bool se) {
  blocks::ElanBlockSpec s;
  s.in_channels = 16;
  s.mid_channels = 32;
  s.branch_channels = 16;
  s.out_channels = 24;
  s.use_se = se;
  s.branch_depth = 1;
  return s;
}

Outcome block_equivalence() {
  Outcome o;
  Rng rng = make_rng(4);
  blocks::RepNCSPELAN4<float> plain(elan_spec(false), rng), with_se(elan_spec(true), rng);
  nn::BufferList<float> bs;
  plain.collect_buffers("", bs);
  for (auto& b : bs)
    for (auto& v : b.buffer->values())
      v = static_cast<float>(b.path.find("var") != std::string::npos ? uniform(rng, 0.5, 2) : uniform(rng, -0.3, 0.3));
  const int fresh = testutil::copy_by_path(plain, with_se);
  o.check(fresh == 4, "only the 4 SE tensors are new");
  with_se.se()->force_gates(true);
  int equal = 0;
  for (int t = 0; t < 100; ++t) {
    auto x = testutil::random_tensor<float>({1, 16, 10, 10}, rng, -2, 2);
    equal += plain.forward(x) == with_se.forward(x);
  }
  o.check(equal == 100, std::to_string(equal) + "/100 inputs elementwise equal");
  nn::Trace tr;
  with_se.set_trace(&tr);
  with_se.forward(testutil::random_tensor<float>({1, 16, 6, 6}, rng));
  const std::vector<std::string> order{"cv1", "split", "cv2", "cv3", "concat", "se", "cv4"};
  o.check(tr.ops == order, "trace cv1 > split > cv2 > cv3 > concat > se > cv4");
  return o;
}

// ---------------------------------------------------------------- 5. mAP oracle

Outcome map_oracle() {
  Outcome o;
  Rng rng = make_rng(5);
  int instances = 0;
  double worst = 0;
  for (int trial = 0; trial < 1200; ++trial) {
    const int images = uniform_int(rng, 1, 3);
    std::vector<std::vector<BoundingBox>> gts;
    std::vector<std::vector<Detection>> preds;
    int g = 0;
    for (int i = 0; i < images; ++i) {
      gts.push_back(testutil::random_gts(rng, uniform_int(rng, 0, 5 - g)));
      g += static_cast<int>(gts.back().size());
      preds.push_back(testutil::random_preds(rng, gts.back(), uniform_int(rng, 0, 8 / images)));
    }
    const auto r = eval::map_metrics(preds, gts);
    for (int k = 0; k < eval::kNumThresholds; ++k) {
      double ref = testutil::oracle_ap(preds, gts, eval::kIouThresholds[k]);
      if (std::isnan(ref)) ref = 0;
      worst = std::max(worst, std::abs(r.per_threshold_ap[k] - ref));
    }
    ++instances;
  }
  o.check(worst <= 1e-9, std::to_string(instances) + " instances, max |diff| " + num(worst, 12));

  std::vector<std::vector<BoundingBox>> gts;
  std::vector<std::vector<Detection>> perfect, empty;
  for (int i = 0; i < 10; ++i) {
    gts.push_back(testutil::random_gts(rng, uniform_int(rng, 1, 5)));
    perfect.emplace_back();
    empty.emplace_back();
    for (auto& b : gts.back()) perfect.back().push_back({b, 0.9, 0});
  }
  const auto p = eval::map_metrics(perfect, gts), e = eval::map_metrics(empty, gts);
  o.check(std::abs(p.map50 - 1) < 1e-12 && std::abs(p.map5095 - 1) < 1e-12, "perfect detector " + num(p.map50));
  o.check(e.map50 == 0 && e.map5095 == 0, "empty detector " + num(e.map50));
  return o;
}

// ---------------------------------------------------------------- 6. dataset generator

struct PixelBox {
  int x1 = 1 << 30, y1 = 1 << 30, x2 = -1, y2 = -1;
  bool empty() const { return x2 < 0; }
  void add(int x, int y) {
    x1 = std::min(x1, x);
    y1 = std::min(y1, y);
    x2 = std::max(x2, x);
    y2 = std::max(y2, y);
  }
};

// Pixels whose center ray meets the sphere, plus the pixel under its center. The search window is
// the projection of the sphere's bounding cube; the whole frame if any corner is behind the camera.
PixelBox ray_oracle(const Eigen::Vector3d& center, double radius, const Eigen::Vector3d& cam_pos,
                    const Eigen::Matrix3d& rot, int w, int h, double fov_deg) {
  const double f = (h / 2.0) / std::tan(fov_deg * std::acos(-1.0) / 360.0);
  const Eigen::Vector3d local = rot.transpose() * (center - cam_pos);
  PixelBox b;
  if (local.z() <= radius) return b;
  int wx1 = 0, wy1 = 0, wx2 = w - 1, wy2 = h - 1;
  double ux1 = 1e300, uy1 = 1e300, ux2 = -1e300, uy2 = -1e300;
  bool front = true;
  for (int k = 0; k < 8; ++k) {
    const Eigen::Vector3d c = local + radius * Eigen::Vector3d(k & 1 ? 1 : -1, k & 2 ? 1 : -1, k & 4 ? 1 : -1);
    if (c.z() <= 0) front = false;
    const double u = w / 2.0 + f * c.x() / c.z(), v = h / 2.0 + f * c.y() / c.z();
    ux1 = std::min(ux1, u);
    ux2 = std::max(ux2, u);
    uy1 = std::min(uy1, v);
    uy2 = std::max(uy2, v);
  }
  if (front) {
    wx1 = std::max(0, static_cast<int>(std::floor(ux1)) - 1);
    wy1 = std::max(0, static_cast<int>(std::floor(uy1)) - 1);
    wx2 = std::min(w - 1, static_cast<int>(std::ceil(ux2)) + 1);
    wy2 = std::min(h - 1, static_cast<int>(std::ceil(uy2)) + 1);
  }
  const Eigen::Vector3d oc = cam_pos - center;
  for (int y = wy1; y <= wy2; ++y)
    for (int x = wx1; x <= wx2; ++x) {
      const Eigen::Vector3d d = rot * Eigen::Vector3d((x + 0.5 - w / 2.0) / f, (y + 0.5 - h / 2.0) / f, 1.0);
      const double a = d.dot(d), bb = 2 * d.dot(oc), c = oc.dot(oc) - radius * radius;
      const double disc = bb * bb - 4 * a * c;
      if (disc >= 0 && -bb + std::sqrt(disc) > 0) b.add(x, y);
    }
  const double u = w / 2.0 + f * local.x() / local.z(), v = h / 2.0 + f * local.y() / local.z();
  if (u >= 0 && u < w && v >= 0 && v < h) b.add(static_cast<int>(u), static_cast<int>(v));
  return b;
}

double box_iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2, double by2) {
  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1), ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0 || ih <= 0) return 0;
  const double inter = iw * ih;
  return inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter);
}

struct LabelAudit {
  int labels = 0, visible = 0, matched = 0, spurious = 0;
  double worst_iou = 1;
};

// Checks every label file of a dataset against the ray oracle over the same world and camera.
LabelAudit audit_labels(const fs::path& root, const scene::GeneratorConfig& cfg) {
  LabelAudit a;
  const auto manifest = scene::load_manifest(root);
  const auto layout = cfg.mode == scene::GenMode::Single ? scene::single_layout() : scene::multi_layout();
  int cached = -1;
  std::vector<scene::SatelliteState> sats;
  for (auto& e : manifest.images) {
    if (e.batch != cached) {
      sats = scene::spawn_batch(derive_seed(cfg.seed, {0x6261746368ULL, static_cast<std::uint64_t>(e.batch)}),
                                cfg.batch_size, layout);
      cached = e.batch;
    }
    const auto meta = eval::read_json(root / e.meta);
    const auto& cam = meta["camera"];
    const Eigen::Vector3d pos(cam["position_km"][0], cam["position_km"][1], cam["position_km"][2]);
    const Eigen::Quaterniond q(cam["orientation_wxyz"][0], cam["orientation_wxyz"][1], cam["orientation_wxyz"][2],
                               cam["orientation_wxyz"][3]);
    const Eigen::Matrix3d rot = q.normalized().toRotationMatrix();
    const int w = cam["resolution"][0], h = cam["resolution"][1];
    const double fov = cam["fov_deg"];
    const auto labels = scene::read_labels(root / e.label);
    a.labels += static_cast<int>(labels.size());
    std::vector<bool> used(labels.size(), false);
    for (auto& s : sats) {
      if (s.id == e.host_id || (s.position - pos).norm() > 5.0) continue;
      const PixelBox pb = ray_oracle(s.position, s.extent_m / 2000.0, pos, rot, w, h, fov);
      if (pb.empty()) continue;
      ++a.visible;
      const double ox1 = static_cast<double>(pb.x1) / w, oy1 = static_cast<double>(pb.y1) / h;
      const double ox2 = (pb.x2 + 1.0) / w, oy2 = (pb.y2 + 1.0) / h;
      int best = -1;
      double best_iou = 0;
      for (std::size_t k = 0; k < labels.size(); ++k) {
        if (used[k]) continue;
        const double v = box_iou(ox1, oy1, ox2, oy2, labels[k].x1(), labels[k].y1(), labels[k].x2(), labels[k].y2());
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(k);
        }
      }
      if (best >= 0) {
        used[static_cast<std::size_t>(best)] = true;
        ++a.matched;
        a.worst_iou = std::min(a.worst_iou, best_iou);
      } else {
        a.worst_iou = 0;
      }
    }
    for (bool u : used) a.spurious += !u;
  }
  return a;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::set<std::string> names;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) names.insert(fs::relative(e.path(), a).string());
  std::size_t nb = 0;
  for (auto& e : fs::recursive_directory_iterator(b)) nb += e.is_regular_file();
  if (nb != names.size()) return false;
  for (auto& n : names)
    if (slurp(a / n) != slurp(b / n)) return false;
  return true;
}

bool every_satellite_has_neighbor(const std::vector<scene::SatelliteState>& sats) {
  for (std::size_t i = 0; i < sats.size(); ++i) {
    bool ok = false;
    for (std::size_t j = 0; j < sats.size() && !ok; ++j)
      ok = j != i && (sats[i].position - sats[j].position).norm() <= 5.0;
    if (!ok) return false;
  }
  return true;
}

Outcome dataset_contract() {
  Outcome o;
  for (std::uint64_t seed : {1, 2, 3}) {
    scene::GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.total_images = 600;
    cfg.out_dir = scratch("ds" + std::to_string(seed));
    const auto m = scene::generate_dataset(cfg);
    const auto c = m.bin_counts();
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    o.check(c[0] == 200 && c[1] == 200 && c[2] == 200,
            tag + "bins " + std::to_string(c[0]) + "/" + std::to_string(c[1]) + "/" + std::to_string(c[2]));
    bool neighbors = true;
    for (int b = 0; b < m.batches_used; ++b)
      neighbors = neighbors &&
                  every_satellite_has_neighbor(scene::spawn_batch(
                      derive_seed(seed, {0x6261746368ULL, static_cast<std::uint64_t>(b)}), cfg.batch_size));
    o.check(neighbors, tag + std::to_string(m.batches_used) + " batches all with 5 km neighbors");
    const auto a = audit_labels(cfg.out_dir, cfg);
    o.check(a.matched == a.visible && a.spurious == 0 && a.worst_iou >= 0.8,
            tag + std::to_string(a.matched) + "/" + std::to_string(a.visible) + " visible labeled, " +
                std::to_string(a.spurious) + " spurious, min IoU " + num(a.worst_iou, 3));
    auto again = cfg;
    again.out_dir = scratch("ds" + std::to_string(seed) + "_again");
    scene::generate_dataset(again);
    o.check(same_tree(cfg.out_dir, again.out_dir), tag + "bitwise rerun");
    fs::remove_all(cfg.out_dir);
    fs::remove_all(again.out_dir);

    scene::GeneratorConfig multi = cfg;
    multi.mode = scene::GenMode::Multi;
    multi.total_images = 60;
    multi.out_dir = scratch("multi" + std::to_string(seed));
    const auto mm = scene::generate_dataset(multi);
    int lo = 1 << 30, hi = 0;
    for (auto& e : mm.images) {
      const int n = static_cast<int>(scene::read_labels(multi.out_dir / e.label).size());
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    const auto ma = audit_labels(multi.out_dir, multi);
    o.check(lo >= 9 && hi <= 18 && ma.matched == ma.visible && ma.spurious == 0 && ma.worst_iou >= 0.8,
            tag + "multi labels " + std::to_string(lo) + "-" + std::to_string(hi) + ", min IoU " +
                num(ma.worst_iou, 3));
    fs::remove_all(multi.out_dir);
  }
  return o;
}

// ---------------------------------------------------------------- 7. overfit sanity

// Settings for the memorization check. AdamW converges on a 16-image subset well inside the
// epoch budget; the SGD profile values are meant for the full 450-image protocol.
eval::TrainConfig overfit_config() {
  eval::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 4;
  cfg.augment = false;
  cfg.lr0 = 0.002;
  cfg.sgd.kind = eval::OptimizerKind::AdamW;
  return cfg;
}

eval::DetectionSet overfit_subset() {
  scene::GeneratorConfig g;
  g.seed = 1;
  g.total_images = 48;
  g.image_size = 160;
  g.out_dir = scratch("overfit");
  scene::generate_dataset(g);
  auto set = eval::load_split(g.out_dir, "train", 160).balanced_head(16);
  fs::remove_all(g.out_dir);
  return set;
}

Outcome overfit() {
  Outcome o;
  const auto set = overfit_subset();
  for (auto v : {model::ModelVariant::GelanSE, model::ModelVariant::GelanViTSE}) {
    const auto t0 = std::chrono::steady_clock::now();
    auto m = eval::make_seeded_model<float>(v, model::ScaleProfile::Tiny, 1);
    const auto r = eval::train(m, set, set, overfit_config());
    const double final_map = eval::evaluate(m, set).map50;
    const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
    o.check(final_map >= 0.9 && minutes <= 30, std::string(model::variant_name(v)) + " mAP50 " + num(final_map, 3) +
                                                   " (epoch " + std::to_string(r.best.best_epoch) + ", " +
                                                   num(minutes, 1) + " min)");
  }
  return o;
}

// ---------------------------------------------------------------- 8. benchmark protocol

Outcome benchmark_protocol() {
  Outcome o;
  Rng rng = make_rng(8);
  std::vector<std::vector<float>> images(4, std::vector<float>(3 * 640 * 640));
  for (auto& img : images)
    for (auto& v : img) v = static_cast<float>(uniform01(rng));
  // Interleaved rounds per variant. Ordering compares the fastest measured run of each variant:
  // on a shared virtual core, round means swing by 30% while the per-run floor stays put.
  std::map<std::string, std::vector<double>> rounds;
  std::vector<std::pair<std::string, model::DetectionModel<float>>> models;
  for (auto v : {model::ModelVariant::GelanRepViT, model::ModelVariant::GelanRepViTSE, model::ModelVariant::GelanViT,
                 model::ModelVariant::GelanViTSE})
    models.emplace_back(model::variant_name(v), eval::make_seeded_model<float>(v, model::ScaleProfile::Full, 1));
  for (int round = 0; round < 5; ++round)
    for (auto& [name, m] : models) {
      eval::ConstantPowerSampler stub(100.0);
      const auto b = eval::benchmark(m, images, {25, 5}, &stub);
      rounds[name].push_back(*std::min_element(b.times_ms.begin() + 5, b.times_ms.end()));
      if (round > 0) continue;
      const auto [mean, sd] = eval::measured_stats(b.times_ms, 5);
      o.check(b.times_ms.size() == 25 && b.mean_inference_ms == mean &&
                  mean == std::accumulate(b.times_ms.begin() + 5, b.times_ms.end(), 0.0) / 20,
              name + " 25 timings, mean of last 20");
      o.check(b.power && b.power->mean_mw == 100.0 && b.power->peak_mw == 100.0, name + " stub power 100/100");
    }
  std::map<std::string, double> latency;
  for (auto& [name, r] : rounds) {
    latency[name] = *std::min_element(r.begin(), r.end());
  }
  const double repvit = std::max(latency["gelan-repvit"], latency["gelan-repvit-se"]);
  const double vit = std::min(latency["gelan-vit"], latency["gelan-vit-se"]);
  o.check(repvit < vit,
          "fastest-run latency: slowest RepViT " + num(repvit, 1) + " ms < fastest ViT " + num(vit, 1) + " ms");
  return o;
}

// ---------------------------------------------------------------- 9. determinism

Outcome determinism() {
  Outcome o;
  scene::GeneratorConfig g;
  g.seed = 9;
  g.total_images = 24;
  g.image_size = 160;
  g.out_dir = scratch("determinism");
  scene::generate_dataset(g);
  const auto train_set = eval::load_split(g.out_dir, "train", 160);
  const auto test_set = eval::load_split(g.out_dir, "test", 160);
  fs::remove_all(g.out_dir);

  eval::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.profile = eval::HyperProfile::Default;  // exercises mosaic and flips
  std::map<std::uint64_t, std::vector<float>> first_weights;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = seed;
    std::vector<std::string> histories;
    for (int rep = 0; rep < 2; ++rep) {
      auto m = eval::make_seeded_model<float>(model::ModelVariant::GelanViTSE, model::ScaleProfile::Tiny, seed);
      if (rep == 0) first_weights[seed] = std::vector<float>(m.parameters()[0].param->value.values().begin(),
                                                             m.parameters()[0].param->value.values().end());
      const auto r = eval::train(m, train_set, test_set, cfg);
      histories.push_back(eval::history_csv(r.history));
    }
    o.check(histories[0] == histories[1], "seed " + std::to_string(seed) + " history identical across runs");
  }
  o.check(first_weights[1] != first_weights[2] && first_weights[2] != first_weights[3] &&
              first_weights[1] != first_weights[3],
          "seeds 1/2/3 initialize differently");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Parameter-count oracle", parameter_counts},
      {"GFLOPs oracle", gflops},
      {"SE math suite", se_math},
      {"Block-equivalence oracle", block_equivalence},
      {"mAP oracle equivalence", map_oracle},
      {"Dataset generator contract", dataset_contract},
      {"Overfit sanity", overfit},
      {"Benchmark protocol conformance", benchmark_protocol},
      {"Determinism suite", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %d. %s (%.1fs): %s\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), secs,
                out.detail.c_str());
    std::fflush(stdout);
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
