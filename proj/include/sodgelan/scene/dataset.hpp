#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sodgelan/scene/png_io.hpp"
#include "sodgelan/scene/render.hpp"

namespace sodgelan::scene {

inline constexpr double kAnnotationRangeKm = 5.0;
inline constexpr int kGeneratorVersion = 1;

enum class DistanceBin { Near, Mid, Far };
inline constexpr std::array<DistanceBin, 3> kAllBins{DistanceBin::Near, DistanceBin::Mid, DistanceBin::Far};

inline std::string bin_name(DistanceBin b) {
  switch (b) {
    case DistanceBin::Near: return "near";
    case DistanceBin::Mid: return "mid";
    case DistanceBin::Far: return "far";
  }
  return "?";
}

inline DistanceBin parse_bin(const std::string& s) {
  for (auto b : kAllBins)
    if (bin_name(b) == s) return b;
  throw InvalidInput("unknown distance bin '" + s + "'");
}

// [0, 0.5) near, [0.5, 2) mid, [2, 5] far.
inline DistanceBin bin_by_distance(double km) {
  SODGELAN_REQUIRE(km >= 0 && km <= kAnnotationRangeKm, InvalidInput, "distance ", km, " km outside [0, 5]");
  if (km < 0.5) return DistanceBin::Near;
  if (km < 2.0) return DistanceBin::Mid;
  return DistanceBin::Far;
}

enum class GenMode { Single, Multi };

inline std::string mode_name(GenMode m) { return m == GenMode::Single ? "single" : "multi"; }
inline GenMode parse_mode(const std::string& s) {
  if (s == "single") return GenMode::Single;
  if (s == "multi") return GenMode::Multi;
  throw ConfigError("unknown mode '" + s + "' (expected single or multi)");
}

enum class AimMode { Nearest, Centroid };

struct Annotation {
  BoundingBox box;
  int satellite_id = 0;
  double distance_km = 0;
};

struct SceneFrame {
  Image image;
  std::vector<Annotation> annotations;  // ascending distance
  int host_id = 0;
  DistanceBin bin = DistanceBin::Near;
  CameraPose camera;

  std::vector<double> distances_km() const {
    std::vector<double> d;
    for (auto& a : annotations) d.push_back(a.distance_km);
    return d;
  }
};

inline DistanceBin bin_by_distance(const SceneFrame& f) {
  SODGELAN_REQUIRE(!f.annotations.empty(), InvalidInput, "frame has no annotated satellite to bin by");
  double m = f.annotations.front().distance_km;
  for (auto& a : f.annotations) m = std::min(m, a.distance_km);
  return bin_by_distance(m);
}

// Camera on the host, image up toward local zenith. Nearest: the closest other satellite
// projects to the image center. Centroid: the centroid of the others within annotation range
// does. Optional jitter offsets the aim by up to 30% of the half field of view per axis.
inline CameraPose aim_camera(const SatelliteState& host, const std::vector<SatelliteState>& sats, int width, int height,
                             AimMode mode = AimMode::Nearest, Rng* jitter = nullptr) {
  const SatelliteState* nearest = nullptr;
  double best = 0;
  Vec3 sum = Vec3::Zero();
  int in_range = 0;
  for (auto& s : sats) {
    if (s.id == host.id) continue;
    const double d = (s.position - host.position).norm();
    if (!nearest || d < best) {
      nearest = &s;
      best = d;
    }
    if (d <= kAnnotationRangeKm) {
      sum += s.position;
      ++in_range;
    }
  }
  SODGELAN_REQUIRE(nearest, InvalidInput, "aim_camera: satellite ", host.id, " has no other satellite in its scene");
  Vec3 target = nearest->position;
  if (mode == AimMode::Centroid && in_range > 0) target = sum / in_range;
  if ((target - host.position).norm() < 1e-12) target = nearest->position;
  CameraPose cam = look_along(host.position, target - host.position, host.position, width, height);
  if (jitter) {
    const double lim = 0.3 * std::tan(cam.fov_deg * kPi / 360.0);
    const double du = uniform(*jitter, -lim, lim), dv = uniform(*jitter, -lim, lim);
    const Eigen::Matrix3d r = cam.rotation();
    cam = look_along(host.position, r * Vec3(du, dv, 1.0), host.position, width, height);
  }
  return cam;
}

// Every other satellite within range whose footprint covers at least one pixel.
inline std::vector<Annotation> annotate(const std::vector<SatelliteState>& sats, int host_id, const CameraPose& cam,
                                        double range_km = kAnnotationRangeKm) {
  std::vector<Annotation> out;
  for (auto& s : sats) {
    if (s.id == host_id) continue;
    const double d = (s.position - cam.position).norm();
    if (d > range_km) continue;
    const Footprint fp = footprint(s, cam);
    if (fp.empty()) continue;
    out.push_back({fp.box(cam.width, cam.height), s.id, d});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Annotation& a, const Annotation& b) { return a.distance_km < b.distance_km; });
  return out;
}

// Satellites close enough to matter for a frame (the rest are far below one pixel).
inline std::vector<SatelliteState> neighborhood(const std::vector<SatelliteState>& sats, const Vec3& at,
                                                double radius_km = 50.0) {
  std::vector<SatelliteState> out;
  for (auto& s : sats)
    if ((s.position - at).norm() <= radius_km) out.push_back(s);
  return out;
}

struct GeneratorConfig {
  std::uint64_t seed = 1;
  int total_images = 600;
  GenMode mode = GenMode::Single;
  std::filesystem::path out_dir;
  int image_size = 640;
  int batch_size = 1000;
  int max_batches = 2000;
  bool aim_jitter = false;
  bool overwrite = false;
  int min_labels = 9, max_labels = 18;  // multi mode
};

inline constexpr double kTrainFraction = 0.75;

struct ManifestEntry {
  std::string name;
  std::string image, label, meta;  // relative to the dataset root
  DistanceBin bin = DistanceBin::Near;
  std::string split;
  int num_labels = 0;
  double min_distance_km = 0;
  int batch = 0, host_id = 0;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int version = kGeneratorVersion;
  GenMode mode = GenMode::Single;
  int image_size = 0;
  int batches_used = 0;
  std::vector<ManifestEntry> images;

  std::array<int, 3> bin_counts() const {
    std::array<int, 3> c{};
    for (auto& e : images) ++c[static_cast<int>(e.bin)];
    return c;
  }
  int split_count(const std::string& split) const {
    return static_cast<int>(std::count_if(images.begin(), images.end(), [&](auto& e) { return e.split == split; }));
  }
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["format"] = "sodgelan-dataset";
  j["generator_version"] = m.version;
  j["seed"] = m.seed;
  j["mode"] = mode_name(m.mode);
  j["image_size"] = m.image_size;
  j["fov_deg"] = kDefaultFovDeg;
  j["batches_used"] = m.batches_used;
  const auto c = m.bin_counts();
  for (auto b : kAllBins) j["bin_counts"][bin_name(b)] = c[static_cast<int>(b)];
  j["split_counts"] = {{"train", m.split_count("train")}, {"test", m.split_count("test")}};
  j["images"] = nlohmann::json::array();
  for (auto& e : m.images)
    j["images"].push_back({{"name", e.name},
                           {"image", e.image},
                           {"label", e.label},
                           {"meta", e.meta},
                           {"bin", bin_name(e.bin)},
                           {"split", e.split},
                           {"num_labels", e.num_labels},
                           {"min_distance_km", e.min_distance_km},
                           {"batch", e.batch},
                           {"host_id", e.host_id}});
  return j;
}

inline DatasetManifest load_manifest(const std::filesystem::path& root) {
  std::ifstream f(root / "manifest.json");
  SODGELAN_REQUIRE(f.good(), InvalidInput, "no manifest.json in ", root.string());
  const auto j = nlohmann::json::parse(f);
  SODGELAN_REQUIRE(j.value("format", "") == "sodgelan-dataset", InvalidInput, root.string(),
                   " is not a generated dataset");
  DatasetManifest m;
  m.seed = j["seed"].get<std::uint64_t>();
  m.version = j["generator_version"].get<int>();
  m.mode = parse_mode(j["mode"].get<std::string>());
  m.image_size = j["image_size"].get<int>();
  m.batches_used = j["batches_used"].get<int>();
  for (auto& e : j["images"])
    m.images.push_back({e["name"], e["image"], e["label"], e["meta"], parse_bin(e["bin"].get<std::string>()), e["split"],
                        e["num_labels"], e["min_distance_km"], e["batch"], e["host_id"]});
  return m;
}

inline std::string format_labels(const std::vector<BoundingBox>& boxes) {
  std::string out;
  char line[128];
  for (auto& b : boxes) {
    std::snprintf(line, sizeof line, "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy, b.w, b.h);
    out += line;
  }
  return out;
}

inline std::vector<BoundingBox> read_labels(const std::filesystem::path& path) {
  std::ifstream f(path);
  SODGELAN_REQUIRE(f.good(), InvalidInput, "cannot open label file ", path.string());
  std::vector<BoundingBox> out;
  std::string line;
  int row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    BoundingBox b;
    SODGELAN_REQUIRE(static_cast<bool>(is >> b.class_id >> b.cx >> b.cy >> b.w >> b.h), InvalidInput, path.string(),
                     ":", row, ": expected 'class cx cy w h'");
    out.push_back(b);
  }
  return out;
}

struct Progress {
  int batch = 0;
  std::array<int, 3> filled{};
  int quota = 0;
};

namespace detail {

struct Candidate {
  int batch = 0;
  int host = 0;  // index within the batch
  CameraPose camera;
  std::vector<Annotation> annotations;
  DistanceBin bin = DistanceBin::Near;
};

inline std::uint64_t frame_seed(std::uint64_t seed, int batch, int host) {
  return derive_seed(seed, {0x6672616d65ULL, static_cast<std::uint64_t>(batch), static_cast<std::uint64_t>(host)});
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  SODGELAN_REQUIRE(f.good(), Error, "cannot write ", p.string());
  f << s;
}

}  // namespace detail

inline void validate(const GeneratorConfig& cfg) {
  SODGELAN_REQUIRE(cfg.total_images > 0 && cfg.total_images % 3 == 0, ConfigError, "total_images ",
                   cfg.total_images, " must be a positive multiple of 3 (one third per distance bin)");
  SODGELAN_REQUIRE((cfg.total_images / 3) % 4 == 0, ConfigError, "total_images ", cfg.total_images,
                   " must split each bin 3:1 into train/test (use a multiple of 12)");
  SODGELAN_REQUIRE(cfg.image_size >= 32, ConfigError, "image_size must be at least 32");
  SODGELAN_REQUIRE(cfg.batch_size >= 2 && cfg.max_batches >= 1, ConfigError, "invalid batch settings");
  SODGELAN_REQUIRE(cfg.min_labels >= 1 && cfg.max_labels >= cfg.min_labels, ConfigError, "invalid label range");
}

// Scene-level selection without rendering: fills per-bin quotas in deterministic batch/host order.
inline std::vector<detail::Candidate> select_frames(const GeneratorConfig& cfg, int* batches_used = nullptr,
                                                    const std::function<void(const Progress&)>& progress = {}) {
  validate(cfg);
  const int quota = cfg.total_images / 3;
  const ClusterLayout layout = cfg.mode == GenMode::Single ? single_layout() : multi_layout();
  const AimMode aim = cfg.mode == GenMode::Single ? AimMode::Nearest : AimMode::Centroid;
  std::array<int, 3> filled{};
  std::vector<detail::Candidate> picked;
  int b = 0;
  for (; b < cfg.max_batches && picked.size() < static_cast<std::size_t>(cfg.total_images); ++b) {
    const auto sats = spawn_batch(derive_seed(cfg.seed, {0x6261746368ULL, static_cast<std::uint64_t>(b)}),
                                  cfg.batch_size, layout);
    for (int h = 0; h < static_cast<int>(sats.size()); ++h) {
      Rng jr = make_rng(detail::frame_seed(cfg.seed, b, h), {0x6a6974ULL});
      const auto local = neighborhood(sats, sats[h].position, 2 * kAnnotationRangeKm);
      CameraPose cam = aim_camera(sats[h], local, cfg.image_size, cfg.image_size, aim, cfg.aim_jitter ? &jr : nullptr);
      auto ann = annotate(local, sats[h].id, cam);
      if (ann.empty()) continue;
      if (cfg.mode == GenMode::Multi &&
          (static_cast<int>(ann.size()) < cfg.min_labels || static_cast<int>(ann.size()) > cfg.max_labels))
        continue;
      const DistanceBin bin = bin_by_distance(ann.front().distance_km);
      int& f = filled[static_cast<int>(bin)];
      if (f >= quota) continue;
      ++f;
      picked.push_back({b, h, cam, std::move(ann), bin});
      if (picked.size() == static_cast<std::size_t>(cfg.total_images)) break;
    }
    if (progress) progress({b, filled, quota});
  }
  if (batches_used) *batches_used = b;
  SODGELAN_REQUIRE(picked.size() == static_cast<std::size_t>(cfg.total_images), Error, "bin quotas unreachable after ",
                   b, " batches: near ", filled[0], "/", quota, ", mid ", filled[1], "/", quota, ", far ", filled[2],
                   "/", quota);
  return picked;
}

// Renders one selected frame. Pure function of (cfg, candidate).
inline SceneFrame render_candidate(const GeneratorConfig& cfg, const detail::Candidate& c,
                                   const std::vector<SatelliteState>& batch) {
  SceneFrame f;
  f.host_id = batch[static_cast<std::size_t>(c.host)].id;
  f.camera = c.camera;
  f.annotations = c.annotations;
  f.bin = c.bin;
  RenderOptions ro;
  ro.seed = detail::frame_seed(cfg.seed, c.batch, c.host);
  f.image = render(neighborhood(batch, c.camera.position), c.camera, ro, f.host_id).image;
  return f;
}

// Full pipeline: select, split 3:1 per bin, render, write images/labels/metadata/manifest.
inline DatasetManifest generate_dataset(const GeneratorConfig& cfg,
                                        const std::function<void(const Progress&)>& progress = {}) {
  namespace fs = std::filesystem;
  validate(cfg);
  SODGELAN_REQUIRE(!cfg.out_dir.empty(), ConfigError, "generate_dataset needs an output directory");
  if (fs::exists(cfg.out_dir) && !fs::is_empty(cfg.out_dir)) {
    SODGELAN_REQUIRE(cfg.overwrite, Error, "output directory ", cfg.out_dir.string(),
                     " is not empty (pass the force flag to overwrite)");
    fs::remove_all(cfg.out_dir);
  }
  DatasetManifest m;
  m.seed = cfg.seed;
  m.mode = cfg.mode;
  m.image_size = cfg.image_size;
  auto picked = select_frames(cfg, &m.batches_used, progress);

  // stratified split: shuffle each bin's frames, first three quarters train
  std::vector<std::string> split(picked.size(), "test");
  Rng sr = make_rng(cfg.seed, {0x73706c6974ULL});
  for (auto bin : kAllBins) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < picked.size(); ++i)
      if (picked[i].bin == bin) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(uniform_int(sr, 0, static_cast<int>(i) - 1))]);
    const std::size_t n_train = idx.size() * 3 / 4;
    for (std::size_t k = 0; k < n_train; ++k) split[idx[k]] = "train";
  }

  for (auto s : {"train", "test"}) {
    fs::create_directories(cfg.out_dir / "images" / s);
    fs::create_directories(cfg.out_dir / "labels" / s);
    fs::create_directories(cfg.out_dir / "meta" / s);
  }
  const ClusterLayout layout = cfg.mode == GenMode::Single ? single_layout() : multi_layout();
  int cached_batch = -1;
  std::vector<SatelliteState> batch;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const auto& c = picked[i];
    if (c.batch != cached_batch) {
      batch = spawn_batch(derive_seed(cfg.seed, {0x6261746368ULL, static_cast<std::uint64_t>(c.batch)}), cfg.batch_size,
                          layout);
      cached_batch = c.batch;
    }
    SceneFrame f = render_candidate(cfg, c, batch);
    char name[32];
    std::snprintf(name, sizeof name, "sod_%05zu", i);
    ManifestEntry e;
    e.name = name;
    e.split = split[i];
    e.image = "images/" + e.split + "/" + e.name + ".png";
    e.label = "labels/" + e.split + "/" + e.name + ".txt";
    e.meta = "meta/" + e.split + "/" + e.name + ".json";
    e.bin = f.bin;
    e.num_labels = static_cast<int>(f.annotations.size());
    e.min_distance_km = f.annotations.front().distance_km;
    e.batch = c.batch;
    e.host_id = f.host_id;

    write_png(cfg.out_dir / e.image, f.image);
    std::vector<BoundingBox> boxes;
    for (auto& a : f.annotations) boxes.push_back(a.box);
    detail::write_text(cfg.out_dir / e.label, format_labels(boxes));
    nlohmann::json meta;
    meta["host_id"] = f.host_id;
    meta["batch"] = c.batch;
    meta["bin"] = bin_name(f.bin);
    const auto& q = f.camera.orientation;
    meta["camera"] = {{"position_km", {f.camera.position.x(), f.camera.position.y(), f.camera.position.z()}},
                      {"orientation_wxyz", {q.w(), q.x(), q.y(), q.z()}},
                      {"fov_deg", f.camera.fov_deg},
                      {"resolution", {f.camera.width, f.camera.height}}};
    for (auto& a : f.annotations) {
      const auto& s = batch[static_cast<std::size_t>(a.satellite_id)];
      meta["objects"].push_back({{"id", a.satellite_id}, {"distance_km", a.distance_km}, {"extent_m", s.extent_m}});
    }
    detail::write_text(cfg.out_dir / e.meta, meta.dump(2) + "\n");
    m.images.push_back(std::move(e));
  }
  detail::write_text(cfg.out_dir / "manifest.json", to_json(m).dump(2) + "\n");
  detail::write_text(cfg.out_dir / "data.yaml",
                     "path: .\ntrain: images/train\nval: images/test\nnc: 1\nnames: ['satellite']\n");
  return m;
}

}  // namespace sodgelan::scene
