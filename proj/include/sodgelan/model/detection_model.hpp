#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sodgelan/model/config.hpp"
#include "sodgelan/model/detect.hpp"
#include "sodgelan/model/graph.hpp"

namespace sodgelan::model {

inline constexpr std::array<int, 3> kStrides{8, 16, 32};

template <class T>
std::size_t count_parameters(const nn::ParamList<T>& ps) {
  std::size_t n = 0;
  for (auto& p : ps) n += p.param->numel();
  return n;
}

template <class T>
class DetectionModel {
 public:
  DetectionModel(ModelVariant variant, ScaleProfile scale, int num_classes = 1, std::uint64_t seed = 0)
      : DetectionModel(variant, scale, make_arch(variant, scale, num_classes), seed) {}

  DetectionModel(ModelVariant variant, ScaleProfile scale, ArchConfig arch, std::uint64_t seed)
      : variant_(variant), scale_(scale), arch_(std::move(arch)), seed_(seed) {
    SODGELAN_REQUIRE(arch_.input_size % 32 == 0, ConfigError, "input size ", arch_.input_size,
                     " must be a multiple of 32");
    build();
  }

  ModelVariant variant() const { return variant_; }
  ScaleProfile scale() const { return scale_; }
  const ArchConfig& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  int input_size() const { return arch_.input_size; }
  int num_classes() const { return arch_.num_classes; }
  std::vector<int> strides() const { return {kStrides.begin(), kStrides.end()}; }
  LayerGraph<T>& graph() { return graph_; }
  Detect<T>& head() { return *detect_; }
  const std::vector<int>& head_nodes() const { return head_nodes_; }

  // images [N, 3, S, S] in [0, 1] -> per level [N, 4 + nc, S/stride, S/stride].
  std::vector<Tensor<T>> forward(const Tensor<T>& images) {
    require_rank(images, 4, "model input");
    SODGELAN_REQUIRE(images.dim(1) == 3 && images.dim(2) == input_size() && images.dim(3) == input_size(),
                     ShapeMismatch, "model expects [N,3,", input_size(), ",", input_size(), "], got ",
                     detail::shape_str(images.shape()));
    const auto& outs = graph_.forward(images);
    std::vector<const Tensor<T>*> feats;
    for (int h : head_nodes_) feats.push_back(&outs[h]);
    auto raw = detect_->forward(feats);
    if (mode_ == nn::Mode::Eval) graph_.release();
    return raw;
  }

  // Gradients of the per-level raw outputs -> parameter gradients (accumulated).
  void backward(const std::vector<Tensor<T>>& d_raw) {
    auto d_feats = detect_->backward(d_raw);
    std::vector<std::pair<int, Tensor<T>>> seeds;
    for (std::size_t i = 0; i < head_nodes_.size(); ++i) seeds.emplace_back(head_nodes_[i], std::move(d_feats[i]));
    graph_.backward(seeds);
  }

  nn::ParamList<T> parameters() {
    nn::ParamList<T> ps;
    graph_.collect_params("", ps);
    detect_->collect_params("detect", ps);
    return ps;
  }
  nn::BufferList<T> buffers() {
    nn::BufferList<T> bs;
    graph_.collect_buffers("", bs);
    detect_->collect_buffers("detect", bs);
    return bs;
  }
  std::size_t count_parameters() { return model::count_parameters(parameters()); }
  // Analytic cost of one image, in GFLOPs (2 x multiply-accumulates).
  double count_gflops(int image_size = 0) const {
    const int s = image_size > 0 ? image_size : input_size();
    nn::FlopCounter f;
    auto shapes = graph_.infer({1, 3, s, s}, &f);
    std::vector<Shape> feats;
    for (int h : head_nodes_) feats.push_back(shapes[h]);
    detect_->infer(feats, &f);
    return f.flops / 1e9;
  }

  std::vector<std::string> layer_types() const {
    std::vector<std::string> t;
    for (int i = 0; i < graph_.size(); ++i) {
      auto& n = graph_.node(i);
      t.push_back(n.module ? n.module->type_name() : "Concat");
    }
    t.push_back("Detect");
    return t;
  }
  // Graph node names whose aggregation module carries an SE stage.
  std::vector<std::string> se_nodes() const {
    std::vector<std::string> out;
    for (int i = 0; i < graph_.size(); ++i) {
      auto& n = graph_.node(i);
      if (auto* e = dynamic_cast<blocks::RepNCSPELAN4<T>*>(n.module.get()); e && e->se()) out.push_back(n.name);
    }
    return out;
  }

  void set_mode(nn::Mode m) {
    mode_ = m;
    graph_.set_mode(m);
    detect_->set_mode(m);
  }
  nn::Mode mode() const { return mode_; }
  void set_trace(nn::Trace* t) { graph_.set_trace(t); }
  void zero_grad() {
    for (auto& p : parameters()) p.param->zero_grad();
  }

  // Directory container: model.json (manifest) + weights.bin (raw little-endian values in
  // manifest order).
  void save(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format"] = "sodgelan-model";
    j["version"] = 1;
    j["variant"] = std::string(variant_name(variant_));
    j["scale"] = std::string(scale_name(scale_));
    j["num_classes"] = num_classes();
    j["input_size"] = input_size();
    j["seed"] = seed_;
    j["dtype"] = sizeof(T) == 4 ? "float32" : "float64";
    std::ofstream bin(dir / "weights.bin", std::ios::binary);
    SODGELAN_REQUIRE(bin.good(), Error, "cannot write ", (dir / "weights.bin").string());
    std::size_t offset = 0;
    auto put = [&](const std::string& kind, const std::string& path, const Tensor<T>& t) {
      j["tensors"].push_back({{"kind", kind}, {"path", path}, {"shape", t.shape()}, {"offset", offset}});
      bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
      offset += t.size();
    };
    for (auto& p : parameters()) put("param", p.path, p.param->value);
    for (auto& b : buffers()) put("buffer", b.path, *b.buffer);
    std::ofstream(dir / "model.json") << j.dump(2) << "\n";
  }

  static DetectionModel load(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "model.json");
    SODGELAN_REQUIRE(mf.good(), InvalidInput, "no model manifest in ", dir.string());
    nlohmann::json j = nlohmann::json::parse(mf);
    SODGELAN_REQUIRE(j.value("format", "") == "sodgelan-model", InvalidInput, "not a model container: ",
                     dir.string());
    SODGELAN_REQUIRE(j["dtype"] == (sizeof(T) == 4 ? "float32" : "float64"), InvalidInput,
                     "model stored as ", j["dtype"].get<std::string>());
    DetectionModel m(parse_variant(j["variant"].get<std::string>()), parse_scale(j["scale"].get<std::string>()),
                     j["num_classes"].get<int>(), j["seed"].get<std::uint64_t>());
    std::ifstream bin(dir / "weights.bin", std::ios::binary);
    std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    std::map<std::string, Tensor<T>*> slots;
    for (auto& p : m.parameters()) slots["param:" + p.path] = &p.param->value;
    for (auto& b : m.buffers()) slots["buffer:" + b.path] = b.buffer;
    std::size_t filled = 0;
    for (auto& t : j["tensors"]) {
      const std::string key = t["kind"].get<std::string>() + ":" + t["path"].get<std::string>();
      auto it = slots.find(key);
      SODGELAN_REQUIRE(it != slots.end(), InvalidInput, "manifest tensor ", key, " not in model");
      Tensor<T>& dst = *it->second;
      SODGELAN_REQUIRE(t["shape"].get<Shape>() == dst.shape(), ShapeMismatch, "tensor ", key, " shape mismatch");
      const std::size_t off = t["offset"].get<std::size_t>() * sizeof(T), bytes = dst.size() * sizeof(T);
      SODGELAN_REQUIRE(off + bytes <= blob.size(), InvalidInput, "weights.bin truncated at ", key);
      std::memcpy(dst.data(), blob.data() + off, bytes);
      ++filled;
    }
    SODGELAN_REQUIRE(filled == slots.size(), InvalidInput, "manifest covers ", filled, " of ", slots.size(),
                     " tensors");
    return m;
  }

 private:
  void build() {
    const ArchConfig& a = arch_;
    Rng rng = make_rng(seed_, {0x6d6f64656cULL});
    auto conv = [&](int c1, int c2, int k, int s) { return blocks::make_conv<T>(c1, c2, k, s, rng); };
    auto elan = [&](int c1, int out, int mid, int branch, bool se,
                    std::optional<blocks::EmbeddedViT> vit = std::nullopt) -> nn::ModulePtr<T> {
      blocks::ElanBlockSpec s;
      s.in_channels = c1;
      s.mid_channels = mid;
      s.branch_channels = branch;
      s.out_channels = out;
      s.use_se = se;
      s.se_ratio = a.se_ratio;
      s.branch_depth = a.depth;
      s.vit = vit;
      return std::make_unique<blocks::RepNCSPELAN4<T>>(s, rng);
    };
    auto& g = graph_;
    int x = g.add("stem1", -1, conv(3, a.stem1, 3, 2));
    x = g.add("stem2", x, conv(a.stem1, a.stem2, 3, 2));
    x = g.add("elan1", x, std::make_unique<blocks::ELAN1<T>>(a.stem2, a.elan1_out, a.elan1_mid, a.elan1_branch, rng));
    x = g.add("down_p3", x, std::make_unique<blocks::AConv<T>>(a.elan1_out, a.b3, rng));
    const int p3 = g.add("stage_p3", x, elan(a.b3, a.b3, a.b3, a.b3 / 2, false));
    x = g.add("down_p4", p3, std::make_unique<blocks::AConv<T>>(a.b3, a.b4, rng));
    const int p4 = g.add("stage_p4", x, elan(a.b4, a.b4, a.b4, a.b4 / 2, false));
    x = g.add("down_p5", p4, std::make_unique<blocks::AConv<T>>(a.b4, a.b5, rng));
    const int p5 = g.add("stage_p5", x, elan(a.b5, a.b5, a.b5, a.b5 / 2, false, a.repvit));
    const int spp = g.add("sppelan", p5, std::make_unique<blocks::SPPELAN<T>>(a.b5, a.b5, a.spp_hidden, rng));

    int vit = -1, vit_up = -1, vit_ch = 0;
    if (a.vit) {
      const auto& v = *a.vit;
      const int grid = a.input_size / 32;
      blocks::ViTSpec vs{a.b5, v.out_channels, grid, grid, v.patch_size, v.embed_dim, v.depth, v.num_heads,
                         v.mlp_ratio, blocks::Unpatch::Full, false};
      vit = g.add("vit", spp, std::make_unique<blocks::ViTEncoder<T>>(vs, rng));
      vit_up = g.add("vit_up", vit, std::make_unique<nn::UpsampleNearest<T>>(2));
      vit_ch = v.out_channels;
    }

    x = g.add("up_p4", spp, std::make_unique<nn::UpsampleNearest<T>>(2));
    x = g.add_concat("cat_p4", {x, p4});
    const int td4 = g.add("head_p4_td", x, elan(a.b5 + a.b4, a.h4a, a.h4a, a.h4a / 2, false));
    x = g.add("up_p3", td4, std::make_unique<nn::UpsampleNearest<T>>(2));
    x = g.add_concat("cat_p3", {x, p3});
    const int out3 = g.add("head_p3", x, elan(a.h4a + a.b3, a.h3, a.h3, a.h3 / 2, false));
    x = g.add("down_h4", out3, std::make_unique<blocks::AConv<T>>(a.h3, a.down3, rng));
    x = vit_up >= 0 ? g.add_concat("cat_h4", {x, td4, vit_up}) : g.add_concat("cat_h4", {x, td4});
    const int out4 = g.add("head_p4", x, elan(a.down3 + a.h4a + vit_ch, a.h4b, a.h4b_mid, a.h4b_branch, a.se_heads));
    x = g.add("down_h5", out4, std::make_unique<blocks::AConv<T>>(a.h4b, a.down4, rng));
    x = vit >= 0 ? g.add_concat("cat_h5", {x, spp, vit}) : g.add_concat("cat_h5", {x, spp});
    const int out5 = g.add("head_p5", x, elan(a.down4 + a.b5 + vit_ch, a.h5, a.h5, a.h5 / 2, a.se_heads));
    head_nodes_ = {out3, out4, out5};

    DetectSpec ds;
    ds.in_channels = {a.h3, a.h4b, a.h5};
    ds.strides = strides();
    ds.num_classes = a.num_classes;
    ds.box_min = a.box_min;
    ds.image_size = a.input_size;
    detect_ = std::make_unique<Detect<T>>(ds, rng);
    set_mode(nn::Mode::Eval);
  }

  ModelVariant variant_;
  ScaleProfile scale_;
  ArchConfig arch_;
  std::uint64_t seed_;
  LayerGraph<T> graph_;
  std::unique_ptr<Detect<T>> detect_;
  std::vector<int> head_nodes_;
  nn::Mode mode_ = nn::Mode::Eval;
};

template <class T = float>
DetectionModel<T> build_model(ModelVariant v, ScaleProfile s, int num_classes = 1, std::uint64_t seed = 0) {
  return DetectionModel<T>(v, s, num_classes, seed);
}

}  // namespace sodgelan::model
