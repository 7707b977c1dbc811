#pragma once

#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "sodgelan/eval/data.hpp"
#include "sodgelan/eval/loss.hpp"
#include "sodgelan/eval/metrics.hpp"
#include "sodgelan/eval/optim.hpp"
#include "sodgelan/model/detection_model.hpp"

namespace sodgelan::eval {

namespace detail {
inline std::uint64_t& global_seed_slot() {
  static std::uint64_t seed = 0;
  return seed;
}
}  // namespace detail

// Root of every stochastic source: weight init, shuffling, augmentation and scene substreams
// all derive from this value through derive_seed.
inline void set_global_seed(std::uint64_t seed) { detail::global_seed_slot() = seed; }
inline std::uint64_t global_seed() { return detail::global_seed_slot(); }

template <class T = float>
model::DetectionModel<T> make_seeded_model(model::ModelVariant v, model::ScaleProfile scale, std::uint64_t seed,
                                           int num_classes = 1) {
  set_global_seed(seed);
  return model::DetectionModel<T>(v, scale, num_classes, global_seed());
}

struct TrainConfig {
  int epochs = 300;
  int batch_size = 16;
  std::uint64_t seed = 1;
  HyperProfile profile = HyperProfile::Adjusted;
  bool augment = true;
  double lr0 = 0.01, lrf = 0.01;  // cosine from lr0 to lr0 * lrf
  SgdConfig sgd;
  double warmup_epochs = 3;
  int min_warmup_iters = 100;
  double warmup_momentum = 0.8;
  LossWeights loss;
  model::DecodeOptions decode;
  int eval_batch = 8;

  void validate() const {
    SODGELAN_REQUIRE(epochs > 0, ConfigError, "epochs must be positive");
    SODGELAN_REQUIRE(batch_size > 0, ConfigError, "batch size must be positive");
    SODGELAN_REQUIRE(eval_batch > 0, ConfigError, "eval batch must be positive");
    SODGELAN_REQUIRE(lr0 > 0 && lrf > 0, ConfigError, "learning rates must be positive");
    SODGELAN_REQUIRE(sgd.momentum >= 0 && sgd.momentum < 1, ConfigError, "momentum must lie in [0, 1)");
    SODGELAN_REQUIRE(sgd.weight_decay >= 0, ConfigError, "weight decay must be non-negative");
  }
};

struct EpochRecord {
  int epoch = 0;
  double box_loss = 0, l1_loss = 0, cls_loss = 0, loss = 0;  // per-image means over the epoch
  double lr = 0;
  double map50 = 0, map5095 = 0;
};

struct TrainResult {
  EvalResult best;
  std::vector<EpochRecord> history;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

// Batched inference in eval mode.
template <class T>
std::vector<std::vector<Detection>> predict(model::DetectionModel<T>& m, const DetectionSet& set,
                                            const model::DecodeOptions& opt = {}, int batch = 8) {
  SODGELAN_REQUIRE(set.image_size == m.input_size(), ShapeMismatch, "dataset images are ", set.image_size,
                   " px, model expects ", m.input_size());
  m.set_mode(nn::Mode::Eval);
  std::vector<std::vector<Detection>> out;
  for (std::size_t i = 0; i < set.size(); i += static_cast<std::size_t>(batch)) {
    std::vector<const std::vector<float>*> imgs;
    for (std::size_t j = i; j < std::min(set.size(), i + batch); ++j) imgs.push_back(&set.images[j]);
    auto raw = m.forward(stack_images<T>(imgs, set.image_size));
    for (auto& d : model::decode_and_nms(raw, m.strides(), m.input_size(), opt)) out.push_back(std::move(d));
  }
  return out;
}

template <class T>
EvalResult evaluate(model::DetectionModel<T>& m, const DetectionSet& set, const model::DecodeOptions& opt = {},
                    int batch = 8) {
  return map_metrics(predict(m, set, opt, batch), set.labels);
}

namespace detail {

template <class T>
struct Snapshot {
  std::vector<Tensor<T>> params, buffers;

  static Snapshot take(model::DetectionModel<T>& m) {
    Snapshot s;
    for (auto& p : m.parameters()) s.params.push_back(p.param->value);
    for (auto& b : m.buffers()) s.buffers.push_back(*b.buffer);
    return s;
  }
  void restore(model::DetectionModel<T>& m) const {
    auto ps = m.parameters();
    auto bs = m.buffers();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].param->value = params[i];
    for (std::size_t i = 0; i < bs.size(); ++i) *bs[i].buffer = buffers[i];
  }
};

template <class T>
bool grads_finite(model::DetectionModel<T>& m) {
  for (auto& p : m.parameters())
    if (!p.param->grad.all_finite()) return false;
  return true;
}

}  // namespace detail

// Trains on `train_set`, evaluating on `eval_set` after every epoch. The model ends up holding
// the parameters of the epoch with the best mAP50 (earliest on ties).
template <class T>
TrainResult train(model::DetectionModel<T>& m, const DetectionSet& train_set, const DetectionSet& eval_set,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  SODGELAN_REQUIRE(train_set.size() > 0, InvalidInput, "training set is empty");
  SODGELAN_REQUIRE(train_set.image_size == m.input_size() && eval_set.image_size == m.input_size(), ShapeMismatch,
                   "dataset image size differs from the model input ", m.input_size());
  set_global_seed(cfg.seed);
  const std::uint64_t root = global_seed();

  auto opt_ptr = make_optimizer(m.parameters(), cfg.sgd);
  auto& opt = *opt_ptr;
  const int n = static_cast<int>(train_set.size());
  const int per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_iters = static_cast<long>(per_epoch) * cfg.epochs;
  const long warmup = std::min<long>(
      std::max<long>(std::lround(cfg.warmup_epochs * per_epoch), cfg.min_warmup_iters), total_iters / 4);

  TrainResult result;
  result.best.seed = cfg.seed;
  std::optional<detail::Snapshot<T>> best;
  long iter = 0;
  std::vector<float> img;
  std::vector<BoundingBox> boxes;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_rng(root, {0x73687566ULL, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(shuffle, 0, static_cast<int>(i) - 1))]);

    EpochRecord rec;
    rec.epoch = epoch;
    const double epoch_lr = cosine_lr(cfg.lr0, cfg.lrf, cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0);
    for (int bi = 0; bi < per_epoch; ++bi, ++iter) {
      std::vector<std::vector<float>> imgs;
      std::vector<std::vector<BoundingBox>> labels;
      for (int k = bi * cfg.batch_size; k < std::min(n, (bi + 1) * cfg.batch_size); ++k) {
        const std::size_t idx = order[static_cast<std::size_t>(k)];
        if (cfg.augment) {
          augmented_sample(train_set, idx, cfg.profile, root, epoch, img, boxes);
          imgs.push_back(img);
          labels.push_back(boxes);
        } else {
          imgs.push_back(train_set.images[idx]);
          labels.push_back(train_set.labels[idx]);
        }
      }
      std::vector<const std::vector<float>*> ptrs;
      for (auto& v : imgs) ptrs.push_back(&v);

      double lr = epoch_lr;
      if (iter < warmup) {
        const double f = static_cast<double>(iter + 1) / warmup;
        lr *= f;
        opt.set_momentum(cfg.warmup_momentum + f * (cfg.sgd.momentum - cfg.warmup_momentum));
      } else {
        opt.set_momentum(cfg.sgd.momentum);
      }

      const auto before = detail::Snapshot<T>::take(m);
      m.set_mode(nn::Mode::Train);
      opt.zero_grad();
      auto raw = m.forward(stack_images<T>(ptrs, train_set.image_size));
      std::vector<Tensor<T>> d_raw;
      const LossParts lp = detection_loss(raw, labels, m.strides(), m.input_size(), cfg.loss, &d_raw);
      if (std::isfinite(lp.total)) m.backward(d_raw);
      if (!std::isfinite(lp.total) || !detail::grads_finite(m)) {
        before.restore(m);
        throw TrainingDiverged(sodgelan::detail::concat("training diverged at epoch ", epoch, ", batch ", bi,
                                                       ": box loss ", lp.box, ", cls loss ", lp.cls,
                                                       "; model restored to the last finite state"));
      }
      opt.step(lr);
      const double bn = static_cast<double>(ptrs.size());
      rec.box_loss += lp.box * bn;
      rec.l1_loss += lp.l1 * bn;
      rec.cls_loss += lp.cls * bn;
      rec.loss += lp.total;
      rec.lr = lr;
    }
    rec.box_loss /= n;
    rec.l1_loss /= n;
    rec.cls_loss /= n;
    rec.loss /= n;

    const EvalResult e = evaluate(m, eval_set, cfg.decode, cfg.eval_batch);
    rec.map50 = e.map50;
    rec.map5095 = e.map5095;
    result.history.push_back(rec);
    if (!best || e.map50 > result.best.map50) {
      result.best = e;
      result.best.seed = cfg.seed;
      result.best.best_epoch = epoch;
      best = detail::Snapshot<T>::take(m);
    }
    if (on_epoch) on_epoch(rec);
  }
  best->restore(m);
  m.set_mode(nn::Mode::Eval);
  return result;
}

}  // namespace sodgelan::eval
