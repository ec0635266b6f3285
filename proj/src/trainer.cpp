#include "cxrnet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "cxrnet/errors.hpp"
#include "cxrnet/image_io.hpp"

namespace fs = std::filesystem;

namespace cxr {

Rng shuffle_stream(std::uint64_t seed, std::size_t fold, std::size_t epoch) {
  return Rng(seed, "shuffle/fold" + std::to_string(fold) + "/epoch" + std::to_string(epoch));
}

Rng augment_stream(std::uint64_t seed, std::size_t fold, std::size_t epoch, std::size_t item) {
  return Rng(seed, "augment/fold" + std::to_string(fold) + "/epoch" + std::to_string(epoch) + "/item" +
                       std::to_string(item));
}

Tensor one_hot(std::span<const ClassLabel> labels) {
  Tensor t({labels.size(), kNumClasses});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i * kNumClasses + class_index(labels[i])] = 1.0;
  return t;
}

ImageSet ImageSet::subset(std::span<const std::size_t> positions) const {
  ImageSet out;
  for (auto p : positions) {
    out.images.push_back(images.at(p));
    out.labels.push_back(labels.at(p));
    out.ids.push_back(ids.at(p));
  }
  return out;
}

ImageSet load_images(const Dataset& ds, std::size_t image_size) {
  ImageSet set;
  set.images.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    set.images.push_back(ds.load_image(i, image_size));
    set.labels.push_back(ds[i].label);
    set.ids.push_back(i);
  }
  return set;
}

namespace {

Tensor stack(std::span<const Tensor> images) {
  const Shape& s = images.front().shape();
  Tensor batch({images.size(), s[0], s[1], s[2]});
  const std::size_t len = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw DimensionError("stack: images of differing shapes");
    std::copy(images[i].data().begin(), images[i].data().end(), batch.raw() + i * len);
  }
  return batch;
}

}  // namespace

FoldTraining train_one_fold(const ImageSet& train, const RunConfig& cfg, std::size_t fold,
                            const CrossValHooks* hooks) {
  if (train.images.empty()) throw DatasetError("fold " + std::to_string(fold) + ": empty training set");
  const ArchitectureSpec spec = cfg.architecture();

  if (hooks && hooks->on_fit_stats) hooks->on_fit_stats(fold, train.ids);
  const ChannelStats stats = fit_stats(train.images);

  Rng init_rng(cfg.seed, "model/fold" + std::to_string(fold));
  FoldTraining result{Model::build(spec, init_rng), stats, {}};
  AdamState adam{cfg.adam, 0, {}, {}};

  std::vector<std::size_t> order(train.images.size());
  std::vector<std::size_t> augmented;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_stream(cfg.seed, fold, epoch).shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<Tensor> images;
      std::vector<ClassLabel> labels;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t pos = order[b];
        Tensor img = train.images[pos];
        if (cfg.augment) {
          Rng rng = augment_stream(cfg.seed, fold, epoch, train.ids[pos]);
          img = random_transform(img, cfg.augmentation, rng);
          augmented.push_back(train.ids[pos]);
        }
        images.push_back(standardize(img, stats));
        labels.push_back(train.labels[pos]);
      }
      Rng dropout_rng(cfg.seed, "dropout/fold" + std::to_string(fold) + "/epoch" + std::to_string(epoch) +
                                    "/batch" + std::to_string(start / cfg.batch_size));
      const Tensor probs = result.model.forward(stack(images), Mode::Train, &dropout_rng);
      const LossResult loss = cross_entropy(probs, one_hot(labels));
      if (!std::isfinite(loss.loss)) {
        throw NumericError("non-finite loss in fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch));
      }
      result.model.backward(loss.dlogits);
      const auto params = result.model.parameters();
      adam_step(adam, params);
      for (const auto& p : params) {
        if (!std::ranges::all_of(p.value->data(), [](double v) { return std::isfinite(v); })) {
          throw NumericError("non-finite parameters in fold " + std::to_string(fold) + ", epoch " +
                             std::to_string(epoch));
        }
      }
      loss_sum += loss.loss * static_cast<double>(end - start);
      seen += end - start;
    }
    const double epoch_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    result.epoch_losses.push_back(epoch_loss);
    if (hooks && hooks->on_epoch) hooks->on_epoch(fold, epoch, epoch_loss);
  }
  if (hooks && hooks->on_augment && !augmented.empty()) {
    std::sort(augmented.begin(), augmented.end());
    augmented.erase(std::unique(augmented.begin(), augmented.end()), augmented.end());
    hooks->on_augment(fold, augmented);
  }
  return result;
}

Tensor predict(Model& model, const ImageSet& set, const ChannelStats& stats, std::size_t batch_size) {
  const std::size_t n = set.images.size();
  if (n == 0) throw DomainError("predict: empty image set");
  Tensor probs({n, model.spec().classes()});
  const std::size_t c = probs.dim(1);
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<Tensor> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(standardize(set.images[i], stats));
    const Tensor out = model.forward(stack(images), Mode::Infer);
    std::copy(out.data().begin(), out.data().end(), probs.raw() + start * c);
  }
  return probs;
}

EvalResult evaluate_set(Model& model, const ImageSet& set, const ChannelStats& stats, std::size_t batch_size) {
  return evaluate(predict(model, set, stats, batch_size), one_hot(set.labels));
}

CrossValResult cross_validate(const Dataset& ds, const RunConfig& cfg, const CrossValHooks& hooks,
                              std::size_t parallel_folds) {
  cfg.validate();
  CrossValResult result;
  result.plan = stratified_kfold(ds, cfg.k, cfg.seed);
  const ImageSet all = load_images(ds, cfg.image_size);

  std::mutex hook_mutex;
  CrossValHooks locked;
  if (hooks.on_fit_stats) {
    locked.on_fit_stats = [&](std::size_t f, std::span<const std::size_t> items) {
      std::lock_guard lock(hook_mutex);
      hooks.on_fit_stats(f, items);
    };
  }
  if (hooks.on_augment) {
    locked.on_augment = [&](std::size_t f, std::span<const std::size_t> items) {
      std::lock_guard lock(hook_mutex);
      hooks.on_augment(f, items);
    };
  }
  if (hooks.on_epoch) {
    locked.on_epoch = [&](std::size_t f, std::size_t e, double l) {
      std::lock_guard lock(hook_mutex);
      hooks.on_epoch(f, e, l);
    };
  }

  std::vector<FoldEval> evals(cfg.k);
  std::vector<std::exception_ptr> errors(cfg.k);
  const auto run_fold = [&](std::size_t fold) {
    try {
      const FoldSplit split = fold_split(ds, result.plan, fold);
      const ImageSet train = all.subset(split.train);
      const ImageSet test = all.subset(split.test);
      FoldTraining trained = train_one_fold(train, cfg, fold, &locked);
      FoldEval ev;
      ev.train = evaluate_set(trained.model, train, trained.stats, cfg.batch_size);
      ev.test = evaluate_set(trained.model, test, trained.stats, cfg.batch_size);
      if (hooks.on_fold_done) {
        std::lock_guard lock(hook_mutex);
        hooks.on_fold_done(fold, trained, ev);
      }
      evals[fold] = std::move(ev);
    } catch (...) {
      errors[fold] = std::current_exception();
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(parallel_folds, 1, cfg.k);
  if (workers == 1) {
    for (std::size_t f = 0; f < cfg.k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < cfg.k; f = next++) run_fold(f);
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.summary = summarize(std::move(evals), cfg.k);
  return result;
}

namespace {

// Procedural textures in [0, 1]; each class differs in spatial structure
// rather than mean brightness.
double blob_texture(double x, double y, const std::vector<std::array<double, 3>>& blobs) {
  double v = 0.15;
  for (const auto& b : blobs) {
    const double dx = x - b[0], dy = y - b[1];
    v += 0.7 * std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
  }
  return v;
}

double grid_texture(double x, double y, double period, double phx, double phy) {
  const double gx = std::abs(std::sin(std::numbers::pi * (x / period + phx)));
  const double gy = std::abs(std::sin(std::numbers::pi * (y / period + phy)));
  return 0.15 + 0.7 * std::pow(std::max(1.0 - gx, 1.0 - gy), 2.0);
}

double ring_texture(double x, double y, double cx, double cy, double period, double phase) {
  const double r = std::hypot(x - cx, y - cy);
  return 0.5 + 0.35 * std::cos(2.0 * std::numbers::pi * (r / period + phase));
}

}  // namespace

Dataset synth_dataset(const fs::path& root, std::size_t n_per_class, std::size_t size, std::uint64_t seed) {
  if (n_per_class < 5) throw DomainError("synth_dataset: need at least 5 images per class");
  if (size < 16) throw DomainError("synth_dataset: image size must be at least 16");
  const fs::path dirs[kNumClasses] = {root / "covid19", root / "no_finding", root / "other_pneumonia" / "synthetic"};
  for (const auto& d : dirs) fs::create_directories(d);

  const double s = static_cast<double>(size);
  for (auto label : kAllClasses) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng(seed, "synth/" + std::string(class_dir_name(label)) + "/" + std::to_string(i));
      RawImage img{size, size, 3, std::vector<std::uint8_t>(size * size * 3)};
      std::vector<std::array<double, 3>> blobs;
      const std::size_t n_blobs = 2 + rng.below(3);
      for (std::size_t b = 0; b < n_blobs; ++b) {
        blobs.push_back({rng.uniform(0.2, 0.8) * s, rng.uniform(0.2, 0.8) * s, rng.uniform(0.06, 0.12) * s});
      }
      const double period = rng.uniform(0.16, 0.24) * s;
      const double ph1 = rng.uniform(), ph2 = rng.uniform();
      const double cx = rng.uniform(0.35, 0.65) * s, cy = rng.uniform(0.35, 0.65) * s;
      const double tint = rng.uniform(-0.03, 0.03);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double fx = static_cast<double>(x), fy = static_cast<double>(y);
          double v = 0.0;
          switch (label) {
            case ClassLabel::Covid19: v = blob_texture(fx, fy, blobs); break;
            case ClassLabel::NoFinding: v = grid_texture(fx, fy, period, ph1, ph2); break;
            case ClassLabel::OtherPneumonia: v = ring_texture(fx, fy, cx, cy, period, ph1); break;
          }
          v += rng.uniform(-0.05, 0.05);
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double shade = std::clamp(v + (ch == 0 ? tint : ch == 2 ? -tint : 0.0), 0.0, 1.0);
            img.pixels[(y * size + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(shade * 255.0));
          }
        }
      }
      char name[32];
      std::snprintf(name, sizeof name, "img_%04zu.png", i);
      write_png((dirs[class_index(label)] / name).string(), img);
    }
  }
  return load_dataset(root);
}

void write_losses_csv(const fs::path& path, std::span<const double> losses) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "epoch,loss\n";
  out.precision(17);
  for (std::size_t e = 0; e < losses.size(); ++e) out << e << ',' << losses[e] << '\n';
}

void write_stats_json(const fs::path& path, const ChannelStats& stats) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  nlohmann::json j = {{"mean", stats.mean}, {"std", stats.std}};
  out << j.dump(2) << '\n';
}

ChannelStats read_stats_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    ChannelStats s;
    s.mean = j.at("mean").get<std::array<double, 3>>();
    s.std = j.at("std").get<std::array<double, 3>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed stats file " + path.string() + ": " + e.what());
  }
}

}  // namespace cxr
