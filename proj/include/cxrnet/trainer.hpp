#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cxrnet/augment.hpp"
#include "cxrnet/config.hpp"
#include "cxrnet/data.hpp"
#include "cxrnet/metrics.hpp"
#include "cxrnet/model.hpp"

namespace cxr {

struct FoldTraining;

/// Observation points for auditing a cross-validation run. Callbacks may be
/// invoked from worker threads but never concurrently with each other.
struct CrossValHooks {
  /// Dataset indices whose pixels feed fit_stats for a fold.
  std::function<void(std::size_t fold, std::span<const std::size_t> items)> on_fit_stats;
  /// Dataset indices passed through random_transform during a fold.
  std::function<void(std::size_t fold, std::span<const std::size_t> items)> on_augment;
  std::function<void(std::size_t fold, std::size_t epoch, double loss)> on_epoch;
  std::function<void(std::size_t fold, const FoldTraining&, const FoldEval&)> on_fold_done;
};

struct FoldTraining {
  Model model;
  ChannelStats stats;
  std::vector<double> epoch_losses;
};

/// Images already resized to image_size×image_size×3 in [0, 1], with their
/// labels and the dataset indices they came from.
struct ImageSet {
  std::vector<Tensor> images;
  std::vector<ClassLabel> labels;
  std::vector<std::size_t> ids;

  ImageSet subset(std::span<const std::size_t> positions) const;
};

ImageSet load_images(const Dataset& ds, std::size_t image_size);

/// Fits channel statistics on `train`, then for each epoch shuffles with a
/// (seed, fold, epoch) stream, forms batches (a tail batch below two items is
/// dropped), augments each image with a (seed, fold, epoch, item) stream,
/// standardizes, and takes one Adam step per batch on categorical
/// cross-entropy. Throws NumericError naming the fold and epoch on a
/// non-finite loss.
FoldTraining train_one_fold(const ImageSet& train, const RunConfig& cfg, std::size_t fold = 0,
                            const CrossValHooks* hooks = nullptr);

/// Infer-mode class probabilities for standardized, un-augmented images.
Tensor predict(Model& model, const ImageSet& set, const ChannelStats& stats, std::size_t batch_size);
EvalResult evaluate_set(Model& model, const ImageSet& set, const ChannelStats& stats, std::size_t batch_size);

struct CrossValResult {
  FoldPlan plan;
  CVSummary summary;
};

/// Stratified k-fold loop: per fold, train on the other folds, then evaluate
/// on the un-augmented training images and on the held-out fold.
/// `parallel_folds` > 1 runs that many folds concurrently; results do not
/// depend on it.
CrossValResult cross_validate(const Dataset& ds, const RunConfig& cfg, const CrossValHooks& hooks = {},
                              std::size_t parallel_folds = 1);

/// One-hot N×3 label matrix.
Tensor one_hot(std::span<const ClassLabel> labels);

/// Writes n_per_class procedurally textured RGB images per class (covid19:
/// soft blobs, no_finding: a line grid, other_pneumonia: concentric rings)
/// into the on-disk dataset layout and loads the result.
Dataset synth_dataset(const std::filesystem::path& root, std::size_t n_per_class, std::size_t size,
                      std::uint64_t seed);

/// Seed-derived stream names, shared so audits can reproduce them.
Rng shuffle_stream(std::uint64_t seed, std::size_t fold, std::size_t epoch);
Rng augment_stream(std::uint64_t seed, std::size_t fold, std::size_t epoch, std::size_t item);

void write_losses_csv(const std::filesystem::path& path, std::span<const double> losses);
void write_stats_json(const std::filesystem::path& path, const ChannelStats& stats);
ChannelStats read_stats_json(const std::filesystem::path& path);

}  // namespace cxr
