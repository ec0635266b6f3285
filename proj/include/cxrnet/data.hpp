#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxrnet/tensor.hpp"

namespace cxr {

/// The three diagnostic classes, in report order.
enum class ClassLabel : std::uint8_t { Covid19 = 0, NoFinding = 1, OtherPneumonia = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {ClassLabel::Covid19, ClassLabel::NoFinding,
                                                                     ClassLabel::OtherPneumonia};

/// Directory name used by the on-disk layout ("covid19", "no_finding", "other_pneumonia").
std::string_view class_dir_name(ClassLabel label);
/// Human-readable name as printed in reports ("COVID-19", "No Finding", "Other Pneumonia").
std::string_view class_display_name(ClassLabel label);
constexpr std::size_t class_index(ClassLabel label) { return static_cast<std::size_t>(label); }

/// Parses a class name or a known pneumonia sub-diagnosis (sars, streptococcus,
/// klebsiella, legionellosis, pneumocystis, ards, chlamydia). Case and
/// separators are ignored. Sub-diagnoses map to OtherPneumonia.
std::optional<ClassLabel> parse_class_label(std::string_view text);
/// True when `text` names one of the known pneumonia sub-diagnoses.
bool is_known_subdiagnosis(std::string_view text);

struct DatasetItem {
  std::filesystem::path path;
  ClassLabel label;
  std::string subdiagnosis;
};

/// Ordered, immutable collection of labelled images. Pixels are decoded on
/// demand by load_image.
class Dataset {
 public:
  Dataset() = default;
  /// Rejects duplicate paths.
  explicit Dataset(std::vector<DatasetItem> items);

  std::size_t size() const noexcept { return items_.size(); }
  const DatasetItem& operator[](std::size_t i) const { return items_.at(i); }
  const std::vector<DatasetItem>& items() const noexcept { return items_; }
  const std::array<std::size_t, kNumClasses>& class_counts() const noexcept { return counts_; }
  std::vector<ClassLabel> labels() const;

  /// Decodes and resizes item i to size×size×3 in [0, 1].
  Tensor load_image(std::size_t i, std::size_t size) const;

 private:
  std::vector<DatasetItem> items_;
  std::array<std::size_t, kNumClasses> counts_{};
};

/// Loads `root/{covid19,no_finding,other_pneumonia[/<subdiagnosis>]}/*.{png,jpg,jpeg}`,
/// or a CSV manifest (`path,label,subdiagnosis`) when `root` is a .csv file or
/// contains `manifest.csv`. Throws DatasetError for a missing or empty class
/// and InputError for unreadable entries.
Dataset load_dataset(const std::filesystem::path& root);

/// Per-item fold assignment.
struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;

  std::size_t count(std::size_t fold) const;
};

/// Shuffles each class with a seeded stream and deals it round-robin into k
/// folds. Each class starts where the previous one stopped, so both per-class
/// and total fold sizes differ by at most one. Throws DomainError naming the
/// class when it has fewer than k items.
FoldPlan stratified_kfold(std::span<const ClassLabel> labels, std::size_t k, std::uint64_t seed);
FoldPlan stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);

struct FoldSplit {
  std::vector<std::size_t> train;  // ascending item indices
  std::vector<std::size_t> test;
};

/// Fold i is the held-out set; the rest is training data.
FoldSplit fold_split(const FoldPlan& plan, std::size_t fold);
FoldSplit fold_split(const Dataset& ds, const FoldPlan& plan, std::size_t fold);

}  // namespace cxr
