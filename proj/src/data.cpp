#include "cxrnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cxrnet/augment.hpp"
#include "cxrnet/errors.hpp"
#include "cxrnet/rng.hpp"

namespace fs = std::filesystem;

namespace cxr {

namespace {

std::string normalize(std::string_view text) {
  std::string out;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

const std::map<std::string, std::string>& subdiagnosis_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"sars", "sars"},
      {"severeacuterespiratorysyndrome", "sars"},
      {"streptococcus", "streptococcus"},
      {"klebsiella", "klebsiella"},
      {"legionella", "legionellosis"},
      {"legionellosis", "legionellosis"},
      {"pneumocystis", "pneumocystis"},
      {"pneumocystisjiroveci", "pneumocystis"},
      {"pcp", "pneumocystis"},
      {"ards", "ards"},
      {"chlamydia", "chlamydia"},
      {"chlamydiapneumoniae", "chlamydia"},
  };
  return aliases;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void require_readable(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw InputError("not a readable file: " + p.string());
  std::ifstream probe(p, std::ios::binary);
  if (!probe) throw InputError("cannot open " + p.string());
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  if (line.find('"') != std::string::npos) throw InputError("manifest: quoted fields are not supported: " + line);
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return fields;
}

Dataset load_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot open manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::vector<DatasetItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (line_no == 1 && !fields.empty() && normalize(fields[0]) == "path") continue;
    if (fields.empty() || fields[0].empty()) {
      throw DatasetError("manifest " + manifest.string() + ":" + std::to_string(line_no) + ": missing path");
    }
    const fs::path rel = fields[0];
    const std::string label_text = fields.size() > 1 ? fields[1] : std::string{};
    std::string sub = fields.size() > 2 ? fields[2] : std::string{};

    std::optional<ClassLabel> label;
    if (!label_text.empty()) {
      label = parse_class_label(label_text);
      if (label && is_known_subdiagnosis(label_text) && sub.empty()) sub = subdiagnosis_aliases().at(normalize(label_text));
    } else if (rel.has_parent_path()) {
      // No label column: infer from the leading directory of the path.
      const std::string head = rel.begin()->string();
      label = parse_class_label(head);
      if (label && is_known_subdiagnosis(head) && sub.empty()) sub = subdiagnosis_aliases().at(normalize(head));
    }
    if (!label) {
      throw DatasetError("manifest " + manifest.string() + ":" + std::to_string(line_no) + ": unknown label '" +
                         label_text + "' for " + rel.string());
    }
    const fs::path full = rel.is_absolute() ? rel : base / rel;
    require_readable(full);
    items.push_back({full, *label, sub});
  }
  Dataset ds(std::move(items));
  for (auto c : kAllClasses) {
    if (ds.class_counts()[class_index(c)] == 0) {
      throw DatasetError("class '" + std::string(class_dir_name(c)) + "' has no images in " + manifest.string());
    }
  }
  return ds;
}

}  // namespace

std::string_view class_dir_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::Covid19: return "covid19";
    case ClassLabel::NoFinding: return "no_finding";
    case ClassLabel::OtherPneumonia: return "other_pneumonia";
  }
  return "?";
}

std::string_view class_display_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::Covid19: return "COVID-19";
    case ClassLabel::NoFinding: return "No Finding";
    case ClassLabel::OtherPneumonia: return "Other Pneumonia";
  }
  return "?";
}

bool is_known_subdiagnosis(std::string_view text) { return subdiagnosis_aliases().contains(normalize(text)); }

std::optional<ClassLabel> parse_class_label(std::string_view text) {
  const std::string n = normalize(text);
  if (n == "covid19" || n == "covid") return ClassLabel::Covid19;
  if (n == "nofinding" || n == "normal" || n == "healthy") return ClassLabel::NoFinding;
  if (n == "otherpneumonia" || n == "pneumonia") return ClassLabel::OtherPneumonia;
  if (is_known_subdiagnosis(text)) return ClassLabel::OtherPneumonia;
  return std::nullopt;
}

Dataset::Dataset(std::vector<DatasetItem> items) : items_(std::move(items)) {
  std::set<std::string> seen;
  for (const auto& item : items_) {
    const std::string key = item.path.lexically_normal().string();
    if (!seen.insert(key).second) throw DatasetError("duplicate path in dataset: " + key);
    counts_[class_index(item.label)] += 1;
  }
}

std::vector<ClassLabel> Dataset::labels() const {
  std::vector<ClassLabel> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.label);
  return out;
}

Tensor Dataset::load_image(std::size_t i, std::size_t size) const {
  return load_resized(items_.at(i).path.string(), size);
}

Dataset load_dataset(const fs::path& root) {
  std::error_code ec;
  if (fs::is_regular_file(root, ec)) return load_manifest(root);
  if (!fs::is_directory(root, ec)) throw DatasetError("dataset root does not exist: " + root.string());
  if (fs::is_regular_file(root / "manifest.csv", ec)) return load_manifest(root / "manifest.csv");

  std::vector<DatasetItem> items;
  for (auto label : kAllClasses) {
    const fs::path dir = root / class_dir_name(label);
    if (!fs::is_directory(dir, ec)) {
      throw DatasetError("missing class directory '" + std::string(class_dir_name(label)) + "' under " +
                         root.string());
    }
    std::size_t found = 0;
    for (const auto& file : sorted_images(dir)) {
      require_readable(file);
      items.push_back({file, label, {}});
      ++found;
    }
    if (label == ClassLabel::OtherPneumonia) {
      std::vector<fs::path> subdirs;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory()) subdirs.push_back(entry.path());
      }
      std::sort(subdirs.begin(), subdirs.end());
      for (const auto& sub : subdirs) {
        for (const auto& file : sorted_images(sub)) {
          require_readable(file);
          items.push_back({file, label, sub.filename().string()});
          ++found;
        }
      }
    }
    if (found == 0) throw DatasetError("class '" + std::string(class_dir_name(label)) + "' has no images");
  }
  return Dataset(std::move(items));
}

std::size_t FoldPlan::count(std::size_t fold) const {
  return static_cast<std::size_t>(std::count(assignments.begin(), assignments.end(), fold));
}

FoldPlan stratified_kfold(std::span<const ClassLabel> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DomainError("stratified_kfold: k must be at least 2, got " + std::to_string(k));
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[class_index(labels[i])].push_back(i);

  FoldPlan plan{k, std::vector<std::size_t>(labels.size(), 0)};
  std::size_t next_fold = 0;
  for (auto label : kAllClasses) {
    auto& members = by_class[class_index(label)];
    if (members.empty()) continue;  // class absent from this collection
    if (members.size() < k) {
      throw DomainError("stratified_kfold: class '" + std::string(class_dir_name(label)) + "' has " +
                        std::to_string(members.size()) + " items, fewer than k=" + std::to_string(k));
    }
    Rng rng(seed, "kfold/" + std::string(class_dir_name(label)));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t j = 0; j < members.size(); ++j) plan.assignments[members[j]] = (next_fold + j) % k;
    next_fold = (next_fold + members.size()) % k;
  }
  return plan;
}

FoldPlan stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  const auto labels = ds.labels();
  return stratified_kfold(labels, k, seed);
}

FoldSplit fold_split(const FoldPlan& plan, std::size_t fold) {
  if (fold >= plan.k) {
    throw DomainError("fold index " + std::to_string(fold) + " out of range for k=" + std::to_string(plan.k));
  }
  FoldSplit split;
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    (plan.assignments[i] == fold ? split.test : split.train).push_back(i);
  }
  return split;
}

FoldSplit fold_split(const Dataset& ds, const FoldPlan& plan, std::size_t fold) {
  if (plan.assignments.size() != ds.size()) {
    throw DimensionError("fold plan covers " + std::to_string(plan.assignments.size()) + " items, dataset has " +
                         std::to_string(ds.size()));
  }
  return fold_split(plan, fold);
}

}  // namespace cxr
