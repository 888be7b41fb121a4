#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ikshana/tensor.hpp"

namespace ikshana {

enum class DatasetKind { kCityscapes, kCamvid };

/// "cityscapes" or "camvid" (case-insensitive). Throws std::invalid_argument.
DatasetKind parse_dataset_kind(std::string_view name);
std::string_view to_string(DatasetKind kind);

struct LabelEntry {
  int raw_id = 0;
  int train_id = 0;
  std::string name;
};

/// Raw annotation id -> training class id. Train id 0 is background/void;
/// content classes are 1..num_train_classes-1.
class LabelMap {
 public:
  /// Parses "raw_id,train_id,name" lines; '#' starts a comment line.
  /// `class_names[t]` names train id t. Throws std::invalid_argument on
  /// malformed lines, duplicate raw ids, or train ids that are out of range
  /// or never used.
  static LabelMap parse(std::string_view text, std::vector<std::string> class_names);

  int lookup(int raw_id) const;  // throws std::out_of_range
  bool contains(int raw_id) const;
  int num_train_classes() const { return static_cast<int>(class_names_.size()); }
  int void_id() const { return 0; }
  const std::vector<LabelEntry>& entries() const { return entries_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

 private:
  std::vector<LabelEntry> entries_;
  std::vector<std::string> class_names_;
  std::array<int, 256> table_{};  // -1 when unknown
};

/// Shipped tables (compiled in from data/labels/).
const LabelMap& cityscapes_labels();
const LabelMap& camvid_labels();
const LabelMap& label_map(DatasetKind kind);
std::string_view cityscapes_label_table();
std::string_view camvid_label_table();
std::string_view camvid_color_table();

/// RGB colour of each raw CamVid id, indexed by raw id.
const std::vector<std::array<std::uint8_t, 3>>& camvid_palette();

/// 8-bit image, interleaved channels (1 = gray/index, 3 = RGB).
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Reads a PNG. Palette images keep their indices (one channel), 16-bit
/// samples are reduced to 8 bits and alpha is dropped. Throws
/// std::runtime_error on I/O or decode failures.
Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Per-pixel raw ids of a label image. One-channel images hold raw ids
/// directly; three-channel images are decoded through `palette`
/// (throws std::invalid_argument on a colour outside it).
std::vector<int> raw_label_ids(const Image8& label, std::span<const std::array<std::uint8_t, 3>> palette = {});

/// Elementwise table lookup. Throws std::out_of_range for an unknown raw id.
std::vector<std::int32_t> remap_labels(std::span<const int> raw, const LabelMap& map);

inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};

struct Sample {
  Tensor image;          // (1, 3, h, w), normalized
  ClassIndexMap target;  // (1, h, w)
  std::filesystem::path image_path;
  std::filesystem::path label_path;
};

/// Bilinear image resize to (out_h, out_w), ImageNet normalization, label
/// remapping and nearest-neighbour label resize. Throws
/// std::invalid_argument when image and label sizes differ or the image is
/// not RGB.
Sample preprocess(const Image8& image, const Image8& label, const LabelMap& map, int out_h, int out_w,
                  std::span<const std::array<std::uint8_t, 3>> palette = {});

/// Nearest-neighbour resize of an (h, w) index map, half-pixel aligned.
std::vector<std::int32_t> resize_nearest(std::span<const std::int32_t> values, int in_h, int in_w, int out_h,
                                         int out_w);

/// Fisher-Yates shuffle of [0, n) driven by Rng(seed): for i = n-1 down to
/// 1, swap i with below(i + 1).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

enum class SplitMode {
  kNested,    // every subset is a prefix of one shuffle
  kDisjoint,  // consecutive slices of one shuffle
};

/// Subsets of [0, n) with the requested sizes. Nested mode needs every size
/// <= n; disjoint mode needs their sum <= n (std::invalid_argument).
std::vector<std::vector<std::size_t>> seeded_split(std::size_t n, std::span<const std::size_t> sizes,
                                                   std::uint64_t seed, SplitMode mode = SplitMode::kNested);

struct SamplePaths {
  std::filesystem::path image;
  std::filesystem::path label;
};

/// Image/label pairs of one fold, sorted by image path.
///   cityscapes: leftImg8bit/<fold>/<city>/<id>_leftImg8bit.png with
///               gtFine/<fold>/<city>/<id>_gtFine_labelIds.png
///   camvid:     <fold>/<name>.png with <fold>_labels/<name>_L.png or
///               <fold>annot/<name>.png
/// Throws std::runtime_error on a missing fold, orphans, or an empty fold.
std::vector<SamplePaths> scan_dataset(const std::filesystem::path& root, DatasetKind kind, std::string_view fold);

/// Paths relative to `root`, '/'-separated, for subset files.
std::string relative_path(const std::filesystem::path& path, const std::filesystem::path& root);

/// Random-access source of preprocessed samples.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample load(std::size_t index) const = 0;
  virtual int num_classes() const = 0;
};

class InMemorySource : public SampleSource {
 public:
  InMemorySource(std::vector<Sample> samples, int num_classes);
  std::size_t size() const override { return samples_.size(); }
  Sample load(std::size_t index) const override { return samples_.at(index); }
  int num_classes() const override { return num_classes_; }

 private:
  std::vector<Sample> samples_;
  int num_classes_;
};

/// Reads and preprocesses PNG pairs on demand.
class PngSource : public SampleSource {
 public:
  PngSource(std::vector<SamplePaths> pairs, DatasetKind kind, int out_h, int out_w);
  std::size_t size() const override { return pairs_.size(); }
  Sample load(std::size_t index) const override;
  int num_classes() const override { return map_->num_train_classes(); }

 private:
  std::vector<SamplePaths> pairs_;
  DatasetKind kind_;
  const LabelMap* map_;
  int out_h_;
  int out_w_;
};

/// Reads a subset file (one root-relative image path per line) and returns
/// the matching pairs from `pairs`, in file order. A line that is a plain
/// number is taken as an index into `pairs`. Throws std::runtime_error on
/// unknown entries.
std::vector<SamplePaths> select_subset(const std::vector<SamplePaths>& pairs, const std::filesystem::path& root,
                                       const std::filesystem::path& subset_file);

}  // namespace ikshana
