#include "ikshana/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ikshana/ops.hpp"
#include "ikshana/rng.hpp"
#include "label_tables.hpp"

namespace fs = std::filesystem;

namespace ikshana {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view field, std::size_t line) {
  field = trim(field);
  int value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw std::invalid_argument("line " + std::to_string(line) + ": bad integer '" + std::string(field) + "'");
  }
  return value;
}

// Splits non-comment, non-empty lines on commas.
std::vector<std::pair<std::size_t, std::vector<std::string_view>>> csv_rows(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.emplace_back(line_no, std::move(fields));
  }
  return rows;
}

std::vector<std::array<std::uint8_t, 3>> parse_palette(std::string_view text) {
  std::vector<std::array<std::uint8_t, 3>> palette;
  for (const auto& [line, fields] : csv_rows(text)) {
    if (fields.size() != 4) throw std::invalid_argument("palette line " + std::to_string(line) + " needs 4 fields");
    if (parse_int(fields[0], line) != static_cast<int>(palette.size())) {
      throw std::invalid_argument("palette ids must be dense and ordered");
    }
    std::array<std::uint8_t, 3> rgb{};
    for (int c = 0; c < 3; ++c) {
      const int v = parse_int(fields[static_cast<std::size_t>(c + 1)], line);
      if (v < 0 || v > 255) throw std::invalid_argument("palette value out of range");
      rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(v);
    }
    palette.push_back(rgb);
  }
  return palette;
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  const std::string key = lower(name);
  if (key == "cityscapes") return DatasetKind::kCityscapes;
  if (key == "camvid") return DatasetKind::kCamvid;
  throw std::invalid_argument("unknown dataset '" + std::string(name) + "' (expected cityscapes or camvid)");
}

std::string_view to_string(DatasetKind kind) {
  return kind == DatasetKind::kCityscapes ? "cityscapes" : "camvid";
}

LabelMap LabelMap::parse(std::string_view text, std::vector<std::string> class_names) {
  if (class_names.size() < 2) throw std::invalid_argument("label map needs at least two train classes");
  LabelMap map;
  map.class_names_ = std::move(class_names);
  map.table_.fill(-1);
  std::vector<bool> used(map.class_names_.size(), false);
  for (const auto& [line, fields] : csv_rows(text)) {
    if (fields.size() != 3) throw std::invalid_argument("label line " + std::to_string(line) + " needs 3 fields");
    LabelEntry e{parse_int(fields[0], line), parse_int(fields[1], line), std::string(trim(fields[2]))};
    if (e.raw_id < 0 || e.raw_id > 255) throw std::invalid_argument("raw id out of range on line " + std::to_string(line));
    if (e.train_id < 0 || e.train_id >= map.num_train_classes()) {
      throw std::invalid_argument("train id out of range on line " + std::to_string(line));
    }
    if (map.table_[static_cast<std::size_t>(e.raw_id)] != -1) {
      throw std::invalid_argument("duplicate raw id " + std::to_string(e.raw_id));
    }
    map.table_[static_cast<std::size_t>(e.raw_id)] = e.train_id;
    used[static_cast<std::size_t>(e.train_id)] = true;
    map.entries_.push_back(std::move(e));
  }
  for (std::size_t t = 1; t < used.size(); ++t) {
    if (!used[t]) throw std::invalid_argument("train id " + std::to_string(t) + " has no raw id");
  }
  return map;
}

bool LabelMap::contains(int raw_id) const {
  return raw_id >= 0 && raw_id < 256 && table_[static_cast<std::size_t>(raw_id)] >= 0;
}

int LabelMap::lookup(int raw_id) const {
  if (!contains(raw_id)) throw std::out_of_range("unknown raw label id " + std::to_string(raw_id));
  return table_[static_cast<std::size_t>(raw_id)];
}

std::string_view cityscapes_label_table() { return detail::kCityscapesTable; }
std::string_view camvid_label_table() { return detail::kCamvidTable; }
std::string_view camvid_color_table() { return detail::kCamvidColorTable; }

const LabelMap& cityscapes_labels() {
  static const LabelMap map = LabelMap::parse(
      cityscapes_label_table(),
      {"background", "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light", "traffic sign",
       "vegetation", "terrain", "sky", "person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle"});
  return map;
}

const LabelMap& camvid_labels() {
  static const LabelMap map = LabelMap::parse(camvid_label_table(),
                                              {"void", "Sky", "Building", "Pole", "Road", "Sidewalk", "Tree",
                                               "SignSymbol", "Fence", "Car", "Pedestrian", "Bicyclist"});
  return map;
}

const LabelMap& label_map(DatasetKind kind) {
  return kind == DatasetKind::kCityscapes ? cityscapes_labels() : camvid_labels();
}

const std::vector<std::array<std::uint8_t, 3>>& camvid_palette() {
  static const auto palette = parse_palette(camvid_color_table());
  return palette;
}

std::vector<int> raw_label_ids(const Image8& label, std::span<const std::array<std::uint8_t, 3>> palette) {
  const std::size_t pixels = static_cast<std::size_t>(label.height) * label.width;
  std::vector<int> ids(pixels);
  if (label.channels == 1) {
    for (std::size_t i = 0; i < pixels; ++i) ids[i] = label.pixels[i];
    return ids;
  }
  if (label.channels != 3) throw std::invalid_argument("label images must have 1 or 3 channels");
  if (palette.empty()) throw std::invalid_argument("colour label image needs a palette");
  std::map<std::uint32_t, int> lookup;
  for (std::size_t i = 0; i < palette.size(); ++i) {
    const auto& c = palette[i];
    lookup.emplace((std::uint32_t{c[0]} << 16) | (std::uint32_t{c[1]} << 8) | c[2], static_cast<int>(i));
  }
  for (std::size_t i = 0; i < pixels; ++i) {
    const std::uint8_t* p = &label.pixels[3 * i];
    const std::uint32_t key = (std::uint32_t{p[0]} << 16) | (std::uint32_t{p[1]} << 8) | p[2];
    auto it = lookup.find(key);
    if (it == lookup.end()) {
      throw std::invalid_argument("label colour (" + std::to_string(p[0]) + "," + std::to_string(p[1]) + "," +
                                  std::to_string(p[2]) + ") is not in the palette");
    }
    ids[i] = it->second;
  }
  return ids;
}

std::vector<std::int32_t> remap_labels(std::span<const int> raw, const LabelMap& map) {
  std::vector<std::int32_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = map.lookup(raw[i]);
  return out;
}

std::vector<std::int32_t> resize_nearest(std::span<const std::int32_t> values, int in_h, int in_w, int out_h,
                                         int out_w) {
  if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_nearest: empty size");
  if (values.size() != static_cast<std::size_t>(in_h) * in_w) {
    throw std::invalid_argument("resize_nearest: value count does not match size");
  }
  auto source = [](int dst, int in, int out) {
    const auto s = (2 * static_cast<std::int64_t>(dst) + 1) * in / (2 * static_cast<std::int64_t>(out));
    return static_cast<int>(std::min<std::int64_t>(s, in - 1));
  };
  std::vector<int> xs(static_cast<std::size_t>(out_w));
  for (int x = 0; x < out_w; ++x) xs[static_cast<std::size_t>(x)] = source(x, in_w, out_w);
  std::vector<std::int32_t> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const std::size_t row = static_cast<std::size_t>(source(y, in_h, out_h)) * in_w;
    for (int x = 0; x < out_w; ++x) {
      out[static_cast<std::size_t>(y) * out_w + x] = values[row + static_cast<std::size_t>(xs[static_cast<std::size_t>(x)])];
    }
  }
  return out;
}

Sample preprocess(const Image8& image, const Image8& label, const LabelMap& map, int out_h, int out_w,
                  std::span<const std::array<std::uint8_t, 3>> palette) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("preprocess: output size must be positive");
  if (image.channels != 3) throw std::invalid_argument("preprocess: image must be RGB");
  if (image.height != label.height || image.width != label.width) {
    throw std::invalid_argument("preprocess: image is " + std::to_string(image.height) + "x" +
                                std::to_string(image.width) + " but label is " + std::to_string(label.height) +
                                "x" + std::to_string(label.width));
  }
  const std::int64_t h = image.height;
  const std::int64_t w = image.width;
  std::vector<float> planar(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t i = 0; i < h * w; ++i) {
      planar[static_cast<std::size_t>(c * h * w + i)] = image.pixels[static_cast<std::size_t>(3 * i + c)] / 255.0f;
    }
  }
  Tensor rgb = Tensor::from_data({1, 3, h, w}, std::move(planar));
  if (h != out_h || w != out_w) rgb = bilinear_resize(rgb, out_h, out_w);
  auto data = rgb.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) data[c * plane + i] = (data[c * plane + i] - kImageNetMean[c]) / kImageNetStd[c];
  }

  const auto train_ids = remap_labels(raw_label_ids(label, palette), map);
  Sample sample;
  sample.image = std::move(rgb);
  sample.target = ClassIndexMap::zeros(1, out_h, out_w);
  sample.target.values = resize_nearest(train_ids, image.height, image.width, out_h, out_w);
  return sample;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<std::vector<std::size_t>> seeded_split(std::size_t n, std::span<const std::size_t> sizes,
                                                   std::uint64_t seed, SplitMode mode) {
  std::size_t total = 0;
  for (std::size_t s : sizes) {
    if (mode == SplitMode::kNested && s > n) {
      throw std::invalid_argument("subset of " + std::to_string(s) + " exceeds " + std::to_string(n) + " items");
    }
    total += s;
  }
  if (mode == SplitMode::kDisjoint && total > n) {
    throw std::invalid_argument("disjoint subsets need " + std::to_string(total) + " items, only " +
                                std::to_string(n) + " available");
  }
  const auto order = seeded_permutation(n, seed);
  std::vector<std::vector<std::size_t>> subsets;
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    const auto begin = order.begin() + static_cast<std::ptrdiff_t>(mode == SplitMode::kNested ? 0 : offset);
    subsets.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(s));
    offset += s;
  }
  return subsets;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> png_files(const fs::path& dir, bool recursive) {
  std::vector<fs::path> files;
  auto take = [&](const fs::directory_entry& e) {
    if (e.is_regular_file() && lower(e.path().extension().string()) == ".png") files.push_back(e.path());
  };
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) take(e);
  } else {
    for (const auto& e : fs::directory_iterator(dir)) take(e);
  }
  std::sort(files.begin(), files.end());
  return files;
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("missing directory " + dir.string());
}

std::vector<SamplePaths> pair_up(const std::vector<fs::path>& images, const std::vector<fs::path>& labels,
                                 const std::function<fs::path(const fs::path&)>& label_for) {
  std::set<fs::path> expected;
  std::vector<SamplePaths> pairs;
  for (const auto& image : images) {
    fs::path label = label_for(image);
    if (!fs::is_regular_file(label)) throw std::runtime_error("image without label: " + image.string());
    expected.insert(label);
    pairs.push_back({image, std::move(label)});
  }
  for (const auto& label : labels) {
    if (!expected.contains(label)) throw std::runtime_error("label without image: " + label.string());
  }
  if (pairs.empty()) throw std::runtime_error("dataset fold is empty");
  return pairs;
}

std::vector<SamplePaths> scan_cityscapes(const fs::path& root, std::string_view fold) {
  const fs::path image_dir = root / "leftImg8bit" / fold;
  const fs::path label_dir = root / "gtFine" / fold;
  require_dir(image_dir);
  require_dir(label_dir);
  const std::string image_suffix = "_leftImg8bit.png";
  const std::string label_suffix = "_gtFine_labelIds.png";
  std::vector<fs::path> images;
  for (auto& p : png_files(image_dir, true)) {
    if (ends_with(p.filename().string(), image_suffix)) images.push_back(p);
  }
  std::vector<fs::path> labels;
  for (auto& p : png_files(label_dir, true)) {
    if (ends_with(p.filename().string(), label_suffix)) labels.push_back(p);
  }
  return pair_up(images, labels, [&](const fs::path& image) {
    const std::string name = image.filename().string();
    const fs::path city = image.parent_path().lexically_relative(image_dir);
    return label_dir / city / (name.substr(0, name.size() - image_suffix.size()) + label_suffix);
  });
}

std::vector<SamplePaths> scan_camvid(const fs::path& root, std::string_view fold) {
  const fs::path image_dir = root / fold;
  require_dir(image_dir);
  const fs::path labels_dir = root / (std::string(fold) + "_labels");
  const fs::path annot_dir = root / (std::string(fold) + "annot");
  const bool colour = fs::is_directory(labels_dir);
  if (!colour && !fs::is_directory(annot_dir)) {
    throw std::runtime_error("no label directory for fold " + std::string(fold) + " (tried " + labels_dir.string() +
                             " and " + annot_dir.string() + ")");
  }
  const fs::path label_dir = colour ? labels_dir : annot_dir;
  return pair_up(png_files(image_dir, false), png_files(label_dir, false), [&](const fs::path& image) {
    return colour ? label_dir / (image.stem().string() + "_L.png") : label_dir / image.filename();
  });
}

}  // namespace

std::vector<SamplePaths> scan_dataset(const fs::path& root, DatasetKind kind, std::string_view fold) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " does not exist");
  return kind == DatasetKind::kCityscapes ? scan_cityscapes(root, fold) : scan_camvid(root, fold);
}

std::string relative_path(const fs::path& path, const fs::path& root) {
  return path.lexically_relative(root).generic_string();
}

InMemorySource::InMemorySource(std::vector<Sample> samples, int num_classes)
    : samples_(std::move(samples)), num_classes_(num_classes) {
  for (const auto& s : samples_) {
    const Shape& shape = s.image.shape();
    if (shape.n != 1 || shape.c != 3 || s.target.n != 1 || s.target.h != shape.h || s.target.w != shape.w) {
      throw std::invalid_argument("in-memory sample has inconsistent image/target shapes");
    }
    for (auto v : s.target.values) {
      if (v < 0 || v >= num_classes_) throw std::invalid_argument("in-memory sample has an out-of-range class");
    }
  }
}

PngSource::PngSource(std::vector<SamplePaths> pairs, DatasetKind kind, int out_h, int out_w)
    : pairs_(std::move(pairs)), kind_(kind), map_(&label_map(kind)), out_h_(out_h), out_w_(out_w) {}

Sample PngSource::load(std::size_t index) const {
  const SamplePaths& p = pairs_.at(index);
  const Image8 image = read_png(p.image);
  const Image8 label = read_png(p.label);
  std::span<const std::array<std::uint8_t, 3>> palette;
  if (kind_ == DatasetKind::kCamvid) palette = camvid_palette();
  Sample s = preprocess(image, label, *map_, out_h_, out_w_, palette);
  s.image_path = p.image;
  s.label_path = p.label;
  return s;
}

std::vector<SamplePaths> select_subset(const std::vector<SamplePaths>& pairs, const fs::path& root,
                                       const fs::path& subset_file) {
  std::ifstream in(subset_file);
  if (!in) throw std::runtime_error("cannot read subset file " + subset_file.string());
  std::map<std::string, const SamplePaths*> by_path;
  for (const auto& p : pairs) by_path.emplace(relative_path(p.image, root), &p);
  std::vector<SamplePaths> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string entry(trim(line));
    if (entry.empty()) continue;
    if (auto it = by_path.find(entry); it != by_path.end()) {
      out.push_back(*it->second);
      continue;
    }
    std::size_t index = 0;
    const auto [end, ec] = std::from_chars(entry.data(), entry.data() + entry.size(), index);
    if (ec != std::errc{} || end != entry.data() + entry.size() || index >= pairs.size()) {
      throw std::runtime_error("subset entry not in dataset: " + entry);
    }
    out.push_back(pairs[index]);
  }
  if (out.empty()) throw std::runtime_error("subset file " + subset_file.string() + " is empty");
  return out;
}

}  // namespace ikshana
