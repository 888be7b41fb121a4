#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ikshana/dataio.hpp"
#include "ikshana/rng.hpp"

using namespace ikshana;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Independent reading of a shipped table: raw id -> train id.
std::map<int, int> table_oracle(const fs::path& p) {
  std::map<int, int> m;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string raw, train;
    std::getline(ls, raw, ',');
    std::getline(ls, train, ',');
    m[std::stoi(raw)] = std::stoi(train);
  }
  return m;
}

const fs::path kLabels = fs::path(IKSHANA_SOURCE_DIR) / "data" / "labels";

Image8 solid_rgb(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image8 im{h, w, 3, {}};
  for (int i = 0; i < h * w; ++i) im.pixels.insert(im.pixels.end(), {r, g, b});
  return im;
}

Image8 gray(int h, int w, std::uint8_t v) { return Image8{h, w, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), v)}; }

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("ikshana_dataio_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void touch_png(const fs::path& p, const Image8& im) {
  fs::create_directories(p.parent_path());
  write_png(p, im);
}

}  // namespace

TEST(LabelTables, EmbeddedCopiesMatchShippedFiles) {
  EXPECT_EQ(cityscapes_label_table(), read_file(kLabels / "cityscapes.csv"));
  EXPECT_EQ(camvid_label_table(), read_file(kLabels / "camvid.csv"));
  EXPECT_EQ(camvid_color_table(), read_file(kLabels / "camvid_colors.csv"));
}

TEST(LabelTables, CityscapesOrderAndBackground) {
  const LabelMap& m = cityscapes_labels();
  EXPECT_EQ(m.num_train_classes(), 20);
  EXPECT_EQ(m.lookup(7), 1);  // road
  EXPECT_EQ(m.class_names()[1], "road");
  EXPECT_EQ(m.class_names()[19], "bicycle");
  const std::vector<int> content{7, 8, 11, 12, 13, 17, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 31, 32, 33};
  for (std::size_t i = 0; i < content.size(); ++i) EXPECT_EQ(m.lookup(content[i]), static_cast<int>(i + 1));
  for (int raw : {0, 1, 2, 3, 4, 5, 6, 9, 10, 14, 15, 16, 18, 29, 30}) EXPECT_EQ(m.lookup(raw), 0) << raw;
  EXPECT_THROW(m.lookup(34), std::out_of_range);
  EXPECT_THROW(m.lookup(255), std::out_of_range);
  for (const auto& e : m.entries()) {
    if (e.train_id > 0) {
      EXPECT_EQ(e.name, m.class_names()[static_cast<std::size_t>(e.train_id)]);
    }
  }
}

TEST(LabelTables, CamvidGroupsThirtyTwoIntoTwelve) {
  const LabelMap& m = camvid_labels();
  EXPECT_EQ(m.num_train_classes(), 12);
  EXPECT_EQ(m.entries().size(), 32u);
  std::set<int> used;
  for (const auto& e : m.entries()) used.insert(e.train_id);
  EXPECT_EQ(used.size(), 12u);
  std::map<std::string, int> by_name;
  for (const auto& e : m.entries()) by_name[e.name] = e.train_id;
  EXPECT_EQ(by_name["Void"], 0);
  EXPECT_EQ(by_name["Sky"], 1);
  EXPECT_EQ(by_name["Wall"], 2);
  EXPECT_EQ(by_name["LaneMkgsDriv"], 4);
  EXPECT_EQ(by_name["SUVPickupTruck"], 9);
  EXPECT_EQ(by_name["MotorcycleScooter"], 11);
  const auto& palette = camvid_palette();
  ASSERT_EQ(palette.size(), 32u);
  std::set<std::array<std::uint8_t, 3>> distinct(palette.begin(), palette.end());
  EXPECT_EQ(distinct.size(), 32u);
}

TEST(LabelTables, ParseRejectsBadTables) {
  EXPECT_THROW(LabelMap::parse("0,0,a\n0,1,b\n", {"bg", "x"}), std::invalid_argument);
  EXPECT_THROW(LabelMap::parse("0,2,a\n", {"bg", "x"}), std::invalid_argument);
  EXPECT_THROW(LabelMap::parse("0,0,a\n", {"bg", "x"}), std::invalid_argument);  // train id 1 unused
  EXPECT_THROW(LabelMap::parse("0,zero,a\n", {"bg", "x"}), std::invalid_argument);
  EXPECT_THROW(LabelMap::parse("0,1\n", {"bg", "x"}), std::invalid_argument);
}

TEST(Remap, EveryRawIdMatchesLookupOracle) {
  for (auto [file, map] : {std::pair{"cityscapes.csv", &cityscapes_labels()}, std::pair{"camvid.csv", &camvid_labels()}}) {
    const auto oracle = table_oracle(kLabels / file);
    std::vector<int> tile;
    for (int rep = 0; rep < 3; ++rep) {
      for (const auto& [raw, train] : oracle) tile.push_back(raw);
    }
    std::shuffle(tile.begin(), tile.end(), std::mt19937(5));
    const auto out = remap_labels(tile, *map);
    ASSERT_EQ(out.size(), tile.size());
    for (std::size_t i = 0; i < tile.size(); ++i) EXPECT_EQ(out[i], oracle.at(tile[i]));
  }
}

TEST(Remap, IdentityInTrainSpace) {
  std::string identity;
  std::vector<std::string> names;
  for (int t = 0; t < 20; ++t) {
    identity += std::to_string(t) + "," + std::to_string(t) + ",c" + std::to_string(t) + "\n";
    names.push_back("c" + std::to_string(t));
  }
  const LabelMap id = LabelMap::parse(identity, names);
  std::vector<int> raw(34);
  std::iota(raw.begin(), raw.end(), 0);
  const auto once = remap_labels(raw, cityscapes_labels());
  const std::vector<int> as_int(once.begin(), once.end());
  EXPECT_EQ(remap_labels(as_int, id), once);
}

TEST(Remap, UnknownRawIdThrows) {
  const std::vector<int> raw{7, 40};
  EXPECT_THROW(remap_labels(raw, cityscapes_labels()), std::out_of_range);
}

TEST(Remap, ColourLabelsDecodeThroughPalette) {
  Image8 label = solid_rgb(2, 2, 128, 128, 128);  // Sky
  label.pixels[3] = 128;
  label.pixels[4] = 64;
  label.pixels[5] = 128;  // Road
  const auto ids = raw_label_ids(label, camvid_palette());
  const auto train = remap_labels(ids, camvid_labels());
  EXPECT_EQ(train, (std::vector<std::int32_t>{1, 4, 1, 1}));
  label.pixels[0] = 1;
  EXPECT_THROW(raw_label_ids(label, camvid_palette()), std::invalid_argument);
  EXPECT_THROW(raw_label_ids(solid_rgb(1, 1, 0, 0, 0)), std::invalid_argument);
}

TEST(Preprocess, MeanColouredImageNormalizesToZero) {
  // 0.485 * 255 etc. are not integers; pick the nearest byte and bound the error.
  const Image8 image = solid_rgb(8, 16, 124, 116, 104);
  const Sample s = preprocess(image, gray(8, 16, 7), cityscapes_labels(), 4, 8);
  EXPECT_EQ(s.image.shape(), (Shape{1, 3, 4, 8}));
  for (float v : s.image.data()) EXPECT_NEAR(v, 0.0f, 0.01f);
  for (auto t : s.target.values) EXPECT_EQ(t, 1);
}

TEST(Preprocess, CityscapesSizeAndLabelRange) {
  std::mt19937 rng(3);
  Image8 image{64, 128, 3, std::vector<std::uint8_t>(64 * 128 * 3)};
  for (auto& p : image.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  Image8 label = gray(64, 128, 0);
  for (auto& p : label.pixels) p = static_cast<std::uint8_t>(rng() % 34);
  const Sample s = preprocess(image, label, cityscapes_labels(), 32, 64);
  EXPECT_EQ(s.image.shape(), (Shape{1, 3, 32, 64}));
  EXPECT_EQ(s.target.h, 32);
  EXPECT_EQ(s.target.w, 64);
  for (auto t : s.target.values) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, 20);
  }
}

TEST(Preprocess, NearestNeighbourNeverInventsClasses) {
  const int h = 30;
  const int w = 42;
  std::vector<std::int32_t> board(static_cast<std::size_t>(h * w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) board[static_cast<std::size_t>(y * w + x)] = ((y / 3 + x / 3) % 2) ? 5 : 11;
  }
  for (auto [oh, ow] : {std::pair{15, 21}, std::pair{7, 9}, std::pair{60, 84}, std::pair{1, 1}}) {
    const auto out = resize_nearest(board, h, w, oh, ow);
    ASSERT_EQ(out.size(), static_cast<std::size_t>(oh * ow));
    for (auto v : out) EXPECT_TRUE(v == 5 || v == 11);
  }
  // Exact halving picks the second pixel of each pair under half-pixel alignment.
  const std::vector<std::int32_t> row{0, 1, 2, 3};
  EXPECT_EQ(resize_nearest(row, 1, 4, 1, 2), (std::vector<std::int32_t>{1, 3}));
}

TEST(Preprocess, ImageNetDistributedNoiseNormalizesToStandard) {
  const int h = 256;
  const int w = 256;
  std::mt19937 rng(11);
  Image8 image{h, w, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w * 3))};
  for (int c = 0; c < 3; ++c) {
    std::normal_distribution<double> d(kImageNetMean[static_cast<std::size_t>(c)] * 255.0,
                                       kImageNetStd[static_cast<std::size_t>(c)] * 255.0);
    for (int i = 0; i < h * w; ++i) {
      image.pixels[static_cast<std::size_t>(3 * i + c)] = static_cast<std::uint8_t>(std::clamp(std::lround(d(rng)), 0L, 255L));
    }
  }
  const Sample s = preprocess(image, gray(h, w, 0), cityscapes_labels(), h, w);
  const auto data = s.image.data();
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    double sq = 0;
    for (int i = 0; i < h * w; ++i) {
      const double v = data[static_cast<std::size_t>(c * h * w + i)];
      mean += v;
      sq += v * v;
    }
    mean /= h * w;
    const double sd = std::sqrt(sq / (h * w) - mean * mean);
    EXPECT_NEAR(mean, 0.0, 0.05) << c;
    EXPECT_NEAR(sd, 1.0, 0.05) << c;
  }
}

TEST(Preprocess, RejectsMismatchedSizes) {
  EXPECT_THROW(preprocess(solid_rgb(4, 4, 0, 0, 0), gray(4, 5, 0), cityscapes_labels(), 4, 4), std::invalid_argument);
  EXPECT_THROW(preprocess(gray(4, 4, 0), gray(4, 4, 0), cityscapes_labels(), 4, 4), std::invalid_argument);
  EXPECT_THROW(preprocess(solid_rgb(4, 4, 0, 0, 0), gray(4, 4, 0), cityscapes_labels(), 0, 4), std::invalid_argument);
}

TEST(Split, PermutationMatchesPortableReference) {
  // Reference values from a separate implementation of the same generator
  // and shuffle.
  EXPECT_EQ(Rng(42).next(), 1546998764402558742ull);
  EXPECT_EQ(seeded_permutation(10, 42), (std::vector<std::size_t>{7, 3, 8, 9, 5, 6, 4, 1, 0, 2}));
  const auto p = seeded_permutation(2975, 42);
  EXPECT_EQ(std::vector<std::size_t>(p.begin(), p.begin() + 8),
            (std::vector<std::size_t>{419, 2510, 2802, 932, 1561, 118, 795, 1188}));
  EXPECT_EQ(std::accumulate(p.begin(), p.begin() + 92, std::size_t{0}), 128891u);
  const auto q = seeded_permutation(367, 42);
  EXPECT_EQ(std::vector<std::size_t>(q.begin(), q.begin() + 8),
            (std::vector<std::size_t>{160, 354, 72, 59, 213, 86, 75, 241}));
}

TEST(Split, CityscapesNestedSubsets) {
  const std::vector<std::size_t> sizes{1487, 743, 371, 185, 92};
  const auto subsets = seeded_split(2975, sizes, 42);
  ASSERT_EQ(subsets.size(), 5u);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    EXPECT_EQ(subsets[i].size(), sizes[i]);
    EXPECT_EQ(std::set<std::size_t>(subsets[i].begin(), subsets[i].end()).size(), sizes[i]);
    if (i > 0) {
      const std::set<std::size_t> outer(subsets[i - 1].begin(), subsets[i - 1].end());
      for (auto v : subsets[i]) EXPECT_TRUE(outer.contains(v));
    }
  }
  EXPECT_EQ(seeded_split(2975, sizes, 42), subsets);
  EXPECT_NE(seeded_split(2975, sizes, 43), subsets);
}

TEST(Split, CamvidSubsets) {
  const std::vector<std::size_t> sizes{183, 91};
  const auto subsets = seeded_split(367, sizes, 42);
  EXPECT_EQ(subsets[0].size(), 183u);
  EXPECT_EQ(subsets[1].size(), 91u);
}

TEST(Split, DisjointModeAndOversubscription) {
  const std::vector<std::size_t> sizes{50, 30, 20};
  const auto subsets = seeded_split(100, sizes, 42, SplitMode::kDisjoint);
  std::set<std::size_t> all;
  for (const auto& s : subsets) all.insert(s.begin(), s.end());
  EXPECT_EQ(all.size(), 100u);
  const std::vector<std::size_t> too_many{60, 50};
  EXPECT_THROW(seeded_split(100, too_many, 42, SplitMode::kDisjoint), std::invalid_argument);
  EXPECT_NO_THROW(seeded_split(100, too_many, 42, SplitMode::kNested));
  const std::vector<std::size_t> too_big{101};
  EXPECT_THROW(seeded_split(100, too_big, 42), std::invalid_argument);
}

TEST(Png, RoundTripGrayAndRgb) {
  TempDir dir;
  Image8 rgb{3, 5, 3, {}};
  for (int i = 0; i < 45; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 5));
  write_png(dir.path() / "rgb.png", rgb);
  const Image8 back = read_png(dir.path() / "rgb.png");
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.pixels, rgb.pixels);
  const Image8 g = gray(4, 2, 33);
  write_png(dir.path() / "g.png", g);
  EXPECT_EQ(read_png(dir.path() / "g.png").pixels, g.pixels);
  std::ofstream(dir.path() / "bad.png") << "not a png";
  EXPECT_THROW(read_png(dir.path() / "bad.png"), std::runtime_error);
  EXPECT_THROW(read_png(dir.path() / "missing.png"), std::runtime_error);
}

TEST(Scan, CityscapesLayout) {
  TempDir dir;
  const fs::path root = dir.path();
  for (const auto& [city, id] : std::vector<std::pair<std::string, std::string>>{
           {"bremen", "bremen_000000_000019"}, {"aachen", "aachen_000001_000019"}, {"aachen", "aachen_000000_000019"}}) {
    touch_png(root / "leftImg8bit" / "val" / city / (id + "_leftImg8bit.png"), solid_rgb(4, 8, 1, 2, 3));
    touch_png(root / "gtFine" / "val" / city / (id + "_gtFine_labelIds.png"), gray(4, 8, 7));
    touch_png(root / "gtFine" / "val" / city / (id + "_gtFine_color.png"), solid_rgb(4, 8, 0, 0, 0));
  }
  const auto pairs = scan_dataset(root, DatasetKind::kCityscapes, "val");
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(relative_path(pairs[0].image, root), "leftImg8bit/val/aachen/aachen_000000_000019_leftImg8bit.png");
  EXPECT_EQ(relative_path(pairs[0].label, root), "gtFine/val/aachen/aachen_000000_000019_gtFine_labelIds.png");
  EXPECT_EQ(relative_path(pairs[2].image, root), "leftImg8bit/val/bremen/bremen_000000_000019_leftImg8bit.png");

  PngSource source(pairs, DatasetKind::kCityscapes, 2, 4);
  const Sample s = source.load(1);
  EXPECT_EQ(s.image.shape(), (Shape{1, 3, 2, 4}));
  for (auto t : s.target.values) EXPECT_EQ(t, 1);

  fs::remove(root / "gtFine" / "val" / "bremen" / "bremen_000000_000019_gtFine_labelIds.png");
  EXPECT_THROW(scan_dataset(root, DatasetKind::kCityscapes, "val"), std::runtime_error);
  touch_png(root / "gtFine" / "val" / "bremen" / "bremen_000000_000019_gtFine_labelIds.png", gray(4, 8, 7));
  touch_png(root / "gtFine" / "val" / "bremen" / "bremen_000009_000019_gtFine_labelIds.png", gray(4, 8, 7));
  EXPECT_THROW(scan_dataset(root, DatasetKind::kCityscapes, "val"), std::runtime_error);
  EXPECT_THROW(scan_dataset(root, DatasetKind::kCityscapes, "test"), std::runtime_error);
}

TEST(Scan, CamvidLayouts) {
  TempDir dir;
  const fs::path root = dir.path();
  for (const std::string name : {"0001TP_006690", "0001TP_006720"}) {
    touch_png(root / "train" / (name + ".png"), solid_rgb(4, 4, 9, 9, 9));
    touch_png(root / "train_labels" / (name + "_L.png"), solid_rgb(4, 4, 128, 64, 128));
    touch_png(root / "val" / (name + ".png"), solid_rgb(4, 4, 9, 9, 9));
    touch_png(root / "valannot" / (name + ".png"), gray(4, 4, 17));
  }
  const auto train = scan_dataset(root, DatasetKind::kCamvid, "train");
  ASSERT_EQ(train.size(), 2u);
  EXPECT_EQ(relative_path(train[1].label, root), "train_labels/0001TP_006720_L.png");
  const auto val = scan_dataset(root, DatasetKind::kCamvid, "val");
  ASSERT_EQ(val.size(), 2u);
  EXPECT_EQ(relative_path(val[0].label, root), "valannot/0001TP_006690.png");

  PngSource colour(train, DatasetKind::kCamvid, 4, 4);
  for (auto t : colour.load(0).target.values) EXPECT_EQ(t, 4);
  PngSource indexed(val, DatasetKind::kCamvid, 4, 4);
  for (auto t : indexed.load(0).target.values) EXPECT_EQ(t, 4);

  fs::create_directories(root / "test");
  fs::create_directories(root / "test_labels");
  EXPECT_THROW(scan_dataset(root, DatasetKind::kCamvid, "test"), std::runtime_error);
  EXPECT_THROW(scan_dataset(root / "nope", DatasetKind::kCamvid, "train"), std::runtime_error);
}

TEST(Scan, SelectSubsetByRelativePath) {
  TempDir dir;
  const fs::path root = dir.path();
  for (const std::string name : {"a", "b", "c"}) {
    touch_png(root / "train" / (name + ".png"), solid_rgb(2, 2, 0, 0, 0));
    touch_png(root / "trainannot" / (name + ".png"), gray(2, 2, 0));
  }
  const auto pairs = scan_dataset(root, DatasetKind::kCamvid, "train");
  std::ofstream(root / "subset.txt") << "train/c.png\ntrain/a.png\n";
  const auto subset = select_subset(pairs, root, root / "subset.txt");
  ASSERT_EQ(subset.size(), 2u);
  EXPECT_EQ(subset[0].image.filename(), "c.png");
  std::ofstream(root / "bad.txt") << "train/z.png\n";
  EXPECT_THROW(select_subset(pairs, root, root / "bad.txt"), std::runtime_error);
}

TEST(Sources, InMemoryValidatesSamples) {
  Sample ok{Tensor::zeros({1, 3, 2, 2}), ClassIndexMap::zeros(1, 2, 2), {}, {}};
  EXPECT_NO_THROW(InMemorySource({ok}, 3));
  Sample bad = ok;
  bad.target = ClassIndexMap::zeros(1, 2, 2);
  bad.target.values[0] = 3;
  EXPECT_THROW(InMemorySource({bad}, 3), std::invalid_argument);
}

TEST(Dataset, KindNames) {
  EXPECT_EQ(parse_dataset_kind("CityScapes"), DatasetKind::kCityscapes);
  EXPECT_EQ(parse_dataset_kind("camvid"), DatasetKind::kCamvid);
  EXPECT_THROW(parse_dataset_kind("ade20k"), std::invalid_argument);
}
