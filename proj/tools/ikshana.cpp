// Command-line front end: analyze, split, train, eval, report.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "ikshana/analyzer.hpp"
#include "ikshana/harness.hpp"

namespace fs = std::filesystem;
using namespace ikshana;

namespace {

std::pair<int, int> parse_resolution(const std::string& text) {
  const auto x = text.find_first_of("xX");
  int h = 0;
  int w = 0;
  auto parse = [&](std::string_view s, int& v) {
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc{} && end == s.data() + s.size() && v > 0;
  };
  if (x == std::string::npos || !parse(std::string_view(text).substr(0, x), h) ||
      !parse(std::string_view(text).substr(x + 1), w)) {
    throw std::invalid_argument("resolution must look like HxW, got '" + text + "'");
  }
  return {h, w};
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Writes to `path`, or stdout when it is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

// Training images in the standard folds, used when split runs without a root.
std::size_t default_fold_size(DatasetKind kind, const std::string& fold) {
  if (kind == DatasetKind::kCityscapes) {
    if (fold == "train") return 2975;
    if (fold == "val") return 500;
  } else {
    if (fold == "train") return 367;
    if (fold == "val") return 101;
    if (fold == "test") return 233;
  }
  throw std::invalid_argument("no default size for fold '" + fold + "'; pass --count or --root");
}

struct AnalyzeArgs {
  std::string arch = "main";
  std::string res = "512x1024";
  std::string format = "table";
  int classes = 20;
  std::string out;
};

int run_analyze(const AnalyzeArgs& a) {
  const auto [h, w] = parse_resolution(a.res);
  const ArchSpec spec = preset(a.arch, a.classes);
  const CostReport report = analyze(build_graph(spec), {1, 3, h, w}, spec.name);
  emit(a.out, emit_report(report, a.format == "csv" ? ReportFormat::kCsv : ReportFormat::kTable));
  return 0;
}

struct SplitArgs {
  std::string dataset = "cityscapes";
  std::string root;
  std::string fold = "train";
  std::size_t count = 0;
  std::vector<std::size_t> sizes;
  std::uint64_t seed = 42;
  bool disjoint = false;
  std::string out = ".";
};

int run_split(const SplitArgs& a) {
  const DatasetKind kind = parse_dataset_kind(a.dataset);
  std::vector<SamplePaths> pairs;
  std::size_t n = a.count;
  if (!a.root.empty()) {
    pairs = scan_dataset(a.root, kind, a.fold);
    if (n != 0 && n != pairs.size()) {
      throw std::invalid_argument("--count " + std::to_string(n) + " disagrees with " +
                                  std::to_string(pairs.size()) + " images under --root");
    }
    n = pairs.size();
  } else if (n == 0) {
    n = default_fold_size(kind, a.fold);
  }
  if (std::set<std::size_t>(a.sizes.begin(), a.sizes.end()).size() != a.sizes.size()) {
    throw std::invalid_argument("--sizes must not repeat a size");
  }
  const auto subsets = seeded_split(n, a.sizes, a.seed, a.disjoint ? SplitMode::kDisjoint : SplitMode::kNested);
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    std::ostringstream text;
    for (std::size_t idx : subsets[i]) {
      if (pairs.empty()) {
        text << idx << '\n';
      } else {
        text << relative_path(pairs[idx].image, a.root) << '\n';
      }
    }
    const fs::path file = fs::path(a.out) / ("T" + std::to_string(a.sizes[i]) + ".txt");
    write_file(file, text.str());
    std::cout << file.string() << ' ' << subsets[i].size() << '\n';
  }
  return 0;
}

struct TrainArgs {
  std::string config_file;
  std::string resume;
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  std::map<std::string, std::string> values;
};

// One --flag per config key, so the flag set always mirrors the config file.
void add_config_flags(CLI::App& cmd, TrainArgs& a) {
  std::istringstream defaults(to_key_values(TrainConfig{}));
  std::string line;
  while (std::getline(defaults, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    std::string& slot = a.values[key];
    a.flags.emplace_back(key, cmd.add_option("--" + flag, slot, "default: " + line.substr(eq + 1)));
  }
}

TrainConfig resolve_config(const TrainArgs& a) {
  std::string text;
  if (!a.config_file.empty()) text = read_file(a.config_file) + "\n";
  for (const auto& [key, opt] : a.flags) {
    if (opt->count() > 0) text += key + "=" + a.values.at(key) + "\n";
  }
  TrainConfig config = parse_key_values(text);
  validate(config);
  return config;
}

int run_train(const TrainArgs& a) {
  const TrainConfig config = resolve_config(a);
  if (config.data_root.empty()) throw std::invalid_argument("train: --data-root is required");
  const DatasetKind kind = parse_dataset_kind(config.dataset);
  auto train_pairs = scan_dataset(config.data_root, kind, config.train_fold);
  if (!config.subset.empty()) train_pairs = select_subset(train_pairs, config.data_root, config.subset);
  const PngSource train_set(std::move(train_pairs), kind, config.height, config.width);
  const PngSource val_set(scan_dataset(config.data_root, kind, config.val_fold), kind, config.height, config.width);

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume, canonical_preset_name(config.arch));
    // Resuming into a new directory: carry the best checkpoint along, since
    // later epochs only rewrite it when they improve on it.
    const fs::path best = fs::path(a.resume).parent_path() / "best.ckpt";
    const fs::path target = fs::path(config.output_dir) / "best.ckpt";
    if (fs::exists(best) && !fs::exists(target)) {
      fs::create_directories(config.output_dir);
      fs::copy_file(best, target);
    }
  }

  std::cerr << "train: " << train_set.size() << " images, val: " << val_set.size() << " images, output "
            << config.output_dir << '\n';
  const TrainResult result = train(config, train_set, val_set, resume, [](const EpochMetrics& m) {
    std::cout << "epoch " << m.epoch << " train_loss " << format_double(m.train_loss) << " val_loss "
              << format_double(m.val_loss) << " val_miou " << format_double(m.val_miou) << " lr "
              << format_double(m.lr) << std::endl;
  });
  std::cout << "best mIoU " << format_double(result.last.best_miou) << " at epoch " << result.last.best_epoch
            << '\n';
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset = "cityscapes";
  std::string root;
  std::string fold = "val";
  std::string subset;
  std::string res = "512x1024";
  int batch = 1;
  int threads = 0;
  std::string method;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  set_thread_count(a.threads);
  const auto [h, w] = parse_resolution(a.res);
  const DatasetKind kind = parse_dataset_kind(a.dataset);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const LabelMap& labels = label_map(kind);
  if (ckpt.num_classes != labels.num_train_classes()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(ckpt.num_classes) + " classes, " + a.dataset +
                                " has " + std::to_string(labels.num_train_classes()));
  }
  auto pairs = scan_dataset(a.root, kind, a.fold);
  if (!a.subset.empty()) pairs = select_subset(pairs, a.root, a.subset);
  const PngSource source(std::move(pairs), kind, h, w);
  const EvalResult result = evaluate(restore_network(ckpt), source, a.batch);
  emit(a.out, class_iou_csv(a.method.empty() ? ckpt.arch : a.method, labels, result.confusion));
  std::cerr << "images " << source.size() << " loss " << format_double(result.loss) << " mIoU "
            << format_double(result.miou) << " pixel accuracy " << format_double(result.pixel_accuracy) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IkshanaNet semantic segmentation: cost analysis, data splits, training and evaluation"};
  app.require_subcommand(1);

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Per-layer parameter and MAC report");
  analyze_cmd->add_option("--arch", analyze_args.arch, "main|3g|6g|12g|1s6g|2s3g|3s2g")->capture_default_str();
  analyze_cmd->add_option("--res", analyze_args.res, "input resolution HxW")->capture_default_str();
  analyze_cmd->add_option("--format", analyze_args.format)
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();
  analyze_cmd->add_option("--classes", analyze_args.classes, "output classes including void")
      ->check(CLI::Range(2, 1 << 16))
      ->capture_default_str();
  analyze_cmd->add_option("--out", analyze_args.out, "write here instead of stdout");

  SplitArgs split_args;
  auto* split_cmd = app.add_subcommand("split", "Seeded training subsets, one T<size>.txt per size");
  split_cmd->add_option("--dataset", split_args.dataset, "cityscapes|camvid")->capture_default_str();
  split_cmd->add_option("--root", split_args.root, "dataset root; without it the files hold indices");
  split_cmd->add_option("--fold", split_args.fold)->capture_default_str();
  split_cmd->add_option("--count", split_args.count, "images in the fold when there is no --root");
  split_cmd->add_option("--sizes", split_args.sizes, "comma-separated subset sizes")->delimiter(',')->required();
  split_cmd->add_option("--seed", split_args.seed)->capture_default_str();
  split_cmd->add_flag("--disjoint", split_args.disjoint, "non-overlapping subsets instead of nested prefixes");
  split_cmd->add_option("--out", split_args.out, "output directory")->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a preset; flags override --config");
  train_cmd->add_option("--config", train_args.config_file, "key=value file with the same keys as the flags")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train_args.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  add_config_flags(*train_cmd, train_args);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Class IoU of a checkpoint on one fold");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--dataset", eval_args.dataset)->capture_default_str();
  eval_cmd->add_option("--root", eval_args.root)->required();
  eval_cmd->add_option("--fold", eval_args.fold)->capture_default_str();
  eval_cmd->add_option("--subset", eval_args.subset, "subset file restricting the fold");
  eval_cmd->add_option("--res", eval_args.res, "input resolution HxW")->capture_default_str();
  eval_cmd->add_option("--batch", eval_args.batch)->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--threads", eval_args.threads)->capture_default_str();
  eval_cmd->add_option("--method", eval_args.method, "row label, defaults to the preset name");
  eval_cmd->add_option("--out", eval_args.out, "CSV path instead of stdout");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "Merge run directories into one summary CSV");
  report_cmd->add_option("runs", report_dirs, "run directories (config.txt + metrics.csv)")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_out, "CSV path instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*analyze_cmd) return run_analyze(analyze_args);
    if (*split_cmd) return run_split(split_args);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*report_cmd) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      emit(report_out, merge_reports(dirs));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
