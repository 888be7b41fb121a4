#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ikshana/analyzer.hpp"
#include "ikshana/harness.hpp"

namespace fs = std::filesystem;

namespace ikshana {

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Best validation mIoU recorded in a metrics.csv.
double best_miou(const fs::path& metrics) {
  std::istringstream in(read_text(metrics));
  std::string line;
  std::getline(in, line);
  if (line != "epoch,train_loss,val_loss,val_miou,lr") throw std::runtime_error(metrics.string() + ": unexpected header");
  double best = std::nan("");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    for (int i = 0; i < 4 && std::getline(row, cell, ','); ++i) {
    }
    const double v = std::stod(cell);
    if (std::isnan(best) || v > best) best = v;
  }
  return best;
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string merge_reports(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("report: no run directories");
  struct Row {
    std::map<std::string, double> miou;  // subset -> percent
    double mparams = 0.0;
    double gflops = 0.0;
  };
  std::vector<std::string> subsets;
  std::vector<std::string> archs;
  std::map<std::string, Row> rows;
  for (const auto& dir : run_dirs) {
    const TrainConfig config = parse_key_values(read_text(dir / "config.txt"));
    const std::string arch = canonical_preset_name(config.arch);
    const std::string subset = config.subset.empty() ? "full" : fs::path(config.subset).stem().string();
    const int classes = label_map(parse_dataset_kind(config.dataset)).num_train_classes();
    const LayerGraph graph = build_graph(preset(arch, classes));
    if (std::find(subsets.begin(), subsets.end(), subset) == subsets.end()) subsets.push_back(subset);
    if (!rows.contains(arch)) archs.push_back(arch);
    Row& row = rows[arch];
    row.miou[subset] = 100.0 * best_miou(dir / "metrics.csv");
    row.mparams = static_cast<double>(count_params(graph)) / 1e6;
    row.gflops = static_cast<double>(count_macs(graph, {1, 3, config.height, config.width})) / 1e9;
  }
  std::ostringstream out;
  out << "Method";
  for (const auto& s : subsets) out << ',' << s;
  out << ",Average,Param(M),GFLOPs\n";
  for (const auto& arch : archs) {
    const Row& row = rows[arch];
    out << arch;
    double sum = 0.0;
    int n = 0;
    for (const auto& s : subsets) {
      out << ',';
      auto it = row.miou.find(s);
      if (it != row.miou.end() && !std::isnan(it->second)) {
        out << fixed(it->second, 2);
        sum += it->second;
        ++n;
      }
    }
    out << ',' << (n > 0 ? fixed(sum / n, 2) : "") << ',' << fixed(row.mparams, 3) << ',' << fixed(row.gflops, 2)
        << '\n';
  }
  return out.str();
}

}  // namespace ikshana
