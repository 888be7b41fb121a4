#include "ikshana/analyzer.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace ikshana {

namespace {

void check_input(const LayerGraph& graph, Shape input) {
  if (input.n < 1 || input.c != 3) {
    throw std::invalid_argument("analyzer input must be (n >= 1, 3, h, w), got " + input.str());
  }
  const std::int64_t divisor = std::int64_t{1} << graph.max_level;
  if (input.h <= 0 || input.w <= 0 || input.h % divisor != 0 || input.w % divisor != 0) {
    throw std::invalid_argument("resolution " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                                " is not divisible by " + std::to_string(divisor));
  }
}

std::int64_t node_params(const LayerNode& n) {
  switch (n.kind) {
    case LayerKind::kConv:
      return n.kernel * n.kernel * n.in_channels * n.out_channels + (n.bias ? n.out_channels : 0);
    case LayerKind::kBatchNorm:
      return 2 * n.out_channels;
    default:
      return 0;
  }
}

std::int64_t node_macs(const LayerNode& n, Shape input) {
  const std::int64_t outputs = input.n * n.out_channels * (input.h >> n.level) * (input.w >> n.level);
  switch (n.kind) {
    case LayerKind::kConv:
      return outputs * (n.kernel * n.kernel * n.in_channels + (n.bias ? 1 : 0));
    case LayerKind::kBatchNorm:
    case LayerKind::kReLU:
      return outputs;
    case LayerKind::kAvgPool:
    case LayerKind::kResize:
      return 4 * outputs;
    default:
      return 0;
  }
}

bool has_cost(LayerKind kind) {
  return kind != LayerKind::kInput && kind != LayerKind::kConcat && kind != LayerKind::kSlice;
}

std::int64_t parse_int(std::string_view field, std::size_t line) {
  std::int64_t value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::runtime_error("report line " + std::to_string(line) + ": bad integer '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::int64_t CostReport::total_params() const {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.params;
  return t;
}

std::int64_t CostReport::total_macs() const {
  std::int64_t t = 0;
  for (const auto& r : rows) t += r.macs;
  return t;
}

std::int64_t CostReport::elementwise_macs() const {
  std::int64_t t = 0;
  for (const auto& r : rows) {
    if (r.kind != "conv") t += r.macs;
  }
  return t;
}

std::int64_t count_params(const LayerGraph& graph) {
  std::int64_t total = 0;
  for (const auto& n : graph.nodes) total += node_params(n);
  return total;
}

std::int64_t count_macs(const LayerGraph& graph, Shape input) {
  check_input(graph, input);
  std::int64_t total = 0;
  for (const auto& n : graph.nodes) total += node_macs(n, input);
  return total;
}

CostReport analyze(const LayerGraph& graph, Shape input, std::string arch) {
  check_input(graph, input);
  CostReport report;
  report.arch = std::move(arch);
  report.input = input;
  for (const auto& n : graph.nodes) {
    if (!has_cost(n.kind)) continue;
    report.rows.push_back({n.name, std::string(to_string(n.kind)), node_params(n), node_macs(n, input)});
  }
  return report;
}

std::string emit_report(const CostReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kCsv) {
    out << "layer,params,macs\n";
    for (const auto& r : report.rows) out << r.layer << ',' << r.params << ',' << r.macs << '\n';
    out << "total," << report.total_params() << ',' << report.total_macs() << '\n';
    return out.str();
  }

  std::size_t width = 5;
  for (const auto& r : report.rows) width = std::max(width, r.layer.size());
  char line[256];
  auto row = [&](const std::string& name, const std::string& params, const std::string& macs) {
    std::snprintf(line, sizeof line, "%-*s  %12s  %16s\n", static_cast<int>(width), name.c_str(), params.c_str(),
                  macs.c_str());
    out << line;
  };
  if (!report.arch.empty()) out << "arch " << report.arch << '\n';
  out << "input " << report.input.str() << "\n\n";
  row("layer", "params", "macs");
  for (const auto& r : report.rows) row(r.layer, std::to_string(r.params), std::to_string(r.macs));
  row("total", std::to_string(report.total_params()), std::to_string(report.total_macs()));
  std::snprintf(line, sizeof line, "\nparams %.3f M, %.2f GFLOPs (1 MAC = 1 FLOP; elementwise ops %.2f G)\n",
                static_cast<double>(report.total_params()) / 1e6, static_cast<double>(report.total_macs()) / 1e9,
                static_cast<double>(report.elementwise_macs()) / 1e9);
  out << line;
  return out.str();
}

CostReport parse_csv_report(std::string_view csv) {
  CostReport report;
  std::istringstream in{std::string(csv)};
  std::string text;
  std::size_t line_no = 0;
  bool saw_total = false;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    if (line_no == 1) {
      if (text != "layer,params,macs") throw std::runtime_error("report header must be layer,params,macs");
      continue;
    }
    if (saw_total) throw std::runtime_error("report has rows after the totals row");
    const auto c1 = text.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : text.find(',', c1 + 1);
    if (c2 == std::string::npos || text.find(',', c2 + 1) != std::string::npos) {
      throw std::runtime_error("report line " + std::to_string(line_no) + " needs three fields");
    }
    const std::string_view view(text);
    const std::string name(view.substr(0, c1));
    const auto params = parse_int(view.substr(c1 + 1, c2 - c1 - 1), line_no);
    const auto macs = parse_int(view.substr(c2 + 1), line_no);
    if (name == "total") {
      saw_total = true;
      total_params = params;
      total_macs = macs;
    } else {
      report.rows.push_back({name, {}, params, macs});
    }
  }
  if (!saw_total) throw std::runtime_error("report has no totals row");
  if (total_params != report.total_params() || total_macs != report.total_macs()) {
    throw std::runtime_error("report totals do not match its rows");
  }
  return report;
}

}  // namespace ikshana
