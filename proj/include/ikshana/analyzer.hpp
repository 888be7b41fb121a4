#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ikshana/arch.hpp"

namespace ikshana {

struct CostRow {
  std::string layer;
  std::string kind;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

/// Per-layer parameter and multiply-accumulate counts at one input size.
/// Concatenation, slicing and the input node cost nothing and get no row.
struct CostReport {
  std::string arch;
  Shape input{};
  std::vector<CostRow> rows;

  std::int64_t total_params() const;
  std::int64_t total_macs() const;
  /// MACs spent outside convolutions (batchnorm, relu, pooling, resizing).
  std::int64_t elementwise_macs() const;
};

/// Trainable scalars: conv weights and biases, batchnorm gamma and beta.
std::int64_t count_params(const LayerGraph& graph);

/// Conv: k*k*c_in*c_out per output pixel plus one per output for a bias.
/// Batchnorm and relu: one per element. Pooling and bilinear resizing: four
/// per output element. One MAC is reported as one FLOP.
/// Throws std::invalid_argument when `input` is not a legal network input.
std::int64_t count_macs(const LayerGraph& graph, Shape input);

CostReport analyze(const LayerGraph& graph, Shape input, std::string arch = {});

enum class ReportFormat { kTable, kCsv };

/// Columns layer, params, macs; the totals row ("total") comes last.
std::string emit_report(const CostReport& report, ReportFormat format);

/// Reads back a CSV produced by emit_report. The totals row is checked
/// against the sum of the layer rows; throws std::runtime_error otherwise.
CostReport parse_csv_report(std::string_view csv);

}  // namespace ikshana
