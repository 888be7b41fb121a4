#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ikshana/arch.hpp"
#include "ikshana/dataio.hpp"
#include "ikshana/optim.hpp"
#include "ikshana/rng.hpp"

namespace ikshana {

struct TrainConfig {
  std::string arch = "main";
  std::string dataset = "cityscapes";
  std::string data_root;
  std::string train_fold = "train";
  std::string val_fold = "val";
  std::string subset;  // optional subset file (root-relative image paths)
  int height = 512;
  int width = 1024;
  int epochs = 180;
  int batch_size = 2;
  double lr = 1e-6;
  double momentum = 0.7;
  double lr_factor = 0.5;
  int patience = 20;
  double threshold = 1e-4;
  std::string monitor = "val_loss";  // or val_miou
  std::uint64_t seed = 42;
  int threads = 0;  // 0 leaves the OpenMP default
  std::string output_dir = "runs/default";

  bool operator==(const TrainConfig&) const = default;
};

/// Throws std::invalid_argument for non-positive counts, unknown presets,
/// datasets or monitors.
void validate(const TrainConfig& config);

/// Flat key=value text, one line per field, in declaration order.
std::string to_key_values(const TrainConfig& config);
/// Inverse of to_key_values (keys may also use the dashed flag spelling);
/// unknown keys throw std::invalid_argument,
/// missing keys keep their defaults.
TrainConfig parse_key_values(std::string_view text);

/// Counts indexed (truth, prediction).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  void add(const ClassIndexMap& truth, const ClassIndexMap& prediction);
  void add(int truth, int prediction, std::uint64_t count = 1);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return k_; }
  std::uint64_t count(int truth, int prediction) const;
  std::uint64_t total() const;

  /// TP / (TP + FP + FN) per class; empty when the class appears in neither
  /// truth nor prediction.
  std::vector<std::optional<double>> class_iou() const;
  /// Mean over classes first_class..K-1 with a defined IoU; NaN if none.
  double mean_iou(int first_class = 1) const;
  double pixel_accuracy() const;

 private:
  int k_;
  std::vector<std::uint64_t> counts_;
};

/// Thrown by load_checkpoint with the reason it rejected a file.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersion, kTruncated, kArchMismatch, kCorrupt };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_miou = 0.0;
  double lr = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

/// Everything needed to resume training bit for bit.
struct Checkpoint {
  std::string arch;
  int num_classes = 0;
  int epoch = 0;  // completed epochs
  ParamSet params;
  SchedulerState scheduler;
  Rng::State rng{};
  double best_miou = -1.0;
  int best_epoch = 0;
  std::vector<EpochMetrics> history;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary, little-endian: magic "IKSHCKPT", version, header fields, then
/// per parameter name/role/shape/float32 values/float32 velocity, then
/// buffers, then the metric history and an end marker. Written through a
/// temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws CheckpointError. When `expected_arch` is given, a different preset
/// is rejected with Kind::kArchMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::string> expected_arch = {});

/// Fresh training state for `network`.
Checkpoint initial_checkpoint(const Network& network, const TrainConfig& config);

/// Rebuilds the network stored in a checkpoint.
Network restore_network(const Checkpoint& checkpoint);

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

/// Stacks samples into one (n, 3, h, w) batch and its targets.
std::pair<Tensor, ClassIndexMap> make_batch(const SampleSource& source, std::span<const std::size_t> indices);

struct EvalResult {
  ConfusionMatrix confusion{2};
  double loss = 0.0;
  double miou = 0.0;
  double pixel_accuracy = 0.0;
};

/// Eval-mode pass over every sample. Throws std::invalid_argument for an
/// empty source or a class-count mismatch.
EvalResult evaluate(const Network& network, const SampleSource& source, int batch_size = 1);

struct TrainResult {
  Checkpoint last;
  std::filesystem::path last_path;
  std::filesystem::path best_path;
};

/// Trains until config.epochs epochs are complete, continuing from `resume`
/// (or from initialization). Each
/// epoch shuffles the training indices with the checkpointed generator,
/// steps SGD with Nesterov momentum on every batch (the last batch may be
/// short), evaluates on `val`, then feeds the monitored value to the plateau
/// scheduler. Writes metrics.csv, last.ckpt, best.ckpt (by validation mIoU)
/// and config.txt into config.output_dir. best.ckpt is only rewritten on
/// improvement, so resume into the directory that holds it. Throws
/// std::runtime_error on a non-finite loss.
TrainResult train(const TrainConfig& config, const SampleSource& train_set, const SampleSource& val_set,
                  const std::optional<Checkpoint>& resume = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// epoch,train_loss,val_loss,val_miou,lr
std::string metrics_csv(const std::vector<EpochMetrics>& history);

/// Method,<content class names...>,Average with IoU in percent; classes
/// without a defined IoU are left blank.
std::string class_iou_csv(const std::string& method, const LabelMap& labels, const ConfusionMatrix& confusion);

/// Summary of several run directories: one row per architecture, one
/// column per subset (best validation mIoU in percent), their average, and
/// the parameter count and GFLOPs at each run's resolution.
std::string merge_reports(const std::vector<std::filesystem::path>& run_dirs);

/// Shortest round-trip decimal form, so written metrics are reproducible.
std::string format_double(double value);

/// Sets the OpenMP thread count when `threads` > 0.
void set_thread_count(int threads);

}  // namespace ikshana
