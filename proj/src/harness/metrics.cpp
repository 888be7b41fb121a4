#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ikshana/harness.hpp"

namespace ikshana {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
  if (num_classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
}

void ConfusionMatrix::add(int truth, int prediction, std::uint64_t count) {
  if (truth < 0 || truth >= k_ || prediction < 0 || prediction >= k_) {
    throw std::out_of_range("class index outside the confusion matrix");
  }
  counts_[static_cast<std::size_t>(truth) * k_ + prediction] += count;
}

void ConfusionMatrix::add(const ClassIndexMap& truth, const ClassIndexMap& prediction) {
  if (truth.n != prediction.n || truth.h != prediction.h || truth.w != prediction.w) {
    throw std::invalid_argument("truth and prediction maps differ in shape");
  }
  for (std::size_t i = 0; i < truth.values.size(); ++i) add(truth.values[i], prediction.values[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::count(int truth, int prediction) const {
  return counts_.at(static_cast<std::size_t>(truth) * k_ + prediction);
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::vector<std::optional<double>> ConfusionMatrix::class_iou() const {
  std::vector<std::optional<double>> iou(static_cast<std::size_t>(k_));
  for (int c = 0; c < k_; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int j = 0; j < k_; ++j) {
      row += count(c, j);
      col += count(j, c);
    }
    const std::uint64_t tp = count(c, c);
    const std::uint64_t denom = row + col - tp;  // TP + FN + FP
    if (denom > 0) iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return iou;
}

double ConfusionMatrix::mean_iou(int first_class) const {
  const auto iou = class_iou();
  double sum = 0.0;
  int defined = 0;
  for (int c = first_class; c < k_; ++c) {
    if (iou[static_cast<std::size_t>(c)]) {
      sum += *iou[static_cast<std::size_t>(c)];
      ++defined;
    }
  }
  return defined == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / defined;
}

double ConfusionMatrix::pixel_accuracy() const {
  std::uint64_t correct = 0;
  for (int c = 0; c < k_; ++c) correct += count(c, c);
  const auto t = total();
  return t == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(correct) / static_cast<double>(t);
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_miou,lr\n";
  for (const auto& m : history) {
    out << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.val_loss) << ','
        << format_double(m.val_miou) << ',' << format_double(m.lr) << '\n';
  }
  return out.str();
}

std::string class_iou_csv(const std::string& method, const LabelMap& labels, const ConfusionMatrix& confusion) {
  if (confusion.num_classes() != labels.num_train_classes()) {
    throw std::invalid_argument("confusion matrix and label map disagree on the class count");
  }
  std::ostringstream out;
  out << "Method";
  for (int c = 1; c < labels.num_train_classes(); ++c) out << ',' << labels.class_names()[static_cast<std::size_t>(c)];
  out << ",Average\n" << method;
  char buf[32];
  const auto iou = confusion.class_iou();
  for (int c = 1; c < labels.num_train_classes(); ++c) {
    out << ',';
    if (const auto& v = iou[static_cast<std::size_t>(c)]) {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
      out << buf;
    }
  }
  const double miou = confusion.mean_iou();
  out << ',';
  if (!std::isnan(miou)) {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * miou);
    out << buf;
  }
  out << '\n';
  return out.str();
}

}  // namespace ikshana
