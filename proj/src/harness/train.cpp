#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include "ikshana/harness.hpp"
#include "ikshana/tape.hpp"

namespace fs = std::filesystem;

namespace ikshana {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field field(const char* key, T TrainConfig::*member) {
  Field f{key, {}, {}};
  f.get = [member](const TrainConfig& c) {
    if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  f.set = [member, key](TrainConfig& c, const std::string& v) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, std::string>) {
        c.*member = v;
        used = v.size();
      } else if constexpr (std::is_same_v<T, double>) {
        c.*member = std::stod(v, &used);
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        c.*member = std::stoull(v, &used);
      } else {
        c.*member = std::stoi(v, &used);
      }
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::logic_error&) {
      throw std::invalid_argument(std::string("bad value for ") + key + ": '" + v + "'");
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      field("arch", &TrainConfig::arch),
      field("dataset", &TrainConfig::dataset),
      field("data_root", &TrainConfig::data_root),
      field("train_fold", &TrainConfig::train_fold),
      field("val_fold", &TrainConfig::val_fold),
      field("subset", &TrainConfig::subset),
      field("height", &TrainConfig::height),
      field("width", &TrainConfig::width),
      field("epochs", &TrainConfig::epochs),
      field("batch_size", &TrainConfig::batch_size),
      field("lr", &TrainConfig::lr),
      field("momentum", &TrainConfig::momentum),
      field("lr_factor", &TrainConfig::lr_factor),
      field("patience", &TrainConfig::patience),
      field("threshold", &TrainConfig::threshold),
      field("monitor", &TrainConfig::monitor),
      field("seed", &TrainConfig::seed),
      field("threads", &TrainConfig::threads),
      field("output_dir", &TrainConfig::output_dir),
  };
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Fisher-Yates over [0, n) continuing from the given generator.
std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  return order;
}

}  // namespace

void validate(const TrainConfig& c) {
  const ArchSpec spec = preset(c.arch);
  parse_dataset_kind(c.dataset);
  if (c.monitor != "val_loss" && c.monitor != "val_miou") {
    throw std::invalid_argument("monitor must be val_loss or val_miou, got '" + c.monitor + "'");
  }
  if (c.height <= 0 || c.width <= 0) throw std::invalid_argument("height and width must be positive");
  const int divisor = 1 << (spec.scales - 1);
  if (c.height % divisor != 0 || c.width % divisor != 0) {
    throw std::invalid_argument("resolution " + std::to_string(c.height) + "x" + std::to_string(c.width) +
                                " is not divisible by " + std::to_string(divisor) + " for " + spec.name);
  }
  if (c.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(c.lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(c.lr_factor > 0.0 && c.lr_factor < 1.0)) throw std::invalid_argument("lr_factor must be in (0, 1)");
  if (c.patience < 0) throw std::invalid_argument("patience must be non-negative");
  if (!(c.threshold >= 0.0)) throw std::invalid_argument("threshold must be non-negative");
  if (c.threads < 0) throw std::invalid_argument("threads must be non-negative");
}

std::string to_key_values(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(config) + "\n";
  return out;
}

TrainConfig parse_key_values(std::string_view text) {
  TrainConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line without '=': " + t);
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');  // flag spelling
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    bool known = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(config, value);
        known = true;
      }
    }
    if (!known) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return config;
}

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

std::pair<Tensor, ClassIndexMap> make_batch(const SampleSource& source, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  std::vector<Sample> samples;
  for (auto i : indices) samples.push_back(source.load(i));
  const Shape first = samples.front().image.shape();
  const auto n = static_cast<std::int64_t>(samples.size());
  std::vector<float> pixels;
  pixels.reserve(static_cast<std::size_t>(n * first.numel()));
  ClassIndexMap target = ClassIndexMap::zeros(n, first.h, first.w);
  target.values.clear();
  for (const auto& s : samples) {
    if (!(s.image.shape() == first)) {
      throw std::invalid_argument("make_batch: sample sizes differ (" + s.image.shape().str() + " vs " +
                                  first.str() + ")");
    }
    pixels.insert(pixels.end(), s.image.data().begin(), s.image.data().end());
    target.values.insert(target.values.end(), s.target.values.begin(), s.target.values.end());
  }
  return {Tensor::from_data({n, 3, first.h, first.w}, std::move(pixels)), std::move(target)};
}

EvalResult evaluate(const Network& network, const SampleSource& source, int batch_size) {
  if (source.size() == 0) throw std::invalid_argument("evaluate: empty fold");
  if (source.num_classes() != network.spec.num_classes) {
    throw std::invalid_argument("evaluate: dataset has " + std::to_string(source.num_classes()) +
                                " classes, network predicts " + std::to_string(network.spec.num_classes));
  }
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be positive");
  EvalResult result;
  result.confusion = ConfusionMatrix(network.spec.num_classes);
  double loss_sum = 0.0;
  std::int64_t pixels = 0;
  for (std::size_t start = 0; start < source.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(source.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    auto [images, target] = make_batch(source, idx);
    const Tensor logits = forward(network, images).output;
    const auto count = static_cast<std::int64_t>(target.values.size());
    loss_sum += static_cast<double>(softmax_cross_entropy(logits, target).item()) * static_cast<double>(count);
    pixels += count;
    result.confusion.add(target, argmax_channels(logits));
  }
  result.loss = loss_sum / static_cast<double>(pixels);
  result.miou = result.confusion.mean_iou();
  result.pixel_accuracy = result.confusion.pixel_accuracy();
  return result;
}

TrainResult train(const TrainConfig& config, const SampleSource& train_set, const SampleSource& val_set,
                  const std::optional<Checkpoint>& resume,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  validate(config);
  set_thread_count(config.threads);
  const ArchSpec spec = preset(config.arch, train_set.num_classes());
  if (val_set.num_classes() != train_set.num_classes()) {
    throw std::invalid_argument("training and validation sets disagree on the class count");
  }
  if (train_set.size() == 0) throw std::invalid_argument("training set is empty");

  Checkpoint state;
  Network net;
  if (resume) {
    if (resume->arch != spec.name) {
      throw CheckpointError(CheckpointError::Kind::kArchMismatch,
                            "resume checkpoint holds " + resume->arch + ", config asks for " + spec.name);
    }
    if (resume->num_classes != spec.num_classes) {
      throw std::invalid_argument("resume checkpoint has " + std::to_string(resume->num_classes) +
                                  " classes, dataset has " + std::to_string(spec.num_classes));
    }
    net = restore_network(*resume);
    state.arch = resume->arch;
    state.num_classes = resume->num_classes;
    state.epoch = resume->epoch;
    state.scheduler = resume->scheduler;
    state.rng = resume->rng;
    state.best_miou = resume->best_miou;
    state.best_epoch = resume->best_epoch;
    state.history = resume->history;
  } else {
    net = build_network(spec, config.seed);
    state = initial_checkpoint(net, config);
  }
  state.params = net.params;  // shares storage: the checkpoint always reflects the live network

  const fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  write_text(out_dir / "config.txt", to_key_values(config));
  TrainResult result;
  result.last_path = out_dir / "last.ckpt";
  if (fs::exists(out_dir / "best.ckpt") && state.best_epoch > 0) result.best_path = out_dir / "best.ckpt";

  Rng rng;
  rng.set_state(state.rng);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  bool ran = false;
  for (int epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    ran = true;
    const double lr = state.scheduler.current_lr;
    const auto order = shuffled(train_set.size(), rng);
    double loss_sum = 0.0;
    std::int64_t pixels = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(batch, order.size() - start));
      auto [images, target] = make_batch(train_set, idx);
      GradTape<float> tape;
      double loss_value = 0.0;
      const std::string where = "epoch " + std::to_string(epoch) + ", batch starting at " + std::to_string(start) +
                                " (lr " + format_double(lr) + ")";
      try {
        GradTape<float>::Scope scope(tape);
        const auto r = forward(net, images, Mode::kTrain);
        const Tensor loss = softmax_cross_entropy(r.output, target);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite training loss at " + where);
        tape.backward(loss);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("training diverged at " + where + ": " + e.what());
      }
      sgd_nesterov_step(net.params, lr, config.momentum);
      const auto count = static_cast<std::int64_t>(target.values.size());
      loss_sum += loss_value * static_cast<double>(count);
      pixels += count;
    }
    for (auto& p : net.params.params()) p.value.clear_grad();

    EvalResult val;
    try {
      val = evaluate(net, val_set, config.batch_size);
    } catch (const std::domain_error& e) {
      throw std::runtime_error("training diverged during validation after epoch " + std::to_string(epoch) + ": " +
                               e.what());
    }
    const double miou = std::isnan(val.miou) ? 0.0 : val.miou;
    state.history.push_back({epoch, loss_sum / static_cast<double>(pixels), val.loss, miou, lr});
    state.scheduler = plateau_step(state.scheduler, config.monitor == "val_loss" ? val.loss : 1.0 - miou);
    state.epoch = epoch;
    state.rng = rng.state();
    if (miou > state.best_miou) {
      state.best_miou = miou;
      state.best_epoch = epoch;
      save_checkpoint(out_dir / "best.ckpt", state);
      result.best_path = out_dir / "best.ckpt";
    }
    save_checkpoint(result.last_path, state);
    write_text(out_dir / "metrics.csv", metrics_csv(state.history));
    if (on_epoch) on_epoch(state.history.back());
  }
  if (!ran) {
    save_checkpoint(result.last_path, state);
    write_text(out_dir / "metrics.csv", metrics_csv(state.history));
  }
  result.last = std::move(state);
  return result;
}

}  // namespace ikshana
