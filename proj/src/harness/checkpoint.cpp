#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ikshana/harness.hpp"

namespace fs = std::filesystem;

namespace ikshana {

namespace {

constexpr char kMagic[8] = {'I', 'K', 'S', 'H', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kEndMarker = 0x21444e45;  // "END!"
constexpr std::uint32_t kMaxName = 4096;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }

  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void shape(const Shape& s) {
    i64(s.n);
    i64(s.c);
    i64(s.h);
    i64(s.w);
  }
  void floats(std::span<const float> values) {
    for (float v : values) uint(std::bit_cast<std::uint32_t>(v));
  }

  const std::string& data() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    if (n > kMaxName) corrupt("string length " + std::to_string(n));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Shape shape() {
    Shape s{i64(), i64(), i64(), i64()};
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.numel() > (std::int64_t{1} << 32)) {
      corrupt("tensor shape " + s.str());
    }
    return s;
  }
  std::vector<float> floats(std::int64_t count) {
    need(static_cast<std::size_t>(count) * 4);
    std::vector<float> v(static_cast<std::size_t>(count));
    for (auto& x : v) x = std::bit_cast<float>(uint<std::uint32_t>());
    return v;
  }

  bool at_end() const { return pos_ == data_.size(); }

  [[noreturn]] void corrupt(const std::string& what) const {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, source_ + ": corrupt checkpoint (" + what + ")");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kTruncated, source_ + ": checkpoint is truncated");
    }
  }

  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

Tensor copy_tensor(const Tensor& t, bool requires_grad) {
  return Tensor::from_data(t.shape(), std::vector<float>(t.data().begin(), t.data().end()), requires_grad);
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.uint(kCheckpointVersion);
  w.str(ckpt.arch);
  w.i32(ckpt.num_classes);
  w.i32(ckpt.epoch);
  for (auto s : ckpt.rng) w.uint(s);
  const SchedulerState& s = ckpt.scheduler;
  w.f64(s.current_lr);
  w.f64(s.best_metric);
  w.i32(s.epochs_since_improvement);
  w.f64(s.factor);
  w.i32(s.patience);
  w.f64(s.threshold);
  w.f64(ckpt.best_miou);
  w.i32(ckpt.best_epoch);

  w.uint(static_cast<std::uint32_t>(ckpt.params.params().size()));
  for (const auto& p : ckpt.params.params()) {
    w.str(p.name);
    w.uint(static_cast<std::uint8_t>(p.role));
    w.shape(p.value.shape());
    w.floats(p.value.data());
    w.floats(p.velocity.data());
  }
  w.uint(static_cast<std::uint32_t>(ckpt.params.buffers().size()));
  for (const auto& b : ckpt.params.buffers()) {
    w.str(b.name);
    w.shape(b.value.shape());
    w.floats(b.value.data());
  }
  w.uint(static_cast<std::uint32_t>(ckpt.history.size()));
  for (const auto& m : ckpt.history) {
    w.i32(m.epoch);
    w.f64(m.train_loss);
    w.f64(m.val_loss);
    w.f64(m.val_miou);
    w.f64(m.lr);
  }
  w.uint(kEndMarker);

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, std::optional<std::string> expected_arch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Reader r(buf.str(), path.string());

  char magic[8];
  try {
    r.bytes(magic, sizeof magic);
  } catch (const CheckpointError&) {
    throw CheckpointError(CheckpointError::Kind::kBadMagic, path.string() + " is not a checkpoint");
  }
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(CheckpointError::Kind::kBadMagic, path.string() + " is not a checkpoint");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion, path.string() + ": checkpoint version " +
                                                               std::to_string(version) + ", expected " +
                                                               std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.arch = r.str();
  if (expected_arch && canonical_preset_name(*expected_arch) != ckpt.arch) {
    throw CheckpointError(CheckpointError::Kind::kArchMismatch,
                          path.string() + " holds " + ckpt.arch + ", not " + canonical_preset_name(*expected_arch));
  }
  ckpt.num_classes = r.i32();
  ckpt.epoch = r.i32();
  for (auto& s : ckpt.rng) s = r.uint<std::uint64_t>();
  SchedulerState& s = ckpt.scheduler;
  s.current_lr = r.f64();
  s.best_metric = r.f64();
  s.epochs_since_improvement = r.i32();
  s.factor = r.f64();
  s.patience = r.i32();
  s.threshold = r.f64();
  ckpt.best_miou = r.f64();
  ckpt.best_epoch = r.i32();

  const auto n_params = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    const auto role = r.uint<std::uint8_t>();
    if (role > static_cast<std::uint8_t>(ParamRole::kBeta)) r.corrupt("parameter role");
    const Shape shape = r.shape();
    Tensor value = Tensor::from_data(shape, r.floats(shape.numel()), true);
    Tensor velocity = Tensor::from_data(shape, r.floats(shape.numel()));
    try {
      Parameter& p = ckpt.params.add(std::move(name), static_cast<ParamRole>(role), std::move(value));
      p.velocity = std::move(velocity);
    } catch (const std::invalid_argument& e) {
      r.corrupt(e.what());
    }
  }
  const auto n_buffers = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_buffers; ++i) {
    std::string name = r.str();
    const Shape shape = r.shape();
    try {
      ckpt.params.add_buffer(std::move(name), Tensor::from_data(shape, r.floats(shape.numel())));
    } catch (const std::invalid_argument& e) {
      r.corrupt(e.what());
    }
  }
  const auto n_history = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_history; ++i) {
    EpochMetrics m;
    m.epoch = r.i32();
    m.train_loss = r.f64();
    m.val_loss = r.f64();
    m.val_miou = r.f64();
    m.lr = r.f64();
    ckpt.history.push_back(m);
  }
  if (r.uint<std::uint32_t>() != kEndMarker) r.corrupt("missing end marker");
  if (!r.at_end()) r.corrupt("trailing bytes");
  return ckpt;
}

Checkpoint initial_checkpoint(const Network& network, const TrainConfig& config) {
  Checkpoint ckpt;
  ckpt.arch = network.spec.name;
  ckpt.num_classes = network.spec.num_classes;
  for (const auto& p : network.params.params()) {
    Parameter& q = ckpt.params.add(p.name, p.role, copy_tensor(p.value, true));
    q.velocity = copy_tensor(p.velocity, false);
  }
  for (const auto& b : network.params.buffers()) ckpt.params.add_buffer(b.name, copy_tensor(b.value, false));
  ckpt.scheduler.current_lr = config.lr;
  ckpt.scheduler.factor = config.lr_factor;
  ckpt.scheduler.patience = config.patience;
  ckpt.scheduler.threshold = config.threshold;
  ckpt.rng = Rng(config.seed).state();
  return ckpt;
}

Network restore_network(const Checkpoint& ckpt) {
  Network net = build_network(preset(ckpt.arch, ckpt.num_classes), 0);
  const auto& want = net.params;
  const auto& have = ckpt.params;
  if (want.params().size() != have.params().size() || want.buffers().size() != have.buffers().size()) {
    throw CheckpointError(CheckpointError::Kind::kArchMismatch, "checkpoint layout does not match " + ckpt.arch);
  }
  for (std::size_t i = 0; i < want.params().size(); ++i) {
    const auto& a = want.params()[i];
    const auto& b = have.params()[i];
    if (a.name != b.name || !(a.value.shape() == b.value.shape())) {
      throw CheckpointError(CheckpointError::Kind::kArchMismatch, "checkpoint parameter " + b.name +
                                                                      " does not match " + ckpt.arch);
    }
  }
  for (std::size_t i = 0; i < want.buffers().size(); ++i) {
    const auto& a = want.buffers()[i];
    const auto& b = have.buffers()[i];
    if (a.name != b.name || !(a.value.shape() == b.value.shape())) {
      throw CheckpointError(CheckpointError::Kind::kArchMismatch, "checkpoint buffer " + b.name +
                                                                      " does not match " + ckpt.arch);
    }
  }
  ParamSet params;
  for (const auto& p : have.params()) {
    Parameter& q = params.add(p.name, p.role, copy_tensor(p.value, true));
    q.velocity = copy_tensor(p.velocity, false);
  }
  for (const auto& b : have.buffers()) params.add_buffer(b.name, copy_tensor(b.value, false));
  net.params = std::move(params);
  return net;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (a.arch != b.arch || a.num_classes != b.num_classes || a.epoch != b.epoch || a.rng != b.rng ||
      a.best_epoch != b.best_epoch || a.history.size() != b.history.size()) {
    return false;
  }
  auto bits = [](double x) { return std::bit_cast<std::uint64_t>(x); };
  const auto& s = a.scheduler;
  const auto& t = b.scheduler;
  if (bits(s.current_lr) != bits(t.current_lr) || bits(s.best_metric) != bits(t.best_metric) ||
      s.epochs_since_improvement != t.epochs_since_improvement || bits(s.factor) != bits(t.factor) ||
      s.patience != t.patience || bits(s.threshold) != bits(t.threshold) || bits(a.best_miou) != bits(b.best_miou)) {
    return false;
  }
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    const auto& x = a.history[i];
    const auto& y = b.history[i];
    if (x.epoch != y.epoch || bits(x.train_loss) != bits(y.train_loss) || bits(x.val_loss) != bits(y.val_loss) ||
        bits(x.val_miou) != bits(y.val_miou) || bits(x.lr) != bits(y.lr)) {
      return false;
    }
  }
  return bitwise_equal(a.params, b.params);
}

}  // namespace ikshana
