#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "emt/kv.hpp"
#include "emt/train.hpp"

namespace emt {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[4] = {'E', 'M', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeU8 = 2;

std::array<std::uint64_t, 256> make_crc_table() {
  std::array<std::uint64_t, 256> table{};
  for (std::uint64_t i = 0; i < 256; ++i) {
    std::uint64_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ 0xC96C5795D7870F42ULL : c >> 1;
    table[i] = c;
  }
  return table;
}

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }

  void tensor(const std::string& name, std::uint8_t dtype, const Shape& shape, const void* data,
              std::size_t bytes) {
    if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name);
    put(static_cast<std::uint16_t>(name.size()));
    put_bytes(name.data(), name.size());
    put(dtype);
    put(static_cast<std::uint8_t>(shape.size()));
    for (auto e : shape) put(static_cast<std::uint32_t>(e));
    put_bytes(data, bytes);
  }

  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

struct RawTensor {
  std::uint8_t dtype;
  Shape shape;
  std::vector<char> payload;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::size_t end, const std::string& file)
      : b_(bytes), end_(end), file_(file) {}

  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, b_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::vector<char> take(std::size_t n) {
    need(n);
    std::vector<char> out(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                          b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

  bool at_end() const { return pos_ == end_; }

 private:
  void need(std::size_t n) {
    if (pos_ + n > end_) throw CheckpointError("truncated checkpoint '" + file_ + "'");
  }
  const std::vector<char>& b_;
  std::size_t pos_ = 0;
  std::size_t end_;
  const std::string& file_;
};

std::size_t dtype_size(std::uint8_t d) { return d == 0 ? 4 : d == 1 ? 8 : 1; }

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Verifies framing and checksum, returns tensors in file order.
std::vector<std::pair<std::string, RawTensor>> parse(const std::filesystem::path& path) {
  const std::string file = path.string();
  const auto bytes = read_file(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("'" + file + "' is not an EMT checkpoint (bad magic)");
  }
  if (bytes.size() < 20) throw CheckpointError("truncated checkpoint '" + file + "'");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (crc64(bytes.data(), body) != stored) {
    throw CheckpointError("checksum mismatch in checkpoint '" + file + "'");
  }
  Reader r(bytes, body, file);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " in '" + file + "'");
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, RawTensor>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    const auto name_bytes = r.take(len);
    RawTensor t;
    t.dtype = r.get<std::uint8_t>();
    if (t.dtype > kDtypeU8) throw CheckpointError("unknown dtype code " + std::to_string(t.dtype));
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      t.shape.push_back(r.get<std::uint32_t>());
      n *= static_cast<std::size_t>(t.shape.back());
    }
    t.payload = r.take(n * dtype_size(t.dtype));
    out.emplace_back(std::string(name_bytes.begin(), name_bytes.end()), std::move(t));
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes in checkpoint '" + file + "'");
  return out;
}

struct ConfigBlock {
  ModelConfig model;
  TrainConfig train;
  std::int64_t iteration = 0;
  std::int64_t adam_step = 0;
};

ConfigBlock parse_config(const RawTensor& t) {
  if (t.dtype != kDtypeU8) throw CheckpointError("__config__ tensor must have dtype u8");
  ConfigBlock c;
  std::istringstream lines(std::string(t.payload.begin(), t.payload.end()));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed config line '" + line + "'");
    const std::string_view key(line.data(), eq), value(line.data() + eq + 1, line.size() - eq - 1);
    try {
      if (key.starts_with("model.")) c.model.set(key.substr(6), value);
      else if (key.starts_with("train.")) c.train.set(key.substr(6), value);
      else if (key == "iteration") c.iteration = kv::parse_i64(key, value);
      else if (key == "adam_step") c.adam_step = kv::parse_i64(key, value);
      else throw CheckpointError("unknown checkpoint config key '" + std::string(key) + "'");
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }
  }
  return c;
}

template <typename T>
std::vector<T> decode(const std::string& name, const RawTensor& t, const Shape& expected) {
  if (t.shape != expected) {
    throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape) +
                     ", expected " + shape_str(expected));
  }
  const std::size_t n = static_cast<std::size_t>(numel(expected));
  std::vector<T> out(n);
  if (t.dtype == 0) {
    std::vector<float> f(n);
    std::memcpy(f.data(), t.payload.data(), n * 4);
    std::copy(f.begin(), f.end(), out.begin());
  } else if (t.dtype == 1) {
    std::vector<double> d(n);
    std::memcpy(d.data(), t.payload.data(), n * 8);
    std::transform(d.begin(), d.end(), out.begin(), [](double v) { return static_cast<T>(v); });
  } else {
    throw CheckpointError("tensor '" + name + "' is not floating point");
  }
  return out;
}

}  // namespace

std::uint64_t crc64(const void* data, std::size_t size, std::uint64_t crc) {
  static const auto table = make_crc_table();
  const auto* p = static_cast<const unsigned char*>(data);
  crc = ~crc;
  for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& model,
                     const TrainConfig& train, std::int64_t iteration,
                     const EmtParameters<T>& params, const Adam<T>& opt) {
  const auto& entries = params.entries();
  if (opt.first_moments().size() != entries.size()) {
    throw CheckpointError("optimizer state does not match the parameter list");
  }
  std::string text;
  for (const auto& [k, v] : model.entries()) text += "model." + k + "=" + v + "\n";
  for (const auto& [k, v] : train.entries()) text += "train." + k + "=" + v + "\n";
  text += "iteration=" + std::to_string(iteration) + "\n";
  text += "adam_step=" + std::to_string(opt.step_count()) + "\n";

  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(1 + 3 * entries.size()));
  w.tensor("__config__", kDtypeU8, {static_cast<std::int64_t>(text.size())}, text.data(), text.size());
  const auto dt = static_cast<std::uint8_t>(dtype_of<T>());
  for (const auto& e : entries) {
    w.tensor("param/" + e.name, dt, e.tensor.shape(), e.tensor.data().data(), e.tensor.data().size_bytes());
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& m = opt.first_moments()[k];
    w.tensor("adam_m/" + entries[k].name, dt, entries[k].tensor.shape(), m.data(), m.size() * sizeof(T));
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& v = opt.second_moments()[k];
    w.tensor("adam_v/" + entries[k].name, dt, entries[k].tensor.shape(), v.data(), v.size() * sizeof(T));
  }
  auto& bytes = w.bytes();
  w.put(crc64(bytes.data(), bytes.size()));

  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::pair<ModelConfig, TrainConfig> read_checkpoint_configs(const std::filesystem::path& path) {
  const auto tensors = parse(path);
  if (tensors.empty() || tensors.front().first != "__config__") {
    throw CheckpointError("checkpoint '" + path.string() + "' has no __config__ tensor");
  }
  const auto c = parse_config(tensors.front().second);
  return {c.model, c.train};
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  const auto tensors = parse(path);
  if (tensors.empty() || tensors.front().first != "__config__") {
    throw CheckpointError("checkpoint '" + path.string() + "' has no __config__ tensor");
  }
  const auto block = parse_config(tensors.front().second);
  std::map<std::string, const RawTensor*> by_name;
  for (const auto& [name, t] : tensors) {
    if (!by_name.emplace(name, &t).second) throw CheckpointError("duplicate tensor '" + name + "'");
  }
  auto lookup = [&](const std::string& name) -> const RawTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    return *it->second;
  };

  Checkpoint<T> ck{expected, block.train, block.iteration, EmtParameters<T>(expected), block.adam_step, {}, {}};
  for (const auto& e : ck.params.entries()) {
    const std::string name = "param/" + e.name;
    const auto values = decode<T>(name, lookup(name), e.tensor.shape());
    auto t = e.tensor;
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
    ck.adam_m.push_back(decode<T>("adam_m/" + e.name, lookup("adam_m/" + e.name), e.tensor.shape()));
    ck.adam_v.push_back(decode<T>("adam_v/" + e.name, lookup("adam_v/" + e.name), e.tensor.shape()));
  }
  if (by_name.size() != 1 + 3 * ck.params.entries().size()) {
    throw CheckpointError("checkpoint holds tensors the model config does not define");
  }
  return ck;
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return load_checkpoint<T>(path, read_checkpoint_configs(path).first);
}

template void save_checkpoint(const std::filesystem::path&, const ModelConfig&, const TrainConfig&,
                              std::int64_t, const EmtParameters<float>&, const Adam<float>&);
template void save_checkpoint(const std::filesystem::path&, const ModelConfig&, const TrainConfig&,
                              std::int64_t, const EmtParameters<double>&, const Adam<double>&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&, const ModelConfig&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&, const ModelConfig&);

}  // namespace emt
