#include "lrnet/weights_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace lrnet {

namespace {

constexpr char kWeightMagic[4] = {'L', 'R', 'N', 'W'};
constexpr char kAdamMagic[4] = {'L', 'R', 'N', 'A'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  void record(const std::string& name, const Shape& s, std::span<const float> values) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    for (std::size_t e : {s.n, s.c, s.h, s.w}) u32(static_cast<std::uint32_t>(e));
    for (float v : values) f32(v);
  }

  void commit(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      require(static_cast<bool>(out), ErrorKind::data, "cannot open '" + tmp + "' for writing");
      out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
      out.flush();
      require(static_cast<bool>(out), ErrorKind::data, "write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, ErrorKind::data, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
  }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

  void need(std::size_t n) const {
    require(buf_.size() - pos_ >= n, ErrorKind::data, "truncated weight file '" + path_ + "'");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }

  void magic(const char (&expected)[4], const char* what) {
    require(buf_.size() >= 4 && std::memcmp(buf_.data(), expected, 4) == 0, ErrorKind::data,
            "'" + path_ + "' is not a " + what + " file (bad magic)");
    pos_ = 4;
    const std::uint16_t version = u16();
    require(version == kWeightFormatVersion, ErrorKind::data,
            "'" + path_ + "': unsupported format version " + std::to_string(version) + " (expected " +
                std::to_string(kWeightFormatVersion) + ")");
  }

  std::pair<std::string, Tensor> record() {
    const std::uint32_t len = u32();
    need(len);
    std::string name(buf_.data() + pos_, len);
    pos_ += len;
    Shape s;
    s.n = u32();
    s.c = u32();
    s.h = u32();
    s.w = u32();
    const std::uint64_t count = static_cast<std::uint64_t>(s.n) * s.c * s.h * s.w;
    require(count <= (buf_.size() - pos_) / 4, ErrorKind::data, "truncated weight file '" + path_ + "'");
    std::vector<float> values(count);
    for (auto& v : values) v = std::bit_cast<float>(u32());
    return {std::move(name), Tensor(s, std::move(values))};
  }

  void finish() const {
    require(pos_ == buf_.size(), ErrorKind::data, "trailing bytes in weight file '" + path_ + "'");
  }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

Reader open_reader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::data, "cannot open weight file '" + path + "'");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(buf), path);
}

}  // namespace

void save_weights(const WeightStore& store, const std::string& path) {
  Writer w;
  w.bytes(kWeightMagic, 4);
  w.u16(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(store.tensors.size()));
  for (const auto& [name, t] : store.tensors) w.record(name, t.shape(), t.data());
  w.commit(path);
}

WeightStore read_weights(const std::string& path) {
  Reader r = open_reader(path);
  r.magic(kWeightMagic, "weight");
  const std::uint32_t count = r.u32();
  WeightStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.record();
    require(store.tensors.emplace(name, std::move(t)).second, ErrorKind::data,
            "duplicate tensor '" + name + "' in '" + path + "'");
  }
  r.finish();
  return store;
}

void check_layout(const WeightStore& store, const ModelConfig& config) {
  const auto layout = expected_layout(config);
  for (const auto& [name, shape] : layout) {
    auto it = store.tensors.find(name);
    require(it != store.tensors.end(), ErrorKind::data, "weight file is missing tensor '" + name + "'");
    require(it->second.shape() == shape, ErrorKind::data,
            "tensor '" + name + "' has shape " + it->second.shape().str() + " but the model expects " +
                shape.str());
  }
  for (const auto& [name, t] : store.tensors) {
    require(layout.count(name) == 1, ErrorKind::data, "weight file has unexpected tensor '" + name + "'");
  }
}

WeightStore load_weights(const std::string& path, const ModelConfig& config) {
  WeightStore store = read_weights(path);
  check_layout(store, config);
  return store;
}

void save_adam_state(const AdamState<float>& state, const std::string& path) {
  Writer w;
  w.bytes(kAdamMagic, 4);
  w.u16(kWeightFormatVersion);
  w.u64(state.step);
  w.u32(static_cast<std::uint32_t>(state.moments.size() * 2));
  for (const auto& [name, m] : state.moments) {
    w.record(name + ".m", Shape{1, 1, 1, m.first.size()}, m.first);
    w.record(name + ".v", Shape{1, 1, 1, m.second.size()}, m.second);
  }
  w.commit(path);
}

AdamState<float> load_adam_state(const std::string& path) {
  Reader r = open_reader(path);
  r.magic(kAdamMagic, "optimizer state");
  AdamState<float> state;
  state.step = r.u64();
  const std::uint32_t count = r.u32();
  require(count % 2 == 0, ErrorKind::data, "optimizer state '" + path + "' has an odd record count");
  for (std::uint32_t i = 0; i < count; i += 2) {
    auto [m_name, m] = r.record();
    auto [v_name, v] = r.record();
    require(m_name.size() > 2 && m_name.ends_with(".m") && v_name.size() > 2 && v_name.ends_with(".v") &&
                m_name.substr(0, m_name.size() - 2) == v_name.substr(0, v_name.size() - 2) &&
                m.size() == v.size(),
            ErrorKind::data, "malformed optimizer state record '" + m_name + "' in '" + path + "'");
    auto& slot = state.moments[m_name.substr(0, m_name.size() - 2)];
    slot.first.assign(m.data().begin(), m.data().end());
    slot.second.assign(v.data().begin(), v.data().end());
  }
  r.finish();
  return state;
}

}  // namespace lrnet
