#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "mavos/error.hpp"
#include "mavos/network.hpp"

namespace mavos {
namespace {

constexpr char kMagic[4] = {'M', 'A', 'V', 'C'};

class Writer {
 public:
  void u32(std::uint32_t v) { raw(v); }
  void f32(float v) { raw(v); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  template <class T>
  void raw(T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(b), std::end(b));
    bytes(b, sizeof(T));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}
  std::uint32_t u32() { return raw<std::uint32_t>(); }
  float f32() { return raw<float>(); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const { throw DataError(origin_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) fail("truncated checkpoint");
  }
  template <class T>
  T raw() {
    need(sizeof(T));
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(b), std::end(b));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::vector<std::uint8_t> data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  const auto& cfg = model.config();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.resolution));
  w.u32(static_cast<std::uint32_t>(cfg.encoder.blocks()));
  for (int c : cfg.encoder.channels) w.u32(static_cast<std::uint32_t>(c));
  w.u32(static_cast<std::uint32_t>(cfg.decoder_width));
  w.u32(static_cast<std::uint32_t>(cfg.cbam_reduction));
  w.u32(static_cast<std::uint32_t>(cfg.spatial_kernel));
  const auto& params = model.params();
  w.u32(static_cast<std::uint32_t>(params.entries().size()));
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    const auto& e = params.entry(i);
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    const float* p = params.data(i);
    for (std::size_t j = 0; j < e.size; ++j) w.f32(p[j]);
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot finalise checkpoint " + path.string() + ": " + ec.message());
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  if (r.str(4) != std::string(kMagic, 4)) r.fail("bad checkpoint magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  NetworkConfig cfg;
  cfg.resolution = static_cast<int>(r.u32());
  const auto K = r.u32();
  if (K < 2 || K > 16) r.fail("implausible block count " + std::to_string(K));
  cfg.encoder.channels.clear();
  for (std::uint32_t k = 0; k < K; ++k) cfg.encoder.channels.push_back(static_cast<int>(r.u32()));
  cfg.decoder_width = static_cast<int>(r.u32());
  cfg.cbam_reduction = static_cast<int>(r.u32());
  cfg.spatial_kernel = static_cast<int>(r.u32());
  Model<float> model = [&] {
    try {
      return Model<float>(cfg);
    } catch (const UsageError& e) {
      r.fail(std::string("invalid network header: ") + e.what());
    }
  }();
  auto& params = model.params();
  const auto count = r.u32();
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str(r.u32());
    if (!params.contains(name)) r.fail("unknown tensor " + name);
    if (!seen.insert(name).second) r.fail("duplicate tensor " + name);
    const auto& e = params.entry(params.index(name));
    const auto ndim = r.u32();
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(r.u32()));
    if (shape != e.shape) r.fail("shape mismatch for tensor " + name);
    float* p = params.data(params.index(name));
    for (std::size_t j = 0; j < e.size; ++j) p[j] = r.f32();
  }
  if (seen.size() != params.entries().size()) r.fail("checkpoint is missing tensors");
  if (!r.done()) r.fail("trailing bytes after checkpoint payload");
  return model;
}

}  // namespace mavos
