#include "slsnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "slsnet/error.hpp"

namespace slsnet {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'L', 'S', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kParam = 0;
constexpr std::uint8_t kBuffer = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot write checkpoint " + path.string());
  }
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("cannot write checkpoint " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open checkpoint " + path.string());
  }
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(path_.string() + ": truncated checkpoint");
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

void put_shape(Writer& w, const Shape& s) {
  for (std::size_t d : {s.n, s.c, s.h, s.w}) w.put(static_cast<std::uint32_t>(d));
}

CheckpointInfo read_header(Reader& r) {
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError(r.path().string() + ": not a checkpoint");
  const auto version = r.get<std::uint8_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(r.path().string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto value_bytes = r.get<std::uint8_t>();
  if (value_bytes != sizeof(real)) {
    throw FormatError(r.path().string() + ": checkpoint stores " + std::to_string(value_bytes) +
                      "-byte values but this build uses " + std::to_string(sizeof(real)));
  }
  CheckpointInfo info;
  info.step = r.get<std::uint64_t>();
  info.config_text = r.str(r.get<std::uint32_t>());
  return info;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointInfo& info,
                     const StateRefs& state) {
  Writer w(path);
  w.bytes(kMagic, 8);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint8_t>(sizeof(real)));
  w.put(static_cast<std::uint64_t>(info.step));
  w.put(static_cast<std::uint32_t>(info.config_text.size()));
  w.bytes(info.config_text.data(), info.config_text.size());
  w.put(static_cast<std::uint32_t>(state.params.size() + state.buffers.size()));
  auto name = [&](const std::string& n) {
    w.put(static_cast<std::uint16_t>(n.size()));
    w.bytes(n.data(), n.size());
  };
  for (const Parameter* p : state.params) {
    w.put(kParam);
    name(p->name);
    put_shape(w, p->value.shape());
    const std::size_t n = p->size();
    w.bytes(p->value.data().data(), n * sizeof(real));
    const std::vector<real> zeros(p->m.empty() || p->v.empty() ? n : 0, real(0));
    w.bytes(p->m.empty() ? zeros.data() : p->m.data(), n * sizeof(real));
    w.bytes(p->v.empty() ? zeros.data() : p->v.data(), n * sizeof(real));
  }
  for (const Buffer* b : state.buffers) {
    w.put(kBuffer);
    name(b->name);
    put_shape(w, Shape{1, b->values.size(), 1, 1});
    w.bytes(b->values.data(), b->values.size() * sizeof(real));
  }
  w.finish();
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r);
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, StateRefs& state) {
  Reader r(path);
  CheckpointInfo info = read_header(r);
  std::map<std::string, Parameter*> params;
  std::map<std::string, Buffer*> buffers;
  for (Parameter* p : state.params) params[p->name] = p;
  for (Buffer* b : state.buffers) buffers[b->name] = b;

  const auto count = r.get<std::uint32_t>();
  if (count != params.size() + buffers.size()) {
    throw FormatError(path.string() + ": checkpoint has " + std::to_string(count) +
                      " entries, model expects " + std::to_string(params.size() + buffers.size()));
  }
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = r.get<std::uint8_t>();
    const std::string name = r.str(r.get<std::uint16_t>());
    Shape s;
    s.n = r.get<std::uint32_t>();
    s.c = r.get<std::uint32_t>();
    s.h = r.get<std::uint32_t>();
    s.w = r.get<std::uint32_t>();
    if (kind == kParam) {
      auto it = params.find(name);
      if (it == params.end()) throw FormatError(path.string() + ": unexpected parameter " + name);
      Parameter* p = it->second;
      if (!(p->value.shape() == s)) {
        throw FormatError(path.string() + ": parameter " + name + " has shape " + s.str() +
                          ", model expects " + p->value.shape().str());
      }
      const std::size_t n = s.size();
      r.bytes(p->value.mutable_data().data(), n * sizeof(real));
      p->m.resize(n);
      p->v.resize(n);
      r.bytes(p->m.data(), n * sizeof(real));
      r.bytes(p->v.data(), n * sizeof(real));
      params.erase(it);
    } else if (kind == kBuffer) {
      auto it = buffers.find(name);
      if (it == buffers.end()) throw FormatError(path.string() + ": unexpected buffer " + name);
      if (it->second->values.size() != s.size()) {
        throw FormatError(path.string() + ": buffer " + name + " has " + std::to_string(s.size()) + " values");
      }
      r.bytes(it->second->values.data(), s.size() * sizeof(real));
      buffers.erase(it);
    } else {
      throw FormatError(path.string() + ": unknown entry kind " + std::to_string(kind));
    }
  }
  return info;
}

}  // namespace slsnet
