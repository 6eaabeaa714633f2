#include "intercnn/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace icnn {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void copy(void* dst, std::size_t n, const char* field) {
    need(n, field);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) {
    if (remaining() < n) throw FormatError(std::string("truncated container while reading ") + field, pos_);
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(const TensorMap& entries) {
  if (entries.size() > UINT32_MAX) fail(ErrorKind::Contract, "too many container entries");
  Writer w;
  w.bytes(kContainerMagic, 4);
  w.put<std::uint16_t>(kContainerVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.empty()) fail(ErrorKind::Contract, "container entry names must be non-empty");
    if (name.size() > UINT16_MAX) fail(ErrorKind::Contract, "container entry name too long: " + name.substr(0, 32));
    if (t.empty()) fail(ErrorKind::Contract, "container entry '" + name + "' holds no tensor");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto data = t.data<T>();
      w.bytes(data.data(), data.size_bytes());
    });
  }
  return w.take();
}

TensorMap decode_container(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.copy(magic, 4, "magic");
  if (std::memcmp(magic, kContainerMagic, 4) != 0) throw FormatError("bad container magic", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version), version_at);
  const auto count = r.get<std::uint32_t>("entry count");
  TensorMap out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_at = r.pos();
    const auto name_len = r.get<std::uint16_t>("name length");
    if (name_len == 0) throw FormatError("empty entry name", entry_at);
    std::string name(name_len, '\0');
    r.copy(name.data(), name_len, "name");
    const std::size_t dtype_at = r.pos();
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("unknown dtype code " + std::to_string(dtype), dtype_at);
    const std::size_t rank_at = r.pos();
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0 || rank > kMaxRank) throw FormatError("invalid rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::uint64_t numel = 1;
    const std::size_t elem = dtype == 0 ? 4 : 8;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const std::size_t dim_at = r.pos();
      const auto d = r.get<std::uint64_t>("dimension");
      if (d == 0) throw FormatError("zero dimension", dim_at);
      if (numel > r.remaining() / d) throw FormatError("payload larger than file", dim_at);
      numel *= d;
      shape.push_back(static_cast<std::size_t>(d));
    }
    const std::size_t payload_at = r.pos();
    if (numel * elem > r.remaining()) throw FormatError("truncated payload for '" + name + "'", payload_at);
    Tensor t(shape, static_cast<DType>(dtype));
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto data = t.data<T>();
      r.copy(data.data(), data.size_bytes(), "payload");
    });
    if (!out.emplace(std::move(name), std::move(t)).second) throw FormatError("duplicate entry name", entry_at);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last entry", r.pos());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

void write_container(const TensorMap& entries, const std::filesystem::path& path) {
  write_file_bytes(path, encode_container(entries));
}

TensorMap read_container(const std::filesystem::path& path) { return decode_container(read_file_bytes(path)); }

}  // namespace icnn
