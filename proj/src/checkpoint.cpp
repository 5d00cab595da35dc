#include "motioncode/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "motioncode/errors.hpp"

namespace motioncode {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    std::memcpy(&v, take(4, what), 4);
    return v;
  }
  const unsigned char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(source_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
    }
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const unsigned char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_tensor_file(const std::filesystem::path& path, std::span<const StoredTensor> tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (shape_size(t.dims) != t.values.size()) {
      throw InvalidArgument("tensor " + t.name + " has " + std::to_string(t.values.size()) + " values for shape " +
                            shape_string(t.dims));
    }
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 4));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<StoredTensor> parse_tensor_file(std::span<const unsigned char> bytes, const std::string& source) {
  Reader r(bytes, source);
  if (std::memcmp(r.take(4, "magic"), kCheckpointMagic, 4) != 0) throw FormatError(source + ": bad magic bytes");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.u32("tensor count");
  std::vector<StoredTensor> out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = r.u32("name length");
    const auto* name = r.take(name_len, "name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    if (!names.insert(t.name).second) throw FormatError(source + ": duplicate tensor " + t.name);
    const auto rank = r.u32("rank");
    if (rank > 8) throw FormatError(source + ": implausible rank for " + t.name);
    std::size_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32("dims"));
      size *= t.dims.back();
    }
    if (size > bytes.size()) throw FormatError(source + ": truncated payload for " + t.name);
    const auto* payload = r.take(size * 4, "payload");
    t.values.resize(size);
    std::memcpy(t.values.data(), payload, size * 4);
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError(source + ": trailing bytes after last tensor");
  return out;
}

std::vector<StoredTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_tensor_file(bytes, path.string());
}

}  // namespace motioncode
