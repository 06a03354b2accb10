#include "busfeed/zip_archive.h"

#include <zlib.h>

#include <cstdint>
#include <limits>
#include <stdexcept>

namespace busfeed::zip {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kUtf8Flag = 0x0800;
constexpr std::uint16_t kMethodStored = 0;
constexpr std::uint16_t kMethodDeflate = 8;
constexpr std::uint16_t kDosTime = 0;                      // 00:00:00
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

void put16(std::string& out, std::uint16_t v) {
  out += static_cast<char>(v & 0xff);
  out += static_cast<char>(v >> 8);
}

void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint32_t crc_of(std::string_view data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string deflate_raw(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw std::runtime_error("zip: deflateInit failed");
  }
  std::string out(deflateBound(&zs, static_cast<uLong>(data.size())), '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw std::runtime_error("zip: deflate failed");
  return out;
}

std::string inflate_raw(std::string_view data, std::size_t expected_size) {
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw std::runtime_error("zip: inflateInit failed");
  std::string out(expected_size, '\0');
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected_size) {
    throw std::runtime_error("zip: corrupt deflate stream");
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint16_t u16(std::size_t at) const {
    need(at, 2);
    return static_cast<std::uint16_t>(byte(at) | (byte(at + 1) << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    need(at, 4);
    return static_cast<std::uint32_t>(byte(at)) | (static_cast<std::uint32_t>(byte(at + 1)) << 8) |
           (static_cast<std::uint32_t>(byte(at + 2)) << 16) |
           (static_cast<std::uint32_t>(byte(at + 3)) << 24);
  }
  std::string_view slice(std::size_t at, std::size_t n) const {
    need(at, n);
    return bytes_.substr(at, n);
  }
  std::size_t size() const { return bytes_.size(); }

 private:
  unsigned byte(std::size_t at) const { return static_cast<unsigned char>(bytes_[at]); }
  void need(std::size_t at, std::size_t n) const {
    if (at > bytes_.size() || n > bytes_.size() - at) throw std::runtime_error("zip: truncated archive");
  }
  std::string_view bytes_;
};

}  // namespace

std::string write_archive(std::span<const Entry> entries) {
  std::string out;
  std::string central;
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max() ||
        e.data.size() > std::numeric_limits<std::uint32_t>::max() ||
        out.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw std::runtime_error("zip: entry too large for a non-zip64 archive");
    }
    const std::string packed = deflate_raw(e.data);
    const std::uint32_t crc = crc_of(e.data);
    const auto offset = static_cast<std::uint32_t>(out.size());

    put32(out, kLocalSig);
    put16(out, kVersion);
    put16(out, kUtf8Flag);
    put16(out, kMethodDeflate);
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, crc);
    put32(out, static_cast<std::uint32_t>(packed.size()));
    put32(out, static_cast<std::uint32_t>(e.data.size()));
    put16(out, static_cast<std::uint16_t>(e.name.size()));
    put16(out, 0);
    out += e.name;
    out += packed;

    put32(central, kCentralSig);
    put16(central, kVersion);
    put16(central, kVersion);
    put16(central, kUtf8Flag);
    put16(central, kMethodDeflate);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, crc);
    put32(central, static_cast<std::uint32_t>(packed.size()));
    put32(central, static_cast<std::uint32_t>(e.data.size()));
    put16(central, static_cast<std::uint16_t>(e.name.size()));
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attributes
    put32(central, 0);  // external attributes
    put32(central, offset);
    central += e.name;
  }
  if (entries.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw std::runtime_error("zip: too many entries");
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::vector<Entry> read_archive(std::string_view bytes) {
  Reader in(bytes);
  if (in.size() < 22) throw std::runtime_error("zip: not an archive");
  // The end record sits at the tail, possibly followed by a comment.
  std::size_t end = std::string_view::npos;
  const std::size_t lowest = in.size() > 22 + 0xffff ? in.size() - 22 - 0xffff : 0;
  for (std::size_t pos = in.size() - 22;; --pos) {
    if (in.u32(pos) == kEndSig) {
      end = pos;
      break;
    }
    if (pos == lowest) break;
  }
  if (end == std::string_view::npos) throw std::runtime_error("zip: end of central directory not found");

  const std::uint16_t count = in.u16(end + 10);
  std::size_t cd = in.u32(end + 16);
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    if (in.u32(cd) != kCentralSig) throw std::runtime_error("zip: bad central directory");
    const std::uint16_t flags = in.u16(cd + 8);
    const std::uint16_t method = in.u16(cd + 10);
    const std::uint32_t crc = in.u32(cd + 16);
    const std::uint32_t packed_size = in.u32(cd + 20);
    const std::uint32_t size = in.u32(cd + 24);
    const std::uint16_t name_len = in.u16(cd + 28);
    const std::uint16_t extra_len = in.u16(cd + 30);
    const std::uint16_t comment_len = in.u16(cd + 32);
    const std::uint32_t local = in.u32(cd + 42);
    Entry e;
    e.name = std::string(in.slice(cd + 46, name_len));
    cd += 46u + name_len + extra_len + comment_len;

    if (flags & 0x1) throw std::runtime_error("zip: encrypted entry " + e.name);
    if (in.u32(local) != kLocalSig) throw std::runtime_error("zip: bad local header for " + e.name);
    const std::size_t data_at = local + 30u + in.u16(local + 26) + in.u16(local + 28);
    const auto packed = in.slice(data_at, packed_size);
    if (method == kMethodStored) {
      if (packed_size != size) throw std::runtime_error("zip: size mismatch for " + e.name);
      e.data = std::string(packed);
    } else if (method == kMethodDeflate) {
      e.data = inflate_raw(packed, size);
    } else {
      throw std::runtime_error("zip: unsupported compression method for " + e.name);
    }
    if (crc_of(e.data) != crc) throw std::runtime_error("zip: CRC mismatch for " + e.name);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace busfeed::zip
