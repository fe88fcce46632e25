#ifndef DECUR_IO_HPP
#define DECUR_IO_HPP

// Little-endian byte buffers shared by the DCUR and DCKP formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace decur {

enum class FormatErrc {
  io,           // cannot open / read / write
  bad_magic,    // leading 4 bytes do not identify the format
  bad_version,  // recognised format, unsupported version
  truncated,    // file ended before a declared field or payload
  dim_overflow, // declared extents overflow or exceed the size limit
  dim_mismatch, // extents inconsistent with the header or with each other
  bad_section,  // unexpected tag or record
  trailing,     // bytes left after the last section
};

inline const char *format_errc_name(FormatErrc c) {
  switch (c) {
  case FormatErrc::io: return "io";
  case FormatErrc::bad_magic: return "bad_magic";
  case FormatErrc::bad_version: return "bad_version";
  case FormatErrc::truncated: return "truncated";
  case FormatErrc::dim_overflow: return "dim_overflow";
  case FormatErrc::dim_mismatch: return "dim_mismatch";
  case FormatErrc::bad_section: return "bad_section";
  case FormatErrc::trailing: return "trailing";
  }
  return "?";
}

class FormatError : public std::runtime_error {
public:
  FormatError(FormatErrc code, const std::string &what)
      : std::runtime_error(std::string(format_errc_name(code)) + ": " + what), code_(code) {}
  FormatErrc code() const { return code_; }

private:
  FormatErrc code_;
};

class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void *p, std::size_t n) {
    const auto *b = static_cast<const std::uint8_t *>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string &s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  const std::vector<std::uint8_t> &bytes() const { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n, const char *what) const {
    if (remaining() < n)
      throw FormatError(FormatErrc::truncated, std::string("file ends inside ") + what);
  }
  std::uint8_t u8(const char *what = "u8") {
    need(1, what);
    return buf_[pos_++];
  }
  std::uint32_t u32(const char *what = "u32") {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char *what = "u64") {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::int32_t i32(const char *what = "i32") { return static_cast<std::int32_t>(u32(what)); }
  float f32(const char *what = "f32") { return std::bit_cast<float>(u32(what)); }
  double f64(const char *what = "f64") { return std::bit_cast<double>(u64(what)); }
  std::string bytes(std::size_t n, const char *what) {
    need(n, what);
    std::string s(reinterpret_cast<const char *>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str(const char *what = "string") {
    const auto n = u32(what);
    return bytes(n, what);
  }

private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError(FormatErrc::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path &path, const std::vector<std::uint8_t> &bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw FormatError(FormatErrc::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw FormatError(FormatErrc::io, "write failed for " + path.string());
}

inline void write_text_file(const std::filesystem::path &path, const std::string &text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline std::string read_text_file(const std::filesystem::path &path) {
  const auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

} // namespace decur

#endif
