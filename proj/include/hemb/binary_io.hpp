#ifndef HEMB_BINARY_IO_HPP_
#define HEMB_BINARY_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace hemb {

// Little-endian byte buffer with a trailing CRC32 (zlib polynomial).
class BinaryWriter {
 public:
  void magic(std::string_view tag) { bytes_.append(tag); }
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);

  // Appends the CRC32 of everything written so far and returns the bytes.
  std::string finish();

 private:
  std::string bytes_;
};

// Reads a buffer written by BinaryWriter. Every failure is a format error that
// names the byte offset.
class BinaryReader {
 public:
  // Verifies length and trailing CRC before any field is decoded.
  BinaryReader(std::string bytes, std::string_view what);

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }
  // Fails unless every payload byte has been consumed.
  void expect_end();
  [[noreturn]] void corrupt(const std::string& msg) const;

 private:
  void need(std::size_t n);

  std::string bytes_;
  std::string what_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;  // payload end, excluding the CRC
};

std::uint32_t crc32_of(std::string_view bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace hemb

#endif  // HEMB_BINARY_IO_HPP_
