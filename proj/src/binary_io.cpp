#include "hemb/binary_io.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hemb/error.hpp"

namespace hemb {

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

std::string BinaryWriter::finish() {
  const std::uint32_t crc = crc32_of(bytes_);
  u32(crc);
  return std::move(bytes_);
}

BinaryReader::BinaryReader(std::string bytes, std::string_view what)
    : bytes_(std::move(bytes)), what_(what) {
  if (bytes_.size() < 4) {
    pos_ = bytes_.size();
    corrupt("file too short for checksum (" + std::to_string(bytes_.size()) + " bytes)");
  }
  end_ = bytes_.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) {
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[end_ + i])) << (8 * i);
  }
  if (stored != crc32_of(std::string_view(bytes_).substr(0, end_))) {
    pos_ = end_;
    corrupt("CRC32 mismatch (file truncated or corrupt)");
  }
}

void BinaryReader::corrupt(const std::string& msg) const {
  fail(ErrorKind::kFormat, what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
}

void BinaryReader::need(std::size_t n) {
  if (end_ - pos_ < n) corrupt("unexpected end of data");
}

void BinaryReader::expect_magic(std::string_view tag) {
  need(tag.size());
  if (std::string_view(bytes_).substr(pos_, tag.size()) != tag) {
    corrupt("bad magic, expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

std::uint8_t BinaryReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(bytes_[pos_++]);
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
  }
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
  }
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

void BinaryReader::expect_end() {
  if (pos_ != end_) corrupt(std::to_string(end_ - pos_) + " trailing bytes");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

}  // namespace hemb
