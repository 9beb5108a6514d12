#include "pclreid/binary_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "pclreid/errors.hpp"

namespace pclreid {

void ByteWriter::put_tag(std::string_view tag) {
  for (char c : tag.substr(0, 4)) bytes_.push_back(static_cast<std::uint8_t>(c));
  for (std::size_t i = tag.size(); i < 4; ++i) bytes_.push_back(0);
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::put_f64s(std::span<const double> vs) {
  bytes_.reserve(bytes_.size() + 8 * vs.size());
  for (double v : vs) put_f64(v);
}

void ByteReader::require(std::size_t count, std::string_view what) const {
  if (remaining() < count) {
    throw FormatError(offset_, "truncated input while reading " + std::string(what) + ": need " +
                                   std::to_string(count) + " bytes, " +
                                   std::to_string(remaining()) + " left");
  }
}

std::string ByteReader::get_tag() {
  require(4, "tag");
  std::string tag(reinterpret_cast<const char*>(bytes_.data() + offset_), 4);
  offset_ += 4;
  return tag;
}

std::uint8_t ByteReader::get_u8() {
  require(1, "u8");
  return bytes_[offset_++];
}

std::uint32_t ByteReader::get_u32() {
  require(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 4;
  return v;
}

std::uint64_t ByteReader::get_u64() {
  require(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
  offset_ += 8;
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::vector<double> ByteReader::get_f64s(std::size_t count) {
  if (count > remaining() / 8) require(count * 8, "f64 array");
  std::vector<double> out(count);
  for (double& v : out) v = get_f64();
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

}  // namespace pclreid
