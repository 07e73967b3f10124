#include "modgate/array_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace modgate::io {

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), buf.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw FormatError("unexpected end of binary data");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

constexpr char kArrayMagic[4] = {'M', 'G', 'A', 'R'};

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint8_t read_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
std::uint32_t read_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::string read_string(std::istream& in, std::size_t max_len) {
  const std::uint32_t n = read_u32(in);
  if (n > max_len) throw FormatError("string length out of range");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError("unexpected end of binary data");
  return s;
}

void write_array(std::ostream& out, const NdArray& array) {
  out.write(kArrayMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(array.shape.size()));
  for (auto d : array.shape) write_u64(out, d);
  for (double v : array.data) write_f64(out, v);
}

NdArray read_array(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kArrayMagic, 4) != 0) throw FormatError("bad array magic");
  const std::uint32_t rank = read_u32(in);
  if (rank > 8) throw FormatError("array rank out of range");
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = read_u64(in);
    if (d == 0 || d > (1u << 28)) throw FormatError("array dimension out of range");
    count *= d;
    if (count > (1u << 28)) throw FormatError("array too large");
  }
  std::vector<double> data(count);
  for (auto& v : data) v = read_f64(in);
  return NdArray(std::move(shape), std::move(data));
}

void save_array(const std::filesystem::path& path, const NdArray& array) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_array(out, array);
  if (!out) throw IoError("write failed: " + path.string());
}

NdArray load_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_array(in);
}

}  // namespace modgate::io
