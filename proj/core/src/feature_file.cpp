#include "pathohr/encoder/feature_file.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "pathohr/error.hpp"

namespace pathohr {

namespace binio {

namespace {

template <typename U>
void put_le(std::ostream& out, U bits) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("truncated payload reading ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void write_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void write_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t read_u32(std::istream& in, const char* what) { return get_le<std::uint32_t>(in, what); }
float read_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(in, what)); }
double read_f64(std::istream& in, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(in, what)); }

}  // namespace binio

namespace {
constexpr char kMagic[4] = {'P', 'H', 'R', '1'};
}

void write_features(std::ostream& out, const Matrix& features) {
  out.write(kMagic, 4);
  binio::write_u32(out, static_cast<std::uint32_t>(features.rows()));
  binio::write_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) binio::write_f32(out, static_cast<float>(v));
}

void write_features(const std::filesystem::path& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_features(out, features);
}

Matrix read_features(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("feature file: bad magic");
  const std::uint32_t n = binio::read_u32(in, "token count");
  const std::uint32_t d = binio::read_u32(in, "dimension");
  Matrix m(n, d);
  for (double& v : m.data()) v = binio::read_f32(in, "feature payload");
  return m;
}

Matrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_features(in);
}

}  // namespace pathohr
