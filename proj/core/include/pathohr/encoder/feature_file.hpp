#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "pathohr/numeric/matrix.hpp"

namespace pathohr {

// Feature file layout, all little-endian:
//   "PHR1" | u32 n | u32 d | n * d f32, row-major.
// Values are narrowed to float32 on write.

void write_features(std::ostream& out, const Matrix& features);
void write_features(const std::filesystem::path& path, const Matrix& features);

/// Throws FormatError on wrong magic or a truncated payload.
Matrix read_features(std::istream& in);
Matrix read_features(const std::filesystem::path& path);

namespace binio {

void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in, const char* what);
float read_f32(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);

}  // namespace binio

}  // namespace pathohr
