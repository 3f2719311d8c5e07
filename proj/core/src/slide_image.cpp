#include "pathohr/patch/slide_image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "pathohr/error.hpp"

namespace pathohr {

SlideImage::SlideImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
  if (w < 0 || h < 0) throw DimensionError("SlideImage: negative dimensions");
}

TissueMask::TissueMask(int w, int h, bool fill)
    : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill ? 1 : 0) {
  if (w < 0 || h < 0) throw DimensionError("TissueMask: negative dimensions");
}

std::size_t TissueMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  for (;;) {
    while (c != EOF && std::isspace(c)) c = in.get();
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    break;
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw FormatError("PGM: truncated header");
  // The single whitespace after maxval is consumed here, as required.
  return tok;
}

int header_int(std::istream& in, const char* field) {
  const std::string tok = header_token(in);
  if (!std::all_of(tok.begin(), tok.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
    throw FormatError(std::string("PGM: bad ") + field + " '" + tok + "'");
  }
  return std::stoi(tok);
}

}  // namespace

SlideImage read_pgm(std::istream& in) {
  if (header_token(in) != "P5") throw FormatError("PGM: expected binary P5 magic");
  const int w = header_int(in, "width");
  const int h = header_int(in, "height");
  const int maxval = header_int(in, "maxval");
  if (maxval != 255) throw FormatError("PGM: only maxval 255 is supported, got " + std::to_string(maxval));
  if (w <= 0 || h <= 0) throw FormatError("PGM: empty image");
  SlideImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw FormatError("PGM: truncated pixel data");
  return img;
}

SlideImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_pgm(in);
}

void write_pgm(std::ostream& out, const SlideImage& img) {
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

void write_pgm(const std::filesystem::path& path, const SlideImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_pgm(out, img);
}

SlideImage mask_to_image(const TissueMask& mask) {
  SlideImage img(mask.width, mask.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  return img;
}

void write_mask_pgm(const std::filesystem::path& path, const TissueMask& mask) {
  write_pgm(path, mask_to_image(mask));
}

}  // namespace pathohr
