#include "strucdec/image_io.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "strucdec/tensor.hpp"

namespace strucdec {

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  if (img.pixels.size() != img.width * img.height * 3) throw Error("write_ppm: pixel buffer does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_ppm: cannot open " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error("write_ppm: write failed for " + path.string());
}

namespace {

std::size_t read_header_int(std::istream& in) {
  // Skips whitespace and '#' comments.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  std::string digits;
  while (c != EOF && std::isdigit(c)) {
    digits.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (digits.empty()) throw Error("read_ppm: malformed header");
  return std::stoul(digits);
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_ppm: cannot open " + path.string());
  char magic[2];
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') throw Error("read_ppm: " + path.string() + " is not a P6 file");
  RgbImage img;
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  if (read_header_int(in) != 255) throw Error("read_ppm: only maxval 255 is supported");
  img.pixels.resize(img.width * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw Error("read_ppm: truncated pixel data in " + path.string());
  return img;
}

}  // namespace strucdec
