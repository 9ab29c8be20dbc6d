#include <algorithm>
#include <cmath>

#include <zlib.h>

#include "ivsg/core/error.hpp"
#include "ivsg/service/service.hpp"

namespace ivsg::service {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

void chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::string body = std::string(type, 4) + data;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractError("PNG export supports 1 or 3 channels");
  if (image.height < 1 || image.width < 1) throw ContractError("empty image");
  std::string raw;
  raw.reserve(static_cast<std::size_t>(image.height) * (1 + image.width * image.channels));
  for (int r = 0; r < image.height; ++r) {
    raw.push_back(0);  // filter: none
    for (int i = 0; i < image.width * image.channels; ++i) {
      const double v = image.data[static_cast<std::size_t>(r) * image.width * image.channels + i];
      raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &size, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
    throw IoError("zlib compression failed");
  packed.resize(size);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr += std::string{8, static_cast<char>(image.channels == 3 ? 2 : 0), 0, 0, 0};
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", packed);
  chunk(out, "IEND", "");
  return out;
}

}  // namespace ivsg::service
