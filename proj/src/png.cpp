// Copyright 2026 The morphprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "png.hpp"

#include <zlib.h>

#include <vector>

#include "errors.hpp"

namespace morphprobe::png {

namespace {

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

std::uint32_t get_be32(std::string_view in, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 3]));
}

void put_chunk(std::string& out, std::string_view type, std::string_view data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type);
  body.append(data);
  out.append(body);
  put_be32(out, static_cast<std::uint32_t>(
                    crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

[[noreturn]] void bad(const std::string& why) { fail(ErrorCode::kProtocol, "malformed PNG: " + why); }

}  // namespace

bool has_signature(std::string_view bytes) { return bytes.starts_with(kSignature); }

std::string encode_gray8(std::uint32_t width, std::uint32_t height, std::string_view pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    fail(ErrorCode::kInvalidArgument, "pixel buffer does not match image size");
  std::string raw;
  raw.reserve(pixels.size() + height);
  for (std::uint32_t y = 0; y < height; ++y) {
    raw.push_back('\0');  // filter: none
    raw.append(pixels.substr(static_cast<std::size_t>(y) * width, width));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<Bytef> z(zlen);
  if (compress2(z.data(), &zlen, reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()), 9) !=
      Z_OK)
    fail(ErrorCode::kIo, "zlib compression failed");

  std::string ihdr;
  put_be32(ihdr, width);
  put_be32(ihdr, height);
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);

  std::string out(kSignature);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", std::string_view(reinterpret_cast<const char*>(z.data()), zlen));
  put_chunk(out, "IEND", {});
  return out;
}

Gray8 decode_gray8(std::string_view bytes) {
  if (!has_signature(bytes)) bad("signature");
  std::size_t pos = kSignature.size();
  Gray8 img;
  std::string idat;
  bool seen_header = false;
  bool seen_end = false;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = get_be32(bytes, pos);
    if (pos + 12 + static_cast<std::size_t>(len) > bytes.size()) bad("truncated chunk");
    const std::string_view type = bytes.substr(pos + 4, 4);
    const std::string_view data = bytes.substr(pos + 8, len);
    const std::uint32_t crc = get_be32(bytes, pos + 8 + len);
    const std::string_view covered = bytes.substr(pos + 4, 4 + len);
    if (crc32(0L, reinterpret_cast<const Bytef*>(covered.data()), static_cast<uInt>(covered.size())) != crc)
      bad("chunk CRC");
    if (type == "IHDR") {
      if (len != 13) bad("IHDR length");
      img.width = get_be32(data, 0);
      img.height = get_be32(data, 4);
      if (data[8] != 8 || data[9] != 0 || data[12] != 0) bad("only 8-bit grayscale non-interlaced is supported");
      seen_header = true;
    } else if (type == "IDAT") {
      idat.append(data);
    } else if (type == "IEND") {
      seen_end = true;
      break;
    }
    pos += 12 + len;
  }
  if (!seen_header || !seen_end) bad("missing IHDR or IEND");
  const std::size_t stride = static_cast<std::size_t>(img.width) + 1;
  std::vector<Bytef> raw(stride * img.height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()), static_cast<uLong>(idat.size())) !=
          Z_OK ||
      raw_len != raw.size())
    bad("IDAT stream");
  img.pixels.reserve(static_cast<std::size_t>(img.width) * img.height);
  for (std::uint32_t y = 0; y < img.height; ++y) {
    if (raw[y * stride] != 0) bad("unsupported filter type");
    img.pixels.append(reinterpret_cast<const char*>(raw.data() + y * stride + 1), img.width);
  }
  return img;
}

}  // namespace morphprobe::png
