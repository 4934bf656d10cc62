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

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace morphprobe::png {

inline constexpr std::string_view kSignature{"\x89PNG\r\n\x1a\n", 8};

bool has_signature(std::string_view bytes);

/// Encodes an 8-bit grayscale image; `pixels` is width*height bytes, row-major.
std::string encode_gray8(std::uint32_t width, std::uint32_t height, std::string_view pixels);

struct Gray8 {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::string pixels;
};

/// Decodes the subset produced by encode_gray8 (8-bit grayscale, no
/// interlace, filter type 0). Anything else is a protocol error.
Gray8 decode_gray8(std::string_view bytes);

}  // namespace morphprobe::png
