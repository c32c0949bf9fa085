// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace codeforge::util {

// Bytes that do not form valid UTF-8 decode to lone surrogates U+DC80..U+DCFF
// (one per byte) and encode back to the same byte, so any byte string
// survives decode -> encode.
inline constexpr char32_t kEscapeBase = 0xDC00;

std::vector<char32_t> decode_utf8(std::string_view text);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

}  // namespace codeforge::util
