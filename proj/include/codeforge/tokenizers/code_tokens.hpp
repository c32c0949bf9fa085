// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace codeforge::tokenizers {

/// Whitespace + punctuation splitter producing code_tokens-style tokens:
/// runs of identifier characters ([A-Za-z0-9_] and non-ASCII bytes) form one
/// token, every other non-space byte is its own token, whitespace is dropped.
std::vector<std::string> split_code_tokens(std::string_view text);

}  // namespace codeforge::tokenizers
