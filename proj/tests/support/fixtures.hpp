// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "codeforge/corpus/corpus.hpp"
#include "codeforge/evalgen/evalgen.hpp"
#include "codeforge/tokenizers/code_tokens.hpp"
#include "codeforge/util/utf8.hpp"

namespace fixtures {

// Exactly 200 characters, newline-terminated.
inline const std::string kFunction =
    "def moving_average(xs, k):\n"
    "    \"\"\"Return the running mean of xs over windows of size k.\"\"\"\n"
    "    out = []\n"
    "    for i in range(len(xs) - k + 1):\n"
    "        out.append(sum(xs[i:i + k]) / k)\n"
    "    return out[:]\n";

inline std::string repeated(const std::string& text, std::size_t times) {
    std::string out;
    out.reserve(text.size() * times);
    for (std::size_t i = 0; i < times; ++i) out += text;
    return out;
}

inline codeforge::corpus::Sample make_sample(const std::string& code, const std::string& docstring,
                                              const std::string& name = "fixture") {
    codeforge::corpus::Sample s;
    s.repo = "fixtures/" + name;
    s.path = name + ".py";
    s.language = "python";
    s.code = code;
    s.docstring = docstring;
    // Like the published corpus, code tokens leave the docstring out.
    const auto parts = codeforge::evalgen::split_function(code);
    s.code_tokens = codeforge::tokenizers::split_code_tokens(parts.signature);
    for (auto& t : codeforge::tokenizers::split_code_tokens(parts.body)) s.code_tokens.push_back(std::move(t));
    s.docstring_tokens = codeforge::tokenizers::split_code_tokens(docstring);
    return s;
}

/// The memorization fixture: one function repeated 50 times.
inline std::vector<codeforge::corpus::Sample> repeated_function_corpus(std::size_t times = 50) {
    return std::vector<codeforge::corpus::Sample>(
        times, make_sample(kFunction, "Return the running mean of xs over windows of size k.", "moving_average"));
}

inline std::string random_unicode(std::mt19937_64& gen, std::size_t max_len) {
    // Mix of ASCII, two-, three- and four-byte scalars, never a surrogate.
    static const std::pair<char32_t, char32_t> ranges[] = {
        {0x20, 0x7E}, {0x09, 0x0A}, {0xA0, 0x7FF}, {0x800, 0xD7FF}, {0xE000, 0xFFFD}, {0x10000, 0x10FFFF}};
    std::string out;
    const std::size_t len = gen() % (max_len + 1);
    for (std::size_t i = 0; i < len; ++i) {
        const auto& [lo, hi] = ranges[gen() % 6];
        codeforge::util::append_utf8(out, static_cast<char32_t>(lo + gen() % (hi - lo + 1)));
    }
    return out;
}

/// Small varied corpus: element-wise list helpers differing in name, operator
/// and constant, each with a one-line docstring naming what it does.
inline std::vector<codeforge::corpus::Sample> synthetic_corpus(std::size_t count, std::uint64_t seed) {
    static const char* const kNames[] = {"total", "scale", "shift", "count", "merge", "clip", "norm", "pick"};
    static const char* const kOps[] = {"+", "-", "*"};
    static const char* const kVerbs[] = {"Add", "Subtract", "Multiply"};
    std::mt19937_64 gen(seed);
    std::vector<codeforge::corpus::Sample> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string name = std::string(kNames[gen() % 8]) + "_" + std::to_string(i);
        const std::size_t op = gen() % 3;
        const std::string k = std::to_string(1 + gen() % 9);
        const std::string doc = std::string(kVerbs[op]) + " " + k + " to every item of xs.";
        const std::string code = "def " + name + "(xs):\n    \"\"\"" + doc + "\"\"\"\n    out = []\n    for x in xs:\n" +
                                 "        out.append(x " + kOps[op] + " " + k + ")\n    return out\n";
        out.push_back(make_sample(code, doc, name));
    }
    return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::size_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("codeforge_" + tag + "_" + std::to_string(std::random_device{}()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace fixtures
