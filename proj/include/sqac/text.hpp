#pragma once

// Query normalization and UTF-8 helpers shared by every module, so that a
// query has one identity from log ingestion through retrieval.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sqac {

namespace utf8 {

/// Decodes UTF-8 into code points. Invalid sequences become U+FFFD.
inline std::u32string decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        char32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            out.push_back(U'�');
            ++i;
            continue;
        }
        if (i + len > s.size()) {
            out.push_back(U'�');
            break;
        }
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        // reject overlong forms and surrogates
        static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
        if (!ok || cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(U'�');
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append(out, cp);
    return out;
}

}  // namespace utf8

namespace detail {

inline bool is_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' ||
           c == 0x00A0 || c == 0x3000 || (c >= 0x2000 && c <= 0x200A);
}

// Letter test for the scripts a product search log realistically contains.
// Not a full Unicode property table.
inline bool is_letter(char32_t c) {
    if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z')) return true;
    if (c < 0xC0) return false;
    if (c == 0xD7 || c == 0xF7) return false;
    return (c <= 0x024F) ||                   // Latin-1 supplement and extended A/B
           (c >= 0x0370 && c <= 0x03FF) ||    // Greek
           (c >= 0x0400 && c <= 0x052F) ||    // Cyrillic
           (c >= 0x0590 && c <= 0x06FF) ||    // Hebrew, Arabic
           (c >= 0x0900 && c <= 0x0DFF) ||    // Indic
           (c >= 0x0E00 && c <= 0x0E7F) ||    // Thai
           (c >= 0x1100 && c <= 0x11FF) ||    // Hangul jamo
           (c >= 0x1E00 && c <= 0x1EFF) ||    // Latin extended additional
           (c >= 0x3040 && c <= 0x30FF) ||    // kana
           (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x4E00 && c <= 0x9FFF) ||  // CJK
           (c >= 0xAC00 && c <= 0xD7AF);      // Hangul syllables
}

inline char32_t to_lower(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 32;
    if (c < 0xC0) return c;
    if (c <= 0xDE && c != 0xD7) return c + 32;
    if (c >= 0x0100 && c <= 0x0137) return c | 1;
    if (c >= 0x0139 && c <= 0x0148) return (c & 1) ? c + 1 : c;
    if (c >= 0x014A && c <= 0x0177) return c | 1;
    if (c == 0x0178) return 0xFF;
    if (c >= 0x0179 && c <= 0x017E) return (c & 1) ? c + 1 : c;
    if (c >= 0x0391 && c <= 0x03A9 && c != 0x03A2) return c + 32;
    if (c >= 0x0410 && c <= 0x042F) return c + 32;
    if (c >= 0x0400 && c <= 0x040F) return c + 80;
    return c;
}

inline bool is_kept(char32_t c) {
    return is_letter(c) || (c >= U'0' && c <= U'9') || c == U'-' || c == U'\'';
}

inline std::string normalize_impl(std::string_view raw, bool trim_trailing) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char32_t c : utf8::decode(raw)) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (!is_kept(c)) continue;
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        utf8::append(out, to_lower(c));
    }
    if (pending_space && !trim_trailing) out.push_back(' ');
    return out;
}

}  // namespace detail

/// Canonical query identity: lowercase, keep letters/digits/hyphen/apostrophe,
/// collapse whitespace runs to one space, trim both ends.
inline std::string normalize_query(std::string_view raw) {
    return detail::normalize_impl(raw, true);
}

/// Same as normalize_query but keeps a single trailing space, so a typed
/// prefix like "memorial " still means "word boundary follows".
inline std::string normalize_prefix(std::string_view raw) {
    return detail::normalize_impl(raw, false);
}

inline constexpr std::string_view kUnkToken = "<unk>";

/// Whitespace tokenization of an already normalized query. Never empty.
inline std::vector<std::string> tokenize(std::string_view query) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < query.size()) {
        while (i < query.size() && query[i] == ' ') ++i;
        std::size_t j = i;
        while (j < query.size() && query[j] != ' ') ++j;
        if (j > i) tokens.emplace_back(query.substr(i, j - i));
        i = j;
    }
    if (tokens.empty()) tokens.emplace_back(kUnkToken);
    return tokens;
}

}  // namespace sqac
