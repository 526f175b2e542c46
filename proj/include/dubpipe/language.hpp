#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "dubpipe/error.hpp"

namespace dubpipe {

/// English source plus the four supported target languages.
enum class Language { en, bn, hi, ne, te };

inline constexpr std::array kAllLanguages{Language::en, Language::bn, Language::hi, Language::ne, Language::te};
inline constexpr std::array kTargetLanguages{Language::bn, Language::hi, Language::ne, Language::te};

constexpr std::string_view code(Language lang) noexcept {
    switch (lang) {
    case Language::en: return "en";
    case Language::bn: return "bn";
    case Language::hi: return "hi";
    case Language::ne: return "ne";
    case Language::te: return "te";
    }
    return "?";
}

constexpr std::string_view display_name(Language lang) noexcept {
    switch (lang) {
    case Language::en: return "English";
    case Language::bn: return "Bengali";
    case Language::hi: return "Hindi";
    case Language::ne: return "Nepali";
    case Language::te: return "Telugu";
    }
    return "?";
}

inline std::optional<Language> try_parse_language(std::string_view text) noexcept {
    for (auto lang : kAllLanguages)
        if (text == code(lang)) return lang;
    return std::nullopt;
}

inline Language parse_language(std::string_view text) {
    if (auto lang = try_parse_language(text)) return *lang;
    throw ArgumentError("unsupported language '" + std::string(text) + "' (expected one of en, bn, hi, ne, te)");
}

enum class Gender { male, female };

constexpr std::string_view to_string(Gender g) noexcept { return g == Gender::male ? "male" : "female"; }

inline std::optional<Gender> try_parse_gender(std::string_view text) noexcept {
    if (text == "male") return Gender::male;
    if (text == "female") return Gender::female;
    return std::nullopt;
}

inline Gender parse_gender(std::string_view text) {
    if (auto g = try_parse_gender(text)) return *g;
    throw ArgumentError("unsupported voice gender '" + std::string(text) + "' (expected male or female)");
}

} // namespace dubpipe
