#pragma once

// Inter-annotator agreement: Cohen's kappa, Fleiss' kappa, Pearson's r,
// upper-triangle aggregation of pairwise rater matrices, and reports over
// collections of 1-5 ratings.

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dubpipe/error.hpp"
#include "dubpipe/language.hpp"
#include "json.hpp"

namespace dubpipe::agreement {

enum class Criterion { lip_sync, translation_quality, audio_quality };

inline constexpr std::array kAllCriteria{Criterion::lip_sync, Criterion::translation_quality,
                                         Criterion::audio_quality};

constexpr std::string_view to_string(Criterion c) noexcept {
    switch (c) {
    case Criterion::lip_sync: return "lip_sync";
    case Criterion::translation_quality: return "translation_quality";
    case Criterion::audio_quality: return "audio_quality";
    }
    return "?";
}

constexpr std::string_view short_name(Criterion c) noexcept {
    switch (c) {
    case Criterion::lip_sync: return "Lip Sync";
    case Criterion::translation_quality: return "TQ";
    case Criterion::audio_quality: return "AQ";
    }
    return "?";
}

inline std::optional<Criterion> try_parse_criterion(std::string_view text) noexcept {
    for (auto c : kAllCriteria)
        if (text == to_string(c)) return c;
    return std::nullopt;
}

inline Criterion parse_criterion(std::string_view text) {
    if (auto c = try_parse_criterion(text)) return *c;
    throw ArgumentError("unknown criterion '" + std::string(text) +
                        "' (expected lip_sync, translation_quality or audio_quality)");
}

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;

struct RatingRecord {
    Language language = Language::bn;
    std::string video_id;
    std::string rater_id;
    Criterion criterion = Criterion::lip_sync;
    int score = kMinScore;

    friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

// ---------------------------------------------------------------------------
// Statistics

/// kappa = (p_o - p_e) / (1 - p_e), categories taken from the observed values.
inline double cohen_kappa(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw ArgumentError("cohen_kappa: rating vectors differ in length");
    if (a.empty()) throw ArgumentError("cohen_kappa: empty rating vectors");
    const double n = static_cast<double>(a.size());

    std::map<int, std::pair<double, double>> marginals;
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        marginals[a[i]].first += 1.0;
        marginals[b[i]].second += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [category, counts] : marginals) p_e += (counts.first / n) * (counts.second / n);
    if (std::abs(1.0 - p_e) < 1e-12) throw DegenerateError("cohen_kappa: chance agreement is 1");
    return (p_o - p_e) / (1.0 - p_e);
}

/// counts[i][j] = number of raters who put item i in category j. Every row
/// must sum to the same rater count n >= 2.
inline double fleiss_kappa(const std::vector<std::vector<int>>& counts) {
    if (counts.empty()) throw ArgumentError("fleiss_kappa: no items");
    const std::size_t k = counts.front().size();
    if (k == 0) throw ArgumentError("fleiss_kappa: no categories");

    long long n = -1;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i].size() != k) throw ArgumentError("fleiss_kappa: ragged count matrix");
        long long row = 0;
        for (int c : counts[i]) {
            if (c < 0) throw ArgumentError("fleiss_kappa: negative count");
            row += c;
        }
        if (n < 0) n = row;
        if (row != n)
            throw ArgumentError("fleiss_kappa: item " + std::to_string(i) + " has " + std::to_string(row) +
                                " ratings, expected " + std::to_string(n));
    }
    if (n < 2) throw ArgumentError("fleiss_kappa: need at least two raters per item");

    const double items = static_cast<double>(counts.size());
    const double raters = static_cast<double>(n);
    std::vector<double> category_total(k, 0.0);
    double p_bar = 0.0;
    for (const auto& row : counts) {
        double sq = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            sq += static_cast<double>(row[j]) * row[j];
            category_total[j] += row[j];
        }
        p_bar += (sq - raters) / (raters * (raters - 1.0));
    }
    p_bar /= items;
    double p_e = 0.0;
    for (double total : category_total) {
        const double p = total / (items * raters);
        p_e += p * p;
    }
    if (std::abs(1.0 - p_e) < 1e-12) throw DegenerateError("fleiss_kappa: chance agreement is 1");
    return (p_bar - p_e) / (1.0 - p_e);
}

/// cov(x, y) / (sd(x) sd(y)), clamped to [-1, 1]. Fewer than two points or
/// a constant vector leave the coefficient undefined.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("pearson_r: vectors differ in length");
    if (x.size() < 2) throw DegenerateError("pearson_r: need at least two observations");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DegenerateError("pearson_r: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson_r(std::span<const int> x, std::span<const int> y) {
    std::vector<double> xd(x.begin(), x.end()), yd(y.begin(), y.end());
    return pearson_r(std::span<const double>(xd), std::span<const double>(yd));
}

// ---------------------------------------------------------------------------
// Pairwise matrices

/// Square rater-by-rater matrix with unit diagonal. Not assumed symmetric.
/// NaN marks a pair whose statistic is undefined.
struct PairwiseMatrix {
    std::vector<std::string> raters;
    std::vector<std::vector<double>> values;

    std::size_t dimension() const noexcept { return values.size(); }

    void validate() const {
        const std::size_t n = values.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (values[i].size() != n)
                throw FormatError("pairwise matrix is not square: row " + std::to_string(i) + " has " +
                                  std::to_string(values[i].size()) + " entries, expected " + std::to_string(n));
            if (std::abs(values[i][i] - 1.0) > 1e-9)
                throw FormatError("pairwise matrix diagonal entry " + std::to_string(i) + " is not 1");
        }
        if (!raters.empty() && raters.size() != n)
            throw FormatError("pairwise matrix has " + std::to_string(raters.size()) + " rater labels for dimension " +
                              std::to_string(n));
    }
};

/// Mean of the strict upper triangle (i < j), skipping NaN entries.
inline double mean_pairwise(const PairwiseMatrix& m) {
    m.validate();
    if (m.dimension() < 2) throw ArgumentError("mean_pairwise: dimension must be at least 2");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < m.dimension(); ++i) {
        for (std::size_t j = i + 1; j < m.dimension(); ++j) {
            if (std::isnan(m.values[i][j])) continue;
            sum += m.values[i][j];
            ++count;
        }
    }
    if (count == 0) throw DegenerateError("mean_pairwise: every pair is undefined");
    return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Reports

struct AgreementEntry {
    Language language = Language::bn;
    Criterion criterion = Criterion::lip_sync;
    std::vector<std::string> raters;
    std::vector<std::string> videos;
    std::optional<double> cohen_avg;
    std::optional<double> fleiss;
    std::optional<double> pearson_avg;
    PairwiseMatrix cohen;
    PairwiseMatrix pearson;
};

struct AgreementReport {
    std::vector<AgreementEntry> entries;
    std::vector<std::string> warnings;
};

struct ReportQuery {
    std::optional<Language> language;
    std::optional<Criterion> criterion;
};

inline void validate_record(const RatingRecord& r) {
    if (r.score < kMinScore || r.score > kMaxScore)
        throw ArgumentError("score " + std::to_string(r.score) + " out of range 1-5 (rater " + r.rater_id +
                            ", video " + r.video_id + ")");
    if (r.rater_id.empty() || r.video_id.empty()) throw ArgumentError("rating has an empty rater or video id");
}

/// One entry per (language, criterion) slice present in `ratings` and
/// selected by `query`. Statistics use the videos rated by every rater of
/// the slice; undefined pairs are excluded from the means with a warning.
/// Slices with fewer than two raters are skipped with a warning; if no slice
/// is usable the call fails with ArgumentError.
inline AgreementReport build_report(const std::vector<RatingRecord>& ratings, const ReportQuery& query = {}) {
    using Slice = std::pair<Language, Criterion>;
    std::map<Slice, std::map<std::string, std::map<std::string, int>>> grouped;
    for (const auto& r : ratings) {
        validate_record(r);
        if (query.language && *query.language != r.language) continue;
        if (query.criterion && *query.criterion != r.criterion) continue;
        auto [it, inserted] = grouped[{r.language, r.criterion}][r.rater_id].emplace(r.video_id, r.score);
        if (!inserted)
            throw ArgumentError("duplicate rating by " + r.rater_id + " for video " + r.video_id + " (" +
                                std::string(code(r.language)) + "/" + std::string(to_string(r.criterion)) + ")");
    }
    if (grouped.empty()) throw ArgumentError("no ratings match the requested slice");

    AgreementReport report;
    std::vector<std::string> insufficient;
    for (const auto& [slice, by_rater] : grouped) {
        const std::string label = std::string(code(slice.first)) + "/" + std::string(to_string(slice.second));
        if (by_rater.size() < 2) {
            insufficient.push_back(label + ": need at least 2 raters, found " + std::to_string(by_rater.size()));
            continue;
        }

        AgreementEntry entry;
        entry.language = slice.first;
        entry.criterion = slice.second;

        std::set<std::string> common;
        bool first = true;
        std::size_t total_ratings = 0;
        for (const auto& [rater, scores] : by_rater) {
            entry.raters.push_back(rater);
            total_ratings += scores.size();
            std::set<std::string> mine;
            for (const auto& [video, score] : scores) mine.insert(video);
            if (first) {
                common = std::move(mine);
                first = false;
            } else {
                std::set<std::string> both;
                std::set_intersection(common.begin(), common.end(), mine.begin(), mine.end(),
                                      std::inserter(both, both.end()));
                common = std::move(both);
            }
        }
        if (common.empty()) {
            insufficient.push_back(label + ": no video was rated by every rater");
            continue;
        }
        entry.videos.assign(common.begin(), common.end());
        if (total_ratings != common.size() * by_rater.size())
            report.warnings.push_back(label + ": ratings outside the " + std::to_string(common.size()) +
                                      " videos shared by all raters were ignored");

        std::vector<std::vector<int>> scores;
        for (const auto& [rater, by_video] : by_rater) {
            std::vector<int> row;
            for (const auto& v : entry.videos) row.push_back(by_video.at(v));
            scores.push_back(std::move(row));
        }

        const std::size_t m = scores.size();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        entry.cohen = {entry.raters, std::vector<std::vector<double>>(m, std::vector<double>(m, 1.0))};
        entry.pearson = entry.cohen;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const std::string pair = label + ": raters " + entry.raters[i] + " and " + entry.raters[j];
                double kappa = nan, r = nan;
                try {
                    kappa = cohen_kappa(scores[i], scores[j]);
                } catch (const DegenerateError& e) {
                    report.warnings.push_back(pair + " excluded from Cohen's kappa: " + e.what());
                }
                try {
                    r = pearson_r(std::span<const int>(scores[i]), std::span<const int>(scores[j]));
                } catch (const DegenerateError& e) {
                    report.warnings.push_back(pair + " excluded from Pearson's r: " + e.what());
                }
                entry.cohen.values[i][j] = entry.cohen.values[j][i] = kappa;
                entry.pearson.values[i][j] = entry.pearson.values[j][i] = r;
            }
        }
        try {
            entry.cohen_avg = mean_pairwise(entry.cohen);
        } catch (const DegenerateError&) {
            report.warnings.push_back(label + ": Cohen's kappa undefined for every pair");
        }
        try {
            entry.pearson_avg = mean_pairwise(entry.pearson);
        } catch (const DegenerateError&) {
            report.warnings.push_back(label + ": Pearson's r undefined for every pair");
        }

        std::vector<std::vector<int>> counts(entry.videos.size(), std::vector<int>(kMaxScore - kMinScore + 1, 0));
        for (const auto& row : scores)
            for (std::size_t v = 0; v < row.size(); ++v) ++counts[v][static_cast<std::size_t>(row[v] - kMinScore)];
        try {
            entry.fleiss = fleiss_kappa(counts);
        } catch (const DegenerateError& e) {
            report.warnings.push_back(label + ": Fleiss' kappa undefined: " + e.what());
        }
        report.entries.push_back(std::move(entry));
    }
    if (report.entries.empty()) {
        std::string why = "insufficient data";
        for (const auto& m : insufficient) why += "; " + m;
        throw ArgumentError(why);
    }
    for (auto& m : insufficient) report.warnings.push_back(m + " (slice skipped)");
    return report;
}

// ---------------------------------------------------------------------------
// Ratings CSV: language,video_id,rater_id,criterion,score

inline constexpr std::string_view kRatingsCsvHeader = "language,video_id,rater_id,criterion,score";

inline std::vector<RatingRecord> parse_ratings_csv(std::istream& in) {
    std::vector<RatingRecord> out;
    std::string line;
    std::size_t row = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (row == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kRatingsCsvHeader)
                throw FormatError("row " + std::to_string(row) + ": expected header '" +
                                  std::string(kRatingsCsvHeader) + "'");
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        auto fail = [&](const std::string& why) -> FormatError {
            return FormatError("row " + std::to_string(row) + ": " + why);
        };
        if (fields.size() != 5) throw fail("expected 5 fields, found " + std::to_string(fields.size()));

        RatingRecord r;
        auto lang = try_parse_language(fields[0]);
        if (!lang) throw fail("unknown language '" + fields[0] + "'");
        r.language = *lang;
        r.video_id = fields[1];
        r.rater_id = fields[2];
        auto crit = try_parse_criterion(fields[3]);
        if (!crit) throw fail("unknown criterion '" + fields[3] + "'");
        r.criterion = *crit;
        std::size_t used = 0;
        try {
            r.score = std::stoi(fields[4], &used);
        } catch (const std::exception&) {
            throw fail("score '" + fields[4] + "' is not an integer");
        }
        if (used != fields[4].size()) throw fail("score '" + fields[4] + "' is not an integer");
        if (r.score < kMinScore || r.score > kMaxScore)
            throw fail("score " + std::to_string(r.score) + " out of range 1-5");
        if (r.video_id.empty() || r.rater_id.empty()) throw fail("empty video_id or rater_id");
        out.push_back(std::move(r));
    }
    if (!header_seen) throw FormatError("row 1: missing header");
    return out;
}

inline std::string to_csv(const std::vector<RatingRecord>& ratings) {
    std::string out(kRatingsCsvHeader);
    out += '\n';
    for (const auto& r : ratings) {
        out += std::string(code(r.language)) + ',' + r.video_id + ',' + r.rater_id + ',' +
               std::string(to_string(r.criterion)) + ',' + std::to_string(r.score) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json matrix_json(const PairwiseMatrix& m) {
    auto rows = nlohmann::json::array();
    for (const auto& row : m.values) {
        auto r = nlohmann::json::array();
        for (double v : row) r.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
        rows.push_back(std::move(r));
    }
    return {{"raters", m.raters}, {"values", rows}};
}

inline std::string fixed3(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return buf;
}

} // namespace detail

inline nlohmann::json to_json(const AgreementReport& report) {
    auto entries = nlohmann::json::array();
    for (const auto& e : report.entries) {
        entries.push_back({{"language", code(e.language)},
                           {"criterion", to_string(e.criterion)},
                           {"raters", e.raters.size()},
                           {"videos", e.videos.size()},
                           {"cohen_avg", detail::optional_number(e.cohen_avg)},
                           {"fleiss", detail::optional_number(e.fleiss)},
                           {"pearson_avg", detail::optional_number(e.pearson_avg)},
                           {"cohen_matrix", detail::matrix_json(e.cohen)},
                           {"pearson_matrix", detail::matrix_json(e.pearson)}});
    }
    return {{"entries", entries}, {"warnings", report.warnings}};
}

/// Languages as rows; Cohen's, Fleiss' and Pearson's statistics as column
/// groups with one column per criterion.
inline std::string to_table(const AgreementReport& report) {
    std::map<Language, std::map<Criterion, const AgreementEntry*>> rows;
    for (const auto& e : report.entries) rows[e.language][e.criterion] = &e;

    std::ostringstream os;
    auto cell = [&](const std::string& s, int w) { os << std::left << std::setw(w) << s; };
    cell("Language", 10);
    for (const char* group : {"| Cohen's kappa", "| Fleiss' kappa", "| Pearson's r"}) cell(group, 26);
    os << "\n";
    cell("", 10);
    for (int g = 0; g < 3; ++g) {
        os << "| ";
        for (auto c : kAllCriteria) cell(std::string(short_name(c)), 8);
    }
    os << "\n";
    for (const auto& [lang, by_crit] : rows) {
        cell(std::string(display_name(lang)), 10);
        for (int g = 0; g < 3; ++g) {
            os << "| ";
            for (auto c : kAllCriteria) {
                auto it = by_crit.find(c);
                std::optional<double> v;
                if (it != by_crit.end()) v = g == 0 ? it->second->cohen_avg : g == 1 ? it->second->fleiss : it->second->pearson_avg;
                cell(detail::fixed3(v), 8);
            }
        }
        os << "\n";
    }
    for (const auto& w : report.warnings) os << "warning: " << w << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Published pairwise-correlation matrices

struct PccCase {
    int table = 0;
    Language language = Language::bn;
    Criterion criterion = Criterion::lip_sync;
    PairwiseMatrix matrix;
    double published = 0.0;
};

struct PccCheckRow {
    PccCase source;
    double computed = 0.0;
    bool match = false;
};

inline constexpr double kPccTolerance = 0.001;

inline std::vector<PccCase> parse_pcc_bundle(const nlohmann::json& doc) {
    std::vector<PccCase> out;
    try {
        for (const auto& m : doc.at("matrices")) {
            PccCase c;
            c.table = m.value("table", 0);
            auto lang = try_parse_language(m.at("language").get<std::string>());
            if (!lang) throw FormatError("unknown language " + m.at("language").dump());
            c.language = *lang;
            auto crit = try_parse_criterion(m.at("criterion").get<std::string>());
            if (!crit) throw FormatError("unknown criterion " + m.at("criterion").dump());
            c.criterion = *crit;
            c.matrix.raters = m.value("raters", std::vector<std::string>{});
            c.matrix.values = m.at("values").get<std::vector<std::vector<double>>>();
            c.published = m.at("published_pearson").get<double>();
            c.matrix.validate();
            if (c.matrix.dimension() < 2) throw FormatError("matrix dimension must be at least 2");
            out.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("matrix bundle: ") + e.what());
    }
    return out;
}

inline std::vector<PccCheckRow> check_pcc(const std::vector<PccCase>& cases, double tolerance = kPccTolerance) {
    std::vector<PccCheckRow> rows;
    for (const auto& c : cases) {
        const double computed = mean_pairwise(c.matrix);
        rows.push_back({c, computed, std::abs(computed - c.published) <= tolerance + 1e-12});
    }
    return rows;
}

} // namespace dubpipe::agreement
