#pragma once

// Query-log ingestion, monthly aggregation and seasonality targets.
//
// The seasonality of query q in calendar month m is its month-normalized
// traffic share, renormalized over the year:
//
//   V_qm = (t_qm / t_m) / sum_m' (t_qm' / t_m')
//
// where t_qm is the query's traffic in month m and t_m is the traffic of
// ALL queries in month m.

#include <sqac/error.hpp>
#include <sqac/text.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sqac::loglab {

inline constexpr int kMonths = 12;
inline constexpr std::uint64_t kDefaultKThreshold = 60;

struct MonthKey {
    int year = 0;
    int month = 1;  // 1..12

    friend auto operator<=>(const MonthKey&, const MonthKey&) = default;
};

struct LogEvent {
    std::string query;  // normalized
    MonthKey month_key;
    std::uint64_t count = 1;
};

using MonthlyCounts = std::array<std::uint64_t, kMonths>;

struct MonthlyVolumeTable {
    std::map<std::string, MonthlyCounts> cells;  // t_qm, index month-1
    MonthlyCounts month_totals{};               // t_m over all traffic
    std::vector<int> years_merged;              // sorted, unique

    std::uint64_t query_total(const std::string& query) const {
        auto it = cells.find(query);
        if (it == cells.end()) return 0;
        std::uint64_t s = 0;
        for (auto c : it->second) s += c;
        return s;
    }

    friend bool operator==(const MonthlyVolumeTable&, const MonthlyVolumeTable&) = default;
};

struct SeasonalityTarget {
    std::string query;
    int month = 1;  // 1..12
    double value = 0.0;

    friend bool operator==(const SeasonalityTarget&, const SeasonalityTarget&) = default;
};

/// Parsed event stream with malformed-line bookkeeping.
struct EventLog {
    std::vector<LogEvent> events;
    std::size_t lines_read = 0;
    std::size_t malformed = 0;
    std::vector<std::string> diagnostics;  // first few malformed lines

    static constexpr std::size_t kMaxDiagnostics = 20;
};

namespace detail {

inline bool parse_month_key(std::string_view s, MonthKey& out) {
    if (s.size() != 7 || s[4] != '-') return false;
    int year = 0;
    int month = 0;
    auto r1 = std::from_chars(s.data(), s.data() + 4, year);
    auto r2 = std::from_chars(s.data() + 5, s.data() + 7, month);
    if (r1.ec != std::errc{} || r1.ptr != s.data() + 4) return false;
    if (r2.ec != std::errc{} || r2.ptr != s.data() + 7) return false;
    if (month < 1 || month > 12) return false;
    out = {year, month};
    return true;
}

inline bool parse_count(std::string_view s, std::uint64_t& out) {
    if (s.empty()) return false;
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc{} && r.ptr == s.data() + s.size() && out >= 1;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

inline std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

}  // namespace detail

/// Parses one `query<TAB>YYYY-MM<TAB>count` line. Returns an empty string on
/// success, otherwise the reason the line was rejected.
inline std::string parse_event_line(std::string_view line, LogEvent& out) {
    auto fields = detail::split_tabs(detail::strip_cr(line));
    if (fields.size() != 3) return "expected 3 tab-separated fields, got " + std::to_string(fields.size());
    out.query = normalize_query(fields[0]);
    if (out.query.empty()) return "query is empty after normalization";
    if (!detail::parse_month_key(fields[1], out.month_key)) return "bad month key '" + std::string(fields[1]) + "'";
    if (!detail::parse_count(fields[2], out.count)) return "bad count '" + std::string(fields[2]) + "'";
    return {};
}

/// Reads an event stream. Malformed lines are counted, not fatal; a stream
/// with no valid event is an error.
inline EventLog read_events(std::istream& in, const std::string& source = "<stream>") {
    if (!in) throw ParseError("cannot read event source " + source);
    EventLog log;
    std::string line;
    while (std::getline(in, line)) {
        ++log.lines_read;
        std::string_view view = detail::strip_cr(line);
        if (view.empty() || view.front() == '#') continue;
        LogEvent ev;
        if (auto why = parse_event_line(view, ev); !why.empty()) {
            ++log.malformed;
            if (log.diagnostics.size() < EventLog::kMaxDiagnostics) {
                log.diagnostics.push_back(source + ":" + std::to_string(log.lines_read) + ": " + why);
            }
            continue;
        }
        log.events.push_back(std::move(ev));
    }
    if (log.events.empty()) {
        std::string msg = "no valid events in " + source + " (" + std::to_string(log.lines_read) +
                          " lines, " + std::to_string(log.malformed) + " malformed)";
        for (const auto& d : log.diagnostics) msg += "\n  " + d;
        throw ParseError(msg);
    }
    return log;
}

/// Sums counts per (query, calendar month). Totals include every event.
inline MonthlyVolumeTable aggregate(std::span<const LogEvent> events) {
    MonthlyVolumeTable table;
    std::set<int> years;
    for (const auto& ev : events) {
        const auto m = static_cast<std::size_t>(ev.month_key.month - 1);
        table.cells[ev.query][m] += ev.count;
        table.month_totals[m] += ev.count;
        years.insert(ev.month_key.year);
    }
    table.years_merged.assign(years.begin(), years.end());
    return table;
}

struct IngestResult {
    MonthlyVolumeTable table;
    std::size_t lines_read = 0;
    std::size_t malformed = 0;
    std::vector<std::string> diagnostics;
};

inline IngestResult ingest_events(std::istream& in, const std::string& source = "<stream>") {
    auto log = read_events(in, source);
    return {aggregate(log.events), log.lines_read, log.malformed, std::move(log.diagnostics)};
}

/// Cellwise sum across tables covering disjoint years.
inline MonthlyVolumeTable merge_years(std::span<const MonthlyVolumeTable> tables) {
    if (tables.empty()) throw InvalidArgument("merge_years: no tables");
    MonthlyVolumeTable out;
    std::set<int> years;
    for (const auto& t : tables) {
        for (int y : t.years_merged) {
            if (!years.insert(y).second) {
                throw InvalidArgument("merge_years: year " + std::to_string(y) +
                                      " appears in more than one table (would double count)");
            }
        }
        for (const auto& [query, counts] : t.cells) {
            auto& dst = out.cells[query];
            for (int m = 0; m < kMonths; ++m) dst[m] += counts[m];
        }
        for (int m = 0; m < kMonths; ++m) out.month_totals[m] += t.month_totals[m];
    }
    out.years_merged.assign(years.begin(), years.end());
    return out;
}

/// Computes 12 targets per query whose annual volume reaches `k_threshold`.
/// Months where the query has no traffic produce explicit zero targets.
inline std::vector<SeasonalityTarget> seasonality_targets(const MonthlyVolumeTable& table,
                                                          std::uint64_t k_threshold = kDefaultKThreshold) {
    if (k_threshold < 1) throw InvalidArgument("k_threshold must be >= 1");
    for (int m = 0; m < kMonths; ++m) {
        if (table.month_totals[m] == 0) {
            throw InvalidArgument("month " + std::to_string(m + 1) +
                                  " has no traffic; restrict the log to months with traffic");
        }
    }
    std::vector<SeasonalityTarget> out;
    for (const auto& [query, counts] : table.cells) {
        std::uint64_t total = 0;
        for (auto c : counts) total += c;
        if (total < k_threshold) continue;
        std::array<double, kMonths> share{};
        double norm = 0.0;
        for (int m = 0; m < kMonths; ++m) {
            share[m] = static_cast<double>(counts[m]) / static_cast<double>(table.month_totals[m]);
            norm += share[m];
        }
        for (int m = 0; m < kMonths; ++m) out.push_back({query, m + 1, share[m] / norm});
    }
    return out;
}

/// Keeps each query's 12 targets with probability `fraction` (seeded).
inline std::vector<SeasonalityTarget> sample_queries(std::span<const SeasonalityTarget> targets,
                                                     double fraction, std::uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0) throw InvalidArgument("sampling fraction must be in (0, 1]");
    if (fraction == 1.0) return {targets.begin(), targets.end()};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<SeasonalityTarget> out;
    const std::string* current = nullptr;
    bool keep = false;
    for (const auto& t : targets) {
        if (!current || *current != t.query) {
            current = &t.query;
            keep = u(rng) < fraction;
        }
        if (keep) out.push_back(t);
    }
    return out;
}

inline void write_targets(std::ostream& out, std::span<const SeasonalityTarget> targets) {
    char buf[64];
    for (const auto& t : targets) {
        std::snprintf(buf, sizeof buf, "\t%d\t%.9f\n", t.month, t.value);
        out << t.query << buf;
    }
}

inline std::vector<SeasonalityTarget> read_targets(std::istream& in, const std::string& source = "<stream>") {
    std::vector<SeasonalityTarget> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = detail::strip_cr(line);
        if (view.empty() || view.front() == '#') continue;
        auto fields = detail::split_tabs(view);
        auto fail = [&](const std::string& why) {
            return ParseError(source + ":" + std::to_string(lineno) + ": " + why);
        };
        if (fields.size() != 3) throw fail("expected query<TAB>month<TAB>value");
        SeasonalityTarget t;
        t.query = normalize_query(fields[0]);
        if (t.query.empty()) throw fail("empty query");
        auto r = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), t.month);
        if (r.ec != std::errc{} || t.month < 1 || t.month > 12) throw fail("bad month");
        try {
            std::size_t used = 0;
            t.value = std::stod(std::string(fields[2]), &used);
            if (used != fields[2].size()) throw fail("bad value");
        } catch (const std::logic_error&) {
            throw fail("bad value");
        }
        if (!(t.value >= 0.0 && t.value <= 1.0)) throw fail("value outside [0,1]");
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace sqac::loglab
