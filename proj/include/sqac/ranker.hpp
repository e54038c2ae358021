#pragma once

// Two-stage ranking. L1 is an offline engagement score stored in the index;
// L2 re-ranks the top-N L1 candidates at request time:
//
//   final = (1 - alpha) * minmax(l1 over candidates) + alpha * S_qm
//
// and returns the top K.

#include <sqac/completion_index.hpp>
#include <sqac/error.hpp>
#include <sqac/loglab.hpp>
#include <sqac/seasonnet/model.hpp>
#include <sqac/seasonnet/vocab.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <concepts>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

namespace sqac::ranker {

struct EngagementRecord {
    std::string query;
    double add_to_carts = 0.0;
    double clicks = 0.0;
    double impressions = 0.0;
};

struct L1Weights {
    double add_to_carts = 1.0;
    double clicks = 0.2;
    double impressions = 0.01;

    void validate() const {
        if (add_to_carts < 0 || clicks < 0 || impressions < 0) throw InvalidArgument("l1 weights must be non-negative");
        if (add_to_carts == 0 && clicks == 0 && impressions == 0) throw InvalidArgument("l1 weights are all zero");
    }
};

inline double l1_score(const EngagementRecord& r, const L1Weights& w) {
    w.validate();
    if (r.add_to_carts < 0 || r.clicks < 0 || r.impressions < 0) {
        throw InvalidArgument("engagement counts must be non-negative");
    }
    return w.add_to_carts * r.add_to_carts + w.clicks * r.clicks + w.impressions * r.impressions;
}

/// Engagement TSV: `query<TAB>add_to_carts<TAB>clicks<TAB>impressions`.
inline std::vector<EngagementRecord> read_engagement(std::istream& in, const std::string& source = "<stream>") {
    std::vector<EngagementRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        for (auto tab = rest.find('\t'); tab != std::string_view::npos; tab = rest.find('\t')) {
            f.push_back(rest.substr(0, tab));
            rest.remove_prefix(tab + 1);
        }
        f.push_back(rest);
        auto fail = [&](const std::string& why) { return ParseError(source + ":" + std::to_string(lineno) + ": " + why); };
        if (f.size() != 4) throw fail("expected query<TAB>add_to_carts<TAB>clicks<TAB>impressions");
        EngagementRecord r{normalize_query(f[0])};
        double* slots[] = {&r.add_to_carts, &r.clicks, &r.impressions};
        for (int i = 0; i < 3; ++i) {
            const auto& s = f[static_cast<std::size_t>(i) + 1];
            auto res = std::from_chars(s.data(), s.data() + s.size(), *slots[i]);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || *slots[i] < 0) throw fail("bad count");
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_engagement(std::ostream& out, std::span<const EngagementRecord> records) {
    char buf[96];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "\t%.6g\t%.6g\t%.6g\n", r.add_to_carts, r.clicks, r.impressions);
        out << r.query << buf;
    }
}

/// Index corpus from a volume table: f(q) is the annual volume; L1 comes
/// from the engagement record when present, otherwise from impressions
/// equal to f(q).
inline std::vector<IndexEntry> score_corpus(const loglab::MonthlyVolumeTable& table,
                                            std::span<const EngagementRecord> engagement, const L1Weights& weights,
                                            std::uint64_t min_frequency = 1) {
    std::unordered_map<std::string, const EngagementRecord*> by_query;
    for (const auto& r : engagement) by_query.emplace(r.query, &r);
    std::vector<IndexEntry> out;
    for (const auto& [query, counts] : table.cells) {
        std::uint64_t f = 0;
        for (auto c : counts) f += c;
        if (f < min_frequency) continue;
        auto it = by_query.find(query);
        const EngagementRecord rec = it != by_query.end() ? *it->second
                                                          : EngagementRecord{query, 0.0, 0.0, static_cast<double>(f)};
        out.push_back({query, f, l1_score(rec, weights)});
    }
    return out;
}

struct L2Config {
    double seasonality_weight = 0.3;  // alpha
    std::size_t n_candidates = 50;    // N
    std::size_t k_display = 10;       // K

    void validate() const {
        if (!(seasonality_weight >= 0.0 && seasonality_weight <= 1.0)) {
            throw InvalidArgument("seasonality weight must be in [0,1]");
        }
        if (k_display < 1 || n_candidates < k_display) throw InvalidArgument("need N >= K >= 1");
    }
};

struct RankedSuggestion {
    std::string query;
    double l1_score = 0.0;
    double seasonality = 0.0;
    double final_score = 0.0;
    std::size_t rank = 0;  // 1-based

    friend bool operator==(const RankedSuggestion&, const RankedSuggestion&) = default;
};

/// Anything that yields S_qm in [0,1] for a (query, month) pair.
template <typename S>
concept SeasonalityScorer = requires(const S& s, std::string_view q, int m) {
    { s.score(q, m) } -> std::convertible_to<double>;
};

/// Live model inference.
class ModelScorer {
public:
    explicit ModelScorer(const seasonnet::SeasonModel& model) : model_(&model) {}
    double score(std::string_view query, int month) const { return seasonnet::predict(*model_, query, month); }

private:
    const seasonnet::SeasonModel* model_;
};

/// Precomputed 12-month scores per query; unknown queries score `fallback`.
class SeasonalityTable {
public:
    using Scores = std::array<double, 12>;

    void set(std::string query, const Scores& scores) { table_[std::move(query)] = scores; }

    const Scores* find(std::string_view query) const {
        auto it = table_.find(query);
        return it == table_.end() ? nullptr : &it->second;
    }

    double score(std::string_view query, int month) const {
        if (month < 1 || month > 12) throw InvalidArgument("month must be in 1..12");
        const auto* s = find(query);
        return s ? (*s)[static_cast<std::size_t>(month - 1)] : fallback_;
    }

    void set_fallback(double v) { fallback_ = v; }
    double fallback() const { return fallback_; }
    std::size_t size() const { return table_.size(); }

    /// Scores every indexed query with `model`, using up to `threads` workers.
    static SeasonalityTable precompute(const seasonnet::SeasonModel& model, std::span<const IndexEntry> entries,
                                       unsigned threads = std::thread::hardware_concurrency()) {
        std::vector<Scores> scores(entries.size());
        threads = std::max(1u, std::min<unsigned>(threads, 16));
        auto work = [&](std::size_t begin, std::size_t step) {
            for (std::size_t i = begin; i < entries.size(); i += step) {
                scores[i] = seasonnet::predict_all_months(model, entries[i].query);
            }
        };
        if (threads == 1 || entries.size() < 1024) {
            work(0, 1);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        }
        SeasonalityTable table;
        table.table_.reserve(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) table.table_.emplace(entries[i].query, scores[i]);
        return table;
    }

private:
    std::unordered_map<std::string, Scores, seasonnet::StringHash, std::equal_to<>> table_;
    double fallback_ = 0.0;
};

/// SeasonalityTable rows laid out in index order, so candidates coming out
/// of `index` are scored without hashing. Must not outlive `index`.
class IndexedSeasonality {
public:
    IndexedSeasonality() = default;
    IndexedSeasonality(const CompletionIndex& index, const SeasonalityTable& table) : table_(&table) {
        const auto entries = index.entries();
        base_ = entries.data();
        rows_.reserve(entries.size());
        for (const auto& e : entries) {
            SeasonalityTable::Scores row;
            row.fill(table.fallback());
            if (const auto* s = table.find(e.query)) row = *s;
            rows_.push_back(row);
        }
    }

    double score(std::string_view query, int month) const { return table_->score(query, month); }

    double score(const IndexEntry& e, int month) const {
        if (month < 1 || month > 12) throw InvalidArgument("month must be in 1..12");
        if (base_ && &e >= base_ && &e < base_ + rows_.size()) {
            return rows_[static_cast<std::size_t>(&e - base_)][static_cast<std::size_t>(month - 1)];
        }
        return table_->score(e.query, month);
    }

private:
    const SeasonalityTable* table_ = nullptr;
    const IndexEntry* base_ = nullptr;
    std::vector<SeasonalityTable::Scores> rows_;
};

static_assert(SeasonalityScorer<ModelScorer>);
static_assert(SeasonalityScorer<SeasonalityTable>);
static_assert(SeasonalityScorer<IndexedSeasonality>);

/// Blends L1 with seasonality over `candidates` (top-N by L1, as returned by
/// CompletionIndex::complete in L1 order) and keeps the best K. Sort key:
/// final score desc, then L1 desc, then query text asc; with alpha = 0 this
/// reproduces the L1 order exactly.
template <SeasonalityScorer Scorer>
std::vector<RankedSuggestion> l2_rerank(std::span<const Completion> candidates, int month, const Scorer& scorer,
                                        const L2Config& cfg) {
    cfg.validate();
    if (month < 1 || month > 12) throw InvalidArgument("month must be in 1..12");
    std::vector<RankedSuggestion> out;
    if (candidates.empty()) return out;
    const auto n = std::min(candidates.size(), cfg.n_candidates);
    double lo = candidates[0].entry->l1_score;
    double hi = lo;
    for (std::size_t i = 0; i < n; ++i) {
        lo = std::min(lo, candidates[i].entry->l1_score);
        hi = std::max(hi, candidates[i].entry->l1_score);
    }
    const double alpha = cfg.seasonality_weight;
    struct Scored {
        double final_score, l1, s;
        std::size_t i;
    };
    std::vector<Scored> scored;
    scored.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = *candidates[i].entry;
        const double norm = hi > lo ? (e.l1_score - lo) / (hi - lo) : 0.5;
        double raw = 0.0;
        if constexpr (requires { scorer.score(e, month); }) {
            raw = scorer.score(e, month);
        } else {
            raw = scorer.score(e.query, month);
        }
        const double s = std::clamp(raw, 0.0, 1.0);
        scored.push_back({(1.0 - alpha) * norm + alpha * s, e.l1_score, s, i});
    }
    const auto k = std::min(cfg.k_display, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                      [&](const Scored& a, const Scored& b) {
                          if (a.final_score != b.final_score) return a.final_score > b.final_score;
                          if (a.l1 != b.l1) return a.l1 > b.l1;
                          return candidates[a.i].entry->query < candidates[b.i].entry->query;
                      });
    out.reserve(k);
    for (std::size_t r = 0; r < k; ++r) {
        const auto& x = scored[r];
        out.push_back({candidates[x.i].entry->query, x.l1, x.s, x.final_score, r + 1});
    }
    return out;
}

/// Queries the re-ranker surfaced in its top K that were not in L1's top K.
inline std::vector<std::string> admitted_by_rerank(std::span<const Completion> candidates,
                                                   std::span<const RankedSuggestion> reranked, std::size_t k) {
    std::set<std::string_view> l1_top;
    for (std::size_t i = 0; i < std::min(k, candidates.size()); ++i) l1_top.insert(candidates[i].entry->query);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, reranked.size()); ++i) {
        if (!l1_top.count(reranked[i].query)) out.push_back(reranked[i].query);
    }
    return out;
}

}  // namespace sqac::ranker
