#pragma once

// Offline prefix-replay evaluation. Each ground-truth query is typed one
// character at a time; every prefix is a separate request whose reciprocal
// rank is 1/rank of the truth among the K shown suggestions (0 if absent).

#include <sqac/completion_index.hpp>
#include <sqac/container.hpp>
#include <sqac/error.hpp>
#include <sqac/loglab.hpp>
#include <sqac/ranker.hpp>
#include <sqac/text.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sqac::eval {

struct CaseSpec {
    std::string query;
    int month = 1;

    friend bool operator==(const CaseSpec&, const CaseSpec&) = default;
};

struct ReplayCase {
    std::string truth;
    int month = 1;
    std::vector<std::string> prefixes;  // increasing length, last == truth
};

/// Expands (query, month) pairs into replay cases with every non-empty
/// code point prefix.
inline std::vector<ReplayCase> gen_cases(std::span<const CaseSpec> specs) {
    if (specs.empty()) throw InvalidArgument("gen_cases: no queries");
    std::vector<ReplayCase> out;
    out.reserve(specs.size());
    for (const auto& s : specs) {
        if (s.month < 1 || s.month > 12) throw InvalidArgument("gen_cases: month outside 1..12");
        ReplayCase c{normalize_query(s.query), s.month, {}};
        if (c.truth.empty()) throw InvalidArgument("gen_cases: empty query");
        const auto cps = utf8::decode(c.truth);
        for (std::size_t len = 1; len <= cps.size(); ++len) {
            c.prefixes.push_back(utf8::encode(std::u32string_view(cps).substr(0, len)));
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<CaseSpec> read_cases(std::istream& in, const std::string& source = "<stream>") {
    std::vector<CaseSpec> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        CaseSpec c;
        if (tab == std::string::npos) throw ParseError(source + ":" + std::to_string(lineno) + ": expected query<TAB>month");
        c.query = line.substr(0, tab);
        const char* b = line.data() + tab + 1;
        const char* e = line.data() + line.size();
        auto r = std::from_chars(b, e, c.month);
        if (r.ec != std::errc{} || r.ptr != e || c.month < 1 || c.month > 12) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": bad month");
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline void write_cases(std::ostream& out, std::span<const CaseSpec> cases) {
    for (const auto& c : cases) out << c.query << '\t' << c.month << '\n';
}

/// Draws `n` replay cases from an event log with probability proportional
/// to event counts; the month of each case is the month of its event.
inline std::vector<CaseSpec> sample_cases(std::span<const loglab::LogEvent> events, std::size_t n, std::uint64_t seed) {
    if (events.empty()) throw InvalidArgument("sample_cases: no events");
    std::vector<double> weights;
    weights.reserve(events.size());
    for (const auto& ev : events) weights.push_back(static_cast<double>(ev.count));
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::mt19937_64 rng(seed);
    std::vector<CaseSpec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ev = events[pick(rng)];
        out.push_back({ev.query, ev.month_key.month});
    }
    return out;
}

inline double reciprocal_rank(std::span<const ranker::RankedSuggestion> suggestions, std::string_view truth) {
    for (std::size_t i = 0; i < suggestions.size(); ++i) {
        if (suggestions[i].query == truth) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

/// Index + seasonality source + L2 settings.
template <ranker::SeasonalityScorer Scorer>
struct Pipeline {
    const CompletionIndex* index = nullptr;
    const Scorer* scorer = nullptr;
    ranker::L2Config config;
    std::string model_hash;  // recorded in the report fingerprint

    std::vector<ranker::RankedSuggestion> suggest(std::string_view prefix, int month) const {
        if (!index || !scorer) throw InvalidArgument("pipeline: missing index or seasonality model");
        const auto candidates = index->complete(prefix, config.n_candidates, CompletionOrder::L1);
        return ranker::l2_rerank(std::span<const Completion>(candidates), month, *scorer, config);
    }
};

struct ReportFingerprint {
    double alpha = 0.0;
    std::size_t k = 0;
    std::size_t n = 0;
    std::string model_hash;
    std::string cases_hash;

    friend bool operator==(const ReportFingerprint&, const ReportFingerprint&) = default;
};

struct EvalReport {
    std::vector<double> reciprocal_ranks;  // one per prefix, case order
    double mrr = 0.0;
    std::size_t case_count = 0;
    std::size_t prefix_count = 0;
    ReportFingerprint fingerprint;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline std::string cases_hash(std::span<const ReplayCase> cases) {
    std::string blob;
    for (const auto& c : cases) {
        blob += c.truth;
        blob += '\t';
        blob += std::to_string(c.month);
        blob += '\n';
    }
    return container::fingerprint(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()));
}

template <ranker::SeasonalityScorer Scorer>
EvalReport run_eval(std::span<const ReplayCase> cases, const Pipeline<Scorer>& pipeline) {
    if (!pipeline.index || !pipeline.scorer) throw InvalidArgument("run_eval: missing index or seasonality model");
    pipeline.config.validate();
    EvalReport report;
    report.case_count = cases.size();
    double sum = 0.0;
    for (const auto& c : cases) {
        for (const auto& p : c.prefixes) {
            const auto shown = pipeline.suggest(p, c.month);
            const double rr = reciprocal_rank(shown, c.truth);
            report.reciprocal_ranks.push_back(rr);
            sum += rr;
        }
    }
    report.prefix_count = report.reciprocal_ranks.size();
    report.mrr = report.prefix_count ? sum / static_cast<double>(report.prefix_count) : 0.0;
    report.fingerprint = {pipeline.config.seasonality_weight, pipeline.config.k_display, pipeline.config.n_candidates,
                          pipeline.model_hash, cases_hash(cases)};
    return report;
}

/// Two-sided exact sign test on paired differences (zeros dropped).
inline double sign_test_p(std::size_t improved, std::size_t worsened) {
    const auto n = improved + worsened;
    if (n == 0) return 1.0;
    const auto k = std::min(improved, worsened);
    // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space
    const double log_half_n = static_cast<double>(n) * std::log(0.5);
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    for (std::size_t i = 0; i <= k; ++i) {
        const double t = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                         std::lgamma(static_cast<double>(n - i) + 1) + log_half_n;
        terms.push_back(t);
        max_term = std::max(max_term, t);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return std::min(1.0, 2.0 * std::exp(max_term) * acc);
}

struct LiftReport {
    double control_mrr = 0.0;
    double test_mrr = 0.0;
    double relative_lift = 0.0;  // (test - control) / control; NaN when control is 0 and test is not
    std::vector<double> deltas;  // per prefix, test - control
    std::size_t improved = 0;
    std::size_t worsened = 0;
    std::size_t unchanged = 0;
    double sign_test_p = 1.0;
};

inline LiftReport ab_compare(const EvalReport& control, const EvalReport& test) {
    if (control.fingerprint.cases_hash != test.fingerprint.cases_hash ||
        control.prefix_count != test.prefix_count || control.case_count != test.case_count) {
        throw InvalidArgument("ab_compare: reports were produced on different case sets");
    }
    LiftReport lift;
    lift.control_mrr = control.mrr;
    lift.test_mrr = test.mrr;
    if (control.mrr > 0.0) {
        lift.relative_lift = (test.mrr - control.mrr) / control.mrr;
    } else {
        lift.relative_lift = test.mrr == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    }
    lift.deltas.reserve(control.prefix_count);
    for (std::size_t i = 0; i < control.prefix_count; ++i) {
        const double d = test.reciprocal_ranks[i] - control.reciprocal_ranks[i];
        lift.deltas.push_back(d);
        if (d > 0) {
            ++lift.improved;
        } else if (d < 0) {
            ++lift.worsened;
        } else {
            ++lift.unchanged;
        }
    }
    lift.sign_test_p = sign_test_p(lift.improved, lift.worsened);
    return lift;
}

inline nlohmann::json to_json(const EvalReport& r) {
    return {{"mrr", r.mrr},
            {"cases", r.case_count},
            {"prefixes", r.prefix_count},
            {"config",
             {{"alpha", r.fingerprint.alpha},
              {"k", r.fingerprint.k},
              {"n", r.fingerprint.n},
              {"model_hash", r.fingerprint.model_hash},
              {"cases_hash", r.fingerprint.cases_hash}}}};
}

inline nlohmann::json to_json(const LiftReport& l) {
    nlohmann::json j = {{"control_mrr", l.control_mrr},
                        {"test_mrr", l.test_mrr},
                        {"improved", l.improved},
                        {"worsened", l.worsened},
                        {"unchanged", l.unchanged},
                        {"sign_test_p", l.sign_test_p}};
    j["lift_percent"] = std::isnan(l.relative_lift) ? nlohmann::json(nullptr) : nlohmann::json(100.0 * l.relative_lift);
    return j;
}

}  // namespace sqac::eval
