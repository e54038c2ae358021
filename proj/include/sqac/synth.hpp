#pragma once

// Deterministic synthetic query logs with planted seasonality. A stand-in for
// production search logs at desk scale.

#include <sqac/error.hpp>
#include <sqac/loglab.hpp>
#include <sqac/ranker.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sqac::synth {

inline std::map<std::string, int> default_seasonal_tokens() {
    return {{"winter", 1},      {"valentines", 2}, {"shamrock", 3},      {"easter", 4},
            {"memorial", 5},    {"graduation", 6}, {"fireworks", 7},     {"dorm", 8},
            {"tailgate", 9},    {"halloween", 10}, {"thanksgiving", 11}, {"christmas", 12}};
}

struct SynthSpec {
    std::size_t n_queries = 5000;
    double seasonal_fraction = 0.5;
    std::map<std::string, int> seasonal_tokens = default_seasonal_tokens();
    double noise = 0.2;  // multiplicative jitter exp(noise * U(-1,1)) per month
    std::uint64_t seed = 7;
    std::vector<int> years = {2023};
    std::uint64_t min_volume = 100;   // per query per year
    double median_volume = 400.0;
    double volume_sigma = 1.0;        // lognormal spread of annual volume

    void validate() const {
        if (n_queries == 0) throw InvalidArgument("synth: n_queries must be positive");
        if (!(seasonal_fraction >= 0.0 && seasonal_fraction <= 1.0)) {
            throw InvalidArgument("synth: seasonal_fraction must be in [0,1]");
        }
        if (seasonal_fraction > 0.0 && seasonal_tokens.empty()) {
            throw InvalidArgument("synth: seasonal queries requested but no seasonal tokens given");
        }
        for (const auto& [tok, month] : seasonal_tokens) {
            if (month < 1 || month > 12) throw InvalidArgument("synth: token '" + tok + "' has month outside 1..12");
            if (tok.empty() || normalize_query(tok) != tok || tok.find(' ') != std::string::npos) {
                throw InvalidArgument("synth: seasonal token '" + tok + "' must be a single normalized word");
            }
        }
        if (!(noise >= 0.0)) throw InvalidArgument("synth: noise must be >= 0");
        if (years.empty()) throw InvalidArgument("synth: at least one year required");
        if (min_volume == 0 || !(median_volume > 0.0) || !(volume_sigma >= 0.0)) {
            throw InvalidArgument("synth: volume parameters must be positive");
        }
    }
};

inline void from_json(const nlohmann::json& j, SynthSpec& s) {
    s.n_queries = j.value("n_queries", s.n_queries);
    s.seasonal_fraction = j.value("seasonal_fraction", s.seasonal_fraction);
    if (j.contains("seasonal_tokens")) s.seasonal_tokens = j.at("seasonal_tokens").get<std::map<std::string, int>>();
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    s.years = j.value("years", s.years);
    s.min_volume = j.value("min_volume", s.min_volume);
    s.median_volume = j.value("median_volume", s.median_volume);
    s.volume_sigma = j.value("volume_sigma", s.volume_sigma);
}

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = {{"n_queries", s.n_queries},         {"seasonal_fraction", s.seasonal_fraction},
         {"seasonal_tokens", s.seasonal_tokens}, {"noise", s.noise},
         {"seed", s.seed},                   {"years", s.years},
         {"min_volume", s.min_volume},       {"median_volume", s.median_volume},
         {"volume_sigma", s.volume_sigma}};
}

struct SynthQuery {
    std::string query;
    std::string planted_token;  // empty for non-seasonal queries
    int peak_month = 0;         // 0 for non-seasonal queries
    std::uint64_t annual_volume = 0;
};

namespace detail {

inline const std::vector<std::string>& nouns() {
    static const std::vector<std::string> words = {
        "hats", "gloves", "scarf", "boots", "jacket", "coat", "socks", "sweater", "blanket", "pillow",
        "mattress", "lamp", "rug", "curtains", "towels", "mug", "plates", "candles", "vase", "mirror",
        "chair", "table", "desk", "shelf", "basket", "bins", "hooks", "frame", "clock", "fan",
        "heater", "grill", "cooler", "tent", "lantern", "backpack", "bottle", "thermos", "speaker", "headphones",
        "charger", "cable", "keyboard", "mouse", "monitor", "printer", "router", "camera", "tripod", "drone",
        "toys", "puzzle", "blocks", "dolls", "games", "cards", "stickers", "markers", "crayons", "paint",
        "shirt", "dress", "shorts", "jeans", "sandals", "sneakers", "slippers", "pajamas", "leggings", "hoodie",
        "wreath", "lights", "banner", "balloons", "napkins", "cups", "tablecloth", "ornaments", "garland", "costume",
        "cookies", "chocolate", "candy", "snacks", "coffee", "tea", "juice", "cereal", "pasta", "sauce",
        "shampoo", "soap", "lotion", "sunscreen", "razor", "toothbrush", "perfume", "makeup", "brush", "comb",
        "planter", "seeds", "hose", "shovel", "rake", "mower", "bench", "umbrella", "hammock", "flag",
        "bike", "helmet", "skates", "ball", "racket", "weights", "mat", "jersey", "cleats", "goggles",
    };
    return words;
}

inline const std::vector<std::string>& modifiers() {
    static const std::vector<std::string> words = {
        "kids", "mens", "womens", "baby", "large", "small", "mini", "portable", "wireless", "wooden",
        "metal", "plastic", "cotton", "wool", "leather", "red", "blue", "black", "white", "pink",
        "green", "gold", "silver", "cheap", "premium", "outdoor", "indoor", "electric", "vintage", "modern",
        "foldable", "waterproof", "organic", "scented", "heavy", "soft", "smart", "classic", "custom", "deluxe",
    };
    return words;
}

template <typename Rng>
const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
    return v[d(rng)];
}

inline std::array<double, 12> seasonal_profile(int peak_month) {
    std::array<double, 12> w{};
    w.fill(0.15 / 9.0);
    const int p = peak_month - 1;
    w[static_cast<std::size_t>(p)] = 0.55;
    w[static_cast<std::size_t>((p + 11) % 12)] = 0.15;
    w[static_cast<std::size_t>((p + 1) % 12)] = 0.15;
    return w;
}

}  // namespace detail

/// Draws the query population. Deterministic in `spec.seed`.
inline std::vector<SynthQuery> generate_queries(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::vector<std::pair<std::string, int>> tokens(spec.seasonal_tokens.begin(), spec.seasonal_tokens.end());
    const auto n_seasonal = static_cast<std::size_t>(std::llround(spec.seasonal_fraction * static_cast<double>(spec.n_queries)));
    std::set<std::string> seen;
    std::vector<SynthQuery> out;
    out.reserve(spec.n_queries);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> token_pick(0, tokens.empty() ? 0 : tokens.size() - 1);
    const auto& nouns = detail::nouns();
    const auto& mods = detail::modifiers();
    const std::size_t max_attempts = 200 * spec.n_queries + 1000;

    std::size_t attempts = 0;
    while (out.size() < spec.n_queries) {
        if (++attempts > max_attempts) {
            throw InvalidArgument("synth: cannot generate " + std::to_string(spec.n_queries) + " distinct queries");
        }
        SynthQuery q;
        const bool seasonal = out.size() < n_seasonal;
        const double shape = u(rng);
        if (seasonal) {
            const auto& [tok, month] = tokens[token_pick(rng)];
            q.planted_token = tok;
            q.peak_month = month;
            if (shape < 0.5) {
                q.query = tok + " " + detail::pick(nouns, rng);
            } else if (shape < 0.75) {
                q.query = detail::pick(mods, rng) + " " + tok + " " + detail::pick(nouns, rng);
            } else {
                q.query = tok + " " + detail::pick(nouns, rng) + " " + detail::pick(nouns, rng);
            }
        } else {
            if (shape < 0.2) {
                q.query = detail::pick(nouns, rng);
            } else if (shape < 0.5) {
                q.query = detail::pick(mods, rng) + " " + detail::pick(nouns, rng);
            } else if (shape < 0.75) {
                q.query = detail::pick(nouns, rng) + " " + detail::pick(nouns, rng);
            } else {
                q.query = detail::pick(mods, rng) + " " + detail::pick(nouns, rng) + " " + detail::pick(nouns, rng);
            }
        }
        const double volume = spec.median_volume * std::exp(spec.volume_sigma * gauss(rng));
        q.annual_volume = std::max<std::uint64_t>(spec.min_volume, static_cast<std::uint64_t>(std::llround(volume)));
        if (!seen.insert(q.query).second) continue;
        out.push_back(std::move(q));
    }
    return out;
}

/// Per-(query, year) monthly counts after jitter and rounding.
inline std::vector<loglab::LogEvent> synth_events(const SynthSpec& spec, std::span<const SynthQuery> queries) {
    std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<loglab::LogEvent> events;
    for (const auto& q : queries) {
        std::array<double, 12> base{};
        if (q.peak_month) {
            base = detail::seasonal_profile(q.peak_month);
        } else {
            base.fill(1.0 / 12.0);
        }
        for (int year : spec.years) {
            std::array<double, 12> w{};
            double norm = 0.0;
            for (std::size_t m = 0; m < 12; ++m) {
                w[m] = base[m] * std::exp(spec.noise * u(rng));
                norm += w[m];
            }
            for (std::size_t m = 0; m < 12; ++m) {
                const auto count = static_cast<std::uint64_t>(
                    std::llround(static_cast<double>(q.annual_volume) * w[m] / norm));
                if (count == 0) continue;
                events.push_back({q.query, {year, static_cast<int>(m) + 1}, count});
            }
        }
    }
    return events;
}

inline void write_events(std::ostream& out, std::span<const loglab::LogEvent> events) {
    char buf[48];
    for (const auto& ev : events) {
        std::snprintf(buf, sizeof buf, "\t%04d-%02d\t%llu\n", ev.month_key.year, ev.month_key.month,
                      static_cast<unsigned long long>(ev.count));
        out << ev.query << buf;
    }
}

/// Renders the full event log for a spec as TSV text.
inline std::string synth_logs(const SynthSpec& spec) {
    const auto queries = generate_queries(spec);
    const auto events = synth_events(spec, queries);
    std::ostringstream out;
    out << "# synthetic query log, seed " << spec.seed << "\n";
    write_events(out, events);
    return out.str();
}

/// Engagement counts correlated with volume: impressions ~ f(q) * U(3,6),
/// click-through U(0.05,0.25) of impressions, add-to-cart U(0.05,0.3) of clicks.
inline std::vector<ranker::EngagementRecord> synth_engagement(std::span<const SynthQuery> queries, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xA5A5A5A5DEADBEEFULL);
    std::uniform_real_distribution<double> imp(3.0, 6.0), ctr(0.05, 0.25), atc(0.05, 0.3);
    std::vector<ranker::EngagementRecord> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
        ranker::EngagementRecord r{q.query};
        r.impressions = std::round(static_cast<double>(q.annual_volume) * imp(rng));
        r.clicks = std::round(r.impressions * ctr(rng));
        r.add_to_carts = std::round(r.clicks * atc(rng));
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace sqac::synth
