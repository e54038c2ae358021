#pragma once

// Prefix tree over the indexed query corpus.
//
// Entries are stored sorted by code point order, so the completions of any
// prefix form one contiguous range. Each trie node records that range; nodes
// whose range is wide carry a small precomputed top list per ranking order.

#include <sqac/container.hpp>
#include <sqac/error.hpp>
#include <sqac/text.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sqac {

struct IndexEntry {
    std::string query;
    std::uint64_t frequency = 0;  // f(q)
    double l1_score = 0.0;

    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

enum class CompletionOrder { Mpc, L1 };

struct Completion {
    const IndexEntry* entry = nullptr;
    double score = 0.0;
};

class CompletionIndex {
public:
    static constexpr std::string_view kMagic = "SQIX";
    static constexpr std::uint16_t kVersion = 1;
    static constexpr std::size_t kCacheSize = 64;
    static constexpr std::size_t kCacheThreshold = 256;

    /// Empty index: every lookup returns no completions.
    CompletionIndex() = default;

    /// Queries are normalized; duplicates (after normalization) and empty
    /// queries are rejected.
    static CompletionIndex build(std::vector<IndexEntry> entries) {
        if (entries.empty()) throw InvalidArgument("index: no entries");
        for (auto& e : entries) {
            e.query = normalize_query(e.query);
            if (e.query.empty()) throw InvalidArgument("index: empty query");
        }
        std::sort(entries.begin(), entries.end(),
                  [](const IndexEntry& a, const IndexEntry& b) { return a.query < b.query; });
        for (std::size_t i = 1; i < entries.size(); ++i) {
            if (entries[i].query == entries[i - 1].query) {
                throw InvalidArgument("index: duplicate query '" + entries[i].query + "'");
            }
        }
        CompletionIndex idx;
        idx.entries_ = std::move(entries);
        idx.total_frequency_ = 0;
        for (const auto& e : idx.entries_) idx.total_frequency_ += e.frequency;
        idx.build_trie();
        return idx;
    }

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::uint64_t total_frequency() const { return total_frequency_; }
    std::span<const IndexEntry> entries() const { return entries_; }
    std::size_t node_count() const { return nodes_.size(); }

    const IndexEntry* find(std::string_view query) const {
        const auto q = normalize_query(query);
        auto it = std::lower_bound(entries_.begin(), entries_.end(), q,
                                   [](const IndexEntry& e, const std::string& s) { return e.query < s; });
        return (it != entries_.end() && it->query == q) ? &*it : nullptr;
    }

    /// MostPopularCompletion weight f(q) / sum f.
    double mpc_weight(std::string_view query) const {
        const auto* e = find(query);
        if (!e) throw InvalidArgument("index: unknown query '" + std::string(query) + "'");
        if (total_frequency_ == 0) throw InvalidArgument("index: total frequency is zero");
        return static_cast<double>(e->frequency) / static_cast<double>(total_frequency_);
    }

    double score(const IndexEntry& e, CompletionOrder order) const {
        if (order == CompletionOrder::L1) return e.l1_score;
        return total_frequency_ == 0 ? 0.0
                                     : static_cast<double>(e.frequency) / static_cast<double>(total_frequency_);
    }

    /// Up to `n` indexed queries starting with `prefix`, best score first,
    /// ties by ascending query text. The prefix is normalized with
    /// normalize_prefix.
    std::vector<Completion> complete(std::string_view prefix, std::size_t n, CompletionOrder order) const {
        std::vector<Completion> out;
        if (n == 0 || nodes_.empty()) return out;
        const auto node_id = locate(utf8::decode(normalize_prefix(prefix)));
        if (node_id == kNone) return out;
        const Node& node = nodes_[node_id];
        const auto range = node.hi - node.lo;
        const auto take = std::min<std::size_t>(n, range);
        out.reserve(take);
        if (node.cache != kNone && take <= kCacheSize) {
            const auto& cached = caches_[node.cache][static_cast<std::size_t>(order)];
            for (std::size_t i = 0; i < take; ++i) {
                const auto& e = entries_[cached[i]];
                out.push_back({&e, score(e, order)});
            }
            return out;
        }
        auto ids = top_ids(node.lo, node.hi, take, order);
        for (auto id : ids) out.push_back({&entries_[id], score(entries_[id], order)});
        return out;
    }

    // persistence

    std::vector<std::uint8_t> serialize() const {
        container::Writer w(kMagic, kVersion);
        w.put_u64(entries_.size());
        for (const auto& e : entries_) {
            w.put_string(e.query);
            w.put_u64(e.frequency);
            w.put_f64(e.l1_score);
        }
        return std::move(w).finish();
    }

    static CompletionIndex deserialize(std::span<const std::uint8_t> bytes) {
        container::Reader r(bytes, kMagic, kVersion);
        const auto n = r.get_u64();
        std::vector<IndexEntry> entries;
        for (std::uint64_t i = 0; i < n; ++i) {
            IndexEntry e;
            e.query = r.get_string();
            e.frequency = r.get_u64();
            e.l1_score = r.get_f64();
            entries.push_back(std::move(e));
        }
        r.expect_end();
        if (entries.empty()) return {};
        try {
            return build(std::move(entries));
        } catch (const InvalidArgument& e) {
            throw CorruptArtifact(std::string("index file: ") + e.what());
        }
    }

    void save(const std::string& path) const { container::write_file(path, serialize()); }
    static CompletionIndex load(const std::string& path) { return deserialize(container::read_file(path)); }

private:
    static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

    struct Node {
        std::uint32_t lo = 0, hi = 0;  // entry range
        std::uint32_t child_begin = 0, child_count = 0;
        std::uint32_t cache = kNone;
    };

    struct Edge {
        char32_t label;
        std::uint32_t node;
    };

    std::uint32_t locate(std::u32string_view prefix) const {
        std::uint32_t cur = 0;
        for (char32_t c : prefix) {
            const Node& n = nodes_[cur];
            const auto first = edges_.begin() + n.child_begin;
            const auto last = first + n.child_count;
            auto it = std::lower_bound(first, last, c, [](const Edge& e, char32_t v) { return e.label < v; });
            if (it == last || it->label != c) return kNone;
            cur = it->node;
        }
        return cur;
    }

    bool better(std::uint32_t a, std::uint32_t b, CompletionOrder order) const {
        const auto& ea = entries_[a];
        const auto& eb = entries_[b];
        if (order == CompletionOrder::L1) {
            if (ea.l1_score != eb.l1_score) return ea.l1_score > eb.l1_score;
        } else if (ea.frequency != eb.frequency) {
            return ea.frequency > eb.frequency;
        }
        return ea.query < eb.query;
    }

    std::vector<std::uint32_t> top_ids(std::uint32_t lo, std::uint32_t hi, std::size_t n, CompletionOrder order) const {
        std::vector<std::uint32_t> ids(hi - lo);
        std::iota(ids.begin(), ids.end(), lo);
        n = std::min(n, ids.size());
        auto cmp = [&](std::uint32_t a, std::uint32_t b) { return better(a, b, order); };
        std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), cmp);
        ids.resize(n);
        return ids;
    }

    void build_trie() {
        nodes_.clear();
        edges_.clear();
        caches_.clear();
        std::vector<std::u32string> keys;
        keys.reserve(entries_.size());
        for (const auto& e : entries_) keys.push_back(utf8::decode(e.query));
        // code point order and UTF-8 byte order agree for valid UTF-8
        nodes_.push_back({0, static_cast<std::uint32_t>(entries_.size())});
        // iterative DFS: (node id, depth)
        std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [id, depth] = stack.back();
            stack.pop_back();
            auto lo = nodes_[id].lo;
            const auto hi = nodes_[id].hi;
            while (lo < hi && keys[lo].size() == depth) ++lo;  // entries ending here
            std::vector<Edge> children;
            std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
            for (auto i = lo; i < hi;) {
                const char32_t c = keys[i][depth];
                auto j = i + 1;
                while (j < hi && keys[j][depth] == c) ++j;
                children.push_back({c, static_cast<std::uint32_t>(nodes_.size())});
                nodes_.push_back({i, j});
                ranges.emplace_back(i, j);
                i = j;
            }
            nodes_[id].child_begin = static_cast<std::uint32_t>(edges_.size());
            nodes_[id].child_count = static_cast<std::uint32_t>(children.size());
            edges_.insert(edges_.end(), children.begin(), children.end());
            for (auto it = children.rbegin(); it != children.rend(); ++it) stack.emplace_back(it->node, depth + 1);
        }
        for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
            auto& n = nodes_[id];
            if (n.hi - n.lo < kCacheThreshold) continue;
            n.cache = static_cast<std::uint32_t>(caches_.size());
            caches_.push_back({top_ids(n.lo, n.hi, kCacheSize, CompletionOrder::Mpc),
                               top_ids(n.lo, n.hi, kCacheSize, CompletionOrder::L1)});
        }
    }

    std::vector<IndexEntry> entries_;
    std::uint64_t total_frequency_ = 0;
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::array<std::vector<std::uint32_t>, 2>> caches_;
};

/// Parses a `query<TAB>frequency<TAB>l1_score` corpus.
inline std::vector<IndexEntry> read_corpus(std::istream& in, const std::string& source = "<stream>") {
    std::vector<IndexEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto fail = [&](const std::string& why) {
            return ParseError(source + ":" + std::to_string(lineno) + ": " + why);
        };
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
            throw fail("expected query<TAB>frequency<TAB>l1_score");
        }
        IndexEntry e;
        e.query = line.substr(0, t1);
        const char* fb = line.data() + t1 + 1;
        const char* fe = line.data() + t2;
        auto r1 = std::from_chars(fb, fe, e.frequency);
        if (r1.ec != std::errc{} || r1.ptr != fe) throw fail("bad frequency");
        const char* lb = line.data() + t2 + 1;
        const char* le = line.data() + line.size();
        auto r2 = std::from_chars(lb, le, e.l1_score);
        if (r2.ec != std::errc{} || r2.ptr != le) throw fail("bad l1_score");
        out.push_back(std::move(e));
    }
    return out;
}

inline void write_corpus(std::ostream& out, std::span<const IndexEntry> entries) {
    char buf[64];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "\t%llu\t%.17g\n", static_cast<unsigned long long>(e.frequency), e.l1_score);
        out << e.query << buf;
    }
}

}  // namespace sqac
