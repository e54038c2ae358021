#pragma once

#include <sqac/error.hpp>
#include <sqac/text.hpp>

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sqac::seasonnet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

/// Token -> dense row index. Index 0 is always the UNK token.
class Vocab {
public:
    static constexpr std::uint32_t kUnk = 0;

    Vocab() { add(kUnkToken); }

    std::uint32_t add(std::string_view token) {
        if (auto it = index_.find(token); it != index_.end()) return it->second;
        const auto id = static_cast<std::uint32_t>(tokens_.size());
        tokens_.emplace_back(token);
        index_.emplace(tokens_.back(), id);
        return id;
    }

    std::uint32_t lookup(std::string_view token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(std::string_view token) const { return index_.find(token) != index_.end(); }
    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t i) const { return tokens_.at(i); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<std::uint32_t> encode(std::span<const std::string> tokens) const {
        std::vector<std::uint32_t> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(lookup(t));
        return ids;
    }

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>> index_;
};

/// Vocabulary plus one embedding row per token.
struct Embeddings {
    Vocab vocab;
    RowMatrix vectors;  // vocab.size() x dim

    std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

/// Parses `token v1 ... vd` lines (the common pre-trained vector text
/// format). Every row must carry exactly `dim` values. The UNK row is zero.
inline Embeddings load_embeddings(std::istream& in, std::size_t dim, const std::string& source = "<stream>") {
    if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
    Embeddings out;
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const char* p = line.data();
        const char* end = p + line.size();
        while (p < end && *p == ' ') ++p;
        if (p == end) continue;
        const char* tok_end = p;
        while (tok_end < end && *tok_end != ' ') ++tok_end;
        std::string_view token(p, static_cast<std::size_t>(tok_end - p));
        p = tok_end;
        std::size_t count = 0;
        const std::size_t base = values.size();
        while (p < end) {
            while (p < end && *p == ' ') ++p;
            if (p == end) break;
            double v = 0.0;
            auto r = std::from_chars(p, end, v);
            if (r.ec != std::errc{} || (r.ptr < end && *r.ptr != ' ')) {
                throw ParseError(source + ":" + std::to_string(lineno) + ": malformed number");
            }
            values.push_back(v);
            p = r.ptr;
            ++count;
        }
        if (count != dim) {
            throw ParseError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                             " values, found " + std::to_string(count));
        }
        if (out.vocab.contains(token)) {
            values.resize(base);  // first occurrence wins
            continue;
        }
        out.vocab.add(token);
    }
    // row 0 is UNK and stays zero
    out.vectors = RowMatrix::Zero(static_cast<Eigen::Index>(out.vocab.size()), static_cast<Eigen::Index>(dim));
    std::size_t row = 1;
    for (std::size_t off = 0; off < values.size(); off += dim, ++row) {
        for (std::size_t j = 0; j < dim; ++j) {
            out.vectors(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = values[off + j];
        }
    }
    return out;
}

inline Embeddings load_embeddings(const std::string& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open embedding file '" + path + "'");
    return load_embeddings(in, dim, path);
}

/// Vocabulary from a query corpus: tokens occurring in at least
/// `min_frequency` distinct queries, rows uniform in [-range, range].
inline Embeddings random_embeddings(std::span<const std::string> queries, std::size_t dim,
                                    std::size_t min_frequency, double range, std::uint64_t seed) {
    if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
    std::map<std::string, std::size_t> freq;
    for (const auto& q : queries) {
        for (auto& t : tokenize(q)) ++freq[t];
    }
    Embeddings out;
    for (const auto& [tok, n] : freq) {
        if (n >= min_frequency && tok != kUnkToken) out.vocab.add(tok);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-range, range);
    out.vectors = RowMatrix::Zero(static_cast<Eigen::Index>(out.vocab.size()), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 1; i < out.vectors.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) out.vectors(i, j) = u(rng);
    }
    return out;
}

/// Pre-trained vectors when `path` is given and exists, otherwise the random
/// corpus vocabulary.
inline Embeddings load_or_init_embeddings(const std::optional<std::string>& path, std::size_t dim,
                                          std::span<const std::string> corpus, std::size_t min_frequency,
                                          double range, std::uint64_t seed) {
    if (path) {
        std::ifstream in(*path);
        if (in) return load_embeddings(in, dim, *path);
    }
    return random_embeddings(corpus, dim, min_frequency, range, seed);
}

/// Mean of the token rows.
template <typename Matrix>
Eigen::VectorXd embed_ids(std::span<const std::uint32_t> ids, const Matrix& vectors) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(vectors.cols());
    for (auto id : ids) v += vectors.row(id).transpose();
    if (!ids.empty()) v /= static_cast<double>(ids.size());
    return v;
}

inline Eigen::VectorXd embed_query(std::span<const std::string> tokens, const Vocab& vocab, const RowMatrix& vectors) {
    const auto ids = vocab.encode(tokens);
    return embed_ids(std::span<const std::uint32_t>(ids), vectors);
}

}  // namespace sqac::seasonnet
