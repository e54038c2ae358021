#pragma once

#include <sqac/error.hpp>
#include <sqac/loglab.hpp>
#include <sqac/seasonnet/adam.hpp>
#include <sqac/seasonnet/model.hpp>
#include <sqac/seasonnet/vocab.hpp>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace sqac::seasonnet {

struct TrainConfig {
    AdamConfig adam;
    std::size_t batch_size = 256;
    std::size_t epochs = 50;
    double validation_fraction = 0.2;
    bool split_by_query = true;
    std::size_t patience = 5;
    std::uint64_t seed = 7;

    std::vector<std::size_t> hidden = {128, 64};
    double dropout = kDefaultDropout;

    // only used when no pre-trained embeddings are supplied
    std::size_t embedding_dim = 300;
    std::size_t min_token_frequency = 2;
    double init_range = 0.05;

    std::size_t min_targets = 100;

    void validate() const {
        if (!(adam.learning_rate > 0 && adam.beta1 > 0 && adam.beta1 < 1 && adam.beta2 > 0 && adam.beta2 < 1 &&
              adam.epsilon > 0)) {
            throw InvalidArgument("train: invalid Adam hyperparameters");
        }
        if (batch_size == 0 || epochs == 0 || patience == 0) {
            throw InvalidArgument("train: batch size, epochs and patience must be positive");
        }
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
            throw InvalidArgument("train: validation fraction must be in (0,1)");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("train: dropout must be in [0,1)");
        for (auto w : hidden) {
            if (w == 0) throw InvalidArgument("train: hidden widths must be positive");
        }
    }
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_mse = 0.0;
    double validation_mse = 0.0;
};

struct TrainResult {
    SeasonModel model;  // best-validation parameters, quantized to storage precision
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double validation_mse = 0.0;  // of the returned model
    std::vector<std::string> train_queries;
    std::vector<std::string> validation_queries;
};

inline std::vector<Example> encode_targets(const Vocab& vocab, std::span<const loglab::SeasonalityTarget> targets) {
    std::vector<Example> out;
    out.reserve(targets.size());
    std::map<std::string, std::vector<std::uint32_t>, std::less<>> cache;
    for (const auto& t : targets) {
        auto it = cache.find(t.query);
        if (it == cache.end()) it = cache.emplace(t.query, encode_query(vocab, t.query)).first;
        out.push_back({it->second, t.month, t.value});
    }
    return out;
}

/// Batched inference-mode MSE over a set of examples.
inline double evaluate_mse(const SeasonModel& model, std::span<const Example> examples, std::size_t chunk = 1024) {
    if (examples.empty()) throw InvalidArgument("evaluate_mse: no examples");
    double sum = 0.0;
    for (std::size_t lo = 0; lo < examples.size(); lo += chunk) {
        const auto part = examples.subspan(lo, std::min(chunk, examples.size() - lo));
        const auto cache = forward_batch(model, part, Mode::Infer);
        for (std::size_t i = 0; i < part.size(); ++i) {
            const double e = cache.output(static_cast<Eigen::Index>(i)) - part[i].target;
            sum += e * e;
        }
    }
    return sum / static_cast<double>(examples.size());
}

namespace detail {

struct Split {
    std::vector<std::size_t> train_rows, validation_rows;
    std::vector<std::string> train_queries, validation_queries;
};

inline Split split_targets(std::span<const loglab::SeasonalityTarget> targets, const TrainConfig& cfg,
                           std::mt19937_64& rng) {
    Split s;
    if (cfg.split_by_query) {
        std::vector<std::string> queries;
        std::set<std::string> seen;
        for (const auto& t : targets) {
            if (seen.insert(t.query).second) queries.push_back(t.query);
        }
        std::shuffle(queries.begin(), queries.end(), rng);
        const auto n_val = static_cast<std::size_t>(
            std::llround(cfg.validation_fraction * static_cast<double>(queries.size())));
        if (n_val == 0 || n_val >= queries.size()) {
            throw InvalidArgument("train: degenerate split (" + std::to_string(queries.size()) +
                                  " queries, validation would hold " + std::to_string(n_val) + ")");
        }
        std::set<std::string> val(queries.end() - static_cast<std::ptrdiff_t>(n_val), queries.end());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            (val.count(targets[i].query) ? s.validation_rows : s.train_rows).push_back(i);
        }
        s.validation_queries.assign(queries.end() - static_cast<std::ptrdiff_t>(n_val), queries.end());
        s.train_queries.assign(queries.begin(), queries.end() - static_cast<std::ptrdiff_t>(n_val));
    } else {
        std::vector<std::size_t> rows(targets.size());
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto n_val =
            static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(rows.size())));
        if (n_val == 0 || n_val >= rows.size()) throw InvalidArgument("train: degenerate split");
        s.train_rows.assign(rows.begin(), rows.end() - static_cast<std::ptrdiff_t>(n_val));
        s.validation_rows.assign(rows.end() - static_cast<std::ptrdiff_t>(n_val), rows.end());
        std::set<std::string> tq, vq;
        for (auto r : s.train_rows) tq.insert(targets[r].query);
        for (auto r : s.validation_rows) vq.insert(targets[r].query);
        s.train_queries.assign(tq.begin(), tq.end());
        s.validation_queries.assign(vq.begin(), vq.end());
    }
    std::sort(s.train_rows.begin(), s.train_rows.end());
    std::sort(s.validation_rows.begin(), s.validation_rows.end());
    return s;
}

}  // namespace detail

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Fits the regressor to V_qm targets. Deterministic for a fixed seed.
/// Without `pretrained`, the vocabulary comes from the training split.
inline TrainResult train(std::span<const loglab::SeasonalityTarget> targets, std::optional<Embeddings> pretrained,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (targets.size() < cfg.min_targets) {
        throw InvalidArgument("train: need at least " + std::to_string(cfg.min_targets) + " targets, got " +
                              std::to_string(targets.size()));
    }
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

    auto split = detail::split_targets(targets, cfg, shuffle_rng);
    if (split.train_rows.empty() || split.validation_rows.empty()) throw InvalidArgument("train: degenerate split");

    Embeddings emb = pretrained ? std::move(*pretrained)
                                : random_embeddings(split.train_queries, cfg.embedding_dim, cfg.min_token_frequency,
                                                    cfg.init_range, cfg.seed + 1);
    SeasonModel model = init_model(std::move(emb), cfg.hidden, cfg.dropout, cfg.seed + 2);

    const auto all = encode_targets(model.vocab, targets);
    std::vector<Example> train_set, val_set;
    for (auto r : split.train_rows) train_set.push_back(all[r]);
    for (auto r : split.validation_rows) val_set.push_back(all[r]);

    AdamState state = AdamState::zeros_like(model);
    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    SeasonModel best_model = model;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Example> batch;
    std::vector<double> batch_targets;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double train_sum = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const auto hi = std::min(order.size(), lo + cfg.batch_size);
            batch.clear();
            batch_targets.clear();
            for (std::size_t i = lo; i < hi; ++i) {
                batch.push_back(train_set[order[i]]);
                batch_targets.push_back(batch.back().target);
            }
            auto cache = forward_batch(model, batch, Mode::Train, &dropout_rng);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const double e = cache.output(static_cast<Eigen::Index>(i)) - batch_targets[i];
                train_sum += e * e;
            }
            const auto grads = backward(model, batch_targets, cache);
            adam_step(model, grads, state, cfg.adam);
        }
        EpochMetrics m{epoch, train_sum / static_cast<double>(train_set.size()), evaluate_mse(model, val_set)};
        result.history.push_back(m);
        if (on_epoch) on_epoch(m);
        if (m.validation_mse < best) {
            best = m.validation_mse;
            best_model = model;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    quantize_to_storage(best_model);
    result.validation_mse = evaluate_mse(best_model, val_set);
    result.model = std::move(best_model);
    result.train_queries = std::move(split.train_queries);
    result.validation_queries = std::move(split.validation_queries);
    return result;
}

}  // namespace sqac::seasonnet
