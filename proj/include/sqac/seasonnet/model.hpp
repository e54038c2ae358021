#pragma once

// Feed-forward seasonality regressor.
//
//   input  = [mean token embedding (d) | one-hot month (12)]
//   hidden = affine -> relu -> inverted dropout (train mode only), repeated
//   output = affine, single linear unit
//
// Training runs in 64-bit; `quantize_to_storage` rounds parameters to the
// 32-bit precision used by the model file so that a saved model predicts
// bit-identically after loading.

#include <sqac/error.hpp>
#include <sqac/seasonnet/vocab.hpp>
#include <sqac/text.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sqac::seasonnet {

inline constexpr int kMonths = 12;
inline constexpr double kDefaultDropout = 0.2;

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out

    Eigen::Index in() const { return weight.cols(); }
    Eigen::Index out() const { return weight.rows(); }
};

struct SeasonModel {
    Vocab vocab;
    RowMatrix embedding;             // |V| x d, trainable
    std::vector<DenseLayer> hidden;  // relu layers
    DenseLayer output;               // 1 x last width, linear
    double dropout_rate = kDefaultDropout;
    std::uint64_t dropout_seed = 0;
    std::uint64_t generation = 0;  // bumped on every parameter update

    std::size_t dim() const { return static_cast<std::size_t>(embedding.cols()); }
    std::size_t input_dim() const { return dim() + kMonths; }

    void validate() const {
        if (embedding.rows() != static_cast<Eigen::Index>(vocab.size())) {
            throw InvalidArgument("model: embedding rows do not match vocabulary size");
        }
        if (embedding.cols() == 0) throw InvalidArgument("model: embedding dimension is zero");
        auto width = static_cast<Eigen::Index>(input_dim());
        for (std::size_t i = 0; i < hidden.size(); ++i) {
            const auto& l = hidden[i];
            if (l.in() != width || l.bias.size() != l.out() || l.out() == 0) {
                throw InvalidArgument("model: hidden layer " + std::to_string(i) + " shape does not chain");
            }
            width = l.out();
        }
        if (output.out() != 1 || output.in() != width || output.bias.size() != 1) {
            throw InvalidArgument("model: output layer must map " + std::to_string(width) + " inputs to 1");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("model: dropout must be in [0,1)");
    }
};

/// Glorot-uniform dense layers, zero biases.
inline SeasonModel init_model(Embeddings embeddings, std::span<const std::size_t> hidden_widths,
                              double dropout_rate, std::uint64_t seed) {
    SeasonModel model;
    model.vocab = std::move(embeddings.vocab);
    model.embedding = std::move(embeddings.vectors);
    model.dropout_rate = dropout_rate;
    model.dropout_seed = seed;
    std::mt19937_64 rng(seed);
    auto glorot = [&](Eigen::Index out, Eigen::Index in) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
        }
        return layer;
    };
    auto width = static_cast<Eigen::Index>(model.input_dim());
    for (auto w : hidden_widths) {
        model.hidden.push_back(glorot(static_cast<Eigen::Index>(w), width));
        width = static_cast<Eigen::Index>(w);
    }
    model.output = glorot(1, width);
    model.validate();
    return model;
}

inline void quantize_to_storage(SeasonModel& model) {
    auto q = [](auto& m) { m = m.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); }); };
    q(model.embedding);
    for (auto& l : model.hidden) {
        q(l.weight);
        q(l.bias);
    }
    q(model.output.weight);
    q(model.output.bias);
    ++model.generation;
}

/// One training/inference row.
struct Example {
    std::vector<std::uint32_t> tokens;  // vocab ids, never empty
    int month = 1;                      // 1..12
    double target = 0.0;
};

inline std::vector<std::uint32_t> encode_query(const Vocab& vocab, std::string_view query) {
    const auto tokens = tokenize(query);
    return vocab.encode(tokens);
}

enum class Mode { Train, Infer };

/// Activations retained for backward.
struct ForwardCache {
    std::uint64_t generation = 0;
    std::vector<std::vector<std::uint32_t>> tokens;  // per row; empty if the input was a raw vector
    Eigen::MatrixXd input;                           // B x (d+12)
    std::vector<Eigen::MatrixXd> pre;                // per hidden layer, B x width
    std::vector<Eigen::MatrixXd> post;               // after relu and dropout
    std::vector<Eigen::MatrixXd> mask;               // dropout scale per unit; empty in infer mode
    Eigen::VectorXd output;                          // B

    std::size_t batch_size() const { return static_cast<std::size_t>(input.rows()); }
};

namespace detail {

inline void check_month(int month) {
    if (month < 1 || month > kMonths) throw InvalidArgument("month must be in 1..12, got " + std::to_string(month));
}

inline ForwardCache run_layers(const SeasonModel& model, Eigen::MatrixXd input, Mode mode, std::mt19937_64* rng) {
    if (input.cols() != static_cast<Eigen::Index>(model.input_dim())) {
        throw InvalidArgument("forward: input width does not match model");
    }
    const bool drop = mode == Mode::Train && model.dropout_rate > 0.0;
    if (drop && !rng) throw InvalidArgument("forward: train mode with dropout needs an rng");
    ForwardCache cache;
    cache.generation = model.generation;
    cache.input = std::move(input);
    const Eigen::MatrixXd* a = &cache.input;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - model.dropout_rate);
    for (const auto& layer : model.hidden) {
        Eigen::MatrixXd z = (*a) * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        Eigen::MatrixXd h = z.cwiseMax(0.0);
        if (drop) {
            Eigen::MatrixXd m(h.rows(), h.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(*rng) < model.dropout_rate ? 0.0 : keep_scale;
            }
            h = h.cwiseProduct(m);
            cache.mask.push_back(std::move(m));
        }
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(h));
        a = &cache.post.back();
    }
    cache.output = (*a) * model.output.weight.transpose();
    cache.output.array() += model.output.bias(0);
    return cache;
}

}  // namespace detail

/// Batched forward pass over encoded examples.
inline ForwardCache forward_batch(const SeasonModel& model, std::span<const Example> batch, Mode mode,
                                  std::mt19937_64* dropout_rng = nullptr) {
    if (batch.empty()) throw InvalidArgument("forward: empty batch");
    const auto d = static_cast<Eigen::Index>(model.dim());
    Eigen::MatrixXd input = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch.size()), d + kMonths);
    std::vector<std::vector<std::uint32_t>> tokens;
    tokens.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        detail::check_month(ex.month);
        if (ex.tokens.empty()) throw InvalidArgument("forward: example without tokens");
        const auto row = static_cast<Eigen::Index>(i);
        for (auto id : ex.tokens) {
            if (id >= model.vocab.size()) throw InvalidArgument("forward: token id out of range");
            input.row(row).head(d) += model.embedding.row(id);
        }
        input.row(row).head(d) /= static_cast<double>(ex.tokens.size());
        input(row, d + ex.month - 1) = 1.0;
        tokens.push_back(ex.tokens);
    }
    auto cache = detail::run_layers(model, std::move(input), mode, dropout_rng);
    cache.tokens = std::move(tokens);
    return cache;
}

struct ForwardResult {
    double value = 0.0;
    ForwardCache cache;
};

/// Single-example forward from a pooled query vector.
inline ForwardResult forward(const SeasonModel& model, const Eigen::VectorXd& query_vec, int month, Mode mode,
                             std::mt19937_64* dropout_rng = nullptr) {
    detail::check_month(month);
    if (query_vec.size() != static_cast<Eigen::Index>(model.dim())) {
        throw InvalidArgument("forward: query vector has wrong dimension");
    }
    Eigen::MatrixXd input = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(model.input_dim()));
    input.row(0).head(query_vec.size()) = query_vec.transpose();
    input(0, query_vec.size() + month - 1) = 1.0;
    ForwardResult r;
    r.cache = detail::run_layers(model, std::move(input), mode, dropout_rng);
    r.value = r.cache.output(0);
    return r;
}

namespace detail {

/// First affine layer applied to the query part of the input only. The
/// month one-hot adds a single weight column, so all 12 months share this.
inline Eigen::VectorXd query_partial(const SeasonModel& model, const Eigen::VectorXd& query_vec) {
    const DenseLayer& first = model.hidden.empty() ? model.output : model.hidden.front();
    Eigen::VectorXd z = first.weight.leftCols(query_vec.size()) * query_vec;
    z += first.bias;
    return z;
}

inline double finish_inference(const SeasonModel& model, const Eigen::VectorXd& partial, int month) {
    check_month(month);
    const DenseLayer& first = model.hidden.empty() ? model.output : model.hidden.front();
    const auto col = static_cast<Eigen::Index>(model.dim()) + month - 1;
    Eigen::VectorXd z = partial + first.weight.col(col);
    if (model.hidden.empty()) return z(0);
    Eigen::VectorXd a = z.cwiseMax(0.0);
    for (std::size_t i = 1; i < model.hidden.size(); ++i) {
        z = model.hidden[i].weight * a;
        z += model.hidden[i].bias;
        a = z.cwiseMax(0.0);
    }
    return model.output.weight.row(0).dot(a) + model.output.bias(0);
}

}  // namespace detail

/// Inference-mode output for a pooled query vector, before clamping. Uses
/// matrix-vector products only, so results do not depend on batch shape.
inline double infer_raw(const SeasonModel& model, const Eigen::VectorXd& query_vec, int month) {
    detail::check_month(month);
    return detail::finish_inference(model, detail::query_partial(model, query_vec), month);
}

inline double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0); }

/// S_qm for a free-text query. OOV tokens fall back to UNK.
inline double predict(const SeasonModel& model, std::string_view query, int month) {
    const auto ids = encode_query(model.vocab, normalize_query(query));
    return clamp_unit(infer_raw(model, embed_ids(std::span<const std::uint32_t>(ids), model.embedding), month));
}

inline std::array<double, kMonths> predict_all_months(const SeasonModel& model, std::string_view query) {
    const auto ids = encode_query(model.vocab, normalize_query(query));
    const auto partial = detail::query_partial(model, embed_ids(std::span<const std::uint32_t>(ids), model.embedding));
    std::array<double, kMonths> out{};
    for (int m = 1; m <= kMonths; ++m) {
        out[static_cast<std::size_t>(m - 1)] = clamp_unit(detail::finish_inference(model, partial, m));
    }
    return out;
}

inline double mse_loss(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size()) throw InvalidArgument("mse_loss: length mismatch");
    if (predictions.empty()) throw InvalidArgument("mse_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = predictions[i] - targets[i];
        sum += e * e;
    }
    return sum / static_cast<double>(predictions.size());
}

/// Gradients of the batch-mean squared error. Embedding gradients are kept
/// sparse: only rows referenced by the batch appear.
struct Gradients {
    std::map<std::uint32_t, Eigen::VectorXd> embedding_rows;
    std::vector<DenseLayer> hidden;
    DenseLayer output;
};

inline Gradients backward(const SeasonModel& model, std::span<const double> targets, const ForwardCache& cache) {
    if (cache.generation != model.generation) {
        throw InvalidArgument("backward: cache was produced before the last parameter update (stale)");
    }
    const auto batch = cache.batch_size();
    if (targets.size() != batch || cache.pre.size() != model.hidden.size()) {
        throw InvalidArgument("backward: cache does not match model/batch");
    }
    const auto n = static_cast<Eigen::Index>(batch);
    Eigen::VectorXd d_out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d_out(i) = 2.0 * (cache.output(i) - targets[static_cast<std::size_t>(i)]) / static_cast<double>(batch);
    }

    Gradients g;
    g.hidden.resize(model.hidden.size());
    const Eigen::MatrixXd& last = cache.post.empty() ? cache.input : cache.post.back();
    g.output.weight = d_out.transpose() * last;
    g.output.bias = Eigen::VectorXd::Constant(1, d_out.sum());
    Eigen::MatrixXd d_a = d_out * model.output.weight;  // B x width

    for (std::size_t li = model.hidden.size(); li-- > 0;) {
        if (!cache.mask.empty()) d_a = d_a.cwiseProduct(cache.mask[li]);
        Eigen::MatrixXd d_z = d_a.cwiseProduct((cache.pre[li].array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd& prev = li == 0 ? cache.input : cache.post[li - 1];
        g.hidden[li].weight = d_z.transpose() * prev;
        g.hidden[li].bias = d_z.colwise().sum().transpose();
        d_a = d_z * model.hidden[li].weight;
    }

    const auto d = static_cast<Eigen::Index>(model.dim());
    for (std::size_t i = 0; i < cache.tokens.size(); ++i) {
        const auto& ids = cache.tokens[i];
        const Eigen::VectorXd share = d_a.row(static_cast<Eigen::Index>(i)).head(d).transpose() /
                                      static_cast<double>(ids.size());
        for (auto id : ids) {
            auto [it, fresh] = g.embedding_rows.try_emplace(id, share);
            if (!fresh) it->second += share;
        }
    }
    return g;
}

}  // namespace sqac::seasonnet
