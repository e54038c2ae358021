#pragma once

#include <sqac/error.hpp>
#include <sqac/seasonnet/model.hpp>

#include <cmath>
#include <cstdint>
#include <span>

namespace sqac::seasonnet {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update for one flat tensor at step `t` (t >= 1).
inline void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                        std::span<double> v, std::uint64_t t, const AdamConfig& cfg) {
    if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
        throw InvalidArgument("adam: tensor shape mismatch");
    }
    if (t == 0) throw InvalidArgument("adam: step counter must start at 1");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

namespace detail {

template <typename M>
std::span<double> flat(M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename M>
std::span<const double> flat(const M& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace detail

/// Moment accumulators mirroring the model's parameter tensors.
struct AdamState {
    std::uint64_t step = 0;
    RowMatrix embedding_m, embedding_v;
    std::vector<DenseLayer> hidden_m, hidden_v;
    DenseLayer output_m, output_v;

    static AdamState zeros_like(const SeasonModel& model) {
        AdamState s;
        auto zero_layer = [](const DenseLayer& l) {
            return DenseLayer{Eigen::MatrixXd::Zero(l.out(), l.in()), Eigen::VectorXd::Zero(l.out())};
        };
        s.embedding_m = RowMatrix::Zero(model.embedding.rows(), model.embedding.cols());
        s.embedding_v = s.embedding_m;
        for (const auto& l : model.hidden) {
            s.hidden_m.push_back(zero_layer(l));
            s.hidden_v.push_back(zero_layer(l));
        }
        s.output_m = zero_layer(model.output);
        s.output_v = zero_layer(model.output);
        return s;
    }
};

/// One optimizer step over every trainable tensor. Embedding rows absent
/// from the (sparse) gradient are left untouched, moments included.
inline void adam_step(SeasonModel& model, const Gradients& grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.hidden.size() != model.hidden.size() || state.hidden_m.size() != model.hidden.size()) {
        throw InvalidArgument("adam_step: layer count mismatch");
    }
    const auto t = ++state.step;
    using detail::flat;
    for (std::size_t i = 0; i < model.hidden.size(); ++i) {
        adam_update(flat(model.hidden[i].weight), flat(grads.hidden[i].weight), flat(state.hidden_m[i].weight),
                    flat(state.hidden_v[i].weight), t, cfg);
        adam_update(flat(model.hidden[i].bias), flat(grads.hidden[i].bias), flat(state.hidden_m[i].bias),
                    flat(state.hidden_v[i].bias), t, cfg);
    }
    adam_update(flat(model.output.weight), flat(grads.output.weight), flat(state.output_m.weight),
                flat(state.output_v.weight), t, cfg);
    adam_update(flat(model.output.bias), flat(grads.output.bias), flat(state.output_m.bias),
                flat(state.output_v.bias), t, cfg);
    const auto d = static_cast<std::size_t>(model.embedding.cols());
    for (const auto& [row, g] : grads.embedding_rows) {
        const auto r = static_cast<Eigen::Index>(row);
        // row-major storage: a row is contiguous
        adam_update({model.embedding.row(r).data(), d}, detail::flat(g), {state.embedding_m.row(r).data(), d},
                    {state.embedding_v.row(r).data(), d}, t, cfg);
    }
    ++model.generation;
}

}  // namespace sqac::seasonnet
