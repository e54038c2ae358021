#pragma once

// SQAC model file:
//
//   "SQAC" | version u16 | metadata_len u32 | metadata | tensors (f32) | crc32
//
// metadata: dim u32, vocab_size u32, tokens (u32 len + bytes each),
//           hidden_count u32, widths u32..., dropout f64, dropout_seed u64
// tensors:  embedding (row-major), per hidden layer weight (row-major,
//           out x in) then bias, output weight, output bias

#include <sqac/container.hpp>
#include <sqac/error.hpp>
#include <sqac/seasonnet/model.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace sqac::seasonnet {

inline constexpr std::string_view kModelMagic = "SQAC";
inline constexpr std::uint16_t kModelVersion = 1;

namespace detail {

template <typename M>
void put_tensor(container::Writer& w, const M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.put_f32(static_cast<float>(m(r, c)));
    }
}

template <typename M>
void get_tensor(container::Reader& r, M& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<double>(r.get_f32());
    }
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_model(const SeasonModel& model, std::uint16_t version = kModelVersion) {
    model.validate();
    container::Writer meta;
    meta.put_u32(static_cast<std::uint32_t>(model.dim()));
    meta.put_u32(static_cast<std::uint32_t>(model.vocab.size()));
    for (const auto& t : model.vocab.tokens()) meta.put_string(t);
    meta.put_u32(static_cast<std::uint32_t>(model.hidden.size()));
    for (const auto& l : model.hidden) meta.put_u32(static_cast<std::uint32_t>(l.out()));
    meta.put_f64(model.dropout_rate);
    meta.put_u64(model.dropout_seed);

    container::Writer w(kModelMagic, version);
    const auto meta_bytes = std::move(meta).bytes();
    w.put_u32(static_cast<std::uint32_t>(meta_bytes.size()));
    w.put_bytes(meta_bytes);
    detail::put_tensor(w, model.embedding);
    for (const auto& l : model.hidden) {
        detail::put_tensor(w, l.weight);
        detail::put_tensor(w, l.bias);
    }
    detail::put_tensor(w, model.output.weight);
    detail::put_tensor(w, model.output.bias);
    return std::move(w).finish();
}

inline SeasonModel deserialize_model(std::span<const std::uint8_t> bytes) {
    container::Reader r(bytes, kModelMagic, kModelVersion);
    const auto meta_len = r.get_u32();
    const auto meta_start = r.remaining();
    SeasonModel model;
    const auto dim = r.get_u32();
    const auto vocab_size = r.get_u32();
    if (vocab_size == 0 || dim == 0) throw CorruptArtifact("model metadata: empty vocabulary or dimension");
    std::vector<std::string> tokens;
    for (std::uint32_t i = 0; i < vocab_size; ++i) tokens.push_back(r.get_string());
    if (tokens[0] != kUnkToken) throw CorruptArtifact("model metadata: first token must be UNK");
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        if (model.vocab.add(tokens[i]) != i) throw CorruptArtifact("model metadata: duplicate token");
    }
    const auto n_hidden = r.get_u32();
    std::vector<std::uint32_t> widths;
    for (std::uint32_t i = 0; i < n_hidden; ++i) widths.push_back(r.get_u32());
    model.dropout_rate = r.get_f64();
    model.dropout_seed = r.get_u64();
    if (meta_start - r.remaining() != meta_len) throw CorruptArtifact("model metadata length mismatch");

    model.embedding = RowMatrix::Zero(vocab_size, dim);
    detail::get_tensor(r, model.embedding);
    Eigen::Index width = static_cast<Eigen::Index>(dim) + kMonths;
    for (auto w : widths) {
        if (w == 0) throw CorruptArtifact("model metadata: zero-width layer");
        DenseLayer l{Eigen::MatrixXd(w, width), Eigen::VectorXd(w)};
        detail::get_tensor(r, l.weight);
        detail::get_tensor(r, l.bias);
        model.hidden.push_back(std::move(l));
        width = w;
    }
    model.output = {Eigen::MatrixXd(1, width), Eigen::VectorXd(1)};
    detail::get_tensor(r, model.output.weight);
    detail::get_tensor(r, model.output.bias);
    r.expect_end();
    try {
        model.validate();
    } catch (const InvalidArgument& e) {
        throw CorruptArtifact(std::string("model file: ") + e.what());
    }
    return model;
}

inline void save_model(const SeasonModel& model, const std::string& path) {
    container::write_file(path, serialize_model(model));
}

inline SeasonModel load_model(const std::string& path) { return deserialize_model(container::read_file(path)); }

/// Stable content fingerprint (CRC32 of the serialized model).
inline std::string model_hash(const SeasonModel& model) { return container::fingerprint(serialize_model(model)); }

}  // namespace sqac::seasonnet
