#include <sqac/seasonnet.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace sqac;
using namespace sqac::seasonnet;

namespace {

SeasonModel small_model() {
    const std::vector<std::string> corpus{"winter hats", "winter boots", "summer hats", "caf\xc3\xa9 table"};
    auto model = init_model(random_embeddings(corpus, 6, 1, 0.05, 1), std::vector<std::size_t>{8, 4}, 0.2, 2);
    quantize_to_storage(model);
    return model;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("sqac_persist_" + name);
}

}  // namespace

TEST(Persist, RoundTripIsBitIdentical) {
    const auto model = small_model();
    const auto path = temp_path("roundtrip.sqac");
    save_model(model, path.string());
    const auto back = load_model(path.string());
    EXPECT_EQ(back.vocab, model.vocab);
    EXPECT_EQ(back.dropout_rate, model.dropout_rate);
    for (const std::string q : {"winter hats", "summer boots", "unknown words", "caf\xc3\xa9"}) {
        for (int m = 1; m <= 12; ++m) EXPECT_EQ(predict(back, q, m), predict(model, q, m)) << q << m;
    }
    EXPECT_EQ(serialize_model(back), serialize_model(model));
    EXPECT_EQ(model_hash(back), model_hash(model));
    std::filesystem::remove(path);
}

TEST(Persist, FlippedByteIsCorrupt) {
    auto bytes = serialize_model(small_model());
    for (std::size_t pos : {std::size_t{10}, bytes.size() / 2, bytes.size() - 5}) {
        auto copy = bytes;
        copy[pos] ^= 0x01;
        EXPECT_THROW(deserialize_model(copy), CorruptArtifact) << pos;
    }
}

TEST(Persist, TruncatedIsCorrupt) {
    const auto bytes = serialize_model(small_model());
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
    EXPECT_THROW(deserialize_model(cut), CorruptArtifact);
    EXPECT_THROW(deserialize_model(std::vector<std::uint8_t>{}), CorruptArtifact);
}

TEST(Persist, FutureVersionRejected) {
    const auto bytes = serialize_model(small_model(), kModelVersion + 1);
    EXPECT_THROW(deserialize_model(bytes), VersionMismatch);
}

TEST(Persist, WrongMagicRejected) {
    auto bytes = serialize_model(small_model());
    bytes[0] = 'X';
    EXPECT_THROW(deserialize_model(bytes), CorruptArtifact);
}

TEST(Persist, MissingFileIsAnError) {
    EXPECT_THROW(load_model("/nonexistent/model.sqac"), Error);
}
