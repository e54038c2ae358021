#include <sqac/loglab.hpp>
#include <sqac/ranker.hpp>

#include "support/memo_fixture.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace sqac;
using namespace sqac::ranker;

namespace {

std::vector<std::string> names(const std::vector<RankedSuggestion>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(r.query);
    return out;
}

sqac::testing::MemoFixture memo() { return sqac::testing::load_memo_fixture(SQAC_FIXTURE_DIR "/memo_may.tsv"); }

L2Config memo_config(double alpha) { return {alpha, 10, 7}; }

/// Hash-based deterministic S in [0,1].
struct HashScorer {
    double score(std::string_view q, int m) const {
        const auto h = std::hash<std::string>{}(std::string(q) + "#" + std::to_string(m));
        return static_cast<double>(h % 1001) / 1000.0;
    }
};

}  // namespace

TEST(L1, WeightedEngagementSum) {
    EXPECT_DOUBLE_EQ(l1_score({"q", 2, 10, 300}, L1Weights{}), 2 + 2 + 3);
    EXPECT_THROW(l1_score({"q", -1, 0, 0}, L1Weights{}), InvalidArgument);
    EXPECT_THROW(l1_score({"q", 1, 1, 1}, L1Weights{0, 0, 0}), InvalidArgument);
}

TEST(L1, ScoreCorpusUsesVolumeAndEngagement) {
    std::istringstream log("winter hats\t2022-01\t80\nwinter hats\t2022-02\t20\nrare\t2022-03\t2\n");
    const auto table = loglab::ingest_events(log).table;
    const std::vector<EngagementRecord> eng{{"winter hats", 5, 10, 1000}};
    const auto corpus = score_corpus(table, eng, L1Weights{}, 1);
    ASSERT_EQ(corpus.size(), 2u);
    const auto& rare = corpus[0].query == "rare" ? corpus[0] : corpus[1];
    const auto& hats = corpus[0].query == "rare" ? corpus[1] : corpus[0];
    EXPECT_EQ(hats.frequency, 100u);
    EXPECT_DOUBLE_EQ(hats.l1_score, 5 + 2 + 10);
    EXPECT_DOUBLE_EQ(rare.l1_score, 0.02);
    EXPECT_EQ(score_corpus(table, eng, L1Weights{}, 10).size(), 1u);
}

TEST(L1, EngagementTsvRoundTrip) {
    const std::vector<EngagementRecord> recs{{"winter hats", 1.5, 20, 300}};
    std::ostringstream out;
    write_engagement(out, recs);
    std::istringstream in(out.str());
    const auto back = read_engagement(in);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].query, "winter hats");
    EXPECT_DOUBLE_EQ(back[0].add_to_carts, 1.5);
    std::istringstream bad("q\t1\t2\n");
    EXPECT_THROW(read_engagement(bad), ParseError);
}

TEST(L2, MemorialDayFixtureControl) {
    const auto fx = memo();
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    ASSERT_EQ(cands.size(), 10u);
    const auto control = l2_rerank(std::span<const Completion>(cands), 5, fx.may, memo_config(0.0));
    EXPECT_EQ(names(control), fx.control_top7);
}

TEST(L2, MemorialDayFixtureSeasonalPromotion) {
    const auto fx = memo();
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    auto cfg = memo_config(0.3);
    cfg.k_display = 10;
    const auto all = l2_rerank(std::span<const Completion>(cands), 5, fx.may, cfg);
    ASSERT_EQ(all.size(), 10u);
    for (std::size_t i = 0; i < all.size(); ++i) {
        EXPECT_EQ(all[i].query, fx.final_scores[i].first);
        EXPECT_NEAR(all[i].final_score, fx.final_scores[i].second, 1e-12) << all[i].query;
        EXPECT_EQ(all[i].rank, i + 1);
    }
    const auto test = l2_rerank(std::span<const Completion>(cands), 5, fx.may, memo_config(0.3));
    EXPECT_EQ(names(test), fx.test_top7);
    EXPECT_EQ(admitted_by_rerank(cands, test, 7), (std::vector<std::string>{"memorial day", "memorial flowers"}));
}

TEST(L2, OffSeasonKeepsL1Order) {
    const auto fx = memo();
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    // every S is zero outside May, so the blend is a monotone map of L1
    const auto nov = l2_rerank(std::span<const Completion>(cands), 11, fx.may, memo_config(0.3));
    EXPECT_EQ(names(nov), fx.control_top7);
}

TEST(L2, AlphaOneSortsBySeasonality) {
    const auto fx = memo();
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    const auto r = l2_rerank(std::span<const Completion>(cands), 5, fx.may, memo_config(1.0));
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GE(r[i - 1].seasonality, r[i].seasonality);
    EXPECT_EQ(r[0].query, "memorial day flowers");
}

TEST(L2, SingleCandidateAndEqualScores) {
    const auto idx = CompletionIndex::build({{"only", 1, 5.0}, {"other", 1, 5.0}, {"xyz", 1, 1.0}});
    const HashScorer s;
    const auto one = idx.complete("on", 50, CompletionOrder::L1);
    const auto r = l2_rerank(std::span<const Completion>(one), 3, s, L2Config{});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_DOUBLE_EQ(r[0].final_score, 0.7 * 0.5 + 0.3 * s.score("only", 3));
}

TEST(L2, InvalidConfigRejected) {
    EXPECT_THROW((L2Config{1.5, 50, 10}.validate()), InvalidArgument);
    EXPECT_THROW((L2Config{0.3, 5, 10}.validate()), InvalidArgument);
    EXPECT_THROW((L2Config{0.3, 5, 0}.validate()), InvalidArgument);
    const auto fx = memo();
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    EXPECT_THROW(l2_rerank(std::span<const Completion>(cands), 0, fx.may, L2Config{}), InvalidArgument);
}

TEST(L2Properties, AlphaZeroReproducesL1AndAgreesWithOracle) {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> l1(0, 20), m(1, 12);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<IndexEntry> entries;
        for (int i = 0; i < 120; ++i) {
            entries.push_back({"q" + std::to_string(i % 7) + " item " + std::to_string(i), 1, double(l1(rng))});
        }
        const auto idx = CompletionIndex::build(entries);
        const HashScorer s;
        const int month = m(rng);
        for (const char* prefix : {"q", "q3", "q5 item 1"}) {
            const auto cands = idx.complete(prefix, 50, CompletionOrder::L1);
            const auto zero = l2_rerank(std::span<const Completion>(cands), month, s, L2Config{0.0, 50, 10});
            for (std::size_t i = 0; i < zero.size(); ++i) EXPECT_EQ(zero[i].query, cands[i].entry->query);

            for (double alpha : {0.0, 0.3, 0.7, 1.0}) {
                const auto got = l2_rerank(std::span<const Completion>(cands), month, s, L2Config{alpha, 50, 10});
                const auto want = sqac::testing::pipeline_oracle(
                    idx.entries(), prefix, month, [&](const std::string& q, int mm) { return s.score(q, mm); }, alpha,
                    50, 10);
                EXPECT_EQ(names(got), want) << prefix << " alpha=" << alpha;
                for (std::size_t i = 0; i < got.size(); ++i) {
                    EXPECT_GE(got[i].final_score, 0.0);
                    EXPECT_LE(got[i].final_score, 1.0);
                    if (i) EXPECT_GE(got[i - 1].final_score, got[i].final_score);
                }
            }
        }
    }
}

TEST(SeasonalityTable, FallbackAndMonthRange) {
    SeasonalityTable t;
    t.set("x", {0.1, 0.2});
    EXPECT_DOUBLE_EQ(t.score("x", 2), 0.2);
    EXPECT_DOUBLE_EQ(t.score("y", 2), 0.0);
    t.set_fallback(0.25);
    EXPECT_DOUBLE_EQ(t.score("y", 2), 0.25);
    EXPECT_THROW(t.score("x", 13), InvalidArgument);
}

TEST(L1, SingleWeightAndZeroRecordAndRandomDotProducts) {
    EXPECT_DOUBLE_EQ(l1_score({"q", 4, 0, 0}, L1Weights{1, 0, 0}), 4.0);
    EXPECT_DOUBLE_EQ(l1_score({"q", 0, 0, 0}, L1Weights{}), 0.0);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 50; ++i) {
        const EngagementRecord r{"q", u(rng), u(rng), u(rng)};
        const L1Weights w{u(rng), u(rng), u(rng)};
        const double dot = w.add_to_carts * r.add_to_carts + w.clicks * r.clicks + w.impressions * r.impressions;
        EXPECT_NEAR(l1_score(r, w), dot, 1e-12 * std::max(1.0, dot));
    }
}

TEST(L2, AlphaOnePutsHigherSeasonalityFirst) {
    const auto idx = CompletionIndex::build({{"pool float", 1, 9.0}, {"pool cover", 1, 1.0}});
    SeasonalityTable t;
    SeasonalityTable::Scores low{}, high{};
    low.fill(0.1);
    high.fill(0.9);
    t.set("pool float", low);
    t.set("pool cover", high);
    const auto cands = idx.complete("pool", 50, CompletionOrder::L1);
    EXPECT_EQ(cands[0].entry->query, "pool float");
    const auto r = l2_rerank(std::span<const Completion>(cands), 6, t, L2Config{1.0, 50, 10});
    EXPECT_EQ(names(r), (std::vector<std::string>{"pool cover", "pool float"}));
}

TEST(L2, SeasonalItemOutsideL1TopKIsAdmitted) {
    std::vector<IndexEntry> entries;
    for (int i = 0; i < 50; ++i) entries.push_back({"item " + std::to_string(100 + i), 1, 50.0 - i});
    const auto idx = CompletionIndex::build(entries);
    SeasonalityTable t;
    SeasonalityTable::Scores peak{};
    peak.fill(1.0);
    t.set("item 111", peak);  // L1 rank 12
    const auto cands = idx.complete("item", 50, CompletionOrder::L1);
    ASSERT_EQ(cands.size(), 50u);
    EXPECT_EQ(cands[11].entry->query, "item 111");
    const auto r = l2_rerank(std::span<const Completion>(cands), 3, t, L2Config{0.8, 50, 10});
    EXPECT_EQ(admitted_by_rerank(cands, r, 10), std::vector<std::string>{"item 111"});
    EXPECT_EQ(r[0].query, "item 111");
}

TEST(L2, NothingAdmittedAtAlphaZeroOrWhenKEqualsN) {
    const auto fx = memo();
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    const auto zero = l2_rerank(std::span<const Completion>(cands), 5, fx.may, memo_config(0.0));
    EXPECT_TRUE(admitted_by_rerank(cands, zero, 7).empty());
    const auto all = l2_rerank(std::span<const Completion>(cands), 5, fx.may, L2Config{0.9, 10, 10});
    EXPECT_TRUE(admitted_by_rerank(cands, all, 10).empty());
}
