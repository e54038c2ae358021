// One line per acceptance criterion: PASS/FAIL, name, measured values.
// Exit status is nonzero when any criterion fails.

#include <sqac/sqac.hpp>

#include "../support/memo_fixture.hpp"
#include "../support/oracles.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace sqac;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o, double secs) {
    std::printf("%s  %-28s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(name, o, seconds_since(t0));
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome seasonality_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    double max_err = 0.0, max_sum_dev = 0.0;
    std::size_t queries = 0;
    for (int t = 0; t < 100; ++t) {
        const auto table = testing::random_table(rng, 50);
        const auto oracle = testing::seasonality_oracle(table, 1);
        std::map<std::string, double> sums;
        for (const auto& v : loglab::seasonality_targets(table, 1)) {
            max_err = std::max(max_err, std::abs(v.value - oracle.at(v.query)[static_cast<std::size_t>(v.month - 1)]));
            sums[v.query] += v.value;
        }
        if (sums.size() != oracle.size()) return {false, "query sets differ from oracle"};
        for (const auto& [q, s] : sums) max_sum_dev = std::max(max_sum_dev, std::abs(s - 1.0));
        queries += sums.size();
    }
    const double secs = seconds_since(t0);
    return {max_err <= 1e-12 && max_sum_dev <= 1e-9 && secs < 5.0,
            fmt("tables=100 queries=%zu max_abs_err=%.2e max_sum_dev=%.2e (<=1e-12, <=1e-9, <5s)", queries, max_err,
                max_sum_dev)};
}

Outcome gradient_check() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(99);
    std::vector<std::string> corpus;
    const std::vector<std::string> words{"winter", "hats", "boots", "pool", "float", "red", "gift", "card"};
    for (const auto& a : words) {
        for (const auto& b : words) corpus.push_back(a + " " + b);
    }
    double worst = 0.0;
    std::size_t checked = 0;
    for (int b = 0; b < 20; ++b) {
        auto model = seasonnet::init_model(seasonnet::random_embeddings(corpus, 8, 1, 0.5, 1000 + b),
                                           std::vector<std::size_t>{16, 8}, 0.2, 2000 + static_cast<std::uint64_t>(b));
        std::uniform_real_distribution<double> bias(-0.1, 0.1);
        for (auto& l : model.hidden) {
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = bias(rng);
        }
        std::uniform_int_distribution<std::uint32_t> tok(0, static_cast<std::uint32_t>(model.vocab.size() - 1));
        std::uniform_int_distribution<int> len(1, 3), month(1, 12);
        std::uniform_real_distribution<double> target(0.0, 1.0);
        std::vector<seasonnet::Example> batch(8);
        for (auto& ex : batch) {
            const int l = len(rng);
            for (int i = 0; i < l; ++i) ex.tokens.push_back(tok(rng));
            ex.month = month(rng);
            ex.target = target(rng);
        }
        const auto r = testing::gradient_check(model, batch, 1e-5);
        worst = std::max(worst, r.max_relative_error);
        checked += r.parameters_checked;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-4 && secs < 30.0,
            fmt("batches=20 params_checked=%zu max_rel_err=%.2e (<=1e-4, <30s)", checked, worst)};
}

// Shared by the learning, lift and persistence criteria.
struct PlantedWorld {
    synth::SynthSpec spec;
    std::vector<synth::SynthQuery> queries;
    std::vector<loglab::LogEvent> events;
    loglab::MonthlyVolumeTable table;
    std::vector<loglab::SeasonalityTarget> targets;
    seasonnet::TrainResult trained;
    double train_seconds = 0.0;
};

PlantedWorld build_world() {
    PlantedWorld w;
    w.spec.n_queries = 5000;
    w.spec.seasonal_fraction = 0.5;
    w.spec.seed = 7;
    w.queries = synth::generate_queries(w.spec);
    w.events = synth::synth_events(w.spec, w.queries);
    w.table = loglab::aggregate(w.events);
    w.targets = loglab::seasonality_targets(w.table, 60);
    const auto t0 = Clock::now();
    seasonnet::TrainConfig cfg;
    cfg.seed = 7;
    w.trained = seasonnet::train(w.targets, std::nullopt, cfg, [](const seasonnet::EpochMetrics& m) {
        std::fprintf(stderr, "  epoch %zu train_mse=%.6f val_mse=%.6f\n", m.epoch, m.train_mse, m.validation_mse);
    });
    w.train_seconds = seconds_since(t0);
    return w;
}

int circular_distance(int a, int b) {
    const int d = std::abs(a - b) % 12;
    return std::min(d, 12 - d);
}

Outcome planted_learning(const PlantedWorld& w) {
    const std::set<std::string> held_out(w.trained.validation_queries.begin(), w.trained.validation_queries.end());
    double base_sum = 0.0;
    std::size_t rows = 0;
    for (const auto& t : w.targets) {
        if (!held_out.count(t.query)) continue;
        const double e = t.value - 1.0 / 12.0;
        base_sum += e * e;
        ++rows;
    }
    const double baseline = base_sum / static_cast<double>(rows);
    const double mse = w.trained.validation_mse;

    std::size_t planted = 0, hits = 0;
    for (const auto& q : w.queries) {
        if (q.peak_month == 0 || !held_out.count(q.query)) continue;
        const auto s = seasonnet::predict_all_months(w.trained.model, q.query);
        const int argmax = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()) + 1;
        ++planted;
        hits += circular_distance(argmax, q.peak_month) <= 1;
    }
    const double frac = planted ? static_cast<double>(hits) / static_cast<double>(planted) : 0.0;
    return {w.queries.size() >= 5000 && mse <= 0.5 * baseline && frac >= 0.8 && w.train_seconds < 600.0,
            fmt("queries=%zu val_mse=%.6f baseline=%.6f ratio=%.3f (<=0.5) planted_heldout=%zu argmax_within_1=%.3f "
                "(>=0.8) epochs=%zu train=%.0fs (<600s)",
                w.queries.size(), mse, baseline, mse / baseline, planted, frac, w.trained.history.size(),
                w.train_seconds)};
}

Outcome trie_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(404);
    synth::SynthSpec spec;
    spec.n_queries = 10000;
    spec.seed = 404;
    const auto queries = synth::generate_queries(spec);
    std::uniform_int_distribution<int> coarse(1, 30);
    std::vector<IndexEntry> entries;
    for (const auto& q : queries) {
        // coarse frequencies and scores so many candidates tie
        entries.push_back({q.query, static_cast<std::uint64_t>(coarse(rng)), coarse(rng) / 2.0});
    }
    const auto index = CompletionIndex::build(entries);
    const std::vector<IndexEntry> sorted(index.entries().begin(), index.entries().end());
    std::uniform_int_distribution<std::size_t> which(0, sorted.size() - 1), len(0, 8);
    std::size_t compared = 0;
    for (int p = 0; p < 200; ++p) {
        const auto cps = utf8::decode(sorted[which(rng)].query);
        std::string prefix = utf8::encode(std::u32string_view(cps).substr(0, std::min(cps.size(), len(rng))));
        if (!prefix.empty() && prefix.back() == ' ') prefix.pop_back();
        for (auto order : {CompletionOrder::Mpc, CompletionOrder::L1}) {
            const auto got = index.complete(prefix, 10, order);
            const auto want = testing::complete_oracle(sorted, prefix, 10, order);
            if (got.size() != want.size()) return {false, "size mismatch at prefix '" + prefix + "'"};
            for (std::size_t i = 0; i < got.size(); ++i) {
                if (got[i].entry->query != want[i]->query) return {false, "order mismatch at prefix '" + prefix + "'"};
            }
            ++compared;
        }
    }
    const double secs = seconds_since(t0);
    return {secs < 5.0, fmt("entries=%zu prefixes=200 comparisons=%zu all_equal (<5s)", index.size(), compared)};
}

struct Eval {
    eval::EvalReport control, test;
    eval::LiftReport lift;
};

Eval evaluate(const PlantedWorld& w, const seasonnet::SeasonModel& model, std::size_t n_cases, std::uint64_t seed) {
    const auto engagement = synth::synth_engagement(w.queries, w.spec.seed);
    auto index = CompletionIndex::build(ranker::score_corpus(w.table, engagement, ranker::L1Weights{}));
    const auto table = ranker::SeasonalityTable::precompute(model, index.entries(), 1);
    const auto cases = eval::gen_cases(eval::sample_cases(w.events, n_cases, seed));
    const auto hash = seasonnet::model_hash(model);
    eval::Pipeline<ranker::SeasonalityTable> control{&index, &table, {0.0, 50, 10}, hash};
    auto test = control;
    test.config.seasonality_weight = 0.3;
    Eval e;
    e.control = eval::run_eval(cases, control);
    e.test = eval::run_eval(cases, test);
    e.lift = eval::ab_compare(e.control, e.test);
    return e;
}

Outcome mrr_lift(const PlantedWorld& w) {
    const auto t0 = Clock::now();
    const auto e = evaluate(w, w.trained.model, 400, 31);
    const double secs = seconds_since(t0);
    const auto& l = e.lift;
    return {e.control.prefix_count >= 2000 && l.test_mrr > l.control_mrr && l.sign_test_p < 0.05 && secs < 300.0,
            fmt("prefixes=%zu control_mrr=%.4f test_mrr=%.4f lift=%+.2f%% improved=%zu worsened=%zu p=%.2e "
                "(>=2000, test>control, p<0.05, <300s)",
                e.control.prefix_count, l.control_mrr, l.test_mrr, 100.0 * l.relative_lift, l.improved, l.worsened,
                l.sign_test_p)};
}

Outcome memo_scenario() {
    // L1 in [100, 300] -> normalized (l1 - 100) / 200; final = 0.7 * norm + 0.3 * S_may
    //   memorial day flowers        0.7 * 0.85 + 0.3 * 0.60 = 0.775
    //   memory foam mattress topper 0.7 * 1.00 + 0.3 * 0.05 = 0.715
    //   memory foam mattress        0.7 * 0.95 + 0.3 * 0.05 = 0.680
    //   memorial day decorations    0.7 * 0.75 + 0.3 * 0.45 = 0.660
    //   memory foam pillow          0.7 * 0.90 + 0.3 * 0.05 = 0.645
    //   memorial day                0.7 * 0.65 + 0.3 * 0.55 = 0.620
    //   memorial flowers            0.7 * 0.60 + 0.3 * 0.58 = 0.594
    //   memory card                 0.7 * 0.80 + 0.3 * 0.05 = 0.575
    //   memory foam futon           0.7 * 0.70 + 0.3 * 0.05 = 0.505
    //   memo board                  0.7 * 0.00 + 0.3 * 0.05 = 0.015
    // alpha = 0 keeps the L1 order.
    const auto fx = testing::load_memo_fixture(SQAC_FIXTURE_DIR "/memo_may.tsv");
    const auto cands = fx.index.complete("memo", 10, CompletionOrder::L1);
    auto names = [](const std::vector<ranker::RankedSuggestion>& rs) {
        std::vector<std::string> out;
        for (const auto& r : rs) out.push_back(r.query);
        return out;
    };
    const auto control = ranker::l2_rerank(std::span<const Completion>(cands), 5, fx.may, {0.0, 10, 7});
    const auto test = ranker::l2_rerank(std::span<const Completion>(cands), 5, fx.may, {0.3, 10, 7});
    const auto full = ranker::l2_rerank(std::span<const Completion>(cands), 5, fx.may, {0.3, 10, 10});
    double worst = 0.0;
    bool order_ok = full.size() == fx.final_scores.size();
    for (std::size_t i = 0; order_ok && i < full.size(); ++i) {
        order_ok = full[i].query == fx.final_scores[i].first;
        worst = std::max(worst, std::abs(full[i].final_score - fx.final_scores[i].second));
    }
    const bool pass = names(control) == fx.control_top7 && names(test) == fx.test_top7 && order_ok && worst <= 1e-12 &&
                      !control.empty() && control.front().query == "memory foam mattress topper" &&
                      test.front().query == "memorial day flowers";
    return {pass, fmt("control_top=%s test_top=%s max_score_err=%.1e", control.front().query.c_str(),
                      test.front().query.c_str(), worst)};
}

Outcome determinism(const PlantedWorld& w) {
    // save -> load -> predict, on the trained model
    const auto dir = fs::temp_directory_path() / "sqac_acceptance";
    fs::create_directories(dir);
    const auto path = (dir / "model.sqac").string();
    seasonnet::save_model(w.trained.model, path);
    const auto loaded = seasonnet::load_model(path);
    std::size_t compared = 0, differing = 0;
    for (const auto& q : w.trained.validation_queries) {
        for (int m = 1; m <= 12; ++m) {
            ++compared;
            differing += seasonnet::predict(loaded, q, m) != seasonnet::predict(w.trained.model, q, m);
        }
    }

    // full pipeline twice on a smaller world, same seeds
    auto pipeline = [] {
        PlantedWorld small;
        small.spec.n_queries = 1500;
        small.spec.seed = 19;
        std::ostringstream log;
        synth::write_events(log, synth::synth_events(small.spec, synth::generate_queries(small.spec)));
        std::istringstream in(log.str());
        small.queries = synth::generate_queries(small.spec);
        small.events = loglab::read_events(in).events;
        small.table = loglab::aggregate(small.events);
        small.targets = loglab::seasonality_targets(small.table, 60);
        seasonnet::TrainConfig cfg;
        cfg.seed = 19;
        cfg.embedding_dim = 32;
        cfg.hidden = {32, 16};
        cfg.epochs = 5;
        small.trained = seasonnet::train(small.targets, std::nullopt, cfg);
        return evaluate(small, small.trained.model, 200, 5);
    };
    const auto a = pipeline();
    const auto b = pipeline();
    const bool same = a.control == b.control && a.test == b.test;
    fs::remove_all(dir);
    return {differing == 0 && same,
            fmt("predictions_compared=%zu differing=%zu eval_reports_identical=%s (mrr %.6f / %.6f)", compared,
                differing, same ? "yes" : "no", a.test.mrr, b.test.mrr)};
}

Outcome service_latency(const PlantedWorld& w) {
    synth::SynthSpec spec;
    spec.n_queries = 100000;
    spec.seed = 1234;
    const auto queries = synth::generate_queries(spec);
    const auto table = loglab::aggregate(synth::synth_events(spec, queries));
    const auto engagement = synth::synth_engagement(queries, spec.seed);
    auto index = CompletionIndex::build(ranker::score_corpus(table, engagement, ranker::L1Weights{}));
    const auto index_size = index.size();

    std::vector<std::string> prefixes;
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> which(0, index.size() - 1), len(1, 8);
    for (int i = 0; i < 2000; ++i) {
        const auto& q = index.entries()[which(rng)].query;
        std::string p = q.substr(0, std::min(q.size(), len(rng)));
        std::string encoded;
        for (char c : p) encoded += c == ' ' ? std::string("%20") : std::string(1, c);
        prefixes.push_back(encoded);
    }

    service::ServiceConfig cfg;
    cfg.month_override = 12;
    service::SuggestionService svc(cfg);
    svc.install(service::Snapshot::from_model(std::move(index), w.trained.model));
    httplib::Server server;
    svc.bind(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0) return {false, "cannot bind loopback port"};
    std::jthread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    // context for the concurrent numbers: one client, no contention
    std::vector<double> sequential, server_side;
    {
        httplib::Client client("127.0.0.1", port);
        client.set_keep_alive(true);
        for (int i = 0; i < 1000; ++i) {
            const auto t0 = Clock::now();
            auto res = client.Get("/complete?prefix=" + prefixes[static_cast<std::size_t>(i) % prefixes.size()]);
            const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
            if (!res || res->status != 200) continue;
            sequential.push_back(ms);
            server_side.push_back(nlohmann::json::parse(res->body)["latency_micros"].get<double>() / 1000.0);
        }
    }
    auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
        return v[v.size() / 2];
    };

    constexpr int kClients = 100;
    constexpr int kPerClient = 100;
    constexpr int kWarmup = 5;
    std::vector<std::vector<double>> per_client(kClients);
    std::atomic<int> errors{0};
    std::mutex first_error_mu;
    std::string first_error = "none";
    std::atomic<int> ready{0};
    std::atomic<bool> go{false};
    {
        std::vector<std::jthread> clients;
        for (int c = 0; c < kClients; ++c) {
            clients.emplace_back([&, c] {
                httplib::Client client("127.0.0.1", port);
                client.set_keep_alive(true);
                client.set_read_timeout(30, 0);
                auto& lat = per_client[static_cast<std::size_t>(c)];
                lat.reserve(kPerClient);
                ++ready;
                while (!go) std::this_thread::yield();
                for (int i = 0; i < kWarmup + kPerClient; ++i) {
                    const auto& p = prefixes[static_cast<std::size_t>(c * 131 + i * 7) % prefixes.size()];
                    const auto t0 = Clock::now();
                    auto res = client.Get("/complete?prefix=" + p);
                    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
                    if (!res || res->status != 200) {
                        if (errors++ == 0) {
                            std::lock_guard lock(first_error_mu);
                            first_error = res ? "status " + std::to_string(res->status) : httplib::to_string(res.error());
                        }
                        continue;
                    }
                    if (i >= kWarmup) lat.push_back(ms);
                }
            });
        }
        while (ready < kClients) std::this_thread::yield();
        go = true;
    }
    server.stop();

    std::vector<double> all;
    for (const auto& v : per_client) all.insert(all.end(), v.begin(), v.end());
    if (all.empty()) return {false, "no successful requests"};
    std::sort(all.begin(), all.end());
    auto pct = [&](double p) { return all[std::min(all.size() - 1, static_cast<std::size_t>(p * (all.size() - 1)))]; };
    const double p50 = pct(0.50), p99 = pct(0.99);
    return {p50 <= 2.0 && p99 <= 10.0 && errors == 0,
            fmt("index=%zu clients=%d requests=%zu errors=%d (first: %s) p50=%.3fms p99=%.3fms (<=2ms, <=10ms) cores=%u; "
                "single-client p50=%.3fms, in-handler p50=%.3fms",
                index_size,
                kClients, all.size(), errors.load(), first_error.c_str(), p50, p99, std::thread::hardware_concurrency(), median(sequential), median(server_side))};
}

}  // namespace

int main(int argc, char** argv) {
    // optional arguments select criteria by name
    const std::set<std::string> only(argv + 1, argv + argc);
    auto wanted = [&](const std::string& name) { return only.empty() || only.count(name) > 0; };

    if (wanted("seasonality_oracle")) run("seasonality_oracle", seasonality_oracle);
    if (wanted("gradient_check")) run("gradient_check", gradient_check);
    if (wanted("trie_oracle")) run("trie_oracle", trie_oracle);
    if (wanted("memorial_day_fixture")) run("memorial_day_fixture", memo_scenario);

    const std::vector<std::string> needs_model{"planted_learning", "mrr_lift", "determinism_persistence",
                                               "service_latency"};
    if (std::none_of(needs_model.begin(), needs_model.end(), wanted)) {
        std::printf("%d failed\n", failures);
        return failures == 0 ? 0 : 1;
    }
    std::optional<PlantedWorld> world;
    const auto t0 = Clock::now();
    try {
        world = build_world();
    } catch (const std::exception& e) {
        const Outcome o{false, std::string("training failed: ") + e.what()};
        for (const auto& name : needs_model) {
            if (wanted(name)) report(name, o, 0.0);
        }
        return 1;
    }
    const double train_secs = seconds_since(t0);
    if (wanted("planted_learning")) report("planted_learning", planted_learning(*world), train_secs);
    if (wanted("mrr_lift")) run("mrr_lift", [&] { return mrr_lift(*world); });
    if (wanted("determinism_persistence")) run("determinism_persistence", [&] { return determinism(*world); });
    if (wanted("service_latency")) run("service_latency", [&] { return service_latency(*world); });

    std::printf("%d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
