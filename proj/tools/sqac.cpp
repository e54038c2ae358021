// sqac: command-line front end for the seasonality-aware autocomplete
// pipeline (synth -> ingest -> train -> index -> rerank/eval/serve).

#include <sqac/sqac.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

using namespace sqac;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return in;
}

ranker::L1Weights parse_weights(const std::vector<double>& w) {
    if (w.size() != 3) throw InvalidArgument("--l1-weights expects 3 values: add_to_carts,clicks,impressions");
    ranker::L1Weights out{w[0], w[1], w[2]};
    out.validate();
    return out;
}

struct Globals {
    std::uint64_t seed = 7;
};

// synth ----------------------------------------------------------------------

struct SynthArgs {
    std::string spec_path;
    std::string out;
    std::string engagement_out;
};

void run_synth(const SynthArgs& a, const Globals& g, bool seed_given) {
    synth::SynthSpec spec;
    if (!a.spec_path.empty()) {
        auto in = open_in(a.spec_path);
        spec = nlohmann::json::parse(in).get<synth::SynthSpec>();
    }
    if (seed_given || a.spec_path.empty()) spec.seed = g.seed;
    const auto queries = synth::generate_queries(spec);
    const auto events = synth::synth_events(spec, queries);
    auto out = open_out(a.out);
    out << "# synthetic query log, seed " << spec.seed << "\n";
    synth::write_events(out, events);
    if (!a.engagement_out.empty()) {
        auto eng = open_out(a.engagement_out);
        const auto records = synth::synth_engagement(queries, spec.seed);
        ranker::write_engagement(eng, records);
    }
    std::cerr << "synth: " << queries.size() << " queries, " << events.size() << " events -> " << a.out << "\n";
}

// ingest ---------------------------------------------------------------------

struct IngestArgs {
    std::vector<std::string> inputs;
    std::uint64_t k = loglab::kDefaultKThreshold;
    std::string out;
    double sample = 1.0;
    std::string corpus_out;
    std::string engagement;
    std::vector<double> l1_weights = {1.0, 0.2, 0.01};
    std::string cases_out;
    std::size_t n_cases = 300;
};

void run_ingest(const IngestArgs& a, const Globals& g) {
    std::vector<loglab::LogEvent> events;
    for (const auto& path : a.inputs) {
        auto in = open_in(path);
        auto log = loglab::read_events(in, path);
        std::cerr << "ingest: " << path << ": " << log.events.size() << " events, " << log.malformed
                  << " malformed lines\n";
        for (const auto& d : log.diagnostics) std::cerr << "  " << d << "\n";
        events.insert(events.end(), std::make_move_iterator(log.events.begin()),
                      std::make_move_iterator(log.events.end()));
    }
    const auto table = loglab::aggregate(events);
    auto targets = loglab::seasonality_targets(table, a.k);
    targets = loglab::sample_queries(targets, a.sample, g.seed);
    auto out = open_out(a.out);
    loglab::write_targets(out, targets);
    std::cerr << "ingest: " << table.cells.size() << " queries, " << targets.size() / 12
              << " above threshold -> " << a.out << "\n";

    if (!a.corpus_out.empty()) {
        std::vector<ranker::EngagementRecord> engagement;
        if (!a.engagement.empty()) {
            auto in = open_in(a.engagement);
            engagement = ranker::read_engagement(in, a.engagement);
        }
        const auto corpus = ranker::score_corpus(table, engagement, parse_weights(a.l1_weights));
        auto cout = open_out(a.corpus_out);
        write_corpus(cout, corpus);
        std::cerr << "ingest: corpus of " << corpus.size() << " queries -> " << a.corpus_out << "\n";
    }
    if (!a.cases_out.empty()) {
        const auto cases = eval::sample_cases(events, a.n_cases, g.seed);
        auto cout = open_out(a.cases_out);
        eval::write_cases(cout, cases);
        std::cerr << "ingest: " << cases.size() << " replay cases -> " << a.cases_out << "\n";
    }
}

// train ----------------------------------------------------------------------

struct TrainArgs {
    std::string targets;
    std::string embeddings;
    std::size_t dim = 300;
    std::string out;
    std::size_t epochs = 50;
    std::size_t batch = 256;
    double lr = 1e-3;
    std::vector<std::size_t> hidden = {128, 64};
    double dropout = seasonnet::kDefaultDropout;
    double val_fraction = 0.2;
    std::size_t patience = 5;
};

void run_train(const TrainArgs& a, const Globals& g) {
    auto in = open_in(a.targets);
    const auto targets = loglab::read_targets(in, a.targets);
    seasonnet::TrainConfig cfg;
    cfg.seed = g.seed;
    cfg.embedding_dim = a.dim;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.adam.learning_rate = a.lr;
    cfg.hidden = a.hidden;
    cfg.dropout = a.dropout;
    cfg.validation_fraction = a.val_fraction;
    cfg.patience = a.patience;
    std::optional<seasonnet::Embeddings> pretrained;
    if (!a.embeddings.empty()) {
        std::ifstream probe(a.embeddings);
        if (probe) {
            pretrained = seasonnet::load_embeddings(a.embeddings, a.dim);
            std::cerr << "train: loaded " << pretrained->vocab.size() - 1 << " pre-trained vectors\n";
        } else {
            std::cerr << "train: embedding file '" << a.embeddings << "' not found, using random init\n";
        }
    }
    auto result = seasonnet::train(targets, std::move(pretrained), cfg, [](const seasonnet::EpochMetrics& m) {
        std::fprintf(stderr, "epoch %3zu  train_mse %.6f  val_mse %.6f\n", m.epoch, m.train_mse, m.validation_mse);
    });
    seasonnet::save_model(result.model, a.out);
    std::fprintf(stderr, "train: best epoch %zu, validation mse %.6f -> %s (hash %s)\n", result.best_epoch,
                 result.validation_mse, a.out.c_str(), seasonnet::model_hash(result.model).c_str());
}

// predict --------------------------------------------------------------------

void run_predict(const std::string& model_path, const std::string& query, std::optional<int> month) {
    const auto model = seasonnet::load_model(model_path);
    if (month) {
        std::printf("%.6f\n", seasonnet::predict(model, query, *month));
        return;
    }
    const auto scores = seasonnet::predict_all_months(model, query);
    for (int m = 1; m <= 12; ++m) std::printf("%d\t%.6f\n", m, scores[static_cast<std::size_t>(m - 1)]);
}

// index ----------------------------------------------------------------------

void run_index(const std::string& corpus_path, const std::string& out) {
    auto in = open_in(corpus_path);
    auto index = CompletionIndex::build(read_corpus(in, corpus_path));
    index.save(out);
    std::cerr << "index: " << index.size() << " queries, " << index.node_count() << " trie nodes -> " << out << "\n";
}

// rerank ---------------------------------------------------------------------

struct RankArgs {
    std::string index;
    std::string model;
    std::string prefix;
    int month = 1;
    double alpha = 0.3;
    std::size_t n = 50;
    std::size_t k = 10;
};

void run_rerank(const RankArgs& a) {
    const auto index = CompletionIndex::load(a.index);
    const auto model = seasonnet::load_model(a.model);
    const ranker::L2Config cfg{a.alpha, a.n, a.k};
    const auto candidates = index.complete(a.prefix, cfg.n_candidates, CompletionOrder::L1);
    const auto ranked = ranker::l2_rerank(std::span<const Completion>(candidates), a.month,
                                          ranker::ModelScorer(model), cfg);
    std::printf("rank\tquery\tfinal_score\tl1_score\tseasonality\n");
    for (const auto& r : ranked) {
        std::printf("%zu\t%s\t%.6f\t%.6f\t%.6f\n", r.rank, r.query.c_str(), r.final_score, r.l1_score, r.seasonality);
    }
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
    std::string cases;
    std::string index;
    std::string model;
    double alpha = 0.3;
    std::optional<double> baseline_alpha;
    std::size_t n = 50;
    std::size_t k = 10;
    std::string out;
};

void run_eval_cmd(const EvalArgs& a) {
    auto in = open_in(a.cases);
    const auto cases = eval::gen_cases(eval::read_cases(in, a.cases));
    const auto index = CompletionIndex::load(a.index);
    const auto model_bytes = container::read_file(a.model);
    const auto model = seasonnet::deserialize_model(model_bytes);
    const auto table = ranker::SeasonalityTable::precompute(model, index.entries());
    eval::Pipeline<ranker::SeasonalityTable> pipe{&index, &table, {a.alpha, a.n, a.k},
                                                  container::fingerprint(model_bytes)};
    const auto test = eval::run_eval(std::span<const eval::ReplayCase>(cases), pipe);
    nlohmann::json report = eval::to_json(test);
    if (a.baseline_alpha) {
        auto control_pipe = pipe;
        control_pipe.config.seasonality_weight = *a.baseline_alpha;
        const auto control = eval::run_eval(std::span<const eval::ReplayCase>(cases), control_pipe);
        report = {{"test", eval::to_json(test)},
                  {"control", eval::to_json(control)},
                  {"lift", eval::to_json(eval::ab_compare(control, test))}};
    }
    const auto text = report.dump(2);
    if (a.out.empty()) {
        std::cout << text << "\n";
    } else {
        open_out(a.out) << text << "\n";
    }
}

// serve ----------------------------------------------------------------------

void run_serve(service::ServiceConfig cfg) {
    // block before any thread starts so every thread inherits the mask
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGHUP);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::SuggestionService svc(cfg);
    svc.reload();  // throws (and exits nonzero) when an artifact is missing
    httplib::Server server;
    svc.bind(server);
    if (!server.bind_to_port(cfg.host, cfg.port)) throw Error("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));

    std::jthread signal_thread([&] {
        while (true) {
            int sig = 0;
            if (sigwait(&signals, &sig) != 0) continue;
            if (sig == SIGHUP) {
                try {
                    svc.reload();
                    std::cerr << "serve: artifacts reloaded\n";
                } catch (const std::exception& e) {
                    std::cerr << "serve: reload failed, keeping previous artifacts: " << e.what() << "\n";
                }
                continue;
            }
            server.stop();
            return;
        }
    });
    const auto snap = svc.snapshot();
    std::cerr << "serve: listening on " << cfg.host << ":" << cfg.port << " (index " << snap->index_hash << ", model "
              << snap->model_hash << ")\n";
    server.listen_after_bind();
    pthread_kill(signal_thread.native_handle(), SIGTERM);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seasonality-aware query autocomplete"};
    app.set_config("--config", "", "key-value (TOML/INI) file with option defaults; sections name subcommands");
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "RNG seed")->capture_default_str();

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic query log with planted seasonality");
    synth->add_option("--spec", synth_args.spec_path, "JSON generator spec")->check(CLI::ExistingFile);
    synth->add_option("--out", synth_args.out, "event log TSV")->required();
    synth->add_option("--engagement-out", synth_args.engagement_out, "also write synthetic engagement TSV");

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "aggregate event logs into seasonality targets");
    ingest->add_option("--in", ingest_args.inputs, "event log TSV file(s)")->required()->check(CLI::ExistingFile);
    ingest->add_option("--k", ingest_args.k, "minimum annual volume per query")->capture_default_str();
    ingest->add_option("--out", ingest_args.out, "targets TSV")->required();
    ingest->add_option("--sample", ingest_args.sample, "fraction of queries kept after thresholding")
        ->capture_default_str();
    ingest->add_option("--corpus-out", ingest_args.corpus_out, "also write an index corpus TSV");
    ingest->add_option("--engagement", ingest_args.engagement, "engagement TSV used for L1 scores");
    ingest->add_option("--l1-weights", ingest_args.l1_weights, "add_to_carts,clicks,impressions weights")
        ->delimiter(',')
        ->expected(3);
    ingest->add_option("--cases-out", ingest_args.cases_out, "also write traffic-sampled replay cases");
    ingest->add_option("--n-cases", ingest_args.n_cases, "number of replay cases")->capture_default_str();

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train the seasonality model");
    train->add_option("--targets", train_args.targets, "targets TSV")->required()->check(CLI::ExistingFile);
    train->add_option("--embeddings", train_args.embeddings, "pre-trained vectors (token v1 .. vd)");
    train->add_option("--dim", train_args.dim, "embedding dimension")->capture_default_str();
    train->add_option("--out", train_args.out, "model file")->required();
    train->add_option("--epochs", train_args.epochs)->capture_default_str();
    train->add_option("--batch", train_args.batch)->capture_default_str();
    train->add_option("--lr", train_args.lr)->capture_default_str();
    train->add_option("--hidden", train_args.hidden, "hidden widths")->delimiter(',');
    train->add_option("--dropout", train_args.dropout)->capture_default_str();
    train->add_option("--val-fraction", train_args.val_fraction)->capture_default_str();
    train->add_option("--patience", train_args.patience)->capture_default_str();

    std::string predict_model, predict_query;
    std::optional<int> predict_month;
    auto* predict = app.add_subcommand("predict", "score a query for one or all months");
    predict->add_option("--model", predict_model)->required()->check(CLI::ExistingFile);
    predict->add_option("--query", predict_query)->required();
    predict->add_option("--month", predict_month)->check(CLI::Range(1, 12));

    std::string index_corpus, index_out;
    auto* index = app.add_subcommand("index", "build a completion index from a corpus TSV");
    index->add_option("--corpus", index_corpus)->required()->check(CLI::ExistingFile);
    index->add_option("--out", index_out)->required();

    RankArgs rank_args;
    auto* rerank = app.add_subcommand("rerank", "L1 retrieval + L2 seasonal re-rank for one prefix");
    rerank->add_option("--index", rank_args.index)->required()->check(CLI::ExistingFile);
    rerank->add_option("--model", rank_args.model)->required()->check(CLI::ExistingFile);
    rerank->add_option("--prefix", rank_args.prefix)->required();
    rerank->add_option("--month", rank_args.month)->required()->check(CLI::Range(1, 12));
    rerank->add_option("--alpha", rank_args.alpha)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    rerank->add_option("--n", rank_args.n)->capture_default_str();
    rerank->add_option("--k", rank_args.k)->capture_default_str();

    EvalArgs eval_args;
    auto* evalc = app.add_subcommand("eval", "prefix-replay MRR evaluation");
    evalc->add_option("--cases", eval_args.cases, "cases TSV (query<TAB>month)")->required()->check(CLI::ExistingFile);
    evalc->add_option("--index", eval_args.index)->required()->check(CLI::ExistingFile);
    evalc->add_option("--model", eval_args.model)->required()->check(CLI::ExistingFile);
    evalc->add_option("--alpha", eval_args.alpha)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    evalc->add_option("--baseline-alpha", eval_args.baseline_alpha, "also run a control and report the lift")
        ->check(CLI::Range(0.0, 1.0));
    evalc->add_option("--n", eval_args.n)->capture_default_str();
    evalc->add_option("--k", eval_args.k)->capture_default_str();
    evalc->add_option("--out", eval_args.out, "write JSON report here instead of stdout");

    service::ServiceConfig serve_cfg;
    std::optional<int> serve_month;
    auto* serve = app.add_subcommand("serve", "HTTP suggestion service");
    serve->add_option("--index", serve_cfg.index_path)->required();
    serve->add_option("--model", serve_cfg.model_path)->required();
    serve->add_option("--host", serve_cfg.host)->capture_default_str();
    serve->add_option("--port", serve_cfg.port)->capture_default_str();
    serve->add_option("--month", serve_month, "fixed month instead of the wall clock")->check(CLI::Range(1, 12));
    serve->add_option("--alpha", serve_cfg.l2.seasonality_weight)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    serve->add_option("--n", serve_cfg.l2.n_candidates)->capture_default_str();
    serve->add_option("--k", serve_cfg.l2.k_display)->capture_default_str();
    serve->add_option("--cors-origin", serve_cfg.cors_origin)->capture_default_str();
    serve->add_option("--threads", serve_cfg.worker_threads)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) run_synth(synth_args, g, seed_opt->count() > 0);
        if (*ingest) run_ingest(ingest_args, g);
        if (*train) run_train(train_args, g);
        if (*predict) run_predict(predict_model, predict_query, predict_month);
        if (*index) run_index(index_corpus, index_out);
        if (*rerank) run_rerank(rank_args);
        if (*evalc) run_eval_cmd(eval_args);
        if (*serve) {
            serve_cfg.month_override = serve_month;
            run_serve(serve_cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
