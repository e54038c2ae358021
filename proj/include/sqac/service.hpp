#pragma once

// HTTP suggestion service. Requests read an immutable artifact snapshot;
// reloads build a new snapshot and swap the pointer, so a request sees
// either the old or the new artifacts, never a mix.

#include <sqac/completion_index.hpp>
#include <sqac/container.hpp>
#include <sqac/error.hpp>
#include <sqac/ranker.hpp>
#include <sqac/seasonnet/persist.hpp>
#include <sqac/text.hpp>

// 100 simultaneous connects must not overflow the accept queue
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 1024
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <chrono>
#include <ctime>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>

namespace sqac::service {

inline constexpr std::string_view kBuildInfo = "sqac/1.0";

namespace detail {

/// JSON string literal; invalid UTF-8 is replaced so the body always parses.
inline void append_json_string(std::string& out, std::string_view s) {
    static constexpr char kHex[] = "0123456789abcdef";
    out += '"';
    std::string valid;
    const bool ascii = std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
    if (!ascii && utf8::encode(utf8::decode(s)) != s) {
        valid = utf8::encode(utf8::decode(s));
        s = valid;
    }
    for (const char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (c == '"' || c == '\\') {
            out += '\\';
            out += c;
        } else if (u < 0x20) {
            out += "\\u00";
            out += kHex[u >> 4];
            out += kHex[u & 0xF];
        } else {
            out += c;
        }
    }
    out += '"';
}

/// Shortest round-trip representation; non-finite values become null.
template <typename T>
void append_number(std::string& out, T v) {
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) {
            out += "null";
            return;
        }
    }
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, r.ptr);
}

}  // namespace detail

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string index_path;
    std::string model_path;
    ranker::L2Config l2;
    std::optional<int> month_override;
    std::string cors_origin = "*";
    std::size_t worker_threads = 128;
};

struct Snapshot {
    CompletionIndex index;
    ranker::SeasonalityTable seasonality;  // every indexed query, 12 months
    std::optional<seasonnet::SeasonModel> model;
    std::string index_hash;
    std::string model_hash;
    ranker::IndexedSeasonality lookup;  // points into index and seasonality above

    Snapshot() = default;
    Snapshot(const Snapshot&) = delete;
    Snapshot& operator=(const Snapshot&) = delete;

    static std::shared_ptr<const Snapshot> load(const std::string& index_path, const std::string& model_path) {
        auto snap = std::make_shared<Snapshot>();
        const auto index_bytes = container::read_file(index_path);
        snap->index = CompletionIndex::deserialize(index_bytes);
        snap->index_hash = container::fingerprint(index_bytes);
        const auto model_bytes = container::read_file(model_path);
        snap->model = seasonnet::deserialize_model(model_bytes);
        snap->model_hash = container::fingerprint(model_bytes);
        snap->seasonality = ranker::SeasonalityTable::precompute(*snap->model, snap->index.entries());
        snap->lookup = ranker::IndexedSeasonality(snap->index, snap->seasonality);
        return snap;
    }

    static std::shared_ptr<const Snapshot> from_model(CompletionIndex index, seasonnet::SeasonModel model) {
        auto snap = std::make_shared<Snapshot>();
        snap->index_hash = container::fingerprint(index.serialize());
        snap->model_hash = seasonnet::model_hash(model);
        snap->index = std::move(index);
        snap->model = std::move(model);
        snap->seasonality = ranker::SeasonalityTable::precompute(*snap->model, snap->index.entries());
        snap->lookup = ranker::IndexedSeasonality(snap->index, snap->seasonality);
        return snap;
    }

    /// Snapshot backed by a fixed score table instead of a model.
    static std::shared_ptr<const Snapshot> from_table(CompletionIndex index, ranker::SeasonalityTable table,
                                                      std::string model_hash = "table") {
        auto snap = std::make_shared<Snapshot>();
        snap->index_hash = container::fingerprint(index.serialize());
        snap->model_hash = std::move(model_hash);
        snap->index = std::move(index);
        snap->seasonality = std::move(table);
        snap->lookup = ranker::IndexedSeasonality(snap->index, snap->seasonality);
        return snap;
    }
};

struct Reply {
    int status = 200;
    std::string body;
};

/// Query parameter lookup, first value wins.
using Params = httplib::Params;

class SuggestionService {
public:
    explicit SuggestionService(ServiceConfig config) : config_(std::move(config)) { config_.l2.validate(); }

    const ServiceConfig& config() const { return config_; }

    void install(std::shared_ptr<const Snapshot> snap) {
        std::lock_guard lock(mu_);
        snapshot_ = std::move(snap);
    }

    std::shared_ptr<const Snapshot> snapshot() const {
        std::lock_guard lock(mu_);
        return snapshot_;
    }

    /// Loads artifacts from the configured paths and swaps them in. On
    /// failure the current snapshot stays in place and the error propagates.
    void reload() { install(Snapshot::load(config_.index_path, config_.model_path)); }

    Reply complete(const Params& params) const {
        const auto start = std::chrono::steady_clock::now();
        const auto snap = snapshot();
        if (!snap) return error(503, "artifacts not loaded");
        const std::string prefix = get(params, "prefix").value_or("");

        int month = config_.month_override.value_or(current_month());
        if (auto m = get(params, "month")) {
            if (!parse_int(*m, month) || month < 1 || month > 12) return error(400, "month must be an integer in 1..12");
        }
        ranker::L2Config l2 = config_.l2;
        if (auto k = get(params, "k")) {
            int v = 0;
            if (!parse_int(*k, v) || v < 1 || static_cast<std::size_t>(v) > l2.n_candidates) {
                return error(400, "k must be an integer in 1.." + std::to_string(l2.n_candidates));
            }
            l2.k_display = static_cast<std::size_t>(v);
        }
        if (auto a = get(params, "alpha")) {
            double v = 0;
            if (!parse_double(*a, v) || !(v >= 0.0 && v <= 1.0)) return error(400, "alpha must be a number in [0,1]");
            l2.seasonality_weight = v;
        }

        const auto candidates = snap->index.complete(prefix, l2.n_candidates, CompletionOrder::L1);
        const auto ranked = ranker::l2_rerank(std::span<const Completion>(candidates), month, snap->lookup, l2);

        const auto micros =
            std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
        std::string body;
        body.reserve(128 + 160 * ranked.size());
        body += "{\"prefix\":";
        detail::append_json_string(body, prefix);
        body += ",\"month\":";
        detail::append_number(body, month);
        body += ",\"suggestions\":[";
        for (const auto& r : ranked) {
            if (r.rank > 1) body += ',';
            body += "{\"query\":";
            detail::append_json_string(body, r.query);
            body += ",\"rank\":";
            detail::append_number(body, r.rank);
            body += ",\"final_score\":";
            detail::append_number(body, r.final_score);
            body += ",\"l1_score\":";
            detail::append_number(body, r.l1_score);
            body += ",\"seasonality\":";
            detail::append_number(body, r.seasonality);
            body += '}';
        }
        body += "],\"latency_micros\":";
        detail::append_number(body, micros);
        body += '}';
        return {200, std::move(body)};
    }

    Reply seasonality(const Params& params) const {
        const auto snap = snapshot();
        if (!snap) return error(503, "artifacts not loaded");
        const auto q = get(params, "q");
        if (!q || normalize_query(*q).empty()) return error(400, "q must be a non-empty query");
        std::array<double, 12> scores{};
        if (snap->model) {
            scores = seasonnet::predict_all_months(*snap->model, *q);
        } else {
            for (int m = 1; m <= 12; ++m) scores[static_cast<std::size_t>(m - 1)] = snap->seasonality.score(normalize_query(*q), m);
        }
        nlohmann::json body = {{"query", normalize_query(*q)}, {"scores", scores}};
        return {200, body.dump()};
    }

    Reply healthz() const {
        const auto snap = snapshot();
        if (!snap) return error(503, "artifacts not loaded");
        nlohmann::json body = {{"status", "ok"},
                               {"model_hash", snap->model_hash},
                               {"index_hash", snap->index_hash},
                               {"index_size", snap->index.size()},
                               {"build", std::string(kBuildInfo) + " (" + __VERSION__ + ")"}};
        return {200, body.dump()};
    }

    /// Registers every route on `server`.
    void bind(httplib::Server& server) {
        auto send = [](httplib::Response& res, const Reply& r) {
            res.status = r.status;
            res.set_content(r.body, "application/json");
        };
        server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});
        server.Get("/complete", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, complete(req.params));
        });
        server.Get("/seasonality", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, seasonality(req.params));
        });
        server.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, healthz()); });
        server.Post("/reload", [this, send](const httplib::Request&, httplib::Response& res) {
            try {
                reload();
                send(res, healthz());
            } catch (const std::exception& e) {
                send(res, error(500, std::string("reload failed: ") + e.what()));
            }
        });
        server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        const auto threads = config_.worker_threads;
        server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
        server.set_keep_alive_max_count(1000000);
        server.set_tcp_nodelay(true);
    }

    static int current_month() {
        const std::time_t now = std::time(nullptr);
        std::tm tm{};
        localtime_r(&now, &tm);
        return tm.tm_mon + 1;
    }

private:
    static std::optional<std::string> get(const Params& params, const std::string& key) {
        auto it = params.find(key);
        if (it == params.end()) return std::nullopt;
        return it->second;
    }

    static bool parse_int(std::string_view s, int& out) {
        auto r = std::from_chars(s.data(), s.data() + s.size(), out);
        return !s.empty() && r.ec == std::errc{} && r.ptr == s.data() + s.size();
    }

    static bool parse_double(std::string_view s, double& out) {
        auto r = std::from_chars(s.data(), s.data() + s.size(), out);
        return !s.empty() && r.ec == std::errc{} && r.ptr == s.data() + s.size();
    }

    static Reply error(int status, std::string_view message) {
        return {status, nlohmann::json{{"error", message}}.dump()};
    }

    ServiceConfig config_;
    mutable std::mutex mu_;
    std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace sqac::service
