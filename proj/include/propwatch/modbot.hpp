#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "propwatch/corpus.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/models.hpp"

namespace propwatch {

enum class BotAction { log, remove, remove_ban };
enum class EmbedSource { store, endpoint, hash };
/// What to do when the trigger of an event cannot be embedded.
enum class MissingEmbedding { skip, fallback };

std::string_view to_string(BotAction a);
BotAction parse_bot_action(std::string_view s);  ///< "log", "delete", "delete+ban"
EmbedSource parse_embed_source(std::string_view s);  ///< "store", "endpoint", "hash"

struct BotConfig {
    std::filesystem::path pair_model;
    std::optional<std::filesystem::path> reply_model;  ///< used by MissingEmbedding::fallback
    EmbedSource embed_source = EmbedSource::hash;
    std::filesystem::path store;  ///< EmbedSource::store
    std::string embed_url;        ///< EmbedSource::endpoint
    double threshold = 0.5;
    BotAction action = BotAction::log;
    std::set<std::string> allowlist;  ///< channels the bot may act on; empty = none
    std::string api_base;             ///< e.g. https://api.telegram.org
    std::string token;
    MissingEmbedding on_missing = MissingEmbedding::skip;
    std::size_t lru_capacity = 10000;  ///< recent messages kept per channel
    std::size_t max_in_flight = 4;
    int attempts = 3;
    std::chrono::milliseconds backoff{200};  ///< doubled after each failed attempt

    /// Throws Error(usage): threshold outside (0,1), acting without URL/token, zero capacities.
    void validate() const;
};

/// Bounded recent-message cache for one channel, keyed by message id.
class MessageLru {
public:
    explicit MessageLru(std::size_t capacity);
    void put(const Message& m);
    /// Returns the message and marks it most recently used.
    std::optional<Message> get(std::int64_t message_id);
    std::size_t size() const { return map_.size(); }

private:
    std::size_t capacity_;
    std::list<Message> order_;  // front = most recent
    std::unordered_map<std::int64_t, std::list<Message>::iterator> map_;
};

struct BotVerdict {
    MessageKey key;
    std::optional<std::string> account_id;
    Verdict verdict;
    bool trigger_present = false;  ///< false: zero-filled trigger slot
    bool fallback = false;         ///< scored by the reply-only model
    double latency_seconds = 0.0;
};

/// One JSON object per line; latency is the only field that varies across replays.
std::string verdict_json(const BotVerdict& v);

/// Embeds and scores trigger-reply pairs. Thread-safe.
class Scorer {
public:
    /// `reply_model` may be null. The embedder must match the pair model's embedding dim.
    Scorer(MLPModel pair_model, std::unique_ptr<Embedder> embedder, std::optional<MLPModel> reply_model = {},
           double threshold = 0.5, MissingEmbedding on_missing = MissingEmbedding::skip);
    /// Looks embeddings up by message key instead of embedding text.
    Scorer(MLPModel pair_model, std::shared_ptr<const EmbeddingStore> store, std::optional<MLPModel> reply_model = {},
           double threshold = 0.5, MissingEmbedding on_missing = MissingEmbedding::skip);

    static std::unique_ptr<Scorer> from_config(const BotConfig& cfg);

    /// nullopt (logged) when the reply cannot be embedded, or the trigger cannot be and
    /// no fallback applies.
    std::optional<BotVerdict> verdict_for(const Message& reply, const Message* trigger);

    std::size_t dim() const { return dim_; }
    const std::string& pair_model_id() const { return pair_id_; }

private:
    std::optional<Vector> embed_one(const Message& m);

    MLPModel pair_;
    std::optional<MLPModel> reply_;
    std::string pair_id_, reply_id_;
    std::unique_ptr<Embedder> embedder_;
    std::mutex embed_mu_;  // remote embedders are not re-entrant
    std::shared_ptr<const EmbeddingStore> store_;
    std::size_t dim_ = 0;
    double threshold_;
    MissingEmbedding on_missing_;
};

// ------------------------------------------------------------- actions

struct ApiResult {
    bool ok = false;
    int status = 0;  ///< HTTP status, 0 when no response arrived
    std::string description;
};

/// The two moderation calls of the Telegram Bot API.
class ModerationApi {
public:
    virtual ~ModerationApi() = default;
    virtual ApiResult delete_message(const std::string& chat_id, std::int64_t message_id) = 0;
    virtual ApiResult ban_chat_member(const std::string& chat_id, const std::string& user_id) = 0;
};

/// HTTPS client for `{base}/bot{token}/<method>`.
class TelegramApi final : public ModerationApi {
public:
    TelegramApi(std::string base_url, std::string token, int timeout_seconds = 10);
    ~TelegramApi() override;
    ApiResult delete_message(const std::string& chat_id, std::int64_t message_id) override;
    ApiResult ban_chat_member(const std::string& chat_id, const std::string& user_id) override;
    /// Long poll; returns the raw `result` array. Throws Error(io) on transport failure.
    std::vector<std::string> get_updates(std::int64_t offset, int timeout_seconds);

private:
    ApiResult call(const std::string& method, const std::string& body);
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct ActionRecord {
    std::string method;  ///< deleteMessage or banChatMember
    std::string chat_id;
    std::string target;  ///< message id or user id
    bool ok = false;
    int attempts = 0;
    std::string error;
};

std::string action_json(const ActionRecord& r);

/// Runs API calls on a fixed pool of `max_in_flight` threads; each call is retried with
/// exponential backoff.
class ActionDispatcher {
public:
    ActionDispatcher(ModerationApi& api, std::size_t max_in_flight, int attempts, std::chrono::milliseconds backoff,
                     std::function<void(const ActionRecord&)> on_done = {});
    ~ActionDispatcher();
    ActionDispatcher(const ActionDispatcher&) = delete;
    ActionDispatcher& operator=(const ActionDispatcher&) = delete;

    void remove(const std::string& chat_id, std::int64_t message_id);
    void ban(const std::string& chat_id, const std::string& user_id);
    /// Blocks until every queued call has finished.
    void flush();
    std::vector<ActionRecord> records() const;
    /// Largest number of calls that were running at the same time.
    std::size_t peak_in_flight() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ------------------------------------------------------------- service

struct BotStats {
    std::size_t events = 0, malformed = 0, verdicts = 0, skipped = 0, propaganda = 0, actions = 0;
};

/// Routes events to one worker thread per channel, so verdicts of a channel keep arrival order.
class Bot {
public:
    using VerdictSink = std::function<void(const BotVerdict&)>;

    /// `api` may be null in log mode.
    Bot(const BotConfig& cfg, Scorer& scorer, ModerationApi* api, VerdictSink sink,
        std::function<void(const ActionRecord&)> on_action = {});
    ~Bot();
    Bot(const Bot&) = delete;
    Bot& operator=(const Bot&) = delete;

    /// Parses one corpus-schema JSON line; malformed lines are logged and counted.
    void submit_line(std::string_view line);
    void submit(Message m);
    /// Adds a message to the trigger cache without scoring it (e.g. embedded reply targets).
    void remember(Message m);
    /// Drains every channel queue and pending API call. Idempotent.
    void close();
    BotStats stats() const;
    std::vector<ActionRecord> actions() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Reads lines until EOF, then closes the bot.
void serve_stream(Bot& bot, std::istream& in);

/// Line-delimited TCP input on 127.0.0.1 (or `host`). Each connection is read to EOF.
class TcpInput {
public:
    /// Port 0 picks a free port.
    TcpInput(Bot& bot, std::uint16_t port, const std::string& host = "127.0.0.1");
    ~TcpInput();
    std::uint16_t port() const;
    /// Stops accepting, finishes open connections.
    void stop();
    std::size_t connections() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Telegram update (message or channel_post) -> corpus message; the embedded
/// reply_to_message, when present, is returned as the second element.
std::optional<std::pair<Message, std::optional<Message>>> message_from_update(std::string_view update_json);

/// Long-polls getUpdates until `stop` is set or `max_polls` (>0) polls were made.
void poll_updates(Bot& bot, TelegramApi& api, const std::atomic<bool>& stop, int timeout_seconds = 30,
                  int max_polls = 0);

// ------------------------------------------------------------- stub API

struct StubCall {
    std::string method;
    std::string chat_id;
    std::string target;
};

/// In-process HTTP server implementing getUpdates, deleteMessage and banChatMember.
class StubTelegramServer {
public:
    explicit StubTelegramServer(std::string token, const std::string& host = "127.0.0.1", int port = 0);
    ~StubTelegramServer();
    int port() const;
    std::string base_url() const;
    /// Queues a raw update object (update_id is assigned by the stub).
    void push_update(const std::string& update_json);
    /// The next `n` moderation calls answer HTTP 500 before being recorded.
    void fail_next(int n);
    std::vector<StubCall> calls() const;
    /// Blocks until `n` moderation calls were recorded or the timeout passes.
    bool wait_for_calls(std::size_t n, std::chrono::milliseconds timeout) const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ------------------------------------------------------------- latency

struct LatencyStats {
    std::size_t pairs = 0;
    double mean = 0.0;
    std::optional<double> stddev;  ///< absent for a single sample
};

struct TextPair {
    std::optional<std::string> trigger;
    std::string reply;
};

/// Times embed + pair vector + forward pass, one pair at a time.
LatencyStats latency_bench(const MLPModel& pair_model, const std::vector<TextPair>& pairs, Embedder& embedder);

}  // namespace propwatch
