#include "propwatch/modbot.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <boost/asio.hpp>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <thread>

#include "http_util.hpp"
#include "propwatch/error.hpp"

namespace propwatch {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string_view to_string(BotAction a) {
    switch (a) {
        case BotAction::log: return "log";
        case BotAction::remove: return "delete";
        case BotAction::remove_ban: return "delete+ban";
    }
    return "log";
}

BotAction parse_bot_action(std::string_view s) {
    if (s == "log") return BotAction::log;
    if (s == "delete") return BotAction::remove;
    if (s == "delete+ban") return BotAction::remove_ban;
    fail(ErrorKind::usage, "unknown bot action '" + std::string(s) + "' (log, delete, delete+ban)");
}

EmbedSource parse_embed_source(std::string_view s) {
    if (s == "store") return EmbedSource::store;
    if (s == "endpoint") return EmbedSource::endpoint;
    if (s == "hash") return EmbedSource::hash;
    fail(ErrorKind::usage, "unknown embedding source '" + std::string(s) + "' (store, endpoint, hash)");
}

void BotConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) fail(ErrorKind::usage, "threshold must be in (0,1)");
    if (action != BotAction::log && (api_base.empty() || token.empty()))
        fail(ErrorKind::usage, "acting mode needs an API base URL and a token");
    if (lru_capacity == 0) fail(ErrorKind::usage, "lru capacity must be positive");
    if (max_in_flight == 0) fail(ErrorKind::usage, "max in-flight calls must be positive");
    if (attempts < 1) fail(ErrorKind::usage, "attempts must be at least 1");
    if (embed_source == EmbedSource::store && store.empty()) fail(ErrorKind::usage, "store source needs a store path");
    if (embed_source == EmbedSource::endpoint && embed_url.empty())
        fail(ErrorKind::usage, "endpoint source needs an embed URL");
    if (on_missing == MissingEmbedding::fallback && !reply_model)
        fail(ErrorKind::usage, "fallback on missing embeddings needs a reply-only model");
}

// ------------------------------------------------------------- LRU

MessageLru::MessageLru(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) fail(ErrorKind::usage, "lru capacity must be positive");
}

void MessageLru::put(const Message& m) {
    if (auto it = map_.find(m.message_id); it != map_.end()) {
        *it->second = m;
        order_.splice(order_.begin(), order_, it->second);
        return;
    }
    order_.push_front(m);
    map_[m.message_id] = order_.begin();
    if (map_.size() > capacity_) {
        map_.erase(order_.back().message_id);
        order_.pop_back();
    }
}

std::optional<Message> MessageLru::get(std::int64_t message_id) {
    auto it = map_.find(message_id);
    if (it == map_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return *it->second;
}

// ------------------------------------------------------------- scoring

std::string verdict_json(const BotVerdict& v) {
    json j;
    j["message_id"] = v.key.str();
    j["account_id"] = v.account_id ? json(*v.account_id) : json(nullptr);
    j["label"] = to_string(v.verdict.label);
    j["score"] = v.verdict.score;
    j["threshold"] = v.verdict.threshold;
    j["model_id"] = v.verdict.model_id;
    j["trigger"] = v.trigger_present;
    j["fallback"] = v.fallback;
    j["latency_ms"] = v.latency_seconds * 1000.0;
    return j.dump();
}

namespace {

void check_pair_model(const MLPModel& pair, const std::optional<MLPModel>& reply) {
    if (pair.kind != InputKind::pair) fail(ErrorKind::format, "the bot needs a pair model");
    if (reply && (reply->kind != InputKind::reply || reply->embedding_dim != pair.embedding_dim))
        fail(ErrorKind::format, "fallback model must be a reply model of the pair model's embedding dim");
}

}  // namespace

Scorer::Scorer(MLPModel pair_model, std::unique_ptr<Embedder> embedder, std::optional<MLPModel> reply_model,
               double threshold, MissingEmbedding on_missing)
    : pair_(std::move(pair_model)),
      reply_(std::move(reply_model)),
      embedder_(std::move(embedder)),
      dim_(pair_.embedding_dim),
      threshold_(threshold),
      on_missing_(on_missing) {
    check_pair_model(pair_, reply_);
    if (!embedder_) fail(ErrorKind::usage, "scorer needs an embedder");
    if (embedder_->dim() != 0 && embedder_->dim() != dim_)
        fail(ErrorKind::format, "embedder dim " + std::to_string(embedder_->dim()) + " != model dim " +
                                    std::to_string(dim_));
    if (embedder_->name() != pair_.provenance)
        spdlog::warn("pair model was trained on '{}' embeddings, scoring with '{}'", pair_.provenance,
                     embedder_->name());
    pair_id_ = model_id(pair_);
    if (reply_) reply_id_ = model_id(*reply_);
}

Scorer::Scorer(MLPModel pair_model, std::shared_ptr<const EmbeddingStore> store, std::optional<MLPModel> reply_model,
               double threshold, MissingEmbedding on_missing)
    : pair_(std::move(pair_model)),
      reply_(std::move(reply_model)),
      store_(std::move(store)),
      dim_(pair_.embedding_dim),
      threshold_(threshold),
      on_missing_(on_missing) {
    check_pair_model(pair_, reply_);
    if (!store_) fail(ErrorKind::usage, "scorer needs an embedding store");
    if (store_->dim() != dim_)
        fail(ErrorKind::format, "store dim " + std::to_string(store_->dim()) + " != model dim " + std::to_string(dim_));
    if (store_->provenance() != pair_.provenance)
        spdlog::warn("pair model was trained on '{}' embeddings, store holds '{}'", pair_.provenance,
                     store_->provenance());
    pair_id_ = model_id(pair_);
    if (reply_) reply_id_ = model_id(*reply_);
}

std::unique_ptr<Scorer> Scorer::from_config(const BotConfig& cfg) {
    cfg.validate();
    auto pair = load_mlp(cfg.pair_model, InputKind::pair);
    std::optional<MLPModel> reply;
    if (cfg.reply_model) reply = load_mlp(*cfg.reply_model, InputKind::reply, pair.embedding_dim);
    switch (cfg.embed_source) {
        case EmbedSource::store: {
            auto store = std::make_shared<const EmbeddingStore>(load_store(cfg.store));
            return std::make_unique<Scorer>(std::move(pair), store, std::move(reply), cfg.threshold, cfg.on_missing);
        }
        case EmbedSource::endpoint: {
            auto dim = pair.embedding_dim;
            return std::make_unique<Scorer>(std::move(pair), std::make_unique<HttpEmbedder>(cfg.embed_url, dim),
                                            std::move(reply), cfg.threshold, cfg.on_missing);
        }
        case EmbedSource::hash: {
            auto dim = pair.embedding_dim;
            return std::make_unique<Scorer>(std::move(pair), std::make_unique<HashEmbedder>(dim), std::move(reply),
                                            cfg.threshold, cfg.on_missing);
        }
    }
    fail(ErrorKind::usage, "unknown embedding source");
}

std::optional<Vector> Scorer::embed_one(const Message& m) {
    if (store_) {
        auto v = store_->get(m.key());
        if (!v) return std::nullopt;
        return Vector(v->begin(), v->end());
    }
    try {
        std::vector<Vector> out;
        if (dynamic_cast<HashEmbedder*>(embedder_.get())) {
            out = embedder_->embed({m.text});
        } else {
            std::lock_guard lock(embed_mu_);
            out = embedder_->embed({m.text});
        }
        if (out.size() != 1 || out[0].size() != dim_) return std::nullopt;
        return std::move(out[0]);
    } catch (const Error& e) {
        spdlog::warn("embedding {} failed: {}", m.key().str(), e.what());
        return std::nullopt;
    }
}

std::optional<BotVerdict> Scorer::verdict_for(const Message& reply, const Message* trigger) {
    const auto t0 = Clock::now();
    BotVerdict v;
    v.key = reply.key();
    v.account_id = reply.account_id;
    auto r = embed_one(reply);
    if (!r) {
        spdlog::warn("no embedding for {}; skipped", reply.key().str());
        return std::nullopt;
    }
    std::optional<Vector> t;
    if (trigger) {
        t = embed_one(*trigger);
        if (!t) {
            if (on_missing_ == MissingEmbedding::fallback && reply_) {
                v.fallback = true;
            } else {
                spdlog::warn("no embedding for trigger {} of {}; skipped", trigger->key().str(), reply.key().str());
                return std::nullopt;
            }
        }
    }
    v.trigger_present = t.has_value();
    if (v.fallback) {
        auto x = to_double(*r);
        v.verdict = make_verdict(reply_->predict(x), threshold_, reply_id_);
    } else {
        std::optional<std::span<const float>> ts;
        if (t) ts = std::span<const float>(*t);
        auto x = build_pair_vector(ts, *r);
        v.verdict = make_verdict(pair_.predict(x), threshold_, pair_id_);
    }
    v.latency_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return v;
}

// ------------------------------------------------------------- Telegram client

namespace {

ApiResult result_from(const httplib::Result& res) {
    ApiResult out;
    if (!res) {
        out.description = "no response: " + httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    try {
        auto j = json::parse(res->body);
        out.ok = res->status == 200 && j.value("ok", false);
        out.description = j.value("description", std::string{});
    } catch (const std::exception&) {
        out.description = "unparseable response body";
    }
    if (!out.ok && out.description.empty()) out.description = "HTTP " + std::to_string(res->status);
    return out;
}

/// Transport errors, rate limits and server errors may succeed on retry; other refusals will not.
bool retryable(const ApiResult& r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

json chat_json(const std::string& chat_id) {
    // numeric chat ids go out as numbers, @usernames as strings
    try {
        std::size_t pos = 0;
        long long v = std::stoll(chat_id, &pos);
        if (pos == chat_id.size()) return v;
    } catch (const std::exception&) {
    }
    return chat_id;
}

}  // namespace

struct TelegramApi::Impl {
    detail::UrlParts url;
    std::string token;
    int timeout;

    httplib::Client client(int read_timeout) const {
        httplib::Client c(url.origin);
        c.set_connection_timeout(timeout, 0);
        c.set_read_timeout(read_timeout, 0);
        return c;
    }
    std::string path(const std::string& method) const { return url.prefix + "/bot" + token + "/" + method; }
};

TelegramApi::TelegramApi(std::string base_url, std::string token, int timeout_seconds)
    : impl_(std::make_unique<Impl>(Impl{detail::split_url(base_url), std::move(token), timeout_seconds})) {}

TelegramApi::~TelegramApi() = default;

ApiResult TelegramApi::call(const std::string& method, const std::string& body) {
    // one client per call: httplib clients are not meant for concurrent requests
    auto c = impl_->client(impl_->timeout);
    return result_from(c.Post(impl_->path(method), body, "application/json"));
}

ApiResult TelegramApi::delete_message(const std::string& chat_id, std::int64_t message_id) {
    json body{{"chat_id", chat_json(chat_id)}, {"message_id", message_id}};
    return call("deleteMessage", body.dump());
}

ApiResult TelegramApi::ban_chat_member(const std::string& chat_id, const std::string& user_id) {
    json body{{"chat_id", chat_json(chat_id)}, {"user_id", chat_json(user_id)}};
    return call("banChatMember", body.dump());
}

std::vector<std::string> TelegramApi::get_updates(std::int64_t offset, int timeout_seconds) {
    auto c = impl_->client(timeout_seconds + impl_->timeout);
    auto res = c.Get(impl_->path("getUpdates") + "?timeout=" + std::to_string(timeout_seconds) +
                     "&offset=" + std::to_string(offset));
    if (!res) fail(ErrorKind::io, "getUpdates failed: " + httplib::to_string(res.error()));
    json j;
    try {
        j = json::parse(res->body);
    } catch (const std::exception& e) {
        fail(ErrorKind::parse, std::string("getUpdates returned invalid JSON: ") + e.what());
    }
    if (res->status != 200 || !j.value("ok", false))
        fail(ErrorKind::io, "getUpdates refused: HTTP " + std::to_string(res->status) + " " +
                                j.value("description", std::string{}));
    std::vector<std::string> out;
    for (const auto& u : j.at("result")) out.push_back(u.dump());
    return out;
}

// ------------------------------------------------------------- dispatcher

std::string action_json(const ActionRecord& r) {
    json j{{"method", r.method}, {"chat_id", r.chat_id}, {"target", r.target},
           {"ok", r.ok},         {"attempts", r.attempts}};
    if (!r.error.empty()) j["error"] = r.error;
    return j.dump();
}

struct ActionDispatcher::Impl {
    struct Task {
        std::string method, chat_id, target;
        std::function<ApiResult()> call;
    };

    ModerationApi& api;
    int attempts;
    std::chrono::milliseconds backoff;
    std::function<void(const ActionRecord&)> on_done;

    mutable std::mutex mu;
    std::condition_variable cv, idle;
    std::deque<Task> queue;
    std::size_t active = 0, peak = 0;
    bool stopping = false;
    std::vector<ActionRecord> records;
    std::vector<std::thread> workers;

    Impl(ModerationApi& a, int n, std::chrono::milliseconds b, std::function<void(const ActionRecord&)> f)
        : api(a), attempts(n), backoff(b), on_done(std::move(f)) {}

    void run() {
        for (;;) {
            Task task;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (queue.empty()) return;
                task = std::move(queue.front());
                queue.pop_front();
                peak = std::max(peak, ++active);
            }
            ActionRecord rec{task.method, task.chat_id, task.target, false, 0, {}};
            auto wait = backoff;
            for (int k = 1; k <= attempts; ++k) {
                rec.attempts = k;
                ApiResult r = task.call();
                rec.ok = r.ok;
                rec.error = r.ok ? std::string{} : r.description;
                if (r.ok || !retryable(r)) break;
                if (k < attempts) {
                    std::this_thread::sleep_for(wait);
                    wait *= 2;
                }
            }
            if (!rec.ok)
                spdlog::error("{} {} {} failed after {} attempt(s): {}", rec.method, rec.chat_id, rec.target,
                              rec.attempts, rec.error);
            if (on_done) on_done(rec);
            {
                std::lock_guard lock(mu);
                records.push_back(std::move(rec));
                --active;
            }
            idle.notify_all();
        }
    }

    void push(Task t) {
        {
            std::lock_guard lock(mu);
            queue.push_back(std::move(t));
        }
        cv.notify_one();
    }
};

ActionDispatcher::ActionDispatcher(ModerationApi& api, std::size_t max_in_flight, int attempts,
                                   std::chrono::milliseconds backoff, std::function<void(const ActionRecord&)> on_done)
    : impl_(std::make_unique<Impl>(api, std::max(attempts, 1), backoff, std::move(on_done))) {
    if (max_in_flight == 0) fail(ErrorKind::usage, "max in-flight calls must be positive");
    for (std::size_t i = 0; i < max_in_flight; ++i) impl_->workers.emplace_back([this] { impl_->run(); });
}

ActionDispatcher::~ActionDispatcher() {
    {
        std::lock_guard lock(impl_->mu);
        impl_->stopping = true;
    }
    impl_->cv.notify_all();
    for (auto& t : impl_->workers) t.join();
}

void ActionDispatcher::remove(const std::string& chat_id, std::int64_t message_id) {
    impl_->push({"deleteMessage", chat_id, std::to_string(message_id),
                 [this, chat_id, message_id] { return impl_->api.delete_message(chat_id, message_id); }});
}

void ActionDispatcher::ban(const std::string& chat_id, const std::string& user_id) {
    impl_->push({"banChatMember", chat_id, user_id,
                 [this, chat_id, user_id] { return impl_->api.ban_chat_member(chat_id, user_id); }});
}

void ActionDispatcher::flush() {
    std::unique_lock lock(impl_->mu);
    impl_->idle.wait(lock, [&] { return impl_->queue.empty() && impl_->active == 0; });
}

std::vector<ActionRecord> ActionDispatcher::records() const {
    std::lock_guard lock(impl_->mu);
    return impl_->records;
}

std::size_t ActionDispatcher::peak_in_flight() const {
    std::lock_guard lock(impl_->mu);
    return impl_->peak;
}

// ------------------------------------------------------------- bot

struct Bot::Impl {
    struct Item {
        Message m;
        bool score = true;
    };
    struct Channel {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<Item> queue;
        bool closing = false;
        MessageLru lru;
        std::thread worker;
        explicit Channel(std::size_t cap) : lru(cap) {}
    };

    BotConfig cfg;
    Scorer& scorer;
    VerdictSink sink;
    std::unique_ptr<ActionDispatcher> dispatcher;

    std::mutex mu;  // channels map, stats, closed
    std::map<std::string, std::unique_ptr<Channel>> channels;
    BotStats stats;
    bool closed = false;
    std::mutex sink_mu;

    Impl(const BotConfig& c, Scorer& s, VerdictSink k) : cfg(c), scorer(s), sink(std::move(k)) {}

    Channel& channel(const std::string& id) {
        auto& slot = channels[id];
        if (!slot) {
            slot = std::make_unique<Channel>(cfg.lru_capacity);
            Channel* ch = slot.get();
            slot->worker = std::thread([this, ch] { work(*ch); });
        }
        return *slot;
    }

    void enqueue(Item item) {
        std::lock_guard lock(mu);
        if (closed) fail(ErrorKind::runtime, "bot is closed");
        if (item.score) ++stats.events;
        Channel& ch = channel(item.m.channel_id);
        {
            std::lock_guard cl(ch.mu);
            ch.queue.push_back(std::move(item));
        }
        ch.cv.notify_one();
    }

    void work(Channel& ch) {
        for (;;) {
            Item item;
            {
                std::unique_lock lock(ch.mu);
                ch.cv.wait(lock, [&] { return ch.closing || !ch.queue.empty(); });
                if (ch.queue.empty()) return;
                item = std::move(ch.queue.front());
                ch.queue.pop_front();
            }
            if (!item.score) {
                ch.lru.put(item.m);
                continue;
            }
            handle(ch, item.m);
        }
    }

    void handle(Channel& ch, const Message& m) {
        std::optional<Message> trigger;
        if (m.reply_to) trigger = ch.lru.get(*m.reply_to);
        ch.lru.put(m);
        std::optional<BotVerdict> v;
        try {
            v = scorer.verdict_for(m, trigger ? &*trigger : nullptr);
        } catch (const std::exception& e) {
            spdlog::error("scoring {} failed: {}", m.key().str(), e.what());
        }
        if (!v) {
            std::lock_guard lock(mu);
            ++stats.skipped;
            return;
        }
        const bool prop = v->verdict.label == Label::propaganda;
        if (sink) {
            std::lock_guard lock(sink_mu);
            sink(*v);
        }
        std::size_t acted = 0;
        if (prop && dispatcher && cfg.action != BotAction::log && cfg.allowlist.contains(m.channel_id)) {
            dispatcher->remove(m.channel_id, m.message_id);
            ++acted;
            if (cfg.action == BotAction::remove_ban && m.account_id) {
                dispatcher->ban(m.channel_id, *m.account_id);
                ++acted;
            }
        }
        std::lock_guard lock(mu);
        ++stats.verdicts;
        stats.propaganda += prop;
        stats.actions += acted;
    }

    void close() {
        {
            std::lock_guard lock(mu);
            if (closed) return;
            closed = true;
        }
        for (auto& [id, ch] : channels) {
            {
                std::lock_guard lock(ch->mu);
                ch->closing = true;
            }
            ch->cv.notify_all();
        }
        for (auto& [id, ch] : channels) ch->worker.join();
        if (dispatcher) dispatcher->flush();
    }
};

Bot::Bot(const BotConfig& cfg, Scorer& scorer, ModerationApi* api, VerdictSink sink,
         std::function<void(const ActionRecord&)> on_action)
    : impl_(std::make_unique<Impl>(cfg, scorer, std::move(sink))) {
    cfg.validate();
    if (cfg.action != BotAction::log) {
        if (!api) fail(ErrorKind::usage, "acting mode needs an API client");
        if (cfg.allowlist.empty()) spdlog::warn("channel allowlist is empty; no channel will be acted on");
        impl_->dispatcher =
            std::make_unique<ActionDispatcher>(*api, cfg.max_in_flight, cfg.attempts, cfg.backoff, std::move(on_action));
    }
}

Bot::~Bot() {
    try {
        close();
    } catch (const std::exception& e) {
        spdlog::error("closing bot: {}", e.what());
    }
}

void Bot::submit_line(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;
    std::string reason;
    auto m = parse_event_line(line, reason);
    if (!m) {
        spdlog::warn("malformed event: {}", reason);
        std::lock_guard lock(impl_->mu);
        ++impl_->stats.malformed;
        return;
    }
    submit(std::move(*m));
}

void Bot::submit(Message m) { impl_->enqueue({std::move(m), true}); }

void Bot::remember(Message m) { impl_->enqueue({std::move(m), false}); }

void Bot::close() { impl_->close(); }

BotStats Bot::stats() const {
    std::lock_guard lock(impl_->mu);
    return impl_->stats;
}

std::vector<ActionRecord> Bot::actions() const {
    return impl_->dispatcher ? impl_->dispatcher->records() : std::vector<ActionRecord>{};
}

void serve_stream(Bot& bot, std::istream& in) {
    std::string line;
    while (std::getline(in, line)) bot.submit_line(line);
    bot.close();
}

// ------------------------------------------------------------- TCP input

namespace asio = boost::asio;
using asio::ip::tcp;

struct TcpInput::Impl {
    Bot& bot;
    asio::io_context io;
    tcp::acceptor acceptor;
    std::thread thread;
    std::atomic<std::size_t> connections{0};
    std::mutex mu;
    std::vector<std::weak_ptr<tcp::socket>> sockets;
    bool stopped = false;

    Impl(Bot& b, std::uint16_t port, const std::string& host)
        : bot(b), acceptor(io, tcp::endpoint(asio::ip::make_address(host), port)) {}

    struct Session : std::enable_shared_from_this<Session> {
        Impl& owner;
        std::shared_ptr<tcp::socket> socket;
        asio::streambuf buf;
        Session(Impl& o, std::shared_ptr<tcp::socket> s) : owner(o), socket(std::move(s)) {}

        void read() {
            auto self = shared_from_this();
            asio::async_read_until(*socket, buf, '\n', [self](boost::system::error_code ec, std::size_t n) {
                if (n > 0) {
                    std::string line(asio::buffers_begin(self->buf.data()),
                                     asio::buffers_begin(self->buf.data()) + static_cast<std::ptrdiff_t>(n));
                    self->buf.consume(n);
                    self->owner.bot.submit_line(line);
                }
                if (!ec) return self->read();
                // a final line without a newline
                if (self->buf.size() > 0) {
                    std::string rest(asio::buffers_begin(self->buf.data()), asio::buffers_end(self->buf.data()));
                    self->owner.bot.submit_line(rest);
                }
            });
        }
    };

    void accept() {
        auto sock = std::make_shared<tcp::socket>(io);
        acceptor.async_accept(*sock, [this, sock](boost::system::error_code ec) {
            if (ec) return;  // acceptor closed
            ++connections;
            {
                std::lock_guard lock(mu);
                sockets.push_back(sock);
            }
            std::make_shared<Session>(*this, sock)->read();
            accept();
        });
    }
};

TcpInput::TcpInput(Bot& bot, std::uint16_t port, const std::string& host) {
    try {
        impl_ = std::make_unique<Impl>(bot, port, host);
    } catch (const boost::system::system_error& e) {
        fail(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port) + ": " + e.what());
    }
    impl_->accept();
    impl_->thread = std::thread([this] { impl_->io.run(); });
}

TcpInput::~TcpInput() { stop(); }

std::uint16_t TcpInput::port() const { return impl_->acceptor.local_endpoint().port(); }

std::size_t TcpInput::connections() const { return impl_->connections; }

void TcpInput::stop() {
    {
        std::lock_guard lock(impl_->mu);
        if (impl_->stopped) return;
        impl_->stopped = true;
    }
    asio::post(impl_->io, [this] { impl_->acceptor.close(); });
    // give open connections a grace period to finish, then cut them off
    auto deadline = Clock::now() + std::chrono::seconds(2);
    for (;;) {
        bool open = false;
        {
            std::lock_guard lock(impl_->mu);
            for (auto& w : impl_->sockets)
                if (auto s = w.lock()) open = true;
        }
        if (!open || Clock::now() > deadline) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    asio::post(impl_->io, [this] {
        std::lock_guard lock(impl_->mu);
        for (auto& w : impl_->sockets)
            if (auto s = w.lock()) {
                boost::system::error_code ec;
                s->close(ec);
            }
    });
    impl_->thread.join();
}

// ------------------------------------------------------------- updates

namespace {

Message message_from_json(const json& j) {
    Message m;
    m.channel_id = std::to_string(j.at("chat").at("id").get<long long>());
    m.message_id = j.at("message_id").get<std::int64_t>();
    m.timestamp = from_unix(j.at("date").get<std::int64_t>());
    m.text = j.value("text", j.value("caption", std::string{}));
    m.source = Source::realtime;
    if (j.contains("from") && j["from"].is_object()) {
        const auto& f = j["from"];
        m.account_id = std::to_string(f.at("id").get<long long>());
        if (f.contains("first_name")) m.first_name = f["first_name"].get<std::string>();
        if (f.contains("last_name")) m.last_name = f["last_name"].get<std::string>();
        if (f.contains("username")) m.username = f["username"].get<std::string>();
    }
    if (j.contains("reply_to_message") && j["reply_to_message"].is_object())
        m.reply_to = j["reply_to_message"].at("message_id").get<std::int64_t>();
    return m;
}

}  // namespace

std::optional<std::pair<Message, std::optional<Message>>> message_from_update(std::string_view update_json) {
    try {
        auto u = json::parse(update_json);
        const json* body = nullptr;
        for (const char* k : {"message", "channel_post"})
            if (u.contains(k) && u[k].is_object()) body = &u[k];
        if (!body) return std::nullopt;
        auto m = message_from_json(*body);
        std::optional<Message> target;
        if (body->contains("reply_to_message") && (*body)["reply_to_message"].is_object()) {
            auto t = (*body)["reply_to_message"];
            if (!t.contains("chat")) t["chat"] = (*body)["chat"];
            target = message_from_json(t);
        }
        return std::make_pair(std::move(m), std::move(target));
    } catch (const std::exception& e) {
        spdlog::warn("unusable update: {}", e.what());
        return std::nullopt;
    }
}

void poll_updates(Bot& bot, TelegramApi& api, const std::atomic<bool>& stop, int timeout_seconds, int max_polls) {
    std::int64_t offset = 0;
    int backoff_ms = 500;
    for (int polls = 0; !stop && (max_polls <= 0 || polls < max_polls); ++polls) {
        std::vector<std::string> updates;
        try {
            updates = api.get_updates(offset, timeout_seconds);
            backoff_ms = 500;
        } catch (const Error& e) {
            spdlog::warn("{}; retrying in {} ms", e.what(), backoff_ms);
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms = std::min(backoff_ms * 2, 30000);
            continue;
        }
        for (const auto& raw : updates) {
            try {
                auto id = json::parse(raw).at("update_id").get<std::int64_t>();
                offset = std::max(offset, id + 1);
            } catch (const std::exception&) {
                continue;
            }
            auto parsed = message_from_update(raw);
            if (!parsed) continue;
            if (parsed->second) bot.remember(std::move(*parsed->second));
            bot.submit(std::move(parsed->first));
        }
    }
}

// ------------------------------------------------------------- stub server

struct StubTelegramServer::Impl {
    std::string token;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    mutable std::mutex mu;
    mutable std::condition_variable cv;
    std::vector<json> updates;
    std::int64_t next_update = 1;
    std::vector<StubCall> calls;
    int failures = 0;
    bool stopping = false;

    void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static std::string id_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

    void moderation(const httplib::Request& req, httplib::Response& res, const std::string& method,
                    const char* target_field) {
        if (req.matches[1].str() != token) return reply(res, 401, {{"ok", false}, {"description", "Unauthorized"}});
        json body;
        try {
            body = json::parse(req.body);
        } catch (const std::exception&) {
            return reply(res, 400, {{"ok", false}, {"description", "Bad Request: invalid JSON"}});
        }
        if (!body.contains("chat_id") || !body.contains(target_field))
            return reply(res, 400, {{"ok", false}, {"description", "Bad Request: missing parameter"}});
        {
            std::lock_guard lock(mu);
            if (failures > 0) {
                --failures;
                return reply(res, 500, {{"ok", false}, {"description", "Internal Server Error"}});
            }
            calls.push_back({method, id_string(body["chat_id"]), id_string(body[target_field])});
        }
        cv.notify_all();
        reply(res, 200, {{"ok", true}, {"result", true}});
    }

    void get_updates(const httplib::Request& req, httplib::Response& res) {
        if (req.matches[1].str() != token) return reply(res, 401, {{"ok", false}, {"description", "Unauthorized"}});
        std::int64_t offset = req.has_param("offset") ? std::stoll(req.get_param_value("offset")) : 0;
        int timeout = req.has_param("timeout") ? std::stoi(req.get_param_value("timeout")) : 0;
        auto ready = [&] {
            if (stopping) return true;
            for (const auto& u : updates)
                if (u["update_id"].get<std::int64_t>() >= offset) return true;
            return false;
        };
        std::unique_lock lock(mu);
        cv.wait_for(lock, std::chrono::seconds(std::clamp(timeout, 0, 60)), ready);
        json result = json::array();
        for (const auto& u : updates)
            if (u["update_id"].get<std::int64_t>() >= offset) result.push_back(u);
        lock.unlock();
        reply(res, 200, {{"ok", true}, {"result", result}});
    }
};

StubTelegramServer::StubTelegramServer(std::string token, const std::string& host, int port)
    : impl_(std::make_unique<Impl>()) {
    impl_->token = std::move(token);
    auto& s = impl_->server;
    auto* im = impl_.get();
    s.Get(R"(/bot([^/]+)/getUpdates)", [im](const httplib::Request& q, httplib::Response& r) { im->get_updates(q, r); });
    s.Post(R"(/bot([^/]+)/deleteMessage)",
           [im](const httplib::Request& q, httplib::Response& r) { im->moderation(q, r, "deleteMessage", "message_id"); });
    s.Post(R"(/bot([^/]+)/banChatMember)",
           [im](const httplib::Request& q, httplib::Response& r) { im->moderation(q, r, "banChatMember", "user_id"); });
    impl_->port = port == 0 ? s.bind_to_any_port(host) : (s.bind_to_port(host, port) ? port : -1);
    if (impl_->port <= 0) fail(ErrorKind::io, "stub server cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([im] { im->server.listen_after_bind(); });
    s.wait_until_ready();
}

StubTelegramServer::~StubTelegramServer() { stop(); }

int StubTelegramServer::port() const { return impl_->port; }

std::string StubTelegramServer::base_url() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

void StubTelegramServer::push_update(const std::string& update_json) {
    auto u = json::parse(update_json);
    {
        std::lock_guard lock(impl_->mu);
        u["update_id"] = impl_->next_update++;
        impl_->updates.push_back(std::move(u));
    }
    impl_->cv.notify_all();
}

void StubTelegramServer::fail_next(int n) {
    std::lock_guard lock(impl_->mu);
    impl_->failures = n;
}

std::vector<StubCall> StubTelegramServer::calls() const {
    std::lock_guard lock(impl_->mu);
    return impl_->calls;
}

bool StubTelegramServer::wait_for_calls(std::size_t n, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(impl_->mu);
    return impl_->cv.wait_for(lock, timeout, [&] { return impl_->calls.size() >= n; });
}

void StubTelegramServer::stop() {
    {
        std::lock_guard lock(impl_->mu);
        if (impl_->stopping) return;
        impl_->stopping = true;
    }
    impl_->cv.notify_all();
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

// ------------------------------------------------------------- latency

LatencyStats latency_bench(const MLPModel& pair_model, const std::vector<TextPair>& pairs, Embedder& embedder) {
    if (pair_model.kind != InputKind::pair) fail(ErrorKind::usage, "latency bench needs a pair model");
    if (embedder.dim() != pair_model.embedding_dim) fail(ErrorKind::usage, "embedder dim does not match the model");
    if (pairs.empty()) fail(ErrorKind::usage, "latency bench needs at least one pair");
    std::vector<double> t;
    t.reserve(pairs.size());
    double sink = 0.0;
    for (const auto& p : pairs) {
        const auto t0 = Clock::now();
        std::vector<std::string> texts{p.reply};
        if (p.trigger) texts.push_back(*p.trigger);
        auto v = embedder.embed(texts);
        std::optional<std::span<const float>> trig;
        if (p.trigger) trig = std::span<const float>(v[1]);
        auto x = build_pair_vector(trig, v[0]);
        sink += pair_model.predict(x);
        t.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
    LatencyStats s;
    s.pairs = t.size();
    for (double x : t) s.mean += x;
    s.mean /= static_cast<double>(t.size());
    if (t.size() > 1) {
        double ss = 0;
        for (double x : t) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(t.size() - 1));
    }
    if (!std::isfinite(sink)) spdlog::warn("non-finite score during latency bench");
    return s;
}

}  // namespace propwatch
