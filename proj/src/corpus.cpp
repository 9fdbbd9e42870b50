#include "propwatch/corpus.hpp"

#include <sodium.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <future>
#include <nlohmann/json.hpp>

#include "propwatch/data.hpp"
#include "propwatch/error.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

using nlohmann::json;

std::string_view to_string(Source s) { return s == Source::realtime ? "realtime" : "historical"; }

std::string MessageKey::str() const { return channel_id + ":" + std::to_string(message_id); }

std::size_t MessageKeyHash::operator()(const MessageKey& k) const noexcept {
    std::size_t h = std::hash<std::string>{}(k.channel_id);
    return h ^ (std::hash<std::int64_t>{}(k.message_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

namespace {

std::optional<std::string> opt_string(const json& rec, const char* field) {
    auto it = rec.find(field);
    if (it == rec.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    throw std::invalid_argument(std::string("field '") + field + "' has wrong type");
}

std::int64_t require_int(const json& rec, const char* field) {
    auto it = rec.find(field);
    if (it == rec.end() || it->is_null()) throw std::invalid_argument(std::string("missing '") + field + "'");
    if (it->is_number_integer()) return it->get<std::int64_t>();
    if (it->is_string()) {
        const auto& s = it->get_ref<const std::string&>();
        std::size_t used = 0;
        std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(std::string("field '") + field + "' is not an integer");
        return v;
    }
    throw std::invalid_argument(std::string("field '") + field + "' is not an integer");
}

// Rich text arrays mix plain strings and entity objects carrying a "text" member.
std::string flatten_text(const json& t) {
    if (t.is_null()) return {};
    if (t.is_string()) return t.get<std::string>();
    if (!t.is_array()) throw std::invalid_argument("field 'text' must be a string or an array");
    std::string out;
    for (const auto& part : t) {
        if (part.is_string()) {
            out += part.get<std::string>();
        } else if (part.is_object()) {
            auto it = part.find("text");
            if (it != part.end() && it->is_string()) out += it->get<std::string>();
        } else {
            throw std::invalid_argument("unexpected rich-text element");
        }
    }
    return out;
}

Instant read_timestamp(const json& rec) {
    if (auto it = rec.find("date_unixtime"); it != rec.end() && !it->is_null()) {
        if (it->is_number_integer()) return from_unix(it->get<std::int64_t>());
        if (it->is_string()) return from_unix(std::stoll(it->get<std::string>()));
    }
    auto it = rec.find("date");
    if (it == rec.end() || it->is_null()) throw std::invalid_argument("missing 'date'");
    if (it->is_number_integer()) return from_unix(it->get<std::int64_t>());
    if (!it->is_string()) throw std::invalid_argument("field 'date' must be a string");
    try {
        return parse_iso8601(it->get<std::string>());
    } catch (const Error& e) {
        throw std::invalid_argument(e.what());
    }
}

Message message_from_record(const json& rec, const std::string& channel_id, Source source) {
    if (!rec.is_object()) throw std::invalid_argument("record is not an object");
    Message m;
    m.channel_id = channel_id;
    m.message_id = require_int(rec, "id");
    m.timestamp = read_timestamp(rec);
    m.account_id = opt_string(rec, "from_id");
    if (auto it = rec.find("text"); it != rec.end()) m.text = flatten_text(*it);
    if (auto it = rec.find("reply_to_message_id"); it != rec.end() && !it->is_null())
        m.reply_to = require_int(rec, "reply_to_message_id");
    m.first_name = opt_string(rec, "first_name");
    if (!m.first_name) m.first_name = opt_string(rec, "from");
    m.last_name = opt_string(rec, "last_name");
    m.username = opt_string(rec, "username");
    m.source = source;
    return m;
}

void count_order_violations(ParseResult& r) {
    std::map<std::string, Instant> last;
    for (const auto& m : r.messages) {
        auto [it, fresh] = last.try_emplace(m.channel_id, m.timestamp);
        if (!fresh) {
            if (m.timestamp < it->second) ++r.order_violations;
            it->second = m.timestamp;
        }
    }
    if (r.order_violations) spdlog::warn("{} timestamp order violations in input", r.order_violations);
}

}  // namespace

ParseResult parse_export_text(std::string_view json_text, const std::string& channel_hint) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorKind::parse, std::string("export is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("messages") || !doc["messages"].is_array())
        fail(ErrorKind::parse, "export lacks a top-level 'messages' array");

    std::string channel = channel_hint;
    if (auto it = doc.find("id"); it != doc.end() && (it->is_string() || it->is_number_integer()))
        channel = it->is_string() ? it->get<std::string>() : std::to_string(it->get<std::int64_t>());
    else if (auto nm = doc.find("name"); nm != doc.end() && nm->is_string())
        channel = nm->get<std::string>();

    ParseResult r;
    const auto& recs = doc["messages"];
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& rec = recs[i];
        if (rec.is_object()) {
            auto type = rec.find("type");
            if (type != rec.end() && type->is_string() && type->get<std::string>() != "message") {
                ++r.skipped_service;
                continue;
            }
        }
        try {
            r.messages.push_back(message_from_record(rec, channel, Source::historical));
        } catch (const std::exception& e) {
            r.malformed.push_back({i, e.what()});
        }
    }
    for (const auto& issue : r.malformed) spdlog::warn("export record {}: {}", issue.index, issue.reason);
    count_order_violations(r);
    return r;
}

ParseResult parse_export(const std::filesystem::path& path) {
    return parse_export_text(read_text_file(path), path.stem().string());
}

std::optional<Message> parse_event_line(std::string_view line, std::string& reason) {
    if (!text::valid_utf8(line)) {
        reason = "invalid UTF-8";
        return std::nullopt;
    }
    try {
        json rec = json::parse(line);
        if (!rec.is_object()) throw std::invalid_argument("event is not an object");
        // Canonical dump lines use the Message field names.
        if (rec.contains("message_id")) {
            Message m;
            m.channel_id = rec.at("channel_id").get<std::string>();
            m.message_id = require_int(rec, "message_id");
            m.timestamp = parse_iso8601(rec.at("timestamp").get<std::string>());
            m.account_id = opt_string(rec, "account_id");
            m.text = rec.value("text", std::string{});
            if (rec.contains("reply_to") && !rec["reply_to"].is_null()) m.reply_to = require_int(rec, "reply_to");
            m.first_name = opt_string(rec, "first_name");
            m.last_name = opt_string(rec, "last_name");
            m.username = opt_string(rec, "username");
            m.deleted = rec.value("deleted", false);
            m.source = rec.value("source", std::string("realtime")) == "historical" ? Source::historical
                                                                                     : Source::realtime;
            return m;
        }
        auto ch = opt_string(rec, "channel_id");
        if (!ch) throw std::invalid_argument("missing 'channel_id'");
        return message_from_record(rec, *ch, Source::realtime);
    } catch (const std::exception& e) {
        reason = e.what();
        return std::nullopt;
    }
}

ParseResult parse_stream_text(std::string_view jsonl) {
    ParseResult r;
    std::size_t line_no = 0, pos = 0;
    while (pos < jsonl.size()) {
        std::size_t nl = jsonl.find('\n', pos);
        std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        std::string reason;
        if (auto m = parse_event_line(line, reason)) {
            r.messages.push_back(std::move(*m));
        } else {
            spdlog::warn("stream line {}: {}", line_no, reason);
            r.malformed.push_back({line_no, reason});
        }
    }
    count_order_violations(r);
    return r;
}

ParseResult parse_stream(const std::filesystem::path& path) { return parse_stream_text(read_text_file(path)); }

std::vector<ParseResult> parse_files(const std::vector<std::filesystem::path>& exports,
                                     const std::vector<std::filesystem::path>& streams) {
    std::vector<std::future<ParseResult>> jobs;
    for (const auto& p : exports) jobs.push_back(std::async(std::launch::async, [p] { return parse_export(p); }));
    for (const auto& p : streams) jobs.push_back(std::async(std::launch::async, [p] { return parse_stream(p); }));
    std::vector<ParseResult> out;
    out.reserve(jobs.size());
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

// ------------------------------------------------------------------ Corpus

namespace {

std::uint8_t source_bit(Source s) { return s == Source::realtime ? 2 : 1; }

// Total order used to pick a winner among conflicting duplicates, independent of
// input order: realtime first, then the canonical serialization.
bool preferred(const Message& a, const Message& b) {
    if (a.source != b.source) return a.source == Source::realtime;
    return canonical_line(a) > canonical_line(b);
}

void fill_missing(Message& into, const Message& from) {
    if (!into.account_id) into.account_id = from.account_id;
    if (!into.first_name) into.first_name = from.first_name;
    if (!into.last_name) into.last_name = from.last_name;
    if (!into.username) into.username = from.username;
    if (!into.reply_to) into.reply_to = from.reply_to;
    into.deleted = into.deleted || from.deleted;
}

}  // namespace

Corpus Corpus::merge(const std::vector<std::vector<Message>>& batches, MergeLog* log) {
    std::unordered_map<MessageKey, std::size_t, MessageKeyHash> index;
    std::vector<Message> merged;
    std::vector<std::uint8_t> seen;
    std::vector<std::vector<const Message*>> copies;
    std::size_t input = 0;
    for (const auto& batch : batches) {
        for (const auto& m : batch) {
            ++input;
            auto [it, fresh] = index.try_emplace(m.key(), merged.size());
            if (fresh) {
                merged.push_back(m);
                seen.push_back(source_bit(m.source));
                copies.push_back({&m});
            } else {
                seen[it->second] |= source_bit(m.source);
                copies[it->second].push_back(&m);
            }
        }
    }

    MergeLog local;
    local.input_records = input;
    for (std::size_t i = 0; i < merged.size(); ++i) {
        auto& group = copies[i];
        if (group.size() == 1) continue;
        local.duplicates += group.size() - 1;
        const Message* best = group.front();
        for (const Message* c : group)
            if (preferred(*c, *best)) best = c;
        Message winner = *best;
        std::set<std::string> dropped;
        for (const Message* c : group) {
            if (c == best) continue;
            fill_missing(winner, *c);
            if (c->text != winner.text) dropped.insert(c->text);
        }
        for (const auto& d : dropped) {
            spdlog::info("merge conflict on {}: keeping {} text", winner.key().str(), to_string(winner.source));
            local.conflicts.push_back({winner.key(), winner.text, d});
        }
        merged[i] = std::move(winner);
    }
    std::sort(local.conflicts.begin(), local.conflicts.end(),
              [](const MergeConflict& a, const MergeConflict& b) {
                  return std::tie(a.key, a.dropped_text) < std::tie(b.key, b.dropped_text);
              });

    std::vector<std::size_t> order(merged.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = merged[a];
        const auto& y = merged[b];
        return std::tie(x.channel_id, x.timestamp, x.message_id) < std::tie(y.channel_id, y.timestamp, y.message_id);
    });

    Corpus c;
    c.messages_.reserve(merged.size());
    c.seen_.reserve(merged.size());
    for (std::size_t i : order) {
        c.messages_.push_back(std::move(merged[i]));
        c.seen_.push_back(seen[i]);
    }
    c.build_indexes();
    if (log) *log = std::move(local);
    return c;
}

void Corpus::build_indexes() {
    by_key_.clear();
    by_channel_.clear();
    replies_.assign(messages_.size(), {});
    trigger_.assign(messages_.size(), std::nullopt);
    dangling_.assign(messages_.size(), false);
    for (std::size_t i = 0; i < messages_.size(); ++i) {
        by_key_.emplace(messages_[i].key(), i);
        by_channel_[messages_[i].channel_id].push_back(i);
    }
    for (std::size_t i = 0; i < messages_.size(); ++i) {
        const auto& m = messages_[i];
        if (!m.reply_to) continue;
        auto it = by_key_.find({m.channel_id, *m.reply_to});
        if (it == by_key_.end() || it->second == i || messages_[it->second].timestamp > m.timestamp) {
            dangling_[i] = true;
            continue;
        }
        trigger_[i] = it->second;
        replies_[it->second].push_back(i);
    }
}

std::optional<std::size_t> Corpus::find(const MessageKey& key) const {
    auto it = by_key_.find(key);
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> Corpus::channels() const {
    std::vector<std::string> out;
    for (const auto& [ch, _] : by_channel_) out.push_back(ch);
    return out;
}

std::span<const std::size_t> Corpus::channel_messages(const std::string& channel_id) const {
    auto it = by_channel_.find(channel_id);
    if (it == by_channel_.end()) return {};
    return it->second;
}

bool Corpus::seen_in(std::size_t idx, Source s) const { return (seen_.at(idx) & source_bit(s)) != 0; }

Corpus Corpus::with_deleted(const std::vector<MessageKey>& keys) const {
    Corpus c = *this;
    for (const auto& k : keys)
        if (auto idx = c.find(k)) c.messages_[*idx].deleted = true;
    return c;
}

DeletionReport diff_deleted(const Corpus& corpus) {
    DeletionReport rep;
    bool any_window = false;
    for (const auto& ch : corpus.channels()) {
        std::optional<Instant> h_first, h_last, r_first, r_last;
        auto idxs = corpus.channel_messages(ch);
        for (std::size_t i : idxs) {
            Instant t = corpus.at(i).timestamp;
            if (corpus.seen_in(i, Source::historical)) {
                if (!h_first) h_first = t;
                h_last = t;
            }
            if (corpus.seen_in(i, Source::realtime)) {
                if (!r_first) r_first = t;
                r_last = t;
            }
        }
        if (!h_first || !r_first) continue;
        OverlapWindow w{std::max(*h_first, *r_first), std::min(*h_last, *r_last)};
        if (w.begin > w.end) continue;
        any_window = true;
        rep.windows[ch] = w;
        std::size_t n = 0;
        for (std::size_t i : idxs) {
            const auto& m = corpus.at(i);
            if (m.timestamp < w.begin || m.timestamp > w.end) continue;
            if (corpus.seen_in(i, Source::realtime) && !corpus.seen_in(i, Source::historical)) {
                rep.deleted.push_back(m.key());
                ++n;
            }
        }
        rep.deleted_per_channel[ch] = n;
    }
    if (!any_window) fail(ErrorKind::data, "no channel has overlapping historical and realtime coverage");
    std::sort(rep.deleted.begin(), rep.deleted.end());
    return rep;
}

std::vector<Account> build_accounts(const Corpus& corpus) {
    std::map<std::string, Account> acc;
    auto msgs = corpus.messages();
    // Global chronological order so "latest observed" names are well defined across channels.
    std::vector<std::size_t> order(msgs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return msgs[a].timestamp < msgs[b].timestamp; });
    for (std::size_t i : order) {
        const auto& m = msgs[i];
        if (!m.account_id) continue;
        auto [it, fresh] = acc.try_emplace(*m.account_id);
        Account& a = it->second;
        if (fresh) {
            a.account_id = *m.account_id;
            a.first_seen = m.timestamp;
        }
        a.last_seen = m.timestamp;
        a.first_name = m.first_name;
        a.last_name = m.last_name;
        a.username = m.username;
        a.messages.push_back(i);
        a.channels_active.insert(m.channel_id);
    }
    std::vector<Account> out;
    out.reserve(acc.size());
    for (auto& [_, a] : acc) out.push_back(std::move(a));
    return out;
}

// ------------------------------------------------------------- canonical IO

namespace {
json opt_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

std::string canonical_line(const Message& m) {
    // Field order is fixed for byte-stable dumps.
    std::string out = "{";
    auto field = [&](const char* name, const json& value, bool last = false) {
        out += json(name).dump();
        out += ':';
        out += value.dump();
        if (!last) out += ',';
    };
    field("channel_id", m.channel_id);
    field("message_id", m.message_id);
    field("account_id", opt_json(m.account_id));
    field("timestamp", format_iso8601(m.timestamp));
    field("text", m.text);
    field("reply_to", m.reply_to ? json(*m.reply_to) : json(nullptr));
    field("first_name", opt_json(m.first_name));
    field("last_name", opt_json(m.last_name));
    field("username", opt_json(m.username));
    field("deleted", m.deleted);
    field("source", std::string(to_string(m.source)), true);
    out += "}";
    return out;
}

void write_canonical(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    for (const auto& m : corpus.messages()) out << canonical_line(m) << '\n';
    if (!out) fail(ErrorKind::io, "write failed on " + path.string());
}

std::vector<Message> read_canonical(const std::filesystem::path& path) {
    auto r = parse_stream(path);
    if (!r.malformed.empty())
        fail(ErrorKind::parse, path.string() + ": line " + std::to_string(r.malformed.front().index) + ": " +
                                   r.malformed.front().reason);
    return std::move(r.messages);
}

std::string corpus_hash(const Corpus& corpus) {
    if (sodium_init() < 0) fail(ErrorKind::runtime, "libsodium init failed");
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    for (const auto& m : corpus.messages()) {
        std::string line = canonical_line(m) + "\n";
        crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(line.data()), line.size());
    }
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256_final(&st, digest);
    char hex[crypto_hash_sha256_BYTES * 2 + 1];
    sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
    return hex;
}

}  // namespace propwatch
