#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "propwatch/timeutil.hpp"

namespace propwatch {

enum class Source { historical, realtime };

std::string_view to_string(Source s);

struct MessageKey {
    std::string channel_id;
    std::int64_t message_id = 0;

    auto operator<=>(const MessageKey&) const = default;
    bool operator==(const MessageKey&) const = default;

    /// `channel_id:message_id`, the id used by embedding files.
    std::string str() const;
};

struct MessageKeyHash {
    std::size_t operator()(const MessageKey& k) const noexcept;
};

struct Message {
    std::string channel_id;
    std::int64_t message_id = 0;
    std::optional<std::string> account_id;  ///< absent for channel-owner posts
    Instant timestamp{};
    std::string text;
    std::optional<std::int64_t> reply_to;
    std::optional<std::string> first_name;
    std::optional<std::string> last_name;
    std::optional<std::string> username;
    bool deleted = false;
    Source source = Source::historical;

    MessageKey key() const { return {channel_id, message_id}; }
};

/// One record or line that could not be turned into a Message.
struct ParseIssue {
    std::size_t index = 0;  ///< record index (exports) or 1-based line number (streams)
    std::string reason;
};

struct ParseResult {
    std::vector<Message> messages;
    std::vector<ParseIssue> malformed;
    std::size_t skipped_service = 0;     ///< non-message records (joins, pins, ...)
    std::size_t order_violations = 0;    ///< timestamp decreased within a channel
};

/// Historical "export chat history" JSON. The channel id is taken from the top-level
/// `id` (or `name`) field, falling back to `channel_hint`.
ParseResult parse_export(const std::filesystem::path& path);
ParseResult parse_export_text(std::string_view json_text, const std::string& channel_hint);

/// Real-time JSONL stream, one event per line, each carrying `channel_id`.
ParseResult parse_stream(const std::filesystem::path& path);
ParseResult parse_stream_text(std::string_view jsonl);

/// Parses one stream line. Returns nullopt with `reason` filled on failure.
std::optional<Message> parse_event_line(std::string_view line, std::string& reason);

/// Parses many files concurrently; results keep the argument order.
std::vector<ParseResult> parse_files(const std::vector<std::filesystem::path>& exports,
                                     const std::vector<std::filesystem::path>& streams);

struct MergeConflict {
    MessageKey key;
    std::string kept_text;
    std::string dropped_text;
};

struct MergeLog {
    std::size_t input_records = 0;
    std::size_t duplicates = 0;
    std::vector<MergeConflict> conflicts;
};

/// Immutable, indexed message collection. Messages are stored sorted by
/// (channel_id, timestamp, message_id).
class Corpus {
public:
    Corpus() = default;

    /// Deduplicates by (channel_id, message_id). On conflicting duplicates the
    /// realtime copy wins; conflicts are logged.
    static Corpus merge(const std::vector<std::vector<Message>>& batches, MergeLog* log = nullptr);

    std::size_t size() const { return messages_.size(); }
    bool empty() const { return messages_.empty(); }
    std::span<const Message> messages() const { return messages_; }
    const Message& at(std::size_t idx) const { return messages_.at(idx); }

    std::optional<std::size_t> find(const MessageKey& key) const;

    /// Channels in sorted order.
    std::vector<std::string> channels() const;
    /// Message indices of one channel in chronological order.
    std::span<const std::size_t> channel_messages(const std::string& channel_id) const;

    /// Indices of messages whose reply_to targets message `idx`.
    std::span<const std::size_t> replies_to(std::size_t idx) const { return replies_[idx]; }
    /// Resolved reply target, or nullopt for non-replies and dangling replies.
    std::optional<std::size_t> trigger_of(std::size_t idx) const { return trigger_[idx]; }
    /// reply_to is set but points to nothing earlier-or-equal in the channel.
    bool is_dangling(std::size_t idx) const { return dangling_[idx]; }

    bool seen_in(std::size_t idx, Source s) const;

    /// Copy with the given messages flagged deleted.
    Corpus with_deleted(const std::vector<MessageKey>& keys) const;

private:
    void build_indexes();

    std::vector<Message> messages_;
    std::vector<std::uint8_t> seen_;  // bit 0 historical, bit 1 realtime
    std::unordered_map<MessageKey, std::size_t, MessageKeyHash> by_key_;
    std::map<std::string, std::vector<std::size_t>> by_channel_;
    std::vector<std::vector<std::size_t>> replies_;
    std::vector<std::optional<std::size_t>> trigger_;
    std::vector<bool> dangling_;
};

struct OverlapWindow {
    Instant begin{};
    Instant end{};
};

struct DeletionReport {
    std::map<std::string, std::size_t> deleted_per_channel;
    std::map<std::string, OverlapWindow> windows;
    std::vector<MessageKey> deleted;  ///< sorted
    std::size_t total() const { return deleted.size(); }
};

/// Marks messages seen in the realtime feed inside the per-channel overlap window
/// but missing from the historical feed. Channels lacking either feed are skipped;
/// if no channel has a non-empty overlap the ratios are undefined and Error(data)
/// is thrown.
DeletionReport diff_deleted(const Corpus& corpus);

struct Account {
    std::string account_id;
    std::optional<std::string> first_name;
    std::optional<std::string> last_name;
    std::optional<std::string> username;
    std::vector<std::size_t> messages;  ///< corpus indices, chronological
    std::set<std::string> channels_active;
    Instant first_seen{};
    Instant last_seen{};
};

/// Accounts sorted by id. Names are taken from the latest message.
std::vector<Account> build_accounts(const Corpus& corpus);

/// Canonical JSONL dump (one Message per line, ISO-8601 `Z` timestamps).
void write_canonical(const Corpus& corpus, const std::filesystem::path& path);
std::string canonical_line(const Message& m);
std::vector<Message> read_canonical(const std::filesystem::path& path);

/// Hex SHA-256 of the canonical dump.
std::string corpus_hash(const Corpus& corpus);

}  // namespace propwatch
