#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "propwatch/corpus.hpp"
#include "propwatch/embeddings.hpp"

namespace propwatch {

enum class Metric { euclidean, cosine };

Metric parse_metric(std::string_view s);

inline constexpr int kNoise = -1;

/// DBSCAN. A point's neighborhood includes itself; core = neighborhood size >= min_pts with
/// distance <= eps. Clusters are numbered in discovery order over the input order; border
/// points go to the first cluster that reaches them. Throws Error(data) on ragged input.
std::vector<int> dbscan(const std::vector<Vector>& points, double eps, std::size_t min_pts,
                        Metric metric = Metric::cosine);

double distance(std::span<const float> a, std::span<const float> b, Metric metric);

enum class TopicSource { density, keyword, planted };

std::string_view to_string(TopicSource s);

struct TopicEntry {
    std::string topic;  ///< empty = noise
    TopicSource source = TopicSource::density;
};

/// Message -> topic (or noise). Only listed messages are in scope.
struct TopicAssignment {
    std::map<MessageKey, TopicEntry> entries;

    std::optional<std::string> topic_of(const MessageKey& key) const;
    std::set<std::string> topics() const;
    std::size_t assigned() const;

    /// JSONL `{"message_id": "channel:id", "topic": "..."|null, "provenance": "..."}`.
    void write(const std::filesystem::path& path) const;
    static TopicAssignment read(const std::filesystem::path& path);
};

/// Builds an assignment from cluster labels; cluster k is named `prefix + k`.
TopicAssignment from_clusters(const std::vector<MessageKey>& keys, const std::vector<int>& labels,
                              const std::string& prefix = "t");

struct KeywordRule {
    std::vector<std::string> keywords;
    std::string topic;
};

/// Rules file: JSON list of {"keywords": [...], "topic": "..."}.
std::vector<KeywordRule> read_rules(const std::filesystem::path& path);

/// Case-insensitive substring rules, first matching rule wins, applied to noise messages only.
TopicAssignment keyword_augment(const TopicAssignment& assignment, const Corpus& corpus,
                                const std::vector<KeywordRule>& rules);

struct Timeline {
    std::int64_t first_day = 0;  ///< UTC day index of bin 0
    std::size_t days = 0;
    std::map<std::string, std::vector<std::size_t>> counts;

    std::string csv() const;  ///< date,topic,count (every bin, zeros included)
};

/// Daily counts per topic over the corpus's full day range. Topics in `extra_topics`
/// appear even without messages.
Timeline topic_timeline(const Corpus& corpus, const TopicAssignment& assignment,
                        const std::vector<std::string>& extra_topics = {});

struct Longevity {
    std::optional<std::int64_t> first_day, last_day;  ///< bin indices; empty for a silent topic
    std::size_t span_days = 0;    ///< last - first (0 for a one-day topic)
    std::size_t active_days = 0;  ///< nonzero bins
};

std::map<std::string, Longevity> topic_longevity(const Timeline& timeline);

/// Topics assigned in `test` that never occur in `train`.
std::set<std::string> unseen_topics(const TopicAssignment& train, const TopicAssignment& test);

}  // namespace propwatch
