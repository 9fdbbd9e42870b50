#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "propwatch/corpus.hpp"
#include "propwatch/labeling.hpp"
#include "propwatch/topics.hpp"

namespace propwatch {

struct GenConfig {
    std::uint64_t seed = 7;
    std::uint64_t vocab_seed = 1;  ///< networks sharing this value share vocabularies
    std::string start = "2024-01-01T00:00:00Z";
    int days = 60;
    int split_day = 33;  ///< used only to report which topics are unseen before it
    std::string channel_prefix = "chan";
    std::size_t channels = 8;

    std::size_t users = 420;
    double user_messages_mean = 4.5;  ///< base (non-reply) messages per user
    double user_lifespan_median_days = 8.0;
    double user_lifespan_sigma = 1.2;  ///< log-normal shape
    double user_second_channel = 0.2;
    double user_short_fraction = 0.6;  ///< messages of at most 30 characters
    std::size_t user_long_min = 40, user_long_max = 300;

    std::size_t propaganda = 70;
    std::size_t propaganda_messages_min = 4, propaganda_messages_max = 14;
    double propaganda_lifespan_median_hours = 10.0;
    double propaganda_lifespan_sigma = 1.0;
    std::size_t propaganda_channels_min = 2, propaganda_channels_max = 4;
    std::size_t propaganda_len_min = 40, propaganda_len_max = 400;
    std::size_t slogan_len_min = 3, slogan_len_max = 30;  ///< drawn like short user messages
    std::size_t pool_size = 2000;  ///< cap on distinct propaganda texts
    double reuse_rate = 0.7;       ///< share of propaganda messages repeating an earlier text

    double effectiveness = 0.42;  ///< replies received per message, both cohorts
    double latency_mean_minutes = 20.0;
    double deletion_propaganda = 0.8;
    double deletion_user = 0.1;

    std::size_t persistent_topics = 5;
    std::size_t event_topics = 5;
    bool short_topic = true;  ///< a topic where propaganda posts short slogans
    double event_weight = 4.0;
    int event_duration_days = 5;
    int event_onset_lag_days = 1;
    std::size_t topic_vocab = 40;
    std::size_t hot_words = 1;     ///< per topic; propaganda only answers messages containing one
    double hot_word_rate = 0.1;    ///< chance a user message contains a hot word
    double separability = 1.0;     ///< 1 = propaganda and user styles never mix

    void validate() const;
};

enum class TopicKind { persistent, event, short_slogans };

std::string_view to_string(TopicKind k);

struct TopicPlan {
    std::string name;
    TopicKind kind = TopicKind::persistent;
    int first_day = 0;  ///< day offsets from start, half-open
    int end_day = 0;
    double weight = 1.0;
};

struct PlantedStats {
    std::size_t propaganda_messages = 0;
    std::size_t user_messages = 0;
    std::size_t owner_messages = 0;
    std::size_t deleted_propaganda = 0;
    std::size_t deleted_user = 0;
    double propaganda_deletion_ratio = 0.0;
    double user_deletion_ratio = 0.0;
    double propaganda_lifespan_median_hours = 0.0;  ///< median of the sampled lifespans
    double user_lifespan_median_hours = 0.0;
    double propaganda_channels_mean = 0.0;
    double reuse_rate = 0.0;               ///< realized share of repeated propaganda texts
    double propaganda_effectiveness = 0.0;
    double user_effectiveness = 0.0;
    std::vector<TopicPlan> topics;
    std::string short_topic;                ///< empty when disabled
    std::vector<std::string> unseen_topics; ///< topics starting on or after split_day
    /// Propaganda accounts grouped by shared long (>30 character) texts, sorted.
    std::vector<std::vector<std::string>> components;
};

struct GenResult {
    std::vector<Message> historical;  ///< export feed, deleted messages absent
    std::vector<Message> realtime;    ///< stream feed, complete
    Corpus corpus;                    ///< merged, with deletions flagged
    LabelSet labels;
    TopicAssignment topics;
    PlantedStats planted;
};

/// Hash-embedding width used when evaluating generated corpora; the 128 default is too
/// collision-prone for the generated vocabularies.
inline constexpr std::size_t kSynthEmbedDim = 512;

/// Deterministic for a given config. Throws Error(usage) on an infeasible config.
GenResult generate(const GenConfig& config);

/// The same vocabularies under a different seed, channel prefix and a weaker style contrast.
GenConfig second_network(const GenConfig& config);

std::string planted_json(const PlantedStats& p);

}  // namespace propwatch
