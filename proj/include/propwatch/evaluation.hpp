#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "propwatch/corpus.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/features.hpp"
#include "propwatch/labeling.hpp"
#include "propwatch/models.hpp"
#include "propwatch/topics.hpp"

namespace propwatch {

/// One scored message: its corpus index, resolved trigger and account label (1 = propaganda).
struct Example {
    std::size_t message = 0;
    std::optional<std::size_t> trigger;
    int label = 0;
};

/// Messages whose author is labeled, in corpus order. With `replies_only`, only messages
/// carrying reply_to (dangling ones keep an absent trigger).
std::vector<Example> labeled_examples(const Corpus& corpus, const LabelSet& labels, bool replies_only = false);

/// Half-open: train = [.., cutoff), test = [cutoff, ..).
struct Split {
    std::vector<Example> train, test;
    Instant cutoff{};
};

Split temporal_split(const Corpus& corpus, const std::vector<Example>& examples, Instant cutoff);

/// Throws Error(runtime) if a test message precedes the cutoff, a train message does not,
/// or a message key lands in both sets.
void check_no_leakage(const Corpus& corpus, const Split& split);

/// Seeded uniform downsampling of the majority class; keeps input order.
std::vector<Example> balance(const std::vector<Example>& examples, std::uint64_t seed);

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
    double accuracy() const;
    double false_positive_rate() const;  ///< 0 when there are no negatives
};

struct Outcome {
    MessageKey key;
    std::optional<std::string> topic;
    int label = 0;
    int predicted = 0;
    double score = 0.0;
};

struct TopicAccuracy {
    std::string topic;
    std::size_t messages = 0;
    std::optional<double> accuracy;  ///< absent below the message threshold
};

struct ModelReport {
    std::string name;
    double threshold = 0.5;
    Confusion confusion;
    std::optional<double> new_topic_accuracy;
    std::size_t new_topic_messages = 0;
    std::vector<TopicAccuracy> per_topic;
    std::vector<Outcome> outcomes;  ///< test order; not serialized

    double accuracy() const { return confusion.accuracy(); }
};

/// Scores one example of the corpus it was built from.
struct Detector {
    std::string name;
    std::function<double(const Corpus&, const Example&)> score;
    double threshold = 0.5;
};

ModelReport evaluate(const Detector& detector, const Corpus& corpus, const std::vector<Example>& test,
                     const TopicAssignment& assignment, const std::set<std::string>& unseen_topics = {},
                     std::size_t min_topic_messages = 50);

/// Accuracy pooled over test messages whose topic is unseen; nullopt when there are none.
std::optional<double> new_topic_accuracy(const ModelReport& report, const std::set<std::string>& unseen_topics,
                                         std::size_t* messages = nullptr);

/// Accuracy on the messages of one topic; nullopt when it has none.
std::optional<double> topic_accuracy(const ModelReport& report, const std::string& topic);

std::vector<TopicAccuracy> per_topic_table(const ModelReport& report, std::size_t min_messages);

/// Topics with test messages but no training messages.
std::set<std::string> unseen_in_training(const Corpus& corpus, const Split& split, const TopicAssignment& assignment);

struct ModerationRow {
    std::string channel;  ///< "all" for the aggregate row
    std::size_t propaganda_messages = 0, deleted_propaganda = 0;
    std::size_t user_messages = 0, deleted_user = 0;
    std::size_t total_messages = 0, deleted_total = 0;
    std::optional<double> propaganda_ratio;  ///< deleted propaganda / labeled propaganda
    std::optional<double> user_ratio;        ///< deleted user / labeled user
    std::optional<double> total_ratio;       ///< deleted / all messages
    std::optional<double> precision;         ///< deleted propaganda / deleted labeled messages
};

struct ModerationBaseline {
    std::vector<ModerationRow> channels;  ///< sorted by channel
    ModerationRow all;
};

/// Deletion ratios from the corpus's deleted flags (set by diff_deleted).
ModerationBaseline moderator_baseline(const Corpus& corpus, const LabelSet& labels);

struct OverlapEntry {
    std::vector<std::string> models;  ///< sorted
    std::size_t count = 0;            ///< messages misclassified by every listed model
};

/// Intersections for every model subset of size 1 to 3, ordered by size then names.
std::vector<OverlapEntry> error_overlap(const std::map<std::string, std::set<MessageKey>>& errors);
std::set<MessageKey> errors_of(const ModelReport& report);

/// Evaluates on a different network: all labeled messages, balanced with `seed`.
/// Throws Error(data) when no labeled message remains.
ModelReport cross_network_eval(const Detector& detector, const Corpus& corpus, const LabelSet& labels,
                               std::uint64_t seed, const TopicAssignment& assignment = {}, bool replies_only = true);

// ------------------------------------------------------------ pipeline

struct EvalConfig {
    std::string cutoff;  ///< ISO-8601
    std::uint64_t seed = 0;
    double threshold = 0.5;
    std::size_t min_topic_messages = 50;
    bool replies_only = true;  ///< score trigger-reply pairs only
    EnsembleMode ensemble = EnsembleMode::sum;
    FeatureConfig features;
    GBTParams gbt;
    MLPParams mlp;
};

struct TrainedDetectors {
    GBTModel gbt;
    MLPModel reply, trigger, pair;
};

/// Input rows for each detector family. A missing reply embedding is Error(data); a missing
/// trigger (or trigger embedding) zero-fills the trigger slot.
Rows feature_rows(const Corpus& corpus, const std::vector<Example>& ex, const FeatureConfig& cfg);
Rows embedding_rows(const Corpus& corpus, const std::vector<Example>& ex, const EmbeddingStore& store,
                    InputKind kind);
Labels labels_of(const std::vector<Example>& ex);

TrainedDetectors train_detectors(const Corpus& corpus, const std::vector<Example>& train, const EmbeddingStore& store,
                                 const EvalConfig& cfg);

/// gbt-features, mlp-reply, mlp-trigger, mlp-pair, ensemble (trigger + reply).
std::vector<Detector> make_detectors(const TrainedDetectors& models, const EmbeddingStore& store,
                                     const EvalConfig& cfg);

struct SetSummary {
    std::size_t examples = 0, propaganda = 0, user = 0;
};

struct EvalReport {
    std::string corpus_hash;
    EvalConfig config;
    std::string embedding_provenance;
    std::size_t embedding_dim = 0;
    SetSummary train, test;
    std::vector<std::string> unseen_topics;
    std::vector<ModelReport> models;
    std::optional<ModerationBaseline> moderation;
    std::vector<OverlapEntry> overlap;
    std::vector<ModelReport> cross_network;

    const ModelReport* model(const std::string& name) const;
};

/// Split, leakage check, balancing, training, evaluation and moderation, all seeded by cfg.
EvalReport run_evaluation(const Corpus& corpus, const LabelSet& labels, const TopicAssignment& assignment,
                          const EmbeddingStore& store, const EvalConfig& cfg, TrainedDetectors* trained = nullptr);

std::string report_json(const EvalReport& report);
std::string report_markdown(const EvalReport& report);

}  // namespace propwatch
