#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "propwatch/corpus.hpp"

namespace propwatch {

inline constexpr std::size_t kFeatureCount = 8;

/// Column names, in order, as written to feature CSVs.
const std::array<std::string, kFeatureCount>& feature_names();

struct FeatureVector {
    std::int64_t msg_length = 0;   ///< Unicode scalars
    std::int64_t word_count = 0;   ///< maximal runs of letters/digits
    std::int64_t url_count = 0;
    std::int64_t emoji_count = 0;
    std::int64_t exclamation_count = 0;
    std::int64_t question_count = 0;
    std::int64_t msg_time_of_day = 0;  ///< seconds since UTC midnight (or epoch seconds, see FeatureConfig)
    std::int64_t reply_latency = -1;   ///< seconds after the trigger; -1 without trigger

    std::array<double, kFeatureCount> values() const;
};

struct FeatureConfig {
    bool epoch_time = false;  ///< msg_time_of_day holds Unix seconds instead
};

/// Identifies the column layout and time semantics; stored in GBT model files.
std::string feature_schema(const FeatureConfig& cfg = {});

/// Emoji code point ranges counted by `emoji_count` (inclusive).
const std::vector<std::pair<char32_t, char32_t>>& emoji_ranges();
bool is_emoji(char32_t cp);

/// Whitespace-separated tokens that contain `scheme://x` or start with `www.x`
/// (leading punctuation ignored), case-insensitive. Each token counts once.
std::int64_t count_urls(std::string_view text);
std::int64_t count_words(std::string_view text);

/// Throws Error(data) if the trigger is later than the message.
FeatureVector extract(const Message& message, const Message* trigger = nullptr, const FeatureConfig& cfg = {});

struct FeatureMatrix {
    std::string schema;
    std::vector<FeatureVector> rows;

    std::vector<std::vector<double>> values() const;
    std::string csv() const;
};

/// (message index, trigger index) pairs over `corpus`.
using PairIndex = std::pair<std::size_t, std::optional<std::size_t>>;

FeatureMatrix batch_extract(const Corpus& corpus, const std::vector<PairIndex>& pairs, const FeatureConfig& cfg = {});

}  // namespace propwatch
