#include "propwatch/features.hpp"

#include <algorithm>
#include <sstream>

#include "propwatch/error.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

const std::array<std::string, kFeatureCount>& feature_names() {
    static const std::array<std::string, kFeatureCount> names{
        "msg_length",        "word_count",     "url_count",       "emoji_count",
        "exclamation_count", "question_count", "msg_time_of_day", "reply_latency"};
    return names;
}

std::array<double, kFeatureCount> FeatureVector::values() const {
    return {double(msg_length),        double(word_count),     double(url_count),       double(emoji_count),
            double(exclamation_count), double(question_count), double(msg_time_of_day), double(reply_latency)};
}

std::string feature_schema(const FeatureConfig& cfg) {
    std::string s = "features-v1:";
    for (const auto& n : feature_names()) s += n + ",";
    s += cfg.epoch_time ? "time=epoch" : "time=day-seconds";
    return s;
}

const std::vector<std::pair<char32_t, char32_t>>& emoji_ranges() {
    static const std::vector<std::pair<char32_t, char32_t>> ranges{
        {0x1F600, 0x1F64F},  // Emoticons
        {0x1F300, 0x1F5FF},  // Miscellaneous Symbols and Pictographs
        {0x1F680, 0x1F6FF},  // Transport and Map Symbols
        {0x1F900, 0x1F9FF},  // Supplemental Symbols and Pictographs
        {0x2665, 0x2665},    // black heart suit
        {0x2605, 0x2605},    // black star
    };
    return ranges;
}

bool is_emoji(char32_t cp) {
    for (auto [lo, hi] : emoji_ranges())
        if (cp >= lo && cp <= hi) return true;
    return false;
}

namespace {

bool ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool ascii_alnum(char c) { return ascii_alpha(c) || (c >= '0' && c <= '9'); }

bool token_is_url(std::string_view tok) {
    std::string t(tok);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    // scheme://x anywhere in the token, scheme = ALPHA *(ALPHA / DIGIT / "+" / "-" / ".")
    for (std::size_t p = t.find("://"); p != std::string::npos; p = t.find("://", p + 1)) {
        if (p + 3 >= t.size()) continue;
        std::size_t b = p;
        while (b > 0 && (ascii_alnum(t[b - 1]) || t[b - 1] == '+' || t[b - 1] == '-' || t[b - 1] == '.')) --b;
        while (b < p && !ascii_alpha(t[b])) ++b;
        if (b < p) return true;
    }
    std::size_t s = 0;
    while (s < t.size() && !ascii_alnum(t[s]) && static_cast<unsigned char>(t[s]) < 0x80) ++s;
    return t.compare(s, 4, "www.") == 0 && s + 4 < t.size();
}

}  // namespace

std::int64_t count_urls(std::string_view s) {
    std::int64_t n = 0;
    auto cps = text::decode(s);
    std::size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && text::is_whitespace(cps[i])) ++i;
        std::size_t j = i;
        while (j < cps.size() && !text::is_whitespace(cps[j])) ++j;
        if (j > i && token_is_url(text::encode(std::u32string_view(cps).substr(i, j - i)))) ++n;
        i = j;
    }
    return n;
}

std::int64_t count_words(std::string_view s) {
    std::int64_t n = 0;
    bool in = false;
    for (char32_t c : text::decode(s)) {
        bool w = text::is_letter(c) || text::is_digit(c);
        if (w && !in) ++n;
        in = w;
    }
    return n;
}

FeatureVector extract(const Message& m, const Message* trigger, const FeatureConfig& cfg) {
    FeatureVector f;
    auto cps = text::decode(m.text);
    f.msg_length = static_cast<std::int64_t>(cps.size());
    f.word_count = count_words(m.text);
    f.url_count = count_urls(m.text);
    for (char32_t c : cps) {
        f.emoji_count += is_emoji(c);
        f.exclamation_count += c == U'!';
        f.question_count += c == U'?';
    }
    f.msg_time_of_day = cfg.epoch_time ? to_unix(m.timestamp) : seconds_of_day(m.timestamp);
    if (trigger) {
        if (trigger->timestamp > m.timestamp)
            fail(ErrorKind::data, "trigger " + trigger->key().str() + " is later than reply " + m.key().str());
        f.reply_latency = (m.timestamp - trigger->timestamp).count();
    }
    return f;
}

std::vector<std::vector<double>> FeatureMatrix::values() const {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        auto v = r.values();
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

std::string FeatureMatrix::csv() const {
    std::ostringstream out;
    const auto& names = feature_names();
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (const auto& r : rows)
        out << r.msg_length << ',' << r.word_count << ',' << r.url_count << ',' << r.emoji_count << ','
            << r.exclamation_count << ',' << r.question_count << ',' << r.msg_time_of_day << ',' << r.reply_latency
            << '\n';
    return out.str();
}

FeatureMatrix batch_extract(const Corpus& corpus, const std::vector<PairIndex>& pairs, const FeatureConfig& cfg) {
    FeatureMatrix fm;
    fm.schema = feature_schema(cfg);
    fm.rows.reserve(pairs.size());
    for (const auto& [mi, ti] : pairs) fm.rows.push_back(extract(corpus.at(mi), ti ? &corpus.at(*ti) : nullptr, cfg));
    return fm;
}

}  // namespace propwatch
