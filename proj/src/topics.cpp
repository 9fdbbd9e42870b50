#include "propwatch/topics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "propwatch/data.hpp"
#include "propwatch/error.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

using nlohmann::json;

Metric parse_metric(std::string_view s) {
    if (s == "cosine") return Metric::cosine;
    if (s == "euclidean") return Metric::euclidean;
    fail(ErrorKind::usage, "unknown metric '" + std::string(s) + "'");
}

double distance(std::span<const float> a, std::span<const float> b, Metric metric) {
    if (metric == Metric::euclidean) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = static_cast<double>(a[i]) - b[i];
            s += d * d;
        }
        return std::sqrt(s);
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
    return 1.0 - dot / std::sqrt(na * nb);
}

std::vector<int> dbscan(const std::vector<Vector>& points, double eps, std::size_t min_pts, Metric metric) {
    if (!(eps > 0.0)) fail(ErrorKind::usage, "eps must be positive");
    if (min_pts < 1) fail(ErrorKind::usage, "min_pts must be at least 1");
    const std::size_t n = points.size();
    for (const auto& p : points)
        if (p.size() != points.front().size()) fail(ErrorKind::data, "vectors differ in dimension");

    std::vector<std::vector<std::size_t>> nbr(n);
    for (std::size_t i = 0; i < n; ++i) {
        nbr[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j)
            if (distance(points[i], points[j], metric) <= eps) {
                nbr[i].push_back(j);
                nbr[j].push_back(i);
            }
    }
    for (auto& v : nbr) std::sort(v.begin(), v.end());

    constexpr int unvisited = -2;
    std::vector<int> label(n, unvisited);
    int cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != unvisited) continue;
        if (nbr[i].size() < min_pts) {
            label[i] = kNoise;
            continue;
        }
        label[i] = cluster;
        std::deque<std::size_t> queue(nbr[i].begin(), nbr[i].end());
        while (!queue.empty()) {
            std::size_t q = queue.front();
            queue.pop_front();
            if (label[q] == kNoise) label[q] = cluster;
            if (label[q] != unvisited) continue;
            label[q] = cluster;
            if (nbr[q].size() >= min_pts) queue.insert(queue.end(), nbr[q].begin(), nbr[q].end());
        }
        ++cluster;
    }
    return label;
}

std::string_view to_string(TopicSource s) {
    switch (s) {
        case TopicSource::density: return "density-cluster";
        case TopicSource::keyword: return "keyword-rule";
        case TopicSource::planted: return "planted";
    }
    return "density-cluster";
}

namespace {
TopicSource parse_source(std::string_view s) {
    if (s == "density-cluster") return TopicSource::density;
    if (s == "keyword-rule") return TopicSource::keyword;
    if (s == "planted") return TopicSource::planted;
    fail(ErrorKind::parse, "unknown topic provenance '" + std::string(s) + "'");
}

MessageKey parse_key(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos) fail(ErrorKind::parse, "message id '" + s + "' lacks a channel prefix");
    try {
        std::size_t used = 0;
        auto id = std::stoll(s.substr(colon + 1), &used);
        if (used != s.size() - colon - 1) throw std::invalid_argument("trailing");
        return {s.substr(0, colon), id};
    } catch (const std::exception&) {
        fail(ErrorKind::parse, "bad message id '" + s + "'");
    }
}
}  // namespace

std::optional<std::string> TopicAssignment::topic_of(const MessageKey& key) const {
    auto it = entries.find(key);
    if (it == entries.end() || it->second.topic.empty()) return std::nullopt;
    return it->second.topic;
}

std::set<std::string> TopicAssignment::topics() const {
    std::set<std::string> out;
    for (const auto& [_, e] : entries)
        if (!e.topic.empty()) out.insert(e.topic);
    return out;
}

std::size_t TopicAssignment::assigned() const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [](const auto& kv) { return !kv.second.topic.empty(); }));
}

void TopicAssignment::write(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& [k, e] : entries) {
        out += "{\"message_id\":" + json(k.str()).dump() +
               ",\"topic\":" + (e.topic.empty() ? std::string("null") : json(e.topic).dump()) +
               ",\"provenance\":\"" + std::string(to_string(e.source)) + "\"}\n";
    }
    write_text_file(path, out);
}

TopicAssignment TopicAssignment::read(const std::filesystem::path& path) {
    TopicAssignment a;
    std::size_t n = 0;
    for (const auto& line : read_lines(path)) {
        ++n;
        try {
            auto j = json::parse(line);
            TopicEntry e;
            if (!j.at("topic").is_null()) e.topic = j.at("topic").get<std::string>();
            e.source = parse_source(j.value("provenance", std::string("density-cluster")));
            a.entries[parse_key(j.at("message_id").get<std::string>())] = e;
        } catch (const json::exception& ex) {
            fail(ErrorKind::parse, path.string() + ": record " + std::to_string(n) + ": " + ex.what());
        }
    }
    return a;
}

TopicAssignment from_clusters(const std::vector<MessageKey>& keys, const std::vector<int>& labels,
                              const std::string& prefix) {
    if (keys.size() != labels.size()) fail(ErrorKind::data, "keys and labels differ in length");
    TopicAssignment a;
    for (std::size_t i = 0; i < keys.size(); ++i)
        a.entries[keys[i]] = {labels[i] == kNoise ? std::string{} : prefix + std::to_string(labels[i]),
                              TopicSource::density};
    return a;
}

std::vector<KeywordRule> read_rules(const std::filesystem::path& path) {
    std::vector<KeywordRule> rules;
    try {
        auto j = json::parse(read_text_file(path));
        for (const auto& r : j) rules.push_back({r.at("keywords").get<std::vector<std::string>>(), r.at("topic").get<std::string>()});
    } catch (const json::exception& e) {
        fail(ErrorKind::parse, path.string() + ": " + e.what());
    }
    return rules;
}

TopicAssignment keyword_augment(const TopicAssignment& assignment, const Corpus& corpus,
                                const std::vector<KeywordRule>& rules) {
    std::vector<std::pair<std::vector<std::string>, const std::string*>> lowered;
    for (const auto& r : rules) {
        std::vector<std::string> kws;
        for (const auto& k : r.keywords)
            if (!k.empty()) kws.push_back(text::to_lower(k));
        lowered.push_back({std::move(kws), &r.topic});
    }
    TopicAssignment out = assignment;
    for (auto& [key, e] : out.entries) {
        if (!e.topic.empty()) continue;
        auto idx = corpus.find(key);
        if (!idx) continue;
        auto t = text::to_lower(corpus.at(*idx).text);
        for (const auto& [kws, topic] : lowered) {
            bool hit = std::any_of(kws.begin(), kws.end(), [&](const std::string& k) { return t.find(k) != std::string::npos; });
            if (hit) {
                e = {*topic, TopicSource::keyword};
                break;
            }
        }
    }
    return out;
}

std::string Timeline::csv() const {
    std::ostringstream out;
    out << "date,topic,count\n";
    for (std::size_t d = 0; d < days; ++d) {
        auto date = format_date(Instant{std::chrono::days{first_day + static_cast<std::int64_t>(d)}});
        for (const auto& [topic, c] : counts) out << date << ',' << topic << ',' << c[d] << '\n';
    }
    return out.str();
}

Timeline topic_timeline(const Corpus& corpus, const TopicAssignment& assignment,
                        const std::vector<std::string>& extra_topics) {
    Timeline tl;
    if (!corpus.empty()) {
        std::int64_t lo = INT64_MAX, hi = INT64_MIN;
        for (const auto& m : corpus.messages()) {
            lo = std::min(lo, day_index(m.timestamp));
            hi = std::max(hi, day_index(m.timestamp));
        }
        tl.first_day = lo;
        tl.days = static_cast<std::size_t>(hi - lo + 1);
    }
    for (const auto& t : assignment.topics()) tl.counts[t].assign(tl.days, 0);
    for (const auto& t : extra_topics) tl.counts[t].assign(tl.days, 0);
    for (const auto& [key, e] : assignment.entries) {
        if (e.topic.empty()) continue;
        auto idx = corpus.find(key);
        if (!idx) continue;
        ++tl.counts[e.topic][static_cast<std::size_t>(day_index(corpus.at(*idx).timestamp) - tl.first_day)];
    }
    return tl;
}

std::map<std::string, Longevity> topic_longevity(const Timeline& timeline) {
    std::map<std::string, Longevity> out;
    for (const auto& [topic, c] : timeline.counts) {
        Longevity l;
        for (std::size_t d = 0; d < c.size(); ++d) {
            if (c[d] == 0) continue;
            if (!l.first_day) l.first_day = static_cast<std::int64_t>(d);
            l.last_day = static_cast<std::int64_t>(d);
            ++l.active_days;
        }
        if (l.first_day) l.span_days = static_cast<std::size_t>(*l.last_day - *l.first_day);
        out[topic] = l;
    }
    return out;
}

std::set<std::string> unseen_topics(const TopicAssignment& train, const TopicAssignment& test) {
    auto seen = train.topics();
    std::set<std::string> out;
    for (const auto& t : test.topics())
        if (!seen.contains(t)) out.insert(t);
    return out;
}

}  // namespace propwatch
