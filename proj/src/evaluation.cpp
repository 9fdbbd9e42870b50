#include "propwatch/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "propwatch/error.hpp"
#include "propwatch/random.hpp"

namespace propwatch {

using ojson = nlohmann::ordered_json;

std::vector<Example> labeled_examples(const Corpus& corpus, const LabelSet& labels, bool replies_only) {
    std::vector<Example> out;
    auto msgs = corpus.messages();
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        if (!msgs[i].account_id || (replies_only && !msgs[i].reply_to)) continue;
        auto l = labels.label_of(*msgs[i].account_id);
        if (!l) continue;
        out.push_back({i, corpus.trigger_of(i), *l == Label::propaganda ? 1 : 0});
    }
    return out;
}

Split temporal_split(const Corpus& corpus, const std::vector<Example>& examples, Instant cutoff) {
    Split s;
    s.cutoff = cutoff;
    for (const auto& e : examples) (corpus.at(e.message).timestamp < cutoff ? s.train : s.test).push_back(e);
    return s;
}

void check_no_leakage(const Corpus& corpus, const Split& split) {
    std::set<MessageKey> train_keys;
    for (const auto& e : split.train) {
        const auto& m = corpus.at(e.message);
        if (m.timestamp >= split.cutoff)
            fail(ErrorKind::runtime, "leakage: training message " + m.key().str() + " is not before the cutoff");
        train_keys.insert(m.key());
    }
    for (const auto& e : split.test) {
        const auto& m = corpus.at(e.message);
        if (m.timestamp < split.cutoff)
            fail(ErrorKind::runtime, "leakage: test message " + m.key().str() + " precedes the cutoff");
        if (train_keys.contains(m.key()))
            fail(ErrorKind::runtime, "leakage: message " + m.key().str() + " is in both splits");
    }
}

std::vector<Example> balance(const std::vector<Example>& examples, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < examples.size(); ++i) (examples[i].label ? pos : neg).push_back(i);
    auto& major = pos.size() > neg.size() ? pos : neg;
    const auto keep = std::min(pos.size(), neg.size());
    Rng rng(seed);
    rng.shuffle(major);
    major.resize(keep);
    std::vector<std::size_t> idx = pos;
    idx.insert(idx.end(), neg.begin(), neg.end());
    std::sort(idx.begin(), idx.end());
    std::vector<Example> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(examples[i]);
    return out;
}

double Confusion::accuracy() const {
    return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0;
}

double Confusion::false_positive_rate() const {
    return fp + tn ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
}

std::optional<double> new_topic_accuracy(const ModelReport& report, const std::set<std::string>& unseen_topics,
                                         std::size_t* messages) {
    std::size_t n = 0, ok = 0;
    for (const auto& o : report.outcomes) {
        if (!o.topic || !unseen_topics.contains(*o.topic)) continue;
        ++n;
        ok += o.label == o.predicted;
    }
    if (messages) *messages = n;
    if (n == 0) return std::nullopt;
    return static_cast<double>(ok) / static_cast<double>(n);
}

std::optional<double> topic_accuracy(const ModelReport& report, const std::string& topic) {
    return new_topic_accuracy(report, {topic});
}

std::vector<TopicAccuracy> per_topic_table(const ModelReport& report, std::size_t min_messages) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& o : report.outcomes) {
        if (!o.topic) continue;
        auto& c = counts[*o.topic];
        ++c.first;
        c.second += o.label == o.predicted;
    }
    std::vector<TopicAccuracy> out;
    for (const auto& [topic, c] : counts) {
        TopicAccuracy t{topic, c.first, std::nullopt};
        if (c.first >= min_messages && c.first > 0)
            t.accuracy = static_cast<double>(c.second) / static_cast<double>(c.first);
        out.push_back(t);
    }
    return out;
}

ModelReport evaluate(const Detector& detector, const Corpus& corpus, const std::vector<Example>& test,
                     const TopicAssignment& assignment, const std::set<std::string>& unseen_topics,
                     std::size_t min_topic_messages) {
    ModelReport r;
    r.name = detector.name;
    r.threshold = detector.threshold;
    for (const auto& e : test) {
        Outcome o;
        o.key = corpus.at(e.message).key();
        o.topic = assignment.topic_of(o.key);
        o.label = e.label;
        o.score = detector.score(corpus, e);
        o.predicted = o.score >= detector.threshold ? 1 : 0;
        auto& c = r.confusion;
        if (o.label) (o.predicted ? c.tp : c.fn)++;
        else (o.predicted ? c.fp : c.tn)++;
        r.outcomes.push_back(std::move(o));
    }
    r.new_topic_accuracy = new_topic_accuracy(r, unseen_topics, &r.new_topic_messages);
    r.per_topic = per_topic_table(r, min_topic_messages);
    return r;
}

std::set<std::string> unseen_in_training(const Corpus& corpus, const Split& split, const TopicAssignment& assignment) {
    std::set<std::string> seen, unseen;
    for (const auto& e : split.train)
        if (auto t = assignment.topic_of(corpus.at(e.message).key())) seen.insert(*t);
    for (const auto& e : split.test)
        if (auto t = assignment.topic_of(corpus.at(e.message).key()); t && !seen.contains(*t)) unseen.insert(*t);
    return unseen;
}

namespace {

std::optional<double> ratio(std::size_t a, std::size_t b) {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
}

void finish(ModerationRow& r) {
    r.propaganda_ratio = ratio(r.deleted_propaganda, r.propaganda_messages);
    r.user_ratio = ratio(r.deleted_user, r.user_messages);
    r.total_ratio = ratio(r.deleted_total, r.total_messages);
    r.precision = ratio(r.deleted_propaganda, r.deleted_propaganda + r.deleted_user);
}

}  // namespace

ModerationBaseline moderator_baseline(const Corpus& corpus, const LabelSet& labels) {
    std::map<std::string, ModerationRow> rows;
    ModerationBaseline b;
    b.all.channel = "all";
    for (const auto& m : corpus.messages()) {
        auto& r = rows[m.channel_id];
        r.channel = m.channel_id;
        for (auto* row : {&r, &b.all}) {
            ++row->total_messages;
            row->deleted_total += m.deleted;
            if (!m.account_id) continue;
            auto l = labels.label_of(*m.account_id);
            if (!l) continue;
            if (*l == Label::propaganda) {
                ++row->propaganda_messages;
                row->deleted_propaganda += m.deleted;
            } else {
                ++row->user_messages;
                row->deleted_user += m.deleted;
            }
        }
    }
    for (auto& [ch, r] : rows) {
        finish(r);
        b.channels.push_back(r);
    }
    finish(b.all);
    return b;
}

std::set<MessageKey> errors_of(const ModelReport& report) {
    std::set<MessageKey> out;
    for (const auto& o : report.outcomes)
        if (o.label != o.predicted) out.insert(o.key);
    return out;
}

std::vector<OverlapEntry> error_overlap(const std::map<std::string, std::set<MessageKey>>& errors) {
    std::vector<std::string> names;
    for (const auto& [n, s] : errors) names.push_back(n);
    std::vector<OverlapEntry> out;
    auto emit = [&](std::vector<std::string> subset) {
        std::set<MessageKey> acc = errors.at(subset[0]);
        for (std::size_t k = 1; k < subset.size(); ++k) {
            std::set<MessageKey> next;
            const auto& other = errors.at(subset[k]);
            std::set_intersection(acc.begin(), acc.end(), other.begin(), other.end(), std::inserter(next, next.end()));
            acc.swap(next);
        }
        out.push_back({std::move(subset), acc.size()});
    };
    const std::size_t n = names.size();
    for (std::size_t a = 0; a < n; ++a) emit({names[a]});
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) emit({names[a], names[b]});
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            for (std::size_t c = b + 1; c < n; ++c) emit({names[a], names[b], names[c]});
    return out;
}

ModelReport cross_network_eval(const Detector& detector, const Corpus& corpus, const LabelSet& labels,
                               std::uint64_t seed, const TopicAssignment& assignment, bool replies_only) {
    auto ex = balance(labeled_examples(corpus, labels, replies_only), seed);
    if (ex.empty()) fail(ErrorKind::data, "external network has no labeled messages of both classes");
    return evaluate(detector, corpus, ex, assignment);
}

// ------------------------------------------------------------ pipeline

Labels labels_of(const std::vector<Example>& ex) {
    Labels y;
    y.reserve(ex.size());
    for (const auto& e : ex) y.push_back(e.label);
    return y;
}

Rows feature_rows(const Corpus& corpus, const std::vector<Example>& ex, const FeatureConfig& cfg) {
    Rows X;
    X.reserve(ex.size());
    for (const auto& e : ex) {
        const Message* trig = e.trigger ? &corpus.at(*e.trigger) : nullptr;
        auto v = extract(corpus.at(e.message), trig, cfg).values();
        X.emplace_back(v.begin(), v.end());
    }
    return X;
}

namespace {

std::vector<double> embedding_row(const Corpus& corpus, const Example& e, const EmbeddingStore& store, InputKind kind) {
    const auto& m = corpus.at(e.message);
    std::optional<std::span<const float>> trig;
    if (e.trigger) trig = store.get(corpus.at(*e.trigger).key());
    if (kind == InputKind::trigger) {
        if (trig) return to_double(*trig);
        return std::vector<double>(store.dim(), 0.0);
    }
    auto reply = store.get(m.key());
    if (!reply)
        fail(ErrorKind::data, "embedding store (" + store.provenance() + ") has no vector for message " + m.key().str());
    if (kind == InputKind::reply) return to_double(*reply);
    return build_pair_vector(trig, *reply);
}

}  // namespace

Rows embedding_rows(const Corpus& corpus, const std::vector<Example>& ex, const EmbeddingStore& store,
                    InputKind kind) {
    if (store.dim() == 0 || store.size() == 0) fail(ErrorKind::data, "embedding store '" + store.provenance() + "' is empty");
    Rows X;
    X.reserve(ex.size());
    for (const auto& e : ex) X.push_back(embedding_row(corpus, e, store, kind));
    return X;
}

TrainedDetectors train_detectors(const Corpus& corpus, const std::vector<Example>& train, const EmbeddingStore& store,
                                 const EvalConfig& cfg) {
    auto y = labels_of(train);
    auto schema = feature_schema(cfg.features);
    auto gbt = std::async(std::launch::async, [&] {
        GBTParams p = cfg.gbt;
        p.seed = cfg.seed;
        return train_gbt(feature_rows(corpus, train, cfg.features), y, p, schema);
    });
    auto mlp = [&](InputKind kind, std::uint64_t salt) {
        return std::async(std::launch::async, [&, kind, salt] {
            MLPParams p = cfg.mlp;
            p.seed = cfg.seed * 0x100000001b3ULL + salt;
            auto m = train_mlp(embedding_rows(corpus, train, store, kind), y, p, kind, store.dim());
            m.provenance = store.provenance();
            return m;
        });
    };
    auto reply = mlp(InputKind::reply, 1), trigger = mlp(InputKind::trigger, 2), pair = mlp(InputKind::pair, 3);
    return {gbt.get(), reply.get(), trigger.get(), pair.get()};
}

std::vector<Detector> make_detectors(const TrainedDetectors& models, const EmbeddingStore& store,
                                     const EvalConfig& cfg) {
    const double thr = cfg.threshold;
    std::vector<Detector> out;
    out.push_back({"gbt-features",
                   [&models, fc = cfg.features](const Corpus& c, const Example& e) {
                       const Message* trig = e.trigger ? &c.at(*e.trigger) : nullptr;
                       auto v = extract(c.at(e.message), trig, fc).values();
                       return models.gbt.predict(std::vector<double>(v.begin(), v.end()));
                   },
                   thr});
    auto mlp = [&](const std::string& name, const MLPModel& m) {
        out.push_back({name,
                       [&m, &store](const Corpus& c, const Example& e) {
                           return m.predict(embedding_row(c, e, store, m.kind));
                       },
                       thr});
    };
    mlp("mlp-reply", models.reply);
    mlp("mlp-trigger", models.trigger);
    mlp("mlp-pair", models.pair);
    // Mean of the two scores: >= 0.5 exactly when their sum is >= 1.
    out.push_back({"ensemble",
                   [&models, &store, mode = cfg.ensemble](const Corpus& c, const Example& e) {
                       double pt = models.trigger.predict(embedding_row(c, e, store, InputKind::trigger));
                       double pr = models.reply.predict(embedding_row(c, e, store, InputKind::reply));
                       if (mode == EnsembleMode::any) return std::max(pt, pr);
                       return (pt + pr) / 2.0;
                   },
                   0.5});
    return out;
}

const ModelReport* EvalReport::model(const std::string& name) const {
    for (const auto& m : models)
        if (m.name == name) return &m;
    return nullptr;
}

namespace {

SetSummary summarize(const std::vector<Example>& ex) {
    SetSummary s;
    s.examples = ex.size();
    for (const auto& e : ex) (e.label ? s.propaganda : s.user)++;
    return s;
}

}  // namespace

EvalReport run_evaluation(const Corpus& corpus, const LabelSet& labels, const TopicAssignment& assignment,
                          const EmbeddingStore& store, const EvalConfig& cfg, TrainedDetectors* trained) {
    if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) fail(ErrorKind::usage, "threshold must be in (0,1)");
    EvalReport rep;
    rep.corpus_hash = corpus_hash(corpus);
    rep.config = cfg;
    rep.embedding_provenance = store.provenance();
    rep.embedding_dim = store.dim();

    auto split = temporal_split(corpus, labeled_examples(corpus, labels, cfg.replies_only), parse_iso8601(cfg.cutoff));
    check_no_leakage(corpus, split);
    auto unseen = unseen_in_training(corpus, split, assignment);
    rep.unseen_topics.assign(unseen.begin(), unseen.end());
    auto train = balance(split.train, cfg.seed);
    auto test = balance(split.test, cfg.seed + 1);
    auto has_both = [](const SetSummary& s) { return s.propaganda > 0 && s.user > 0; };
    rep.train = summarize(train);
    rep.test = summarize(test);
    if (!has_both(rep.train)) fail(ErrorKind::data, "training window lacks one of the classes");
    if (!has_both(rep.test)) fail(ErrorKind::data, "test window lacks one of the classes");

    auto models = train_detectors(corpus, train, store, cfg);
    auto detectors = make_detectors(models, store, cfg);
    std::vector<std::future<ModelReport>> jobs;
    for (const auto& d : detectors)
        jobs.push_back(std::async(std::launch::async, [&, d] {
            return evaluate(d, corpus, test, assignment, unseen, cfg.min_topic_messages);
        }));
    for (auto& j : jobs) rep.models.push_back(j.get());

    std::map<std::string, std::set<MessageKey>> errs;
    for (const auto& name : {"gbt-features", "mlp-reply", "mlp-pair"}) errs[name] = errors_of(*rep.model(name));
    rep.overlap = error_overlap(errs);
    rep.moderation = moderator_baseline(corpus, labels);
    if (trained) *trained = std::move(models);
    return rep;
}

// ------------------------------------------------------------- reports

namespace {

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson model_json(const ModelReport& m) {
    ojson topics = ojson::array();
    for (const auto& t : m.per_topic)
        topics.push_back({{"topic", t.topic}, {"messages", t.messages}, {"accuracy", opt(t.accuracy)}});
    const auto& c = m.confusion;
    return {{"name", m.name},
            {"threshold", m.threshold},
            {"accuracy", c.accuracy()},
            {"false_positive_rate", c.false_positive_rate()},
            {"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}},
            {"new_topic_accuracy", opt(m.new_topic_accuracy)},
            {"new_topic_messages", m.new_topic_messages},
            {"per_topic", topics}};
}

ojson moderation_json(const ModerationRow& r) {
    return {{"channel", r.channel},
            {"propaganda_messages", r.propaganda_messages},
            {"deleted_propaganda", r.deleted_propaganda},
            {"user_messages", r.user_messages},
            {"deleted_user", r.deleted_user},
            {"total_messages", r.total_messages},
            {"deleted_total", r.deleted_total},
            {"propaganda_ratio", opt(r.propaganda_ratio)},
            {"user_ratio", opt(r.user_ratio)},
            {"total_ratio", opt(r.total_ratio)},
            {"precision", opt(r.precision)}};
}

std::string pct(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * *v);
    return buf;
}

}  // namespace

std::string report_json(const EvalReport& r) {
    const auto& g = r.config.gbt;
    const auto& m = r.config.mlp;
    ojson j;
    j["corpus_hash"] = r.corpus_hash;
    j["seed"] = r.config.seed;
    j["cutoff"] = r.config.cutoff;
    j["threshold"] = r.config.threshold;
    j["min_topic_messages"] = r.config.min_topic_messages;
    j["parameters"] = {
        {"features", feature_schema(r.config.features)},
        {"embedding", {{"provenance", r.embedding_provenance}, {"dim", r.embedding_dim}}},
        {"ensemble", r.config.ensemble == EnsembleMode::sum ? "sum" : "any"},
        {"gbt",
         {{"trees", g.trees},
          {"depth", g.depth},
          {"learning_rate", g.learning_rate},
          {"min_child", g.min_child},
          {"lambda", g.lambda},
          {"subsample", g.subsample}}},
        {"mlp",
         {{"h1", m.h1},
          {"h2", m.h2},
          {"epochs", m.epochs},
          {"batch", m.batch},
          {"learning_rate", m.learning_rate},
          {"beta1", m.beta1},
          {"beta2", m.beta2},
          {"epsilon", m.epsilon}}}};
    auto set_json = [](const SetSummary& s) {
        return ojson{{"examples", s.examples}, {"propaganda", s.propaganda}, {"user", s.user}};
    };
    j["train"] = set_json(r.train);
    j["test"] = set_json(r.test);
    j["leakage_check"] = "passed";
    j["unseen_topics"] = r.unseen_topics;
    j["models"] = ojson::array();
    for (const auto& mr : r.models) j["models"].push_back(model_json(mr));
    if (r.moderation) {
        ojson rows = ojson::array();
        for (const auto& row : r.moderation->channels) rows.push_back(moderation_json(row));
        j["moderation"] = {{"channels", rows}, {"all", moderation_json(r.moderation->all)}};
    }
    j["error_overlap"] = ojson::array();
    for (const auto& o : r.overlap) j["error_overlap"].push_back({{"models", o.models}, {"count", o.count}});
    if (!r.cross_network.empty()) {
        j["cross_network"] = ojson::array();
        for (const auto& mr : r.cross_network) j["cross_network"].push_back(model_json(mr));
    }
    return j.dump(2) + "\n";
}

std::string report_markdown(const EvalReport& r) {
    std::ostringstream os;
    os << "# Detection report\n\n";
    os << "- corpus: `" << r.corpus_hash << "`\n";
    os << "- cutoff: " << r.config.cutoff << " (train before, test from)\n";
    os << "- seed: " << r.config.seed << ", threshold: " << r.config.threshold << "\n";
    os << "- train: " << r.train.examples << " messages (" << r.train.propaganda << " propaganda), test: "
       << r.test.examples << " messages (" << r.test.propaganda << " propaganda)\n";
    os << "- embeddings: " << r.embedding_provenance << " (dim " << r.embedding_dim << ")\n";
    os << "- unseen topics:";
    if (r.unseen_topics.empty()) os << " none";
    for (const auto& t : r.unseen_topics) os << " " << t;
    os << "\n\n## Detection performance\n\n";
    os << "| Model | Overall accuracy | New topics accuracy | False positive rate | TP | FP | TN | FN |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& m : r.models) {
        const auto& c = m.confusion;
        os << "| " << m.name << " | " << pct(c.accuracy()) << " | " << pct(m.new_topic_accuracy) << " | "
           << pct(c.false_positive_rate()) << " | " << c.tp << " | " << c.fp << " | " << c.tn << " | " << c.fn
           << " |\n";
    }
    if (!r.models.empty()) {
        os << "\n## Accuracy per topic (topics under " << r.config.min_topic_messages << " test messages: -)\n\n";
        os << "| Topic | Messages |";
        for (const auto& m : r.models) os << " " << m.name << " |";
        os << "\n|---|---|";
        for (std::size_t k = 0; k < r.models.size(); ++k) os << "---|";
        os << "\n";
        for (std::size_t t = 0; t < r.models.front().per_topic.size(); ++t) {
            const auto& row = r.models.front().per_topic[t];
            os << "| " << row.topic << " | " << row.messages << " |";
            for (const auto& m : r.models) os << " " << pct(m.per_topic[t].accuracy) << " |";
            os << "\n";
        }
    }
    if (r.moderation) {
        os << "\n## Moderation baseline\n\n";
        os << "| Channel | Propaganda deleted | Users deleted | All deleted | Precision |\n";
        os << "|---|---|---|---|---|\n";
        auto row = [&](const ModerationRow& m) {
            os << "| " << m.channel << " | " << pct(m.propaganda_ratio) << " | " << pct(m.user_ratio) << " | "
               << pct(m.total_ratio) << " | " << pct(m.precision) << " |\n";
        };
        for (const auto& m : r.moderation->channels) row(m);
        row(r.moderation->all);
        os << "\nPrecision counts deletions among labeled messages only; deletions of unlabeled "
              "messages cannot be judged.\n";
    }
    if (!r.overlap.empty()) {
        os << "\n## Error overlap\n\n| Models | Shared errors |\n|---|---|\n";
        for (const auto& o : r.overlap) {
            os << "| ";
            for (std::size_t k = 0; k < o.models.size(); ++k) os << (k ? " & " : "") << o.models[k];
            os << " | " << o.count << " |\n";
        }
    }
    if (!r.cross_network.empty()) {
        os << "\n## Second network\n\n| Model | Accuracy | False positive rate | Messages |\n|---|---|---|---|\n";
        for (const auto& m : r.cross_network)
            os << "| " << m.name << " | " << pct(m.accuracy()) << " | " << pct(m.confusion.false_positive_rate())
               << " | " << m.confusion.total() << " |\n";
    }
    return os.str();
}

}  // namespace propwatch
