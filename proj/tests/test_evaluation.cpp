#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "propwatch/error.hpp"
#include "propwatch/evaluation.hpp"
#include "propwatch/random.hpp"
#include "propwatch/synthgen.hpp"

using namespace propwatch;

namespace {

constexpr std::int64_t kT0 = 1704067200;  // 2024-01-01T00:00:00Z

Message msg(std::string ch, std::int64_t id, std::string account, std::int64_t t, std::string text,
            std::optional<std::int64_t> reply_to = {}) {
    Message m;
    m.channel_id = std::move(ch);
    m.message_id = id;
    m.account_id = std::move(account);
    m.timestamp = from_unix(kT0 + t);
    m.text = std::move(text);
    m.reply_to = reply_to;
    return m;
}

/// One channel; user "u<k>" posts at even ids, propaganda "p<k>" replies at odd ids.
struct Toy {
    Corpus corpus;
    LabelSet labels;
    TopicAssignment topics;
};

Toy toy(std::size_t pairs, std::size_t extra_users = 0) {
    std::vector<Message> ms;
    std::int64_t id = 1;
    for (std::size_t k = 0; k < pairs; ++k) {
        auto t = static_cast<std::int64_t>(k) * 3600;
        ms.push_back(msg("c", id, "u" + std::to_string(k % 7), t, "question " + std::to_string(k)));
        ms.push_back(msg("c", id + 1, "p" + std::to_string(k % 3), t + 60, "agenda text " + std::to_string(k), id));
        id += 2;
    }
    for (std::size_t k = 0; k < extra_users; ++k, ++id)
        ms.push_back(msg("c", id, "u" + std::to_string(k % 7), static_cast<std::int64_t>(pairs * 3600 + k), "more", 1));
    Toy t;
    t.corpus = Corpus::merge({ms});
    for (int k = 0; k < 7; ++k) t.labels.add("u" + std::to_string(k), {Label::user, Provenance::seed, 0});
    for (int k = 0; k < 3; ++k) t.labels.add("p" + std::to_string(k), {Label::propaganda, Provenance::seed, 0});
    for (const auto& m : t.corpus.messages())
        t.topics.entries[m.key()] = {m.message_id % 4 == 0 ? "late" : "early", TopicSource::planted};
    return t;
}

Detector oracle(const LabelSet& labels) {
    return {"oracle",
            [&labels](const Corpus& c, const Example& e) {
                return labels.label_of(*c.at(e.message).account_id) == Label::propaganda ? 1.0 : 0.0;
            },
            0.5};
}

Detector constant(double v) {
    return {"const", [v](const Corpus&, const Example&) { return v; }, 0.5};
}

std::size_t count_label(const std::vector<Example>& ex, int label) {
    return static_cast<std::size_t>(std::count_if(ex.begin(), ex.end(), [&](const Example& e) { return e.label == label; }));
}

}  // namespace

TEST_CASE("labeled examples resolve triggers and respect replies_only") {
    auto t = toy(10);
    auto all = labeled_examples(t.corpus, t.labels);
    auto replies = labeled_examples(t.corpus, t.labels, true);
    CHECK(all.size() == 20);
    CHECK(replies.size() == 10);
    for (const auto& e : replies) {
        CHECK(e.label == 1);
        REQUIRE(e.trigger.has_value());
        CHECK(t.corpus.at(*e.trigger).message_id + 1 == t.corpus.at(e.message).message_id);
    }
}

TEST_CASE("temporal split is a strict partition at the cutoff") {
    auto t = toy(20);
    auto ex = labeled_examples(t.corpus, t.labels);
    auto cutoff = from_unix(kT0 + 10 * 3600);
    auto s = temporal_split(t.corpus, ex, cutoff);
    CHECK(s.train.size() + s.test.size() == ex.size());
    for (const auto& e : s.train) CHECK(t.corpus.at(e.message).timestamp < cutoff);
    for (const auto& e : s.test) CHECK(t.corpus.at(e.message).timestamp >= cutoff);
    // a message stamped exactly at the cutoff goes to test
    CHECK(std::any_of(s.test.begin(), s.test.end(),
                      [&](const Example& e) { return t.corpus.at(e.message).timestamp == cutoff; }));
    CHECK_NOTHROW(check_no_leakage(t.corpus, s));

    auto leaked = s;
    leaked.train.push_back(s.test.front());
    try {
        check_no_leakage(t.corpus, leaked);
        FAIL("expected a leakage error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::runtime);
    }
    auto early = s;
    early.test.push_back(s.train.front());
    CHECK_THROWS_AS(check_no_leakage(t.corpus, early), Error);
}

TEST_CASE("balance downsamples the majority class deterministically") {
    std::vector<Example> ex;
    for (std::size_t i = 0; i < 200; ++i) ex.push_back({i, {}, static_cast<int>(i % 2)});
    CHECK(balance(ex, 1).size() == 200);

    ex.clear();
    for (std::size_t i = 0; i < 1010; ++i) ex.push_back({i, {}, i % 101 == 0 ? 1 : 0});
    auto b = balance(ex, 3);
    CHECK(count_label(b, 1) == 10);
    CHECK(count_label(b, 0) == 10);
    CHECK(std::is_sorted(b.begin(), b.end(), [](const Example& x, const Example& y) { return x.message < y.message; }));
    auto again = balance(ex, 3);
    CHECK(std::equal(b.begin(), b.end(), again.begin(), again.end(),
                     [](const Example& x, const Example& y) { return x.message == y.message; }));
    auto other = balance(ex, 4);
    CHECK(!std::equal(b.begin(), b.end(), other.begin(), other.end(),
                      [](const Example& x, const Example& y) { return x.message == y.message; }));

    ex.clear();
    for (std::size_t i = 0; i < 5; ++i) ex.push_back({i, {}, 1});
    CHECK(balance(ex, 1).empty());
}

TEST_CASE("perfect and constant detectors") {
    auto t = toy(30);
    auto ex = balance(labeled_examples(t.corpus, t.labels), 1);
    auto perfect = evaluate(oracle(t.labels), t.corpus, ex, t.topics);
    CHECK(perfect.accuracy() == 1.0);
    CHECK(perfect.confusion.false_positive_rate() == 0.0);
    auto flat = evaluate(constant(0.9), t.corpus, ex, t.topics);
    CHECK(flat.accuracy() == 0.5);
    CHECK(flat.confusion.false_positive_rate() == 1.0);
    auto none = evaluate(constant(0.1), t.corpus, ex, t.topics);
    CHECK(none.accuracy() == 0.5);
    CHECK(none.confusion.false_positive_rate() == 0.0);
}

TEST_CASE("confusion counts match a recount of the outcomes") {
    auto t = toy(40);
    auto ex = labeled_examples(t.corpus, t.labels);
    Detector noisy{"noisy",
                   [](const Corpus& c, const Example& e) { return (c.at(e.message).message_id * 37 % 11) / 10.0; }, 0.5};
    auto r = evaluate(noisy, t.corpus, ex, t.topics);
    Confusion re;
    for (const auto& o : r.outcomes) {
        CHECK(o.predicted == (o.score >= 0.5 ? 1 : 0));
        if (o.label == 1) (o.predicted ? re.tp : re.fn) += 1;
        else (o.predicted ? re.fp : re.tn) += 1;
    }
    CHECK(re.tp == r.confusion.tp);
    CHECK(re.fp == r.confusion.fp);
    CHECK(re.tn == r.confusion.tn);
    CHECK(re.fn == r.confusion.fn);
    CHECK(r.accuracy() == doctest::Approx(double(re.tp + re.tn) / double(re.total())));
}

TEST_CASE("topic accuracies") {
    auto t = toy(40);
    auto ex = labeled_examples(t.corpus, t.labels);
    // right on "early" messages, wrong on "late" ones
    Detector half{"half",
                  [&t](const Corpus& c, const Example& e) {
                      bool prop = t.labels.label_of(*c.at(e.message).account_id) == Label::propaganda;
                      bool late = c.at(e.message).message_id % 4 == 0;
                      return (prop != late) ? 1.0 : 0.0;
                  },
                  0.5};
    auto r = evaluate(half, t.corpus, ex, t.topics, {"late"}, 5);
    CHECK(topic_accuracy(r, "early") == 1.0);
    CHECK(topic_accuracy(r, "late") == 0.0);
    CHECK(!topic_accuracy(r, "missing").has_value());
    std::size_t n = 0;
    CHECK(new_topic_accuracy(r, {"late"}, &n) == 0.0);
    CHECK(n == 20);
    CHECK(r.new_topic_accuracy == 0.0);
    CHECK(!new_topic_accuracy(r, {}).has_value());
    CHECK(!new_topic_accuracy(r, {"nowhere"}).has_value());

    auto table = per_topic_table(r, 21);
    REQUIRE(table.size() == 2);
    CHECK(table[0].topic == "early");
    CHECK(table[0].messages == 60);
    CHECK(table[0].accuracy == 1.0);
    CHECK(table[1].messages == 20);
    CHECK(!table[1].accuracy.has_value());
}

TEST_CASE("topics seen only after the cutoff are unseen") {
    auto t = toy(20);
    for (auto& [k, e] : t.topics.entries) e.topic = k.message_id > 30 ? "new" : (k.message_id > 25 ? "both" : "old");
    auto s = temporal_split(t.corpus, labeled_examples(t.corpus, t.labels), from_unix(kT0 + 14 * 3600));
    auto u = unseen_in_training(t.corpus, s, t.topics);
    CHECK(u == std::set<std::string>{"new"});
}

TEST_CASE("moderator baseline ratios") {
    auto t = toy(10);
    std::vector<MessageKey> prop, user;
    for (const auto& m : t.corpus.messages())
        (t.labels.label_of(*m.account_id) == Label::propaganda ? prop : user).push_back(m.key());

    auto all = moderator_baseline(t.corpus.with_deleted(prop), t.labels);
    CHECK(all.all.propaganda_ratio == 1.0);
    CHECK(all.all.user_ratio == 0.0);
    CHECK(all.all.precision == 1.0);
    CHECK(all.all.total_ratio == 0.5);

    auto none = moderator_baseline(t.corpus, t.labels);
    CHECK(none.all.propaganda_ratio == 0.0);
    CHECK(!none.all.precision.has_value());
    REQUIRE(none.channels.size() == 1);
    CHECK(none.channels[0].channel == "c");

    auto g = generate(GenConfig{});
    auto mb = moderator_baseline(g.corpus, g.labels);
    CHECK(mb.all.deleted_propaganda == g.planted.deleted_propaganda);
    CHECK(mb.all.deleted_user == g.planted.deleted_user);
    CHECK(*mb.all.propaganda_ratio == g.planted.propaganda_deletion_ratio);
    CHECK(*mb.all.user_ratio == g.planted.user_deletion_ratio);
    std::size_t dp = 0;
    for (const auto& row : mb.channels) dp += row.deleted_propaganda;
    CHECK(dp == mb.all.deleted_propaganda);
}

TEST_CASE("error overlap matches brute-force intersections") {
    Rng rng(5);
    std::map<std::string, std::set<MessageKey>> errors;
    for (const char* name : {"a", "b", "c", "d"}) {
        auto& s = errors[name];
        for (int i = 0; i < 200; ++i)
            if (rng.chance(0.4)) s.insert({"c", i});
    }
    auto out = error_overlap(errors);
    CHECK(out.size() == 4 + 6 + 4);
    for (const auto& e : out) {
        std::size_t n = 0;
        for (int i = 0; i < 200; ++i) {
            bool all = true;
            for (const auto& m : e.models) all = all && errors[m].contains({"c", i});
            n += all;
        }
        CHECK(e.count == n);
        CHECK(std::is_sorted(e.models.begin(), e.models.end()));
    }
    CHECK(out[0].models.size() == 1);
    CHECK(out.back().models.size() == 3);

    std::map<std::string, std::set<MessageKey>> same{{"x", {{"c", 1}, {"c", 2}}}, {"y", {{"c", 1}, {"c", 2}}}};
    CHECK(error_overlap(same).back().count == 2);
    std::map<std::string, std::set<MessageKey>> disjoint{{"x", {{"c", 1}}}, {"y", {{"c", 2}}}};
    CHECK(error_overlap(disjoint).back().count == 0);
}

TEST_CASE("cross-network evaluation") {
    auto t = toy(30);
    Detector noisy{"noisy", [](const Corpus& c, const Example& e) { return (c.at(e.message).message_id % 3) / 2.0; },
                   0.5};
    auto cross = cross_network_eval(noisy, t.corpus, t.labels, 9, t.topics, false);
    auto direct = evaluate(noisy, t.corpus, balance(labeled_examples(t.corpus, t.labels), 9), t.topics);
    CHECK(cross.confusion.tp == direct.confusion.tp);
    CHECK(cross.confusion.fp == direct.confusion.fp);
    CHECK(cross.confusion.tn == direct.confusion.tn);
    CHECK(cross.confusion.fn == direct.confusion.fn);

    try {
        cross_network_eval(noisy, t.corpus, LabelSet{}, 9);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
    }
}

TEST_CASE("pipeline reports are byte-identical for identical inputs") {
    GenConfig gc;
    gc.users = 160;
    gc.propaganda = 30;
    auto g = generate(gc);
    HashEmbedder he(64);
    auto store = embed_corpus(g.corpus, he, he.name());
    EvalConfig ec;
    ec.cutoff = "2024-02-03T00:00:00Z";
    ec.seed = 11;
    ec.mlp.epochs = 5;
    ec.gbt.trees = 20;
    auto a = run_evaluation(g.corpus, g.labels, g.topics, store, ec);
    auto b = run_evaluation(g.corpus, g.labels, g.topics, store, ec);
    CHECK(report_json(a) == report_json(b));
    CHECK(report_markdown(a) == report_markdown(b));
    CHECK(a.models.size() == 5);
    CHECK(a.train.propaganda == a.train.user);
    CHECK(a.test.propaganda == a.test.user);
    CHECK(report_json(a).find("\"leakage_check\": \"passed\"") != std::string::npos);

    EmbeddingStore partial(64, "partial");
    try {
        run_evaluation(g.corpus, g.labels, g.topics, partial, ec);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
        CHECK(std::string(e.what()).find("partial") != std::string::npos);
    }
}
