#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "propwatch/coordination.hpp"
#include "propwatch/error.hpp"
#include "propwatch/labeling.hpp"
#include "propwatch/synthgen.hpp"
#include "propwatch/text.hpp"
#include "propwatch/topics.hpp"

using namespace propwatch;

namespace {

const GenResult& default_result() {
    static const GenResult r = generate(GenConfig{});
    return r;
}

std::string dump(const Corpus& c) {
    std::string out;
    for (const auto& m : c.messages()) out += canonical_line(m) + "\n";
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool within(double measured, double planted, double rel) {
    return std::abs(measured - planted) <= rel * std::abs(planted);
}

}  // namespace

TEST_CASE("generation is deterministic per seed") {
    GenConfig c;
    c.users = 120;
    c.propaganda = 20;
    auto a = generate(c);
    auto b = generate(c);
    CHECK(dump(a.corpus) == dump(b.corpus));
    CHECK(planted_json(a.planted) == planted_json(b.planted));
    c.seed = 8;
    CHECK(dump(generate(c).corpus) != dump(a.corpus));
}

TEST_CASE("no propaganda accounts -> every label is user") {
    GenConfig c;
    c.users = 80;
    c.propaganda = 0;
    auto r = generate(c);
    CHECK(r.labels.size() > 0);
    CHECK(r.labels.with_label(Label::propaganda).empty());
    CHECK(r.planted.propaganda_messages == 0);
}

TEST_CASE("infeasible configs are rejected") {
    GenConfig c;
    c.users = 0;
    CHECK_THROWS_AS(generate(c), Error);
    c = GenConfig{};
    c.effectiveness = 1.0;
    CHECK_THROWS_AS(generate(c), Error);
    c = GenConfig{};
    c.propaganda_channels_min = 9;
    c.propaganda_channels_max = 9;
    CHECK_THROWS_AS(generate(c), Error);
    c = GenConfig{};
    c.deletion_user = 1.5;
    try {
        generate(c);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::usage);
    }
}

TEST_CASE("measured cohort statistics match the planted ones within 5%") {
    const auto& r = default_result();
    const auto& p = r.planted;
    auto prop = r.labels.with_label(Label::propaganda);
    auto users = r.labels.with_label(Label::user);

    auto rows = account_stats(r.corpus, prop);
    REQUIRE(rows.size() == prop.size());
    std::vector<double> life;
    double channels = 0;
    for (const auto& s : rows) {
        life.push_back(s.lifespan_hours);
        channels += static_cast<double>(s.channels);
    }
    CHECK(within(median(life), p.propaganda_lifespan_median_hours, 0.05));
    CHECK(within(channels / static_cast<double>(rows.size()), p.propaganda_channels_mean, 0.05));
    CHECK(p.propaganda_lifespan_median_hours < 24.0);

    auto pe = effectiveness(r.corpus, prop);
    auto ue = effectiveness(r.corpus, users);
    CHECK(within(pe.mean, p.propaganda_effectiveness, 0.05));
    CHECK(within(ue.mean, p.user_effectiveness, 0.05));
    CHECK(within(pe.mean, GenConfig{}.effectiveness, 0.05));
    CHECK(within(ue.mean, GenConfig{}.effectiveness, 0.05));

    // reuse: share of propaganda messages whose text already appeared in an earlier one
    std::set<std::string> seen;
    std::size_t reused = 0, total = 0;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < r.corpus.size(); ++i) {
        const auto& m = r.corpus.at(i);
        if (m.account_id && prop.contains(*m.account_id)) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return r.corpus.at(a).timestamp < r.corpus.at(b).timestamp; });
    for (auto i : order) {
        ++total;
        reused += !seen.insert(r.corpus.at(i).text).second;
    }
    CHECK(total == p.propaganda_messages);
    CHECK(within(static_cast<double>(reused) / static_cast<double>(total), p.reuse_rate, 0.05));
    CHECK(within(p.reuse_rate, GenConfig{}.reuse_rate, 0.05));
}

TEST_CASE("every propaganda message replies to a user message of its topic") {
    const auto& r = default_result();
    std::size_t n = 0;
    for (std::size_t i = 0; i < r.corpus.size(); ++i) {
        const auto& m = r.corpus.at(i);
        if (!m.account_id || r.labels.label_of(*m.account_id) != Label::propaganda) continue;
        ++n;
        auto t = r.corpus.trigger_of(i);
        REQUIRE(t.has_value());
        const auto& tm = r.corpus.at(*t);
        REQUIRE(tm.account_id.has_value());
        CHECK(r.labels.label_of(*tm.account_id) == Label::user);
        CHECK(r.topics.topic_of(m.key()) == r.topics.topic_of(tm.key()));
        CHECK(tm.timestamp <= m.timestamp);
    }
    CHECK(n == r.planted.propaganda_messages);
}

TEST_CASE("long user texts are unique and propaganda lengths stay in range") {
    const auto& r = default_result();
    const GenConfig c;
    std::set<std::string> long_user;
    for (const auto& m : r.corpus.messages()) {
        if (!m.account_id) continue;
        auto len = text::scalar_count(m.text);
        if (r.labels.label_of(*m.account_id) == Label::user) {
            if (len > 30) CHECK(long_user.insert(m.text).second);
        } else {
            CHECK(len <= c.propaganda_len_max + 40);
        }
    }
    CHECK(long_user.size() > 100);
}

TEST_CASE("deletion diff recovers the planted ratios exactly") {
    const auto& r = default_result();
    const auto& p = r.planted;
    std::size_t dp = 0, du = 0, np = 0, nu = 0;
    for (const auto& m : r.corpus.messages()) {
        if (!m.account_id) continue;
        bool prop = r.labels.label_of(*m.account_id) == Label::propaganda;
        (prop ? np : nu) += 1;
        if (m.deleted) (prop ? dp : du) += 1;
    }
    CHECK(dp == p.deleted_propaganda);
    CHECK(du == p.deleted_user);
    CHECK(static_cast<double>(dp) / static_cast<double>(np) == doctest::Approx(p.propaganda_deletion_ratio));
    CHECK(static_cast<double>(du) / static_cast<double>(nu) == doctest::Approx(p.user_deletion_ratio));
    CHECK(p.propaganda_deletion_ratio == doctest::Approx(0.8).epsilon(0.01));
    CHECK(p.user_deletion_ratio == doctest::Approx(0.1).epsilon(0.01));
    // the historical feed is exactly the non-deleted part of the realtime feed
    CHECK(r.historical.size() + dp + du == r.realtime.size());
}

TEST_CASE("augmenting from one seed per planted component recovers the propaganda set") {
    const auto& r = default_result();
    REQUIRE(!r.planted.components.empty());
    LabelSet seeds;
    for (const auto& comp : r.planted.components) seeds.add(comp.front(), {Label::propaganda, Provenance::seed, 0});
    auto out = augment_labels(r.corpus, seeds);
    CHECK(out.labels.with_label(Label::propaganda) == r.labels.with_label(Label::propaganda));
}

TEST_CASE("event topics start on their planned day") {
    const auto& r = default_result();
    auto tl = topic_timeline(r.corpus, r.topics);
    auto lon = topic_longevity(tl);
    std::size_t events = 0;
    for (const auto& tp : r.planted.topics) {
        if (tp.kind != TopicKind::event) continue;
        ++events;
        REQUIRE(lon.contains(tp.name));
        REQUIRE(lon[tp.name].first_day.has_value());
        CHECK(*lon[tp.name].first_day == tp.first_day);
        CHECK(*lon[tp.name].last_day <= tp.end_day);  // replies may trail past midnight
    }
    CHECK(events == GenConfig{}.event_topics);
    CHECK(!r.planted.short_topic.empty());
    CHECK(!r.planted.unseen_topics.empty());
}

TEST_CASE("second network shares vocabularies but not accounts or channels") {
    GenConfig c;
    c.users = 120;
    c.propaganda = 20;
    auto c2 = second_network(c);
    CHECK(c2.vocab_seed == c.vocab_seed);
    CHECK(c2.seed != c.seed);
    CHECK(c2.separability < c.separability);
    auto a = generate(c);
    auto b = generate(c2);
    for (const auto& ch : b.corpus.channels()) CHECK(ch.rfind(c2.channel_prefix, 0) == 0);
    for (const auto& [id, e] : b.labels.entries()) CHECK(a.labels.find(id) == nullptr);
}
