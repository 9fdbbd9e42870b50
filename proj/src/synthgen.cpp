#include "propwatch/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <nlohmann/json.hpp>
#include <set>

#include "propwatch/error.hpp"
#include "propwatch/random.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

namespace {

constexpr std::int64_t kHour = 3600;
constexpr std::int64_t kDay = 86400;

// Disjoint syllable inventories per register, so the styles differ at the character level.
const std::vector<std::string> kChatSyllables[2] = {
    {"ba", "be", "bo", "la", "le", "lu", "ma", "me", "mu", "na", "no", "nu", "ya", "yo"},
    {"ба", "бе", "бо", "ла", "ле", "лу", "ма", "ме", "му", "на", "но", "ну", "я", "ё"}};
const std::vector<std::string> kAgendaSyllables[2] = {
    {"za", "zo", "vi", "vo", "dy", "do", "gu", "go", "ra", "ro", "ky", "ka", "ty", "tu"},
    {"за", "зо", "ви", "во", "ды", "до", "гу", "го", "ра", "ро", "кы", "ка", "ты", "ту"}};
const std::vector<std::string> kTopicSyllables[2] = {
    {"pi", "ke", "si", "fi", "te", "di", "ri", "ko", "po", "so", "to", "fo", "ki", "ti", "mi", "li", "ni", "pe",
     "se", "fe"},
    {"пи", "ке", "си", "фи", "те", "ди", "ри", "ко", "по", "со", "то", "фо", "ки", "ти", "ми", "ли", "ни", "пе",
     "се", "фе"}};
const std::vector<std::string> kEmoji = {"😂", "👍", "🔥", "🙏", "😡"};
const std::vector<std::string> kGivenNames = {"james", "john",  "robert",    "michael", "william",
                                               "david", "mary",  "patricia",  "jennifer", "linda",
                                               "susan", "sarah", "elizabeth", "thomas",  "charles"};
const std::vector<std::string> kSurnames = {"smith", "johnson", "williams", "brown",  "jones",
                                             "miller", "davis",  "wilson",   "taylor", "moore",
                                             "martin", "clark",  "walker",   "young",  "harris"};
const std::vector<std::string> kDictWords = {"freedom", "truth", "patriot", "world",  "people",
                                             "peace",   "nation", "victory", "justice", "future"};

enum class Cohort { owner, user, propaganda };

struct Vocab {
    std::vector<std::string> chat, agenda;
    std::vector<std::vector<std::string>> topic, hot;  // [topic]
};

// Vocabularies for both languages, drawn only from vocab_seed so networks can share them.
struct Vocabulary {
    Vocab lang[2];

    Vocabulary(std::uint64_t seed, std::size_t topics, std::size_t topic_vocab, std::size_t hot_words) {
        Rng r(seed);
        std::set<std::string> used;
        auto word = [&](const std::vector<std::string>& syl) {
            for (;;) {
                std::string w;
                int n = static_cast<int>(r.between(2, 3));
                for (int i = 0; i < n; ++i) w += r.pick(syl);
                if (used.insert(w).second) return w;
            }
        };
        auto fill = [&](std::vector<std::string>& v, std::size_t n, const std::vector<std::string>& syl) {
            for (std::size_t i = 0; i < n; ++i) v.push_back(word(syl));
        };
        for (int l = 0; l < 2; ++l) {
            fill(lang[l].chat, 150, kChatSyllables[l]);
            fill(lang[l].agenda, 150, kAgendaSyllables[l]);
        }
        for (std::size_t t = 0; t < topics; ++t)
            for (int l = 0; l < 2; ++l) {
                lang[l].topic.emplace_back();
                lang[l].hot.emplace_back();
                fill(lang[l].topic.back(), topic_vocab, kTopicSyllables[l]);
                fill(lang[l].hot.back(), hot_words, kTopicSyllables[l]);
            }
    }
};

struct GenMsg {
    std::size_t channel = 0;
    std::int64_t t = 0;  // seconds from start
    int account = -1;    // -1 = channel owner
    Cohort cohort = Cohort::owner;
    int topic = -1;
    long reply_to = -1;  // index into the message list
    std::string text;
    bool deleted = false;
    std::int64_t id = 0;
};

struct GenAccount {
    std::string id;
    bool propaganda = false;
    std::vector<std::size_t> channels;
    std::int64_t from = 0, to = 0;  // planned activity window
    std::optional<std::string> username, first_name, last_name;
};

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

class Generator {
public:
    explicit Generator(const GenConfig& c)
        : c_(c),
          rng_(c.seed),
          vocab_(c.vocab_seed, c.persistent_topics + c.event_topics + (c.short_topic ? 1 : 0), c.topic_vocab,
                 c.hot_words) {}

    GenResult run();

private:
    const GenConfig& c_;
    Rng rng_;
    Vocabulary vocab_;
    std::vector<TopicPlan> topics_;
    int short_topic_ = -1;
    std::vector<GenAccount> accounts_;
    std::vector<std::vector<std::size_t>> channel_users_;
    std::vector<GenMsg> msgs_;
    std::set<std::string> unique_texts_;
    std::set<std::string> ids_;
    std::int64_t horizon_ = 0;

    int lang_of(std::size_t channel) const { return static_cast<int>(channel % 2); }

    void plan_topics();
    int pick_topic(std::int64_t t);
    std::string account_id();
    void make_accounts();
    std::string compose(int lang, int topic, Cohort style, std::size_t target, bool hot);
    std::string user_text(int lang, int topic, bool hot);
    std::string decorate(std::string s, bool link);
    std::int64_t latency();
    std::size_t author_for(std::size_t channel, std::int64_t t);
    std::size_t add(GenMsg m) {
        msgs_.push_back(std::move(m));
        return msgs_.size() - 1;
    }
};

void Generator::plan_topics() {
    std::size_t k = 0;
    for (std::size_t i = 0; i < c_.persistent_topics; ++i, ++k)
        topics_.push_back({"persistent-" + std::to_string(i + 1), TopicKind::persistent, 0, c_.days, 1.0});
    if (c_.short_topic) {
        short_topic_ = static_cast<int>(k++);
        topics_.push_back({"short-slogans", TopicKind::short_slogans, 0, c_.days, 1.0});
    }
    for (std::size_t i = 0; i < c_.event_topics; ++i, ++k) {
        int event_day = static_cast<int>((static_cast<double>(i) + 0.5) * c_.days / static_cast<double>(c_.event_topics));
        int first = std::min(c_.days - 1, event_day + c_.event_onset_lag_days);
        topics_.push_back({"event-" + std::to_string(i + 1), TopicKind::event, first,
                           std::min(c_.days, first + c_.event_duration_days), c_.event_weight});
    }
}

int Generator::pick_topic(std::int64_t t) {
    int day = static_cast<int>(t / kDay);
    double total = 0;
    for (const auto& tp : topics_)
        if (day >= tp.first_day && day < tp.end_day) total += tp.weight;
    double x = rng_.uniform() * total;
    int last = -1;
    for (std::size_t i = 0; i < topics_.size(); ++i) {
        const auto& tp = topics_[i];
        if (day < tp.first_day || day >= tp.end_day) continue;
        last = static_cast<int>(i);
        if ((x -= tp.weight) < 0) return last;
    }
    return last;
}

std::string Generator::account_id() {
    for (;;) {
        auto id = std::to_string(rng_.between(100000000, 999999999));
        if (ids_.insert(id).second) return id;
    }
}

std::string Generator::compose(int lang, int topic, Cohort style, std::size_t target, bool hot) {
    const auto& v = vocab_.lang[lang];
    const double sep = c_.separability;
    std::vector<std::string> words;
    std::size_t len = 0;
    while (len < target) {
        std::string w;
        double x = rng_.uniform();
        if (style == Cohort::propaganda) {
            if (x < 0.35) w = rng_.pick(v.topic[static_cast<std::size_t>(topic)]);
            else if (rng_.chance(0.5 + 0.5 * sep)) w = rng_.pick(v.agenda);
            else w = rng_.pick(v.chat);
        } else if (x < 0.4 && topic >= 0) {
            // Hot messages talk about the topic only in its hot words.
            const auto& pool = hot ? v.hot : v.topic;
            w = rng_.pick(pool[static_cast<std::size_t>(topic)]);
        } else if (rng_.chance(0.3 * (1.0 - sep))) {
            w = rng_.pick(v.agenda);
        } else {
            w = rng_.pick(v.chat);
        }
        len += text::scalar_count(w) + (words.empty() ? 0 : 1);
        words.push_back(std::move(w));
    }
    // Every message carries at least one word of its register; hot messages at least one hot word.
    const auto& marker_pool = style == Cohort::propaganda ? v.agenda : v.chat;
    auto has = [&](const std::vector<std::string>& pool) {
        return std::any_of(words.begin(), words.end(),
                           [&](const auto& w) { return std::find(pool.begin(), pool.end(), w) != pool.end(); });
    };
    if (!has(marker_pool)) words.insert(words.begin() + static_cast<long>(rng_.below(words.size() + 1)), rng_.pick(marker_pool));
    if (hot && topic >= 0 && !has(v.hot[static_cast<std::size_t>(topic)]))
        words.insert(words.begin() + static_cast<long>(rng_.below(words.size() + 1)),
                     rng_.pick(v.hot[static_cast<std::size_t>(topic)]));
    std::string s;
    for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
    return s;
}

std::string Generator::decorate(std::string s, bool link) {
    if (link && rng_.chance(0.2))
        s += " https://" + rng_.pick(vocab_.lang[0].agenda) + ".example/" + rng_.pick(vocab_.lang[0].chat);
    double x = rng_.uniform();
    if (x < 0.15) s += "?";
    else if (x < 0.25) s += "!";
    if (rng_.chance(0.1)) s += " " + rng_.pick(kEmoji);
    return s;
}

// Short messages stay at or under 30 characters after decoration; long ones are unique.
std::string Generator::user_text(int lang, int topic, bool hot) {
    if (rng_.chance(c_.user_short_fraction)) {
        for (;;) {
            auto core = compose(lang, topic, Cohort::user, rng_.between(3, 20), hot);
            if (text::scalar_count(core) <= 27) return decorate(core, false);
        }
    }
    for (;;) {
        auto target = static_cast<std::size_t>(rng_.between(static_cast<std::int64_t>(c_.user_long_min),
                                                             static_cast<std::int64_t>(c_.user_long_max)));
        auto s = decorate(compose(lang, topic, Cohort::user, target, hot), false);
        if (unique_texts_.insert(s).second) return s;
    }
}

std::int64_t Generator::latency() {
    double mean = c_.latency_mean_minutes * 60.0;
    double u = rng_.uniform();
    auto s = static_cast<std::int64_t>(-mean * std::log(1.0 - u));
    return std::clamp<std::int64_t>(s, 30, 6 * kHour);
}

std::size_t Generator::author_for(std::size_t channel, std::int64_t t) {
    const auto& pool = channel_users_[channel];
    std::vector<std::size_t> covering;
    for (auto u : pool)
        if (accounts_[u].from <= t && t <= accounts_[u].to) covering.push_back(u);
    return covering.empty() ? rng_.pick(pool) : rng_.pick(covering);
}

void Generator::make_accounts() {
    const std::int64_t lo = 7 * kHour, hi = horizon_ - 7 * kHour;
    channel_users_.assign(c_.channels, {});
    for (std::size_t i = 0; i < c_.users; ++i) {
        GenAccount a;
        a.id = account_id();
        a.channels.push_back(i % c_.channels);
        if (c_.channels > 1 && rng_.chance(c_.user_second_channel)) {
            auto other = (i + 1 + rng_.below(c_.channels - 1)) % c_.channels;
            a.channels.push_back(other);
        }
        double life = c_.user_lifespan_median_days * kDay * std::exp(c_.user_lifespan_sigma * rng_.normal());
        auto span = std::clamp<std::int64_t>(static_cast<std::int64_t>(life), kHour, hi - lo);
        a.from = lo + static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(hi - lo - span) + 1));
        a.to = a.from + span;
        if (rng_.chance(0.75)) {
            std::string u;
            int n = static_cast<int>(rng_.between(3, 5));
            for (int k = 0; k < n; ++k) u += rng_.pick(kChatSyllables[0]);
            a.username = u;
        }
        std::string first;
        for (int k = 0; k < 2; ++k) first += rng_.pick(kChatSyllables[0]);
        a.first_name = capitalize(first);
        for (auto ch : a.channels) channel_users_[ch].push_back(accounts_.size());
        accounts_.push_back(std::move(a));
    }
    for (std::size_t i = 0; i < c_.propaganda; ++i) {
        GenAccount a;
        a.id = account_id();
        a.propaganda = true;
        auto first = rng_.pick(kGivenNames), last = rng_.pick(kSurnames);
        a.first_name = capitalize(first);
        a.last_name = capitalize(last);
        double x = rng_.uniform();
        auto digits = std::to_string(rng_.between(1, 9999));
        if (x < 0.6) {
            static const char* seps[] = {"", "_", "."};
            a.username = first + seps[rng_.below(3)] + last + digits;
        } else if (x < 0.9) {
            a.username = rng_.pick(kDictWords) + digits;
        }
        accounts_.push_back(std::move(a));
    }
}

GenResult Generator::run() {
    horizon_ = static_cast<std::int64_t>(c_.days) * kDay;
    plan_topics();
    make_accounts();

    // Channel anchors bracket every feed so deletion windows cover the whole period.
    for (std::size_t ch = 0; ch < c_.channels; ++ch) {
        for (std::int64_t t : {std::int64_t{60}, horizon_ - 60}) {
            GenMsg m;
            m.channel = ch;
            m.t = t;
            m.text = compose(lang_of(ch), -1, Cohort::user, 40, false);
            add(std::move(m));
        }
    }

    // Base user messages.
    for (std::size_t u = 0; u < c_.users; ++u) {
        auto& a = accounts_[u];
        std::size_t n = 1;
        double p = 1.0 / std::max(1.0, c_.user_messages_mean);
        while (!rng_.chance(p) && n < 200) ++n;
        for (std::size_t k = 0; k < n; ++k) {
            std::int64_t t = k == 0 ? a.from : k == 1 ? a.to
                                                      : a.from + static_cast<std::int64_t>(rng_.below(
                                                                      static_cast<std::uint64_t>(a.to - a.from) + 1));
            GenMsg m;
            m.channel = rng_.pick(a.channels);
            m.t = t;
            m.account = static_cast<int>(u);
            m.cohort = Cohort::user;
            m.topic = pick_topic(t);
            m.text = user_text(lang_of(m.channel), m.topic, rng_.chance(c_.hot_word_rate));
            add(std::move(m));
        }
    }

    // Propaganda replies, each answering a fresh hot-word trigger.
    PlantedStats st;
    std::vector<double> lifespans;
    double channel_sum = 0;
    std::vector<std::size_t> prop_msgs;
    const std::int64_t lo = 7 * kHour, hi = horizon_ - 7 * kHour;
    for (std::size_t i = 0; i < c_.propaganda; ++i) {
        auto idx = c_.users + i;
        auto& a = accounts_[idx];
        double life = c_.propaganda_lifespan_median_hours * kHour * std::exp(c_.propaganda_lifespan_sigma * rng_.normal());
        auto span = std::clamp<std::int64_t>(static_cast<std::int64_t>(life), 60, hi - lo);
        a.from = lo + static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(hi - lo - span) + 1));
        a.to = a.from + span;
        lifespans.push_back(static_cast<double>(span) / kHour);
        std::vector<std::size_t> chans(c_.channels);
        std::iota(chans.begin(), chans.end(), 0);
        rng_.shuffle(chans);
        auto nc = static_cast<std::size_t>(rng_.between(static_cast<std::int64_t>(c_.propaganda_channels_min),
                                                        static_cast<std::int64_t>(c_.propaganda_channels_max)));
        chans.resize(nc);
        a.channels = chans;
        channel_sum += static_cast<double>(nc);
        auto n = static_cast<std::size_t>(rng_.between(static_cast<std::int64_t>(std::max(c_.propaganda_messages_min, nc)),
                                                       static_cast<std::int64_t>(std::max(c_.propaganda_messages_max, nc))));
        std::vector<std::int64_t> times{a.from, a.to};
        while (times.size() < n)
            times.push_back(a.from + static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(span) + 1)));
        std::sort(times.begin(), times.end());
        std::vector<std::size_t> order(n);
        for (std::size_t k = 0; k < n; ++k) order[k] = k < nc ? chans[k] : rng_.pick(chans);
        rng_.shuffle(order);
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t ch = order[k];
            GenMsg trig;
            trig.channel = ch;
            trig.t = times[k] - latency();
            int topic = pick_topic(std::max<std::int64_t>(trig.t, 0));
            trig.account = static_cast<int>(author_for(ch, trig.t));
            trig.cohort = Cohort::user;
            trig.topic = topic;
            trig.text = user_text(lang_of(ch), topic, true);
            auto ti = add(std::move(trig));
            GenMsg m;
            m.channel = ch;
            m.t = times[k];
            m.account = static_cast<int>(idx);
            m.cohort = Cohort::propaganda;
            m.topic = topic;
            m.reply_to = static_cast<long>(ti);
            prop_msgs.push_back(add(std::move(m)));
        }
    }

    // Propaganda texts in time order; an exact share repeats an earlier text of the same topic.
    std::sort(prop_msgs.begin(), prop_msgs.end(), [&](auto a, auto b) {
        return std::tie(msgs_[a].t, a) < std::tie(msgs_[b].t, b);
    });
    {
        std::vector<std::size_t> flags(prop_msgs.size());
        std::iota(flags.begin(), flags.end(), 0);
        rng_.shuffle(flags);
        std::vector<bool> reuse(prop_msgs.size(), false);
        auto want = static_cast<std::size_t>(std::llround(c_.reuse_rate * static_cast<double>(prop_msgs.size())));
        for (std::size_t k = 0; k < want && k < flags.size(); ++k) reuse[flags[k]] = true;
        std::map<std::pair<int, int>, std::vector<std::string>> used;  // (topic, lang) -> texts
        std::size_t distinct = 0, reused = 0;
        for (std::size_t k = 0; k < prop_msgs.size(); ++k) {
            auto& m = msgs_[prop_msgs[k]];
            int lang = lang_of(m.channel);
            auto& pool = used[{m.topic, lang}];
            bool can_fresh = distinct < c_.pool_size;
            if (!pool.empty() && (reuse[k] || !can_fresh)) {
                m.text = rng_.pick(pool);
                ++reused;
                continue;
            }
            std::string s;
            for (;;) {
                if (m.topic == short_topic_) {
                    // Same length process as short user messages.
                    auto core = compose(lang, m.topic, Cohort::propaganda, static_cast<std::size_t>(rng_.between(3, 20)), false);
                    auto len = text::scalar_count(core);
                    if (len < c_.slogan_len_min || len + 3 > c_.slogan_len_max) continue;
                    s = decorate(core, false);
                } else {
                    auto target = static_cast<std::size_t>(rng_.between(static_cast<std::int64_t>(c_.propaganda_len_min),
                                                                        static_cast<std::int64_t>(c_.propaganda_len_max)));
                    s = decorate(compose(lang, m.topic, Cohort::propaganda, target, false), true);
                }
                if (unique_texts_.insert(s).second) break;
            }
            m.text = s;
            pool.push_back(s);
            ++distinct;
        }
        st.reuse_rate = prop_msgs.empty() ? 0.0 : static_cast<double>(reused) / static_cast<double>(prop_msgs.size());
    }

    // User replies: first to propaganda, then to user messages, sized to hit the planted
    // replies-per-message rate for both cohorts.
    const double e = c_.effectiveness;
    auto reply_from_user = [&](std::size_t target) {
        const auto& tm = msgs_[target];
        GenMsg r;
        r.channel = tm.channel;
        r.t = std::min(tm.t + latency(), horizon_ - kHour);
        r.account = static_cast<int>(author_for(r.channel, r.t));
        r.cohort = Cohort::user;
        r.topic = tm.topic;
        r.reply_to = static_cast<long>(target);
        r.text = user_text(lang_of(r.channel), r.topic, rng_.chance(c_.hot_word_rate));
        return add(std::move(r));
    };
    if (!prop_msgs.empty()) {
        auto r_up = static_cast<std::size_t>(std::llround(e * static_cast<double>(prop_msgs.size())));
        for (std::size_t k = 0; k < r_up; ++k) reply_from_user(rng_.pick(prop_msgs));
    }
    std::vector<std::size_t> user_msgs;
    for (std::size_t i = 0; i < msgs_.size(); ++i)
        if (msgs_[i].cohort == Cohort::user) user_msgs.push_back(i);
    {
        double P = static_cast<double>(prop_msgs.size());
        double need = (e * static_cast<double>(user_msgs.size()) - P) / (1.0 - e);
        auto r_uu = need > 0 ? static_cast<std::size_t>(std::llround(need)) : 0;
        for (std::size_t k = 0; k < r_uu; ++k) user_msgs.push_back(reply_from_user(rng_.pick(user_msgs)));
    }

    // Per-channel ids in chronological order.
    {
        std::vector<std::size_t> order(msgs_.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) {
            return std::tie(msgs_[a].channel, msgs_[a].t, a) < std::tie(msgs_[b].channel, msgs_[b].t, b);
        });
        std::vector<std::int64_t> next(c_.channels, 1);
        for (auto i : order) msgs_[i].id = next[msgs_[i].channel]++;
    }

    // Exact deletion counts per cohort.
    auto delete_share = [&](std::vector<std::size_t> pool, double rate) {
        rng_.shuffle(pool);
        auto n = static_cast<std::size_t>(std::llround(rate * static_cast<double>(pool.size())));
        for (std::size_t k = 0; k < n; ++k) msgs_[pool[k]].deleted = true;
        return n;
    };
    st.deleted_propaganda = delete_share(prop_msgs, c_.deletion_propaganda);
    st.deleted_user = delete_share(user_msgs, c_.deletion_user);

    GenResult res;
    auto channel_name = [&](std::size_t ch) { return c_.channel_prefix + std::to_string(ch + 1); };
    const auto start = parse_iso8601(c_.start);
    for (const auto& m : msgs_) {
        Message out;
        out.channel_id = channel_name(m.channel);
        out.message_id = m.id;
        out.timestamp = start + std::chrono::seconds{m.t};
        out.text = m.text;
        if (m.reply_to >= 0) out.reply_to = msgs_[static_cast<std::size_t>(m.reply_to)].id;
        if (m.account >= 0) {
            const auto& a = accounts_[static_cast<std::size_t>(m.account)];
            out.account_id = a.id;
            out.first_name = a.first_name;
            out.last_name = a.last_name;
            out.username = a.username;
        }
        out.source = Source::realtime;
        res.realtime.push_back(out);
        if (!m.deleted) {
            out.source = Source::historical;
            res.historical.push_back(out);
        }
        if (m.topic >= 0)
            res.topics.entries[{out.channel_id, out.message_id}] =
                TopicEntry{topics_[static_cast<std::size_t>(m.topic)].name, TopicSource::planted};
    }
    auto merged = Corpus::merge({res.historical, res.realtime});
    res.corpus = merged.with_deleted(diff_deleted(merged).deleted);

    for (const auto& a : accounts_)
        res.labels.add(a.id, LabelEntry{a.propaganda ? Label::propaganda : Label::user, Provenance::seed, 0});

    // Planted statistics.
    std::vector<double> ulife;
    for (std::size_t u = 0; u < c_.users; ++u)
        ulife.push_back(static_cast<double>(accounts_[u].to - accounts_[u].from) / kHour);
    auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::sort(v.begin(), v.end());
        auto n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    st.propaganda_messages = prop_msgs.size();
    st.user_messages = user_msgs.size();
    st.owner_messages = 2 * c_.channels;
    st.propaganda_deletion_ratio =
        prop_msgs.empty() ? 0.0 : static_cast<double>(st.deleted_propaganda) / static_cast<double>(prop_msgs.size());
    st.user_deletion_ratio =
        user_msgs.empty() ? 0.0 : static_cast<double>(st.deleted_user) / static_cast<double>(user_msgs.size());
    st.propaganda_lifespan_median_hours = median(lifespans);
    st.user_lifespan_median_hours = median(ulife);
    st.propaganda_channels_mean = c_.propaganda ? channel_sum / static_cast<double>(c_.propaganda) : 0.0;
    {
        std::vector<std::size_t> received(msgs_.size(), 0);
        for (const auto& m : msgs_)
            if (m.reply_to >= 0) ++received[static_cast<std::size_t>(m.reply_to)];
        auto rate = [&](const std::vector<std::size_t>& ids) {
            std::size_t s = 0;
            for (auto i : ids) s += received[i];
            return ids.empty() ? 0.0 : static_cast<double>(s) / static_cast<double>(ids.size());
        };
        st.propaganda_effectiveness = rate(prop_msgs);
        st.user_effectiveness = rate(user_msgs);
    }
    st.topics = topics_;
    if (short_topic_ >= 0) st.short_topic = topics_[static_cast<std::size_t>(short_topic_)].name;
    for (const auto& tp : topics_)
        if (tp.first_day >= c_.split_day) st.unseen_topics.push_back(tp.name);

    // Coordination components over shared long texts (union-find on accounts).
    {
        std::vector<std::size_t> parent(accounts_.size());
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](std::size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        std::map<std::string, std::size_t> first_author;
        for (auto i : prop_msgs) {
            const auto& m = msgs_[i];
            if (text::scalar_count(m.text) <= 30) continue;
            auto a = static_cast<std::size_t>(m.account);
            auto [it, fresh] = first_author.emplace(m.text, a);
            if (!fresh) parent[find(a)] = find(it->second);
        }
        std::map<std::size_t, std::vector<std::string>> groups;
        for (std::size_t i = c_.users; i < accounts_.size(); ++i) groups[find(i)].push_back(accounts_[i].id);
        for (auto& [root, ids] : groups) {
            std::sort(ids.begin(), ids.end());
            st.components.push_back(std::move(ids));
        }
        std::sort(st.components.begin(), st.components.end());
    }
    res.planted = std::move(st);
    return res;
}

}  // namespace

void GenConfig::validate() const {
    auto bad = [](const std::string& what) { fail(ErrorKind::usage, "invalid generator config: " + what); };
    auto rate = [&](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) bad(std::string(name) + " must be in [0,1]");
    };
    if (days < 2) bad("days must be at least 2");
    if (channels == 0) bad("channels must be positive");
    if (propaganda > 0 && users == 0) bad("propaganda accounts need users to reply to");
    if (propaganda_channels_min == 0 || propaganda_channels_min > propaganda_channels_max)
        bad("propaganda channel range is empty");
    if (propaganda > 0 && propaganda_channels_min > channels) bad("fewer channels than propaganda accounts must join");
    if (propaganda_messages_min < 2 || propaganda_messages_min > propaganda_messages_max)
        bad("propaganda message range must start at 2 or more");
    if (propaganda_len_min < 10 || propaganda_len_min > propaganda_len_max) bad("propaganda length range");
    if (slogan_len_min < 3 || slogan_len_min + 3 > slogan_len_max || slogan_len_max > 30) bad("slogan length range");
    if (user_long_min <= 30 || user_long_min > user_long_max) bad("user long-message range");
    if (user_messages_mean < 1.0) bad("user_messages_mean must be at least 1");
    if (!(user_lifespan_median_days > 0) || !(propaganda_lifespan_median_hours > 0)) bad("lifespans must be positive");
    if (!(latency_mean_minutes > 0)) bad("latency must be positive");
    if (persistent_topics + event_topics == 0 && !short_topic) bad("at least one topic is required");
    if (persistent_topics == 0 && !short_topic) bad("at least one persistent topic is required");
    if (topic_vocab == 0) bad("topic_vocab must be positive");
    if (hot_words == 0) bad("hot_words must be positive");
    rate(user_second_channel, "user_second_channel");
    rate(user_short_fraction, "user_short_fraction");
    rate(reuse_rate, "reuse_rate");
    rate(deletion_propaganda, "deletion_propaganda");
    rate(deletion_user, "deletion_user");
    rate(hot_word_rate, "hot_word_rate");
    rate(separability, "separability");
    if (!(effectiveness >= 0.0 && effectiveness < 1.0)) bad("effectiveness must be in [0,1)");
    parse_iso8601(start);
}

std::string_view to_string(TopicKind k) {
    switch (k) {
        case TopicKind::persistent: return "persistent";
        case TopicKind::event: return "event";
        case TopicKind::short_slogans: return "short";
    }
    return "persistent";
}

GenResult generate(const GenConfig& config) {
    config.validate();
    return Generator(config).run();
}

GenConfig second_network(const GenConfig& config) {
    GenConfig c = config;
    c.seed = config.seed * 1000003ULL + 17;
    c.channel_prefix = "net2-" + config.channel_prefix;
    c.separability = std::max(0.0, config.separability - 0.15);
    c.propaganda_len_max = std::max(c.propaganda_len_min, config.propaganda_len_max * 5 / 8);
    c.user_short_fraction = std::min(1.0, config.user_short_fraction + 0.1);
    return c;
}

std::string planted_json(const PlantedStats& p) {
    nlohmann::ordered_json topics = nlohmann::ordered_json::array();
    for (const auto& t : p.topics)
        topics.push_back({{"name", t.name},
                          {"kind", std::string(to_string(t.kind))},
                          {"first_day", t.first_day},
                          {"end_day", t.end_day},
                          {"weight", t.weight}});
    nlohmann::ordered_json j = {{"propaganda_messages", p.propaganda_messages},
                                {"user_messages", p.user_messages},
                                {"owner_messages", p.owner_messages},
                                {"deleted_propaganda", p.deleted_propaganda},
                                {"deleted_user", p.deleted_user},
                                {"propaganda_deletion_ratio", p.propaganda_deletion_ratio},
                                {"user_deletion_ratio", p.user_deletion_ratio},
                                {"propaganda_lifespan_median_hours", p.propaganda_lifespan_median_hours},
                                {"user_lifespan_median_hours", p.user_lifespan_median_hours},
                                {"propaganda_channels_mean", p.propaganda_channels_mean},
                                {"reuse_rate", p.reuse_rate},
                                {"propaganda_effectiveness", p.propaganda_effectiveness},
                                {"user_effectiveness", p.user_effectiveness},
                                {"short_topic", p.short_topic},
                                {"unseen_topics", p.unseen_topics},
                                {"topics", topics},
                                {"components", p.components}};
    return j.dump(2) + "\n";
}

}  // namespace propwatch
