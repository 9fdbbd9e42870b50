#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "cli_internal.hpp"
#include "propwatch/coordination.hpp"
#include "propwatch/corpus.hpp"
#include "propwatch/data.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/error.hpp"
#include "propwatch/evaluation.hpp"
#include "propwatch/features.hpp"
#include "propwatch/labeling.hpp"
#include "propwatch/modbot.hpp"
#include "propwatch/models.hpp"
#include "propwatch/plot.hpp"
#include "propwatch/synthgen.hpp"
#include "propwatch/text.hpp"
#include "propwatch/timeutil.hpp"
#include "propwatch/topics.hpp"

namespace propwatch::cli {

namespace {

using ojson = nlohmann::ordered_json;

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

fs::path require_out(const Options& o, const char* what) {
    if (o.out.empty()) fail(ErrorKind::usage, std::string("--out is required (") + what + ")");
    return o.out;
}

/// `dir/name.json` -> `dir/name<suffix>`.
fs::path sibling(const fs::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

Corpus load_corpus(const std::string& path, Run& run) {
    if (path.empty()) fail(ErrorKind::usage, "--corpus is required");
    run.input(path);
    Corpus c = Corpus::merge({read_canonical(path)});
    run.set_corpus_hash(corpus_hash(c));
    return c;
}

LabelSet load_labels(const std::string& path, Run& run) {
    if (path.empty()) fail(ErrorKind::usage, "--labels is required");
    run.input(path);
    return LabelSet::read(path);
}

EmbeddingStore load_embeddings(const std::string& path, Run& run) {
    run.input(path);
    return load_store(path);
}

void plot(const Options& o, Run& run, const fs::path& path, const std::string& svg) {
    if (o.plots) run.write(path, svg);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson deletion_json(const DeletionReport& rep) {
    ojson per = ojson::object(), win = ojson::object();
    for (const auto& [ch, n] : rep.deleted_per_channel) per[ch] = n;
    for (const auto& [ch, w] : rep.windows) win[ch] = {{"begin", format_iso8601(w.begin)}, {"end", format_iso8601(w.end)}};
    return {{"total", rep.total()}, {"per_channel", per}, {"windows", win}};
}

ojson moderation_row_json(const ModerationRow& r) {
    return {{"channel", r.channel},
            {"propaganda_messages", r.propaganda_messages},
            {"deleted_propaganda", r.deleted_propaganda},
            {"user_messages", r.user_messages},
            {"deleted_user", r.deleted_user},
            {"total_messages", r.total_messages},
            {"deleted_total", r.deleted_total},
            {"propaganda_ratio", opt_json(r.propaganda_ratio)},
            {"user_ratio", opt_json(r.user_ratio)},
            {"total_ratio", opt_json(r.total_ratio)},
            {"precision", opt_json(r.precision)}};
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ------------------------------------------------------------ ingest

void ingest_impl(const Options& o, Run& run, bool diff, bool report) {
    if (o.exports.empty() && o.streams.empty()) fail(ErrorKind::usage, "need at least one --export or --stream");
    auto out = require_out(o, "corpus JSONL");
    std::vector<fs::path> exports(o.exports.begin(), o.exports.end()), streams(o.streams.begin(), o.streams.end());
    for (const auto& p : exports) run.input(p);
    for (const auto& p : streams) run.input(p);
    auto results = parse_files(exports, streams);

    ojson files = ojson::array();
    std::vector<std::vector<Message>> batches;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const auto& path = i < exports.size() ? exports[i] : streams[i - exports.size()];
        for (std::size_t k = 0; k < std::min<std::size_t>(r.malformed.size(), 5); ++k)
            spdlog::warn("{}: record {}: {}", path.string(), r.malformed[k].index, r.malformed[k].reason);
        files.push_back({{"path", path.generic_string()},
                         {"messages", r.messages.size()},
                         {"malformed", r.malformed.size()},
                         {"skipped_service", r.skipped_service},
                         {"order_violations", r.order_violations}});
        batches.push_back(r.messages);
    }
    MergeLog log;
    Corpus c = Corpus::merge(batches, &log);
    ojson summary = {{"messages", c.size()},
                     {"channels", c.channels().size()},
                     {"input_records", log.input_records},
                     {"duplicates", log.duplicates},
                     {"conflicts", log.conflicts.size()},
                     {"files", files}};
    for (const auto& k : log.conflicts)
        spdlog::debug("conflict {}: kept realtime text", k.key.str());

    std::optional<DeletionReport> rep;
    if (diff) {
        rep = diff_deleted(c);
        c = c.with_deleted(rep->deleted);
        summary["deleted"] = rep->total();
    }
    ensure_parent(out);
    write_canonical(c, out);
    run.produced(out);
    run.set_corpus_hash(corpus_hash(c));

    if (report && rep) {
        ojson j = deletion_json(*rep);
        if (!o.labels.empty()) {
            auto labels = load_labels(o.labels, run);
            auto base = moderator_baseline(c, labels);
            ojson rows = ojson::array();
            for (const auto& r : base.channels) rows.push_back(moderation_row_json(r));
            j["moderation"] = {{"channels", rows}, {"all", moderation_row_json(base.all)}};
        }
        run.write(sibling(out, ".deletions.json"), dump(j));
    }
    run.out() << dump(summary);
}

}  // namespace

void cmd_ingest(const Options& o, Run& run) { ingest_impl(o, run, o.diff, false); }
void cmd_diff(const Options& o, Run& run) { ingest_impl(o, run, true, true); }

// ------------------------------------------------------------ labels

void cmd_label_augment(const Options& o, Run& run) {
    auto out = require_out(o, "labels JSONL");
    auto corpus = load_corpus(o.corpus, run);
    run.input(o.seeds);
    auto seeds = LabelSet::read(o.seeds);
    AugmentOptions ao;
    ao.min_len = o.min_len;
    if (!o.exclude.empty()) {
        run.input(o.exclude);
        for (auto& id : read_lines(o.exclude)) ao.exclusions.insert(id);
    }
    auto res = augment_labels(corpus, seeds, ao);
    ensure_parent(out);
    res.labels.write(out);
    run.produced(out);
    std::string review;
    for (const auto& id : res.review) review += id + "\n";
    run.write(sibling(out, ".review.txt"), review);
    run.out() << dump({{"seeds", seeds.size()},
                       {"propaganda", res.labels.with_label(Label::propaganda).size()},
                       {"iterations", res.iterations()},
                       {"added_per_iteration", res.added_per_iteration},
                       {"pool_size", res.pool_size},
                       {"review", res.review.size()}});
}

// ------------------------------------------------------------ analyze

void cmd_analyze_graph(const Options& o, Run& run) {
    fs::path dir = require_out(o, "directory");
    auto corpus = load_corpus(o.corpus, run);
    auto labels = load_labels(o.labels, run);
    auto cohort = labels.with_label(parse_label(o.cohort));
    auto g = build_graph(corpus, cohort, o.graph_min_len);
    auto gr = g.graph(!o.unweighted);
    auto part = louvain(gr, o.seed);
    auto comp = components(gr);

    std::map<std::size_t, std::size_t> comm_size;
    for (auto c : part.community) ++comm_size[c];
    std::vector<std::pair<std::size_t, std::size_t>> sizes;  // (size, id)
    for (auto [id, n] : comm_size) sizes.push_back({n, id});
    std::sort(sizes.begin(), sizes.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });

    ojson members = ojson::array();
    for (std::size_t i = 0; i < g.accounts.size(); ++i)
        members.push_back({{"account_id", g.accounts[i]}, {"component", comp[i]}, {"community", part.community[i]}});
    ojson size_list = ojson::array();
    for (auto [n, id] : sizes) size_list.push_back(n);
    ojson j = {{"cohort", o.cohort},
               {"accounts", g.accounts.size()},
               {"edges", g.links.size()},
               {"weighted", !o.unweighted},
               {"components", std::set<std::size_t>(comp.begin(), comp.end()).size()},
               {"largest_component_fraction", largest_component_fraction(gr)},
               {"communities", part.communities()},
               {"modularity", part.modularity},
               {"level_modularity", part.level_modularity},
               {"community_sizes", size_list},
               {"members", members}};
    run.write(dir / ("edges_" + o.cohort + ".tsv"), edge_list(g));
    run.write(dir / ("graph_" + o.cohort + ".json"), dump(j));

    std::vector<std::string> names;
    std::vector<double> vals;
    for (std::size_t k = 0; k < std::min<std::size_t>(sizes.size(), 40); ++k) {
        names.push_back("c" + std::to_string(sizes[k].second));
        vals.push_back(static_cast<double>(sizes[k].first));
    }
    plot(o, run, dir / ("communities_" + o.cohort + ".svg"),
         bar_chart_svg("Community sizes (" + o.cohort + ")", names, vals));
    run.out() << dump({{"accounts", j["accounts"]},
                       {"edges", j["edges"]},
                       {"largest_component_fraction", j["largest_component_fraction"]},
                       {"communities", j["communities"]},
                       {"modularity", j["modularity"]}});
}

void cmd_analyze_stats(const Options& o, Run& run) {
    fs::path dir = require_out(o, "directory");
    auto corpus = load_corpus(o.corpus, run);
    auto labels = load_labels(o.labels, run);
    std::map<std::string, std::optional<std::string>> usernames;
    for (const auto& a : build_accounts(corpus)) usernames[a.account_id] = a.username;

    ojson cohorts = ojson::object();
    std::map<std::string, std::vector<double>> lifespans;
    for (auto label : {Label::propaganda, Label::user}) {
        std::string name(to_string(label));
        auto set = labels.with_label(label);
        auto rows = account_stats(corpus, set);
        run.write(dir / ("accounts_" + name + ".csv"), account_stats_csv(rows));

        std::vector<double> life;
        double channels = 0, length = 0, react = 0;
        std::size_t messages = 0, western = 0, dict = 0, hidden = 0;
        for (const auto& r : rows) {
            life.push_back(r.lifespan_hours);
            channels += static_cast<double>(r.channels);
            length += r.mean_length * static_cast<double>(r.messages);
            messages += r.messages;
            react += reactivity(corpus, r.account_id).fraction;
            auto pat = username_pattern(usernames[r.account_id]);
            western += pat.is_western_name_number;
            dict += pat.dictionary_reference;
            hidden += pat.username_hidden;
        }
        double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
        auto eff = effectiveness(corpus, set);
        ojson dist = ojson::object();
        for (auto [k, v] : eff.distribution) dist[std::to_string(k)] = v;
        double mean_life = 0;
        for (double h : life) mean_life += h / n;
        cohorts[name] = {{"accounts", rows.size()},
                         {"messages", messages},
                         {"lifespan_hours", {{"median", median(life)}, {"mean", mean_life}}},
                         {"channels_mean", channels / n},
                         {"mean_length", messages ? length / static_cast<double>(messages) : 0.0},
                         {"reactivity_mean", react / n},
                         {"effectiveness",
                          {{"mean", eff.mean}, {"messages", eff.messages}, {"replies", eff.replies}, {"distribution", dist}}},
                         {"usernames",
                          {{"western_name_number", western}, {"dictionary_reference", dict}, {"hidden", hidden}}}};
        lifespans[name] = std::move(life);
    }

    auto rep = repetition_stats(corpus, &labels, o.bucket);
    ojson bins = ojson::array();
    for (const auto& b : rep.bins)
        bins.push_back({{"cohort", b.cohort}, {"length_lo", b.length_lo}, {"repetitions", b.repetitions}, {"texts", b.texts}});
    ojson top = ojson::object();
    for (const auto& cohort : {"propaganda", "user"}) {
        std::vector<const RepeatedText*> texts;
        for (const auto& t : rep.texts)
            if (t.cohort == cohort) texts.push_back(&t);
        std::stable_sort(texts.begin(), texts.end(), [](auto a, auto b) { return a->occurrences > b->occurrences; });
        ojson arr = ojson::array();
        for (std::size_t i = 0; i < std::min<std::size_t>(texts.size(), 20); ++i)
            arr.push_back({{"text", texts[i]->text},
                           {"length", texts[i]->length},
                           {"occurrences", texts[i]->occurrences},
                           {"accounts", texts[i]->accounts}});
        top[cohort] = arr;
    }
    ojson j = {{"cohorts", cohorts}, {"repetition", {{"bucket_width", rep.bucket_width}, {"bins", bins}, {"top_texts", top}}}};
    run.write(dir / "stats.json", dump(j));

    if (o.plots) {
        // Lifespan histogram on doubling buckets: [0,1), [1,2), [2,4), ... hours.
        std::vector<std::string> names = {"<1h"};
        for (int k = 0; k < 12; ++k) names.push_back(std::to_string(1 << k) + "h+");
        for (const auto& [cohort, life] : lifespans) {
            std::vector<double> counts(names.size(), 0.0);
            for (double h : life) {
                std::size_t b = h < 1 ? 0 : std::min<std::size_t>(names.size() - 1, 1 + static_cast<std::size_t>(std::log2(h)));
                counts[b] += 1;
            }
            plot(o, run, dir / ("lifespan_" + cohort + ".svg"), bar_chart_svg("Account lifespan (" + cohort + ")", names, counts));
        }
        std::map<std::size_t, std::size_t> lo_index;
        for (const auto& b : rep.bins) lo_index.emplace(b.length_lo, 0);
        std::vector<std::string> xs;
        for (auto& [lo, idx] : lo_index) {
            idx = xs.size();
            xs.push_back(std::to_string(lo));
        }
        std::vector<Series> series;
        for (const auto& cohort : {"propaganda", "user"}) {
            Series s{cohort, std::vector<double>(xs.size(), 0.0)};
            for (auto [lo, idx] : lo_index) s.y[idx] = static_cast<double>(rep.max_repetitions(cohort, lo));
            series.push_back(std::move(s));
        }
        plot(o, run, dir / "repetition.svg", line_chart_svg("Max repetitions by text length", xs, series));
    }
    run.out() << dump(cohorts);
}

void cmd_analyze_wordshift(const Options& o, Run& run) {
    auto out = require_out(o, "JSON file");
    auto corpus = load_corpus(o.corpus, run);
    auto labels = load_labels(o.labels, run);
    std::vector<std::string> a, b;
    for (const auto& m : corpus.messages()) {
        auto c = cohort_of(&labels, m.account_id);
        if (c == "propaganda") a.push_back(m.text);
        else if (c == "user") b.push_back(m.text);
    }
    auto ws = wordshift(a, b, o.top);
    auto rows = [](const std::vector<StemShift>& v) {
        ojson arr = ojson::array();
        for (const auto& s : v)
            arr.push_back({{"stem", s.stem}, {"freq_propaganda", s.freq_a}, {"freq_user", s.freq_b}, {"score", s.score}});
        return arr;
    };
    ojson j = {{"tokens_propaganda", ws.tokens_a},
               {"tokens_user", ws.tokens_b},
               {"top_propaganda", rows(ws.top_a)},
               {"top_user", rows(ws.top_b)}};
    run.write(out, dump(j));
    if (o.plots) {
        std::vector<std::string> names;
        std::vector<double> vals;
        for (const auto& s : ws.top_a) names.push_back(s.stem), vals.push_back(s.score);
        for (auto it = ws.top_b.rbegin(); it != ws.top_b.rend(); ++it) names.push_back(it->stem), vals.push_back(it->score);
        plot(o, run, sibling(out, ".svg"), bar_chart_svg("Word shift: propaganda (+) vs user (-)", names, vals));
    }
    run.out() << dump({{"top_propaganda", ws.top_a.size()}, {"top_user", ws.top_b.size()}});
}

// ------------------------------------------------------------ topics

void cmd_topics_cluster(const Options& o, Run& run) {
    auto out = require_out(o, "topics JSONL");
    auto corpus = load_corpus(o.corpus, run);
    auto store = load_embeddings(o.embeddings, run);
    std::vector<MessageKey> keys;
    std::vector<Vector> points;
    std::size_t missing = 0;
    for (const auto& m : corpus.messages()) {
        auto v = store.get(m.key());
        if (!v) {
            ++missing;
            continue;
        }
        keys.push_back(m.key());
        points.emplace_back(v->begin(), v->end());
    }
    if (missing) spdlog::warn("{} messages have no embedding and stay unassigned", missing);
    auto metric = parse_metric(o.metric);
    auto count = [](const std::vector<int>& l) {
        int clusters = 0;
        std::size_t noise = 0;
        for (int x : l) clusters = std::max(clusters, x + 1), noise += x == kNoise;
        return std::pair{clusters, noise};
    };
    auto labels = dbscan(points, o.eps, o.min_pts, metric);
    auto assignment = from_clusters(keys, labels, o.prefix);
    std::size_t density_assigned = assignment.assigned();
    if (!o.rules.empty()) {
        run.input(o.rules);
        assignment = keyword_augment(assignment, corpus, read_rules(o.rules));
    }
    ensure_parent(out);
    assignment.write(out);
    run.produced(out);

    if (!o.sweep.empty()) {
        ojson rows = ojson::array();
        for (double eps : o.sweep) {
            auto [clusters, noise] = count(dbscan(points, eps, o.min_pts, metric));
            rows.push_back({{"eps", eps}, {"min_pts", o.min_pts}, {"clusters", clusters}, {"noise", noise}});
        }
        run.write(sibling(out, ".sweep.json"), dump({{"metric", o.metric}, {"points", points.size()}, {"runs", rows}}));
    }
    auto [clusters, noise] = count(labels);
    run.out() << dump({{"messages", points.size()},
                       {"clusters", clusters},
                       {"noise", noise},
                       {"keyword_assigned", assignment.assigned() - density_assigned}});
}

void cmd_topics_timeline(const Options& o, Run& run) {
    auto out = require_out(o, "timeline CSV");
    auto corpus = load_corpus(o.corpus, run);
    run.input(o.topics);
    auto assignment = TopicAssignment::read(o.topics);
    auto tl = topic_timeline(corpus, assignment);
    run.write(out, tl.csv());
    auto date = [&](std::int64_t bin) { return format_date(from_unix((tl.first_day + bin) * 86400)); };
    ojson lon = ojson::object();
    for (const auto& [topic, l] : topic_longevity(tl))
        lon[topic] = {{"first_day", l.first_day ? ojson(date(*l.first_day)) : ojson(nullptr)},
                      {"last_day", l.last_day ? ojson(date(*l.last_day)) : ojson(nullptr)},
                      {"span_days", l.span_days},
                      {"active_days", l.active_days}};
    run.write(sibling(out, ".longevity.json"), dump(lon));
    if (o.plots) {
        std::vector<std::string> xs;
        for (std::size_t d = 0; d < tl.days; ++d) xs.push_back(date(static_cast<std::int64_t>(d)));
        std::vector<Series> series;
        for (const auto& [topic, counts] : tl.counts)
            series.push_back({topic, std::vector<double>(counts.begin(), counts.end())});
        plot(o, run, sibling(out, ".svg"), line_chart_svg("Messages per topic and day", xs, series));
    }
    run.out() << dump({{"topics", tl.counts.size()}, {"days", tl.days}});
}

// ------------------------------------------------------------ features

void cmd_features(const Options& o, Run& run) {
    auto out = require_out(o, "CSV file");
    auto corpus = load_corpus(o.corpus, run);
    std::optional<LabelSet> labels;
    if (!o.labels.empty()) labels = load_labels(o.labels, run);
    std::vector<PairIndex> pairs;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (o.replies_only && !corpus.at(i).reply_to) continue;
        pairs.push_back({i, corpus.trigger_of(i)});
    }
    FeatureConfig fc{o.epoch_time};
    auto fm = batch_extract(corpus, pairs, fc);
    std::string csv = "channel_id,message_id,account_id,label";
    for (const auto& n : feature_names()) csv += "," + n;
    csv += "\n";
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        const auto& m = corpus.at(pairs[r].first);
        std::string label;
        if (labels && m.account_id)
            if (auto l = labels->label_of(*m.account_id)) label = std::string(to_string(*l));
        csv += csv_field(m.channel_id) + "," + std::to_string(m.message_id) + "," + csv_field(m.account_id.value_or("")) +
               "," + label;
        for (double v : fm.rows[r].values()) csv += "," + std::to_string(static_cast<std::int64_t>(v));
        csv += "\n";
    }
    run.write(out, csv);
    run.out() << dump({{"rows", pairs.size()}, {"schema", fm.schema}});
}

// ------------------------------------------------------------ training

namespace {

struct TrainSet {
    Corpus corpus;
    std::vector<Example> examples;
    TrainingInfo info;
};

TrainSet training_set(const Options& o, Run& run) {
    TrainSet t{load_corpus(o.corpus, run), {}, {}};
    auto labels = load_labels(o.labels, run);
    auto ex = labeled_examples(t.corpus, labels, !o.all_messages);
    if (!o.cutoff.empty()) {
        auto split = temporal_split(t.corpus, ex, parse_iso8601(o.cutoff));
        check_no_leakage(t.corpus, split);
        ex = std::move(split.train);
    }
    if (!o.no_balance) ex = balance(ex, o.seed);
    if (ex.empty()) fail(ErrorKind::data, "no labeled training examples");
    Instant lo = Instant::max(), hi = Instant::min();
    for (const auto& e : ex) {
        lo = std::min(lo, t.corpus.at(e.message).timestamp);
        hi = std::max(hi, t.corpus.at(e.message).timestamp);
        t.info.positives += e.label == 1;
    }
    t.info.window_start = format_iso8601(lo);
    t.info.window_end = format_iso8601(hi);
    t.info.rows = ex.size();
    t.info.seed = o.seed;
    t.examples = std::move(ex);
    return t;
}

void train_mlp_cmd(const Options& o, Run& run, InputKind kind) {
    auto out = require_out(o, "model file");
    if (o.embeddings.empty())
        fail(ErrorKind::data, "train " + std::string(kind == InputKind::pair ? "pair" : "mlp") +
                                  " needs an embedding store: pass --embeddings <store.tgemb>");
    if (!fs::exists(o.embeddings)) fail(ErrorKind::io, "embedding store not found: " + o.embeddings);
    auto t = training_set(o, run);
    auto store = load_embeddings(o.embeddings, run);
    MLPParams p;
    p.epochs = o.epochs;
    p.h1 = o.h1;
    p.h2 = o.h2;
    p.batch = o.batch;
    p.learning_rate = o.mlp_lr;
    p.seed = o.seed;
    auto model = train_mlp(embedding_rows(t.corpus, t.examples, store, kind), labels_of(t.examples), p, kind, store.dim());
    model.provenance = store.provenance();
    model.info = t.info;
    ensure_parent(out);
    save_model(model, out);
    run.produced(out);
    run.out() << dump({{"model", model_id(model)},
                       {"rows", t.info.rows},
                       {"positives", t.info.positives},
                       {"final_loss", model.epoch_loss.empty() ? 0.0 : model.epoch_loss.back()}});
}

}  // namespace

void cmd_train_gbt(const Options& o, Run& run) {
    auto out = require_out(o, "model file");
    auto t = training_set(o, run);
    FeatureConfig fc{o.epoch_time};
    GBTParams p;
    p.trees = o.trees;
    p.depth = o.depth;
    p.learning_rate = o.gbt_lr;
    p.seed = o.seed;
    auto model = train_gbt(feature_rows(t.corpus, t.examples, fc), labels_of(t.examples), p, feature_schema(fc));
    model.info = t.info;
    ensure_parent(out);
    save_model(model, out);
    run.produced(out);
    run.out() << dump({{"model", model_id(model)},
                       {"rows", t.info.rows},
                       {"positives", t.info.positives},
                       {"final_loss", model.train_loss.empty() ? 0.0 : model.train_loss.back()}});
}

void cmd_train_mlp(const Options& o, Run& run) { train_mlp_cmd(o, run, parse_input_kind(o.input)); }
void cmd_train_pair(const Options& o, Run& run) { train_mlp_cmd(o, run, InputKind::pair); }

// ------------------------------------------------------------ eval

void cmd_eval(const Options& o, Run& run) {
    fs::path dir = o.data;
    auto pick = [&](const std::string& flag, const char* name) -> std::string {
        if (!flag.empty()) return flag;
        if (!dir.empty()) return (dir / name).string();
        return "";
    };
    auto corpus_p = pick(o.corpus, "corpus.jsonl"), labels_p = pick(o.labels, "labels.jsonl");
    auto topics_p = pick(o.topics, "topics.jsonl"), store_p = pick(o.embeddings, "embeddings.tgemb");
    if (corpus_p.empty() || labels_p.empty() || store_p.empty())
        fail(ErrorKind::usage, "eval needs --data or all of --corpus, --labels and --embeddings");

    EvalConfig cfg;
    cfg.cutoff = o.cutoff;
    cfg.seed = o.seed;
    if (!dir.empty() && fs::exists(dir / "synth.json")) {
        run.input(dir / "synth.json");
        auto meta = ojson::parse(read_text_file(dir / "synth.json"));
        if (cfg.cutoff.empty()) cfg.cutoff = meta.at("cutoff").get<std::string>();
        if (!o.seed_given) cfg.seed = meta.at("seed").get<std::uint64_t>();
    }
    if (cfg.cutoff.empty()) fail(ErrorKind::usage, "--cutoff is required");
    run.set_seed(cfg.seed);
    cfg.threshold = o.threshold;
    cfg.min_topic_messages = o.min_topic;
    cfg.replies_only = !o.all_messages;
    cfg.features.epoch_time = o.epoch_time;
    cfg.gbt.trees = o.trees;
    cfg.gbt.depth = o.depth;
    cfg.mlp.epochs = o.epochs;
    cfg.mlp.h1 = o.h1;
    cfg.mlp.h2 = o.h2;

    auto corpus = load_corpus(corpus_p, run);
    auto labels = load_labels(labels_p, run);
    TopicAssignment topics;
    if (!topics_p.empty() && (!o.topics.empty() || fs::exists(topics_p))) {
        run.input(topics_p);
        topics = TopicAssignment::read(topics_p);
    }
    auto store = load_embeddings(store_p, run);

    TrainedDetectors trained;
    auto rep = run_evaluation(corpus, labels, topics, store, cfg, &trained);

    if (!o.second.empty()) {
        fs::path d2 = o.second;
        // Not through load_corpus: the manifest keeps the primary corpus hash.
        run.input(d2 / "corpus.jsonl");
        auto c2 = Corpus::merge({read_canonical(d2 / "corpus.jsonl")});
        auto l2 = load_labels((d2 / "labels.jsonl").string(), run);
        TopicAssignment t2;
        if (fs::exists(d2 / "topics.jsonl")) {
            run.input(d2 / "topics.jsonl");
            t2 = TopicAssignment::read(d2 / "topics.jsonl");
        }
        auto s2 = load_embeddings((d2 / "embeddings.tgemb").string(), run);
        if (s2.dim() != store.dim())
            fail(ErrorKind::data, "second network embeddings have dim " + std::to_string(s2.dim()) + ", expected " +
                                      std::to_string(store.dim()));
        for (const auto& d : make_detectors(trained, s2, cfg))
            rep.cross_network.push_back(cross_network_eval(d, c2, l2, cfg.seed, t2, cfg.replies_only));
    }

    fs::path out = !o.out.empty() ? fs::path(o.out) : !dir.empty() ? dir / "eval" : fs::path();
    if (out.empty()) fail(ErrorKind::usage, "--out is required (directory)");
    run.write(out / "report.json", report_json(rep));
    run.write(out / "report.md", report_markdown(rep));
    if (o.save_models) {
        auto save = [&](const Model& m, const char* name) {
            auto p = out / "models" / name;
            ensure_parent(p);
            save_model(m, p);
            run.produced(p);
        };
        save(trained.gbt, "gbt-features.json");
        save(trained.reply, "mlp-reply.json");
        save(trained.trigger, "mlp-trigger.json");
        save(trained.pair, "mlp-pair.json");
    }
    std::vector<std::string> names;
    std::vector<double> acc;
    for (const auto& m : rep.models) {
        names.push_back(m.name);
        acc.push_back(m.accuracy());
        run.out() << m.name << "\taccuracy=" << m.accuracy() << "\tfpr=" << m.confusion.false_positive_rate()
                  << "\tnew_topic=" << (m.new_topic_accuracy ? std::to_string(*m.new_topic_accuracy) : "n/a") << "\n";
    }
    plot(o, run, out / "accuracy.svg", bar_chart_svg("Test accuracy", names, acc));
}

// ------------------------------------------------------------ bench

void cmd_bench(const Options& o, Run& run) {
    run.input(o.model);
    auto model = load_mlp(o.model, InputKind::pair);
    std::unique_ptr<Embedder> embedder;
    if (!o.embed_url.empty())
        embedder = std::make_unique<HttpEmbedder>(o.embed_url, model.embedding_dim);
    else
        embedder = std::make_unique<HashEmbedder>(model.embedding_dim);
    if (!model.provenance.empty() && model.provenance != embedder->name())
        spdlog::warn("model was trained on '{}' embeddings, timing with '{}'", model.provenance, embedder->name());

    std::vector<TextPair> base;
    auto collect = [&](const Corpus& c) {
        for (std::size_t i = 0; i < c.size(); ++i)
            if (auto t = c.trigger_of(i)) base.push_back({c.at(*t).text, c.at(i).text});
    };
    if (!o.corpus.empty()) {
        collect(load_corpus(o.corpus, run));
    } else {
        GenConfig g;
        g.users = 120;
        g.propaganda = 20;
        g.seed = o.seed_given ? o.seed : g.seed;
        collect(generate(g).corpus);
    }
    if (base.empty()) fail(ErrorKind::data, "no trigger-reply pairs to time");
    std::vector<TextPair> pairs;
    for (std::size_t i = 0; i < o.pairs; ++i) pairs.push_back(base[i % base.size()]);
    auto st = latency_bench(model, pairs, *embedder);
    ojson j = {{"pairs", st.pairs},
               {"mean_seconds", st.mean},
               {"stddev_seconds", opt_json(st.stddev)},
               {"embedder", embedder->name()},
               {"model", model_id(model)}};
    if (!o.out.empty()) run.write(o.out, dump(j));
    run.out() << dump(j);
}

// ------------------------------------------------------------ serve

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

void cmd_serve(const Options& o, Run& run) {
    BotConfig cfg;
    cfg.pair_model = o.model;
    if (!o.reply_model.empty()) cfg.reply_model = o.reply_model;
    cfg.embed_source = parse_embed_source(o.embed_source);
    cfg.store = o.store;
    cfg.embed_url = o.embed_url;
    cfg.threshold = o.threshold;
    cfg.action = parse_bot_action(o.action);
    cfg.allowlist.insert(o.allow.begin(), o.allow.end());
    cfg.api_base = o.api_base;
    cfg.token = o.token;
    cfg.on_missing = o.on_missing == "fallback" ? MissingEmbedding::fallback : MissingEmbedding::skip;
    cfg.validate();
    run.input(o.model);
    if (cfg.reply_model) run.input(*cfg.reply_model);
    if (cfg.embed_source == EmbedSource::store) run.input(cfg.store);

    bool telegram = o.serve_input == "telegram";
    if (telegram && (cfg.api_base.empty() || cfg.token.empty()))
        fail(ErrorKind::usage, "--input telegram needs --api-base and --token");
    auto scorer = Scorer::from_config(cfg);
    std::unique_ptr<TelegramApi> api;
    if (cfg.action != BotAction::log || telegram) api = std::make_unique<TelegramApi>(cfg.api_base, cfg.token);

    std::mutex mu;
    std::ofstream verdict_file, action_file;
    std::ostream* vout = &run.out();
    if (!o.out.empty()) {
        ensure_parent(o.out);
        verdict_file.open(o.out, std::ios::binary);
        if (!verdict_file) fail(ErrorKind::io, "cannot write " + o.out);
        vout = &verdict_file;
    }
    if (!o.actions_log.empty()) {
        ensure_parent(o.actions_log);
        action_file.open(o.actions_log, std::ios::binary);
        if (!action_file) fail(ErrorKind::io, "cannot write " + o.actions_log);
    }
    Bot bot(
        cfg, *scorer, api.get(),
        [&](const BotVerdict& v) {
            std::lock_guard lk(mu);
            *vout << verdict_json(v) << '\n' << std::flush;
        },
        [&](const ActionRecord& r) {
            if (!action_file.is_open()) return;
            std::lock_guard lk(mu);
            action_file << action_json(r) << '\n' << std::flush;
        });

    g_stop = false;
    auto wait_for_signal = [] {
        auto old_int = std::signal(SIGINT, on_signal);
        auto old_term = std::signal(SIGTERM, on_signal);
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        std::signal(SIGINT, old_int);
        std::signal(SIGTERM, old_term);
    };
    if (o.serve_input == "-") {
        serve_stream(bot, std::cin);
    } else if (o.serve_input.rfind("tcp:", 0) == 0) {
        int port = 0;
        try {
            port = std::stoi(o.serve_input.substr(4));
        } catch (const std::exception&) {
            fail(ErrorKind::usage, "bad --input " + o.serve_input);
        }
        TcpInput tcp(bot, static_cast<std::uint16_t>(port));
        spdlog::info("listening on 127.0.0.1:{}", tcp.port());
        wait_for_signal();
        tcp.stop();
        bot.close();
    } else if (telegram) {
        auto old_int = std::signal(SIGINT, on_signal);
        auto old_term = std::signal(SIGTERM, on_signal);
        poll_updates(bot, *api, g_stop, 30, o.max_polls);
        std::signal(SIGINT, old_int);
        std::signal(SIGTERM, old_term);
        bot.close();
    } else {
        run.input(o.serve_input);
        std::ifstream in(o.serve_input, std::ios::binary);
        if (!in) fail(ErrorKind::io, "cannot read " + o.serve_input);
        serve_stream(bot, in);
    }
    bot.close();
    if (!o.out.empty()) {
        verdict_file.close();
        run.produced(o.out);
    }
    if (action_file.is_open()) {
        action_file.close();
        run.produced(o.actions_log);
    }
    auto st = bot.stats();
    spdlog::info("events={} malformed={} verdicts={} skipped={} propaganda={} actions={}", st.events, st.malformed,
                 st.verdicts, st.skipped, st.propaganda, st.actions);
}

// ------------------------------------------------------------ synth

namespace {

// Feeds are written in arrival order, as a live client or an export would see them.
std::string lines_of(std::vector<Message> msgs) {
    std::stable_sort(msgs.begin(), msgs.end(), [](const Message& a, const Message& b) {
        return std::tie(a.timestamp, a.channel_id, a.message_id) < std::tie(b.timestamp, b.channel_id, b.message_id);
    });
    std::string s;
    for (const auto& m : msgs) s += canonical_line(m) + "\n";
    return s;
}

std::string write_network(const GenConfig& c, const fs::path& dir, std::size_t dim, Run& run) {
    auto r = generate(c);
    fs::create_directories(dir);
    run.write(dir / "historical.jsonl", lines_of(r.historical));
    run.write(dir / "realtime.jsonl", lines_of(r.realtime));
    write_canonical(r.corpus, dir / "corpus.jsonl");
    run.produced(dir / "corpus.jsonl");
    r.labels.write(dir / "labels.jsonl");
    run.produced(dir / "labels.jsonl");
    LabelSet seeds;
    for (const auto& comp : r.planted.components) seeds.add(comp.front(), {Label::propaganda, Provenance::seed, 0});
    seeds.write(dir / "seeds.jsonl");
    run.produced(dir / "seeds.jsonl");
    r.topics.write(dir / "topics.jsonl");
    run.produced(dir / "topics.jsonl");
    run.write(dir / "planted.json", planted_json(r.planted));
    HashEmbedder emb(dim);
    save_store(embed_corpus(r.corpus, emb, emb.name()), dir / "embeddings.tgemb");
    run.produced(dir / "embeddings.tgemb");
    auto cutoff = parse_iso8601(c.start) + std::chrono::days{c.split_day};
    ojson meta = {{"seed", c.seed},
                  {"cutoff", format_iso8601(cutoff)},
                  {"start", c.start},
                  {"days", c.days},
                  {"users", c.users},
                  {"propaganda", c.propaganda},
                  {"channel_prefix", c.channel_prefix},
                  {"embed_dim", dim},
                  {"messages", r.corpus.size()}};
    run.write(dir / "synth.json", dump(meta));
    return corpus_hash(r.corpus);
}

}  // namespace

void cmd_synth(const Options& o, Run& run) {
    fs::path dir = require_out(o, "directory");
    GenConfig c;
    if (o.seed_given) c.seed = o.seed;
    if (o.users) c.users = o.users;
    if (o.propaganda) c.propaganda = o.propaganda;
    if (o.days) c.days = o.days;
    std::size_t dim = o.embed_dim ? o.embed_dim : kSynthEmbedDim;
    run.set_seed(c.seed);
    run.set_corpus_hash(write_network(c, dir, dim, run));
    if (o.second_network) write_network(second_network(c), dir / "second", dim, run);
    run.out() << dump({{"out", dir.generic_string()}, {"seed", c.seed}, {"second_network", o.second_network}});
}

}  // namespace propwatch::cli
