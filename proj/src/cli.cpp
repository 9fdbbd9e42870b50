#include "propwatch/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <mutex>

#include "cli_internal.hpp"
#include "propwatch/data.hpp"
#include "propwatch/error.hpp"
#include "propwatch/timeutil.hpp"

namespace propwatch {

using ojson = nlohmann::ordered_json;

const char* tool_version() { return PROPWATCH_VERSION; }

std::string RunManifest::json() const {
    auto opt = [](const std::optional<std::string>& s) { return s ? ojson(*s) : ojson(nullptr); };
    ojson j = {{"subcommand", subcommand}, {"config", opt(config)},       {"inputs", inputs},
               {"outputs", outputs},       {"seed", seed},                {"corpus_hash", opt(corpus_hash)},
               {"tool_version", tool_version}, {"created_at", created_at}};
    return j.dump(2) + "\n";
}

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
    auto p = artifact;
    p += ".manifest.json";
    return p;
}

namespace cli {

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Run::Run(std::string subcommand, const Options& opts, std::ostream& out) : out_(out) {
    manifest_.subcommand = std::move(subcommand);
    if (!opts.config.empty()) manifest_.config = opts.config;
    manifest_.seed = opts.seed;
    manifest_.tool_version = tool_version();
}

void Run::input(const fs::path& p) { manifest_.inputs.push_back(p.generic_string()); }

void Run::write(const fs::path& p, const std::string& content) {
    ensure_parent(p);
    write_text_file(p, content);
    produced(p);
}

void Run::produced(const fs::path& p) { manifest_.outputs.push_back(p.generic_string()); }

void Run::finish() {
    manifest_.created_at = format_iso8601(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
    auto text = manifest_.json();
    for (const auto& o : manifest_.outputs) write_text_file(manifest_path(o), text);
}

namespace {

void init_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        // Logs go to stderr so stdout stays clean for verdict streams and summaries.
        auto logger = spdlog::stderr_color_mt("propwatch");
        spdlog::set_default_logger(logger);
        spdlog::set_pattern("[%H:%M:%S] [%l] %v");
    });
}

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::usage: return 1;
        case ErrorKind::io:
        case ErrorKind::parse:
        case ErrorKind::format:
        case ErrorKind::data: return 2;
        case ErrorKind::runtime: return 3;
    }
    return 3;
}

struct Leaf {
    CLI::App* app;
    std::string name;
    std::function<void(const Options&, Run&)> body;
};

CLI::App* leaf_app(CLI::App* parent, const std::string& name, const std::string& desc) {
    auto* a = parent->add_subcommand(name, desc);
    a->fallthrough();
    return a;
}

void add_corpus(CLI::App* a, Options& o, bool required = true) {
    auto* opt = a->add_option("--corpus", o.corpus, "Canonical corpus JSONL");
    if (required) opt->required();
}

void add_labels(CLI::App* a, Options& o, bool required = true) {
    auto* opt = a->add_option("--labels", o.labels, "Account labels JSONL");
    if (required) opt->required();
}

void add_training(CLI::App* a, Options& o) {
    add_corpus(a, o);
    add_labels(a, o);
    a->add_option("--cutoff", o.cutoff, "Train only on messages before this ISO-8601 instant");
    a->add_flag("--all-messages", o.all_messages, "Use every labeled message, not only replies");
    a->add_flag("--no-balance", o.no_balance, "Keep the class imbalance");
}

void add_mlp(CLI::App* a, Options& o) {
    a->add_option("--embeddings", o.embeddings, "TGEMB1 embedding store");
    a->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    a->add_option("--h1", o.h1, "First hidden layer width")->capture_default_str();
    a->add_option("--h2", o.h2, "Second hidden layer width")->capture_default_str();
    a->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
    a->add_option("--lr", o.mlp_lr, "Adam learning rate")->capture_default_str();
}

std::vector<Leaf> build(CLI::App& app, Options& o) {
    std::vector<Leaf> leaves;
    auto leaf = [&](CLI::App* a, std::string name, auto fn) { leaves.push_back({a, std::move(name), fn}); };

    // ingest / diff
    for (bool is_diff : {false, true}) {
        auto* a = leaf_app(&app, is_diff ? "diff" : "ingest",
                           is_diff ? "Merge both feeds and flag messages deleted from the historical export"
                                   : "Parse exports and streams into one deduplicated corpus");
        a->add_option("--export", o.exports, "Historical chat export JSON (repeatable)");
        a->add_option("--stream", o.streams, "Realtime event JSONL (repeatable)");
        if (is_diff) {
            add_labels(a, o, false);
            leaf(a, "diff", cmd_diff);
        } else {
            a->add_flag("--diff", o.diff, "Also flag deleted messages");
            leaf(a, "ingest", cmd_ingest);
        }
    }

    auto* label = app.add_subcommand("label", "Account labels");
    label->require_subcommand(1);
    label->fallthrough();
    {
        auto* a = leaf_app(label, "augment", "Propagate propaganda labels through reused long texts");
        add_corpus(a, o);
        a->add_option("--seeds", o.seeds, "Seed labels JSONL")->required();
        a->add_option("--min-len", o.min_len, "Texts must be longer than this many characters")->capture_default_str();
        a->add_option("--exclude", o.exclude, "File of account ids never promoted");
        leaf(a, "label augment", cmd_label_augment);
    }

    auto* analyze = app.add_subcommand("analyze", "Cohort analyses");
    analyze->require_subcommand(1);
    analyze->fallthrough();
    {
        auto* a = leaf_app(analyze, "graph", "Coordination graph, components and Louvain communities");
        add_corpus(a, o);
        add_labels(a, o);
        a->add_option("--cohort", o.cohort, "propaganda or user")
            ->check(CLI::IsMember({"propaganda", "user"}))
            ->capture_default_str();
        a->add_option("--min-len", o.graph_min_len, "Shared texts must be longer than this")->capture_default_str();
        a->add_flag("--unweighted", o.unweighted, "Unit edge weights for Louvain");
        leaf(a, "analyze graph", cmd_analyze_graph);

        a = leaf_app(analyze, "stats", "Per-account activity, effectiveness, repetition and username patterns");
        add_corpus(a, o);
        add_labels(a, o);
        a->add_option("--bucket", o.bucket, "Length bucket width for repetition counts")->capture_default_str();
        leaf(a, "analyze stats", cmd_analyze_stats);

        a = leaf_app(analyze, "wordshift", "Stem frequency differences between propaganda and user texts");
        add_corpus(a, o);
        add_labels(a, o);
        a->add_option("--top", o.top, "Stems listed per side")->capture_default_str();
        leaf(a, "analyze wordshift", cmd_analyze_wordshift);
    }

    auto* topics = app.add_subcommand("topics", "Topic discovery");
    topics->require_subcommand(1);
    topics->fallthrough();
    {
        auto* a = leaf_app(topics, "cluster", "DBSCAN over message embeddings, then keyword rules");
        add_corpus(a, o);
        a->add_option("--embeddings", o.embeddings, "TGEMB1 embedding store")->required();
        a->add_option("--eps", o.eps, "Neighborhood radius")->capture_default_str();
        a->add_option("--min-pts", o.min_pts, "Core point threshold")->capture_default_str();
        a->add_option("--metric", o.metric, "cosine or euclidean")
            ->check(CLI::IsMember({"cosine", "euclidean"}))
            ->capture_default_str();
        a->add_option("--prefix", o.prefix, "Cluster name prefix")->capture_default_str();
        a->add_option("--rules", o.rules, "Keyword rules JSON for noise messages");
        a->add_option("--sweep", o.sweep, "Also report cluster counts for these eps values")->delimiter(',');
        leaf(a, "topics cluster", cmd_topics_cluster);

        a = leaf_app(topics, "timeline", "Daily message counts and longevity per topic");
        add_corpus(a, o);
        a->add_option("--topics", o.topics, "Topic assignment JSONL")->required();
        leaf(a, "topics timeline", cmd_topics_timeline);
    }

    {
        auto* a = leaf_app(&app, "features", "Handcrafted feature CSV");
        add_corpus(a, o);
        add_labels(a, o, false);
        a->add_flag("--epoch-time", o.epoch_time, "msg_time_of_day holds Unix seconds");
        a->add_flag("--replies-only", o.replies_only, "Only messages carrying reply_to");
        leaf(a, "features", cmd_features);
    }

    auto* train = app.add_subcommand("train", "Train one detector");
    train->require_subcommand(1);
    train->fallthrough();
    {
        auto* a = leaf_app(train, "gbt", "Gradient-boosted trees on handcrafted features");
        add_training(a, o);
        a->add_flag("--epoch-time", o.epoch_time, "msg_time_of_day holds Unix seconds");
        a->add_option("--trees", o.trees, "Boosting rounds")->capture_default_str();
        a->add_option("--depth", o.depth, "Tree depth")->capture_default_str();
        a->add_option("--lr", o.gbt_lr, "Shrinkage")->capture_default_str();
        leaf(a, "train gbt", cmd_train_gbt);

        a = leaf_app(train, "mlp", "MLP on reply or trigger embeddings");
        add_training(a, o);
        add_mlp(a, o);
        a->add_option("--input", o.input, "reply or trigger")
            ->check(CLI::IsMember({"reply", "trigger"}))
            ->capture_default_str();
        leaf(a, "train mlp", cmd_train_mlp);

        a = leaf_app(train, "pair", "MLP on concatenated trigger and reply embeddings");
        add_training(a, o);
        add_mlp(a, o);
        leaf(a, "train pair", cmd_train_pair);
    }

    {
        auto* a = leaf_app(&app, "eval", "Temporal split, train every detector, report");
        a->add_option("--data", o.data, "Directory written by synth (supplies default inputs and cutoff)");
        add_corpus(a, o, false);
        add_labels(a, o, false);
        a->add_option("--topics", o.topics, "Topic assignment JSONL");
        a->add_option("--embeddings", o.embeddings, "TGEMB1 embedding store");
        a->add_option("--cutoff", o.cutoff, "Train/test boundary (ISO-8601)");
        a->add_option("--second", o.second, "Second network directory for cross-network scores");
        a->add_option("--threshold", o.threshold, "Decision threshold")->capture_default_str();
        a->add_option("--min-topic", o.min_topic, "Minimum messages for a per-topic row")->capture_default_str();
        a->add_flag("--all-messages", o.all_messages, "Score every labeled message, not only replies");
        a->add_flag("--epoch-time", o.epoch_time, "msg_time_of_day holds Unix seconds");
        a->add_option("--trees", o.trees, "GBT rounds")->capture_default_str();
        a->add_option("--depth", o.depth, "GBT depth")->capture_default_str();
        a->add_option("--epochs", o.epochs, "MLP epochs")->capture_default_str();
        a->add_option("--h1", o.h1, "MLP first hidden width")->capture_default_str();
        a->add_option("--h2", o.h2, "MLP second hidden width")->capture_default_str();
        a->add_flag("--save-models", o.save_models, "Also write the trained models");
        leaf(a, "eval", cmd_eval);
    }

    {
        auto* a = leaf_app(&app, "bench", "Per-pair scoring latency");
        a->add_option("--model", o.model, "Pair model")->required();
        add_corpus(a, o, false);
        a->add_option("--pairs", o.pairs, "Pairs to time")->capture_default_str();
        a->add_option("--embed-url", o.embed_url, "Embedding service instead of the hash embedder");
        leaf(a, "bench", cmd_bench);
    }

    {
        auto* a = leaf_app(&app, "serve", "Score incoming messages and optionally moderate");
        a->add_option("--model", o.model, "Pair model")->required();
        a->add_option("--reply-model", o.reply_model, "Reply-only model for the fallback policy");
        a->add_option("--embed-source", o.embed_source, "hash, store or endpoint")
            ->check(CLI::IsMember({"hash", "store", "endpoint"}))
            ->capture_default_str();
        a->add_option("--store", o.store, "Embedding store for --embed-source store");
        a->add_option("--embed-url", o.embed_url, "Embedding service for --embed-source endpoint");
        a->add_option("--threshold", o.threshold, "Decision threshold")->capture_default_str();
        a->add_option("--action", o.action, "log, delete or delete+ban")
            ->check(CLI::IsMember({"log", "delete", "delete+ban"}))
            ->capture_default_str();
        a->add_option("--allow", o.allow, "Channel the bot may act on (repeatable)");
        a->add_option("--api-base", o.api_base, "Bot API base URL");
        a->add_option("--token", o.token, "Bot token");
        a->add_option("--on-missing", o.on_missing, "skip or fallback when a trigger cannot be embedded")
            ->check(CLI::IsMember({"skip", "fallback"}))
            ->capture_default_str();
        a->add_option("--input", o.serve_input, "'-' (stdin), a JSONL file, tcp:PORT or telegram")
            ->capture_default_str();
        a->add_option("--actions-log", o.actions_log, "Write one JSON line per moderation call");
        a->add_option("--max-polls", o.max_polls, "Stop telegram polling after this many polls (0 = never)");
        leaf(a, "serve", cmd_serve);
    }

    {
        auto* a = leaf_app(&app, "synth", "Generate a labeled synthetic network with planted statistics");
        a->add_option("--users", o.users, "Ordinary accounts");
        a->add_option("--propaganda", o.propaganda, "Propaganda accounts");
        a->add_option("--days", o.days, "Days covered");
        a->add_option("--embed-dim", o.embed_dim, "Hash embedding width of the written store");
        a->add_flag("--second-network", o.second_network, "Also write a second network under second/");
        leaf(a, "synth", cmd_synth);
    }
    return leaves;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    init_logging();
    Options o;
    CLI::App app{"Propaganda account detection toolkit", "propwatch"};
    app.set_version_flag("--version", std::string(tool_version()));
    app.set_config("--config", "", "Key-value config file ([section] per subcommand); flags win");
    auto* seed = app.add_option("--seed", o.seed, "Random seed");
    app.add_option("-o,--out", o.out, "Output file or directory");
    app.add_flag("--plots", o.plots, "Also write SVG plots");
    app.require_subcommand(1);
    auto leaves = build(app, o);

    std::vector<std::string> argv_store{"propwatch"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        bool unknown = !args.empty() && !args.front().empty() && args.front().front() != '-' &&
                       app.get_subcommand_no_throw(args.front()) == nullptr;
        if (unknown)
            err << "error: unknown subcommand '" << args.front() << "'\n\n";
        else
            err << "error: " << e.what() << "\n\n";
        const CLI::App* deepest = &app;
        for (const auto& l : leaves)
            if (l.app->parsed()) deepest = l.app;
        err << deepest->help();
        return 1;
    }
    if (auto* c = app.get_config_ptr(); c && c->count() > 0) o.config = c->as<std::string>();
    o.seed_given = seed->count() > 0;

    for (const auto& l : leaves) {
        if (!l.app->parsed()) continue;
        try {
            Run run(l.name, o, out);
            l.body(o, run);
            run.finish();
            return 0;
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            return exit_code(e.kind());
        } catch (const std::filesystem::filesystem_error& e) {
            err << "error: " << e.what() << "\n";
            return 2;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return 3;
        }
    }
    err << app.help();
    return 1;
}

}  // namespace cli

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return cli::dispatch(args, out, err);
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace propwatch
