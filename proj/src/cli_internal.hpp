#pragma once

// Shared state between the option parser (cli.cpp) and the subcommand bodies (cli_commands.cpp).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "propwatch/cli.hpp"

namespace propwatch::cli {

namespace fs = std::filesystem;

/// Every option of every subcommand. Only the fields of the parsed subcommand are meaningful.
struct Options {
    // common
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    bool plots = false;

    // inputs
    std::vector<std::string> exports, streams;
    std::string corpus, labels, seeds, topics, embeddings, data, model, reply_model, rules, exclude;
    std::string second;  // second-network directory for eval

    // ingest / diff
    bool diff = false;

    // label augment
    std::size_t min_len = 30;

    // analyze
    std::string cohort = "propaganda";
    std::size_t graph_min_len = 10;
    bool unweighted = false;
    std::size_t top = 20;
    std::size_t bucket = 10;

    // topics
    double eps = 0.35;
    std::size_t min_pts = 5;
    std::string metric = "cosine";
    std::string prefix = "t";
    std::vector<double> sweep;

    // features / training / eval
    bool epoch_time = false;
    bool all_messages = false;
    bool replies_only = false;
    bool no_balance = false;
    std::string cutoff;
    std::string input = "reply";
    int trees = 200, depth = 4;
    double gbt_lr = 0.1;
    int epochs = 30;
    std::size_t h1 = 256, h2 = 64, batch = 64;
    double mlp_lr = 1e-3;
    double threshold = 0.5;
    std::size_t min_topic = 50;
    bool save_models = false;

    // bench
    std::size_t pairs = 1000;

    // serve
    std::string embed_source = "hash", store, embed_url, action = "log", api_base, token, on_missing = "skip";
    std::vector<std::string> allow;
    std::string serve_input = "-", actions_log;
    int max_polls = 0;

    // synth
    std::size_t users = 0, propaganda = 0;
    int days = 0;
    std::size_t embed_dim = 0;
    bool second_network = false;
};

/// Collects inputs/outputs of one run and writes the manifests at the end.
class Run {
public:
    Run(std::string subcommand, const Options& opts, std::ostream& out);

    void input(const fs::path& p);
    /// Writes `content` (creating parent directories) and records the output.
    void write(const fs::path& p, const std::string& content);
    /// Records an output written by a library call.
    void produced(const fs::path& p);
    void set_corpus_hash(std::string h) { manifest_.corpus_hash = std::move(h); }
    void set_seed(std::uint64_t s) { manifest_.seed = s; }
    std::ostream& out() { return out_; }
    /// Writes `<artifact>.manifest.json` for every recorded output.
    void finish();

private:
    RunManifest manifest_;
    std::ostream& out_;
};

void ensure_parent(const fs::path& p);

void cmd_ingest(const Options& o, Run& run);
void cmd_diff(const Options& o, Run& run);
void cmd_label_augment(const Options& o, Run& run);
void cmd_analyze_graph(const Options& o, Run& run);
void cmd_analyze_stats(const Options& o, Run& run);
void cmd_analyze_wordshift(const Options& o, Run& run);
void cmd_topics_cluster(const Options& o, Run& run);
void cmd_topics_timeline(const Options& o, Run& run);
void cmd_features(const Options& o, Run& run);
void cmd_train_gbt(const Options& o, Run& run);
void cmd_train_mlp(const Options& o, Run& run);
void cmd_train_pair(const Options& o, Run& run);
void cmd_eval(const Options& o, Run& run);
void cmd_bench(const Options& o, Run& run);
void cmd_serve(const Options& o, Run& run);
void cmd_synth(const Options& o, Run& run);

}  // namespace propwatch::cli
