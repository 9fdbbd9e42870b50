#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <set>
#include <sstream>
#include <unistd.h>

#include "propwatch/cli.hpp"
#include "propwatch/data.hpp"
#include "propwatch/labeling.hpp"
#include "propwatch/models.hpp"

using namespace propwatch;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("propwatch_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

/// Small generated network shared by the cases below.
const TempDir& network() {
    static TempDir dir("net");
    static bool made = false;
    if (!made) {
        auto r = run({"synth", "--seed", "7", "--users", "160", "--propaganda", "30", "-o", dir / "out"});
        REQUIRE(r.code == 0);
        made = true;
    }
    return dir;
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto name = fs::relative(e.path(), dir).generic_string();
        if (name.ends_with(".manifest.json")) continue;
        out[name] = read_text_file(e.path());
    }
    return out;
}

}  // namespace

TEST_CASE("no arguments prints usage and exits 1") {
    auto r = run({});
    CHECK(r.code == 1);
    CHECK(r.err.find("Subcommands:") != std::string::npos);
}

TEST_CASE("unknown subcommand prints usage and exits 1") {
    auto r = run({"frobnicate"});
    CHECK(r.code == 1);
    CHECK(r.err.find("unknown subcommand 'frobnicate'") != std::string::npos);
    CHECK(r.err.find("Subcommands:") != std::string::npos);
}

TEST_CASE("help exits 0; a missing required option exits 1") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"train", "gbt", "--help"}).code == 0);
    CHECK(run({"train", "gbt", "-o", "x.json"}).code == 1);
    CHECK(run({"analyze"}).code == 1);
}

TEST_CASE("synth then eval succeeds and writes the report with manifests") {
    const auto& d = network();
    auto r = run({"eval", "--data", d / "out", "--epochs", "5", "--trees", "20", "--plots", "-o", d / "eval"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("mlp-pair") != std::string::npos);
    REQUIRE(fs::exists(d / "eval/report.json"));
    CHECK(fs::exists(d / "eval/report.md"));
    CHECK(read_text_file(d / "eval/accuracy.svg").rfind("<svg", 0) == 0);

    auto manifest = json::parse(read_text_file(d / "eval/report.json.manifest.json"));
    CHECK(manifest["subcommand"] == "eval");
    CHECK(manifest["seed"] == 7);  // taken from synth.json
    CHECK(manifest["tool_version"] == tool_version());
    CHECK(manifest["corpus_hash"].get<std::string>().size() == 64);
    CHECK(manifest["outputs"].size() == 3);
    CHECK(manifest["config"].is_null());
    auto report = json::parse(read_text_file(d / "eval/report.json"));
    CHECK(report["corpus_hash"] == manifest["corpus_hash"]);
}

TEST_CASE("every synth artifact carries a manifest") {
    const auto& d = network();
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(d / "out")) {
        auto p = e.path().string();
        if (p.ends_with(".manifest.json")) continue;
        ++files;
        CHECK(fs::exists(manifest_path(e.path())));
    }
    CHECK(files == 9);
}

TEST_CASE("synth and eval are byte-identical across reruns") {
    TempDir a("rerun_a"), b("rerun_b");
    for (const auto* dir : {&a, &b}) {
        REQUIRE(run({"synth", "--seed", "11", "--users", "160", "--propaganda", "30", "-o", *dir / "s"}).code == 0);
        REQUIRE(run({"eval", "--data", *dir / "s", "--epochs", "3", "--trees", "10", "-o", *dir / "e"}).code == 0);
    }
    auto fa = artifacts(a.path), fb = artifacts(b.path);
    CHECK(fa.size() == fb.size());
    for (const auto& [name, content] : fa) {
        CAPTURE(name);
        CHECK(fb[name] == content);
    }
}

TEST_CASE("train pair without an embedding store exits 2 naming the store") {
    const auto& d = network();
    auto r = run({"train", "pair", "--corpus", d / "out/corpus.jsonl", "--labels", d / "out/labels.jsonl", "-o",
                  d / "pair.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("embedding store") != std::string::npos);
    r = run({"train", "pair", "--corpus", d / "out/corpus.jsonl", "--labels", d / "out/labels.jsonl", "--embeddings",
             d / "missing.tgemb", "-o", d / "pair.json"});
    CHECK(r.code == 2);
    CHECK(r.err.find("missing.tgemb") != std::string::npos);
    CHECK(!fs::exists(d / "pair.json"));
}

TEST_CASE("data errors exit 2") {
    const auto& d = network();
    // only user labels: a single class cannot be trained on
    LabelSet users;
    auto all = LabelSet::read(d / "out/labels.jsonl");
    for (const auto& [id, e] : all.entries())
        if (e.label == Label::user) users.add(id, e);
    users.write(d / "users_only.jsonl");
    auto r = run({"train", "gbt", "--corpus", d / "out/corpus.jsonl", "--labels", d / "users_only.jsonl", "-o",
                  d / "g.json"});
    CHECK(r.code == 2);
    CHECK(run({"analyze", "graph", "--corpus", d / "nope.jsonl", "--labels", d / "out/labels.jsonl", "-o", d / "g"})
              .code == 2);
    CHECK(run({"eval", "--data", d / "out", "--cutoff", "not-a-date", "-o", d / "e2"}).code == 2);
}

TEST_CASE("config file values apply and flags win") {
    const auto& d = network();
    write_text_file(d / "cfg.ini", "seed = 4\n[train.gbt]\ntrees = 7\ncorpus = " + (d / "out/corpus.jsonl") +
                                       "\nlabels = " + (d / "out/labels.jsonl") + "\n");
    REQUIRE(run({"--config", d / "cfg.ini", "train", "gbt", "-o", d / "g7.json"}).code == 0);
    REQUIRE(run({"--config", d / "cfg.ini", "train", "gbt", "--trees", "3", "-o", d / "g3.json"}).code == 0);
    CHECK(std::get<GBTModel>(load_model(d / "g7.json")).trees.size() == 7);
    auto g3 = std::get<GBTModel>(load_model(d / "g3.json"));
    CHECK(g3.trees.size() == 3);
    CHECK(g3.info.seed == 4);
    auto manifest = json::parse(read_text_file(d / "g3.json.manifest.json"));
    CHECK(manifest["config"] == d / "cfg.ini");
    CHECK(manifest["seed"] == 4);
    // a flag after the subcommand overrides the config seed too
    REQUIRE(run({"--config", d / "cfg.ini", "train", "gbt", "--seed", "9", "-o", d / "g9.json"}).code == 0);
    CHECK(std::get<GBTModel>(load_model(d / "g9.json")).info.seed == 9);
}

TEST_CASE("diff over the synthetic feeds recovers the planted deletion ratios") {
    const auto& d = network();
    auto r = run({"diff", "--stream", d / "out/historical.jsonl", "--stream", d / "out/realtime.jsonl", "--labels",
                  d / "out/labels.jsonl", "-o", d / "diffed.jsonl"});
    REQUIRE(r.code == 0);
    CHECK(read_text_file(d / "diffed.jsonl") == read_text_file(d / "out/corpus.jsonl"));
    auto rep = json::parse(read_text_file(d / "diffed.deletions.json"));
    auto planted = json::parse(read_text_file(d / "out/planted.json"));
    CHECK(rep["moderation"]["all"]["propaganda_ratio"].get<double>() ==
          doctest::Approx(planted["propaganda_deletion_ratio"].get<double>()));
    CHECK(rep["moderation"]["all"]["user_ratio"].get<double>() ==
          doctest::Approx(planted["user_deletion_ratio"].get<double>()));
    CHECK(rep["total"] == planted["deleted_propaganda"].get<int>() + planted["deleted_user"].get<int>());
    // the feeds are in arrival order, so parsing reports no order violations
    auto summary = json::parse(r.out);
    for (const auto& f : summary["files"]) CHECK(f["order_violations"] == 0);
}

TEST_CASE("label augment from the seeds recovers the propaganda cohort") {
    const auto& d = network();
    REQUIRE(run({"label", "augment", "--corpus", d / "out/corpus.jsonl", "--seeds", d / "out/seeds.jsonl", "-o",
                 d / "aug.jsonl"})
                .code == 0);
    auto got = LabelSet::read(d / "aug.jsonl").with_label(Label::propaganda);
    auto want = LabelSet::read(d / "out/labels.jsonl").with_label(Label::propaganda);
    CHECK(got == want);
    CHECK(fs::exists(d / "aug.review.txt"));
}

TEST_CASE("analysis and topic subcommands write their artifacts") {
    const auto& d = network();
    std::string corpus = d / "out/corpus.jsonl", labels = d / "out/labels.jsonl";
    REQUIRE(run({"analyze", "graph", "--corpus", corpus, "--labels", labels, "--plots", "-o", d / "an"}).code == 0);
    auto g = json::parse(read_text_file(d / "an/graph_propaganda.json"));
    CHECK(g["largest_component_fraction"].get<double>() >= 0.9);
    CHECK(fs::exists(d / "an/communities_propaganda.svg"));
    REQUIRE(run({"analyze", "stats", "--corpus", corpus, "--labels", labels, "-o", d / "an"}).code == 0);
    auto s = json::parse(read_text_file(d / "an/stats.json"));
    CHECK(s["cohorts"]["propaganda"]["accounts"] == 30);
    CHECK(!fs::exists(d / "an/repetition.svg"));  // no --plots
    REQUIRE(run({"analyze", "wordshift", "--corpus", corpus, "--labels", labels, "-o", d / "an/ws.json"}).code == 0);
    CHECK(json::parse(read_text_file(d / "an/ws.json"))["top_propaganda"].size() == 20);

    REQUIRE(run({"topics", "timeline", "--corpus", corpus, "--topics", d / "out/topics.jsonl", "-o", d / "tl.csv"})
                .code == 0);
    CHECK(read_text_file(d / "tl.csv").rfind("date,topic,count\n", 0) == 0);
    CHECK(fs::exists(d / "tl.longevity.json"));

    REQUIRE(run({"features", "--corpus", corpus, "--labels", labels, "--replies-only", "-o", d / "f.csv"}).code == 0);
    auto csv = read_text_file(d / "f.csv");
    CHECK(csv.rfind("channel_id,message_id,account_id,label,msg_length,", 0) == 0);
}

TEST_CASE("topics cluster with a sweep") {
    TempDir t("cluster");
    REQUIRE(run({"synth", "--seed", "3", "--users", "40", "--propaganda", "8", "--days", "20", "-o", t / "s"}).code ==
            0);
    auto r = run({"topics", "cluster", "--corpus", t / "s/corpus.jsonl", "--embeddings", t / "s/embeddings.tgemb",
                  "--sweep", "0.3,0.6", "-o", t / "topics.jsonl"});
    REQUIRE(r.code == 0);
    auto sweep = json::parse(read_text_file(t / "topics.sweep.json"));
    CHECK(sweep["runs"].size() == 2);
    // a larger radius never yields more noise
    CHECK(sweep["runs"][1]["noise"].get<int>() <= sweep["runs"][0]["noise"].get<int>());
}

TEST_CASE("train, bench and serve chain together") {
    const auto& d = network();
    std::string corpus = d / "out/corpus.jsonl", labels = d / "out/labels.jsonl";
    REQUIRE(run({"train", "pair", "--corpus", corpus, "--labels", labels, "--embeddings", d / "out/embeddings.tgemb",
                 "--epochs", "5", "-o", d / "m/pair.json"})
                .code == 0);
    auto m = load_mlp(d / "m/pair.json", InputKind::pair);
    CHECK(m.provenance == "hash3gram-512");
    CHECK(!m.info.window_start.empty());

    auto b = run({"bench", "--model", d / "m/pair.json", "--pairs", "50", "--corpus", corpus});
    REQUIRE(b.code == 0);
    auto bj = json::parse(b.out);
    CHECK(bj["pairs"] == 50);
    CHECK(bj["mean_seconds"].get<double>() < 0.25);

    // serve from a file in log mode: one verdict per message
    REQUIRE(run({"serve", "--model", d / "m/pair.json", "--input", d / "out/realtime.jsonl", "-o", d / "v.jsonl"})
                .code == 0);
    auto lines = read_lines(d / "v.jsonl");
    CHECK(lines.size() == read_lines(d / "out/realtime.jsonl").size());
    CHECK(fs::exists(manifest_path(d / "v.jsonl")));
    // acting without API credentials is a usage error
    CHECK(run({"serve", "--model", d / "m/pair.json", "--action", "delete", "--input", d / "out/realtime.jsonl"})
              .code == 1);
}
