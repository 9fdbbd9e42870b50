#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "propwatch/corpus.hpp"

namespace propwatch {

/// Undirected weighted graph on nodes 0..n-1; edges stored once with u < v
/// (u == v allowed only for aggregated graphs).
struct Graph {
    struct Edge {
        std::size_t u = 0, v = 0;
        double w = 1.0;
    };
    std::size_t n = 0;
    std::vector<Edge> edges;

    void add(std::size_t u, std::size_t v, double w = 1.0);
    double total_weight() const;
};

struct CoordGraph {
    struct Link {
        std::size_t a = 0, b = 0;         ///< indices into `accounts`, a < b
        std::size_t weight = 0;           ///< distinct shared texts
        std::vector<std::string> samples; ///< up to `max_samples`, sorted
    };
    std::vector<std::string> accounts;    ///< sorted cohort
    std::vector<Link> links;              ///< sorted by (a, b)

    /// weighted: edge weight = shared texts; otherwise 1 per edge.
    Graph graph(bool weighted = true) const;
};

/// Edge (a, b) iff the two accounts both wrote some exact (NFC, trimmed) text longer than
/// `min_len` scalars. Every cohort member is a node, even if isolated.
CoordGraph build_graph(const Corpus& corpus, const std::set<std::string>& cohort, std::size_t min_len = 10,
                       std::size_t max_samples = 3);

/// `a<TAB>b<TAB>weight` lines.
std::string edge_list(const CoordGraph& g);

struct Partition {
    std::vector<std::size_t> community;  ///< per node, numbered by first appearance
    double modularity = 0.0;
    std::vector<double> level_modularity;  ///< after each Louvain level
    std::size_t communities() const;
};

/// Q = sum_c [ in_c / 2m - (tot_c / 2m)^2 ]. Zero for an edgeless graph.
double modularity(const Graph& g, const std::vector<std::size_t>& community);

/// Louvain: local moves in seeded-shuffled node order (strict gain only, ties to the
/// lowest community id), then aggregation, until no level improves.
Partition louvain(const Graph& g, std::uint64_t seed);

/// Connected components; ids numbered by smallest member.
std::vector<std::size_t> components(const Graph& g);
/// Size of the largest component divided by n (0 for an empty graph).
double largest_component_fraction(const Graph& g);

struct AccountStats {
    std::string account_id;
    double lifespan_hours = 0.0;
    std::size_t messages = 0;
    std::size_t channels = 0;
    double mean_length = 0.0;  ///< Unicode scalars
};

/// One row per cohort account that has messages, sorted by id.
std::vector<AccountStats> account_stats(const Corpus& corpus, const std::set<std::string>& cohort);
std::string account_stats_csv(const std::vector<AccountStats>& rows);

struct Effectiveness {
    std::size_t messages = 0;
    std::size_t replies = 0;
    double mean = 0.0;  ///< replies per cohort message
    std::map<std::size_t, std::size_t> distribution;  ///< replies received -> messages
};

Effectiveness effectiveness(const Corpus& corpus, const std::set<std::string>& cohort);

struct StemShift {
    std::string stem;
    double freq_a = 0.0;
    double freq_b = 0.0;
    double score = 0.0;  ///< freq_a - freq_b
};

struct WordShift {
    std::size_t tokens_a = 0, tokens_b = 0;
    std::vector<StemShift> top_a;  ///< highest scores first
    std::vector<StemShift> top_b;  ///< lowest scores first
    std::vector<StemShift> all;    ///< sorted by stem
};

/// Word tokens (Unicode word breaks), lowercased and stemmed (Russian or English by script).
std::vector<std::string> stem_tokens(std::string_view text);

/// Throws Error(data) if either side has no tokens.
WordShift wordshift(const std::vector<std::string>& texts_a, const std::vector<std::string>& texts_b,
                    std::size_t top_k = 20);

}  // namespace propwatch
