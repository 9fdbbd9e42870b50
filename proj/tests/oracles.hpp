#pragma once

// Brute-force reference implementations shared by the unit tests and the acceptance binary.
// Each one follows the definition directly and shares no code with the library.

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "propwatch/coordination.hpp"
#include "propwatch/corpus.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/topics.hpp"

namespace oracle {

// Q = 1/2m * sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j) over a dense adjacency matrix.
inline double modularity(const propwatch::Graph& g, const std::vector<std::size_t>& c) {
    std::vector<std::vector<double>> a(g.n, std::vector<double>(g.n, 0.0));
    for (const auto& e : g.edges) {
        a[e.u][e.v] += e.w;
        a[e.v][e.u] += e.w;
    }
    std::vector<double> k(g.n, 0.0);
    double m2 = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            k[i] += a[i][j];
            m2 += a[i][j];
        }
    if (m2 == 0.0) return 0.0;
    double q = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j)
            if (c[i] == c[j]) q += a[i][j] - k[i] * k[j] / m2;
    return q / m2;
}

// Density-reachability: union-find over core points, clusters numbered by their smallest
// core index, border points take the smallest cluster id among adjacent cores.
inline std::vector<int> dbscan(const std::vector<propwatch::Vector>& p, double eps, std::size_t min_pts, bool cosine) {
    const std::size_t n = p.size();
    auto dist = [&](std::size_t a, std::size_t b) {
        double s = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < p[a].size(); ++k) {
            if (cosine) {
                s += double(p[a][k]) * p[b][k];
                na += double(p[a][k]) * p[a][k];
                nb += double(p[b][k]) * p[b][k];
            } else {
                s += (double(p[a][k]) - p[b][k]) * (double(p[a][k]) - p[b][k]);
            }
        }
        return cosine ? 1.0 - s / std::sqrt(na * nb) : std::sqrt(s);
    };
    std::vector<std::vector<bool>> close(n, std::vector<bool>(n));
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < n; ++j) c += close[i][j] = dist(i, j) <= eps || i == j;
        core[i] = c >= min_pts;
    }
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = find(parent[x]);
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (core[i] && core[j] && close[i][j]) {
                auto a = find(i), b = find(j);
                parent[std::max(a, b)] = std::min(a, b);
            }
    std::map<std::size_t, int> id;
    std::vector<int> out(n, propwatch::kNoise);
    for (std::size_t i = 0; i < n; ++i)
        if (core[i]) {
            auto [it, _] = id.try_emplace(find(i), static_cast<int>(id.size()));
            out[i] = it->second;
        }
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        for (std::size_t j = 0; j < n; ++j)
            if (core[j] && close[i][j] && (out[i] == propwatch::kNoise || out[j] < out[i])) out[i] = out[j];
    }
    return out;
}

// Code points of valid UTF-8: every byte that is not a continuation byte starts one.
inline std::size_t utf8_length(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
}

// Accounts reachable from `seeds` when two accounts are related iff both wrote the same text
// longer than `min_len` code points. Boolean Warshall closure over the account relation.
// Assumes texts are already NFC and trimmed.
inline std::set<std::string> augmentation_closure(const propwatch::Corpus& corpus, const std::set<std::string>& seeds,
                                                  std::size_t min_len = 30) {
    std::map<std::string, std::size_t> index;
    std::vector<std::string> ids;
    std::map<std::string, std::set<std::size_t>> authors;
    for (const auto& m : corpus.messages()) {
        if (!m.account_id) continue;
        auto [it, fresh] = index.try_emplace(*m.account_id, ids.size());
        if (fresh) ids.push_back(*m.account_id);
        if (utf8_length(m.text) > min_len) authors[m.text].insert(it->second);
    }
    const std::size_t n = ids.size();
    std::vector<std::vector<char>> r(n, std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) r[i][i] = 1;
    for (const auto& [text, who] : authors)
        for (auto a : who)
            for (auto b : who) r[a][b] = 1;
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (r[i][k])
                for (std::size_t j = 0; j < n; ++j) r[i][j] |= r[k][j];
    std::set<std::string> out(seeds.begin(), seeds.end());
    for (const auto& s : seeds) {
        auto it = index.find(s);
        if (it == index.end()) continue;
        for (std::size_t j = 0; j < n; ++j)
            if (r[it->second][j]) out.insert(ids[j]);
    }
    return out;
}

// Planted partition: nodes [0, n/2) and [n/2, n), edge probability p_in within a block and
// p_out across.
inline propwatch::Graph two_blocks(std::size_t n, double p_in, double p_out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    propwatch::Graph g;
    g.n = n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (u(rng) < ((i < n / 2) == (j < n / 2) ? p_in : p_out)) g.add(i, j);
    return g;
}

// Nodes in the majority community of their planted block. Zero when both blocks share a
// majority community, so a single merged community never counts as agreement.
inline std::size_t block_agreement(const std::vector<std::size_t>& community) {
    const std::size_t n = community.size();
    auto majority = [&](std::size_t lo, std::size_t hi) {
        std::map<std::size_t, std::size_t> count;
        for (std::size_t i = lo; i < hi; ++i) ++count[community[i]];
        auto best = count.begin();
        for (auto it = count.begin(); it != count.end(); ++it)
            if (it->second > best->second) best = it;
        return *best;
    };
    auto [ca, na] = majority(0, n / 2);
    auto [cb, nb] = majority(n / 2, n);
    return ca == cb ? 0 : na + nb;
}

}  // namespace oracle
