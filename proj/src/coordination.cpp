#include "propwatch/coordination.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "propwatch/error.hpp"
#include "propwatch/random.hpp"
#include "propwatch/stemmer.hpp"
#include "propwatch/text.hpp"

namespace propwatch {

void Graph::add(std::size_t u, std::size_t v, double w) {
    if (u > v) std::swap(u, v);
    if (v >= n) fail(ErrorKind::data, "edge endpoint out of range");
    edges.push_back({u, v, w});
}

double Graph::total_weight() const {
    double m = 0.0;
    for (const auto& e : edges) m += e.w;
    return m;
}

Graph CoordGraph::graph(bool weighted) const {
    Graph g;
    g.n = accounts.size();
    for (const auto& l : links) g.add(l.a, l.b, weighted ? static_cast<double>(l.weight) : 1.0);
    return g;
}

CoordGraph build_graph(const Corpus& corpus, const std::set<std::string>& cohort, std::size_t min_len,
                       std::size_t max_samples) {
    CoordGraph cg;
    cg.accounts.assign(cohort.begin(), cohort.end());
    std::unordered_map<std::string, std::size_t> node;
    for (std::size_t i = 0; i < cg.accounts.size(); ++i) node.emplace(cg.accounts[i], i);

    std::map<std::string, std::set<std::size_t>> authors;
    for (const auto& m : corpus.messages()) {
        if (!m.account_id) continue;
        auto it = node.find(*m.account_id);
        if (it == node.end()) continue;
        auto t = text::normalize(m.text);
        if (text::scalar_count(t) <= min_len) continue;
        authors[std::move(t)].insert(it->second);
    }

    std::map<std::pair<std::size_t, std::size_t>, CoordGraph::Link> links;
    for (const auto& [t, who] : authors) {
        if (who.size() < 2) continue;
        std::vector<std::size_t> v(who.begin(), who.end());
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = i + 1; j < v.size(); ++j) {
                auto& l = links[{v[i], v[j]}];
                l.a = v[i];
                l.b = v[j];
                ++l.weight;
                if (l.samples.size() < max_samples) l.samples.push_back(t);
            }
    }
    for (auto& [_, l] : links) cg.links.push_back(std::move(l));
    return cg;
}

std::string edge_list(const CoordGraph& g) {
    std::string out;
    for (const auto& l : g.links)
        out += g.accounts[l.a] + "\t" + g.accounts[l.b] + "\t" + std::to_string(l.weight) + "\n";
    return out;
}

std::size_t Partition::communities() const {
    return community.empty() ? 0 : *std::max_element(community.begin(), community.end()) + 1;
}

double modularity(const Graph& g, const std::vector<std::size_t>& community) {
    if (community.size() != g.n) fail(ErrorKind::data, "partition size does not match graph");
    std::unordered_map<std::size_t, double> in, tot;
    double m2 = 0.0;
    for (const auto& e : g.edges) {
        m2 += 2.0 * e.w;
        tot[community[e.u]] += e.w;
        tot[community[e.v]] += e.w;
        if (community[e.u] == community[e.v]) in[community[e.u]] += 2.0 * e.w;
    }
    if (m2 == 0.0) return 0.0;
    double q = 0.0;
    for (const auto& [c, t] : tot) {
        auto it = in.find(c);
        double ic = it == in.end() ? 0.0 : it->second;
        q += ic / m2 - (t / m2) * (t / m2);
    }
    return q;
}

namespace {

struct LevelGraph {
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;  // no self entries
    std::vector<double> self;                                      // internal weight, A_ii = 2 * self
    std::vector<double> degree;
};

LevelGraph level_from(const Graph& g) {
    LevelGraph lg;
    lg.adj.resize(g.n);
    lg.self.assign(g.n, 0.0);
    lg.degree.assign(g.n, 0.0);
    std::map<std::pair<std::size_t, std::size_t>, double> merged;
    for (const auto& e : g.edges) {
        if (e.u == e.v) {
            lg.self[e.u] += e.w;
        } else {
            merged[{e.u, e.v}] += e.w;
        }
        lg.degree[e.u] += e.w;
        lg.degree[e.v] += e.w;
    }
    for (const auto& [uv, w] : merged) {
        lg.adj[uv.first].push_back({uv.second, w});
        lg.adj[uv.second].push_back({uv.first, w});
    }
    return lg;
}

// One round of local moves. Returns community per node (not renumbered) and whether anything moved.
bool local_moves(const LevelGraph& lg, double m2, Rng& rng, std::vector<std::size_t>& comm) {
    const std::size_t n = lg.adj.size();
    comm.resize(n);
    std::iota(comm.begin(), comm.end(), 0);
    std::vector<double> tot = lg.degree;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<double> link(n, 0.0);
    std::vector<std::size_t> touched;
    constexpr double eps = 1e-12;
    bool any = false;
    int passes = 0;
    // The pass cap only guards against floating-point cycling.
    for (bool moved = true; moved && passes < 1000; ++passes) {
        moved = false;
        for (std::size_t i : order) {
            const std::size_t own = comm[i];
            const double k = lg.degree[i];
            touched.clear();
            for (auto [j, w] : lg.adj[i]) {
                if (link[comm[j]] == 0.0) touched.push_back(comm[j]);
                link[comm[j]] += w;
            }
            tot[own] -= k;
            const double stay = link[own] - tot[own] * k / m2;
            std::size_t best = own;
            double best_gain = stay;
            for (std::size_t c : touched) {
                if (c == own) continue;
                double gain = link[c] - tot[c] * k / m2;
                if (gain <= stay + eps) continue;
                if (best == own || gain > best_gain + eps || (std::abs(gain - best_gain) <= eps && c < best)) {
                    best = c;
                    best_gain = gain;
                }
            }
            tot[best] += k;
            comm[i] = best;
            for (std::size_t c : touched) link[c] = 0.0;
            if (best != own) moved = any = true;
        }
    }
    return any;
}

void renumber(std::vector<std::size_t>& comm) {
    std::unordered_map<std::size_t, std::size_t> ids;
    for (auto& c : comm) {
        auto [it, _] = ids.try_emplace(c, ids.size());
        c = it->second;
    }
}

}  // namespace

Partition louvain(const Graph& g, std::uint64_t seed) {
    Partition p;
    p.community.resize(g.n);
    std::iota(p.community.begin(), p.community.end(), 0);
    const double m2 = 2.0 * g.total_weight();
    if (g.n == 0 || m2 == 0.0) {
        p.modularity = modularity(g, p.community);
        return p;
    }
    Rng rng(seed);
    Graph cur = g;
    double best_q = modularity(g, p.community);
    for (;;) {
        LevelGraph lg = level_from(cur);
        std::vector<std::size_t> comm;
        if (!local_moves(lg, m2, rng, comm)) break;
        renumber(comm);
        std::vector<std::size_t> candidate(g.n);
        for (std::size_t i = 0; i < g.n; ++i) candidate[i] = comm[p.community[i]];
        double q = modularity(g, candidate);
        if (q <= best_q + 1e-12) break;
        best_q = q;
        p.community = std::move(candidate);
        p.level_modularity.push_back(q);

        std::size_t k = *std::max_element(comm.begin(), comm.end()) + 1;
        Graph next;
        next.n = k;
        std::map<std::pair<std::size_t, std::size_t>, double> agg;
        for (const auto& e : cur.edges) {
            auto a = comm[e.u], b = comm[e.v];
            if (a > b) std::swap(a, b);
            agg[{a, b}] += e.w;
        }
        for (const auto& [ab, w] : agg) next.add(ab.first, ab.second, w);
        cur = std::move(next);
    }
    renumber(p.community);
    p.modularity = modularity(g, p.community);
    return p;
}

std::vector<std::size_t> components(const Graph& g) {
    std::vector<std::size_t> parent(g.n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& e : g.edges) {
        auto a = find(e.u), b = find(e.v);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<std::size_t> out(g.n);
    for (std::size_t i = 0; i < g.n; ++i) out[i] = find(i);
    return out;
}

double largest_component_fraction(const Graph& g) {
    if (g.n == 0) return 0.0;
    std::unordered_map<std::size_t, std::size_t> size;
    std::size_t best = 0;
    for (auto c : components(g)) best = std::max(best, ++size[c]);
    return static_cast<double>(best) / static_cast<double>(g.n);
}

std::vector<AccountStats> account_stats(const Corpus& corpus, const std::set<std::string>& cohort) {
    std::vector<AccountStats> out;
    for (const auto& a : build_accounts(corpus)) {
        if (!cohort.contains(a.account_id)) continue;
        AccountStats s;
        s.account_id = a.account_id;
        s.lifespan_hours = static_cast<double>((a.last_seen - a.first_seen).count()) / 3600.0;
        s.messages = a.messages.size();
        s.channels = a.channels_active.size();
        double len = 0.0;
        for (auto i : a.messages) len += static_cast<double>(text::scalar_count(corpus.at(i).text));
        s.mean_length = len / static_cast<double>(s.messages);
        out.push_back(std::move(s));
    }
    return out;
}

std::string account_stats_csv(const std::vector<AccountStats>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "account_id,lifespan_hours,messages,channels,mean_length\n";
    for (const auto& r : rows)
        out << r.account_id << ',' << r.lifespan_hours << ',' << r.messages << ',' << r.channels << ','
            << r.mean_length << '\n';
    return out.str();
}

Effectiveness effectiveness(const Corpus& corpus, const std::set<std::string>& cohort) {
    Effectiveness e;
    auto msgs = corpus.messages();
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        if (!msgs[i].account_id || !cohort.contains(*msgs[i].account_id)) continue;
        std::size_t r = corpus.replies_to(i).size();
        ++e.messages;
        e.replies += r;
        ++e.distribution[r];
    }
    e.mean = e.messages ? static_cast<double>(e.replies) / static_cast<double>(e.messages) : 0.0;
    return e;
}

std::vector<std::string> stem_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (auto& w : text::words(text::to_lower(s))) out.push_back(stem::auto_stem(w));
    return out;
}

WordShift wordshift(const std::vector<std::string>& texts_a, const std::vector<std::string>& texts_b,
                    std::size_t top_k) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    WordShift ws;
    for (const auto& t : texts_a)
        for (auto& s : stem_tokens(t)) {
            ++counts[s].first;
            ++ws.tokens_a;
        }
    for (const auto& t : texts_b)
        for (auto& s : stem_tokens(t)) {
            ++counts[s].second;
            ++ws.tokens_b;
        }
    if (ws.tokens_a == 0 || ws.tokens_b == 0) fail(ErrorKind::data, "wordshift needs tokens on both sides");
    for (const auto& [stem, c] : counts) {
        StemShift s;
        s.stem = stem;
        s.freq_a = static_cast<double>(c.first) / static_cast<double>(ws.tokens_a);
        s.freq_b = static_cast<double>(c.second) / static_cast<double>(ws.tokens_b);
        s.score = s.freq_a - s.freq_b;
        ws.all.push_back(std::move(s));
    }
    auto ranked = ws.all;
    std::sort(ranked.begin(), ranked.end(), [](const StemShift& x, const StemShift& y) {
        return x.score != y.score ? x.score > y.score : x.stem < y.stem;
    });
    for (const auto& s : ranked) {
        if (ws.top_a.size() == top_k || s.score <= 0.0) break;
        ws.top_a.push_back(s);
    }
    std::sort(ranked.begin(), ranked.end(), [](const StemShift& x, const StemShift& y) {
        return x.score != y.score ? x.score < y.score : x.stem < y.stem;
    });
    for (const auto& s : ranked) {
        if (ws.top_b.size() == top_k || s.score >= 0.0) break;
        ws.top_b.push_back(s);
    }
    return ws;
}

}  // namespace propwatch
