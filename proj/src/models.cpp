#include "propwatch/models.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <nlohmann/json.hpp>

#include "propwatch/data.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/error.hpp"
#include "propwatch/random.hpp"

namespace propwatch {

using nlohmann::json;

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double logloss_from_margin(double z, int y) { return softplus(z) - (y ? z : 0.0); }

void check_xy(const Rows& X, const Labels& y) {
    if (X.size() != y.size()) fail(ErrorKind::data, "feature rows and labels differ in count");
    if (X.size() < 2) fail(ErrorKind::data, "need at least two training rows");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].size() != X[0].size()) fail(ErrorKind::data, "training rows differ in length");
        if (y[i] != 0 && y[i] != 1) fail(ErrorKind::data, "labels must be 0 or 1");
        for (double v : X[i])
            if (!std::isfinite(v)) fail(ErrorKind::data, "non-finite training value");
        pos += static_cast<std::size_t>(y[i]);
    }
    if (pos == 0 || pos == y.size()) fail(ErrorKind::data, "training labels contain a single class");
}

TrainingInfo basic_info(const Labels& y, std::uint64_t seed) {
    TrainingInfo info;
    info.rows = y.size();
    info.positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    info.seed = seed;
    return info;
}

}  // namespace

// ================================================================== GBT

double Tree::eval(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < static_cast<double>(n.threshold) ? n.left
                                                                                                              : n.right);
    }
    return nodes[i].value;
}

double GBTModel::margin(std::span<const double> x) const {
    if (x.size() != n_features)
        fail(ErrorKind::data, "feature vector has " + std::to_string(x.size()) + " values, model expects " +
                                  std::to_string(n_features));
    double m = base_score;
    for (const auto& t : trees) m += t.eval(x);
    return m;
}

double GBTModel::predict(std::span<const double> x) const { return sigmoid(margin(x)); }

std::vector<double> GBTModel::predict(const Rows& X) const {
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& x : X) out.push_back(predict(x));
    return out;
}

namespace {

struct TreeBuilder {
    const Rows& X;
    const std::vector<double>& g;
    const std::vector<double>& h;
    const GBTParams& p;
    Tree tree;
    std::vector<double> raw;  // unscaled leaf weight per node

    int build(std::vector<std::size_t> idx, int depth) {
        double G = 0, H = 0;
        for (auto i : idx) {
            G += g[i];
            H += h[i];
        }
        int self = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        raw.push_back(-G / (H + p.lambda));
        if (depth >= p.depth || idx.size() < 2 * p.min_child) return self;

        const double parent = G * G / (H + p.lambda);
        double best_gain = 1e-12;
        int best_f = -1;
        float best_thr = 0.0f;
        const std::size_t nf = X[idx[0]].size();
        std::vector<std::size_t> order = idx;
        for (std::size_t f = 0; f < nf; ++f) {
            std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return X[a][f] < X[b][f]; });
            double GL = 0, HL = 0;
            for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                GL += g[order[k]];
                HL += h[order[k]];
                double va = X[order[k]][f], vb = X[order[k + 1]][f];
                if (va == vb) continue;
                std::size_t nl = k + 1, nr = order.size() - nl;
                if (nl < p.min_child || nr < p.min_child) continue;
                double gain = GL * GL / (HL + p.lambda) + (G - GL) * (G - GL) / (H - HL + p.lambda) - parent;
                if (gain <= best_gain) continue;
                // The threshold is stored as float32; it must still separate va from vb.
                float thr = static_cast<float>(0.5 * (va + vb));
                if (static_cast<double>(thr) <= va) thr = std::nextafter(static_cast<float>(va), INFINITY);
                if (static_cast<double>(thr) <= va || static_cast<double>(thr) > vb) continue;
                best_gain = gain;
                best_f = static_cast<int>(f);
                best_thr = thr;
            }
        }
        if (best_f < 0) return self;

        std::vector<std::size_t> left, right;
        for (auto i : idx) (X[i][static_cast<std::size_t>(best_f)] < static_cast<double>(best_thr) ? left : right).push_back(i);
        int l = build(std::move(left), depth + 1);
        int r = build(std::move(right), depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(self)];
        node.feature = best_f;
        node.threshold = best_thr;
        node.left = l;
        node.right = r;
        return self;
    }
};

}  // namespace

GBTModel train_gbt(const Rows& X, const Labels& y, const GBTParams& params, const std::string& schema) {
    check_xy(X, y);
    if (params.trees < 0 || params.depth < 0 || params.learning_rate <= 0 || params.lambda < 0 ||
        params.subsample <= 0 || params.subsample > 1 || params.min_child < 1)
        fail(ErrorKind::usage, "invalid GBT parameters");
    const std::size_t n = X.size();
    GBTModel model;
    model.feature_schema = schema;
    model.n_features = X[0].size();
    model.params = params;
    model.info = basic_info(y, params.seed);
    double mean = static_cast<double>(model.info.positives) / static_cast<double>(n);
    model.base_score = static_cast<float>(std::log(mean / (1.0 - mean)));

    std::vector<double> margin(n, static_cast<double>(model.base_score));
    auto loss_of = [&](const std::vector<double>& m) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += logloss_from_margin(m[i], y[i]);
        return s / static_cast<double>(n);
    };
    double loss = loss_of(margin);
    model.train_loss.push_back(loss);

    Rng rng(params.seed);
    std::vector<double> g(n), h(n);
    for (int round = 0; round < params.trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            double pr = sigmoid(margin[i]);
            g[i] = pr - y[i];
            h[i] = std::max(pr * (1.0 - pr), 1e-16);
        }
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i)
            if (params.subsample >= 1.0 || rng.chance(params.subsample)) idx.push_back(i);
        if (idx.size() < 2) idx.resize(n), std::iota(idx.begin(), idx.end(), 0);

        TreeBuilder tb{X, g, h, params, {}, {}};
        tb.build(std::move(idx), 0);

        std::vector<double> next(n);
        bool accepted = false;
        double scale = 1.0;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt, scale *= 0.5) {
            for (std::size_t k = 0; k < tb.tree.nodes.size(); ++k)
                if (tb.tree.nodes[k].feature < 0)
                    tb.tree.nodes[k].value = static_cast<float>(params.learning_rate * scale * tb.raw[k]);
            for (std::size_t i = 0; i < n; ++i) next[i] = margin[i] + tb.tree.eval(X[i]);
            double nl = loss_of(next);
            if (nl <= loss) {
                accepted = true;
                loss = nl;
            }
        }
        if (!accepted) {
            for (auto& node : tb.tree.nodes) node.value = 0.0f;
            for (std::size_t i = 0; i < n; ++i) next[i] = margin[i] + tb.tree.eval(X[i]);
            loss = loss_of(next);
        }
        margin.swap(next);
        model.trees.push_back(std::move(tb.tree));
        model.train_loss.push_back(loss);
    }
    return model;
}

// ================================================================== MLP

std::string_view to_string(InputKind k) {
    switch (k) {
        case InputKind::reply: return "reply";
        case InputKind::trigger: return "trigger";
        case InputKind::pair: return "pair";
    }
    return "reply";
}

InputKind parse_input_kind(std::string_view s) {
    if (s == "reply") return InputKind::reply;
    if (s == "trigger") return InputKind::trigger;
    if (s == "pair") return InputKind::pair;
    fail(ErrorKind::usage, "unknown model input '" + std::string(s) + "'");
}

std::vector<std::size_t> MLPModel::layer_sizes() const {
    std::vector<std::size_t> s;
    if (W.empty()) return s;
    s.push_back(static_cast<std::size_t>(W.front().cols()));
    for (const auto& w : W) s.push_back(static_cast<std::size_t>(w.rows()));
    return s;
}

namespace {

struct Forward {
    std::vector<Eigen::MatrixXd> z;  // pre-activations per layer
    std::vector<Eigen::MatrixXd> a;  // a[0] = input, a[l+1] = activation of layer l
};

Forward forward(const MLPModel& m, const Eigen::MatrixXd& X) {
    Forward f;
    f.a.push_back(X);
    for (std::size_t l = 0; l < m.W.size(); ++l) {
        Eigen::MatrixXd z = m.W[l] * f.a.back();
        z.colwise() += m.b[l];
        f.z.push_back(z);
        if (l + 1 < m.W.size()) {
            f.a.push_back(z.cwiseMax(0.0));
        } else {
            f.a.push_back(z);  // logits; sigmoid applied by callers
        }
    }
    return f;
}

// Gradients of the mean BCE over the batch columns.
void backward(const MLPModel& m, const Forward& f, const Eigen::RowVectorXd& y, std::vector<Eigen::MatrixXd>& dW,
              std::vector<Eigen::VectorXd>& db) {
    const double B = static_cast<double>(y.size());
    const std::size_t L = m.W.size();
    dW.resize(L);
    db.resize(L);
    Eigen::MatrixXd delta = f.z.back().unaryExpr([](double z) { return sigmoid(z); });
    delta.row(0) -= y;
    delta /= B;
    for (std::size_t l = L; l-- > 0;) {
        dW[l] = delta * f.a[l].transpose();
        db[l] = delta.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd back = m.W[l].transpose() * delta;
        delta = back.cwiseProduct((f.z[l - 1].array() > 0.0).cast<double>().matrix());
    }
}

Eigen::MatrixXd to_matrix(const Rows& X, const std::vector<std::size_t>& idx, std::size_t in) {
    Eigen::MatrixXd M(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
        for (std::size_t r = 0; r < in; ++r) M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = X[idx[c]][r];
    return M;
}

void round_to_float(MLPModel& m) {
    for (auto& w : m.W) w = w.cast<float>().cast<double>();
    for (auto& b : m.b) b = b.cast<float>().cast<double>();
}

}  // namespace

double MLPModel::logit(std::span<const double> x) const {
    if (x.size() != input_size())
        fail(ErrorKind::data, "input has " + std::to_string(x.size()) + " values, model expects " +
                                  std::to_string(input_size()));
    Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd a = v;
    for (std::size_t l = 0; l < W.size(); ++l) {
        Eigen::VectorXd z = W[l] * a + b[l];
        a = l + 1 < W.size() ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
    }
    return a(0);
}

double MLPModel::predict(std::span<const double> x) const { return sigmoid(logit(x)); }

std::vector<double> MLPModel::predict(const Rows& X) const {
    std::vector<double> out;
    out.reserve(X.size());
    for (const auto& x : X) out.push_back(predict(x));
    return out;
}

std::size_t MLPModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W.size(); ++l) n += static_cast<std::size_t>(W[l].size() + b[l].size());
    return n;
}

std::vector<double> MLPModel::parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (std::size_t l = 0; l < W.size(); ++l) {
        p.insert(p.end(), W[l].data(), W[l].data() + W[l].size());
        p.insert(p.end(), b[l].data(), b[l].data() + b[l].size());
    }
    return p;
}

void MLPModel::set_parameters(std::span<const double> p) {
    if (p.size() != parameter_count()) fail(ErrorKind::data, "parameter vector has the wrong length");
    std::size_t k = 0;
    for (std::size_t l = 0; l < W.size(); ++l) {
        std::copy_n(p.data() + k, W[l].size(), W[l].data());
        k += static_cast<std::size_t>(W[l].size());
        std::copy_n(p.data() + k, b[l].size(), b[l].data());
        k += static_cast<std::size_t>(b[l].size());
    }
}

MLPModel init_mlp(std::size_t in, const MLPParams& params) {
    if (in == 0 || params.h1 == 0 || params.h2 == 0) fail(ErrorKind::usage, "layer sizes must be positive");
    MLPModel m;
    m.params = params;
    Rng rng(params.seed);
    std::vector<std::size_t> sizes{in, params.h1, params.h2, 1};
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        auto fan_in = static_cast<double>(sizes[l]), fan_out = static_cast<double>(sizes[l + 1]);
        bool output = l + 2 == sizes.size();
        double limit = output ? std::sqrt(6.0 / (fan_in + fan_out)) : std::sqrt(6.0 / fan_in);
        Eigen::MatrixXd w(static_cast<Eigen::Index>(sizes[l + 1]), static_cast<Eigen::Index>(sizes[l]));
        for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = rng.uniform(-limit, limit);
        m.W.push_back(std::move(w));
        m.b.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[l + 1])));
    }
    return m;
}

double mlp_loss(const MLPModel& model, const Rows& X, const Labels& y) {
    if (X.empty()) return 0.0;
    const std::size_t in = model.input_size();
    double total = 0.0;
    for (std::size_t start = 0; start < X.size(); start += 512) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(X.size(), start + 512); ++i) idx.push_back(i);
        auto f = forward(model, to_matrix(X, idx, in));
        for (std::size_t c = 0; c < idx.size(); ++c) total += logloss_from_margin(f.a.back()(0, static_cast<Eigen::Index>(c)), y[idx[c]]);
    }
    return total / static_cast<double>(X.size());
}

MLPModel train_mlp(const Rows& X, const Labels& y, const MLPParams& params, InputKind kind, std::size_t embedding_dim) {
    check_xy(X, y);
    const std::size_t in = X[0].size();
    if (embedding_dim == 0) embedding_dim = kind == InputKind::pair ? in / 2 : in;
    if (in != (kind == InputKind::pair ? 2 * embedding_dim : embedding_dim))
        fail(ErrorKind::data, "input width " + std::to_string(in) + " does not match embedding dim " +
                                  std::to_string(embedding_dim) + " for a " + std::string(to_string(kind)) + " model");
    if (params.epochs < 0 || params.batch == 0 || params.learning_rate <= 0) fail(ErrorKind::usage, "invalid MLP parameters");

    MLPModel m = init_mlp(in, params);
    m.kind = kind;
    m.embedding_dim = embedding_dim;
    m.info = basic_info(y, params.seed);

    // Canonical order makes the result independent of the caller's row order.
    std::vector<std::size_t> canon(X.size());
    std::iota(canon.begin(), canon.end(), 0);
    std::stable_sort(canon.begin(), canon.end(), [&](auto a, auto b) {
        return y[a] != y[b] ? y[a] < y[b] : X[a] < X[b];
    });
    Rows Xc;
    Labels yc;
    Xc.reserve(X.size());
    for (auto i : canon) {
        Xc.push_back(X[i]);
        yc.push_back(y[i]);
    }

    m.epoch_loss.push_back(mlp_loss(m, Xc, yc));
    Rng rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t L = m.W.size();
    std::vector<Eigen::MatrixXd> mW, vW, dW;
    std::vector<Eigen::VectorXd> mb, vb, db;
    for (std::size_t l = 0; l < L; ++l) {
        mW.push_back(Eigen::MatrixXd::Zero(m.W[l].rows(), m.W[l].cols()));
        vW.push_back(mW.back());
        mb.push_back(Eigen::VectorXd::Zero(m.b[l].size()));
        vb.push_back(mb.back());
    }
    std::vector<std::size_t> order(Xc.size());
    std::iota(order.begin(), order.end(), 0);
    long step = 0;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += params.batch) {
            std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(std::min(order.size(), start + params.batch)));
            Eigen::RowVectorXd yb(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t c = 0; c < idx.size(); ++c) yb(static_cast<Eigen::Index>(c)) = yc[idx[c]];
            auto f = forward(m, to_matrix(Xc, idx, in));
            backward(m, f, yb, dW, db);
            ++step;
            const double c1 = 1.0 - std::pow(params.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(params.beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < L; ++l) {
                mW[l] = params.beta1 * mW[l] + (1 - params.beta1) * dW[l];
                vW[l] = params.beta2 * vW[l] + (1 - params.beta2) * dW[l].cwiseProduct(dW[l]);
                m.W[l].array() -= params.learning_rate * (mW[l].array() / c1) / ((vW[l].array() / c2).sqrt() + params.epsilon);
                mb[l] = params.beta1 * mb[l] + (1 - params.beta1) * db[l];
                vb[l] = params.beta2 * vb[l] + (1 - params.beta2) * db[l].cwiseProduct(db[l]);
                m.b[l].array() -= params.learning_rate * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + params.epsilon);
            }
        }
        m.epoch_loss.push_back(mlp_loss(m, Xc, yc));
    }
    round_to_float(m);
    // The last entry describes the weights as stored.
    m.epoch_loss.back() = mlp_loss(m, Xc, yc);
    return m;
}

std::vector<double> mlp_gradient(const MLPModel& model, std::span<const double> x, int y) {
    if (x.size() != model.input_size()) fail(ErrorKind::data, "input has the wrong width");
    Eigen::MatrixXd X = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::RowVectorXd yy(1);
    yy(0) = y;
    auto f = forward(model, X);
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
    backward(model, f, yy, dW, db);
    std::vector<double> g;
    g.reserve(model.parameter_count());
    for (std::size_t l = 0; l < dW.size(); ++l) {
        g.insert(g.end(), dW[l].data(), dW[l].data() + dW[l].size());
        g.insert(g.end(), db[l].data(), db[l].data() + db[l].size());
    }
    return g;
}

GradCheck grad_check(const MLPModel& model, std::span<const double> x, int y, double h, std::size_t max_params,
                     std::uint64_t seed) {
    GradCheck r;
    auto analytic = mlp_gradient(model, x, y);
    MLPModel probe = model;
    auto params = model.parameters();
    Eigen::MatrixXd X = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    auto pattern = [&](const MLPModel& m) {
        auto f = forward(m, X);
        std::vector<bool> s;
        for (std::size_t l = 0; l + 1 < f.z.size(); ++l)
            for (Eigen::Index k = 0; k < f.z[l].size(); ++k) s.push_back(f.z[l](k) > 0.0);
        return std::make_pair(s, f.a.back()(0, 0));
    };
    const auto base = pattern(model).first;

    std::vector<std::size_t> which(params.size());
    std::iota(which.begin(), which.end(), 0);
    if (max_params > 0 && max_params < which.size()) {
        Rng rng(seed);
        rng.shuffle(which);
        which.resize(max_params);
        std::sort(which.begin(), which.end());
    }
    for (std::size_t k : which) {
        const double orig = params[k];
        params[k] = orig + h;
        probe.set_parameters(params);
        auto [sp, zp] = pattern(probe);
        params[k] = orig - h;
        probe.set_parameters(params);
        auto [sm, zm] = pattern(probe);
        params[k] = orig;
        if (sp != base || sm != base) {
            ++r.skipped_kinks;
            continue;
        }
        double numeric = (logloss_from_margin(zp, y) - logloss_from_margin(zm, y)) / (2.0 * h);
        double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[k] - numeric) / denom);
        ++r.checked;
    }
    return r;
}

// ========================================================== combination

bool ensemble_predict(double p_trigger, double p_reply, EnsembleMode mode) {
    if (mode == EnsembleMode::any) return p_trigger >= 0.5 || p_reply >= 0.5;
    return p_trigger + p_reply >= 1.0;
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<double> build_pair_vector(std::optional<std::span<const float>> trigger, std::span<const float> reply) {
    if (trigger && trigger->size() != reply.size()) fail(ErrorKind::data, "trigger and reply vectors differ in dimension");
    std::vector<double> out(2 * reply.size(), 0.0);
    if (trigger) std::copy(trigger->begin(), trigger->end(), out.begin());
    std::copy(reply.begin(), reply.end(), out.begin() + static_cast<long>(reply.size()));
    return out;
}

Verdict make_verdict(double score, double threshold, std::string model_id) {
    Verdict v;
    v.score = score;
    v.threshold = threshold;
    v.label = score >= threshold ? Label::propaganda : Label::user;
    v.model_id = std::move(model_id);
    return v;
}

// ========================================================== persistence

namespace {

std::string b64_floats(const double* p, std::size_t n) {
    std::string raw;
    raw.reserve(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p[i]));
        for (int k = 0; k < 4; ++k) raw.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
    }
    std::string out(sodium_base64_ENCODED_LEN(raw.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(raw.data()), raw.size(),
                      sodium_base64_VARIANT_ORIGINAL);
    out.pop_back();  // trailing NUL
    return out;
}

std::string b64_floats(const std::vector<float>& v) {
    std::vector<double> d(v.begin(), v.end());
    return b64_floats(d.data(), d.size());
}

std::vector<double> unb64_floats(const std::string& s, std::size_t expect) {
    std::string raw(s.size(), '\0');
    std::size_t len = 0;
    if (sodium_base642bin(reinterpret_cast<unsigned char*>(raw.data()), raw.size(), s.data(), s.size(), nullptr, &len,
                          nullptr, sodium_base64_VARIANT_ORIGINAL) != 0)
        fail(ErrorKind::format, "bad base64 blob in model file");
    if (len != 4 * expect) fail(ErrorKind::format, "weight blob has the wrong length");
    std::vector<double> out(expect);
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    for (std::size_t i = 0; i < expect; ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[4 * i + k]) << (8 * k);
        float f = std::bit_cast<float>(bits);
        if (!std::isfinite(f)) fail(ErrorKind::data, "non-finite weight in model file");
        out[i] = f;
    }
    return out;
}

std::string schema_hash(const std::string& schema) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(schema)));
    return buf;
}

json info_json(const TrainingInfo& i) {
    return {{"window_start", i.window_start}, {"window_end", i.window_end}, {"rows", i.rows},
            {"positives", i.positives},       {"seed", i.seed}};
}

TrainingInfo info_from(const json& j) {
    TrainingInfo i;
    i.window_start = j.value("window_start", "");
    i.window_end = j.value("window_end", "");
    i.rows = j.value("rows", std::size_t{0});
    i.positives = j.value("positives", std::size_t{0});
    i.seed = j.value("seed", std::uint64_t{0});
    return i;
}

json gbt_json(const GBTModel& m) {
    json trees = json::array();
    for (const auto& t : m.trees) {
        std::vector<int> feat, left, right;
        std::vector<float> thr, val;
        for (const auto& n : t.nodes) {
            feat.push_back(n.feature);
            left.push_back(n.left);
            right.push_back(n.right);
            thr.push_back(n.threshold);
            val.push_back(n.value);
        }
        trees.push_back({{"feature", feat}, {"left", left}, {"right", right}, {"threshold", b64_floats(thr)},
                         {"value", b64_floats(val)}});
    }
    const auto& p = m.params;
    return {{"kind", "gbt"},
            {"version", 1},
            {"feature_schema", m.feature_schema},
            {"feature_schema_hash", schema_hash(m.feature_schema)},
            {"n_features", m.n_features},
            {"base_score", b64_floats(std::vector<float>{m.base_score})},
            {"parameters",
             {{"trees", p.trees},
              {"depth", p.depth},
              {"learning_rate", p.learning_rate},
              {"min_child", p.min_child},
              {"lambda", p.lambda},
              {"subsample", p.subsample},
              {"seed", p.seed}}},
            {"training", info_json(m.info)},
            {"train_loss", m.train_loss},
            {"trees", trees}};
}

json mlp_json(const MLPModel& m) {
    json layers = json::array();
    for (std::size_t l = 0; l < m.W.size(); ++l)
        layers.push_back({{"rows", m.W[l].rows()},
                          {"cols", m.W[l].cols()},
                          {"weights", b64_floats(m.W[l].data(), static_cast<std::size_t>(m.W[l].size()))},
                          {"bias", b64_floats(m.b[l].data(), static_cast<std::size_t>(m.b[l].size()))}});
    const auto& p = m.params;
    return {{"kind", "mlp"},
            {"version", 1},
            {"input", std::string(to_string(m.kind))},
            {"embedding_dim", m.embedding_dim},
            {"provenance", m.provenance},
            {"layer_sizes", m.layer_sizes()},
            {"activation", {{"hidden", "relu"}, {"output", "sigmoid"}}},
            {"parameters",
             {{"h1", p.h1},
              {"h2", p.h2},
              {"epochs", p.epochs},
              {"batch", p.batch},
              {"learning_rate", p.learning_rate},
              {"beta1", p.beta1},
              {"beta2", p.beta2},
              {"epsilon", p.epsilon},
              {"seed", p.seed}}},
            {"training", info_json(m.info)},
            {"epoch_loss", m.epoch_loss},
            {"layers", layers}};
}

GBTModel gbt_from(const json& j) {
    GBTModel m;
    m.feature_schema = j.at("feature_schema").get<std::string>();
    if (j.at("feature_schema_hash").get<std::string>() != schema_hash(m.feature_schema))
        fail(ErrorKind::format, "feature schema hash does not match the stored schema");
    m.n_features = j.at("n_features").get<std::size_t>();
    m.base_score = static_cast<float>(unb64_floats(j.at("base_score").get<std::string>(), 1)[0]);
    const auto& p = j.at("parameters");
    m.params.trees = p.at("trees");
    m.params.depth = p.at("depth");
    m.params.learning_rate = p.at("learning_rate");
    m.params.min_child = p.at("min_child");
    m.params.lambda = p.at("lambda");
    m.params.subsample = p.value("subsample", 1.0);
    m.params.seed = p.value("seed", std::uint64_t{0});
    m.info = info_from(j.at("training"));
    m.train_loss = j.value("train_loss", std::vector<double>{});
    for (const auto& t : j.at("trees")) {
        auto feat = t.at("feature").get<std::vector<int>>();
        auto left = t.at("left").get<std::vector<int>>();
        auto right = t.at("right").get<std::vector<int>>();
        auto thr = unb64_floats(t.at("threshold").get<std::string>(), feat.size());
        auto val = unb64_floats(t.at("value").get<std::string>(), feat.size());
        if (left.size() != feat.size() || right.size() != feat.size() || feat.empty())
            fail(ErrorKind::format, "tree arrays differ in length");
        Tree tree;
        for (std::size_t k = 0; k < feat.size(); ++k) {
            TreeNode n{feat[k], static_cast<float>(thr[k]), left[k], right[k], static_cast<float>(val[k])};
            if (n.feature >= 0) {
                auto bad = [&](int c) { return c <= static_cast<int>(k) || c >= static_cast<int>(feat.size()); };
                if (static_cast<std::size_t>(n.feature) >= m.n_features || bad(n.left) || bad(n.right))
                    fail(ErrorKind::format, "tree node references an invalid feature or child");
            }
            tree.nodes.push_back(n);
        }
        m.trees.push_back(std::move(tree));
    }
    return m;
}

MLPModel mlp_from(const json& j) {
    MLPModel m;
    m.kind = parse_input_kind(j.at("input").get<std::string>());
    m.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    m.provenance = j.value("provenance", "");
    const auto& p = j.at("parameters");
    m.params.h1 = p.at("h1");
    m.params.h2 = p.at("h2");
    m.params.epochs = p.at("epochs");
    m.params.batch = p.at("batch");
    m.params.learning_rate = p.at("learning_rate");
    m.params.beta1 = p.at("beta1");
    m.params.beta2 = p.at("beta2");
    m.params.epsilon = p.at("epsilon");
    m.params.seed = p.value("seed", std::uint64_t{0});
    m.info = info_from(j.at("training"));
    m.epoch_loss = j.value("epoch_loss", std::vector<double>{});
    Eigen::Index prev = -1;
    for (const auto& l : j.at("layers")) {
        auto r = l.at("rows").get<Eigen::Index>(), c = l.at("cols").get<Eigen::Index>();
        if (r <= 0 || c <= 0 || (prev >= 0 && c != prev)) fail(ErrorKind::format, "layer shapes do not chain");
        auto w = unb64_floats(l.at("weights").get<std::string>(), static_cast<std::size_t>(r * c));
        auto b = unb64_floats(l.at("bias").get<std::string>(), static_cast<std::size_t>(r));
        m.W.push_back(Eigen::Map<Eigen::MatrixXd>(w.data(), r, c));
        m.b.push_back(Eigen::Map<Eigen::VectorXd>(b.data(), r));
        prev = r;
    }
    if (m.W.empty() || prev != 1) fail(ErrorKind::format, "MLP must end in a single output");
    std::size_t expect_in = m.kind == InputKind::pair ? 2 * m.embedding_dim : m.embedding_dim;
    if (m.input_size() != expect_in) fail(ErrorKind::format, "MLP input width does not match its embedding dim");
    return m;
}

}  // namespace

std::string serialize_model(const Model& m) {
    if (sodium_init() < 0) fail(ErrorKind::runtime, "libsodium init failed");
    json j = std::holds_alternative<GBTModel>(m) ? gbt_json(std::get<GBTModel>(m)) : mlp_json(std::get<MLPModel>(m));
    return j.dump(1) + "\n";
}

void save_model(const Model& m, const std::filesystem::path& path) { write_text_file(path, serialize_model(m)); }

Model parse_model(std::string_view text) {
    if (sodium_init() < 0) fail(ErrorKind::runtime, "libsodium init failed");
    try {
        auto j = json::parse(text);
        auto kind = j.at("kind").get<std::string>();
        if (j.at("version").get<int>() != 1) fail(ErrorKind::format, "unsupported model version");
        if (kind == "gbt") return gbt_from(j);
        if (kind == "mlp") return mlp_from(j);
        fail(ErrorKind::format, "unknown model kind '" + kind + "'");
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("malformed model file: ") + e.what());
    }
}

Model load_model(const std::filesystem::path& path) { return parse_model(read_text_file(path)); }

GBTModel load_gbt(const std::filesystem::path& path, const std::string& expected_schema) {
    auto m = load_model(path);
    if (!std::holds_alternative<GBTModel>(m)) fail(ErrorKind::format, path.string() + " is not a GBT model");
    auto& g = std::get<GBTModel>(m);
    if (g.feature_schema != expected_schema)
        fail(ErrorKind::format, "feature schema mismatch: model has '" + g.feature_schema + "', expected '" +
                                    expected_schema + "'");
    return std::move(g);
}

MLPModel load_mlp(const std::filesystem::path& path, InputKind kind, std::size_t expected_dim) {
    auto m = load_model(path);
    if (!std::holds_alternative<MLPModel>(m)) fail(ErrorKind::format, path.string() + " is not an MLP model");
    auto& mlp = std::get<MLPModel>(m);
    if (mlp.kind != kind)
        fail(ErrorKind::format, path.string() + " is a " + std::string(to_string(mlp.kind)) + " model, expected " +
                                    std::string(to_string(kind)));
    if (expected_dim && mlp.embedding_dim != expected_dim)
        fail(ErrorKind::format, "embedding dim mismatch: model " + std::to_string(mlp.embedding_dim) + ", store " +
                                    std::to_string(expected_dim));
    return std::move(mlp);
}

std::string model_id(const Model& m) {
    std::string kind = std::holds_alternative<GBTModel>(m) ? "gbt" : "mlp-" + std::string(to_string(std::get<MLPModel>(m).kind));
    return kind + "-" + schema_hash(serialize_model(m)).substr(0, 8);
}

}  // namespace propwatch
