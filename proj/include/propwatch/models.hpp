#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "propwatch/labeling.hpp"

namespace propwatch {

using Rows = std::vector<std::vector<double>>;
using Labels = std::vector<int>;  ///< 1 = propaganda, 0 = user

struct TrainingInfo {
    std::string window_start;  ///< ISO-8601, empty if unknown
    std::string window_end;
    std::size_t rows = 0;
    std::size_t positives = 0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------- GBT

struct GBTParams {
    int trees = 200;
    int depth = 4;
    double learning_rate = 0.1;
    std::size_t min_child = 5;  ///< minimum samples on each side of a split
    double lambda = 1.0;        ///< L2 penalty on leaf values
    double subsample = 1.0;     ///< row fraction per tree, drawn with `seed`
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;  ///< -1 marks a leaf
    float threshold = 0.0f;  ///< go left when x < threshold
    int left = -1, right = -1;
    float value = 0.0f;  ///< leaf contribution to the margin (learning rate folded in)
};

struct Tree {
    std::vector<TreeNode> nodes;  ///< nodes[0] is the root
    double eval(std::span<const double> x) const;
};

struct GBTModel {
    std::string feature_schema;
    std::size_t n_features = 0;
    float base_score = 0.0f;  ///< margin before any tree
    std::vector<Tree> trees;
    GBTParams params;
    TrainingInfo info;
    std::vector<double> train_loss;  ///< mean log-loss before round 1, then after each round

    double margin(std::span<const double> x) const;
    double predict(std::span<const double> x) const;
    std::vector<double> predict(const Rows& X) const;
};

/// Logistic-loss boosting with second-order gain. Each round's leaf scale is halved until the
/// training loss does not increase (a zero tree is kept if nothing helps), so the recorded
/// loss sequence is non-increasing. Throws Error(data) for single-class or mis-shaped input.
GBTModel train_gbt(const Rows& X, const Labels& y, const GBTParams& params = {}, const std::string& schema = "");

// ---------------------------------------------------------------- MLP

enum class InputKind { reply, trigger, pair };

std::string_view to_string(InputKind k);
InputKind parse_input_kind(std::string_view s);

struct MLPParams {
    std::size_t h1 = 256;
    std::size_t h2 = 64;
    int epochs = 30;
    std::size_t batch = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

/// [in, h1, h2, 1] with ReLU hidden layers and a sigmoid output.
struct MLPModel {
    InputKind kind = InputKind::reply;
    std::size_t embedding_dim = 0;  ///< in = dim, or 2 * dim for pair models
    std::string provenance;         ///< embedding source the model was trained on
    std::vector<Eigen::MatrixXd> W;  ///< W[l] is out x in
    std::vector<Eigen::VectorXd> b;
    MLPParams params;
    TrainingInfo info;
    std::vector<double> epoch_loss;  ///< full-set loss before training, then after each epoch

    std::size_t input_size() const { return W.empty() ? 0 : static_cast<std::size_t>(W.front().cols()); }
    std::vector<std::size_t> layer_sizes() const;
    double logit(std::span<const double> x) const;
    double predict(std::span<const double> x) const;
    std::vector<double> predict(const Rows& X) const;

    std::size_t parameter_count() const;
    /// Flattened as W0 (column-major), b0, W1, b1, ...
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> p);
};

/// Seeded scaled-uniform init: He for ReLU layers, Glorot for the output layer; zero biases.
MLPModel init_mlp(std::size_t in, const MLPParams& params);

/// Mini-batch Adam on binary cross-entropy. Rows are put in a canonical order before the
/// seeded shuffle, so permuting the input leaves the result unchanged. Weights are rounded
/// to float32 at the end (model files store float32). Throws Error(data) on shape mismatch
/// or a single class.
MLPModel train_mlp(const Rows& X, const Labels& y, const MLPParams& params = {}, InputKind kind = InputKind::reply,
                   std::size_t embedding_dim = 0);

/// Mean binary cross-entropy of `model` over (X, y).
double mlp_loss(const MLPModel& model, const Rows& X, const Labels& y);

/// Analytic gradient of the single-example loss, in `parameters()` order.
std::vector<double> mlp_gradient(const MLPModel& model, std::span<const double> x, int y);

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;  ///< parameters whose +-h step flips a ReLU
};

/// Central differences vs. mlp_gradient. Relative error = |a - n| / max(|a|, |n|, 1e-6).
/// `max_params` > 0 checks a seeded random subset.
GradCheck grad_check(const MLPModel& model, std::span<const double> x, int y, double h = 1e-4,
                     std::size_t max_params = 0, std::uint64_t seed = 0);

// ------------------------------------------------------- combination

enum class EnsembleMode { sum, any };

/// sum: propaganda iff p_trigger + p_reply >= 1. any: either score >= 0.5.
bool ensemble_predict(double p_trigger, double p_reply, EnsembleMode mode = EnsembleMode::sum);

/// [trigger || reply]; a missing trigger fills its half with zeros.
std::vector<double> build_pair_vector(std::optional<std::span<const float>> trigger, std::span<const float> reply);
std::vector<double> to_double(std::span<const float> v);

struct Verdict {
    double score = 0.0;
    Label label = Label::user;
    std::string model_id;
    double threshold = 0.5;
};

Verdict make_verdict(double score, double threshold, std::string model_id);

// -------------------------------------------------------- persistence

using Model = std::variant<GBTModel, MLPModel>;

/// JSON envelope; weights, thresholds and leaves are base64 little-endian float32.
std::string serialize_model(const Model& m);
void save_model(const Model& m, const std::filesystem::path& path);
Model parse_model(std::string_view json_text);
Model load_model(const std::filesystem::path& path);

/// Loads a GBT and checks its feature schema. Throws Error(format) on mismatch.
GBTModel load_gbt(const std::filesystem::path& path, const std::string& expected_schema);
/// Loads an MLP of the given kind; checks the embedding dim when `expected_dim` > 0.
MLPModel load_mlp(const std::filesystem::path& path, InputKind kind, std::size_t expected_dim = 0);

std::string model_id(const Model& m);

}  // namespace propwatch
