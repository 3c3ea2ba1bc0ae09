#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "graph.hpp"

namespace diffusal {

struct QBCConfig {
    int members = 5;
    int hidden = 16;
    double dropout = 0.5;
    double learning_rate = 0.01;
    double weight_decay = 5e-4;
    int max_epochs = 300;
    int patience = 20;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(members >= 1, "model: at least one committee member is required");
        detail::require(hidden >= 1, "model: hidden size must be positive");
        detail::require(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
        detail::require(learning_rate > 0.0, "model: learning rate must be positive");
        detail::require(weight_decay >= 0.0, "model: weight decay must be non-negative");
        detail::require(max_epochs >= 1, "model: max_epochs must be positive");
        detail::require(patience >= 0, "model: patience must be non-negative");
    }
};

struct TrainReport {
    int epochs_run = 0;
    double best_val_accuracy = 0.0;
    double final_train_loss = 0.0;
};

using Matrix = Eigen::MatrixXd;

/**
 * Query-by-committee classifier over pre-diffused features.
 *
 * Each of the M members maps the input through its own ReLU hidden layer;
 * the hidden activations are summed and fed to one shared softmax layer.
 * Parameters are stored flat as [W_0, b_0, ..., W_{M-1}, b_{M-1}, W_out, b_out]
 * with biases as 1 x k rows. Adam moments and the dropout generator live with
 * the parameters so incremental training can resume.
 */
class QBCModel {
public:
    QBCModel() = default;
    QBCModel(int members, int input_dim, int hidden, int classes, double dropout,
             std::uint64_t seed)
        : members_(members), input_dim_(input_dim), hidden_(hidden), classes_(classes),
          dropout_(dropout), rng_(seed) {
        params_.reserve(2 * static_cast<std::size_t>(members) + 2);
        for (int j = 0; j < members; ++j) {
            params_.push_back(Matrix::Zero(input_dim, hidden));
            params_.push_back(Matrix::Zero(1, hidden));
        }
        params_.push_back(Matrix::Zero(hidden, classes));
        params_.push_back(Matrix::Zero(1, classes));
        reset_optimizer();
    }

    int members() const noexcept { return members_; }
    int input_dim() const noexcept { return input_dim_; }
    int hidden() const noexcept { return hidden_; }
    int classes() const noexcept { return classes_; }
    double dropout() const noexcept { return dropout_; }

    std::vector<Matrix> &parameters() noexcept { return params_; }
    const std::vector<Matrix> &parameters() const noexcept { return params_; }

    Matrix &member_weight(int j) { return params_[2 * j]; }
    Matrix &member_bias(int j) { return params_[2 * j + 1]; }
    const Matrix &member_weight(int j) const { return params_[2 * j]; }
    const Matrix &member_bias(int j) const { return params_[2 * j + 1]; }
    Matrix &output_weight() { return params_[2 * members_]; }
    Matrix &output_bias() { return params_[2 * members_ + 1]; }
    const Matrix &output_weight() const { return params_[2 * members_]; }
    const Matrix &output_bias() const { return params_[2 * members_ + 1]; }

    static bool is_weight(std::size_t param_index) noexcept { return param_index % 2 == 0; }

    std::mt19937_64 &rng() noexcept { return rng_; }

    void reset_optimizer() {
        m1_.clear();
        m2_.clear();
        for (const auto &p : params_) {
            m1_.push_back(Matrix::Zero(p.rows(), p.cols()));
            m2_.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
        step_ = 0;
    }

    /// One Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
    void adam_step(const std::vector<Matrix> &grads, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++step_;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m1_[i] = b1 * m1_[i] + (1.0 - b1) * grads[i];
            m2_[i] = b2 * m2_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
            params_[i].array() -=
                lr * (m1_[i].array() / c1) / ((m2_[i].array() / c2).sqrt() + eps);
        }
    }

private:
    int members_ = 0;
    int input_dim_ = 0;
    int hidden_ = 0;
    int classes_ = 0;
    double dropout_ = 0.0;
    std::vector<Matrix> params_;
    std::vector<Matrix> m1_;
    std::vector<Matrix> m2_;
    long step_ = 0;
    std::mt19937_64 rng_;
};

/// Fresh model with every weight and bias drawn from U(-1/sqrt(fan_in),
/// 1/sqrt(fan_in)); members differ only through the generator stream.
inline QBCModel init_model(const QBCConfig &cfg, int input_dim, int classes) {
    cfg.validate();
    detail::require(input_dim >= 1 && classes >= 1, "model: dimensions must be positive");
    QBCModel m(cfg.members, input_dim, cfg.hidden, classes, cfg.dropout, cfg.seed);
    std::mt19937_64 init_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    auto fill = [&](Matrix &w, int fan_in) {
        std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                w(r, c) = u(init_rng);
    };
    for (int j = 0; j < cfg.members; ++j) {
        fill(m.member_weight(j), input_dim);
        fill(m.member_bias(j), input_dim);
    }
    fill(m.output_weight(), cfg.hidden);
    fill(m.output_bias(), cfg.hidden);
    return m;
}

namespace detail {

inline void softmax_rows(Matrix &z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        z.row(i) = (z.row(i).array() - mx).exp();
        z.row(i) /= z.row(i).sum();
    }
}

/// Inverted-dropout mask: entries are 0 or 1/(1-p).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64 &rng) {
    Matrix mask(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            mask(r, c) = u(rng) < p ? 0.0 : keep;
    return mask;
}

struct MemberCache {
    Matrix input; // masked input; empty when no input dropout was applied
    Matrix pre;   // pre-activation
    Matrix hidden_mask;
};

struct ForwardCache {
    std::vector<MemberCache> members;
    Matrix latent;
    Matrix probs;
};

inline Matrix gather_rows(const FeatureMatrix &x, std::span<const NodeId> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

template <typename Input>
ForwardCache forward_pass(QBCModel &m, const Input &x, bool train_mode) {
    ForwardCache fc;
    const bool drop = train_mode && m.dropout() > 0.0;
    fc.latent = Matrix::Zero(x.rows(), m.hidden());
    fc.members.resize(static_cast<std::size_t>(m.members()));
    for (int j = 0; j < m.members(); ++j) {
        auto &mc = fc.members[j];
        if (drop) {
            mc.input = x.cwiseProduct(dropout_mask(x.rows(), x.cols(), m.dropout(), m.rng()));
            mc.pre = mc.input * m.member_weight(j);
        } else {
            mc.pre = x * m.member_weight(j);
        }
        mc.pre.rowwise() += m.member_bias(j).row(0);
        Matrix h = mc.pre.cwiseMax(0.0);
        if (drop) {
            mc.hidden_mask = dropout_mask(h.rows(), h.cols(), m.dropout(), m.rng());
            h = h.cwiseProduct(mc.hidden_mask);
        }
        fc.latent += h;
    }
    fc.probs = fc.latent * m.output_weight();
    fc.probs.rowwise() += m.output_bias().row(0);
    softmax_rows(fc.probs);
    return fc;
}

inline double regularization(const QBCModel &m, double weight_decay) {
    double r = 0.0;
    const auto &ps = m.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (QBCModel::is_weight(i))
            r += ps[i].squaredNorm();
    return 0.5 * weight_decay * r;
}

inline double cross_entropy(const Matrix &probs, std::span<const int> targets) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        loss -= std::log(std::max(probs(i, targets[i]), std::numeric_limits<double>::min()));
    return loss / static_cast<double>(probs.rows());
}

} // namespace detail

/// Class probabilities for every row of `x` (n x C). In train mode dropout
/// masks are drawn from the model's generator.
inline Matrix forward(QBCModel &m, const FeatureMatrix &x, bool train_mode) {
    if (x.cols() != m.input_dim())
        throw ConfigError("forward: feature dimension mismatch");
    return detail::forward_pass(m, x, train_mode).probs;
}

inline Matrix forward(const QBCModel &m, const FeatureMatrix &x) {
    return forward(const_cast<QBCModel &>(m), x, false);
}

/// Eval-mode class probabilities for the given rows only.
inline Matrix forward_rows(const QBCModel &m, const FeatureMatrix &x,
                           std::span<const NodeId> rows) {
    if (x.cols() != m.input_dim())
        throw ConfigError("forward: feature dimension mismatch");
    return detail::forward_pass(const_cast<QBCModel &>(m), detail::gather_rows(x, rows), false)
        .probs;
}

/// Eval-mode summed hidden representation of every node.
inline FeatureMatrix latent_representations(const QBCModel &m, const FeatureMatrix &x) {
    if (x.cols() != m.input_dim())
        throw ConfigError("latent_representations: feature dimension mismatch");
    return FeatureMatrix(detail::forward_pass(const_cast<QBCModel &>(m), x, false).latent);
}

struct LossAndGradient {
    double loss = 0.0;
    std::vector<Matrix> gradient;
};

/**
 * Mean cross-entropy over `rows` plus (weight_decay / 2) * sum of squared
 * weight entries (biases are not regularized), with its analytic gradient.
 */
inline LossAndGradient loss_and_gradient(QBCModel &m, const FeatureMatrix &x,
                                         std::span<const int> labels, std::span<const NodeId> rows,
                                         double weight_decay, bool train_mode) {
    if (rows.empty())
        throw ConfigError("training: empty train set");
    if (x.cols() != m.input_dim())
        throw ConfigError("training: feature dimension mismatch");
    const Matrix xs = detail::gather_rows(x, rows);
    std::vector<int> targets(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        targets[i] = labels[rows[i]];

    auto fc = detail::forward_pass(m, xs, train_mode);
    LossAndGradient out;
    out.loss = detail::cross_entropy(fc.probs, targets) + detail::regularization(m, weight_decay);

    const auto nrows = static_cast<double>(rows.size());
    Matrix d_out = fc.probs;
    for (std::size_t i = 0; i < rows.size(); ++i)
        d_out(static_cast<Eigen::Index>(i), targets[i]) -= 1.0;
    d_out /= nrows;

    out.gradient.resize(m.parameters().size());
    const int M = m.members();
    out.gradient[2 * M] = fc.latent.transpose() * d_out + weight_decay * m.output_weight();
    out.gradient[2 * M + 1] = d_out.colwise().sum();
    const Matrix d_latent = d_out * m.output_weight().transpose();
    for (int j = 0; j < M; ++j) {
        const auto &mc = fc.members[j];
        Matrix d_pre = d_latent;
        if (mc.hidden_mask.size() > 0)
            d_pre = d_pre.cwiseProduct(mc.hidden_mask);
        d_pre = d_pre.cwiseProduct((mc.pre.array() > 0.0).cast<double>().matrix());
        const Matrix &input = mc.input.size() > 0 ? mc.input : xs;
        out.gradient[2 * j] = input.transpose() * d_pre + weight_decay * m.member_weight(j);
        out.gradient[2 * j + 1] = d_pre.colwise().sum();
    }
    return out;
}

/// Eval-mode objective (cross-entropy + L2) without gradients.
inline double evaluate_loss(const QBCModel &m, const FeatureMatrix &x, std::span<const int> labels,
                            std::span<const NodeId> rows, double weight_decay) {
    const Matrix probs = forward_rows(m, x, rows);
    std::vector<int> targets(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        targets[i] = labels[rows[i]];
    return detail::cross_entropy(probs, targets) + detail::regularization(m, weight_decay);
}

inline double accuracy(const QBCModel &m, const FeatureMatrix &x, std::span<const int> labels,
                       std::span<const NodeId> rows) {
    if (rows.empty())
        return 0.0;
    const Matrix probs = forward_rows(m, x, rows);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Eigen::Index arg = 0;
        probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
        correct += static_cast<int>(arg) == labels[rows[i]];
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

/// One full-batch Adam step on the train set (dropout active). Returns the
/// eval-mode objective after the step.
inline double train_one_epoch(QBCModel &m, const FeatureMatrix &x, std::span<const int> labels,
                              std::span<const NodeId> train_set, const QBCConfig &cfg) {
    auto lg = loss_and_gradient(m, x, labels, train_set, cfg.weight_decay, true);
    m.adam_step(lg.gradient, cfg.learning_rate);
    return evaluate_loss(m, x, labels, train_set, cfg.weight_decay);
}

/**
 * Trains until validation accuracy stops improving for `patience` epochs or
 * `max_epochs` is reached, then restores the best-validation parameters.
 *
 * An epoch counts as an improvement when validation accuracy rises, or stays
 * equal while validation loss falls. Without a validation set all epochs run
 * and the final parameters are kept.
 */
inline TrainReport train_full(QBCModel &m, const FeatureMatrix &x, std::span<const int> labels,
                              std::span<const NodeId> train_set, std::span<const NodeId> val_set,
                              const QBCConfig &cfg) {
    if (train_set.empty())
        throw ConfigError("training: empty train set");
    TrainReport report;
    std::vector<Matrix> best = m.parameters();
    double best_acc = -1.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        train_one_epoch(m, x, labels, train_set, cfg);
        ++report.epochs_run;
        if (val_set.empty())
            continue;
        const Matrix probs = forward_rows(m, x, val_set);
        std::size_t correct = 0;
        std::vector<int> targets(val_set.size());
        for (std::size_t i = 0; i < val_set.size(); ++i) {
            targets[i] = labels[val_set[i]];
            Eigen::Index arg = 0;
            probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
            correct += static_cast<int>(arg) == targets[i];
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(val_set.size());
        const double val_loss = detail::cross_entropy(probs, targets);
        if (acc > best_acc || (acc == best_acc && val_loss < best_val_loss)) {
            best_acc = acc;
            best_val_loss = val_loss;
            best = m.parameters();
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= cfg.patience)
            break;
    }
    if (!val_set.empty()) {
        m.parameters() = best;
        report.best_val_accuracy = best_acc;
    }
    report.final_train_loss = evaluate_loss(m, x, labels, train_set, cfg.weight_decay);
    return report;
}

/// Shannon entropy of a probability row, with 0 log 0 = 0.
template <typename Row> double entropy(const Row &p) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j)
        if (p[j] > 0.0)
            h -= p[j] * std::log(p[j]);
    return h;
}

/// Raw entropy of the shared prediction layer for each listed node.
inline Eigen::VectorXd entropy_scores(const QBCModel &m, const FeatureMatrix &x,
                                      std::span<const NodeId> nodes) {
    const Matrix probs = forward_rows(m, x, nodes);
    Eigen::VectorXd h(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        h[i] = entropy(probs.row(i));
    return h;
}

/// Entropy scaled to sum to one over the listed nodes (all zero when every
/// entropy is zero).
inline Eigen::VectorXd normalize_scores(Eigen::VectorXd raw) {
    const double s = raw.sum();
    if (s > 0.0)
        raw /= s;
    return raw;
}

/// Uncertainty score of each listed (unlabeled) node, aligned with `unlabeled`.
inline Eigen::VectorXd uncertainty_scores(const QBCModel &m, const FeatureMatrix &x,
                                          std::span<const NodeId> unlabeled) {
    if (unlabeled.empty())
        throw ConfigError("uncertainty_scores: empty unlabeled set");
    return normalize_scores(entropy_scores(m, x, unlabeled));
}

/// Parameter dump for debugging.
inline void save_checkpoint(const QBCModel &m, const std::filesystem::path &path) {
    nlohmann::json j = {{"format", "diffusal-qbc"},
                        {"version", 1},
                        {"members", m.members()},
                        {"input_dim", m.input_dim()},
                        {"hidden", m.hidden()},
                        {"classes", m.classes()}};
    auto &ps = j["parameters"] = nlohmann::json::array();
    for (const auto &p : m.parameters())
        ps.push_back({{"rows", p.rows()},
                      {"cols", p.cols()},
                      {"values", std::vector<double>(p.data(), p.data() + p.size())}});
    std::ofstream(path) << j.dump() << '\n';
}

} // namespace diffusal
