#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustering.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "model.hpp"

namespace diffusal {

enum class StrategyKind { diffusal, random, entropy, degree, coreset };
enum class Combine { multiplicative, additive };

inline std::string to_string(StrategyKind k) {
    switch (k) {
    case StrategyKind::diffusal: return "diffusal";
    case StrategyKind::random: return "random";
    case StrategyKind::entropy: return "entropy";
    case StrategyKind::degree: return "degree";
    case StrategyKind::coreset: return "coreset";
    }
    return "unknown";
}

inline StrategyKind parse_strategy_kind(const std::string &s) {
    for (auto k : {StrategyKind::diffusal, StrategyKind::random, StrategyKind::entropy,
                   StrategyKind::degree, StrategyKind::coreset})
        if (to_string(k) == s)
            return k;
    throw ConfigError("unknown strategy '" + s + "'");
}

inline Combine parse_combine(const std::string &s) {
    if (s == "multiplicative")
        return Combine::multiplicative;
    if (s == "additive")
        return Combine::additive;
    throw ConfigError("unknown combine mode '" + s + "'");
}

struct StrategyConfig {
    StrategyKind kind = StrategyKind::diffusal;
    bool use_unc = true;
    bool use_div = true;
    bool use_imp = true;
    Combine combine = Combine::multiplicative;
    int batch_size = 0;

    void validate() const {
        if (kind == StrategyKind::diffusal)
            detail::require(use_unc || use_div || use_imp,
                            "strategy: diffusal needs at least one enabled score");
        detail::require(batch_size >= 0, "strategy: batch size must be non-negative");
    }

    /// Name used in result files, e.g. "diffusal", "diffusal-additive",
    /// "diffusal-no-unc-no-div".
    std::string label() const {
        std::string s = to_string(kind);
        if (kind != StrategyKind::diffusal)
            return s;
        if (!use_unc)
            s += "-no-unc";
        if (!use_div)
            s += "-no-div";
        if (!use_imp)
            s += "-no-imp";
        if (combine == Combine::additive)
            s += "-additive";
        return s;
    }
};

/// Per-candidate score components and their combination.
struct ScoreBreakdown {
    Eigen::VectorXd unc;
    Eigen::VectorXd div;
    Eigen::VectorXd imp;
    Eigen::VectorXd combined;
};

/// Product (or sum) of the enabled components; disabled ones contribute the
/// neutral element.
inline Eigen::VectorXd combine_scores(const Eigen::VectorXd &unc, const Eigen::VectorXd &div,
                                      const Eigen::VectorXd &imp, const StrategyConfig &cfg) {
    if (!cfg.use_unc && !cfg.use_div && !cfg.use_imp)
        throw ConfigError("combine_scores: every component is disabled");
    const Eigen::Index n = cfg.use_unc ? unc.size() : cfg.use_div ? div.size() : imp.size();
    if ((cfg.use_unc && unc.size() != n) || (cfg.use_div && div.size() != n) ||
        (cfg.use_imp && imp.size() != n))
        throw ConfigError("combine_scores: length mismatch");
    if (cfg.combine == Combine::multiplicative) {
        Eigen::VectorXd s = Eigen::VectorXd::Ones(n);
        if (cfg.use_unc)
            s = s.cwiseProduct(unc);
        if (cfg.use_div)
            s = s.cwiseProduct(div);
        if (cfg.use_imp)
            s = s.cwiseProduct(imp);
        return s;
    }
    Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
    if (cfg.use_unc)
        s += unc;
    if (cfg.use_div)
        s += div;
    if (cfg.use_imp)
        s += imp;
    return s;
}

/// Index of the largest entry; the first one wins ties.
inline Eigen::Index argmax_first(const Eigen::VectorXd &v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] > v[best])
            best = i;
    return best;
}

/**
 * The annotated set and the candidate universe it may grow into.
 *
 * Nodes outside the candidate set (the validation nodes) are never selected.
 */
class LabeledPool {
public:
    LabeledPool() = default;
    explicit LabeledPool(std::size_t n) : labeled_mask_(n, 0), candidate_(n, 1) {}
    LabeledPool(std::size_t n, std::span<const NodeId> candidates)
        : labeled_mask_(n, 0), candidate_(n, 0) {
        for (NodeId v : candidates)
            candidate_[v] = 1;
    }

    void add(NodeId v, int round) {
        if (labeled_mask_[v])
            throw ConfigError("pool: node " + std::to_string(v) + " is already labeled");
        if (!candidate_[v])
            throw ConfigError("pool: node " + std::to_string(v) + " is not a candidate");
        labeled_mask_[v] = 1;
        labeled_.push_back(v);
        round_added_.push_back(round);
    }

    bool is_labeled(NodeId v) const { return labeled_mask_[v] != 0; }
    bool is_candidate(NodeId v) const { return candidate_[v] != 0; }
    std::size_t size() const noexcept { return labeled_.size(); }
    std::size_t universe() const noexcept { return labeled_mask_.size(); }

    /// Labeled nodes in acquisition order.
    const std::vector<NodeId> &labeled() const noexcept { return labeled_; }
    /// Round in which each labeled node was acquired (0 = initial pool).
    const std::vector<int> &rounds() const noexcept { return round_added_; }

    /// Unlabeled candidates in ascending id order.
    std::vector<NodeId> unlabeled() const {
        std::vector<NodeId> out;
        for (std::size_t v = 0; v < labeled_mask_.size(); ++v)
            if (candidate_[v] && !labeled_mask_[v])
                out.push_back(static_cast<NodeId>(v));
        return out;
    }

private:
    std::vector<char> labeled_mask_;
    std::vector<char> candidate_;
    std::vector<NodeId> labeled_;
    std::vector<int> round_added_;
};

/// Everything a model-aware selection loop reads or mutates.
struct SelectionContext {
    QBCModel &model;
    const FeatureMatrix &features;
    std::span<const int> oracle_labels;
    LabeledPool &pool;
    QBCConfig train_config;
    const ClusterModel *clusters = nullptr;
    const Eigen::VectorXd *importance = nullptr;
    int round = 0;
};

namespace detail {

inline Eigen::VectorXd gather(const Eigen::VectorXd &v, std::span<const NodeId> nodes) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        out[static_cast<Eigen::Index>(i)] = v[nodes[i]];
    return out;
}

inline void require_candidates(std::size_t available, int b) {
    if (b < 0 || static_cast<std::size_t>(b) > available)
        throw ConfigError("selection: " + std::to_string(b) + " nodes requested but only " +
                          std::to_string(available) + " candidates remain");
}

} // namespace detail

/// Score components over the current unlabeled candidates (ascending id).
inline ScoreBreakdown diffusal_scores(const SelectionContext &ctx, const StrategyConfig &cfg,
                                      std::span<const NodeId> candidates) {
    ScoreBreakdown s;
    const auto n = static_cast<Eigen::Index>(candidates.size());
    const double neutral = cfg.combine == Combine::multiplicative ? 1.0 : 0.0;
    if (cfg.use_unc)
        s.unc = uncertainty_scores(ctx.model, ctx.features, candidates);
    else
        s.unc = Eigen::VectorXd::Constant(n, neutral);
    if (cfg.use_div) {
        if (!ctx.clusters)
            throw ConfigError("diffusal: diversity enabled without a cluster model");
        s.div = detail::gather(diversity_scores(*ctx.clusters, ctx.pool.labeled()), candidates);
    } else {
        s.div = Eigen::VectorXd::Constant(n, neutral);
    }
    if (cfg.use_imp) {
        if (!ctx.importance)
            throw ConfigError("diffusal: importance enabled without importance scores");
        s.imp = detail::gather(*ctx.importance, candidates);
    } else {
        s.imp = Eigen::VectorXd::Constant(n, neutral);
    }
    s.combined = combine_scores(s.unc, s.div, s.imp, cfg);
    return s;
}

/**
 * DiffusAL batch acquisition: b times, rescore the unlabeled candidates,
 * label the best one (smallest id on ties) and, when uncertainty is in use,
 * train the model for one epoch on the enlarged pool.
 *
 * If every combined score is exactly zero the diversity-importance product
 * decides instead.
 */
inline std::vector<NodeId> select_batch_diffusal(SelectionContext &ctx, const StrategyConfig &cfg,
                                                 int b) {
    cfg.validate();
    detail::require_candidates(ctx.pool.unlabeled().size(), b);
    std::vector<NodeId> chosen;
    for (int step = 0; step < b; ++step) {
        const auto candidates = ctx.pool.unlabeled();
        auto s = diffusal_scores(ctx, cfg, candidates);
        Eigen::VectorXd ranking = s.combined;
        if (ranking.maxCoeff() <= 0.0) {
            ranking = Eigen::VectorXd::Ones(ranking.size());
            if (cfg.use_div)
                ranking = ranking.cwiseProduct(s.div);
            if (cfg.use_imp)
                ranking = ranking.cwiseProduct(s.imp);
        }
        const NodeId pick = candidates[static_cast<std::size_t>(argmax_first(ranking))];
        ctx.pool.add(pick, ctx.round);
        chosen.push_back(pick);
        if (cfg.use_unc)
            train_one_epoch(ctx.model, ctx.features, ctx.oracle_labels, ctx.pool.labeled(),
                            ctx.train_config);
    }
    return chosen;
}

/// Top entropy first; with `incremental` the model trains one epoch after
/// each pick, as in DiffusAL's batch protocol.
inline std::vector<NodeId> select_entropy(SelectionContext &ctx, int b, bool incremental = true) {
    detail::require_candidates(ctx.pool.unlabeled().size(), b);
    std::vector<NodeId> chosen;
    if (!incremental && b > 0) {
        const auto candidates = ctx.pool.unlabeled();
        const Eigen::VectorXd h = entropy_scores(ctx.model, ctx.features, candidates);
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t c) { return h[a] > h[c]; });
        for (int i = 0; i < b; ++i) {
            ctx.pool.add(candidates[order[i]], ctx.round);
            chosen.push_back(candidates[order[i]]);
        }
        return chosen;
    }
    for (int step = 0; step < b; ++step) {
        const auto candidates = ctx.pool.unlabeled();
        const Eigen::VectorXd h = entropy_scores(ctx.model, ctx.features, candidates);
        const NodeId pick = candidates[static_cast<std::size_t>(argmax_first(h))];
        ctx.pool.add(pick, ctx.round);
        chosen.push_back(pick);
        train_one_epoch(ctx.model, ctx.features, ctx.oracle_labels, ctx.pool.labeled(),
                        ctx.train_config);
    }
    return chosen;
}

/// Uniform sample without replacement, in draw order.
inline std::vector<NodeId> select_random(std::span<const NodeId> unlabeled, int b,
                                         std::mt19937_64 &rng) {
    detail::require_candidates(unlabeled.size(), b);
    std::vector<NodeId> pool(unlabeled.begin(), unlabeled.end());
    for (int i = 0; i < b; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                        pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
    }
    pool.resize(static_cast<std::size_t>(b));
    return pool;
}

/// Highest degree first, smaller id on ties.
inline std::vector<NodeId> select_degree(const Graph &g, std::span<const NodeId> unlabeled,
                                         int b) {
    detail::require_candidates(unlabeled.size(), b);
    std::vector<NodeId> order(unlabeled.begin(), unlabeled.end());
    std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId c) {
        const auto da = g.degree(a), dc = g.degree(c);
        return da != dc ? da > dc : a < c;
    });
    order.resize(static_cast<std::size_t>(b));
    return order;
}

/**
 * Greedy k-center: repeatedly take the candidate farthest (Euclidean) from
 * everything labeled or already chosen. With nothing labeled the first pick
 * is the smallest candidate id.
 */
inline std::vector<NodeId> select_coreset(const FeatureMatrix &latents,
                                          std::span<const NodeId> labeled,
                                          std::span<const NodeId> unlabeled, int b) {
    detail::require_candidates(unlabeled.size(), b);
    std::vector<NodeId> cand(unlabeled.begin(), unlabeled.end());
    std::sort(cand.begin(), cand.end());
    std::vector<double> nearest(cand.size(), std::numeric_limits<double>::infinity());
    std::vector<char> taken(cand.size(), 0);
    auto absorb = [&](NodeId center) {
        for (std::size_t i = 0; i < cand.size(); ++i)
            nearest[i] = std::min(nearest[i], (latents.row(cand[i]) - latents.row(center)).squaredNorm());
    };
    for (NodeId v : labeled)
        absorb(v);
    std::vector<NodeId> chosen;
    for (int step = 0; step < b; ++step) {
        std::size_t best = cand.size();
        for (std::size_t i = 0; i < cand.size(); ++i)
            if (!taken[i] && (best == cand.size() || nearest[i] > nearest[best]))
                best = i;
        taken[best] = 1;
        chosen.push_back(cand[best]);
        absorb(cand[best]);
    }
    return chosen;
}

} // namespace diffusal
