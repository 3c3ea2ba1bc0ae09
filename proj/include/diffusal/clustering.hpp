#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "graph.hpp"

namespace diffusal {

struct ClusterModel {
    int k = 0;
    std::vector<int> assignments;
    FeatureMatrix centroids;
    double inertia = 0.0;
    /// Inertia after each assignment step of the winning restart.
    std::vector<double> inertia_history;
};

struct KMeansOptions {
    int max_iterations = 300;
    int restarts = 1;
};

namespace detail {

inline double squared_distance(const FeatureMatrix &a, Eigen::Index i, const FeatureMatrix &b,
                               Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

/// k-means++ seeding: the first center uniformly, then proportional to the
/// squared distance to the nearest chosen center.
inline FeatureMatrix kmeanspp_init(const FeatureMatrix &x, int k, std::mt19937_64 &rng) {
    const auto n = x.rows();
    FeatureMatrix centers(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = x.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        d2[i] = squared_distance(x, i, centers, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2)
            total += v;
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = unit(rng) * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0.0 && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
        }
        centers.row(c) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], squared_distance(x, i, centers, c));
    }
    return centers;
}

inline ClusterModel lloyd(const FeatureMatrix &x, FeatureMatrix centers, int max_iterations) {
    const auto n = x.rows();
    const auto k = static_cast<int>(centers.rows());
    ClusterModel m;
    m.k = k;
    m.assignments.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> dist(static_cast<std::size_t>(n), 0.0);

    auto assign = [&] {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(x, i, centers, 0);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(x, i, centers, c);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            changed |= m.assignments[i] != best;
            m.assignments[i] = best;
            dist[i] = best_d;
            inertia += best_d;
        }
        return std::pair{changed, inertia};
    };

    auto update = [&] {
        FeatureMatrix sums = FeatureMatrix::Zero(k, x.cols());
        std::vector<int> counts(k, 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(m.assignments[i]) += x.row(i);
            ++counts[m.assignments[i]];
        }
        std::vector<char> taken(static_cast<std::size_t>(n), 0);
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centers.row(c) = sums.row(c) / counts[c];
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            Eigen::Index far = -1;
            for (Eigen::Index i = 0; i < n; ++i)
                if (!taken[i] && (far < 0 || dist[i] > dist[far]))
                    far = i;
            taken[far] = 1;
            centers.row(c) = x.row(far);
        }
    };

    for (int it = 0; it < max_iterations; ++it) {
        auto [changed, inertia] = assign();
        m.inertia_history.push_back(inertia);
        m.inertia = inertia;
        if (!changed && it > 0)
            break;
        if (it + 1 == max_iterations) {
            update();
            m.inertia = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                m.inertia += squared_distance(x, i, centers, m.assignments[i]);
            break;
        }
        update();
    }
    m.centroids = std::move(centers);
    return m;
}

} // namespace detail

/**
 * Lloyd's k-means with k-means++ seeding from a seeded generator.
 *
 * Stops once assignments are stable or after `max_iterations` assignment
 * steps. With several restarts the lowest-inertia model wins, earliest first.
 */
inline ClusterModel kmeans(const FeatureMatrix &x, int k, std::uint64_t seed,
                           const KMeansOptions &opts = {}) {
    if (k <= 0)
        throw ConfigError("kmeans: k must be positive");
    if (k > x.rows())
        throw ConfigError("kmeans: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(x.rows()) + " points");
    detail::require(opts.max_iterations >= 1 && opts.restarts >= 1,
                    "kmeans: iteration and restart counts must be positive");
    std::mt19937_64 rng(seed);
    ClusterModel best;
    for (int r = 0; r < opts.restarts; ++r) {
        auto m = detail::lloyd(x, detail::kmeanspp_init(x, k, rng), opts.max_iterations);
        if (r == 0 || m.inertia < best.inertia)
            best = std::move(m);
    }
    return best;
}

/// 1 - (labeled nodes in the node's cluster) / (labeled nodes), for every
/// node. With no labeled nodes every score is 1.
inline Eigen::VectorXd diversity_scores(const ClusterModel &cm, std::span<const NodeId> labeled) {
    const auto n = static_cast<Eigen::Index>(cm.assignments.size());
    if (labeled.empty())
        return Eigen::VectorXd::Ones(n);
    std::vector<double> counts(cm.k, 0.0);
    for (NodeId v : labeled)
        counts[cm.assignments[v]] += 1.0;
    const double total = static_cast<double>(labeled.size());
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i)
        s[i] = 1.0 - counts[cm.assignments[i]] / total;
    return s;
}

/**
 * One node per centroid, taken in cluster-index order: the eligible,
 * not-yet-chosen node nearest to the centroid (smaller id on ties).
 *
 * `eligible` may be empty, meaning every node.
 */
inline std::vector<NodeId> initial_pool(const ClusterModel &cm, const FeatureMatrix &x, int size,
                                        std::span<const char> eligible = {}) {
    const auto n = x.rows();
    if (size < 0 || size > n)
        throw ConfigError("initial_pool: size " + std::to_string(size) + " exceeds " +
                          std::to_string(n) + " nodes");
    detail::require(cm.k == size, "initial_pool: cluster count must equal the pool size");
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    std::vector<NodeId> out;
    out.reserve(static_cast<std::size_t>(size));
    for (int c = 0; c < size; ++c) {
        Eigen::Index best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (taken[i] || (!eligible.empty() && !eligible[i]))
                continue;
            const double d = detail::squared_distance(x, i, cm.centroids, c);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (best < 0)
            throw ConfigError("initial_pool: not enough eligible nodes");
        taken[best] = 1;
        out.push_back(static_cast<NodeId>(best));
    }
    return out;
}

} // namespace diffusal
