#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "error.hpp"
#include "graph.hpp"

namespace diffusal {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// n x n diffusion operator. Column j holds the mass that a restarted walk on
/// T = A D^-1 seeded at j deposits on each row.
using DiffusionMatrix = SparseMatrix;

struct DiffusionConfig {
    std::vector<double> alphas{0.05, 0.2};
    double epsilon = 1e-4;

    void validate() const {
        detail::require(!alphas.empty(), "diffusion: at least one alpha is required");
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            detail::require(alphas[i] > 0.0 && alphas[i] <= 1.0,
                            "diffusion: alpha must lie in (0, 1]");
            detail::require(i == 0 || alphas[i] > alphas[i - 1],
                            "diffusion: alphas must be strictly increasing");
        }
        detail::require(epsilon > 0.0, "diffusion: epsilon must be positive");
    }
};

using SparseEntries = std::vector<std::pair<NodeId, double>>;

/// Output of one push run: the estimate, the leftover residual per node, and
/// its total. Entries are sorted by node.
struct PushResult {
    SparseEntries estimate;
    SparseEntries residual;
    double residual_mass = 0.0;
};

/**
 * Reusable scratch space for the forward-push approximation of a single
 * personalized PageRank column.
 *
 * A node u is pushed while r(u) >= epsilon * deg(u): alpha * r(u) moves to
 * the estimate and (1 - alpha) * r(u) is split evenly among u's neighbors.
 * Nodes are processed first-in first-out, so the result depends only on the
 * inputs.
 */
class PushWorkspace {
public:
    explicit PushWorkspace(std::size_t n) : p_(n, 0.0), r_(n, 0.0), queued_(n, 0) {}

    PushResult run(const Graph &g, NodeId seed, double alpha, double epsilon) {
        const auto n = g.num_nodes();
        if (seed < 0 || static_cast<std::size_t>(seed) >= n)
            throw ConfigError("push: seed " + std::to_string(seed) + " out of range");
        detail::require(alpha > 0.0 && alpha <= 1.0, "push: alpha must lie in (0, 1]");
        detail::require(epsilon > 0.0, "push: epsilon must be positive");
        if (p_.size() != n) {
            p_.assign(n, 0.0);
            r_.assign(n, 0.0);
            queued_.assign(n, 0);
        }
        if (alpha < 1.0 && g.degree(seed) == 0)
            throw ConfigError("push: seed " + std::to_string(seed) + " has no neighbors");

        touched_.clear();
        auto touch = [&](NodeId u) {
            if (p_[u] == 0.0 && r_[u] == 0.0)
                touched_.push_back(u);
        };
        touch(seed);
        r_[seed] = 1.0;

        std::deque<NodeId> queue;
        auto active = [&](NodeId u) {
            return r_[u] >= epsilon * static_cast<double>(std::max<std::size_t>(g.degree(u), 1));
        };
        if (active(seed)) {
            queue.push_back(seed);
            queued_[seed] = 1;
        }
        while (!queue.empty()) {
            const NodeId u = queue.front();
            queue.pop_front();
            queued_[u] = 0;
            const double ru = r_[u];
            r_[u] = 0.0;
            p_[u] += alpha * ru;
            const auto nb = g.neighbors(u);
            if (nb.empty())
                continue;
            const double share = (1.0 - alpha) * ru / static_cast<double>(nb.size());
            if (share == 0.0)
                continue;
            for (NodeId v : nb) {
                touch(v);
                r_[v] += share;
                if (!queued_[v] && active(v)) {
                    queue.push_back(v);
                    queued_[v] = 1;
                }
            }
        }

        std::sort(touched_.begin(), touched_.end());
        PushResult out;
        for (NodeId u : touched_) {
            if (p_[u] != 0.0)
                out.estimate.emplace_back(u, p_[u]);
            if (r_[u] != 0.0) {
                out.residual.emplace_back(u, r_[u]);
                out.residual_mass += r_[u];
            }
            p_[u] = 0.0;
            r_[u] = 0.0;
        }
        return out;
    }

private:
    std::vector<double> p_;
    std::vector<double> r_;
    std::vector<char> queued_;
    std::vector<NodeId> touched_;
};

inline PushResult ppr_push_single(const Graph &g, NodeId seed, double alpha, double epsilon) {
    PushWorkspace ws(g.num_nodes());
    return ws.run(g, seed, alpha, epsilon);
}

/// Approximate PPR matrix, one push per column. Columns are independent and
/// are computed on up to `threads` workers (0 = hardware concurrency); the
/// assembled matrix does not depend on the thread count.
inline DiffusionMatrix ppr_matrix(const Graph &g, double alpha, double epsilon,
                                  unsigned threads = 0) {
    const auto n = g.num_nodes();
    detail::require(n > 0, "ppr_matrix: empty graph");
    detail::require(alpha > 0.0 && alpha <= 1.0, "ppr_matrix: alpha must lie in (0, 1]");
    detail::require(epsilon > 0.0, "ppr_matrix: epsilon must be positive");

    std::vector<SparseEntries> columns(n);
    auto work = [&](std::size_t begin, std::size_t end) {
        PushWorkspace ws(n);
        for (std::size_t s = begin; s < end; ++s)
            columns[s] = ws.run(g, static_cast<NodeId>(s), alpha, epsilon).estimate;
    };
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        work(0, n);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (n + threads - 1) / threads;
        for (std::size_t b = 0; b < n; b += chunk)
            pool.emplace_back(work, b, std::min(n, b + chunk));
    }

    std::vector<Eigen::Triplet<double>> triplets;
    std::size_t nnz = 0;
    for (const auto &c : columns)
        nnz += c.size();
    triplets.reserve(nnz);
    for (std::size_t s = 0; s < n; ++s)
        for (auto [row, v] : columns[s])
            triplets.emplace_back(row, static_cast<int>(s), v);
    DiffusionMatrix P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    P.setFromTriplets(triplets.begin(), triplets.end());
    P.makeCompressed();
    return P;
}

/// Entrywise sum of same-shaped matrices.
inline DiffusionMatrix multiscale_sum(std::span<const DiffusionMatrix> mats) {
    detail::require(!mats.empty(), "multiscale_sum: no matrices");
    DiffusionMatrix out = mats[0];
    for (std::size_t i = 1; i < mats.size(); ++i) {
        if (mats[i].rows() != out.rows() || mats[i].cols() != out.cols())
            throw ConfigError("multiscale_sum: dimension mismatch");
        out = out + mats[i];
    }
    out.makeCompressed();
    return out;
}

/// Sum of PPR matrices over all configured restart probabilities.
inline DiffusionMatrix multiscale_ppr(const Graph &g, const DiffusionConfig &cfg,
                                      unsigned threads = 0) {
    cfg.validate();
    std::vector<DiffusionMatrix> mats;
    mats.reserve(cfg.alphas.size());
    for (double a : cfg.alphas)
        mats.push_back(ppr_matrix(g, a, cfg.epsilon, threads));
    return multiscale_sum(mats);
}

/// P * X. Sparse feature matrices take a sparse-sparse product.
inline FeatureMatrix propagate_features(const DiffusionMatrix &P, const FeatureMatrix &X) {
    if (P.cols() != X.rows())
        throw ConfigError("propagate_features: dimension mismatch (" +
                          std::to_string(P.cols()) + " vs " + std::to_string(X.rows()) + ")");
    const auto nonzeros = (X.array() != 0.0).count();
    if (X.size() > 0 && static_cast<double>(nonzeros) < 0.1 * static_cast<double>(X.size())) {
        const SparseMatrix xs = X.sparseView();
        const SparseMatrix prod = P * xs;
        return FeatureMatrix(prod);
    }
    return FeatureMatrix(P * X);
}

namespace detail {

inline Eigen::VectorXd l1_normalized(Eigen::VectorXd v) {
    const double s = v.sum();
    if (s > 0.0)
        v /= s;
    return v;
}

} // namespace detail

/// Row sums of P (total influence of each node), scaled to sum to one.
inline Eigen::VectorXd importance_scores(const DiffusionMatrix &P) {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(P.rows());
    for (Eigen::Index i = 0; i < P.outerSize(); ++i)
        for (DiffusionMatrix::InnerIterator it(P, i); it; ++it)
            rows[i] += it.value();
    return detail::l1_normalized(std::move(rows));
}

/// Column sums of a matrix (unnormalized).
inline Eigen::VectorXd column_sums(const DiffusionMatrix &P) {
    Eigen::VectorXd cols = Eigen::VectorXd::Zero(P.cols());
    for (Eigen::Index i = 0; i < P.outerSize(); ++i)
        for (DiffusionMatrix::InnerIterator it(P, i); it; ++it)
            cols[it.col()] += it.value();
    return cols;
}

/// Column sums of P scaled to sum to one; the importance used with the
/// two-hop operator.
inline Eigen::VectorXd column_importance_scores(const DiffusionMatrix &P) {
    return detail::l1_normalized(column_sums(P));
}

/// (D^-1/2 (A + I) D^-1/2)^2 with D the degree matrix of A + I.
inline DiffusionMatrix two_hop_matrix(const Graph &g) {
    const auto n = static_cast<Eigen::Index>(g.num_nodes());
    std::vector<double> inv_sqrt(g.num_nodes());
    for (std::size_t u = 0; u < g.num_nodes(); ++u)
        inv_sqrt[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(u)) + 1));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(2 * g.num_edges() + g.num_nodes());
    for (std::size_t u = 0; u < g.num_nodes(); ++u) {
        const auto uu = static_cast<NodeId>(u);
        triplets.emplace_back(uu, uu, inv_sqrt[u] * inv_sqrt[u]);
        for (NodeId v : g.neighbors(uu))
            triplets.emplace_back(uu, v, inv_sqrt[u] * inv_sqrt[v]);
    }
    SparseMatrix S(n, n);
    S.setFromTriplets(triplets.begin(), triplets.end());
    DiffusionMatrix out = S * S;
    out.makeCompressed();
    return out;
}

// Binary cache layout: "DFPPR001", u64 header length, JSON header, then
// i64 rows, i64 cols, i64 nnz, i64 outer[rows+1], i32 inner[nnz], f64 value[nnz].
namespace detail {

inline constexpr char kCacheMagic[8] = {'D', 'F', 'P', 'P', 'R', '0', '0', '1'};

template <typename T> void write_pod(std::ostream &out, const T &v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}
template <typename T> void read_pod(std::istream &in, T &v) {
    in.read(reinterpret_cast<char *>(&v), sizeof(T));
}

} // namespace detail

/// Writes P with a JSON header describing how it was computed.
inline void save_diffusion(const std::filesystem::path &path, const DiffusionMatrix &P,
                           const nlohmann::json &header) {
    DiffusionMatrix m = P;
    m.makeCompressed();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw DataError("cannot write diffusion cache " + path.string());
        out.write(detail::kCacheMagic, sizeof(detail::kCacheMagic));
        const std::string h = header.dump();
        detail::write_pod(out, static_cast<std::uint64_t>(h.size()));
        out.write(h.data(), static_cast<std::streamsize>(h.size()));
        detail::write_pod(out, static_cast<std::int64_t>(m.rows()));
        detail::write_pod(out, static_cast<std::int64_t>(m.cols()));
        detail::write_pod(out, static_cast<std::int64_t>(m.nonZeros()));
        for (Eigen::Index i = 0; i <= m.rows(); ++i)
            detail::write_pod(out, static_cast<std::int64_t>(m.outerIndexPtr()[i]));
        for (Eigen::Index k = 0; k < m.nonZeros(); ++k)
            detail::write_pod(out, static_cast<std::int32_t>(m.innerIndexPtr()[k]));
        out.write(reinterpret_cast<const char *>(m.valuePtr()),
                  static_cast<std::streamsize>(sizeof(double) * m.nonZeros()));
    }
    std::filesystem::rename(tmp, path);
}

/// Reads a cache written by save_diffusion. Returns nothing when the file is
/// absent or its header differs from `expected_header`.
inline std::optional<DiffusionMatrix> load_diffusion(const std::filesystem::path &path,
                                                     const nlohmann::json &expected_header) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return std::nullopt;
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::kCacheMagic, sizeof(magic)) != 0)
        throw DataError(path.string() + ": not a diffusion cache");
    std::uint64_t hlen = 0;
    detail::read_pod(in, hlen);
    std::string h(hlen, '\0');
    in.read(h.data(), static_cast<std::streamsize>(hlen));
    if (!in || nlohmann::json::parse(h, nullptr, false) != expected_header)
        return std::nullopt;
    std::int64_t rows = 0, cols = 0, nnz = 0;
    detail::read_pod(in, rows);
    detail::read_pod(in, cols);
    detail::read_pod(in, nnz);
    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<std::int64_t> outer(static_cast<std::size_t>(rows + 1));
    std::vector<std::int32_t> inner(static_cast<std::size_t>(nnz));
    std::vector<double> values(static_cast<std::size_t>(nnz));
    for (auto &o : outer)
        detail::read_pod(in, o);
    for (auto &c : inner)
        detail::read_pod(in, c);
    in.read(reinterpret_cast<char *>(values.data()),
            static_cast<std::streamsize>(sizeof(double) * values.size()));
    if (!in)
        throw DataError(path.string() + ": truncated diffusion cache");
    triplets.reserve(values.size());
    for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t k = outer[i]; k < outer[i + 1]; ++k)
            triplets.emplace_back(static_cast<int>(i), inner[k], values[k]);
    DiffusionMatrix P(rows, cols);
    P.setFromTriplets(triplets.begin(), triplets.end());
    P.makeCompressed();
    return P;
}

} // namespace diffusal
