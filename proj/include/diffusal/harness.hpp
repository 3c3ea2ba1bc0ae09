#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <iterator>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "clustering.hpp"
#include "diffusion.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "results.hpp"
#include "strategy.hpp"

namespace diffusal {

struct ExperimentConfig {
    std::filesystem::path dataset_dir;
    StrategyConfig strategy;
    DiffusionConfig diffusion;
    QBCConfig model;
    KMeansOptions kmeans;
    std::vector<std::uint64_t> seeds{0};
    int val_size = 500;
    /// Final budget and step as multiples of the class count.
    int budget_max_multiple = 20;
    int step_multiple = 2;
    /// Replace the diffusion operator with the normalized two-hop adjacency.
    bool two_hop = false;

    void validate() const {
        strategy.validate();
        diffusion.validate();
        model.validate();
        detail::require(!seeds.empty(), "experiment: at least one seed is required");
        detail::require(val_size >= 0, "experiment: val_size must be non-negative");
        detail::require(step_multiple >= 1 && budget_max_multiple >= step_multiple,
                        "experiment: invalid budget schedule");
        detail::require(budget_max_multiple % step_multiple == 0,
                        "experiment: final budget must be a multiple of the step");
    }

    std::string strategy_label() const { return strategy.label() + (two_hop ? "-2hop" : ""); }
};

/// Seed for an independent stream derived from a run seed (splitmix64 mix).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Dataset restricted to its largest component with normalized features,
/// plus the diffusion artifacts every strategy shares.
struct PreparedData {
    Dataset dataset;
    DiffusionMatrix diffusion;
    FeatureMatrix propagated;
    Eigen::VectorXd importance;
    bool two_hop = false;
};

inline nlohmann::json diffusion_cache_header(const Dataset &ds, const DiffusionConfig &cfg,
                                             bool two_hop) {
    return {{"dataset", ds.name},
            {"nodes", ds.num_nodes()},
            {"edges", ds.graph.num_edges()},
            {"operator", two_hop ? "two-hop" : "ppr"},
            {"alphas", two_hop ? std::vector<double>{} : cfg.alphas},
            {"epsilon", two_hop ? 0.0 : cfg.epsilon}};
}

inline PreparedData prepare_data(const Dataset &raw, const DiffusionConfig &cfg, bool two_hop,
                                 const std::optional<std::filesystem::path> &cache = {}) {
    cfg.validate();
    PreparedData out;
    out.two_hop = two_hop;
    out.dataset = largest_connected_component(raw);
    for (int c = 0; c < out.dataset.labels.num_classes; ++c)
        if (std::find(out.dataset.labels.labels.begin(), out.dataset.labels.labels.end(), c) ==
            out.dataset.labels.labels.end())
            throw DataError("class " + std::to_string(c) + " is absent from the largest component");
    out.dataset.features = l1_normalize_features(out.dataset.features,
                                                 &out.dataset.report.zero_feature_rows);
    if (!out.dataset.report.zero_feature_rows.empty())
        out.dataset.report.warnings.push_back(
            std::to_string(out.dataset.report.zero_feature_rows.size()) + " all-zero feature rows");

    const auto header = diffusion_cache_header(out.dataset, cfg, two_hop);
    std::optional<DiffusionMatrix> cached;
    if (cache)
        cached = load_diffusion(*cache, header);
    if (cached) {
        out.diffusion = std::move(*cached);
    } else {
        out.diffusion = two_hop ? two_hop_matrix(out.dataset.graph)
                                : multiscale_ppr(out.dataset.graph, cfg);
        if (cache)
            save_diffusion(*cache, out.diffusion, header);
    }
    out.propagated = propagate_features(out.diffusion, out.dataset.features);
    out.importance = two_hop ? column_importance_scores(out.diffusion)
                             : importance_scores(out.diffusion);
    return out;
}

struct Splits {
    std::vector<NodeId> candidates;
    std::vector<NodeId> validation;
};

/// Seeded uniform validation set; every other node is a candidate for
/// labeling. Both lists are sorted.
inline Splits make_splits(std::size_t n, std::uint64_t seed, int val_size) {
    if (val_size < 0 || static_cast<std::size_t>(val_size) >= n)
        throw ConfigError("make_splits: val_size " + std::to_string(val_size) +
                          " must be below the node count " + std::to_string(n));
    std::vector<NodeId> all(n);
    for (std::size_t i = 0; i < n; ++i)
        all[i] = static_cast<NodeId>(i);
    std::mt19937_64 rng(derive_seed(seed, 1));
    auto val = select_random(all, val_size, rng);
    std::sort(val.begin(), val.end());
    std::vector<char> is_val(n, 0);
    for (NodeId v : val)
        is_val[v] = 1;
    Splits s;
    s.validation = std::move(val);
    for (NodeId v : all)
        if (!is_val[v])
            s.candidates.push_back(v);
    return s;
}

/// Evaluation nodes: everything neither labeled nor held out for validation.
inline std::vector<NodeId> test_nodes(const Splits &s, const LabeledPool &pool) {
    std::vector<NodeId> out;
    for (NodeId v : s.candidates)
        if (!pool.is_labeled(v))
            out.push_back(v);
    return out;
}

/// Requested validation size, or n/4 when it would not leave room for the
/// final budget.
inline int effective_val_size(std::size_t n, int requested, int budget_max) {
    if (static_cast<std::size_t>(requested) + static_cast<std::size_t>(budget_max) < n)
        return requested;
    return static_cast<int>(n / 4);
}

struct RoundRecord {
    int budget = 0;
    std::vector<NodeId> labeled;
    std::size_t test_size = 0;
    TrainReport training;
};

struct RunOutput {
    std::vector<RunResult> results;
    std::vector<RoundRecord> rounds;
    Splits splits;
    std::optional<ClusterModel> clusters;
    std::vector<int> acquisition_rounds;
};

/// A run that failed mid-way; carries the rows evaluated before the failure.
class RunAborted : public std::runtime_error {
public:
    RunAborted(const std::string &what, std::vector<RunResult> partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const std::vector<RunResult> &partial() const noexcept { return partial_; }

private:
    std::vector<RunResult> partial_;
};

/**
 * One seeded active-learning run.
 *
 * Budgets run from step*C to max*C in steps of step*C. At every budget the
 * classifier is retrained from scratch with early stopping on the validation
 * set and scored on all remaining nodes; then the next batch is acquired.
 * DiffusAL with diversity enabled starts from the nodes nearest to the k-means
 * centroids, every other strategy from a random draw.
 */
inline RunOutput run_experiment(const PreparedData &data, const ExperimentConfig &cfg,
                                std::uint64_t seed) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::duration d) { return std::chrono::duration<double>(d).count(); };

    const auto &ds = data.dataset;
    const auto n = ds.num_nodes();
    const int C = ds.labels.num_classes;
    const int batch = cfg.strategy.batch_size > 0 ? cfg.strategy.batch_size : cfg.step_multiple * C;
    const int budget_max = cfg.budget_max_multiple * C;
    const int val_size = effective_val_size(n, cfg.val_size, budget_max);

    RunOutput out;
    out.splits = make_splits(n, seed, val_size);
    if (out.splits.candidates.size() < static_cast<std::size_t>(budget_max))
        throw ConfigError("experiment: only " + std::to_string(out.splits.candidates.size()) +
                          " candidates for a budget of " + std::to_string(budget_max));

    const auto &x = data.propagated;
    const std::span<const int> labels = ds.labels.labels;
    LabeledPool pool(n, out.splits.candidates);
    std::mt19937_64 rng(derive_seed(seed, 2));
    const auto &sc = cfg.strategy;
    const bool is_diffusal = sc.kind == StrategyKind::diffusal;

    auto t0 = clock::now();
    if (is_diffusal && sc.use_div)
        out.clusters = kmeans(x, batch, derive_seed(seed, 3), cfg.kmeans);
    std::vector<NodeId> initial;
    if (is_diffusal && sc.use_div) {
        std::vector<char> eligible(n, 0);
        for (NodeId v : out.splits.candidates)
            eligible[v] = 1;
        initial = initial_pool(*out.clusters, x, batch, eligible);
    } else {
        initial = select_random(pool.unlabeled(), batch, rng);
    }
    for (NodeId v : initial)
        pool.add(v, 0);
    double acq_time = seconds(clock::now() - t0);

    const std::string name = cfg.strategy_label();
    for (int round = 0;; ++round) {
        try {
            QBCConfig mc = cfg.model;
            mc.seed = derive_seed(seed, 1000 + static_cast<std::uint64_t>(round));
            auto t1 = clock::now();
            QBCModel model = init_model(mc, static_cast<int>(x.cols()), C);
            auto report = train_full(model, x, labels, pool.labeled(), out.splits.validation, mc);
            const double train_time = seconds(clock::now() - t1);

            const auto test = test_nodes(out.splits, pool);
            RunResult r;
            r.dataset = ds.name;
            r.strategy = name;
            r.seed = seed;
            r.budget = static_cast<int>(pool.size());
            r.test_accuracy = accuracy(model, x, labels, test);
            r.acquisition_time_s = acq_time;
            r.training_time_s = train_time;
            out.results.push_back(r);
            out.rounds.push_back({r.budget, pool.labeled(), test.size(), report});

            if (static_cast<int>(pool.size()) >= budget_max)
                break;

            const int b = std::min(batch, budget_max - static_cast<int>(pool.size()));
            auto t2 = clock::now();
            SelectionContext ctx{model, x, labels, pool, mc};
            ctx.clusters = out.clusters ? &*out.clusters : nullptr;
            ctx.importance = &data.importance;
            ctx.round = round + 1;
            switch (sc.kind) {
            case StrategyKind::diffusal: select_batch_diffusal(ctx, sc, b); break;
            case StrategyKind::entropy: select_entropy(ctx, b); break;
            case StrategyKind::random:
                for (NodeId v : select_random(pool.unlabeled(), b, rng))
                    pool.add(v, round + 1);
                break;
            case StrategyKind::degree:
                for (NodeId v : select_degree(ds.graph, pool.unlabeled(), b))
                    pool.add(v, round + 1);
                break;
            case StrategyKind::coreset:
                for (NodeId v : select_coreset(latent_representations(model, x), pool.labeled(),
                                               pool.unlabeled(), b))
                    pool.add(v, round + 1);
                break;
            }
            acq_time = seconds(clock::now() - t2);
        } catch (const std::exception &e) {
            throw RunAborted(name + " seed " + std::to_string(seed) + " failed at budget " +
                                 std::to_string(pool.size()) + ": " + e.what(),
                             out.results);
        }
    }
    out.acquisition_rounds = pool.rounds();
    return out;
}

/// Per-run debug dump: splits, cluster assignments and the pool at each budget.
inline nlohmann::json debug_dump(const RunOutput &run) {
    nlohmann::json j;
    j["validation"] = run.splits.validation;
    j["test_rule"] = "all nodes outside labeled and validation sets";
    if (run.clusters) {
        j["cluster_assignments"] = run.clusters->assignments;
        j["cluster_inertia"] = run.clusters->inertia;
    }
    for (const auto &r : run.rounds)
        j["rounds"].push_back({{"budget", r.budget},
                               {"labeled", r.labeled},
                               {"test_size", r.test_size},
                               {"epochs", r.training.epochs_run},
                               {"best_val_accuracy", r.training.best_val_accuracy}});
    return j;
}

/**
 * Runs every configured seed, appending each completed run to `out_csv`.
 * Runs whose (dataset, strategy, seed) key is already in the file are
 * skipped. A failing run still appends the rows it produced before rethrowing.
 */
inline std::vector<RunResult>
run_sweep(const PreparedData &data, const ExperimentConfig &cfg,
          const std::optional<std::filesystem::path> &out_csv = {}, std::ostream *log = nullptr,
          const std::optional<std::filesystem::path> &debug_dir = {}) {
    std::set<RunKey> done;
    if (out_csv)
        done = completed_runs(*out_csv);
    std::vector<RunResult> all;
    for (auto seed : cfg.seeds) {
        if (done.count({data.dataset.name, cfg.strategy_label(), seed})) {
            if (log)
                *log << "skip " << cfg.strategy_label() << " seed " << seed << " (done)\n";
            continue;
        }
        RunOutput run;
        try {
            run = run_experiment(data, cfg, seed);
        } catch (const RunAborted &e) {
            if (out_csv)
                append_results(*out_csv, e.partial());
            throw;
        }
        if (out_csv)
            append_results(*out_csv, run.results);
        if (debug_dir) {
            std::filesystem::create_directories(*debug_dir);
            std::ofstream(*debug_dir / (cfg.strategy_label() + "-seed" + std::to_string(seed) +
                                        ".json"))
                << debug_dump(run).dump(1) << '\n';
        }
        if (log)
            *log << cfg.strategy_label() << " seed " << seed << ": final accuracy "
                 << run.results.back().test_accuracy << '\n';
        all.insert(all.end(), run.results.begin(), run.results.end());
    }
    return all;
}

/// Same protocol with the two-hop operator in place of diffusion for
/// propagation, clustering and importance.
inline RunOutput run_ablation_2hop(const Dataset &raw, ExperimentConfig cfg, std::uint64_t seed) {
    cfg.two_hop = true;
    const auto data = prepare_data(raw, cfg.diffusion, true);
    return run_experiment(data, cfg, seed);
}

/// Indices of the k largest scores, smaller id first on ties.
inline std::vector<NodeId> top_k(const Eigen::VectorXd &scores, std::size_t k) {
    std::vector<NodeId> order(static_cast<std::size_t>(scores.size()));
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = static_cast<NodeId>(i);
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](NodeId a, NodeId b) {
                          return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                      });
    order.resize(k);
    return order;
}

/// |top-k importance ∩ top-k degree| / k for each budget k.
inline std::vector<double> importance_degree_overlap(const Eigen::VectorXd &importance,
                                                     const Graph &g,
                                                     std::span<const int> budgets) {
    Eigen::VectorXd deg(static_cast<Eigen::Index>(g.num_nodes()));
    for (std::size_t u = 0; u < g.num_nodes(); ++u)
        deg[static_cast<Eigen::Index>(u)] = static_cast<double>(g.degree(static_cast<NodeId>(u)));
    std::vector<double> out;
    for (int k : budgets) {
        detail::require(k >= 1, "overlap: budgets must be positive");
        auto a = top_k(importance, static_cast<std::size_t>(k));
        auto b = top_k(deg, static_cast<std::size_t>(k));
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<NodeId> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        out.push_back(static_cast<double>(common.size()) / static_cast<double>(a.size()));
    }
    return out;
}

inline std::vector<double> importance_degree_overlap(const DiffusionMatrix &P, const Graph &g,
                                                     std::span<const int> budgets) {
    return importance_degree_overlap(importance_scores(P), g, budgets);
}

/// Class histogram of the k most important nodes for each budget, each row
/// normalized; one extra final row holds the distribution over all nodes.
inline std::vector<std::vector<double>>
important_class_distribution(const Eigen::VectorXd &importance, const LabelVector &labels,
                             std::span<const int> budgets) {
    std::vector<std::vector<double>> out;
    auto histogram = [&](std::span<const NodeId> nodes) {
        std::vector<double> h(static_cast<std::size_t>(labels.num_classes), 0.0);
        for (NodeId v : nodes)
            h[labels[v]] += 1.0;
        for (double &x : h)
            x /= static_cast<double>(nodes.size());
        return h;
    };
    for (int k : budgets) {
        detail::require(k >= 1, "class distribution: budgets must be positive");
        out.push_back(histogram(top_k(importance, static_cast<std::size_t>(k))));
    }
    out.push_back(histogram(top_k(importance, labels.size())));
    return out;
}

inline std::vector<std::vector<double>>
important_class_distribution(const DiffusionMatrix &P, const LabelVector &labels,
                             std::span<const int> budgets) {
    return important_class_distribution(importance_scores(P), labels, budgets);
}

/**
 * Parses a budget list: "2C..20C" (multiples of C in steps of 2C), "5C..50C:5C",
 * or a comma list of plain integers and "kC" terms.
 */
inline std::vector<int> parse_budgets(const std::string &spec, int classes) {
    auto term = [&](const std::string &t) {
        static const std::regex re(R"(^\s*(\d+)\s*(C?)\s*$)");
        std::smatch m;
        if (!std::regex_match(t, m, re))
            throw ConfigError("bad budget term '" + t + "'");
        const int v = std::stoi(m[1]);
        return m[2].length() ? v * classes : v;
    };
    std::vector<int> out;
    const auto dots = spec.find("..");
    if (dots != std::string::npos) {
        const auto colon = spec.find(':', dots);
        const int lo = term(spec.substr(0, dots));
        const int hi = term(spec.substr(dots + 2, colon == std::string::npos ? std::string::npos
                                                                            : colon - dots - 2));
        const int step = colon == std::string::npos ? 2 * classes : term(spec.substr(colon + 1));
        detail::require(step > 0 && lo > 0 && hi >= lo, "bad budget range '" + spec + "'");
        for (int k = lo; k <= hi; k += step)
            out.push_back(k);
        return out;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(term(tok));
    return out;
}

} // namespace diffusal
