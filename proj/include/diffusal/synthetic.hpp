#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "graph.hpp"

namespace diffusal {

struct FixtureOptions {
    int nodes = 60;
    int classes = 2;
    /// Vocabulary size; the first `signal_words * classes` words are class specific.
    int features = 24;
    int signal_words = 6;
    int words_per_node = 4;
    /// Probability that a drawn word comes from the node's class vocabulary.
    double signal_rate = 0.35;
    /// Each node links to this many ring successors within its class.
    int ring_span = 2;
    double intra_edge_rate = 0.03;
    int bridges = 3;
    std::uint64_t seed = 7;
};

/**
 * Connected homophilous graph with bag-of-words features.
 *
 * Class members form a ring with short chords plus a few random intra-class
 * edges; `bridges` random edges connect consecutive classes. Node i belongs
 * to class i mod C. Features are word counts where only a fraction of each
 * node's words carry class signal, so neighborhood aggregation matters.
 */
inline Dataset make_block_fixture(const FixtureOptions &opt = {}) {
    detail::require(opt.classes >= 1 && opt.nodes >= 3 * opt.classes,
                    "fixture: need at least three nodes per class");
    detail::require(opt.signal_words >= 1 && opt.signal_words * opt.classes <= opt.features,
                    "fixture: class vocabularies exceed the feature count");
    detail::require(opt.words_per_node >= 1 && opt.ring_span >= 1 && opt.bridges >= 1,
                    "fixture: words_per_node, ring_span and bridges must be positive");
    detail::require(opt.signal_rate >= 0.0 && opt.signal_rate <= 1.0 &&
                        opt.intra_edge_rate >= 0.0 && opt.intra_edge_rate <= 1.0,
                    "fixture: rates must lie in [0, 1]");
    std::mt19937_64 rng(opt.seed);
    const int n = opt.nodes, C = opt.classes;
    std::vector<std::vector<NodeId>> members(C);
    for (int i = 0; i < n; ++i)
        members[i % C].push_back(i);

    std::vector<std::pair<NodeId, NodeId>> edges;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto &m : members) {
        const auto s = m.size();
        for (std::size_t i = 0; i < s; ++i)
            for (int k = 1; k <= opt.ring_span && static_cast<std::size_t>(k) < s; ++k)
                edges.emplace_back(m[i], m[(i + k) % s]);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = i + 1; j < s; ++j)
                if (unit(rng) < opt.intra_edge_rate)
                    edges.emplace_back(m[i], m[j]);
    }
    for (int c = 0; c + 1 < C; ++c) {
        const auto &a = members[c];
        const auto &b = members[c + 1];
        for (int k = 0; k < opt.bridges; ++k)
            edges.emplace_back(a[std::uniform_int_distribution<std::size_t>(0, a.size() - 1)(rng)],
                               b[std::uniform_int_distribution<std::size_t>(0, b.size() - 1)(rng)]);
    }

    Dataset ds;
    ds.name = "blocks" + std::to_string(n);
    ds.graph = Graph::from_edges(static_cast<std::size_t>(n), edges);
    ds.labels.num_classes = C;
    ds.features = FeatureMatrix::Zero(n, opt.features);
    std::uniform_int_distribution<int> any_word(0, opt.features - 1);
    std::uniform_int_distribution<int> own_word(0, opt.signal_words - 1);
    for (int i = 0; i < n; ++i) {
        const int c = i % C;
        ds.labels.labels.push_back(c);
        ds.original_ids.push_back(i);
        for (int w = 0; w < opt.words_per_node; ++w) {
            const int word =
                unit(rng) < opt.signal_rate ? c * opt.signal_words + own_word(rng) : any_word(rng);
            ds.features(i, word) += 1.0;
        }
    }
    return ds;
}

} // namespace diffusal
