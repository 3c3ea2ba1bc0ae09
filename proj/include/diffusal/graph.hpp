#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "error.hpp"

namespace diffusal {

using NodeId = std::int32_t;

/// Dense node-feature matrix, one row per node.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Undirected simple graph in compressed sparse adjacency form.
 *
 * Neighbor lists are sorted; the adjacency is symmetric and free of self-loops
 * and duplicate edges.
 */
class Graph {
public:
    Graph() = default;

    /// Builds a graph on nodes 0..n-1. Edges are symmetrized; self-loops and
    /// duplicates are dropped.
    static Graph from_edges(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges) {
        std::vector<std::vector<NodeId>> lists(n);
        for (auto [u, v] : edges) {
            if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n ||
                static_cast<std::size_t>(v) >= n)
                throw DataError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                ") out of range for " + std::to_string(n) + " nodes");
            if (u == v)
                continue;
            lists[u].push_back(v);
            lists[v].push_back(u);
        }
        Graph g;
        g.offsets_.assign(n + 1, 0);
        for (std::size_t u = 0; u < n; ++u) {
            auto &l = lists[u];
            std::sort(l.begin(), l.end());
            l.erase(std::unique(l.begin(), l.end()), l.end());
            g.offsets_[u + 1] = g.offsets_[u] + l.size();
        }
        g.adj_.reserve(g.offsets_[n]);
        for (auto &l : lists)
            g.adj_.insert(g.adj_.end(), l.begin(), l.end());
        return g;
    }

    std::size_t num_nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    /// Number of undirected edges.
    std::size_t num_edges() const noexcept { return adj_.size() / 2; }

    std::span<const NodeId> neighbors(NodeId u) const {
        return {adj_.data() + offsets_[u], adj_.data() + offsets_[u + 1]};
    }
    std::size_t degree(NodeId u) const { return offsets_[u + 1] - offsets_[u]; }

    std::vector<std::size_t> degrees() const {
        std::vector<std::size_t> d(num_nodes());
        for (std::size_t u = 0; u < d.size(); ++u)
            d[u] = degree(static_cast<NodeId>(u));
        return d;
    }

    std::size_t max_degree() const {
        std::size_t m = 0;
        for (std::size_t u = 0; u < num_nodes(); ++u)
            m = std::max(m, degree(static_cast<NodeId>(u)));
        return m;
    }

    bool has_edge(NodeId u, NodeId v) const {
        auto nb = neighbors(u);
        return std::binary_search(nb.begin(), nb.end(), v);
    }

    /// Every undirected edge once, as (u, v) with u < v.
    std::vector<std::pair<NodeId, NodeId>> edge_list() const {
        std::vector<std::pair<NodeId, NodeId>> out;
        out.reserve(num_edges());
        for (std::size_t u = 0; u < num_nodes(); ++u)
            for (NodeId v : neighbors(static_cast<NodeId>(u)))
                if (static_cast<NodeId>(u) < v)
                    out.emplace_back(static_cast<NodeId>(u), v);
        return out;
    }

private:
    std::vector<std::size_t> offsets_;
    std::vector<NodeId> adj_;
};

struct LabelVector {
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    int operator[](std::size_t i) const { return labels[i]; }
};

/// Non-fatal findings collected while loading and preprocessing.
struct ValidationReport {
    std::vector<NodeId> zero_feature_rows;
    std::size_t dropped_self_loops = 0;
    std::vector<std::string> warnings;
};

struct Dataset {
    std::string name;
    Graph graph;
    FeatureMatrix features;
    LabelVector labels;
    /// File id of every node.
    std::vector<std::int64_t> original_ids;
    /// Set by component extraction: parent index -> index in this dataset, -1 when dropped.
    std::vector<NodeId> reindex_map;
    ValidationReport report;

    std::size_t num_nodes() const noexcept { return graph.num_nodes(); }
};

inline void validate(const Dataset &ds) {
    const auto n = ds.graph.num_nodes();
    if (static_cast<std::size_t>(ds.features.rows()) != n)
        throw DataError("feature row-count mismatch: " + std::to_string(ds.features.rows()) +
                        " rows for " + std::to_string(n) + " nodes");
    if (ds.labels.size() != n)
        throw DataError("label count mismatch: " + std::to_string(ds.labels.size()) +
                        " labels for " + std::to_string(n) + " nodes");
    for (std::size_t i = 0; i < n; ++i)
        if (ds.labels[i] < 0 || ds.labels[i] >= ds.labels.num_classes)
            throw DataError("label " + std::to_string(ds.labels[i]) + " of node " +
                            std::to_string(i) + " out of range");
}

/// Connected components by BFS; returns a component index per node, numbered
/// in order of their smallest member.
inline std::vector<int> connected_components(const Graph &g, int *count = nullptr) {
    const auto n = g.num_nodes();
    std::vector<int> comp(n, -1);
    int next = 0;
    std::deque<NodeId> queue;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] != -1)
            continue;
        comp[s] = next;
        queue.push_back(static_cast<NodeId>(s));
        while (!queue.empty()) {
            NodeId u = queue.front();
            queue.pop_front();
            for (NodeId v : g.neighbors(u))
                if (comp[v] == -1) {
                    comp[v] = next;
                    queue.push_back(v);
                }
        }
        ++next;
    }
    if (count)
        *count = next;
    return comp;
}

inline bool is_connected(const Graph &g) {
    int count = 0;
    connected_components(g, &count);
    return count == 1;
}

/// Induced sub-dataset on `keep` (sorted ascending parent indices).
inline Dataset induced_subset(const Dataset &ds, const std::vector<NodeId> &keep) {
    const auto n = ds.num_nodes();
    std::vector<NodeId> map(n, -1);
    for (std::size_t i = 0; i < keep.size(); ++i)
        map[keep[i]] = static_cast<NodeId>(i);

    std::vector<std::pair<NodeId, NodeId>> edges;
    for (auto [u, v] : ds.graph.edge_list())
        if (map[u] >= 0 && map[v] >= 0)
            edges.emplace_back(map[u], map[v]);

    Dataset out;
    out.name = ds.name;
    out.graph = Graph::from_edges(keep.size(), edges);
    out.features.resize(static_cast<Eigen::Index>(keep.size()), ds.features.cols());
    out.labels.num_classes = ds.labels.num_classes;
    out.labels.labels.resize(keep.size());
    out.original_ids.resize(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(keep[i]);
        out.labels.labels[i] = ds.labels[keep[i]];
        out.original_ids[i] = ds.original_ids.empty() ? keep[i] : ds.original_ids[keep[i]];
    }
    out.reindex_map = std::move(map);
    out.report.dropped_self_loops = ds.report.dropped_self_loops;
    out.report.warnings = ds.report.warnings;
    for (NodeId z : ds.report.zero_feature_rows)
        if (out.reindex_map[z] >= 0)
            out.report.zero_feature_rows.push_back(out.reindex_map[z]);
    return out;
}

/**
 * Restricts a dataset to its largest connected component.
 *
 * Equal-size components are resolved in favor of the one holding the smallest
 * node index (equivalently the smallest file id, since loading re-indexes
 * monotonically). Nodes keep their relative order.
 */
inline Dataset largest_connected_component(const Dataset &ds) {
    if (ds.num_nodes() == 0)
        throw DataError("empty graph has no connected component");
    int count = 0;
    auto comp = connected_components(ds.graph, &count);
    std::vector<std::size_t> sizes(count, 0);
    for (int c : comp)
        ++sizes[c];
    // Components are numbered by smallest member, so the first maximum wins ties.
    int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    std::vector<NodeId> keep;
    keep.reserve(sizes[best]);
    for (std::size_t u = 0; u < comp.size(); ++u)
        if (comp[u] == best)
            keep.push_back(static_cast<NodeId>(u));
    auto out = induced_subset(ds, keep);

    std::vector<int> seen(out.labels.num_classes, 0);
    for (int c : out.labels.labels)
        seen[c] = 1;
    for (int c = 0; c < out.labels.num_classes; ++c)
        if (!seen[c])
            out.report.warnings.push_back("class " + std::to_string(c) +
                                          " absent from largest component");
    return out;
}

/// Scales each row to unit L1 norm. All-zero rows are left untouched and their
/// indices appended to `zero_rows` when given.
inline FeatureMatrix l1_normalize_features(const FeatureMatrix &x,
                                           std::vector<NodeId> *zero_rows = nullptr) {
    if ((x.array() < 0.0).any())
        throw DataError("negative feature value");
    FeatureMatrix out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double s = out.row(i).sum();
        if (s > 0.0)
            out.row(i) /= s;
        else if (zero_rows)
            zero_rows->push_back(static_cast<NodeId>(i));
    }
    return out;
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path &p) {
    std::ifstream in(p);
    if (!in)
        throw DataError("missing file: " + p.string());
    return in;
}

inline std::int64_t parse_node_id(const std::string &tok, const std::string &file,
                                  std::size_t line) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(tok, &pos);
    } catch (const std::exception &) {
        throw DataError(file, line, "non-integer node id '" + tok + "'");
    }
    if (pos != tok.size())
        throw DataError(file, line, "non-integer node id '" + tok + "'");
    if (v < 0)
        throw DataError(file, line, "negative node id " + tok);
    return v;
}

inline double parse_real(const std::string &tok, const std::string &file, std::size_t line) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception &) {
        throw DataError(file, line, "malformed number '" + tok + "'");
    }
    if (pos != tok.size())
        throw DataError(file, line, "malformed number '" + tok + "'");
    if (v < 0.0)
        throw DataError(file, line, "negative feature value " + tok);
    return v;
}

inline std::string trim(const std::string &s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace detail

/**
 * Loads a dataset directory holding `graph.edges`, `features.csv`,
 * `labels.csv` and `meta.json`.
 *
 * Node ids are re-indexed densely in ascending id order. Without a
 * `num_nodes` entry in `meta.json` the node set is the set of ids that appear
 * in `graph.edges`; with it, ids must lie in [0, num_nodes). Feature and label
 * rows follow the re-indexed order. The raw graph is returned; component
 * extraction and normalization are separate steps.
 */
inline Dataset load_dataset(const std::filesystem::path &dir) {
    Dataset ds;

    const auto meta_path = dir / "meta.json";
    nlohmann::json meta;
    {
        auto in = detail::open_input(meta_path);
        try {
            in >> meta;
        } catch (const nlohmann::json::exception &e) {
            throw DataError(meta_path.string(), 1, std::string("invalid JSON: ") + e.what());
        }
    }
    if (!meta.contains("num_classes") || !meta["num_classes"].is_number_integer())
        throw DataError(meta_path.string(), 1, "missing integer 'num_classes'");
    ds.name = meta.value("name", dir.filename().string());
    ds.labels.num_classes = meta["num_classes"].get<int>();
    if (ds.labels.num_classes < 1)
        throw DataError(meta_path.string(), 1, "num_classes must be positive");
    const std::string feature_format = meta.value("features", std::string("dense"));
    if (feature_format != "dense" && feature_format != "sparse")
        throw DataError(meta_path.string(), 1, "unknown feature format '" + feature_format + "'");

    // Edges.
    const auto edges_path = dir / "graph.edges";
    std::vector<std::pair<std::int64_t, std::int64_t>> raw_edges;
    {
        auto in = detail::open_input(edges_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = detail::trim(line);
            if (line.empty() || line[0] == '#')
                continue;
            std::istringstream ls(line);
            std::string a, b, extra;
            if (!(ls >> a >> b) || (ls >> extra))
                throw DataError(edges_path.string(), lineno, "expected 'u v'");
            raw_edges.emplace_back(detail::parse_node_id(a, edges_path.string(), lineno),
                                   detail::parse_node_id(b, edges_path.string(), lineno));
        }
    }

    std::unordered_map<std::int64_t, NodeId> index;
    if (meta.contains("num_nodes")) {
        const auto n = meta["num_nodes"].get<std::int64_t>();
        ds.original_ids.resize(static_cast<std::size_t>(n));
        std::iota(ds.original_ids.begin(), ds.original_ids.end(), 0);
        for (auto [u, v] : raw_edges)
            if (u >= n || v >= n)
                throw DataError(edges_path.string(), 0,
                                "node id exceeds num_nodes=" + std::to_string(n));
        for (std::int64_t i = 0; i < n; ++i)
            index.emplace(i, static_cast<NodeId>(i));
    } else {
        for (auto [u, v] : raw_edges) {
            ds.original_ids.push_back(u);
            ds.original_ids.push_back(v);
        }
        std::sort(ds.original_ids.begin(), ds.original_ids.end());
        ds.original_ids.erase(std::unique(ds.original_ids.begin(), ds.original_ids.end()),
                              ds.original_ids.end());
        for (std::size_t i = 0; i < ds.original_ids.size(); ++i)
            index.emplace(ds.original_ids[i], static_cast<NodeId>(i));
    }
    const std::size_t n = ds.original_ids.size();

    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(raw_edges.size());
    for (auto [u, v] : raw_edges) {
        if (u == v)
            ++ds.report.dropped_self_loops;
        edges.emplace_back(index.at(u), index.at(v));
    }
    ds.graph = Graph::from_edges(n, edges);

    // Features.
    const auto feat_path = dir / "features.csv";
    {
        auto in = detail::open_input(feat_path);
        std::vector<std::vector<std::pair<std::size_t, double>>> rows;
        std::size_t width = 0;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = detail::trim(line);
            std::vector<std::pair<std::size_t, double>> row;
            if (feature_format == "dense") {
                if (line.empty())
                    continue;
                std::istringstream ls(line);
                std::string tok;
                std::size_t col = 0;
                while (std::getline(ls, tok, ','))
                    row.emplace_back(col++,
                                     detail::parse_real(detail::trim(tok), feat_path.string(),
                                                        lineno));
                if (rows.empty())
                    width = col;
                else if (col != width)
                    throw DataError(feat_path.string(), lineno,
                                    "expected " + std::to_string(width) + " columns, got " +
                                        std::to_string(col));
            } else {
                // An empty sparse line is an all-zero row.
                std::istringstream ls(line);
                std::string tok;
                while (ls >> tok) {
                    auto colon = tok.find(':');
                    if (colon == std::string::npos)
                        throw DataError(feat_path.string(), lineno,
                                        "expected 'idx:value', got '" + tok + "'");
                    auto idx = detail::parse_node_id(tok.substr(0, colon), feat_path.string(),
                                                     lineno);
                    row.emplace_back(static_cast<std::size_t>(idx),
                                     detail::parse_real(tok.substr(colon + 1),
                                                        feat_path.string(), lineno));
                    width = std::max(width, static_cast<std::size_t>(idx) + 1);
                }
            }
            rows.push_back(std::move(row));
        }
        if (feature_format == "sparse") {
            // Trailing blank lines are not rows.
            while (rows.size() > n && rows.back().empty())
                rows.pop_back();
            if (meta.contains("num_features"))
                width = std::max(width, meta["num_features"].get<std::size_t>());
        }
        if (rows.size() != n)
            throw DataError(feat_path.string(), lineno,
                            "row-count mismatch: " + std::to_string(rows.size()) +
                                " feature rows for " + std::to_string(n) + " nodes");
        ds.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(n),
                                          static_cast<Eigen::Index>(width));
        for (std::size_t i = 0; i < n; ++i)
            for (auto [c, v] : rows[i])
                ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
    }

    // Labels.
    const auto label_path = dir / "labels.csv";
    {
        auto in = detail::open_input(label_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = detail::trim(line);
            if (line.empty())
                continue;
            std::size_t pos = 0;
            int c = 0;
            try {
                c = std::stoi(line, &pos);
            } catch (const std::exception &) {
                throw DataError(label_path.string(), lineno, "non-integer label '" + line + "'");
            }
            if (pos != line.size())
                throw DataError(label_path.string(), lineno, "non-integer label '" + line + "'");
            if (c < 0 || c >= ds.labels.num_classes)
                throw DataError(label_path.string(), lineno,
                                "label " + std::to_string(c) + " out of range [0, " +
                                    std::to_string(ds.labels.num_classes) + ")");
            ds.labels.labels.push_back(c);
        }
        if (ds.labels.size() != n)
            throw DataError(label_path.string(), lineno,
                            "row-count mismatch: " + std::to_string(ds.labels.size()) +
                                " labels for " + std::to_string(n) + " nodes");
    }

    validate(ds);
    return ds;
}

/// Writes a dataset in the directory format read by load_dataset. Node ids in
/// the output are the dense indices 0..n-1.
inline void save_dataset(const Dataset &ds, const std::filesystem::path &dir,
                         bool sparse_features = true) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "graph.edges");
        for (auto [u, v] : ds.graph.edge_list())
            out << u << ' ' << v << '\n';
    }
    {
        std::ofstream out(dir / "features.csv");
        out.precision(17);
        for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
            bool first = true;
            for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
                const double v = ds.features(i, j);
                if (sparse_features) {
                    if (v == 0.0)
                        continue;
                    out << (first ? "" : " ") << j << ':' << v;
                } else {
                    out << (first ? "" : ",") << v;
                }
                first = false;
            }
            out << '\n';
        }
    }
    {
        std::ofstream out(dir / "labels.csv");
        for (int c : ds.labels.labels)
            out << c << '\n';
    }
    nlohmann::json meta = {{"name", ds.name},
                           {"num_classes", ds.labels.num_classes},
                           {"num_nodes", ds.num_nodes()},
                           {"num_features", ds.features.cols()},
                           {"features", sparse_features ? "sparse" : "dense"}};
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

} // namespace diffusal
