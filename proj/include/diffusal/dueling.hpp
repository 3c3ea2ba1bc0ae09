#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "results.hpp"
#include "stats.hpp"

namespace diffusal {

/**
 * Pairwise win table over (dataset, budget) cells.
 *
 * wins[i][j] is the percentage of cells where strategy i has the higher mean
 * accuracy and the two-sided Welch test rejects equality. avg_wins[i] is the
 * mean of row i and avg_losses[j] the mean of column j, both over the other
 * strategies.
 */
struct DuelMatrix {
    std::vector<std::string> strategies;
    std::vector<std::vector<double>> wins;
    std::vector<double> avg_wins;
    std::vector<double> avg_losses;
    std::size_t cells = 0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["strategies"] = strategies;
        j["matrix"] = wins;
        j["cells"] = cells;
        for (std::size_t i = 0; i < strategies.size(); ++i) {
            j["avg_wins"][strategies[i]] = avg_wins[i];
            j["avg_losses"][strategies[i]] = avg_losses[i];
        }
        return j;
    }
};

inline DuelMatrix duel_matrix(const std::vector<RunResult> &results, double significance = 0.05) {
    using Cell = std::pair<std::string, int>;
    std::map<std::string, std::map<Cell, std::vector<double>>> acc;
    std::set<Cell> cells;
    for (const auto &r : results) {
        acc[r.strategy][{r.dataset, r.budget}].push_back(r.test_accuracy);
        cells.emplace(r.dataset, r.budget);
    }
    DuelMatrix dm;
    for (const auto &[name, by_cell] : acc) {
        dm.strategies.push_back(name);
        for (const auto &cell : cells) {
            auto it = by_cell.find(cell);
            if (it == by_cell.end())
                throw DataError("duel_matrix: strategy '" + name + "' has no results for " +
                                cell.first + " at budget " + std::to_string(cell.second));
            if (it->second.size() < 2)
                throw DataError("duel_matrix: strategy '" + name + "' has fewer than two seeds for " +
                                cell.first + " at budget " + std::to_string(cell.second));
        }
    }
    const std::size_t k = dm.strategies.size();
    dm.cells = cells.size();
    dm.wins.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j)
                continue;
            std::size_t won = 0;
            for (const auto &cell : cells) {
                const auto &a = acc[dm.strategies[i]][cell];
                const auto &b = acc[dm.strategies[j]][cell];
                if (mean(a) > mean(b) && welch_t_test(a, b).p_value < significance)
                    ++won;
            }
            dm.wins[i][j] =
                cells.empty() ? 0.0 : 100.0 * static_cast<double>(won) / static_cast<double>(cells.size());
        }
    }
    dm.avg_wins.assign(k, 0.0);
    dm.avg_losses.assign(k, 0.0);
    if (k > 1) {
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (i != j) {
                    dm.avg_wins[i] += dm.wins[i][j] / static_cast<double>(k - 1);
                    dm.avg_losses[j] += dm.wins[i][j] / static_cast<double>(k - 1);
                }
    }
    return dm;
}

} // namespace diffusal
