#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "stats.hpp"

namespace diffusal {

struct RunResult {
    std::string dataset;
    std::string strategy;
    std::uint64_t seed = 0;
    int budget = 0;
    double test_accuracy = 0.0;
    double acquisition_time_s = 0.0;
    double training_time_s = 0.0;

    friend bool operator==(const RunResult &, const RunResult &) = default;
};

inline constexpr const char *kResultsHeader =
    "dataset,strategy,seed,budget,test_accuracy,acq_time_s,train_time_s";

inline std::string format_result(const RunResult &r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%d,%.17g,%.17g,%.17g", r.dataset.c_str(),
                  r.strategy.c_str(), static_cast<unsigned long long>(r.seed), r.budget,
                  r.test_accuracy, r.acquisition_time_s, r.training_time_s);
    return buf;
}

inline RunResult parse_result(const std::string &line, const std::string &file = "<results>",
                              std::size_t lineno = 0) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ','))
        f.push_back(tok);
    if (f.size() != 7)
        throw DataError(file, lineno, "expected 7 columns, got " + std::to_string(f.size()));
    RunResult r;
    try {
        r.dataset = f[0];
        r.strategy = f[1];
        r.seed = std::stoull(f[2]);
        r.budget = std::stoi(f[3]);
        r.test_accuracy = std::stod(f[4]);
        r.acquisition_time_s = std::stod(f[5]);
        r.training_time_s = std::stod(f[6]);
    } catch (const std::exception &e) {
        throw DataError(file, lineno, std::string("malformed result row: ") + e.what());
    }
    return r;
}

inline std::vector<RunResult> read_results(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("missing file: " + path.string());
    std::vector<RunResult> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (lineno == 1) {
            if (line != kResultsHeader)
                throw DataError(path.string(), 1, "unexpected header '" + line + "'");
            continue;
        }
        out.push_back(parse_result(line, path.string(), lineno));
    }
    return out;
}

/// Appends the rows of one run in a single write, creating the file with its
/// header when needed.
inline void append_results(const std::filesystem::path &path, const std::vector<RunResult> &rows) {
    std::string block;
    if (!std::filesystem::exists(path) || std::filesystem::file_size(path) == 0)
        block = std::string(kResultsHeader) + "\n";
    for (const auto &r : rows)
        block += format_result(r) + "\n";
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
    out.flush();
}

using RunKey = std::tuple<std::string, std::string, std::uint64_t>;

/// (dataset, strategy, seed) triples already present in a results file.
inline std::set<RunKey> completed_runs(const std::filesystem::path &path) {
    std::set<RunKey> keys;
    if (!std::filesystem::exists(path))
        return keys;
    for (const auto &r : read_results(path))
        keys.emplace(r.dataset, r.strategy, r.seed);
    return keys;
}

/// Mean and standard deviation of test accuracy per (dataset, strategy, budget).
inline nlohmann::json summarize_results(const std::vector<RunResult> &rows) {
    std::map<std::tuple<std::string, std::string, int>, std::vector<double>> acc;
    std::map<std::tuple<std::string, std::string, int>, std::pair<double, double>> times;
    for (const auto &r : rows) {
        auto key = std::make_tuple(r.dataset, r.strategy, r.budget);
        acc[key].push_back(r.test_accuracy);
        times[key].first += r.acquisition_time_s;
        times[key].second += r.training_time_s;
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto &[key, v] : acc) {
        const auto &[ds, strat, budget] = key;
        const double n = static_cast<double>(v.size());
        out.push_back({{"dataset", ds},
                       {"strategy", strat},
                       {"budget", budget},
                       {"seeds", v.size()},
                       {"mean_accuracy", mean(v)},
                       {"std_accuracy", v.size() > 1 ? std::sqrt(sample_variance(v)) : 0.0},
                       {"mean_acq_time_s", times[key].first / n},
                       {"mean_train_time_s", times[key].second / n}});
    }
    return out;
}

} // namespace diffusal
