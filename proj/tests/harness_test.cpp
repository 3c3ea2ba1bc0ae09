#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <diffusal/diffusal.hpp>

#include "support/oracles.hpp"

using namespace diffusal;

namespace {

const PreparedData &fixture_data() {
    static const PreparedData data = prepare_data(make_block_fixture(), DiffusionConfig{}, false);
    return data;
}

ExperimentConfig fixture_config(StrategyKind kind) {
    ExperimentConfig cfg;
    cfg.strategy.kind = kind;
    cfg.model.max_epochs = 100;
    return cfg;
}

std::vector<RunResult> cell_rows(const std::string &strategy, const std::string &dataset,
                                 int budget, std::vector<double> accs) {
    std::vector<RunResult> out;
    for (std::size_t s = 0; s < accs.size(); ++s) {
        RunResult r;
        r.dataset = dataset;
        r.strategy = strategy;
        r.seed = s;
        r.budget = budget;
        r.test_accuracy = accs[s];
        out.push_back(r);
    }
    return out;
}

void append(std::vector<RunResult> &to, const std::vector<RunResult> &from) {
    to.insert(to.end(), from.begin(), from.end());
}

std::vector<double> parse_sample(const std::string &s) {
    std::vector<double> v;
    std::stringstream ss(s);
    double x;
    while (ss >> x)
        v.push_back(x);
    return v;
}

} // namespace

TEST(Splits, Arithmetic) {
    auto s = make_splits(100, 3, 20);
    EXPECT_EQ(s.validation.size(), 20u);
    EXPECT_EQ(s.candidates.size(), 80u);
    LabeledPool pool(100, s.candidates);
    pool.add(s.candidates[0], 0);
    pool.add(s.candidates[5], 0);
    EXPECT_EQ(test_nodes(s, pool).size(), 78u);
}

TEST(Splits, DeterministicAndDisjoint) {
    auto a = make_splits(200, 9, 50), b = make_splits(200, 9, 50);
    EXPECT_EQ(a.validation, b.validation);
    EXPECT_EQ(a.candidates, b.candidates);
    std::set<NodeId> val(a.validation.begin(), a.validation.end());
    for (NodeId v : a.candidates)
        EXPECT_EQ(val.count(v), 0u);
    EXPECT_NE(make_splits(200, 10, 50).validation, a.validation);
}

TEST(Splits, ValidationAsLargeAsGraphThrows) {
    EXPECT_THROW(make_splits(10, 0, 10), ConfigError);
    EXPECT_EQ(effective_val_size(60, 500, 40), 15);
    EXPECT_EQ(effective_val_size(2485, 500, 100), 500);
}

TEST(Fixture, ShapeAndConnectivity) {
    auto ds = make_block_fixture();
    EXPECT_EQ(ds.num_nodes(), 60u);
    EXPECT_EQ(ds.labels.num_classes, 2);
    EXPECT_TRUE(is_connected(ds.graph));
    const auto &data = fixture_data();
    EXPECT_EQ(data.dataset.num_nodes(), 60u);
    EXPECT_NEAR(data.importance.sum(), 1.0, 1e-9);
}

TEST(Fixture, RejectsInconsistentOptions) {
    FixtureOptions o;
    o.classes = 5;
    EXPECT_THROW(make_block_fixture(o), ConfigError);
    o = {};
    o.nodes = 5;
    EXPECT_THROW(make_block_fixture(o), ConfigError);
    o = {};
    o.signal_rate = 1.5;
    EXPECT_THROW(make_block_fixture(o), ConfigError);
    o = {};
    o.bridges = 0;
    EXPECT_THROW(make_block_fixture(o), ConfigError);
}

TEST(Experiment, ProtocolInvariantsForEveryStrategy) {
    const auto &data = fixture_data();
    const int C = 2;
    for (auto kind : {StrategyKind::diffusal, StrategyKind::random, StrategyKind::entropy,
                      StrategyKind::degree, StrategyKind::coreset}) {
        auto cfg = fixture_config(kind);
        auto run = run_experiment(data, cfg, 4);
        ASSERT_EQ(run.results.size(), 10u) << to_string(kind);
        std::set<NodeId> val(run.splits.validation.begin(), run.splits.validation.end());
        std::size_t prev = 0;
        for (std::size_t r = 0; r < run.results.size(); ++r) {
            const auto &res = run.results[r];
            EXPECT_EQ(res.budget, static_cast<int>(2 * C * (r + 1)));
            EXPECT_GE(res.test_accuracy, 0.0);
            EXPECT_LE(res.test_accuracy, 1.0);
            EXPECT_GE(res.acquisition_time_s, 0.0);
            EXPECT_GE(res.training_time_s, 0.0);
            const auto &lab = run.rounds[r].labeled;
            EXPECT_GT(lab.size(), prev);
            prev = lab.size();
            std::set<NodeId> uniq(lab.begin(), lab.end());
            EXPECT_EQ(uniq.size(), lab.size());
            for (NodeId v : lab)
                EXPECT_EQ(val.count(v), 0u);
            EXPECT_EQ(run.rounds[r].test_size + lab.size() + val.size(), 60u);
            if (r > 0) {
                // earlier labels are kept
                const auto &before = run.rounds[r - 1].labeled;
                EXPECT_TRUE(std::equal(before.begin(), before.end(), lab.begin()));
            }
        }
        auto replay = run_experiment(data, cfg, 4);
        ASSERT_EQ(replay.results.size(), run.results.size());
        for (std::size_t r = 0; r < run.results.size(); ++r) {
            EXPECT_EQ(replay.results[r].test_accuracy, run.results[r].test_accuracy);
            EXPECT_EQ(replay.rounds[r].labeled, run.rounds[r].labeled);
        }
    }
}

TEST(Experiment, DiffusalStartsFromClusterCentres) {
    const auto &data = fixture_data();
    auto run = run_experiment(data, fixture_config(StrategyKind::diffusal), 2);
    ASSERT_TRUE(run.clusters.has_value());
    EXPECT_EQ(run.clusters->k, 4);
    std::vector<char> eligible(60, 0);
    for (NodeId v : run.splits.candidates)
        eligible[v] = 1;
    auto expected = initial_pool(*run.clusters, data.propagated, 4, eligible);
    std::vector<NodeId> first(run.rounds[0].labeled);
    EXPECT_EQ(first, expected);
}

TEST(Experiment, TwoHopAblationKeepsBudgetGrid) {
    auto raw = make_block_fixture();
    auto cfg = fixture_config(StrategyKind::diffusal);
    auto a = run_ablation_2hop(raw, cfg, 1);
    auto b = run_experiment(fixture_data(), cfg, 1);
    ASSERT_EQ(a.results.size(), b.results.size());
    for (std::size_t i = 0; i < a.results.size(); ++i)
        EXPECT_EQ(a.results[i].budget, b.results[i].budget);
    EXPECT_EQ(a.results[0].strategy, "diffusal-2hop");
    auto m = diffusal::testing::to_dense(two_hop_matrix(raw.graph));
    EXPECT_GE(m.minCoeff(), 0.0);
    EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Experiment, MissingClassInComponentIsAnError) {
    auto ds = make_block_fixture();
    ds.labels.num_classes = 3;
    EXPECT_THROW(prepare_data(ds, DiffusionConfig{}, false), DataError);
}

TEST(Sweep, AppendsAndResumes) {
    auto dir = diffusal::testing::temp_dir("sweep");
    auto cfg = fixture_config(StrategyKind::random);
    cfg.seeds = {0, 1};
    auto csv = dir / "results.csv";
    auto first = run_sweep(fixture_data(), cfg, csv);
    EXPECT_EQ(first.size(), 20u);
    auto rows = read_results(csv);
    EXPECT_EQ(rows, first);
    cfg.seeds = {0, 1, 2};
    auto second = run_sweep(fixture_data(), cfg, csv);
    EXPECT_EQ(second.size(), 10u);
    EXPECT_EQ(read_results(csv).size(), 30u);
}

TEST(Results, RoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        RunResult r{"cora", "diffusal-no-imp", rng(), 2 * (t + 1), u(rng), u(rng) * 10,
                    u(rng) * 100};
        EXPECT_EQ(parse_result(format_result(r)), r);
    }
    auto dir = diffusal::testing::temp_dir("results");
    std::vector<RunResult> rows{{"a", "random", 0, 4, 0.5, 0.1, 0.2},
                                {"a", "random", 1, 4, 1.0 / 3.0, 0.0, 1e-9}};
    append_results(dir / "r.csv", rows);
    EXPECT_EQ(read_results(dir / "r.csv"), rows);
    std::ifstream in(dir / "r.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "dataset,strategy,seed,budget,test_accuracy,acq_time_s,train_time_s");
}

TEST(Results, MalformedRow) {
    EXPECT_THROW(parse_result("a,b,1,2,0.5"), DataError);
    EXPECT_THROW(parse_result("a,b,x,2,0.5,0,0"), DataError);
}

TEST(Welch, WorkedExample) {
    std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
    auto r = welch_t_test(a, b);
    EXPECT_NEAR(r.t, -1.0, 1e-12);
    EXPECT_NEAR(r.p_value, 0.34659350708733416, 1e-9);
}

TEST(Welch, DegenerateSamples) {
    std::vector<double> c{0.7, 0.7, 0.7};
    EXPECT_EQ(welch_t_test(c, c).p_value, 1.0);
    std::vector<double> d{0.2, 0.2, 0.2};
    EXPECT_EQ(welch_t_test(c, d).p_value, 0.0);
    std::vector<double> one{1.0};
    EXPECT_THROW(welch_t_test(one, c), ConfigError);
}

TEST(Welch, SeparatedSamples) {
    std::vector<double> a{0, 1e-6, -1e-6, 2e-6, 0}, b{100, 100 + 1e-6, 100 - 2e-6, 100, 100 + 3e-6};
    EXPECT_LT(welch_t_test(a, b).p_value, 1e-6);
}

TEST(Welch, MatchesFrozenReference) {
    std::ifstream in(std::string(DIFFUSAL_TEST_DATA) + "/welch_reference.csv");
    ASSERT_TRUE(in) << "missing welch_reference.csv";
    std::string line;
    std::getline(in, line);
    int count = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string sa, sb, st, sp;
        std::getline(ss, sa, ',');
        std::getline(ss, sb, ',');
        std::getline(ss, st, ',');
        std::getline(ss, sp, ',');
        auto r = welch_t_test(parse_sample(sa), parse_sample(sb));
        EXPECT_NEAR(r.p_value, std::stod(sp), 1e-6) << "row " << count;
        EXPECT_NEAR(r.t, std::stod(st), 1e-9 * std::max(1.0, std::abs(std::stod(st))));
        ++count;
    }
    EXPECT_EQ(count, 100);
}

TEST(Duel, IdenticalStrategiesNeverWin) {
    std::vector<RunResult> rows;
    for (int budget : {4, 8}) {
        append(rows, cell_rows("A", "d", budget, {0.5, 0.6, 0.7}));
        append(rows, cell_rows("B", "d", budget, {0.5, 0.6, 0.7}));
    }
    auto dm = duel_matrix(rows);
    EXPECT_EQ(dm.wins[0][1], 0.0);
    EXPECT_EQ(dm.wins[1][0], 0.0);
}

TEST(Duel, SeparatedStrategies) {
    std::vector<RunResult> rows;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> jitter(-0.001, 0.001);
    for (int budget : {4, 8, 12, 16, 20}) {
        std::vector<double> hi, lo;
        for (int s = 0; s < 10; ++s) {
            hi.push_back(0.9 + jitter(rng));
            lo.push_back(0.1 + jitter(rng));
        }
        append(rows, cell_rows("A", "d", budget, hi));
        append(rows, cell_rows("B", "d", budget, lo));
    }
    auto dm = duel_matrix(rows);
    ASSERT_EQ(dm.strategies, (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(dm.wins[0][1], 100.0);
    EXPECT_EQ(dm.wins[1][0], 0.0);
    EXPECT_EQ(dm.avg_wins[0], 100.0);
    EXPECT_EQ(dm.avg_losses[1], 100.0);
    EXPECT_EQ(dm.cells, 5u);
}

TEST(Duel, HandConstructedPercentages) {
    // four cells over two datasets; A beats B in exactly three, C ties everything
    std::vector<RunResult> rows;
    const std::vector<std::pair<std::string, int>> cells{{"x", 4}, {"x", 8}, {"y", 6}, {"y", 12}};
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto &[ds, budget] = cells[c];
        const double a = c < 3 ? 0.8 : 0.5;
        append(rows, cell_rows("A", ds, budget, {a, a + 0.01, a - 0.01, a + 0.005}));
        append(rows, cell_rows("B", ds, budget, {0.5, 0.51, 0.49, 0.505}));
        append(rows, cell_rows("C", ds, budget, {0.2, 0.9, 0.5, 0.65}));
    }
    auto dm = duel_matrix(rows);
    ASSERT_EQ(dm.strategies, (std::vector<std::string>{"A", "B", "C"}));
    EXPECT_EQ(dm.wins[0][1], 75.0);
    EXPECT_EQ(dm.wins[1][0], 0.0);
    EXPECT_EQ(dm.wins[0][2], 0.0);
    EXPECT_EQ(dm.wins[2][0], 0.0);
    EXPECT_EQ(dm.avg_wins[0], 37.5);
    EXPECT_EQ(dm.avg_losses[1], 37.5);
    auto j = dm.to_json();
    EXPECT_EQ(j["avg_wins"]["A"], 37.5);
}

TEST(Duel, SingleStrategyAndErrors) {
    auto dm = duel_matrix(cell_rows("A", "d", 4, {0.1, 0.2}));
    ASSERT_EQ(dm.wins.size(), 1u);
    EXPECT_EQ(dm.wins[0][0], 0.0);
    std::vector<RunResult> missing = cell_rows("A", "d", 4, {0.1, 0.2});
    append(missing, cell_rows("B", "d", 8, {0.1, 0.2}));
    EXPECT_THROW(duel_matrix(missing), DataError);
    EXPECT_THROW(duel_matrix(cell_rows("A", "d", 4, {0.1})), DataError);
}

TEST(Duel, NeverWinAndLoseSameCell) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<RunResult> rows;
    for (int budget = 2; budget <= 40; budget += 2)
        for (const char *s : {"A", "B", "C"}) {
            const double shift = s[0] == 'A' ? 0.05 : 0.0;
            std::vector<double> accs;
            for (int k = 0; k < 6; ++k)
                accs.push_back(0.6 + shift + noise(rng));
            append(rows, cell_rows(s, "d", budget, accs));
        }
    auto dm = duel_matrix(rows);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_LE(dm.wins[i][j] + dm.wins[j][i], 100.0);
            EXPECT_GE(dm.wins[i][j], 0.0);
        }
}

TEST(Duel, RandomStrategiesMatchFalsePositiveRate) {
    // 400 null cells between two identically distributed strategies; the
    // one-sided win rate should sit near alpha / 2 = 2.5%
    std::mt19937_64 rng(7);
    std::normal_distribution<double> acc(0.7, 0.03);
    std::vector<RunResult> rows;
    for (int cell = 0; cell < 400; ++cell)
        for (const char *s : {"r1", "r2"}) {
            std::vector<double> v;
            for (int k = 0; k < 10; ++k)
                v.push_back(acc(rng));
            append(rows, cell_rows(s, "d" + std::to_string(cell / 50), 2 * (cell % 50 + 1), v));
        }
    auto dm = duel_matrix(rows);
    const double total = dm.wins[0][1] + dm.wins[1][0];
    // binomial(400, 0.05): mean 20 cells = 5%, sd ~ 1.09%
    EXPECT_GT(total, 5.0 - 3.5 * 1.09);
    EXPECT_LT(total, 5.0 + 3.5 * 1.09);
}

TEST(Analysis, OverlapExamples) {
    auto star = diffusal::testing::star_graph(3);
    DiffusionConfig cfg;
    cfg.alphas = {0.2};
    auto P = multiscale_ppr(star, cfg);
    std::vector<int> k1{1};
    EXPECT_EQ(importance_degree_overlap(P, star, k1)[0], 1.0);

    auto k3 = diffusal::testing::complete_graph(3);
    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    std::vector<int> ks{1, 2, 3};
    EXPECT_EQ(importance_degree_overlap(uniform, k3, ks), (std::vector<double>{1.0, 1.0, 1.0}));

    std::mt19937_64 rng(1);
    auto g = diffusal::testing::random_connected_graph(30, 20, rng);
    std::vector<int> all{30};
    EXPECT_EQ(importance_degree_overlap(multiscale_ppr(g, cfg), g, all)[0], 1.0);
}

TEST(Analysis, ClassDistributionExamples) {
    auto g = diffusal::testing::cycle_graph(6);
    LabelVector one{{0, 0, 0, 0, 0, 0}, 1};
    auto P = multiscale_ppr(g, DiffusionConfig{});
    std::vector<int> ks{1, 3, 6};
    for (const auto &row : important_class_distribution(P, one, ks))
        EXPECT_EQ(row, std::vector<double>{1.0});

    LabelVector two{{0, 1, 1, 0, 1, 1}, 2};
    auto d = important_class_distribution(P, two, ks);
    ASSERT_EQ(d.size(), 4u);
    EXPECT_EQ(d[2], d[3]);
    EXPECT_NEAR(d[3][0], 1.0 / 3.0, 1e-12);
}

TEST(Analysis, HubCoreClassOverRepresented) {
    // class 0: a 6-clique; class 1: a 24-node path hanging off it
    std::vector<std::pair<NodeId, NodeId>> e;
    for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j)
            e.emplace_back(i, j);
    for (int i = 6; i < 30; ++i)
        e.emplace_back(i, i == 6 ? i % 6 : i - 1);
    e.emplace_back(12, 3);
    e.emplace_back(20, 1);
    auto g = diffusal::testing::make_graph(30, e);
    LabelVector labels;
    labels.num_classes = 2;
    for (int i = 0; i < 30; ++i)
        labels.labels.push_back(i < 6 ? 0 : 1);
    std::vector<int> ks{4};
    auto d = important_class_distribution(multiscale_ppr(g, DiffusionConfig{}), labels, ks);
    // dense oracle importance agrees on the top-4 set
    Eigen::VectorXd oracle = diffusal::testing::dense_ppr(g, 0.05).rowwise().sum() +
                             diffusal::testing::dense_ppr(g, 0.2).rowwise().sum();
    auto top = top_k(oracle, 4);
    int class0 = 0;
    for (NodeId v : top)
        class0 += labels.labels[v] == 0;
    EXPECT_NEAR(d[0][0], class0 / 4.0, 1e-12);
    EXPECT_GT(d[0][0], d[1][0]);
}

TEST(Analysis, ParseBudgets) {
    EXPECT_EQ(parse_budgets("2C..20C", 7),
              (std::vector<int>{14, 28, 42, 56, 70, 84, 98, 112, 126, 140}));
    EXPECT_EQ(parse_budgets("5..20:5", 3), (std::vector<int>{5, 10, 15, 20}));
    EXPECT_EQ(parse_budgets("10,3C", 4), (std::vector<int>{10, 12}));
    EXPECT_THROW(parse_budgets("x..y", 2), ConfigError);
}
