#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <diffusal/diffusal.hpp>

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string &spec) {
    std::vector<std::uint64_t> out;
    if (auto dots = spec.find(".."); dots != std::string::npos) {
        const auto lo = std::stoull(spec.substr(0, dots));
        const auto hi = std::stoull(spec.substr(dots + 2));
        if (hi < lo)
            throw diffusal::ConfigError("empty seed range '" + spec + "'");
        for (auto s = lo; s <= hi; ++s)
            out.push_back(s);
        return out;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(std::stoull(tok));
    return out;
}

std::vector<double> parse_reals(const std::string &spec) {
    std::vector<double> out;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(std::stod(tok));
    return out;
}

struct RunArgs {
    std::string dataset, strategy = "diffusal", seeds = "0..9", alphas = "0.05,0.2";
    std::string out = "results.csv", combine = "multiplicative", cache, debug_dir, summary;
    double epsilon = 1e-4;
    bool no_unc = false, no_div = false, no_imp = false, two_hop = false;
    diffusal::ExperimentConfig cfg;
};

int cmd_run(RunArgs &a) {
    auto &cfg = a.cfg;
    cfg.dataset_dir = a.dataset;
    cfg.strategy.kind = diffusal::parse_strategy_kind(a.strategy);
    cfg.strategy.use_unc = !a.no_unc;
    cfg.strategy.use_div = !a.no_div;
    cfg.strategy.use_imp = !a.no_imp;
    cfg.strategy.combine = diffusal::parse_combine(a.combine);
    cfg.seeds = parse_seeds(a.seeds);
    cfg.diffusion.alphas = parse_reals(a.alphas);
    cfg.diffusion.epsilon = a.epsilon;
    cfg.two_hop = a.two_hop;
    cfg.validate();

    const auto raw = diffusal::load_dataset(cfg.dataset_dir);
    std::optional<std::filesystem::path> cache;
    if (!a.cache.empty())
        cache = a.cache;
    const auto data = diffusal::prepare_data(raw, cfg.diffusion, cfg.two_hop, cache);
    const auto &ds = data.dataset;
    std::cerr << ds.name << ": " << ds.num_nodes() << " nodes, " << ds.graph.num_edges()
              << " edges, " << ds.features.cols() << " features, " << ds.labels.num_classes
              << " classes (largest component)\n";
    for (const auto &w : ds.report.warnings)
        std::cerr << "warning: " << w << '\n';

    std::optional<std::filesystem::path> debug;
    if (!a.debug_dir.empty())
        debug = a.debug_dir;
    diffusal::run_sweep(data, cfg, std::filesystem::path(a.out), &std::cerr, debug);

    const int budget_max = cfg.budget_max_multiple * ds.labels.num_classes;
    nlohmann::json summary;
    summary["results"] = diffusal::summarize_results(diffusal::read_results(a.out));
    summary["metadata"] = {
        {"dataset", ds.name},
        {"nodes", ds.num_nodes()},
        {"edges", ds.graph.num_edges()},
        {"strategy", cfg.strategy_label()},
        {"alphas", cfg.diffusion.alphas},
        {"epsilon", cfg.diffusion.epsilon},
        {"operator", cfg.two_hop ? "two-hop" : "ppr"},
        {"members", cfg.model.members},
        {"hidden", cfg.model.hidden},
        {"dropout", cfg.model.dropout},
        {"learning_rate", cfg.model.learning_rate},
        {"weight_decay", cfg.model.weight_decay},
        {"max_epochs", cfg.model.max_epochs},
        {"patience", cfg.model.patience},
        {"val_size", diffusal::effective_val_size(ds.num_nodes(), cfg.val_size, budget_max)},
        {"budget_max", budget_max},
        {"test_rule", "all nodes outside the labeled and validation sets, per budget"},
        {"validation_in_pool", false}};
    const std::string summary_path = a.summary.empty() ? a.out + ".summary.json" : a.summary;
    std::ofstream(summary_path) << summary.dump(2) << '\n';
    return 0;
}

int cmd_duel(const std::string &results, double alpha, const std::string &out) {
    const auto dm = diffusal::duel_matrix(diffusal::read_results(results), alpha);
    auto j = dm.to_json();
    j["alpha"] = alpha;
    std::ofstream(out) << j.dump(2) << '\n';
    for (std::size_t i = 0; i < dm.strategies.size(); ++i)
        std::cout << dm.strategies[i] << ": avg wins " << dm.avg_wins[i] << "%, avg losses "
                  << dm.avg_losses[i] << "%\n";
    return 0;
}

int cmd_analyze(const std::string &dataset, const std::string &report, const std::string &budgets,
                const std::string &alphas, double epsilon, bool two_hop, const std::string &out) {
    diffusal::DiffusionConfig dc;
    dc.alphas = parse_reals(alphas);
    dc.epsilon = epsilon;
    const auto data = diffusal::prepare_data(diffusal::load_dataset(dataset), dc, two_hop);
    const auto ks = diffusal::parse_budgets(budgets, data.dataset.labels.num_classes);
    std::ofstream f(out);
    f.precision(17);
    if (report == "overlap") {
        const auto ov = diffusal::importance_degree_overlap(data.importance, data.dataset.graph, ks);
        f << "budget,overlap\n";
        for (std::size_t i = 0; i < ks.size(); ++i)
            f << ks[i] << ',' << ov[i] << '\n';
    } else if (report == "classdist") {
        const auto dist =
            diffusal::important_class_distribution(data.importance, data.dataset.labels, ks);
        f << "budget,class,fraction\n";
        for (std::size_t i = 0; i < dist.size(); ++i)
            for (std::size_t c = 0; c < dist[i].size(); ++c)
                f << (i < ks.size() ? std::to_string(ks[i]) : std::string("all")) << ',' << c
                  << ',' << dist[i][c] << '\n';
    } else {
        throw diffusal::ConfigError("unknown report '" + report + "' (overlap|classdist)");
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Diffusion-based graph active learning"};
    app.require_subcommand(1);

    RunArgs ra;
    auto *run = app.add_subcommand("run", "Run seeded active-learning experiments");
    run->add_option("--dataset", ra.dataset, "Dataset directory")->required();
    run->add_option("--strategy", ra.strategy, "diffusal|random|entropy|degree|coreset");
    run->add_option("--seeds", ra.seeds, "Seed range 'a..b' or list 'a,b,c'");
    run->add_option("--alphas", ra.alphas, "Comma-separated restart probabilities");
    run->add_option("--epsilon", ra.epsilon, "Push residual threshold");
    run->add_option("--members", ra.cfg.model.members, "Committee size");
    run->add_option("--hidden", ra.cfg.model.hidden, "Hidden units per member");
    run->add_option("--dropout", ra.cfg.model.dropout);
    run->add_option("--lr", ra.cfg.model.learning_rate);
    run->add_option("--weight-decay", ra.cfg.model.weight_decay);
    run->add_option("--max-epochs", ra.cfg.model.max_epochs);
    run->add_option("--patience", ra.cfg.model.patience);
    run->add_option("--val-size", ra.cfg.val_size, "Validation set size");
    run->add_option("--budget-multiple", ra.cfg.budget_max_multiple, "Final budget in units of C");
    run->add_option("--step-multiple", ra.cfg.step_multiple, "Batch size in units of C");
    run->add_option("--kmeans-restarts", ra.cfg.kmeans.restarts);
    run->add_option("--out", ra.out, "Results CSV (appended)");
    run->add_option("--summary", ra.summary, "Summary JSON (default: <out>.summary.json)");
    run->add_flag("--no-unc", ra.no_unc, "Disable the uncertainty score");
    run->add_flag("--no-div", ra.no_div, "Disable the diversity score");
    run->add_flag("--no-imp", ra.no_imp, "Disable the importance score");
    run->add_option("--combine", ra.combine, "multiplicative|additive");
    run->add_flag("--two-hop", ra.two_hop, "Use the normalized two-hop operator");
    run->add_option("--diffusion-cache", ra.cache, "Diffusion matrix cache file");
    run->add_option("--debug-dir", ra.debug_dir, "Write per-run JSON dumps here");

    std::string duel_results, duel_out = "duel.json";
    double duel_alpha = 0.05;
    auto *duel = app.add_subcommand("duel", "Pairwise dueling matrix from a results file");
    duel->add_option("--results", duel_results)->required();
    duel->add_option("--alpha", duel_alpha, "Significance level");
    duel->add_option("--out", duel_out);

    std::string an_dataset, an_report = "overlap", an_budgets = "2C..20C", an_out = "report.csv";
    std::string an_alphas = "0.05,0.2";
    double an_eps = 1e-4;
    bool an_two_hop = false;
    auto *analyze = app.add_subcommand("analyze", "Importance analyses");
    analyze->add_option("--dataset", an_dataset)->required();
    analyze->add_option("--report", an_report, "overlap|classdist");
    analyze->add_option("--budgets", an_budgets, "e.g. 2C..20C or 10,20,30");
    analyze->add_option("--alphas", an_alphas);
    analyze->add_option("--epsilon", an_eps);
    analyze->add_flag("--two-hop", an_two_hop);
    analyze->add_option("--out", an_out);

    std::string fx_out;
    diffusal::FixtureOptions fx;
    auto *fixture = app.add_subcommand("make-fixture", "Write a synthetic dataset directory");
    fixture->add_option("--out", fx_out)->required();
    fixture->add_option("--nodes", fx.nodes);
    fixture->add_option("--classes", fx.classes);
    fixture->add_option("--seed", fx.seed);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run)
            return cmd_run(ra);
        if (*duel)
            return cmd_duel(duel_results, duel_alpha, duel_out);
        if (*analyze)
            return cmd_analyze(an_dataset, an_report, an_budgets, an_alphas, an_eps, an_two_hop,
                               an_out);
        if (*fixture) {
            diffusal::save_dataset(diffusal::make_block_fixture(fx), fx_out);
            return 0;
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
