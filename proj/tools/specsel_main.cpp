// Command-line front end: single-split fitting, repeated random-split
// evaluation studies, and aggregation-level sweeps.
//
// Exit codes: 0 success, 2 data error, 3 configuration error,
// 4 every split failed.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specsel/specsel.hpp"

namespace {

namespace fs = std::filesystem;
using namespace specsel;

struct CommonArgs {
    std::string data_path;
    std::string label_col = "class";
    double train_frac = 0.5;
    std::uint64_t master_seed = 0;
    std::string strategy = "headlong";
    double min_evidence = 0.0;
    std::string updating = "on";
    std::string ordering = "bic-rank";
    int max_selected = 0;  // 0 = no cap
    int aggregate_level = 1;
    std::string merge_spec;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool need_out) {
    cmd->add_option("--data", a.data_path, "input CSV (numeric variable-id header plus a label column)")->required();
    cmd->add_option("--label-col", a.label_col, "name of the label column (default: class)");
    cmd->add_option("--train-frac", a.train_frac, "labeled fraction per class (default: 0.5)");
    cmd->add_option("--master-seed", a.master_seed, "master RNG seed (default: 0)");
    cmd->add_option("--strategy", a.strategy, "search strategy: headlong|greedy")
        ->check(CLI::IsMember({"headlong", "greedy"}));
    cmd->add_option("--min-evidence", a.min_evidence, "BIC-difference acceptance threshold (default: 0)");
    cmd->add_option("--updating", a.updating, "semi-supervised fitting over unlabeled rows: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--ordering", a.ordering, "candidate list order: bic-rank|ascending|descending")
        ->check(CLI::IsMember({"bic-rank", "ascending", "descending"}));
    cmd->add_option("--max-selected", a.max_selected, "cap on selected variables (0 = unlimited)");
    cmd->add_option("--aggregate", a.aggregate_level, "average blocks of k adjacent variables first (default: 1)");
    cmd->add_option("--merge-classes", a.merge_spec, "relabel classes, e.g. 'chicken=poultry,turkey=poultry'");
    auto* out = cmd->add_option("--out", a.out_dir, "output directory");
    if (need_out) out->required();
}

std::map<std::string, std::string> parse_merge_spec(const std::string& spec) {
    std::map<std::string, std::string> mapping;
    if (spec.empty()) return mapping;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        std::size_t comma = spec.find(',', pos);
        if (comma == std::string::npos) comma = spec.size();
        std::string pair = spec.substr(pos, comma - pos);
        std::size_t eq = pair.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= pair.size())
            throw ConfigError("--merge-classes entries must look like old=new, got '" + pair + "'");
        mapping[pair.substr(0, eq)] = pair.substr(eq + 1);
        pos = comma + 1;
    }
    return mapping;
}

SearchConfig make_search_config(const CommonArgs& a) {
    SearchConfig cfg;
    cfg.strategy = a.strategy == "greedy" ? Strategy::greedy : Strategy::headlong;
    cfg.min_evidence = a.min_evidence;
    cfg.fit.updating = a.updating == "on";
    if (a.ordering == "ascending")
        cfg.ordering = Ordering::ascending;
    else if (a.ordering == "descending")
        cfg.ordering = Ordering::descending;
    else
        cfg.ordering = Ordering::bic_rank;
    if (a.max_selected > 0) cfg.max_selected = a.max_selected;
    return cfg;
}

Dataset load_prepared(const CommonArgs& a) {
    Dataset d = load_csv(a.data_path, a.label_col);
    if (!a.merge_spec.empty()) d = merge_classes(d, parse_merge_spec(a.merge_spec));
    if (a.aggregate_level > 1) d = aggregate(d, a.aggregate_level);
    return d;
}

int cmd_fit(const CommonArgs& a) {
    Dataset d = load_prepared(a);
    LabeledSplit split = stratified_split(d, a.train_frac, a.master_seed);
    SearchConfig cfg = make_search_config(a);
    SearchResult sr = run(split, cfg);

    fs::create_directories(a.out_dir);
    write_text_file((fs::path(a.out_dir) / "split.json").string(), split_manifest(split).dump(2) + "\n");
    write_text_file((fs::path(a.out_dir) / "trace.jsonl").string(), trace_to_jsonl(sr.state.trace));

    // Plot-ready univariate evidence scan (iteration-1 records).
    std::string uni = "var_id,bic_diff,structure\n";
    for (const auto& t : sr.state.trace) {
        if (t.iteration != 1 || t.phase != CompareAction::add) continue;
        uni += format_double(t.var_id) + "," + format_double(t.diff) + "," + t.structure + "\n";
    }
    write_text_file((fs::path(a.out_dir) / "univariate.csv").string(), uni);

    if (!sr.final_model) {
        std::cout << "no variable carried grouping evidence; no model written\n";
        return 0;
    }
    json mj = model_to_json(*sr.final_model);
    mj["cols"] = sr.state.chosen;
    std::vector<double> ids;
    for (int c : sr.state.chosen) ids.push_back(d.var_ids[static_cast<std::size_t>(c)]);
    mj["var_ids"] = ids;
    write_text_file((fs::path(a.out_dir) / "model.json").string(), mj.dump(2) + "\n");

    std::cout << "selected " << sr.state.chosen.size() << " variables [";
    for (std::size_t i = 0; i < ids.size(); ++i) std::cout << (i ? " " : "") << format_double(ids[i]);
    std::cout << "] structure " << to_string(sr.final_model->covs.structure) << " bic "
              << format_double(sr.final_model->bic) << "\n";
    return 0;
}

int report_summary(const RunReport& report) {
    const int ok = static_cast<int>(report.splits.size()) - report.n_failed;
    if (ok == 0) {
        std::cerr << "all " << report.splits.size() << " splits failed\n";
        return 4;
    }
    std::cout << "splits: " << report.splits.size() << " (" << report.n_failed << " failed)\n"
              << "misclassification: mean " << format_double(100.0 * report.mean_error) << "% sd "
              << format_double(100.0 * report.sd_error) << "%\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& a, int splits, int workers) {
    Dataset d = load_prepared(a);
    StudyConfig cfg;
    cfg.train_frac = a.train_frac;
    cfg.splits = splits;
    cfg.master_seed = a.master_seed;
    cfg.search = make_search_config(a);
    cfg.workers = workers;
    RunReport report = run_study(d, cfg);
    write_report(report, a.out_dir);
    return report_summary(report);
}

int cmd_sweep(const CommonArgs& a, int splits, int workers, const std::vector<int>& levels) {
    CommonArgs base = a;
    base.aggregate_level = 1;  // the sweep applies its own levels
    Dataset d = load_prepared(base);
    StudyConfig cfg;
    cfg.train_frac = a.train_frac;
    cfg.splits = splits;
    cfg.master_seed = a.master_seed;
    cfg.search = make_search_config(a);
    cfg.workers = workers;

    fs::create_directories(a.out_dir);
    int worst = 0;
    auto rows = aggregation_sweep(d, levels, cfg, [&](int level, const RunReport& report) {
        write_report(report, fs::path(a.out_dir) / ("level_" + std::to_string(level)));
        worst = std::max(worst, report_summary(report) == 4 ? 4 : 0);
        std::cout << "level " << level << ": mean " << format_double(100.0 * report.mean_error) << "%\n";
    });
    std::string csv = "level,mean_error,sd_error,failed\n";
    for (const auto& r : rows)
        csv += std::to_string(r.level) + "," + format_double(r.mean_error) + "," + format_double(r.sd_error) + "," +
               std::to_string(r.n_failed) + "\n";
    write_text_file((fs::path(a.out_dir) / "sweep.csv").string(), csv);
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stepwise variable selection for model-based discriminant analysis"};
    app.require_subcommand(1);

    CommonArgs fit_args, eval_args, sweep_args;
    int splits = 50, workers = 1, sweep_splits = 50, sweep_workers = 1;
    std::vector<int> levels;

    CLI::App* fit = app.add_subcommand("fit", "run one split and emit the model, trace and split manifest");
    add_common(fit, fit_args, true);

    CLI::App* evaluate = app.add_subcommand("evaluate", "repeated random-split study with aggregate report");
    add_common(evaluate, eval_args, true);
    evaluate->add_option("--splits", splits, "number of random splits (default: 50)");
    evaluate->add_option("--workers", workers, "parallel split workers (default: 1)");

    CLI::App* sweep = app.add_subcommand("aggregate-sweep", "evaluate across adjacent-variable aggregation levels");
    add_common(sweep, sweep_args, true);
    sweep->add_option("--levels", levels, "aggregation levels, e.g. --levels 1 2 3 5 10")->required();
    sweep->add_option("--splits", sweep_splits, "number of random splits per level (default: 50)");
    sweep->add_option("--workers", sweep_workers, "parallel split workers (default: 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    try {
        if (fit->parsed()) return cmd_fit(fit_args);
        if (evaluate->parsed()) return cmd_evaluate(eval_args, splits, workers);
        if (sweep->parsed()) return cmd_sweep(sweep_args, sweep_splits, sweep_workers, levels);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
