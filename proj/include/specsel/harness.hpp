#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "specsel/common.hpp"
#include "specsel/dataset.hpp"
#include "specsel/search.hpp"
#include "specsel/serialize.hpp"

namespace specsel {

struct StudyConfig {
    double train_frac = 0.5;
    int splits = 50;
    std::uint64_t master_seed = 0;
    SearchConfig search;
    int workers = 1;
};

/// Outcome of one random split: selection, classification of the unlabeled
/// half, and the score against the shadow truth.
struct SplitResult {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    int n_unlabeled = 0;
    int n_misclassified = 0;
    double error_rate = 0.0;
    Eigen::MatrixXi confusion;  // truth x predicted counts
    std::vector<int> selected_cols;
    std::vector<double> selected_var_ids;
    std::string final_structure;
    double final_bic = 0.0;
    int iterations = 0;
    std::string stop_reason;
    std::vector<TraceRecord> trace;
};

struct RunReport {
    StudyConfig config;
    std::vector<std::string> class_names;
    std::vector<double> var_ids;
    std::vector<SplitResult> splits;
    int n_failed = 0;
    double mean_error = 0.0;
    double sd_error = 0.0;
    Eigen::MatrixXd confusion_percent;  // rows normalized to 100
    std::vector<int> selection_counts;  // per variable, over successful splits
};

/// Relabels classes through a name mapping (e.g. chicken -> poultry,
/// turkey -> poultry).  Classes absent from the mapping keep their name;
/// merged class indices follow first appearance over the original order.
inline Dataset merge_classes(const Dataset& d, const std::map<std::string, std::string>& mapping) {
    if (!d.has_labels()) throw DataError("merge_classes: dataset has no labels");
    for (const auto& [from, to] : mapping) {
        if (std::find(d.class_names.begin(), d.class_names.end(), from) == d.class_names.end())
            throw DataError("merge_classes: unknown class '" + from + "'");
        if (to.empty()) throw DataError("merge_classes: empty target class name");
    }
    Dataset out;
    out.values = d.values;
    out.var_ids = d.var_ids;
    std::vector<int> old_to_new(d.class_names.size(), -1);
    for (std::size_t g = 0; g < d.class_names.size(); ++g) {
        auto it = mapping.find(d.class_names[g]);
        const std::string& name = it == mapping.end() ? d.class_names[g] : it->second;
        auto pos = std::find(out.class_names.begin(), out.class_names.end(), name);
        if (pos == out.class_names.end()) {
            old_to_new[g] = static_cast<int>(out.class_names.size());
            out.class_names.push_back(name);
        } else {
            old_to_new[g] = static_cast<int>(pos - out.class_names.begin());
        }
    }
    if (out.class_names.empty()) throw DataError("merge_classes: no classes remain");
    out.labels.reserve(d.labels.size());
    for (int l : d.labels) out.labels.push_back(old_to_new[static_cast<std::size_t>(l)]);
    return out;
}

/// Runs the search on one split and scores the final model on the
/// unlabeled half against the shadow truth.
inline SplitResult evaluate_split(const Dataset& d, std::uint64_t seed, const StudyConfig& cfg) {
    SplitResult res;
    res.seed = seed;
    try {
        LabeledSplit split = stratified_split(d, cfg.train_frac, seed);
        SearchResult sr = run(split, cfg.search);
        res.trace = sr.state.trace;
        res.iterations = sr.state.iteration;
        res.stop_reason = to_string(sr.state.stop_reason);
        if (!sr.final_model || sr.state.chosen.empty()) {
            res.failed = true;
            res.error = "empty selection";
            return res;
        }
        res.selected_cols = sr.state.chosen;
        for (int c : sr.state.chosen) res.selected_var_ids.push_back(d.var_ids[static_cast<std::size_t>(c)]);
        res.final_structure = to_string(sr.final_model->covs.structure);
        res.final_bic = sr.final_model->bic;

        Responsibilities r = classify(*sr.final_model, split.unlabeled, sr.state.chosen);
        const std::vector<int>& truth = split.scoring_truth();
        const int G = d.num_classes();
        res.confusion = Eigen::MatrixXi::Zero(G, G);
        res.n_unlabeled = split.M();
        for (int j = 0; j < split.M(); ++j) {
            res.confusion(truth[static_cast<std::size_t>(j)], r.hard[static_cast<std::size_t>(j)]) += 1;
            if (r.hard[static_cast<std::size_t>(j)] != truth[static_cast<std::size_t>(j)]) ++res.n_misclassified;
        }
        res.error_rate = res.n_unlabeled > 0 ? static_cast<double>(res.n_misclassified) / res.n_unlabeled : 0.0;
    } catch (const std::exception& e) {
        res.failed = true;
        res.error = e.what();
    }
    return res;
}

/// Repeated random-split study.  Split i uses seed master_seed ^ i so any
/// single split can be re-run in isolation; splits run in parallel across
/// `workers` threads with results assembled in index order.
inline RunReport run_study(const Dataset& d, const StudyConfig& cfg) {
    if (cfg.splits < 1) throw ConfigError("run_study: splits must be >= 1");
    d.validate();
    if (!d.has_labels()) throw DataError("run_study: dataset has no labels");

    RunReport report;
    report.config = cfg;
    report.class_names = d.class_names;
    report.var_ids = d.var_ids;
    report.splits.resize(static_cast<std::size_t>(cfg.splits));

    parallel_for(cfg.splits, cfg.workers, [&](int i) {
        const std::uint64_t seed = cfg.master_seed ^ static_cast<std::uint64_t>(i);
        report.splits[static_cast<std::size_t>(i)] = evaluate_split(d, seed, cfg);
        if (log_enabled(LogLevel::info)) {
            const auto& s = report.splits[static_cast<std::size_t>(i)];
            log_message(LogLevel::info,
                        "split " + std::to_string(i) + " (seed " + std::to_string(seed) + "): " +
                            (s.failed ? "failed: " + s.error
                                      : format_double(100.0 * s.error_rate) + "% error, " +
                                            std::to_string(s.selected_cols.size()) + " variables, " + s.final_structure));
        }
    });

    const int G = d.num_classes();
    Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(G, G);
    report.selection_counts.assign(static_cast<std::size_t>(d.p()), 0);
    double sum = 0.0, sumsq = 0.0;
    int ok = 0;
    for (const auto& s : report.splits) {
        if (s.failed) {
            ++report.n_failed;
            continue;
        }
        ++ok;
        sum += s.error_rate;
        sumsq += s.error_rate * s.error_rate;
        confusion += s.confusion.cast<double>();
        for (int c : s.selected_cols) report.selection_counts[static_cast<std::size_t>(c)] += 1;
    }
    if (ok > 0) {
        report.mean_error = sum / ok;
        report.sd_error = ok > 1 ? std::sqrt(std::max(0.0, (sumsq - sum * sum / ok) / (ok - 1))) : 0.0;
    }
    report.confusion_percent = Eigen::MatrixXd::Zero(G, G);
    for (int g = 0; g < G; ++g) {
        const double row = confusion.row(g).sum();
        if (row > 0) report.confusion_percent.row(g) = 100.0 * confusion.row(g) / row;
    }
    return report;
}

/// (var_id, selection count) pairs over the study, in variable order.
inline std::vector<std::pair<double, int>> frequency_histogram(const RunReport& report) {
    if (static_cast<int>(report.splits.size()) - report.n_failed < 1)
        throw DataError("frequency_histogram: no successful split");
    std::vector<std::pair<double, int>> out;
    out.reserve(report.var_ids.size());
    for (std::size_t j = 0; j < report.var_ids.size(); ++j)
        out.emplace_back(report.var_ids[j], report.selection_counts[j]);
    return out;
}

struct SweepRow {
    int level = 1;
    double mean_error = 0.0;
    double sd_error = 0.0;
    int n_failed = 0;
};

/// Runs the full study at each aggregation level (same master seed per
/// level).  `per_level`, when set, receives each level's full report.
template <typename Callback = std::nullptr_t>
inline std::vector<SweepRow> aggregation_sweep(const Dataset& d, const std::vector<int>& levels,
                                               const StudyConfig& cfg, Callback&& per_level = nullptr) {
    std::vector<SweepRow> rows;
    for (int level : levels) {
        Dataset da = aggregate(d, level);
        RunReport report = run_study(da, cfg);
        rows.push_back({level, report.mean_error, report.sd_error, report.n_failed});
        if constexpr (!std::is_same_v<std::decay_t<Callback>, std::nullptr_t>) per_level(level, report);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report emission: report.json, splits/<seed>/trace.jsonl, hist.csv,
// confusion.csv
// ---------------------------------------------------------------------------

inline json study_config_to_json(const StudyConfig& cfg) {
    json j;
    j["train_frac"] = cfg.train_frac;
    j["splits"] = cfg.splits;
    j["master_seed"] = cfg.master_seed;
    j["strategy"] = to_string(cfg.search.strategy);
    j["min_evidence"] = cfg.search.min_evidence;
    j["ordering"] = to_string(cfg.search.ordering);
    j["updating"] = cfg.search.fit.updating;
    j["max_iterations"] = cfg.search.max_iterations;
    if (cfg.search.max_selected) j["max_selected"] = *cfg.search.max_selected;
    return j;
}

inline json report_to_json(const RunReport& report) {
    json j;
    j["config"] = study_config_to_json(report.config);
    j["classes"] = report.class_names;
    j["splits_requested"] = static_cast<int>(report.splits.size());
    j["splits_failed"] = report.n_failed;
    json per = json::array();
    for (const auto& s : report.splits) {
        json sj;
        sj["seed"] = s.seed;
        if (s.failed) {
            sj["failed"] = true;
            sj["error"] = s.error;
        } else {
            sj["error_rate"] = s.error_rate;
            sj["n_unlabeled"] = s.n_unlabeled;
            sj["n_misclassified"] = s.n_misclassified;
            sj["selected_var_ids"] = s.selected_var_ids;
            sj["structure"] = s.final_structure;
            sj["bic"] = s.final_bic;
            json conf = json::array();
            for (int g = 0; g < s.confusion.rows(); ++g) {
                json row = json::array();
                for (int h = 0; h < s.confusion.cols(); ++h) row.push_back(s.confusion(g, h));
                conf.push_back(std::move(row));
            }
            sj["confusion"] = std::move(conf);
        }
        sj["iterations"] = s.iterations;
        sj["stop_reason"] = s.stop_reason;
        sj["trace"] = "splits/" + std::to_string(s.seed) + "/trace.jsonl";
        per.push_back(std::move(sj));
    }
    j["per_split"] = std::move(per);
    json agg;
    agg["mean_error"] = report.mean_error;
    agg["sd_error"] = report.sd_error;
    agg["confusion_percent"] = matrix_to_json(report.confusion_percent);
    agg["selection_counts"] = report.selection_counts;
    j["aggregate"] = std::move(agg);
    return j;
}

inline void write_report(const RunReport& report, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_text_file((out_dir / "report.json").string(), report_to_json(report).dump(2) + "\n");

    for (const auto& s : report.splits) {
        fs::create_directories(out_dir / "splits" / std::to_string(s.seed));
        write_text_file((out_dir / "splits" / std::to_string(s.seed) / "trace.jsonl").string(),
                        trace_to_jsonl(s.trace));
    }

    std::string hist = "var_id,count\n";
    for (std::size_t j = 0; j < report.var_ids.size(); ++j)
        hist += format_double(report.var_ids[j]) + "," + std::to_string(report.selection_counts[j]) + "\n";
    write_text_file((out_dir / "hist.csv").string(), hist);

    std::string conf = "truth";
    for (const auto& name : report.class_names) conf += "," + name;
    conf += "\n";
    for (int g = 0; g < report.confusion_percent.rows(); ++g) {
        conf += report.class_names[static_cast<std::size_t>(g)];
        for (int h = 0; h < report.confusion_percent.cols(); ++h)
            conf += "," + format_double(report.confusion_percent(g, h));
        conf += "\n";
    }
    write_text_file((out_dir / "confusion.csv").string(), conf);
}

}  // namespace specsel
