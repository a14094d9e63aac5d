#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "specsel/common.hpp"
#include "specsel/dataset.hpp"
#include "specsel/mixture.hpp"
#include "specsel/modelcomp.hpp"

namespace specsel {

enum class Strategy { greedy, headlong };
enum class Ordering { bic_rank, ascending, descending };

inline const char* to_string(Strategy s) { return s == Strategy::greedy ? "greedy" : "headlong"; }
inline const char* to_string(Ordering o) {
    switch (o) {
        case Ordering::bic_rank: return "bic-rank";
        case Ordering::ascending: return "ascending";
        case Ordering::descending: return "descending";
    }
    return "?";
}

struct SearchConfig {
    Strategy strategy = Strategy::headlong;
    double min_evidence = 0.0;
    Ordering ordering = Ordering::bic_rank;
    std::optional<int> max_selected;
    int max_iterations = 1000;
    FitOptions fit;  // fit.updating enables semi-supervised fitting
};

/// One decision record; the stream of records replays the search exactly.
struct TraceRecord {
    int iteration = 0;
    CompareAction phase = CompareAction::add;
    int col = -1;
    double var_id = 0.0;
    double diff = 0.0;
    std::string structure;  // structure of the refitted comparison side
    bool accepted = false;
    bool tie = false;
};

enum class StopReason { none, two_rejections, empty_initial, max_iterations };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::none: return "none";
        case StopReason::two_rejections: return "two-consecutive-rejections";
        case StopReason::empty_initial: return "no-initial-evidence";
        case StopReason::max_iterations: return "max-iterations";
    }
    return "?";
}

struct SelectionState {
    std::vector<int> chosen;    // inclusion order
    std::deque<int> remaining;  // rotating candidate list
    std::vector<TraceRecord> trace;
    int consecutive_rejections = 0;
    int iteration = 0;
    std::optional<MixtureModel> current_model;
    bool terminated = false;
    StopReason stop_reason = StopReason::none;
};

namespace detail {

inline TraceRecord make_record(int iteration, const ComparisonResult& cmp, bool accepted) {
    TraceRecord t;
    t.iteration = iteration;
    t.phase = cmp.action;
    t.col = cmp.col;
    t.var_id = cmp.var_id;
    t.diff = cmp.diff;
    const auto& refit = cmp.action == CompareAction::add ? cmp.structure_grouping : cmp.structure_nogrouping;
    if (refit) t.structure = to_string(*refit);
    t.accepted = accepted;
    t.tie = cmp.structure_tie;
    return t;
}

inline void refresh_model(SelectionState& state, const LabeledSplit& split, const SearchConfig& cfg) {
    state.current_model = best_structure_fit(split, state.chosen, cfg.fit);
}

/// Registers a phase outcome; two consecutive rejected phases stop the run.
inline void phase_outcome(SelectionState& state, bool accepted) {
    if (accepted) {
        state.consecutive_rejections = 0;
    } else if (++state.consecutive_rejections >= 2) {
        state.terminated = true;
        state.stop_reason = StopReason::two_rejections;
    }
}

inline void add_phase(SelectionState& state, const LabeledSplit& split, const SearchConfig& cfg) {
    const bool at_cap = cfg.max_selected && static_cast<int>(state.chosen.size()) >= *cfg.max_selected;
    bool accepted = false;
    if (!at_cap && !state.remaining.empty()) {
        const double chosen_bic = state.current_model ? state.current_model->bic : 0.0;
        const std::optional<CovarianceStructure> chosen_structure =
            state.current_model ? std::optional<CovarianceStructure>(state.current_model->covs.structure)
                                : std::nullopt;
        if (cfg.strategy == Strategy::headlong) {
            // First-improvement scan; every rejected candidate rotates to
            // the list tail and is checked at most once per phase.
            const std::size_t limit = state.remaining.size();
            for (std::size_t k = 0; k < limit; ++k) {
                const int cand = state.remaining.front();
                state.remaining.pop_front();
                ComparisonResult cmp = compare_add(split, state.chosen, cand, chosen_bic, chosen_structure, cfg.fit);
                const bool take = cmp.diff > cfg.min_evidence;
                state.trace.push_back(make_record(state.iteration, cmp, take));
                if (take) {
                    state.chosen.push_back(cand);
                    refresh_model(state, split, cfg);
                    accepted = true;
                    break;
                }
                state.remaining.push_back(cand);
            }
        } else {
            // Best-improvement: evaluate every candidate, propose the argmax.
            std::optional<ComparisonResult> best;
            for (int cand : state.remaining) {
                ComparisonResult cmp = compare_add(split, state.chosen, cand, chosen_bic, chosen_structure, cfg.fit);
                if (!best || cmp.diff > best->diff) best = std::move(cmp);
            }
            const bool take = best && best->diff > cfg.min_evidence;
            if (best) state.trace.push_back(make_record(state.iteration, *best, take));
            if (take) {
                state.remaining.erase(std::find(state.remaining.begin(), state.remaining.end(), best->col));
                state.chosen.push_back(best->col);
                refresh_model(state, split, cfg);
                accepted = true;
            }
        }
    }
    phase_outcome(state, accepted);
}

inline void remove_phase(SelectionState& state, const LabeledSplit& split, const SearchConfig& cfg) {
    bool accepted = false;
    if (state.chosen.size() >= 2 && state.current_model) {
        const double full_bic = state.current_model->bic;
        const CovarianceStructure full_structure = state.current_model->covs.structure;
        if (cfg.strategy == Strategy::headlong) {
            // Reverse inclusion order; the first variable with removal
            // evidence above the threshold goes back to the candidate tail.
            std::vector<int> order(state.chosen.rbegin(), state.chosen.rend());
            for (int cand : order) {
                ComparisonResult cmp = compare_remove(split, state.chosen, cand, full_bic, full_structure, cfg.fit);
                const bool take = cmp.diff > cfg.min_evidence;
                state.trace.push_back(make_record(state.iteration, cmp, take));
                if (take) {
                    state.chosen.erase(std::find(state.chosen.begin(), state.chosen.end(), cand));
                    state.remaining.push_back(cand);
                    refresh_model(state, split, cfg);
                    accepted = true;
                    break;
                }
            }
        } else {
            std::optional<ComparisonResult> best;
            for (int cand : state.chosen) {
                ComparisonResult cmp = compare_remove(split, state.chosen, cand, full_bic, full_structure, cfg.fit);
                if (!best || cmp.diff > best->diff) best = std::move(cmp);
            }
            const bool take = best && best->diff > cfg.min_evidence;
            if (best) state.trace.push_back(make_record(state.iteration, *best, take));
            if (take) {
                state.chosen.erase(std::find(state.chosen.begin(), state.chosen.end(), best->col));
                state.remaining.push_back(best->col);
                refresh_model(state, split, cfg);
                accepted = true;
            }
        }
    }
    phase_outcome(state, accepted);
}

inline void step(SelectionState& state, const LabeledSplit& split, const SearchConfig& cfg) {
    if (state.terminated) return;
    ++state.iteration;
    add_phase(state, split, cfg);
    if (state.terminated) return;
    // Removal checks begin once the model holds more than the two seed
    // variables, i.e. from the third iteration on.
    if (state.iteration >= 3) remove_phase(state, split, cfg);
}

}  // namespace detail

/// Evaluates the univariate Grouping vs No-Grouping evidence for every
/// variable, selects the argmax as the first chosen variable, and orders
/// the remaining candidates (decreasing evidence by default).  If no
/// variable clears min_evidence the search terminates with an empty model.
inline SelectionState initial_ranking(const LabeledSplit& split, const SearchConfig& cfg) {
    const int p = split.labeled.p();
    if (p < 1) throw ConfigError("initial_ranking: dataset has no variables");

    SelectionState state;
    state.iteration = 1;
    std::vector<ComparisonResult> cmps;
    cmps.reserve(static_cast<std::size_t>(p));
    int best = -1;
    for (int v = 0; v < p; ++v) {
        cmps.push_back(compare_add(split, {}, v, 0.0, std::nullopt, cfg.fit));
        if (best < 0 || cmps.back().diff > cmps[static_cast<std::size_t>(best)].diff) best = v;
    }
    const bool any = cmps[static_cast<std::size_t>(best)].diff > cfg.min_evidence;
    for (int v = 0; v < p; ++v)
        state.trace.push_back(detail::make_record(1, cmps[static_cast<std::size_t>(v)], any && v == best));

    std::vector<int> others;
    others.reserve(static_cast<std::size_t>(p));
    for (int v = 0; v < p; ++v)
        if (!(any && v == best)) others.push_back(v);
    switch (cfg.ordering) {
        case Ordering::bic_rank:
            std::stable_sort(others.begin(), others.end(), [&](int a, int b) {
                return cmps[static_cast<std::size_t>(a)].diff > cmps[static_cast<std::size_t>(b)].diff;
            });
            break;
        case Ordering::ascending:
            break;  // var_ids are strictly increasing in column order
        case Ordering::descending:
            std::reverse(others.begin(), others.end());
            break;
    }
    state.remaining.assign(others.begin(), others.end());

    if (!any) {
        state.terminated = true;
        state.stop_reason = StopReason::empty_initial;
        state.consecutive_rejections = 2;
        return state;
    }
    state.chosen.push_back(best);
    detail::refresh_model(state, split, cfg);
    return state;
}

/// One headlong iteration: first-improvement add phase, then (from the
/// third iteration) a reverse-inclusion-order removal phase.
inline void headlong_step(SelectionState& state, const LabeledSplit& split, const SearchConfig& cfg) {
    SearchConfig c = cfg;
    c.strategy = Strategy::headlong;
    detail::step(state, split, c);
}

/// One greedy iteration: best-improvement add phase over all candidates,
/// then (from the third iteration) an argmax removal phase.
inline void greedy_step(SelectionState& state, const LabeledSplit& split, const SearchConfig& cfg) {
    SearchConfig c = cfg;
    c.strategy = Strategy::greedy;
    detail::step(state, split, c);
}

struct SearchResult {
    SelectionState state;
    std::optional<MixtureModel> final_model;
};

/// Runs the full stepwise selection until two consecutive rejected phases
/// (or an iteration cap), then refits the final model on the chosen set.
inline SearchResult run(const LabeledSplit& split, const SearchConfig& cfg) {
    if (cfg.max_iterations < 1) throw ConfigError("search: max_iterations must be >= 1");
    if (std::isnan(cfg.min_evidence)) throw ConfigError("search: min_evidence must not be NaN");

    SelectionState state = initial_ranking(split, cfg);
    while (!state.terminated) {
        if (state.iteration >= cfg.max_iterations) {
            state.terminated = true;
            state.stop_reason = StopReason::max_iterations;
            break;
        }
        detail::step(state, split, cfg);
    }

    SearchResult result;
    result.state = std::move(state);
    if (!result.state.chosen.empty()) result.final_model = best_structure_fit(split, result.state.chosen, cfg.fit);
    if (log_enabled(LogLevel::info)) {
        std::string vars;
        for (int c : result.state.chosen) {
            if (!vars.empty()) vars += " ";
            vars += format_double(split.labeled.var_ids[static_cast<std::size_t>(c)]);
        }
        log_message(LogLevel::info, "search done (" + std::string(to_string(cfg.strategy)) + "): " +
                                        std::to_string(result.state.chosen.size()) + " variables [" + vars + "], " +
                                        to_string(result.state.stop_reason));
    }
    return result;
}

}  // namespace specsel
