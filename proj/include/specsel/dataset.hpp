#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specsel/common.hpp"

namespace specsel {

/// Tabular data: n rows of p real-valued variables, each variable identified
/// by a numeric id (a wavelength in nm for spectra, a column index otherwise).
/// Labels, when present, are dense 0-based class indices into class_names.
struct Dataset {
    Eigen::MatrixXd values;                // n x p
    std::vector<double> var_ids;           // p, strictly increasing
    std::vector<int> labels;               // empty, or one entry per row
    std::vector<std::string> class_names;  // one per class

    int n() const { return static_cast<int>(values.rows()); }
    int p() const { return static_cast<int>(values.cols()); }
    int num_classes() const { return static_cast<int>(class_names.size()); }
    bool has_labels() const { return !labels.empty(); }

    /// Checks the structural invariants; throws DataError on violation.
    void validate() const {
        if (static_cast<int>(var_ids.size()) != p())
            throw DataError("dataset: var_ids size does not match column count");
        for (int j = 0; j + 1 < p(); ++j)
            if (!(var_ids[j] < var_ids[j + 1]))
                throw DataError("dataset: variable identifiers must be strictly increasing");
        if (!values.allFinite())
            throw DataError("dataset: non-finite value present");
        if (has_labels()) {
            if (static_cast<int>(labels.size()) != n())
                throw DataError("dataset: labels size does not match row count");
            std::vector<int> counts(class_names.size(), 0);
            for (int l : labels) {
                if (l < 0 || l >= num_classes())
                    throw DataError("dataset: label index out of range");
                ++counts[static_cast<std::size_t>(l)];
            }
            for (std::size_t g = 0; g < counts.size(); ++g)
                if (counts[g] == 0)
                    throw DataError("dataset: class '" + class_names[g] + "' has no rows");
        }
    }

    /// Rows of each class, indexed by class.
    std::vector<std::vector<int>> rows_by_class() const {
        std::vector<std::vector<int>> out(class_names.size());
        for (int i = 0; i < n(); ++i) out[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
        return out;
    }

    Dataset subset_rows(const std::vector<int>& rows, bool keep_labels) const {
        Dataset out;
        out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) out.values.row(static_cast<Eigen::Index>(r)) = values.row(rows[r]);
        out.var_ids = var_ids;
        out.class_names = class_names;
        if (keep_labels && has_labels()) {
            out.labels.reserve(rows.size());
            for (int r : rows) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
        }
        return out;
    }
};

/// A random partition of a labeled dataset into a labeled (training) part and
/// an unlabeled part.  The true classes of the unlabeled rows are kept in a
/// shadow field that only the scorer reads; fitting code sees the unlabeled
/// rows without labels.
class LabeledSplit {
public:
    Dataset labeled;
    Dataset unlabeled;
    std::vector<int> labeled_rows;    // indices into the parent dataset
    std::vector<int> unlabeled_rows;  // indices into the parent dataset
    std::uint64_t seed = 0;

    LabeledSplit() = default;
    LabeledSplit(Dataset lab, Dataset unlab, std::vector<int> lab_rows, std::vector<int> unlab_rows,
                 std::vector<int> truth, std::uint64_t seed_value)
        : labeled(std::move(lab)),
          unlabeled(std::move(unlab)),
          labeled_rows(std::move(lab_rows)),
          unlabeled_rows(std::move(unlab_rows)),
          seed(seed_value),
          truth_(std::move(truth)) {}

    int N() const { return labeled.n(); }
    int M() const { return unlabeled.n(); }

    /// Ground truth for the unlabeled rows.  For scoring only; fitting code
    /// must not call this.
    const std::vector<int>& scoring_truth() const { return truth_; }

private:
    std::vector<int> truth_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const char* b = s.data();
    const char* e = b + s.size();
    double x = 0.0;
    auto res = std::from_chars(b, e, x);
    if (res.ec != std::errc() || res.ptr != e || !std::isfinite(x)) return std::nullopt;
    return x;
}

}  // namespace detail

/// Loads a CSV whose header row carries numeric variable identifiers, plus an
/// optional label column referenced by header name.  Cells use '.' decimals.
inline Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF && static_cast<unsigned char>(line[1]) == 0xBB &&
        static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);  // UTF-8 BOM

    std::vector<std::string> header = detail::split_line(line);
    int label_idx = -1;
    Dataset d;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (label_column && header[j] == *label_column) {
            if (label_idx >= 0) throw DataError("'" + path + "': duplicate label column '" + *label_column + "'");
            label_idx = static_cast<int>(j);
            continue;
        }
        auto v = detail::parse_double(header[j]);
        if (!v)
            throw DataError("'" + path + "': header column " + std::to_string(j + 1) +
                            " ('" + header[j] + "') is not a numeric variable identifier");
        d.var_ids.push_back(*v);
    }
    if (label_column && label_idx < 0)
        throw DataError("'" + path + "': label column '" + *label_column + "' not found");
    if (d.var_ids.empty()) throw DataError("'" + path + "': no variable columns");

    const std::size_t ncols = header.size();
    std::vector<std::vector<double>> rows;
    std::map<std::string, int> class_index;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> cells = detail::split_line(line);
        if (cells.size() != ncols)
            throw DataError("'" + path + "': row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " + std::to_string(ncols));
        std::vector<double> row;
        row.reserve(d.var_ids.size());
        for (std::size_t j = 0; j < ncols; ++j) {
            if (static_cast<int>(j) == label_idx) {
                if (cells[j].empty())
                    throw DataError("'" + path + "': row " + std::to_string(line_no) + ": missing label value");
                auto it = class_index.find(cells[j]);
                if (it == class_index.end()) {
                    it = class_index.emplace(cells[j], static_cast<int>(d.class_names.size())).first;
                    d.class_names.push_back(cells[j]);
                }
                d.labels.push_back(it->second);
            } else {
                auto v = detail::parse_double(cells[j]);
                if (!v)
                    throw DataError("'" + path + "': row " + std::to_string(line_no) + ", column " +
                                    std::to_string(j + 1) + ": non-numeric cell '" + cells[j] + "'");
                row.push_back(*v);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("'" + path + "': no data rows");

    d.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.var_ids.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];

    d.validate();
    return d;
}

/// Per-class random partition.  The labeled side gets ceil(train_frac * size)
/// rows of each class, so every class is represented; the draw is a
/// Fisher-Yates shuffle on a mt19937_64 stream, deterministic given the seed.
inline LabeledSplit stratified_split(const Dataset& d, double train_frac, std::uint64_t seed) {
    if (!d.has_labels()) throw DataError("stratified_split: dataset has no labels");
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("stratified_split: train_frac must be in (0,1)");

    auto by_class = d.rows_by_class();
    for (std::size_t g = 0; g < by_class.size(); ++g) {
        if (train_frac * static_cast<double>(by_class[g].size()) < 1.0)
            throw DataError("stratified_split: class '" + d.class_names[g] + "' too small for train_frac " +
                            format_double(train_frac));
    }

    std::mt19937_64 rng(seed);
    std::vector<int> lab_rows, unlab_rows;
    for (auto& rows : by_class) {
        deterministic_shuffle(rows, rng);
        auto k = static_cast<std::size_t>(std::ceil(train_frac * static_cast<double>(rows.size())));
        k = std::min(k, rows.size());
        lab_rows.insert(lab_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
        unlab_rows.insert(unlab_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
    }
    std::sort(lab_rows.begin(), lab_rows.end());
    std::sort(unlab_rows.begin(), unlab_rows.end());

    Dataset labeled = d.subset_rows(lab_rows, /*keep_labels=*/true);
    Dataset unlabeled = d.subset_rows(unlab_rows, /*keep_labels=*/false);
    std::vector<int> truth;
    truth.reserve(unlab_rows.size());
    for (int r : unlab_rows) truth.push_back(d.labels[static_cast<std::size_t>(r)]);
    return LabeledSplit(std::move(labeled), std::move(unlabeled), std::move(lab_rows), std::move(unlab_rows),
                        std::move(truth), seed);
}

/// Rebuilds a split from explicit row lists (manifest replay).
inline LabeledSplit split_from_rows(const Dataset& d, const std::vector<int>& lab_rows,
                                    const std::vector<int>& unlab_rows, std::uint64_t seed) {
    if (!d.has_labels()) throw DataError("split_from_rows: dataset has no labels");
    std::vector<char> seen(static_cast<std::size_t>(d.n()), 0);
    auto mark = [&](const std::vector<int>& rows) {
        for (int r : rows) {
            if (r < 0 || r >= d.n()) throw DataError("split manifest: row index out of range");
            if (seen[static_cast<std::size_t>(r)]) throw DataError("split manifest: duplicated row index");
            seen[static_cast<std::size_t>(r)] = 1;
        }
    };
    mark(lab_rows);
    mark(unlab_rows);
    if (lab_rows.size() + unlab_rows.size() != static_cast<std::size_t>(d.n()))
        throw DataError("split manifest: row lists do not cover the dataset");
    Dataset labeled = d.subset_rows(lab_rows, true);
    labeled.validate();  // every class must appear on the labeled side
    Dataset unlabeled = d.subset_rows(unlab_rows, false);
    std::vector<int> truth;
    truth.reserve(unlab_rows.size());
    for (int r : unlab_rows) truth.push_back(d.labels[static_cast<std::size_t>(r)]);
    return LabeledSplit(std::move(labeled), std::move(unlabeled), lab_rows, unlab_rows, std::move(truth), seed);
}

/// Replaces consecutive blocks of `level` adjacent variables by their
/// row-wise mean.  A trailing partial block is averaged over its actual
/// width.  The new variable id is the mean of the member ids.
inline Dataset aggregate(const Dataset& d, int level) {
    if (level < 1) throw ConfigError("aggregate: level must be >= 1");
    if (level > d.p()) throw ConfigError("aggregate: level exceeds variable count");
    if (level == 1) return d;

    const int p_out = (d.p() + level - 1) / level;
    Dataset out;
    out.values.resize(d.n(), p_out);
    out.var_ids.resize(static_cast<std::size_t>(p_out));
    for (int b = 0; b < p_out; ++b) {
        const int lo = b * level;
        const int hi = std::min(lo + level, d.p());
        const int w = hi - lo;
        out.values.col(b) = d.values.middleCols(lo, w).rowwise().mean();
        double id = 0.0;
        for (int j = lo; j < hi; ++j) id += d.var_ids[static_cast<std::size_t>(j)];
        out.var_ids[static_cast<std::size_t>(b)] = id / w;
    }
    out.labels = d.labels;
    out.class_names = d.class_names;
    return out;
}

}  // namespace specsel
