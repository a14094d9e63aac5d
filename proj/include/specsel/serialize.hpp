#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "specsel/common.hpp"
#include "specsel/covariance.hpp"
#include "specsel/dataset.hpp"
#include "specsel/mixture.hpp"
#include "specsel/search.hpp"

namespace specsel {

using nlohmann::json;

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto r = j.size();
    const auto c = r == 0 ? 0 : j.at(0).size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t k = 0; k < c; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j.at(i).at(k).get<double>();
    return m;
}

// ---------------------------------------------------------------------------
// Mixture model export / import
// ---------------------------------------------------------------------------

inline json model_to_json(const MixtureModel& m) {
    json j;
    j["structure"] = to_string(m.covs.structure);
    j["tau"] = m.tau;
    json means = json::array();
    for (const auto& mu : m.means) means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    j["means"] = std::move(means);
    json covs = json::array();
    for (const auto& s : m.covs.sigma) covs.push_back(matrix_to_json(s));
    j["covariances"] = std::move(covs);
    j["loglik"] = m.loglik;
    j["n_fit"] = m.n_fit;
    j["d"] = m.d;
    j["bic"] = m.bic;
    j["singular"] = m.singular;
    j["converged"] = m.converged;
    return j;
}

inline MixtureModel model_from_json(const json& j) {
    MixtureModel m;
    auto s = structure_from_string(j.at("structure").get<std::string>());
    if (!s) throw DataError("model json: unknown covariance structure");
    m.tau = j.at("tau").get<std::vector<double>>();
    for (const auto& mu : j.at("means")) {
        auto v = mu.get<std::vector<double>>();
        m.means.emplace_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    m.covs.structure = *s;
    for (const auto& cj : j.at("covariances")) m.covs.sigma.push_back(matrix_from_json(cj));
    m.covs.chol_lower.resize(m.covs.sigma.size());
    m.covs.log_det.resize(m.covs.sigma.size());
    for (std::size_t g = 0; g < m.covs.sigma.size(); ++g) {
        Eigen::LLT<Eigen::MatrixXd> llt(m.covs.sigma[g]);
        if (llt.info() != Eigen::Success) throw DataError("model json: covariance matrix not positive definite");
        m.covs.chol_lower[g] = llt.matrixL();
        double ld = 0.0;
        for (Eigen::Index k = 0; k < m.covs.chol_lower[g].rows(); ++k) ld += 2.0 * std::log(m.covs.chol_lower[g](k, k));
        m.covs.log_det[g] = ld;
    }
    m.loglik = j.at("loglik").get<double>();
    m.n_fit = j.at("n_fit").get<int>();
    m.d = j.at("d").get<int>();
    m.bic = j.at("bic").get<double>();
    m.singular = j.value("singular", false);
    m.converged = j.value("converged", true);
    return m;
}

// ---------------------------------------------------------------------------
// Split manifests (row indices per side + seed) for exact replay
// ---------------------------------------------------------------------------

inline json split_manifest(const LabeledSplit& split) {
    json j;
    j["seed"] = split.seed;
    j["labeled_rows"] = split.labeled_rows;
    j["unlabeled_rows"] = split.unlabeled_rows;
    return j;
}

inline LabeledSplit split_from_manifest(const Dataset& d, const json& j) {
    return split_from_rows(d, j.at("labeled_rows").get<std::vector<int>>(),
                           j.at("unlabeled_rows").get<std::vector<int>>(), j.at("seed").get<std::uint64_t>());
}

// ---------------------------------------------------------------------------
// Decision trace (JSON lines, one record per decision)
// ---------------------------------------------------------------------------

inline json trace_record_to_json(const TraceRecord& t) {
    json j;
    j["iteration"] = t.iteration;
    j["phase"] = t.phase == CompareAction::add ? "add" : "remove";
    j["var_id"] = t.var_id;
    j["bic_diff"] = std::isfinite(t.diff) ? json(t.diff) : json("-inf");
    j["structure"] = t.structure;
    j["decision"] = t.accepted ? "accepted" : "rejected";
    if (t.tie) j["tie"] = true;
    return j;
}

inline std::string trace_to_jsonl(const std::vector<TraceRecord>& trace) {
    std::string out;
    for (const auto& t : trace) {
        out += trace_record_to_json(t).dump();
        out += "\n";
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
}

}  // namespace specsel
