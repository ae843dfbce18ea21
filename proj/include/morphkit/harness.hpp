/*
 * Copyright 2026 The morphkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphkit/fitting.hpp"
#include "morphkit/metrics.hpp"
#include "morphkit/morphable.hpp"

namespace morphkit::harness {

using metrics::EvalReport;

// ---------------------------------------------------------------------------
// Dataset manifest and the first-letter split rule
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string identity;
    std::string gender;
    std::string coeff_path;
    std::vector<std::string> feature_paths;
};

/// Manifest grammar: one tab-separated line per identity,
///   name \t gender \t coefficient-file \t comma-separated-feature-files
/// The feature list may be "-" for none. `#` starts a comment line.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

inline DatasetManifest load_manifest(const std::string& path, bool check_files = true) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    const std::filesystem::path root = std::filesystem::path(path).parent_path();
    DatasetManifest m;
    std::string line;
    int line_no = 0;
    auto resolve = [&root](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : root / fp;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string feats;
        if (!std::getline(ss, e.identity, '\t') || !std::getline(ss, e.gender, '\t') ||
            !std::getline(ss, e.coeff_path, '\t'))
            throw std::runtime_error("load_manifest: malformed line " + std::to_string(line_no) +
                                     " in " + path);
        std::getline(ss, feats);
        if (e.identity.empty())
            throw std::runtime_error("load_manifest: empty identity name at line " +
                                     std::to_string(line_no));
        if (!feats.empty() && feats != "-") {
            std::istringstream fs(feats);
            std::string f;
            while (std::getline(fs, f, ','))
                if (!f.empty()) e.feature_paths.push_back(f);
        }
        if (check_files) {
            if (!std::filesystem::exists(resolve(e.coeff_path)))
                throw std::runtime_error("load_manifest: missing coefficient file " +
                                         e.coeff_path + " for " + e.identity);
            for (const auto& f : e.feature_paths)
                if (!std::filesystem::exists(resolve(f)))
                    throw std::runtime_error("load_manifest: missing feature file " + f +
                                             " for " + e.identity);
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_manifest: cannot open " + path);
    for (const auto& e : m.entries) {
        out << e.identity << '\t' << e.gender << '\t' << e.coeff_path << '\t';
        if (e.feature_paths.empty()) {
            out << '-';
        } else {
            for (size_t i = 0; i < e.feature_paths.size(); ++i)
                out << e.feature_paths[i] << (i + 1 < e.feature_paths.size() ? "," : "");
        }
        out << '\n';
    }
}

struct SplitResult {
    DatasetManifest train;
    DatasetManifest eval;
    std::string warning;
};

/// Names starting with A-E (case-insensitive) go to eval, the rest to train.
/// Ordering is stable.
inline SplitResult split_manifest(const DatasetManifest& m) {
    SplitResult out;
    for (const auto& e : m.entries) {
        if (e.identity.empty())
            throw std::invalid_argument("split_manifest: empty identity name");
        const char c = static_cast<char>(
            std::toupper(static_cast<unsigned char>(e.identity.front())));
        (c >= 'A' && c <= 'E' ? out.eval : out.train).entries.push_back(e);
    }
    if (out.eval.entries.empty() && !m.entries.empty())
        out.warning = "split_manifest: evaluation split is empty (no names start with A-E)";
    return out;
}

inline bool is_eval_name(const std::string& name) {
    if (name.empty()) throw std::invalid_argument("is_eval_name: empty name");
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(name.front())));
    return c >= 'A' && c <= 'E';
}

// ---------------------------------------------------------------------------
// Mean-shape oracles
// ---------------------------------------------------------------------------

enum class OracleKind { GlobalMean, PerGroupMean };

struct OracleModel {
    OracleKind kind = OracleKind::GlobalMean;
    Eigen::VectorXd global_mean;
    std::map<std::string, Eigen::VectorXd> group_means;

    const Eigen::VectorXd& predict(const std::string& group = "") const {
        if (kind == OracleKind::GlobalMean) return global_mean;
        const auto it = group_means.find(group);
        if (it == group_means.end())
            throw std::invalid_argument("OracleModel: unknown group '" + group + "'");
        return it->second;
    }
};

/// Arithmetic mean of the training coefficients, globally or per group key.
inline OracleModel fit_oracle(const std::vector<Eigen::VectorXd>& coefficients,
                              OracleKind kind,
                              const std::vector<std::string>& groups = {}) {
    if (coefficients.empty()) throw std::invalid_argument("fit_oracle: empty training set");
    OracleModel model;
    model.kind = kind;
    model.global_mean = Eigen::VectorXd::Zero(coefficients[0].size());
    for (const auto& c : coefficients) model.global_mean += c;
    model.global_mean /= static_cast<double>(coefficients.size());
    if (kind == OracleKind::PerGroupMean) {
        if (groups.size() != coefficients.size())
            throw std::invalid_argument("fit_oracle: group list size mismatch");
        std::map<std::string, std::pair<Eigen::VectorXd, int>> accum;
        for (size_t i = 0; i < coefficients.size(); ++i) {
            auto [it, fresh] = accum.try_emplace(
                groups[i], Eigen::VectorXd::Zero(coefficients[i].size()), 0);
            it->second.first += coefficients[i];
            ++it->second.second;
        }
        for (auto& [name, acc] : accum) {
            if (acc.second == 0) throw std::invalid_argument("fit_oracle: empty group " + name);
            model.group_means[name] = acc.first / static_cast<double>(acc.second);
        }
    }
    return model;
}

/// One row of an oracle-vs-baseline comparison table: metric name, tier
/// (line/point/region), then one value per compared method.
struct OracleComparisonRow {
    std::string metric;
    std::string tier;
    std::vector<double> values;

    std::string to_row() const {
        std::ostringstream ss;
        ss.precision(12);
        ss << metric << '\t' << tier;
        for (double v : values) ss << '\t' << v;
        return ss.str();
    }

    static OracleComparisonRow from_row(const std::string& row) {
        std::istringstream ss(row);
        OracleComparisonRow r;
        if (!std::getline(ss, r.metric, '\t') || !std::getline(ss, r.tier, '\t'))
            throw std::runtime_error("OracleComparisonRow: malformed row");
        std::string cell;
        while (std::getline(ss, cell, '\t')) r.values.push_back(std::stod(cell));
        return r;
    }
};

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

struct EvalInputs {
    // identity -> per-utterance predicted coefficients
    std::map<std::string, std::vector<Eigen::VectorXd>> predictions;
    // identity -> the one reference coefficient vector
    std::map<std::string, Eigen::VectorXd> references;
};

struct EvalOutput {
    std::vector<EvalReport> per_identity;  // utterance-mean rows, one per identity
    EvalReport aggregate;                  // mean across identities
};

namespace detail {

inline EvalReport mean_report(const std::vector<EvalReport>& rows, const std::string& id) {
    EvalReport out;
    out.pred_id = id;
    out.ref_id = id;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
        out.are.er += r.are.er / n;
        out.are.fr += r.are.fr / n;
        out.are.mr += r.are.mr / n;
        out.are.cr += r.are.cr / n;
        out.nme += r.nme / n;
        out.rmse_holistic += r.rmse_holistic / n;
        out.rmse_per_part.left_eye += r.rmse_per_part.left_eye / n;
        out.rmse_per_part.right_eye += r.rmse_per_part.right_eye / n;
        out.rmse_per_part.nose += r.rmse_per_part.nose / n;
        out.rmse_per_part.mouth += r.rmse_per_part.mouth / n;
        out.rmse_per_part.left_cheek += r.rmse_per_part.left_cheek / n;
        out.rmse_per_part.right_cheek += r.rmse_per_part.right_cheek / n;
    }
    out.are.mean = (out.are.er + out.are.fr + out.are.mr + out.are.cr) / 4.0;
    return out;
}

}  // namespace detail

/// Reconstruct both meshes per pair, run ARE + NME + holistic and part RMSE,
/// aggregate per identity (mean over utterances), then across identities.
inline EvalOutput evaluate(const EvalInputs& inputs, const morphable::MorphableBasis& basis,
                           const metrics::RatioSpec& spec, const metrics::RegionMap& regions,
                           const metrics::IcpConfig& icp_cfg = {}) {
    EvalOutput out;
    std::vector<EvalReport> identity_rows;
    for (const auto& [identity, utterances] : inputs.predictions) {
        const auto ref_it = inputs.references.find(identity);
        if (ref_it == inputs.references.end())
            throw std::runtime_error("evaluate: missing reference for identity " + identity);
        const morphable::Mesh ref_mesh =
            morphable::reconstruct(basis, {ref_it->second});
        const auto ref_lms = fitting::extract_landmarks(ref_mesh, basis);

        std::vector<EvalReport> rows;
        for (const auto& alpha : utterances) {
            const morphable::Mesh pred_mesh = morphable::reconstruct(basis, {alpha});
            const auto pred_lms = fitting::extract_landmarks(pred_mesh, basis);
            EvalReport r;
            r.pred_id = identity;
            r.ref_id = identity;
            r.are = metrics::absolute_ratio_error(pred_lms, ref_lms, spec);
            r.nme = metrics::nme(pred_lms, ref_lms, ref_mesh);
            r.rmse_holistic = metrics::icp_point_to_plane(pred_mesh, ref_mesh, icp_cfg).rmse;
            r.rmse_per_part = metrics::part_rmse(pred_mesh, ref_mesh, regions, icp_cfg);
            rows.push_back(std::move(r));
        }
        identity_rows.push_back(detail::mean_report(rows, identity));
    }
    out.per_identity = identity_rows;
    out.aggregate = detail::mean_report(identity_rows, "aggregate");
    return out;
}

inline void save_reports(const std::string& path, const EvalOutput& output) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_reports: cannot open " + path);
    out << EvalReport::header() << '\n';
    for (const auto& r : output.per_identity) out << r.to_row() << '\n';
    out << output.aggregate.to_row() << '\n';
}

// ---------------------------------------------------------------------------
// Exact binomial statistics
// ---------------------------------------------------------------------------

struct PreferenceTally {
    long n = 0;      // total responses
    long k = 0;      // votes for the candidate
    double gamma = 0.001;

    void validate() const {
        if (k < 0 || k > n) throw std::invalid_argument("PreferenceTally: need 0 <= k <= n");
        if (gamma <= 0.0 || gamma >= 1.0)
            throw std::invalid_argument("PreferenceTally: need 0 < gamma < 1");
    }
};

namespace detail {

inline long double log_pmf(long n, long k, double p) {
    return static_cast<long double>(std::lgamma(static_cast<double>(n) + 1.0) -
                                    std::lgamma(static_cast<double>(k) + 1.0) -
                                    std::lgamma(static_cast<double>(n - k) + 1.0)) +
           static_cast<long double>(k) * std::log(static_cast<long double>(p)) +
           static_cast<long double>(n - k) * std::log1p(static_cast<long double>(-p));
}

}  // namespace detail

/// Smallest integer m with CDF(m; n, p) >= q, by exact log-space summation.
inline long binomial_quantile(long n, double p, double q) {
    if (n < 1) throw std::invalid_argument("binomial_quantile: n must be >= 1");
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("binomial_quantile: need 0 < p < 1");
    if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("binomial_quantile: need 0 < q < 1");
    long double cdf = 0.0L;
    for (long m = 0; m <= n; ++m) {
        cdf += std::exp(detail::log_pmf(n, m, p));
        if (cdf >= static_cast<long double>(q)) return m;
    }
    return n;  // CDF reaches 1 at n up to rounding
}

/// Upper-tail probability P(X >= k) for X ~ Binomial(n, p).
inline double binomial_upper_tail(long n, long k, double p) {
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    long double tail = 0.0L;
    for (long m = n; m >= k; --m) tail += std::exp(detail::log_pmf(n, m, p));
    return static_cast<double>(std::min(tail, 1.0L));
}

struct SignificanceResult {
    bool reject = false;
    double p_value = 1.0;
    long threshold = 0;
};

/// One-sided preference test against p = 0.5: reject the null when the vote
/// count reaches the (1 - gamma) binomial quantile.
inline SignificanceResult significance_test(const PreferenceTally& t) {
    t.validate();
    SignificanceResult out;
    out.threshold = binomial_quantile(t.n, 0.5, 1.0 - t.gamma);
    out.reject = t.k >= out.threshold;
    out.p_value = binomial_upper_tail(t.n, t.k, 0.5);
    return out;
}

}  // namespace morphkit::harness
