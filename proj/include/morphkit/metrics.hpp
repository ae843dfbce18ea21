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
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphkit/fitting.hpp"
#include "morphkit/morphable.hpp"

namespace morphkit::metrics {

using fitting::LandmarkSet;
using morphable::Mesh;
using morphable::PoseParams;

/// Landmark-index pairs for the facial distance ratios. Indices refer to the
/// 68-landmark scheme. The default mapping is a convention: jaw extremes for
/// the ear pair, brow extremes for the forehead, outer eye corners for the
/// interocular normalizer, nose bridge to chin for the midline, and a mid-jaw
/// pair for the cheeks.
struct RatioSpec {
    std::pair<int, int> ear{0, 16};
    std::pair<int, int> forehead{17, 26};
    std::pair<int, int> outer_interocular{36, 45};
    std::pair<int, int> midline{27, 8};
    std::pair<int, int> cheek{4, 12};

    void validate() const {
        for (const auto& [a, b] : {ear, forehead, outer_interocular, midline, cheek})
            if (a < 0 || a >= 68 || b < 0 || b >= 68)
                throw std::invalid_argument("RatioSpec: landmark index out of range");
        if (outer_interocular.first == outer_interocular.second)
            throw std::invalid_argument("RatioSpec: degenerate interocular pair");
    }
};

struct RegionMap {
    std::vector<int> left_eye, right_eye, nose, mouth, left_cheek, right_cheek;

    std::vector<std::pair<std::string, const std::vector<int>*>> named() const {
        return {{"left_eye", &left_eye},   {"right_eye", &right_eye},
                {"nose", &nose},           {"mouth", &mouth},
                {"left_cheek", &left_cheek}, {"right_cheek", &right_cheek}};
    }

    void validate(long vertex_count) const {
        for (const auto& [name, verts] : named()) {
            if (verts->empty())
                throw std::invalid_argument("RegionMap: region '" + name + "' is empty");
            for (int idx : *verts)
                if (idx < 0 || idx >= vertex_count)
                    throw std::invalid_argument("RegionMap: index out of range in '" + name +
                                                "'");
        }
    }
};

struct IcpConfig {
    int max_iterations = 50;
    double convergence_tol = 1e-7;   // on RMSE delta between iterations
    double rejection_multiplier = 3.0;  // times the median correspondence distance
    unsigned seed = 0;

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("IcpConfig: max_iterations < 1");
        if (convergence_tol <= 0.0) throw std::invalid_argument("IcpConfig: tol <= 0");
    }
};

struct AreResult {
    double er = 0, fr = 0, mr = 0, cr = 0;
    double mean = 0;
};

// ---------------------------------------------------------------------------
// Line-based: absolute ratio error
// ---------------------------------------------------------------------------

inline double landmark_distance(const LandmarkSet& lms, const std::pair<int, int>& pair) {
    return (lms.points.row(pair.first) - lms.points.row(pair.second)).norm();
}

struct FaceRatios {
    double er, fr, mr, cr;
};

inline FaceRatios face_ratios(const LandmarkSet& lms, const RatioSpec& spec) {
    spec.validate();
    const double oicd = landmark_distance(lms, spec.outer_interocular);
    if (oicd <= 0.0)
        throw std::invalid_argument("face_ratios: zero outer-interocular distance");
    return {landmark_distance(lms, spec.ear) / oicd, landmark_distance(lms, spec.forehead) / oicd,
            landmark_distance(lms, spec.midline) / oicd, landmark_distance(lms, spec.cheek) / oicd};
}

inline AreResult absolute_ratio_error(const LandmarkSet& pred, const LandmarkSet& ref,
                                      const RatioSpec& spec) {
    const FaceRatios p = face_ratios(pred, spec);
    const FaceRatios r = face_ratios(ref, spec);
    AreResult out;
    out.er = std::abs(p.er - r.er);
    out.fr = std::abs(p.fr - r.fr);
    out.mr = std::abs(p.mr - r.mr);
    out.cr = std::abs(p.cr - r.cr);
    out.mean = (out.er + out.fr + out.mr + out.cr) / 4.0;
    return out;
}

inline AreResult absolute_ratio_error(const Mesh& pred, const Mesh& ref,
                                      const morphable::MorphableBasis& basis,
                                      const RatioSpec& spec) {
    return absolute_ratio_error(fitting::extract_landmarks(pred, basis),
                                fitting::extract_landmarks(ref, basis), spec);
}

inline double mean_are(const AreResult& r) { return r.mean; }

inline double relative_gain(double candidate_mean, double baseline_mean) {
    if (baseline_mean <= 0.0)
        throw std::invalid_argument("relative_gain: baseline must be positive");
    return 100.0 * (candidate_mean - baseline_mean) / baseline_mean;
}

// ---------------------------------------------------------------------------
// Point-based: normalized mean error
// ---------------------------------------------------------------------------

/// Mean landmark distance normalized by sqrt(face width * face length), where
/// width/length are the x and y extents of the reference mesh bounding box in
/// its canonical frame.
inline double nme(const LandmarkSet& pred_lms, const LandmarkSet& ref_lms, const Mesh& ref_mesh) {
    const double width =
        ref_mesh.vertices.row(0).maxCoeff() - ref_mesh.vertices.row(0).minCoeff();
    const double length =
        ref_mesh.vertices.row(1).maxCoeff() - ref_mesh.vertices.row(1).minCoeff();
    const double size = std::sqrt(width * length);
    if (size <= 0.0) throw std::invalid_argument("nme: zero face size");
    double sum = 0.0;
    for (int l = 0; l < fitting::kLandmarkCount; ++l)
        sum += (pred_lms.points.row(l) - ref_lms.points.row(l)).norm();
    return sum / (fitting::kLandmarkCount * size);
}

// ---------------------------------------------------------------------------
// Region-based: point-to-plane ICP
// ---------------------------------------------------------------------------

struct IcpResult {
    PoseParams pose;
    double rmse = 0.0;
    std::vector<double> rmse_history;  // kept-correspondence RMSE per iteration
    int iterations = 0;
    bool converged = false;
};

namespace detail {

struct Correspondence {
    int source;  // index into source vertices
    int target;  // nearest target vertex
    double distance;
};

/// Exact nearest neighbor by brute force. Meshes here are desk scale.
inline void nearest_neighbors(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& tgt,
                              std::vector<Correspondence>& out) {
    out.clear();
    out.reserve(static_cast<size_t>(src.cols()));
    for (long i = 0; i < src.cols(); ++i) {
        long best = 0;
        double best_sq = (tgt.col(0) - src.col(i)).squaredNorm();
        for (long j = 1; j < tgt.cols(); ++j) {
            const double sq = (tgt.col(j) - src.col(i)).squaredNorm();
            if (sq < best_sq) {
                best_sq = sq;
                best = j;
            }
        }
        out.push_back({static_cast<int>(i), static_cast<int>(best), std::sqrt(best_sq)});
    }
}

inline double point_to_plane_rmse(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& tgt,
                                  const Eigen::Matrix3Xd& tgt_normals,
                                  const std::vector<Correspondence>& corr) {
    double sq = 0.0;
    for (const auto& c : corr) {
        const double r = (src.col(c.source) - tgt.col(c.target)).dot(tgt_normals.col(c.target));
        sq += r * r;
    }
    return std::sqrt(sq / static_cast<double>(corr.size()));
}

inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& omega) {
    const double angle = omega.norm();
    if (angle < 1e-14) return Eigen::Matrix3d::Identity();
    const Eigen::Vector3d axis = omega / angle;
    Eigen::Matrix3d k;
    k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
    return Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1 - std::cos(angle)) * k * k;
}

}  // namespace detail

/// Rigid alignment of source onto target by minimizing residuals along target
/// normals. Each iteration: exact nearest-neighbor correspondences, rejection
/// beyond `rejection_multiplier` times the median distance, a linearized 6-dof
/// solve, and Rodrigues re-orthonormalization. The incremental step is halved
/// until it does not increase the kept-correspondence RMSE.
inline IcpResult icp_point_to_plane(const Mesh& source, const Mesh& target,
                                    const IcpConfig& cfg = {}) {
    cfg.validate();
    if (source.size() == 0 || target.size() == 0)
        throw std::invalid_argument("icp_point_to_plane: empty mesh");
    const Mesh tgt_with_normals =
        target.normals ? target : morphable::vertex_normals(target);
    const Eigen::Matrix3Xd& tgt = tgt_with_normals.vertices;
    const Eigen::Matrix3Xd& tgt_n = *tgt_with_normals.normals;

    IcpResult result;
    Eigen::Matrix3Xd current = source.vertices;
    // Centroid pre-alignment so the first correspondences are meaningful
    // under large translations.
    const Eigen::Vector3d shift =
        tgt.rowwise().mean() - current.rowwise().mean();
    current.colwise() += shift;
    result.pose.translation = shift;
    std::vector<detail::Correspondence> corr, kept;
    double prev_rmse = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        detail::nearest_neighbors(current, tgt, corr);

        std::vector<double> dists;
        dists.reserve(corr.size());
        for (const auto& c : corr) dists.push_back(c.distance);
        std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
        const double median = dists[dists.size() / 2];
        const double cutoff = cfg.rejection_multiplier * std::max(median, 1e-300);

        kept.clear();
        for (const auto& c : corr)
            if (c.distance <= cutoff) kept.push_back(c);
        if (kept.size() < 6)
            throw std::runtime_error(
                "icp_point_to_plane: fewer than 6 correspondences after rejection");

        // Linearized point-to-plane: rows [ (s x n)' n' ], rhs -(s - q) . n
        Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& c : kept) {
            const Eigen::Vector3d s = current.col(c.source);
            const Eigen::Vector3d q = tgt.col(c.target);
            const Eigen::Vector3d n = tgt_n.col(c.target);
            Eigen::Matrix<double, 6, 1> row;
            row << s.cross(n), n;
            ata += row * row.transpose();
            atb += row * (-(s - q).dot(n));
        }
        Eigen::Matrix<double, 6, 1> x = ata.ldlt().solve(atb);

        const double rmse_before = detail::point_to_plane_rmse(current, tgt, tgt_n, kept);
        const double threshold = std::min(rmse_before, prev_rmse);
        double rmse_after = rmse_before;
        Eigen::Matrix3d r_inc;
        Eigen::Vector3d t_inc;
        bool accepted = false;
        double scale = 1.0;
        for (int attempt = 0; attempt < 30; ++attempt) {
            const Eigen::Matrix3d r_try = detail::rodrigues(scale * x.head<3>());
            const Eigen::Vector3d t_try = scale * x.tail<3>();
            const Eigen::Matrix3Xd moved = (r_try * current).colwise() + t_try;
            const double rmse_try = detail::point_to_plane_rmse(moved, tgt, tgt_n, kept);
            if (rmse_try <= threshold) {
                r_inc = r_try;
                t_inc = t_try;
                rmse_after = rmse_try;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        // No damped step improves on the previous iteration: fixed point.
        if (!accepted) {
            result.converged = true;
            break;
        }
        current = (r_inc * current).colwise() + t_inc;
        result.pose.rotation = r_inc * result.pose.rotation;
        result.pose.translation = r_inc * result.pose.translation + t_inc;
        result.rmse_history.push_back(rmse_after);
        result.rmse = rmse_after;
        ++result.iterations;

        if (rmse_after < cfg.convergence_tol ||
            std::abs(prev_rmse - rmse_after) < cfg.convergence_tol) {
            result.converged = true;
            break;
        }
        prev_rmse = result.rmse_history.back();
    }
    return result;
}

/// Submesh on a vertex subset; faces fully inside the subset are kept and
/// normals are inherited from the full mesh so sparse regions stay registrable.
inline Mesh extract_region(const Mesh& mesh, const std::vector<int>& vertex_ids) {
    std::map<int, int> remap;
    Mesh out;
    out.vertices.resize(3, static_cast<long>(vertex_ids.size()));
    const Mesh with_normals = mesh.normals ? mesh : morphable::vertex_normals(mesh);
    Eigen::Matrix3Xd normals(3, static_cast<long>(vertex_ids.size()));
    for (size_t i = 0; i < vertex_ids.size(); ++i) {
        remap[vertex_ids[i]] = static_cast<int>(i);
        out.vertices.col(static_cast<long>(i)) = mesh.vertices.col(vertex_ids[i]);
        normals.col(static_cast<long>(i)) = with_normals.normals->col(vertex_ids[i]);
    }
    for (const auto& f : mesh.faces) {
        auto a = remap.find(f[0]), b = remap.find(f[1]), c = remap.find(f[2]);
        if (a != remap.end() && b != remap.end() && c != remap.end())
            out.faces.push_back({a->second, b->second, c->second});
    }
    out.normals = std::move(normals);
    return out;
}

struct PartRmse {
    double left_eye, right_eye, nose, mouth, left_cheek, right_cheek;

    std::vector<double> as_vector() const {
        return {left_eye, right_eye, nose, mouth, left_cheek, right_cheek};
    }
};

inline PartRmse part_rmse(const Mesh& pred, const Mesh& ref, const RegionMap& regions,
                          const IcpConfig& cfg = {}) {
    regions.validate(std::min(pred.size(), ref.size()));
    auto run = [&](const std::vector<int>& verts, const std::string& name) {
        if (verts.size() < 6)
            throw std::invalid_argument("part_rmse: region '" + name +
                                        "' has fewer than 6 vertices");
        return icp_point_to_plane(extract_region(pred, verts), extract_region(ref, verts), cfg)
            .rmse;
    };
    PartRmse out{};
    out.left_eye = run(regions.left_eye, "left_eye");
    out.right_eye = run(regions.right_eye, "right_eye");
    out.nose = run(regions.nose, "nose");
    out.mouth = run(regions.mouth, "mouth");
    out.left_cheek = run(regions.left_cheek, "left_cheek");
    out.right_cheek = run(regions.right_cheek, "right_cheek");
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvalReport {
    AreResult are;
    double nme = 0.0;
    double rmse_holistic = 0.0;
    PartRmse rmse_per_part{};
    std::string pred_id, ref_id;

    void validate() const {
        for (double v : {are.er, are.fr, are.mr, are.cr, are.mean, nme, rmse_holistic})
            if (v < 0.0) throw std::invalid_argument("EvalReport: negative metric value");
        const double expect = (are.er + are.fr + are.mr + are.cr) / 4.0;
        if (std::abs(are.mean - expect) > 1e-12)
            throw std::invalid_argument("EvalReport: are_mean is not the mean of the ratios");
    }

    static std::string header() {
        return "pred_id\tref_id\tER\tFR\tMR\tCR\tMean\tNME\tRMSE\t"
               "LeftEye\tRightEye\tNose\tMouth\tLeftCheek\tRightCheek";
    }

    std::string to_row() const {
        std::ostringstream ss;
        ss.precision(12);
        ss << pred_id << '\t' << ref_id << '\t' << are.er << '\t' << are.fr << '\t' << are.mr
           << '\t' << are.cr << '\t' << are.mean << '\t' << nme << '\t' << rmse_holistic;
        for (double v : rmse_per_part.as_vector()) ss << '\t' << v;
        return ss.str();
    }

    static EvalReport from_row(const std::string& row) {
        std::istringstream ss(row);
        EvalReport r;
        std::string er, fr, mr, cr, mean;
        if (!std::getline(ss, r.pred_id, '\t') || !std::getline(ss, r.ref_id, '\t'))
            throw std::runtime_error("EvalReport: malformed row");
        auto next = [&ss]() {
            std::string cell;
            if (!std::getline(ss, cell, '\t'))
                throw std::runtime_error("EvalReport: truncated row");
            return std::stod(cell);
        };
        r.are.er = next();
        r.are.fr = next();
        r.are.mr = next();
        r.are.cr = next();
        r.are.mean = next();
        r.nme = next();
        r.rmse_holistic = next();
        r.rmse_per_part.left_eye = next();
        r.rmse_per_part.right_eye = next();
        r.rmse_per_part.nose = next();
        r.rmse_per_part.mouth = next();
        r.rmse_per_part.left_cheek = next();
        r.rmse_per_part.right_cheek = next();
        r.validate();
        return r;
    }
};

// ---------------------------------------------------------------------------
// Structured text files for RatioSpec and RegionMap
// ---------------------------------------------------------------------------

/// RatioSpec grammar: one `name a b` line per pair, names
/// ear/forehead/outer_interocular/midline/cheek; `#` comments.
inline RatioSpec load_ratio_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ratio_spec: cannot open " + path);
    RatioSpec spec;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string name;
        int a, b;
        if (!(ss >> name >> a >> b))
            throw std::runtime_error("load_ratio_spec: malformed line: " + line);
        if (name == "ear") spec.ear = {a, b};
        else if (name == "forehead") spec.forehead = {a, b};
        else if (name == "outer_interocular") spec.outer_interocular = {a, b};
        else if (name == "midline") spec.midline = {a, b};
        else if (name == "cheek") spec.cheek = {a, b};
        else throw std::runtime_error("load_ratio_spec: unknown pair name: " + name);
    }
    spec.validate();
    return spec;
}

/// RegionMap grammar: `name i j k ...` lines, one per region; `#` comments.
inline RegionMap load_region_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_region_map: cannot open " + path);
    RegionMap map;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string name;
        ss >> name;
        std::vector<int> ids;
        int v;
        while (ss >> v) ids.push_back(v);
        if (name == "left_eye") map.left_eye = ids;
        else if (name == "right_eye") map.right_eye = ids;
        else if (name == "nose") map.nose = ids;
        else if (name == "mouth") map.mouth = ids;
        else if (name == "left_cheek") map.left_cheek = ids;
        else if (name == "right_cheek") map.right_cheek = ids;
        else throw std::runtime_error("load_region_map: unknown region: " + name);
    }
    return map;
}

}  // namespace morphkit::metrics
