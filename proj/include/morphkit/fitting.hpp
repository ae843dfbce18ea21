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

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "morphkit/morphable.hpp"

namespace morphkit::fitting {

using morphable::kLandmarkCount;
using morphable::Mesh;
using morphable::MorphableBasis;
using morphable::ShapeCoefficients;

enum class LandmarkSource { Detected, Synthetic, MeshExtracted };

struct LandmarkSet {
    Eigen::Matrix<double, kLandmarkCount, 3> points;  // one landmark per row
    LandmarkSource source = LandmarkSource::Synthetic;

    void validate() const {
        if (!points.allFinite())
            throw std::invalid_argument("LandmarkSet: non-finite coordinates");
    }
};

struct FitConfig {
    double ridge_lambda = -1.0;  // < 0 means "use scale-aware default"
    double max_landmark_residual = 1e-3;
};

/// Default lambda: a conditioning floor scaled to the landmark basis energy.
inline double default_ridge_lambda(const Eigen::MatrixXd& landmark_basis) {
    return 1e-6 * (landmark_basis.transpose() * landmark_basis).trace() /
           static_cast<double>(landmark_basis.cols());
}

/// Rows of the full basis restricted to the 68 landmark vertices (204 x P),
/// plus the matching slice of the mean shape.
inline void landmark_rows(const MorphableBasis& basis, Eigen::MatrixXd& sub_basis,
                          Eigen::VectorXd& sub_mean) {
    if (basis.landmark_indices.empty())
        throw std::invalid_argument("landmark_rows: basis has no landmark indices");
    sub_basis.resize(3 * kLandmarkCount, basis.coeff_count);
    sub_mean.resize(3 * kLandmarkCount);
    for (int l = 0; l < kLandmarkCount; ++l) {
        const int v = basis.landmark_indices[l];
        sub_basis.middleRows(3 * l, 3) = basis.basis.middleRows(3 * v, 3);
        sub_mean.segment(3 * l, 3) = basis.mean_shape.segment(3 * v, 3);
    }
}

inline LandmarkSet extract_landmarks(const Mesh& mesh, const MorphableBasis& basis) {
    if (basis.landmark_indices.empty())
        throw std::invalid_argument("extract_landmarks: basis has no landmark indices");
    LandmarkSet lms;
    lms.source = LandmarkSource::MeshExtracted;
    for (int l = 0; l < kLandmarkCount; ++l)
        lms.points.row(l) = mesh.vertices.col(basis.landmark_indices[l]).transpose();
    return lms;
}

struct FitResult {
    ShapeCoefficients coefficients;
    double residual_rms = 0.0;  // RMS over the 68 landmark point distances
};

/// Ridge least squares on the landmark rows:
///   argmin_a ||mean_L + V_L a - landmarks||^2 + lambda ||a||^2
/// solved by the normal equations (V_L' V_L + lambda I) a = V_L' (landmarks - mean_L).
inline FitResult fit_report(const LandmarkSet& landmarks, const MorphableBasis& basis,
                            const FitConfig& cfg = {}) {
    landmarks.validate();
    Eigen::MatrixXd sub_basis;
    Eigen::VectorXd sub_mean;
    landmark_rows(basis, sub_basis, sub_mean);
    if (basis.coeff_count > 3 * kLandmarkCount)
        throw std::invalid_argument("fit_coefficients: P exceeds landmark equation count (204)");

    const double lambda =
        cfg.ridge_lambda >= 0.0 ? cfg.ridge_lambda : default_ridge_lambda(sub_basis);

    Eigen::VectorXd target(3 * kLandmarkCount);
    for (int l = 0; l < kLandmarkCount; ++l)
        target.segment(3 * l, 3) = landmarks.points.row(l).transpose();
    const Eigen::VectorXd rhs = sub_basis.transpose() * (target - sub_mean);

    Eigen::MatrixXd normal = sub_basis.transpose() * sub_basis;
    normal.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    // Pivot-based rank check: for this PSD system a (near-)zero or negative
    // pivot relative to the largest one means the normal matrix is singular.
    const Eigen::VectorXd pivots = ldlt.vectorD();
    const double pivot_max = pivots.cwiseAbs().maxCoeff();
    const bool rank_deficient =
        pivot_max == 0.0 ||
        pivots.minCoeff() < 1e2 * std::numeric_limits<double>::epsilon() * pivot_max;
    if (ldlt.info() != Eigen::Success || (lambda == 0.0 && rank_deficient))
        throw std::runtime_error(
            "fit_coefficients: singular normal matrix; set ridge_lambda > 0");

    FitResult result;
    result.coefficients.values = ldlt.solve(rhs);
    const Eigen::VectorXd residual = sub_mean + sub_basis * result.coefficients.values - target;
    double sq = 0.0;
    for (int l = 0; l < kLandmarkCount; ++l) sq += residual.segment(3 * l, 3).squaredNorm();
    result.residual_rms = std::sqrt(sq / kLandmarkCount);
    return result;
}

inline ShapeCoefficients fit_coefficients(const LandmarkSet& landmarks,
                                          const MorphableBasis& basis,
                                          const FitConfig& cfg = {}) {
    return fit_report(landmarks, basis, cfg).coefficients;
}

/// Landmark files: 68 lines of `x y z`.
inline LandmarkSet load_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_landmarks: cannot open " + path);
    LandmarkSet lms;
    lms.source = LandmarkSource::Detected;
    for (int l = 0; l < kLandmarkCount; ++l)
        if (!(in >> lms.points(l, 0) >> lms.points(l, 1) >> lms.points(l, 2)))
            throw std::runtime_error("load_landmarks: expected 68 `x y z` lines in " + path);
    lms.validate();
    return lms;
}

inline void save_landmarks(const std::string& path, const LandmarkSet& lms) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_landmarks: cannot open " + path);
    out.precision(17);
    for (int l = 0; l < kLandmarkCount; ++l)
        out << lms.points(l, 0) << ' ' << lms.points(l, 1) << ' ' << lms.points(l, 2) << '\n';
}

}  // namespace morphkit::fitting
