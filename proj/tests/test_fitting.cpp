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
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "morphkit/fitting.hpp"
#include "morphkit/morphable.hpp"
#include "test_util.hpp"

using namespace morphkit::fitting;
using morphkit::morphable::MorphableBasis;
using morphkit::morphable::Mesh;
using morphkit::morphable::reconstruct;
using morphkit::morphable::synthetic_basis;

namespace {

LandmarkSet mean_landmarks(const MorphableBasis& basis) {
    return extract_landmarks(reconstruct(basis, {Eigen::VectorXd::Zero(basis.coeff_count)}),
                             basis);
}

}  // namespace

TEST_CASE("extract_landmarks: mean-shape mesh gives mean-shape rows") {
    const auto basis = synthetic_basis(6, 12, 3, 1);
    const auto lms = mean_landmarks(basis);
    for (int l = 0; l < kLandmarkCount; ++l) {
        const int v = basis.landmark_indices[l];
        REQUIRE(lms.points(l, 0) == basis.mean_shape(3 * v));
        REQUIRE(lms.points(l, 1) == basis.mean_shape(3 * v + 1));
        REQUIRE(lms.points(l, 2) == basis.mean_shape(3 * v + 2));
    }
    REQUIRE(lms.source == LandmarkSource::MeshExtracted);
}

TEST_CASE("extract_landmarks: commutes with apply_pose") {
    const auto basis = synthetic_basis(6, 12, 3, 2);
    std::mt19937 rng(3);
    morphkit::morphable::PoseParams pose;
    pose.rotation = testutil::random_rotation(rng);
    pose.translation = testutil::random_vector(3, rng);
    const Mesh mesh = reconstruct(basis, {testutil::random_vector(3, rng)});
    const auto posed_lms = extract_landmarks(morphkit::morphable::apply_pose(mesh, pose), basis);
    const auto lms = extract_landmarks(mesh, basis);
    for (int l = 0; l < kLandmarkCount; ++l) {
        const Eigen::Vector3d expect =
            pose.rotation * lms.points.row(l).transpose() + pose.translation;
        REQUIRE((posed_lms.points.row(l).transpose() - expect).norm() < 1e-12);
    }
}

TEST_CASE("extract_landmarks: random coefficients match the row-selection oracle") {
    const auto basis = synthetic_basis(6, 12, 5, 4);
    std::mt19937 rng(5);
    const Eigen::VectorXd alpha = testutil::random_vector(5, rng);
    const auto lms = extract_landmarks(reconstruct(basis, {alpha}), basis);
    Eigen::MatrixXd sub_basis;
    Eigen::VectorXd sub_mean;
    landmark_rows(basis, sub_basis, sub_mean);
    const Eigen::VectorXd expect = sub_mean + sub_basis * alpha;
    for (int l = 0; l < kLandmarkCount; ++l)
        REQUIRE((lms.points.row(l).transpose() - expect.segment(3 * l, 3)).norm() < 1e-12);
}

TEST_CASE("extract_landmarks: basis without landmark indices is rejected") {
    auto basis = synthetic_basis(6, 12, 3, 6);
    const Mesh mesh = reconstruct(basis, {Eigen::VectorXd::Zero(3)});
    basis.landmark_indices.clear();
    REQUIRE_THROWS_AS(extract_landmarks(mesh, basis), std::invalid_argument);
}

TEST_CASE("fit_coefficients: recovers planted coefficients with lambda = 0") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const auto basis = synthetic_basis(6, 12, 8, 100 + trial);
        const Eigen::VectorXd planted = testutil::random_vector(8, rng);
        const auto lms = extract_landmarks(reconstruct(basis, {planted}), basis);
        FitConfig cfg;
        cfg.ridge_lambda = 0.0;
        const auto fitted = fit_coefficients(lms, basis, cfg);
        REQUIRE((fitted.values - planted).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("fit_coefficients: mean landmarks with positive lambda give zero") {
    const auto basis = synthetic_basis(6, 12, 5, 8);
    FitConfig cfg;
    cfg.ridge_lambda = 0.1;
    const auto fitted = fit_coefficients(mean_landmarks(basis), basis, cfg);
    REQUIRE(fitted.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_coefficients: ridge beats lambda = 0 on an ill-conditioned basis") {
    // Second column nearly duplicates the first, so the unregularized solve
    // amplifies landmark noise along the near-null direction.
    auto basis = synthetic_basis(6, 12, 2, 9);
    basis.basis.col(1) = basis.basis.col(0) + 1e-4 * basis.basis.col(1);

    std::mt19937 rng(10);
    const Eigen::VectorXd planted(Eigen::Vector2d(1.0, 1.0));
    const auto clean = extract_landmarks(reconstruct(basis, {planted}), basis);
    double err_plain = 0.0, err_ridge = 0.0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
        LandmarkSet noisy = clean;
        for (int l = 0; l < kLandmarkCount; ++l)
            noisy.points.row(l) += 1e-3 * testutil::random_vector(3, rng).transpose();
        FitConfig plain;
        plain.ridge_lambda = 0.0;
        FitConfig ridge;
        ridge.ridge_lambda = 1e-4;
        err_plain += (fit_coefficients(noisy, basis, plain).values - planted).norm() / trials;
        err_ridge += (fit_coefficients(noisy, basis, ridge).values - planted).norm() / trials;
    }
    REQUIRE(err_ridge < err_plain);
}

TEST_CASE("fit_report: exact fit has zero residual") {
    const auto basis = synthetic_basis(6, 12, 6, 11);
    std::mt19937 rng(12);
    const auto lms = extract_landmarks(reconstruct(basis, {testutil::random_vector(6, rng)}),
                                       basis);
    FitConfig cfg;
    cfg.ridge_lambda = 0.0;
    REQUIRE(fit_report(lms, basis, cfg).residual_rms < 1e-10);
}

TEST_CASE("fit_report: inexpressible one-point offset leaves residual d/sqrt(68)") {
    // Zero the basis rows at landmark 0's vertex so no coefficient can move
    // that landmark; offsetting it by d must then leave exactly d/sqrt(68).
    auto basis = synthetic_basis(6, 12, 2, 13);
    basis.basis.middleRows(3 * basis.landmark_indices[0], 3).setZero();
    LandmarkSet lms = mean_landmarks(basis);
    const double d = 0.37;
    lms.points(0, 0) += d;
    FitConfig cfg;
    cfg.ridge_lambda = 0.0;
    const auto result = fit_report(lms, basis, cfg);
    REQUIRE(result.coefficients.values.cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(result.residual_rms == Catch::Approx(d / std::sqrt(68.0)).epsilon(1e-10));
}

TEST_CASE("fit_report: residual is non-increasing in P on nested bases") {
    const auto full = synthetic_basis(6, 12, 10, 14);
    std::mt19937 rng(15);
    LandmarkSet target = mean_landmarks(full);
    for (int l = 0; l < kLandmarkCount; ++l)
        target.points.row(l) += 0.2 * testutil::random_vector(3, rng).transpose();

    double prev = std::numeric_limits<double>::infinity();
    for (int p = 2; p <= 10; p += 2) {
        MorphableBasis sub = full;
        sub.coeff_count = p;
        sub.basis = full.basis.leftCols(p);
        FitConfig cfg;
        cfg.ridge_lambda = 0.0;
        const double residual = fit_report(target, sub, cfg).residual_rms;
        REQUIRE(residual <= prev + 1e-12);
        prev = residual;
    }
}

TEST_CASE("fit is translation-consistent") {
    auto basis = synthetic_basis(6, 12, 4, 16);
    std::mt19937 rng(17);
    LandmarkSet lms = mean_landmarks(basis);
    for (int l = 0; l < kLandmarkCount; ++l)
        lms.points.row(l) += 0.1 * testutil::random_vector(3, rng).transpose();
    const auto base_fit = fit_coefficients(lms, basis);

    const Eigen::Vector3d c(0.5, -1.25, 2.0);
    MorphableBasis shifted = basis;
    for (int v = 0; v < basis.vertex_count; ++v)
        shifted.mean_shape.segment(3 * v, 3) += c;
    LandmarkSet shifted_lms = lms;
    for (int l = 0; l < kLandmarkCount; ++l) shifted_lms.points.row(l) += c.transpose();
    const auto shifted_fit = fit_coefficients(shifted_lms, shifted);
    REQUIRE((shifted_fit.values - base_fit.values).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fit_coefficients: singular normal matrix with lambda = 0 advises ridge") {
    auto basis = synthetic_basis(6, 12, 2, 18);
    basis.basis.col(1) = basis.basis.col(0);  // rank deficient
    try {
        FitConfig cfg;
        cfg.ridge_lambda = 0.0;
        fit_coefficients(mean_landmarks(basis), basis, cfg);
        FAIL("expected exception");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("ridge_lambda") != std::string::npos);
    }
}

TEST_CASE("default_ridge_lambda matches its formula") {
    const auto basis = synthetic_basis(6, 12, 4, 19);
    Eigen::MatrixXd sub_basis;
    Eigen::VectorXd sub_mean;
    landmark_rows(basis, sub_basis, sub_mean);
    const double expect =
        1e-6 * (sub_basis.transpose() * sub_basis).trace() / sub_basis.cols();
    REQUIRE(default_ridge_lambda(sub_basis) == Catch::Approx(expect).epsilon(1e-14));
}

TEST_CASE("landmark files round-trip") {
    testutil::TempDir dir;
    std::mt19937 rng(20);
    LandmarkSet lms;
    for (int l = 0; l < kLandmarkCount; ++l)
        lms.points.row(l) = testutil::random_vector(3, rng).transpose();
    save_landmarks(dir.file("lms.txt"), lms);
    const auto loaded = load_landmarks(dir.file("lms.txt"));
    REQUIRE((loaded.points - lms.points).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(loaded.source == LandmarkSource::Detected);
}

TEST_CASE("load_landmarks: truncated file is rejected") {
    testutil::TempDir dir;
    {
        std::ofstream out(dir.file("short.txt"));
        out << "0 0 0\n1 1 1\n";
    }
    REQUIRE_THROWS_AS(load_landmarks(dir.file("short.txt")), std::runtime_error);
}

TEST_CASE("LandmarkSet: non-finite coordinates are rejected") {
    LandmarkSet lms;
    lms.points.setZero();
    lms.points(5, 1) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(lms.validate(), std::invalid_argument);
}
