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
#include "morphkit/metrics.hpp"
#include "morphkit/morphable.hpp"
#include "test_util.hpp"

using namespace morphkit::metrics;
using morphkit::fitting::extract_landmarks;
using morphkit::fitting::LandmarkSet;
using morphkit::morphable::apply_pose;
using morphkit::morphable::Mesh;
using morphkit::morphable::MorphableBasis;
using morphkit::morphable::PoseParams;
using morphkit::morphable::reconstruct;
using morphkit::morphable::synthetic_basis;

namespace {

Mesh random_face(const MorphableBasis& basis, std::mt19937& rng, double scale = 0.1) {
    return reconstruct(basis, {scale * testutil::random_vector(basis.coeff_count, rng)});
}

RegionMap band_regions(int per_region = 12) {
    RegionMap regions;
    auto band = [&](int r) {
        std::vector<int> ids;
        for (int i = 0; i < per_region; ++i) ids.push_back(r * per_region + i);
        return ids;
    };
    regions.left_eye = band(0);
    regions.right_eye = band(1);
    regions.nose = band(2);
    regions.mouth = band(3);
    regions.left_cheek = band(4);
    regions.right_cheek = band(5);
    return regions;
}

}  // namespace

TEST_CASE("ARE: identical meshes give zero") {
    const auto basis = synthetic_basis(10, 12, 4, 1);
    std::mt19937 rng(2);
    const Mesh mesh = random_face(basis, rng);
    const AreResult are = absolute_ratio_error(mesh, mesh, basis, RatioSpec{});
    REQUIRE(are.er == 0.0);
    REQUIRE(are.fr == 0.0);
    REQUIRE(are.mr == 0.0);
    REQUIRE(are.cr == 0.0);
    REQUIRE(are.mean == 0.0);
}

TEST_CASE("ARE: published per-ratio values aggregate to the published mean") {
    AreResult are;
    are.er = 0.0152;
    are.fr = 0.0186;
    are.mr = 0.0169;
    are.cr = 0.0457;
    are.mean = (are.er + are.fr + are.mr + are.cr) / 4.0;
    REQUIRE(are.mean == Catch::Approx(0.0241).margin(5e-5));
}

TEST_CASE("ARE: invariant under uniform scaling of both meshes") {
    const auto basis = synthetic_basis(10, 12, 4, 3);
    std::mt19937 rng(4);
    const Mesh pred = random_face(basis, rng);
    const Mesh ref = random_face(basis, rng);
    const AreResult base = absolute_ratio_error(pred, ref, basis, RatioSpec{});
    for (double s : {0.01, 3.7, 250.0}) {
        Mesh ps = pred, rs = ref;
        ps.vertices *= s;
        rs.vertices *= s;
        const AreResult scaled = absolute_ratio_error(ps, rs, basis, RatioSpec{});
        REQUIRE(scaled.mean == Catch::Approx(base.mean).margin(1e-12));
    }
}

TEST_CASE("ARE: invariant under random similarity transforms to 1e-9") {
    const auto basis = synthetic_basis(10, 12, 4, 5);
    std::mt19937 rng(6);
    const Mesh pred = random_face(basis, rng);
    const Mesh ref = random_face(basis, rng);
    const AreResult base = absolute_ratio_error(pred, ref, basis, RatioSpec{});
    std::uniform_real_distribution<double> scale_pick(0.2, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double s = scale_pick(rng);
        const Eigen::Matrix3d r = testutil::random_rotation(rng);
        const Eigen::Vector3d t = testutil::random_vector(3, rng);
        Mesh moved = pred;
        moved.vertices = (s * (r * moved.vertices)).colwise() + t;
        const AreResult transformed = absolute_ratio_error(moved, ref, basis, RatioSpec{});
        REQUIRE(std::abs(transformed.mean - base.mean) < 1e-9);
    }
}

TEST_CASE("ARE: zero interocular distance is rejected") {
    LandmarkSet lms;
    lms.points.setOnes();  // every landmark coincides
    REQUIRE_THROWS_AS(face_ratios(lms, RatioSpec{}), std::invalid_argument);
}

TEST_CASE("relative_gain matches the published table values") {
    REQUIRE(relative_gain(0.0241, 0.0302) == Catch::Approx(-20.2).margin(0.05));
    REQUIRE(relative_gain(0.0251, 0.0302) == Catch::Approx(-16.9).margin(0.05));
    REQUIRE(relative_gain(0.123, 0.123) == 0.0);
    REQUIRE_THROWS_AS(relative_gain(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("NME: identical landmark sets give zero") {
    const auto basis = synthetic_basis(10, 12, 4, 7);
    std::mt19937 rng(8);
    const Mesh mesh = random_face(basis, rng);
    const auto lms = extract_landmarks(mesh, basis);
    REQUIRE(nme(lms, lms, mesh) == 0.0);
}

TEST_CASE("NME: one displaced point matches the closed form d/(68 s)") {
    const auto basis = synthetic_basis(10, 12, 4, 9);
    std::mt19937 rng(10);
    const Mesh mesh = random_face(basis, rng);
    const auto ref = extract_landmarks(mesh, basis);
    LandmarkSet pred = ref;
    const double d = 0.21;
    pred.points(30, 2) += d;
    const double width = mesh.vertices.row(0).maxCoeff() - mesh.vertices.row(0).minCoeff();
    const double length = mesh.vertices.row(1).maxCoeff() - mesh.vertices.row(1).minCoeff();
    const double s = std::sqrt(width * length);
    REQUIRE(nme(pred, ref, mesh) == Catch::Approx(d / (68.0 * s)).epsilon(1e-12));
}

TEST_CASE("NME: symmetric in the pred/ref landmark roles") {
    const auto basis = synthetic_basis(10, 12, 4, 11);
    std::mt19937 rng(12);
    const Mesh mesh = random_face(basis, rng);
    const auto a = extract_landmarks(random_face(basis, rng), basis);
    const auto b = extract_landmarks(random_face(basis, rng), basis);
    REQUIRE(nme(a, b, mesh) == Catch::Approx(nme(b, a, mesh)).epsilon(1e-14));
}

TEST_CASE("NME: published baseline values round-trip through EvalReport") {
    for (double v : {0.2979, 0.2969, 0.2723, 0.2904}) {
        EvalReport r;
        r.nme = v;
        const EvalReport back = EvalReport::from_row(r.to_row());
        REQUIRE(back.nme == Catch::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("ICP: source equal to target converges immediately") {
    const auto basis = synthetic_basis(10, 12, 4, 13);
    std::mt19937 rng(14);
    const Mesh mesh = random_face(basis, rng);
    const IcpResult result = icp_point_to_plane(mesh, mesh);
    REQUIRE(result.rmse < 1e-9);
    REQUIRE(result.iterations == 1);
    REQUIRE(result.converged);
    REQUIRE((result.pose.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    REQUIRE(result.pose.translation.norm() < 1e-9);
}

TEST_CASE("ICP: recovers a planted rigid transform") {
    const auto basis = synthetic_basis(16, 24, 4, 15);  // 386 vertices
    std::mt19937 rng(16);
    for (unsigned seed = 0; seed < 5; ++seed) {
        const Mesh target = random_face(basis, rng);
        PoseParams planted;
        planted.rotation = testutil::random_rotation(rng, 20.0 * M_PI / 180.0);
        planted.translation = testutil::random_vector(3, rng);
        const Mesh source = apply_pose(target, planted);

        const IcpResult result = icp_point_to_plane(source, target);
        REQUIRE(result.rmse < 1e-6);
        // recovered pose should invert the planted one
        const Eigen::Matrix3d residual_rot = result.pose.rotation * planted.rotation;
        const double angle = Eigen::AngleAxisd(residual_rot).angle();
        REQUIRE(angle < 1e-4);
        const Eigen::Vector3d residual_t =
            result.pose.rotation * planted.translation + result.pose.translation;
        REQUIRE(residual_t.norm() < 1e-5);
    }
}

TEST_CASE("ICP: kept-correspondence RMSE history is non-increasing") {
    const auto basis = synthetic_basis(12, 16, 4, 17);
    std::mt19937 rng(18);
    for (int trial = 0; trial < 10; ++trial) {
        const Mesh target = random_face(basis, rng);
        PoseParams planted;
        planted.rotation = testutil::random_rotation(rng, 20.0 * M_PI / 180.0);
        planted.translation = testutil::random_vector(3, rng);
        const IcpResult result = icp_point_to_plane(apply_pose(target, planted), target);
        for (size_t i = 1; i < result.rmse_history.size(); ++i)
            REQUIRE(result.rmse_history[i] <= result.rmse_history[i - 1] + 1e-12);
    }
}

TEST_CASE("ICP: published holistic RMSE column round-trips through EvalReport") {
    for (double v : {1.357, 1.348, 1.210, 1.312}) {
        EvalReport r;
        r.rmse_holistic = v;
        REQUIRE(EvalReport::from_row(r.to_row()).rmse_holistic ==
                Catch::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("ICP: tiny source triggers the underdetermined error") {
    Mesh source;
    source.vertices = Eigen::Matrix3Xd::Random(3, 3);
    const auto basis = synthetic_basis(10, 12, 2, 19);
    std::mt19937 rng(20);
    const Mesh target = random_face(basis, rng);
    REQUIRE_THROWS_AS(icp_point_to_plane(source, target), std::runtime_error);
}

TEST_CASE("part_rmse: identical meshes give six near-zero values") {
    const auto basis = synthetic_basis(10, 12, 4, 21);
    std::mt19937 rng(22);
    const Mesh mesh = random_face(basis, rng);
    const PartRmse parts = part_rmse(mesh, mesh, band_regions());
    for (double v : parts.as_vector()) REQUIRE(v < 1e-9);
}

TEST_CASE("part_rmse: published part column round-trips through EvalReport") {
    EvalReport r;
    r.rmse_per_part = {0.3517, 0.3349, 0.5141, 0.2958, 0.4654, 0.4916};
    const EvalReport back = EvalReport::from_row(r.to_row());
    const auto got = back.rmse_per_part.as_vector();
    const auto want = r.rmse_per_part.as_vector();
    for (size_t i = 0; i < want.size(); ++i)
        REQUIRE(got[i] == Catch::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("part_rmse: perturbing only the nose leaves the eyes untouched") {
    const auto basis = synthetic_basis(10, 12, 4, 23);
    std::mt19937 rng(24);
    const Mesh ref = random_face(basis, rng);
    const RegionMap regions = band_regions();
    Mesh pred = ref;
    for (int v : regions.nose)
        pred.vertices.col(v) += 0.05 * testutil::random_vector(3, rng);
    const PartRmse parts = part_rmse(pred, ref, regions);
    REQUIRE(parts.left_eye < 1e-9);
    REQUIRE(parts.right_eye < 1e-9);
    REQUIRE(parts.nose > 1e-4);
}

TEST_CASE("part_rmse: equals ICP on the extracted submesh") {
    const auto basis = synthetic_basis(10, 12, 4, 25);
    std::mt19937 rng(26);
    const Mesh ref = random_face(basis, rng);
    const Mesh pred = random_face(basis, rng);
    const RegionMap regions = band_regions();
    const PartRmse parts = part_rmse(pred, ref, regions);
    const double direct = icp_point_to_plane(extract_region(pred, regions.nose),
                                             extract_region(ref, regions.nose))
                              .rmse;
    REQUIRE(parts.nose == direct);
}

TEST_CASE("part_rmse: a tiny region error names the region") {
    const auto basis = synthetic_basis(10, 12, 4, 27);
    std::mt19937 rng(28);
    const Mesh mesh = random_face(basis, rng);
    RegionMap regions = band_regions();
    regions.mouth = {0, 1, 2};
    try {
        part_rmse(mesh, mesh, regions);
        FAIL("expected exception");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("mouth") != std::string::npos);
    }
}

TEST_CASE("EvalReport: validate rejects inconsistent ARE mean and negatives") {
    EvalReport r;
    r.are = {0.01, 0.02, 0.03, 0.04, 0.025};
    r.validate();
    r.are.mean = 0.03;
    REQUIRE_THROWS_AS(r.validate(), std::invalid_argument);
    r.are.mean = 0.025;
    r.nme = -0.1;
    REQUIRE_THROWS_AS(r.validate(), std::invalid_argument);
}

TEST_CASE("RatioSpec and RegionMap parse from their text grammars") {
    testutil::TempDir dir;
    {
        std::ofstream out(dir.file("ratios.txt"));
        out << "# custom pairs\near 1 15\nforehead 18 25\nouter_interocular 37 44\n"
               "midline 28 9\ncheek 5 11\n";
    }
    const RatioSpec spec = load_ratio_spec(dir.file("ratios.txt"));
    REQUIRE(spec.ear == std::pair<int, int>(1, 15));
    REQUIRE(spec.outer_interocular == std::pair<int, int>(37, 44));

    {
        std::ofstream out(dir.file("regions.txt"));
        out << "left_eye 0 1 2 3 4 5\nright_eye 6 7 8 9 10 11\nnose 12 13 14 15 16 17\n"
               "mouth 18 19 20 21 22 23\nleft_cheek 24 25 26 27 28 29\n"
               "right_cheek 30 31 32 33 34 35\n";
    }
    const RegionMap map = load_region_map(dir.file("regions.txt"));
    REQUIRE(map.nose == std::vector<int>({12, 13, 14, 15, 16, 17}));
    map.validate(36);
    REQUIRE_THROWS_AS(map.validate(30), std::invalid_argument);
}
