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

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morphkit::morphable {

constexpr int kLandmarkCount = 68;
constexpr double kRotationTol = 1e-6;

/// PCA face shape model: a face is mean_shape + basis * coefficients.
/// mean_shape is the flattened 3N vector (x,y,z per vertex), basis is 3N x P.
struct MorphableBasis {
    Eigen::VectorXd mean_shape;
    Eigen::MatrixXd basis;
    int vertex_count = 0;
    int coeff_count = 0;
    std::vector<std::array<int, 3>> face_indices;
    std::vector<int> landmark_indices;

    void validate() const {
        if (mean_shape.size() != 3 * static_cast<long>(vertex_count))
            throw std::invalid_argument(
                "MorphableBasis: mean_shape length " + std::to_string(mean_shape.size()) +
                " != 3*vertex_count " + std::to_string(3 * vertex_count));
        if (basis.rows() != mean_shape.size() || basis.cols() != coeff_count)
            throw std::invalid_argument(
                "MorphableBasis: basis is " + std::to_string(basis.rows()) + "x" +
                std::to_string(basis.cols()) + ", expected " +
                std::to_string(mean_shape.size()) + "x" + std::to_string(coeff_count));
        for (const auto& f : face_indices)
            for (int idx : f)
                if (idx < 0 || idx >= vertex_count)
                    throw std::invalid_argument("MorphableBasis: face index out of range: " +
                                                std::to_string(idx));
        if (!landmark_indices.empty()) {
            if (static_cast<int>(landmark_indices.size()) != kLandmarkCount)
                throw std::invalid_argument("MorphableBasis: expected 68 landmark indices, got " +
                                            std::to_string(landmark_indices.size()));
            for (int idx : landmark_indices)
                if (idx < 0 || idx >= vertex_count)
                    throw std::invalid_argument(
                        "MorphableBasis: landmark index out of range: " + std::to_string(idx));
        }
    }
};

enum class CoeffRole { Predicted, Groundtruth, Positive, Negative, Expert };

struct ShapeCoefficients {
    Eigen::VectorXd values;
    CoeffRole role = CoeffRole::Predicted;
};

struct PoseParams {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    bool is_rigid(double tol = kRotationTol) const {
        const double ortho =
            (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
        return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
    }
};

struct Mesh {
    Eigen::Matrix3Xd vertices;  // one column per vertex
    std::vector<std::array<int, 3>> faces;
    std::optional<Eigen::Matrix3Xd> normals;

    long size() const { return vertices.cols(); }
};

/// A = mean + V * alpha, reshaped to 3 x N.
inline Mesh reconstruct(const MorphableBasis& basis, const ShapeCoefficients& coeffs) {
    if (coeffs.values.size() != basis.coeff_count)
        throw std::invalid_argument("reconstruct: coefficient length " +
                                    std::to_string(coeffs.values.size()) +
                                    " != basis coeff_count " + std::to_string(basis.coeff_count));
    Eigen::VectorXd flat = basis.mean_shape + basis.basis * coeffs.values;
    Mesh mesh;
    mesh.vertices = Eigen::Map<const Eigen::Matrix3Xd>(flat.data(), 3, basis.vertex_count);
    mesh.faces = basis.face_indices;
    return mesh;
}

/// Rigid transform of every vertex: v -> R v + t. Normals, if present, rotate.
inline Mesh apply_pose(const Mesh& mesh, const PoseParams& pose) {
    if (!pose.is_rigid())
        throw std::invalid_argument("apply_pose: rotation is not orthonormal with det +1");
    Mesh out;
    out.vertices = (pose.rotation * mesh.vertices).colwise() + pose.translation;
    out.faces = mesh.faces;
    if (mesh.normals) out.normals = pose.rotation * (*mesh.normals);
    return out;
}

/// Composition: applying `first` then `second` equals applying the result once.
inline PoseParams compose(const PoseParams& second, const PoseParams& first) {
    PoseParams out;
    out.rotation = second.rotation * first.rotation;
    out.translation = second.rotation * first.translation + second.translation;
    return out;
}

/// Area-weighted per-vertex normals. Degenerate triangles contribute nothing;
/// vertices with no non-degenerate incident face get (0,0,1).
inline Mesh vertex_normals(const Mesh& mesh) {
    if (mesh.faces.empty())
        throw std::invalid_argument("vertex_normals: mesh has no faces");
    Eigen::Matrix3Xd accum = Eigen::Matrix3Xd::Zero(3, mesh.size());
    bool any_valid = false;
    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d a = mesh.vertices.col(f[0]);
        const Eigen::Vector3d e1 = mesh.vertices.col(f[1]) - a;
        const Eigen::Vector3d e2 = mesh.vertices.col(f[2]) - a;
        const Eigen::Vector3d cross = e1.cross(e2);  // length = 2 * area
        if (cross.norm() <= 0.0) continue;
        any_valid = true;
        for (int idx : f) accum.col(idx) += cross;
    }
    if (!any_valid)
        throw std::invalid_argument("vertex_normals: all faces are degenerate");
    Mesh out = mesh;
    Eigen::Matrix3Xd normals(3, mesh.size());
    for (long i = 0; i < mesh.size(); ++i) {
        const double n = accum.col(i).norm();
        normals.col(i) = n > 0.0 ? Eigen::Vector3d(accum.col(i) / n) : Eigen::Vector3d(0, 0, 1);
    }
    out.normals = std::move(normals);
    return out;
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

/// OBJ subset: `v x y z`, `f i j k` (1-based), `#` comments.
inline Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);
    std::vector<Eigen::Vector3d> verts;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Eigen::Vector3d v;
            if (!(ss >> v.x() >> v.y() >> v.z()))
                throw std::runtime_error("load_obj: malformed vertex at " + path + ":" +
                                         std::to_string(line_no));
            verts.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            if (!(ss >> f[0] >> f[1] >> f[2]))
                throw std::runtime_error("load_obj: malformed face at " + path + ":" +
                                         std::to_string(line_no));
            for (int& idx : f) {
                if (idx < 1)
                    throw std::runtime_error("load_obj: face index out of range at " + path +
                                             ":" + std::to_string(line_no));
                --idx;
            }
            faces.push_back(f);
        } else if (!tag.empty()) {
            throw std::runtime_error("load_obj: unsupported line at " + path + ":" +
                                     std::to_string(line_no));
        }
    }
    Mesh mesh;
    mesh.vertices.resize(3, static_cast<long>(verts.size()));
    for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<long>(i)) = verts[i];
    for (const auto& f : faces)
        for (int idx : f)
            if (idx >= static_cast<int>(verts.size()))
                throw std::runtime_error("load_obj: face index out of range in " + path);
    mesh.faces = std::move(faces);
    return mesh;
}

inline void save_obj(const std::string& path, const Mesh& mesh) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path);
    out.precision(12);
    for (long i = 0; i < mesh.size(); ++i)
        out << "v " << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' '
            << mesh.vertices(2, i) << '\n';
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

/// Basis text format:
///   line 1: "N P L F"  (vertices, coefficients, landmark count, face count)
///   3N mean-shape values, then P columns of 3N basis values,
///   then L landmark indices, then F faces as index triples. Whitespace-separated.
inline void save_basis(const std::string& path, const MorphableBasis& basis) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_basis: cannot open " + path);
    out.precision(17);
    out << basis.vertex_count << ' ' << basis.coeff_count << ' ' << basis.landmark_indices.size()
        << ' ' << basis.face_indices.size() << '\n';
    for (long i = 0; i < basis.mean_shape.size(); ++i) out << basis.mean_shape(i) << '\n';
    for (int p = 0; p < basis.coeff_count; ++p)
        for (long i = 0; i < basis.basis.rows(); ++i) out << basis.basis(i, p) << '\n';
    for (int idx : basis.landmark_indices) out << idx << '\n';
    for (const auto& f : basis.face_indices) out << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline MorphableBasis load_basis(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_basis: cannot open " + path);
    MorphableBasis b;
    long n_landmarks = 0, n_faces = 0;
    if (!(in >> b.vertex_count >> b.coeff_count >> n_landmarks >> n_faces))
        throw std::runtime_error("load_basis: malformed header in " + path);
    b.mean_shape.resize(3 * b.vertex_count);
    b.basis.resize(3 * b.vertex_count, b.coeff_count);
    for (long i = 0; i < b.mean_shape.size(); ++i)
        if (!(in >> b.mean_shape(i)))
            throw std::runtime_error("load_basis: truncated mean shape in " + path);
    for (int p = 0; p < b.coeff_count; ++p)
        for (long i = 0; i < b.basis.rows(); ++i)
            if (!(in >> b.basis(i, p)))
                throw std::runtime_error("load_basis: truncated basis column in " + path);
    b.landmark_indices.resize(static_cast<size_t>(n_landmarks));
    for (auto& idx : b.landmark_indices)
        if (!(in >> idx)) throw std::runtime_error("load_basis: truncated landmarks in " + path);
    b.face_indices.resize(static_cast<size_t>(n_faces));
    for (auto& f : b.face_indices)
        if (!(in >> f[0] >> f[1] >> f[2]))
            throw std::runtime_error("load_basis: truncated faces in " + path);
    b.validate();
    return b;
}

/// Coefficients: one value per line.
inline ShapeCoefficients load_coefficients(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_coefficients: cannot open " + path);
    std::vector<double> vals;
    double v;
    while (in >> v) vals.push_back(v);
    ShapeCoefficients c;
    c.values = Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
    return c;
}

inline void save_coefficients(const std::string& path, const ShapeCoefficients& coeffs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_coefficients: cannot open " + path);
    out.precision(17);
    for (long i = 0; i < coeffs.values.size(); ++i) out << coeffs.values(i) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic basis
// ---------------------------------------------------------------------------

/// Seeded head-shaped test basis: a triangulated ellipsoid grid mesh as the
/// mean shape, orthonormalized random deformation columns, and 68 landmark
/// indices spread over the surface. Self-contained stand-in for a real model.
inline MorphableBasis synthetic_basis(int rings, int segments, int coeff_count,
                                      unsigned seed = 42) {
    if (rings < 3 || segments < 3)
        throw std::invalid_argument("synthetic_basis: need rings >= 3 and segments >= 3");
    MorphableBasis b;
    const int n = rings * segments + 2;  // grid + two poles
    b.vertex_count = n;
    b.coeff_count = coeff_count;
    b.mean_shape.resize(3 * n);

    const double pi = std::acos(-1.0);
    auto set_vertex = [&](int idx, double x, double y, double z) {
        b.mean_shape(3 * idx + 0) = x;
        b.mean_shape(3 * idx + 1) = y;
        b.mean_shape(3 * idx + 2) = z;
    };
    // ellipsoid: half-axes 1.0 x 1.3 x 1.1 (roughly head proportions)
    for (int r = 0; r < rings; ++r) {
        const double theta = pi * (r + 1) / (rings + 1);
        for (int s = 0; s < segments; ++s) {
            const double phi = 2.0 * pi * s / segments;
            set_vertex(r * segments + s, std::sin(theta) * std::cos(phi),
                       1.3 * std::cos(theta), 1.1 * std::sin(theta) * std::sin(phi));
        }
    }
    const int top = n - 2, bottom = n - 1;
    set_vertex(top, 0, 1.3, 0);
    set_vertex(bottom, 0, -1.3, 0);

    for (int s = 0; s < segments; ++s) {
        const int s1 = (s + 1) % segments;
        b.face_indices.push_back({top, s, s1});
        b.face_indices.push_back({bottom, (rings - 1) * segments + s1, (rings - 1) * segments + s});
    }
    for (int r = 0; r + 1 < rings; ++r)
        for (int s = 0; s < segments; ++s) {
            const int s1 = (s + 1) % segments;
            const int a = r * segments + s, c = r * segments + s1;
            const int d = (r + 1) * segments + s, e = (r + 1) * segments + s1;
            b.face_indices.push_back({a, d, e});
            b.face_indices.push_back({a, e, c});
        }

    if (n < kLandmarkCount)
        throw std::invalid_argument("synthetic_basis: fewer than 68 vertices");
    b.landmark_indices.resize(kLandmarkCount);
    for (int i = 0; i < kLandmarkCount; ++i)
        b.landmark_indices[i] = static_cast<int>(static_cast<long>(i) * n / kLandmarkCount);

    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd raw(3 * n, coeff_count);
    for (long i = 0; i < raw.rows(); ++i)
        for (int j = 0; j < coeff_count; ++j) raw(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    b.basis = Eigen::MatrixXd(qr.householderQ()).leftCols(coeff_count);
    b.validate();
    return b;
}

}  // namespace morphkit::morphable
