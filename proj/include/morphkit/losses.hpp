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
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morphkit::losses {

constexpr double kProbFloor = 1e-12;  // floor inside log/ratio of the KL term

/// Feature rows for the distillation kernel: B batch items, nu dims each.
struct FeatureBatch {
    Eigen::MatrixXd rows;  // B x nu
    bool is_expert = false;

    void validate() const {
        for (long i = 0; i < rows.rows(); ++i)
            if (rows.row(i).norm() == 0.0)
                throw std::invalid_argument("FeatureBatch: all-zero row " + std::to_string(i) +
                                            " (cosine undefined)");
    }
};

struct LogitsBatch {
    Eigen::VectorXd disc_logits;   // B real/fake scores
    Eigen::MatrixXd class_logits;  // B x C
    std::vector<int> labels;       // B identity indices
    bool real = true;

    void validate() const {
        const long b = disc_logits.size();
        if (class_logits.rows() != b || static_cast<long>(labels.size()) != b)
            throw std::invalid_argument("LogitsBatch: inconsistent batch sizes");
        for (int label : labels)
            if (label < 0 || label >= class_logits.cols())
                throw std::invalid_argument("LogitsBatch: label out of range: " +
                                            std::to_string(label));
        if (!disc_logits.allFinite() || !class_logits.allFinite())
            throw std::invalid_argument("LogitsBatch: non-finite logits");
    }
};

// ---------------------------------------------------------------------------
// Coefficient-space losses
// ---------------------------------------------------------------------------

struct VectorLoss {
    double value = 0.0;
    Eigen::VectorXd grad;  // wrt the first (predicted) argument
};

/// ||a - target||^2 with gradient 2(a - target).
inline VectorLoss reg_loss(const Eigen::VectorXd& alpha, const Eigen::VectorXd& alpha_star) {
    if (alpha.size() != alpha_star.size())
        throw std::invalid_argument("reg_loss: length mismatch " + std::to_string(alpha.size()) +
                                    " vs " + std::to_string(alpha_star.size()));
    VectorLoss out;
    const Eigen::VectorXd diff = alpha - alpha_star;
    out.value = diff.squaredNorm();
    out.grad = 2.0 * diff;
    return out;
}

/// Pseudo-groundtruth regression: same formula with the expert coefficients
/// as the target; gradient is wrt the student alpha.
inline VectorLoss pgt_loss(const Eigen::VectorXd& alpha_expert, const Eigen::VectorXd& alpha) {
    VectorLoss out = reg_loss(alpha, alpha_expert);
    return out;
}

struct TripletLoss {
    double value = 0.0;
    Eigen::VectorXd grad_anchor, grad_positive, grad_negative;
    bool active = false;
};

/// Hinge max{ ||a - p|| - ||a - n|| + 1, 0 } with margin fixed at 1.
/// Subgradient is zero when the hinge is inactive; the zero branch is chosen
/// at the kink. Norm gradients at coincident points are taken as zero.
inline TripletLoss triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                                const Eigen::VectorXd& negative) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size())
        throw std::invalid_argument("triplet_loss: length mismatch");
    TripletLoss out;
    const Eigen::VectorXd dp = anchor - positive;
    const Eigen::VectorXd dn = anchor - negative;
    const double norm_p = dp.norm();
    const double norm_n = dn.norm();
    const double raw = norm_p - norm_n + 1.0;
    out.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
    out.grad_positive = Eigen::VectorXd::Zero(anchor.size());
    out.grad_negative = Eigen::VectorXd::Zero(anchor.size());
    if (raw > 0.0) {
        out.value = raw;
        out.active = true;
        if (norm_p > 0.0) {
            out.grad_anchor += dp / norm_p;
            out.grad_positive -= dp / norm_p;
        }
        if (norm_n > 0.0) {
            out.grad_anchor -= dn / norm_n;
            out.grad_negative += dn / norm_n;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// GAN real/fake compositions
// ---------------------------------------------------------------------------

struct GanLoss {
    double value = 0.0;          // disc + class, batch mean
    double disc_component = 0.0;
    double class_component = 0.0;
    Eigen::VectorXd grad_disc_logits;
    Eigen::MatrixXd grad_class_logits;
};

namespace detail {

inline double log_sigmoid(double x) {
    // log(1/(1+e^-x)) = -log1p(e^-x), stable on both tails
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline GanLoss gan_loss(const LogitsBatch& batch, bool target_real) {
    batch.validate();
    const long b = batch.disc_logits.size();
    if (b == 0) throw std::invalid_argument("gan_loss: empty batch");
    GanLoss out;
    out.grad_disc_logits.resize(b);
    out.grad_class_logits.resize(b, batch.class_logits.cols());
    for (long i = 0; i < b; ++i) {
        const double x = batch.disc_logits(i);
        // BCE against the real/fake flag
        out.disc_component += target_real ? -log_sigmoid(x) : -log_sigmoid(-x);
        out.grad_disc_logits(i) = (sigmoid(x) - (target_real ? 1.0 : 0.0)) / b;

        // categorical cross-entropy via log-sum-exp
        const Eigen::RowVectorXd row = batch.class_logits.row(i);
        const double mx = row.maxCoeff();
        const double lse = mx + std::log((row.array() - mx).exp().sum());
        out.class_component += lse - row(batch.labels[i]);
        Eigen::RowVectorXd softmax = (row.array() - lse).exp();
        softmax(batch.labels[i]) -= 1.0;
        out.grad_class_logits.row(i) = softmax / static_cast<double>(b);
    }
    out.disc_component /= static_cast<double>(b);
    out.class_component /= static_cast<double>(b);
    out.value = out.disc_component + out.class_component;
    return out;
}

}  // namespace detail

/// L_r: discriminator pushed toward "real", classifier toward the identity.
inline GanLoss gan_real_loss(const LogitsBatch& batch) { return detail::gan_loss(batch, true); }

/// L_f: discriminator pushed toward "fake", classifier toward the identity.
inline GanLoss gan_fake_loss(const LogitsBatch& batch) { return detail::gan_loss(batch, false); }

// ---------------------------------------------------------------------------
// Probabilistic knowledge transfer
// ---------------------------------------------------------------------------

/// Scaled and shifted cosine similarity, in [0,1].
inline double cosine_kernel(const Eigen::VectorXd& zi, const Eigen::VectorXd& zj) {
    const double ni = zi.norm(), nj = zj.norm();
    if (ni == 0.0 || nj == 0.0)
        throw std::invalid_argument("cosine_kernel: zero vector");
    return 0.5 * (zi.dot(zj) / (ni * nj) + 1.0);
}

/// Pairwise conditional probabilities: entry (i, j) is
/// K(z_i, z_j) / sum_{k != j} K(z_k, z_j); the diagonal is excluded (zero).
/// Each column sums to 1.
inline Eigen::MatrixXd conditional_probs(const FeatureBatch& batch) {
    batch.validate();
    const long b = batch.rows.rows();
    if (b < 2) throw std::invalid_argument("conditional_probs: batch size must be >= 2");

    Eigen::VectorXd norms(b);
    for (long i = 0; i < b; ++i) norms(i) = batch.rows.row(i).norm();
    Eigen::MatrixXd kernel =
        0.5 * ((batch.rows * batch.rows.transpose()).array() /
                   (norms * norms.transpose()).array() +
               1.0);

    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(b, b);
    for (long j = 0; j < b; ++j) {
        double denom = 0.0;
        for (long k = 0; k < b; ++k)
            if (k != j) denom += kernel(k, j);
        if (denom <= 0.0)
            throw std::runtime_error("conditional_probs: degenerate column " +
                                     std::to_string(j) + " (all off-diagonal kernels zero)");
        for (long i = 0; i < b; ++i)
            if (i != j) probs(i, j) = kernel(i, j) / denom;
    }
    return probs;
}

struct KdDivergence {
    double value = 0.0;
    Eigen::MatrixXd grad_student;  // B x nu, wrt student features
    bool clamped = false;          // a student probability hit the epsilon floor
};

namespace detail {

/// d cos(u, v) / du = v/(|u||v|) - cos * u/|u|^2
inline Eigen::VectorXd cosine_grad_u(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    const double nu = u.norm(), nv = v.norm();
    const double cosine = u.dot(v) / (nu * nv);
    return v / (nu * nv) - cosine * u / (nu * nu);
}

}  // namespace detail

/// KL divergence between expert and student conditional distributions:
///   sum_i sum_{j != i} pE_{j|i} log(pE_{j|i} / p_{j|i})
/// Expert features are treated as constants; the analytic gradient is wrt
/// the student feature rows.
inline KdDivergence kd_divergence(const FeatureBatch& expert, const FeatureBatch& student) {
    if (expert.rows.rows() != student.rows.rows())
        throw std::invalid_argument("kd_divergence: batch size mismatch");
    const long b = student.rows.rows();
    const Eigen::MatrixXd pe = conditional_probs(expert);
    const Eigen::MatrixXd ps = conditional_probs(student);

    KdDivergence out;
    // dL/dK(m, i) for m != i: -pE_{m|i}/K_{m,i} + 1/S_i  (S_i = column-i kernel sum)
    Eigen::VectorXd norms(b);
    for (long i = 0; i < b; ++i) norms(i) = student.rows.row(i).norm();
    Eigen::MatrixXd kernel =
        0.5 * ((student.rows * student.rows.transpose()).array() /
                   (norms * norms.transpose()).array() +
               1.0);
    Eigen::VectorXd col_sums = Eigen::VectorXd::Zero(b);
    for (long i = 0; i < b; ++i)
        for (long k = 0; k < b; ++k)
            if (k != i) col_sums(i) += kernel(k, i);

    Eigen::MatrixXd grad_kernel = Eigen::MatrixXd::Zero(b, b);
    for (long i = 0; i < b; ++i) {
        for (long j = 0; j < b; ++j) {
            if (j == i) continue;
            double p_student = ps(j, i);
            if (p_student < kProbFloor) {
                p_student = kProbFloor;
                out.clamped = true;
            }
            double p_expert = pe(j, i);
            if (p_expert > 0.0)
                out.value += p_expert * std::log(std::max(p_expert, kProbFloor) / p_student);
            grad_kernel(j, i) +=
                -pe(j, i) / std::max(kernel(j, i), kProbFloor) + 1.0 / col_sums(i);
        }
    }

    out.grad_student = Eigen::MatrixXd::Zero(b, student.rows.cols());
    for (long m = 0; m < b; ++m) {
        for (long i = 0; i < b; ++i) {
            if (m == i) continue;
            const double g = 0.5 * grad_kernel(m, i);  // dK/dcos = 1/2
            if (g == 0.0) continue;
            out.grad_student.row(m) +=
                g * detail::cosine_grad_u(student.rows.row(m), student.rows.row(i)).transpose();
            out.grad_student.row(i) +=
                g * detail::cosine_grad_u(student.rows.row(i), student.rows.row(m)).transpose();
        }
    }
    return out;
}

struct KdLoss {
    double value = 0.0;
    double pgt_component = 0.0;
    double div_component = 0.0;
    Eigen::VectorXd grad_alpha;       // wrt student coefficients
    Eigen::MatrixXd grad_student;     // wrt student features
    bool clamped = false;
};

/// L_KD = L_p-gt + L_div.
inline KdLoss kd_loss(const Eigen::VectorXd& alpha_expert, const Eigen::VectorXd& alpha,
                      const FeatureBatch& expert, const FeatureBatch& student) {
    const VectorLoss pgt = pgt_loss(alpha_expert, alpha);
    const KdDivergence div = kd_divergence(expert, student);
    KdLoss out;
    out.pgt_component = pgt.value;
    out.div_component = div.value;
    out.value = pgt.value + div.value;
    out.grad_alpha = pgt.grad;
    out.grad_student = div.grad_student;
    out.clamped = div.clamped;
    return out;
}

// ---------------------------------------------------------------------------
// Combined objectives
// ---------------------------------------------------------------------------

struct SupervisedLoss {
    double value = 0.0;
    double reg_component = 0.0;
    double triplet_component = 0.0;
    Eigen::VectorXd grad_anchor, grad_positive, grad_negative;
};

/// L_sup = L_reg + L_tri (unweighted sums, as written).
inline SupervisedLoss supervised_loss(const Eigen::VectorXd& alpha,
                                      const Eigen::VectorXd& alpha_star,
                                      const Eigen::VectorXd& alpha_p,
                                      const Eigen::VectorXd& alpha_n) {
    const VectorLoss reg = reg_loss(alpha, alpha_star);
    const TripletLoss tri = triplet_loss(alpha, alpha_p, alpha_n);
    SupervisedLoss out;
    out.reg_component = reg.value;
    out.triplet_component = tri.value;
    out.value = reg.value + tri.value;
    out.grad_anchor = reg.grad + tri.grad_anchor;
    out.grad_positive = tri.grad_positive;
    out.grad_negative = tri.grad_negative;
    return out;
}

/// Optional per-term weights; all default to 1 to match the printed objective.
struct UnsupervisedWeights {
    double fake = 1.0, real = 1.0, kd = 1.0, triplet = 1.0;
};

struct UnsupervisedLoss {
    double value = 0.0;
    double fake_component = 0.0;
    double real_component = 0.0;
    double kd_component = 0.0;
    double triplet_component = 0.0;
};

/// L_unsuper = L_f + L_r + L_KD + L_tri from precomputed components.
inline UnsupervisedLoss unsupervised_loss(const GanLoss& fake, const GanLoss& real,
                                          const KdLoss& kd, const TripletLoss& tri,
                                          const UnsupervisedWeights& w = {}) {
    UnsupervisedLoss out;
    out.fake_component = fake.value;
    out.real_component = real.value;
    out.kd_component = kd.value;
    out.triplet_component = tri.value;
    out.value = w.fake * fake.value + w.real * real.value + w.kd * kd.value +
                w.triplet * tri.value;
    return out;
}

}  // namespace morphkit::losses
