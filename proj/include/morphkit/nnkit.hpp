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
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morphkit/losses.hpp"

namespace morphkit::nnkit {

constexpr int kEmbeddingDim = 64;

enum class Activation { Rectifier, Identity };

/// Fully connected network; hidden layers use the configured activation,
/// the output layer is linear. Columns are samples throughout.
struct MlpModel {
    std::vector<Eigen::MatrixXd> weights;  // layer l: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    Activation hidden_activation = Activation::Rectifier;

    int input_dim() const { return static_cast<int>(weights.front().cols()); }
    int output_dim() const { return static_cast<int>(weights.back().rows()); }
    int layer_count() const { return static_cast<int>(weights.size()); }

    /// Width of the last hidden layer (the distillation feature z); for a
    /// single-layer model the output itself is the feature.
    int feature_dim() const {
        return layer_count() > 1 ? static_cast<int>(weights[weights.size() - 2].rows())
                                 : output_dim();
    }
};

/// Seeded uniform init scaled by 1/sqrt(fan_in).
inline MlpModel make_mlp(const std::vector<int>& dims, unsigned seed,
                         Activation act = Activation::Rectifier) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output");
    MlpModel model;
    model.hidden_activation = act;
    std::mt19937 rng(seed);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        std::uniform_real_distribution<double> uniform(-scale, scale);
        Eigen::MatrixXd w(dims[l + 1], dims[l]);
        for (long i = 0; i < w.rows(); ++i)
            for (long j = 0; j < w.cols(); ++j) w(i, j) = uniform(rng);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    return model;
}

struct ForwardCache {
    std::vector<Eigen::MatrixXd> inputs;           // per-layer input (post-activation)
    std::vector<Eigen::MatrixXd> pre_activations;  // per-layer W x + b
    Eigen::MatrixXd output;
    Eigen::MatrixXd features;  // last hidden activations (= output if single layer)
};

inline ForwardCache forward(const MlpModel& model, const Eigen::MatrixXd& input) {
    if (input.rows() != model.input_dim())
        throw std::invalid_argument("forward: input dim " + std::to_string(input.rows()) +
                                    " != model input dim " + std::to_string(model.input_dim()));
    ForwardCache cache;
    Eigen::MatrixXd x = input;
    for (int l = 0; l < model.layer_count(); ++l) {
        cache.inputs.push_back(x);
        Eigen::MatrixXd pre = (model.weights[l] * x).colwise() + model.biases[l];
        cache.pre_activations.push_back(pre);
        if (l + 1 < model.layer_count() && model.hidden_activation == Activation::Rectifier)
            x = pre.cwiseMax(0.0);
        else
            x = pre;
        if (l + 2 == model.layer_count()) cache.features = x;
    }
    cache.output = x;
    if (model.layer_count() == 1) cache.features = x;
    return cache;
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Reverse-mode gradients of the forward map. `grad_output` is dL/d(output);
/// `grad_features`, when non-null, injects dL/d(last hidden activations) for
/// losses that read the feature layer directly.
inline Gradients backward(const MlpModel& model, const ForwardCache& cache,
                          const Eigen::MatrixXd& grad_output,
                          const Eigen::MatrixXd* grad_features = nullptr) {
    if (grad_output.rows() != model.output_dim() || grad_output.cols() != cache.output.cols())
        throw std::invalid_argument("backward: upstream gradient shape mismatch");
    Gradients grads;
    grads.weights.resize(model.layer_count());
    grads.biases.resize(model.layer_count());
    Eigen::MatrixXd delta = grad_output;  // dL/d(pre-activation of output layer)
    for (int l = model.layer_count() - 1; l >= 0; --l) {
        grads.weights[l] = delta * cache.inputs[l].transpose();
        grads.biases[l] = delta.rowwise().sum();
        if (l == 0) break;
        Eigen::MatrixXd upstream = model.weights[l].transpose() * delta;
        if (grad_features && l == model.layer_count() - 1) upstream += *grad_features;
        if (model.hidden_activation == Activation::Rectifier)
            upstream = (cache.pre_activations[l - 1].array() > 0.0)
                           .select(upstream, Eigen::MatrixXd::Zero(upstream.rows(),
                                                                   upstream.cols()));
        delta = std::move(upstream);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 2e-4;
    int batch_size = 64;
    int steps = 2000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    unsigned seed = 0;
    double triplet_weight = 1.0;

    void validate() const {
        if (learning_rate <= 0 || batch_size <= 0 || steps <= 0)
            throw std::invalid_argument("TrainConfig: rates and sizes must be positive");
    }
};

struct AdamState {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long step = 0;

    static AdamState like(const MlpModel& model) {
        AdamState s;
        for (const auto& w : model.weights) {
            s.m_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
            s.v_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        }
        for (const auto& b : model.biases) {
            s.m_b.push_back(Eigen::VectorXd::Zero(b.size()));
            s.v_b.push_back(Eigen::VectorXd::Zero(b.size()));
        }
        return s;
    }
};

namespace detail {

template <typename Mat>
void adam_update(Mat& param, const Mat& grad, Mat& m, Mat& v, long step,
                 const TrainConfig& cfg, const std::string& name) {
    if (!grad.allFinite())
        throw std::runtime_error("adam_step: non-finite gradient in " + name);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square()).matrix();
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    param.array() -= cfg.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + cfg.epsilon);
}

}  // namespace detail

inline void adam_step(MlpModel& model, const Gradients& grads, AdamState& state,
                      const TrainConfig& cfg) {
    ++state.step;
    for (int l = 0; l < model.layer_count(); ++l) {
        detail::adam_update(model.weights[l], grads.weights[l], state.m_w[l], state.v_w[l],
                            state.step, cfg, "weights[" + std::to_string(l) + "]");
        detail::adam_update(model.biases[l], grads.biases[l], state.m_b[l], state.v_b[l],
                            state.step, cfg, "biases[" + std::to_string(l) + "]");
    }
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct Sample {
    Eigen::VectorXd embedding;     // 64-d voice-embedding stand-in
    Eigen::VectorXd coefficients;  // ground-truth shape coefficients
    int identity = 0;
};

struct SyntheticDataset {
    std::vector<Sample> samples;
    std::vector<std::string> identity_names;
    Eigen::MatrixXd true_map;  // P x 64 linear ground truth

    std::vector<std::vector<int>> by_identity() const {
        std::vector<std::vector<int>> groups(identity_names.size());
        for (size_t i = 0; i < samples.size(); ++i)
            groups[static_cast<size_t>(samples[i].identity)].push_back(static_cast<int>(i));
        return groups;
    }

    void validate() const {
        if (identity_names.size() < 2)
            throw std::invalid_argument("SyntheticDataset: need >= 2 identities");
        for (const auto& group : by_identity())
            if (group.size() < 2)
                throw std::invalid_argument(
                    "SyntheticDataset: every identity needs >= 2 samples");
    }
};

/// Seeded linear-plus-noise generator. Identity centers are well separated,
/// within-identity embeddings are tight clusters, and coefficients come from
/// a fixed linear map of the embedding.
inline SyntheticDataset make_synthetic_dataset(int n_identities, int samples_per_identity,
                                               int coeff_count, double noise_sigma,
                                               unsigned seed) {
    if (n_identities < 2 || samples_per_identity < 2)
        throw std::invalid_argument("make_synthetic_dataset: need >= 2 ids, >= 2 samples each");
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SyntheticDataset data;
    data.true_map.resize(coeff_count, kEmbeddingDim);
    for (long i = 0; i < data.true_map.rows(); ++i)
        for (long j = 0; j < data.true_map.cols(); ++j)
            data.true_map(i, j) = gauss(rng) / std::sqrt(static_cast<double>(kEmbeddingDim));

    for (int id = 0; id < n_identities; ++id) {
        data.identity_names.push_back(std::string(1, static_cast<char>('A' + id % 26)) +
                                      "Person" + std::to_string(id));
        Eigen::VectorXd center(kEmbeddingDim);
        for (long d = 0; d < center.size(); ++d) center(d) = 3.0 * gauss(rng);
        for (int s = 0; s < samples_per_identity; ++s) {
            Sample sample;
            sample.identity = id;
            sample.embedding = center;
            for (long d = 0; d < center.size(); ++d) sample.embedding(d) += 0.05 * gauss(rng);
            sample.coefficients = data.true_map * sample.embedding;
            for (long d = 0; d < sample.coefficients.size(); ++d)
                sample.coefficients(d) += noise_sigma * gauss(rng);
            data.samples.push_back(std::move(sample));
        }
    }
    data.validate();
    return data;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct StepLog {
    int step = 0;
    double total = 0.0;
    double reg = 0.0;
    double triplet = 0.0;
    double pgt = 0.0;
    double divergence = 0.0;
};

struct TrainResult {
    MlpModel model;
    std::vector<StepLog> trace;
};

namespace detail {

inline Eigen::MatrixXd stack_columns(const SyntheticDataset& data,
                                     const std::vector<int>& ids,
                                     bool embeddings) {
    const long dim =
        embeddings ? data.samples[0].embedding.size() : data.samples[0].coefficients.size();
    Eigen::MatrixXd out(dim, static_cast<long>(ids.size()));
    for (size_t i = 0; i < ids.size(); ++i)
        out.col(static_cast<long>(i)) = embeddings ? data.samples[ids[i]].embedding
                                                   : data.samples[ids[i]].coefficients;
    return out;
}

/// For each anchor: a uniform same-identity positive (different sample) and a
/// uniform different-identity negative.
inline void sample_triplets(const SyntheticDataset& data,
                            const std::vector<std::vector<int>>& groups,
                            const std::vector<int>& anchors, std::mt19937& rng,
                            std::vector<int>& positives, std::vector<int>& negatives) {
    positives.clear();
    negatives.clear();
    std::uniform_int_distribution<int> id_pick(0, static_cast<int>(groups.size()) - 1);
    for (int a : anchors) {
        const int id = data.samples[a].identity;
        const auto& same = groups[static_cast<size_t>(id)];
        std::uniform_int_distribution<int> pos_pick(0, static_cast<int>(same.size()) - 1);
        int pos = a;
        while (pos == a) pos = same[pos_pick(rng)];
        positives.push_back(pos);
        int other = id;
        while (other == id) other = id_pick(rng);
        const auto& diff = groups[static_cast<size_t>(other)];
        std::uniform_int_distribution<int> neg_pick(0, static_cast<int>(diff.size()) - 1);
        negatives.push_back(diff[neg_pick(rng)]);
    }
}

}  // namespace detail

/// Supervised loop: regression to ground-truth coefficients plus the triplet
/// term on predicted coefficients; batch-mean reduction; Adam updates.
inline TrainResult train_supervised(const SyntheticDataset& data,
                                    const std::vector<int>& hidden_dims,
                                    const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    const int coeff_count = static_cast<int>(data.samples[0].coefficients.size());
    std::vector<int> dims{kEmbeddingDim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(coeff_count);

    TrainResult result;
    result.model = make_mlp(dims, cfg.seed);
    AdamState state = AdamState::like(result.model);
    std::mt19937 rng(cfg.seed + 1);
    std::uniform_int_distribution<int> sample_pick(0, static_cast<int>(data.samples.size()) - 1);
    const auto groups = data.by_identity();

    std::vector<int> anchors, positives, negatives;
    for (int step = 0; step < cfg.steps; ++step) {
        anchors.clear();
        for (int i = 0; i < cfg.batch_size; ++i) anchors.push_back(sample_pick(rng));
        detail::sample_triplets(data, groups, anchors, rng, positives, negatives);

        std::vector<int> all = anchors;
        all.insert(all.end(), positives.begin(), positives.end());
        all.insert(all.end(), negatives.begin(), negatives.end());
        const Eigen::MatrixXd input = detail::stack_columns(data, all, true);
        const Eigen::MatrixXd targets = detail::stack_columns(data, anchors, false);

        const ForwardCache cache = forward(result.model, input);
        const int b = cfg.batch_size;
        Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(coeff_count, 3 * b);
        StepLog log;
        log.step = step;
        for (int i = 0; i < b; ++i) {
            const Eigen::VectorXd alpha = cache.output.col(i);
            const auto reg = losses::reg_loss(alpha, targets.col(i));
            const auto tri = losses::triplet_loss(alpha, cache.output.col(b + i),
                                                  cache.output.col(2 * b + i));
            log.reg += reg.value / b;
            log.triplet += tri.value / b;
            grad_out.col(i) = (reg.grad + cfg.triplet_weight * tri.grad_anchor) / b;
            grad_out.col(b + i) = cfg.triplet_weight * tri.grad_positive / b;
            grad_out.col(2 * b + i) = cfg.triplet_weight * tri.grad_negative / b;
        }
        log.total = log.reg + cfg.triplet_weight * log.triplet;
        result.trace.push_back(log);

        const Gradients grads = backward(result.model, cache, grad_out);
        adam_step(result.model, grads, state, cfg);
    }
    return result;
}

/// Distillation loop: a frozen expert model provides pseudo-groundtruth
/// coefficients and feature rows; the student trains with L_KD + L_tri
/// (the GAN terms of the full objective are zero here).
inline TrainResult train_distilled(const MlpModel& expert, const SyntheticDataset& data,
                                   const std::vector<int>& hidden_dims,
                                   const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    std::vector<int> dims{kEmbeddingDim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(expert.output_dim());

    TrainResult result;
    result.model = make_mlp(dims, cfg.seed, expert.hidden_activation);
    if (result.model.feature_dim() != expert.feature_dim())
        throw std::invalid_argument("train_distilled: student feature dim " +
                                    std::to_string(result.model.feature_dim()) +
                                    " != expert feature dim " +
                                    std::to_string(expert.feature_dim()));
    AdamState state = AdamState::like(result.model);
    std::mt19937 rng(cfg.seed + 1);
    std::uniform_int_distribution<int> sample_pick(0, static_cast<int>(data.samples.size()) - 1);
    const auto groups = data.by_identity();
    const int coeff_count = expert.output_dim();

    std::vector<int> anchors, positives, negatives;
    for (int step = 0; step < cfg.steps; ++step) {
        anchors.clear();
        for (int i = 0; i < cfg.batch_size; ++i) anchors.push_back(sample_pick(rng));
        detail::sample_triplets(data, groups, anchors, rng, positives, negatives);

        std::vector<int> all = anchors;
        all.insert(all.end(), positives.begin(), positives.end());
        all.insert(all.end(), negatives.begin(), negatives.end());
        const Eigen::MatrixXd input = detail::stack_columns(data, all, true);
        const Eigen::MatrixXd anchor_input = detail::stack_columns(data, anchors, true);

        const ForwardCache expert_cache = forward(expert, anchor_input);
        const ForwardCache cache = forward(result.model, input);
        const int b = cfg.batch_size;

        losses::FeatureBatch expert_feats, student_feats;
        expert_feats.rows = expert_cache.features.transpose();
        expert_feats.is_expert = true;
        student_feats.rows = cache.features.leftCols(b).transpose();
        const auto div = losses::kd_divergence(expert_feats, student_feats);

        Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(coeff_count, 3 * b);
        Eigen::MatrixXd grad_feat = Eigen::MatrixXd::Zero(cache.features.rows(), 3 * b);
        grad_feat.leftCols(b) = div.grad_student.transpose();

        StepLog log;
        log.step = step;
        log.divergence = div.value;
        for (int i = 0; i < b; ++i) {
            const Eigen::VectorXd alpha = cache.output.col(i);
            const auto pgt = losses::pgt_loss(expert_cache.output.col(i), alpha);
            const auto tri = losses::triplet_loss(alpha, cache.output.col(b + i),
                                                  cache.output.col(2 * b + i));
            log.pgt += pgt.value / b;
            log.triplet += tri.value / b;
            grad_out.col(i) = (pgt.grad + cfg.triplet_weight * tri.grad_anchor) / b;
            grad_out.col(b + i) = cfg.triplet_weight * tri.grad_positive / b;
            grad_out.col(2 * b + i) = cfg.triplet_weight * tri.grad_negative / b;
        }
        log.total = log.pgt + log.divergence + cfg.triplet_weight * log.triplet;
        result.trace.push_back(log);

        const Gradients grads = backward(result.model, cache, grad_out, &grad_feat);
        adam_step(result.model, grads, state, cfg);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint and log I/O
// ---------------------------------------------------------------------------

/// Checkpoint text format: "L act" header, then per layer "rows cols",
/// row-major weights, then biases.
inline void save_checkpoint(const std::string& path, const MlpModel& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.precision(17);
    out << model.layer_count() << ' '
        << (model.hidden_activation == Activation::Rectifier ? "relu" : "identity") << '\n';
    for (int l = 0; l < model.layer_count(); ++l) {
        out << model.weights[l].rows() << ' ' << model.weights[l].cols() << '\n';
        for (long i = 0; i < model.weights[l].rows(); ++i)
            for (long j = 0; j < model.weights[l].cols(); ++j)
                out << model.weights[l](i, j) << '\n';
        for (long i = 0; i < model.biases[l].size(); ++i) out << model.biases[l](i) << '\n';
    }
}

inline MlpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    int layers = 0;
    std::string act;
    if (!(in >> layers >> act) || layers < 1)
        throw std::runtime_error("load_checkpoint: malformed header in " + path);
    MlpModel model;
    model.hidden_activation = act == "identity" ? Activation::Identity : Activation::Rectifier;
    for (int l = 0; l < layers; ++l) {
        long rows = 0, cols = 0;
        if (!(in >> rows >> cols))
            throw std::runtime_error("load_checkpoint: malformed layer header in " + path);
        Eigen::MatrixXd w(rows, cols);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j)
                if (!(in >> w(i, j)))
                    throw std::runtime_error("load_checkpoint: truncated weights in " + path);
        Eigen::VectorXd b(rows);
        for (long i = 0; i < rows; ++i)
            if (!(in >> b(i)))
                throw std::runtime_error("load_checkpoint: truncated biases in " + path);
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

/// Training log: tab-separated step and per-component losses.
inline void save_trace(const std::string& path, const std::vector<StepLog>& trace) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_trace: cannot open " + path);
    out << "step\ttotal\treg\ttriplet\tpgt\tdiv\n";
    out.precision(12);
    for (const auto& log : trace)
        out << log.step << '\t' << log.total << '\t' << log.reg << '\t' << log.triplet << '\t'
            << log.pgt << '\t' << log.divergence << '\n';
}

}  // namespace morphkit::nnkit
