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

// Command-line front end. Exit codes: 0 success, 1 usage, 2 data error,
// 3 numerical failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphkit/audio.hpp"
#include "morphkit/fitting.hpp"
#include "morphkit/harness.hpp"
#include "morphkit/losses.hpp"
#include "morphkit/metrics.hpp"
#include "morphkit/morphable.hpp"
#include "morphkit/nnkit.hpp"

namespace mk = morphkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

mk::nnkit::SyntheticDataset load_or_make_dataset(const std::string& path, int identities,
                                                 int samples, int coeffs, double noise,
                                                 unsigned seed) {
    (void)path;
    return mk::nnkit::make_synthetic_dataset(identities, samples, coeffs, noise, seed);
}

void split_by_name(const mk::nnkit::SyntheticDataset& data, mk::nnkit::SyntheticDataset& train,
                   mk::nnkit::SyntheticDataset& eval) {
    train.identity_names = data.identity_names;
    train.true_map = data.true_map;
    eval.identity_names = data.identity_names;
    eval.true_map = data.true_map;
    for (const auto& s : data.samples) {
        const auto& name = data.identity_names[static_cast<size_t>(s.identity)];
        (mk::harness::is_eval_name(name) ? eval : train).samples.push_back(s);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"morphkit: morphable face model toolkit"};
    app.set_config("--config", "", "structured key=value config file");
    app.require_subcommand(1);

    // --- reconstruct ---
    auto* cmd_rec = app.add_subcommand("reconstruct", "build a mesh from basis + coefficients");
    std::string rec_basis, rec_coeffs, rec_out;
    cmd_rec->add_option("--basis", rec_basis, "basis file")->required();
    cmd_rec->add_option("--coeffs", rec_coeffs, "coefficient file")->required();
    cmd_rec->add_option("--out", rec_out, "output OBJ path")->required();

    // --- pose ---
    auto* cmd_pose = app.add_subcommand("pose", "apply a rigid pose to an OBJ mesh");
    std::string pose_in, pose_out;
    std::vector<double> pose_rot, pose_trans{0, 0, 0};
    cmd_pose->add_option("--in", pose_in, "input OBJ")->required();
    cmd_pose->add_option("--out", pose_out, "output OBJ")->required();
    cmd_pose->add_option("--rotation", pose_rot, "9 row-major rotation entries")
        ->expected(9)
        ->required();
    cmd_pose->add_option("--translation", pose_trans, "3 translation entries")->expected(3);

    // --- fit ---
    auto* cmd_fit = app.add_subcommand("fit", "fit coefficients to 68 3D landmarks");
    std::string fit_basis, fit_lms, fit_out;
    double fit_lambda = -1.0;
    cmd_fit->add_option("--basis", fit_basis)->required();
    cmd_fit->add_option("--landmarks", fit_lms, "68 lines of x y z")->required();
    cmd_fit->add_option("--out", fit_out, "output coefficient file")->required();
    cmd_fit->add_option("--ridge-lambda", fit_lambda, "ridge weight (default scale-aware)");

    // --- eval ---
    auto* cmd_eval = app.add_subcommand("eval", "metric report for prediction/reference pairs");
    std::string eval_basis, eval_pred, eval_ref, eval_out, eval_ratio, eval_regions;
    cmd_eval->add_option("--basis", eval_basis)->required();
    cmd_eval->add_option("--predictions", eval_pred, "manifest of predicted coefficients")
        ->required();
    cmd_eval->add_option("--references", eval_ref, "manifest of reference coefficients")
        ->required();
    cmd_eval->add_option("--out", eval_out, "report file")->required();
    cmd_eval->add_option("--ratio-spec", eval_ratio, "ratio pair file (optional)");
    cmd_eval->add_option("--regions", eval_regions, "region map file")->required();

    // --- oracle ---
    auto* cmd_oracle = app.add_subcommand("oracle", "mean-coefficient oracle from a manifest");
    std::string oracle_manifest, oracle_out, oracle_kind = "global";
    cmd_oracle->add_option("--manifest", oracle_manifest)->required();
    cmd_oracle->add_option("--out", oracle_out, "output coefficient file")->required();
    cmd_oracle->add_option("--kind", oracle_kind, "global | per-group");
    std::string oracle_group;
    cmd_oracle->add_option("--group", oracle_group, "group to predict (per-group kind)");

    // --- train ---
    auto* cmd_train = app.add_subcommand("train", "supervised toy training on synthetic data");
    std::string train_out, train_trace;
    int train_ids = 80, train_samples = 6, train_coeffs = 16, train_steps = 2000,
        train_batch = 64;
    double train_lr = 2e-4, train_noise = 0.0;
    unsigned train_seed = 0;
    std::vector<int> train_hidden{128, 128};
    cmd_train->add_option("--out", train_out, "checkpoint path")->required();
    cmd_train->add_option("--trace", train_trace, "training log path");
    cmd_train->add_option("--identities", train_ids);
    cmd_train->add_option("--samples-per-identity", train_samples);
    cmd_train->add_option("--coeffs", train_coeffs);
    cmd_train->add_option("--steps", train_steps);
    cmd_train->add_option("--batch-size", train_batch);
    cmd_train->add_option("--learning-rate", train_lr);
    cmd_train->add_option("--noise", train_noise);
    cmd_train->add_option("--seed", train_seed);
    cmd_train->add_option("--hidden", train_hidden, "hidden layer sizes");

    // --- distill ---
    auto* cmd_distill = app.add_subcommand("distill", "distill a student from a fixed expert");
    std::string distill_expert, distill_out, distill_trace;
    int distill_ids = 80, distill_samples = 6, distill_steps = 2000, distill_batch = 64;
    double distill_lr = 2e-4;
    unsigned distill_seed = 0;
    std::vector<int> distill_hidden{32};
    cmd_distill->add_option("--expert", distill_expert, "expert checkpoint")->required();
    cmd_distill->add_option("--out", distill_out, "student checkpoint path")->required();
    cmd_distill->add_option("--trace", distill_trace, "training log path");
    cmd_distill->add_option("--identities", distill_ids);
    cmd_distill->add_option("--samples-per-identity", distill_samples);
    cmd_distill->add_option("--steps", distill_steps);
    cmd_distill->add_option("--batch-size", distill_batch);
    cmd_distill->add_option("--learning-rate", distill_lr);
    cmd_distill->add_option("--seed", distill_seed);
    cmd_distill->add_option("--hidden", distill_hidden, "student hidden layer sizes");

    // --- melspec ---
    auto* cmd_mel = app.add_subcommand("melspec", "log mel-spectrogram from a WAV file");
    std::string mel_in, mel_out;
    double mel_window = 0.025, mel_hop = 0.010;
    bool mel_norm = false;
    cmd_mel->add_option("--in", mel_in, "single-channel WAV (PCM16 or float32)")->required();
    cmd_mel->add_option("--out", mel_out, "feature text matrix")->required();
    cmd_mel->add_option("--window", mel_window, "window seconds");
    cmd_mel->add_option("--hop", mel_hop, "hop seconds");
    cmd_mel->add_flag("--normalize", mel_norm, "per-bin mean/variance normalization");

    // --- sigtest ---
    auto* cmd_sig = app.add_subcommand("sigtest", "one-sided binomial preference test");
    long sig_n = 0, sig_k = 0;
    double sig_gamma = 0.001;
    cmd_sig->add_option("--n", sig_n, "total responses")->required();
    cmd_sig->add_option("--k", sig_k, "votes for the candidate")->required();
    cmd_sig->add_option("--gamma", sig_gamma, "significance level");

    // --- synth-data ---
    auto* cmd_synth = app.add_subcommand(
        "synth-data", "write a synthetic dataset: basis, regions, coefficients, manifest");
    std::string synth_dir;
    int synth_ids = 20, synth_samples = 3, synth_coeffs = 16, synth_rings = 10,
        synth_segments = 12;
    double synth_noise = 0.0;
    unsigned synth_seed = 0;
    cmd_synth->add_option("--out-dir", synth_dir)->required();
    cmd_synth->add_option("--identities", synth_ids);
    cmd_synth->add_option("--samples-per-identity", synth_samples);
    cmd_synth->add_option("--coeffs", synth_coeffs);
    cmd_synth->add_option("--rings", synth_rings, "basis mesh rings");
    cmd_synth->add_option("--segments", synth_segments, "basis mesh segments");
    cmd_synth->add_option("--noise", synth_noise);
    cmd_synth->add_option("--seed", synth_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*cmd_rec) {
            const auto basis = mk::morphable::load_basis(rec_basis);
            const auto coeffs = mk::morphable::load_coefficients(rec_coeffs);
            mk::morphable::save_obj(rec_out, mk::morphable::reconstruct(basis, coeffs));
        } else if (*cmd_pose) {
            const auto mesh = mk::morphable::load_obj(pose_in);
            mk::morphable::PoseParams pose;
            for (int i = 0; i < 9; ++i) pose.rotation(i / 3, i % 3) = pose_rot[i];
            pose.translation << pose_trans[0], pose_trans[1], pose_trans[2];
            mk::morphable::save_obj(pose_out, mk::morphable::apply_pose(mesh, pose));
        } else if (*cmd_fit) {
            const auto basis = mk::morphable::load_basis(fit_basis);
            const auto lms = mk::fitting::load_landmarks(fit_lms);
            mk::fitting::FitConfig cfg;
            cfg.ridge_lambda = fit_lambda;
            const auto result = mk::fitting::fit_report(lms, basis, cfg);
            mk::morphable::save_coefficients(fit_out, result.coefficients);
            std::cout << "residual_rms\t" << result.residual_rms << '\n';
        } else if (*cmd_eval) {
            const auto basis = mk::morphable::load_basis(eval_basis);
            const auto preds = mk::harness::load_manifest(eval_pred);
            const auto refs = mk::harness::load_manifest(eval_ref);
            mk::metrics::RatioSpec spec;
            if (!eval_ratio.empty()) spec = mk::metrics::load_ratio_spec(eval_ratio);
            const auto regions = mk::metrics::load_region_map(eval_regions);
            const std::filesystem::path pred_root =
                std::filesystem::path(eval_pred).parent_path();
            const std::filesystem::path ref_root =
                std::filesystem::path(eval_ref).parent_path();
            mk::harness::EvalInputs inputs;
            for (const auto& e : preds.entries)
                inputs.predictions[e.identity].push_back(
                    mk::morphable::load_coefficients((pred_root / e.coeff_path).string())
                        .values);
            for (const auto& e : refs.entries)
                inputs.references[e.identity] =
                    mk::morphable::load_coefficients((ref_root / e.coeff_path).string()).values;
            const auto output = mk::harness::evaluate(inputs, basis, spec, regions);
            mk::harness::save_reports(eval_out, output);
            std::cout << mk::metrics::EvalReport::header() << '\n'
                      << output.aggregate.to_row() << '\n';
        } else if (*cmd_oracle) {
            const auto manifest = mk::harness::load_manifest(oracle_manifest);
            const std::filesystem::path root =
                std::filesystem::path(oracle_manifest).parent_path();
            std::vector<Eigen::VectorXd> coeffs;
            std::vector<std::string> groups;
            for (const auto& e : manifest.entries) {
                coeffs.push_back(
                    mk::morphable::load_coefficients((root / e.coeff_path).string()).values);
                groups.push_back(e.gender);
            }
            const auto kind = oracle_kind == "per-group"
                                  ? mk::harness::OracleKind::PerGroupMean
                                  : mk::harness::OracleKind::GlobalMean;
            const auto oracle = mk::harness::fit_oracle(coeffs, kind, groups);
            mk::morphable::save_coefficients(oracle_out, {oracle.predict(oracle_group)});
        } else if (*cmd_train) {
            const auto data = load_or_make_dataset("", train_ids, train_samples, train_coeffs,
                                                   train_noise, train_seed);
            mk::nnkit::TrainConfig cfg;
            cfg.steps = train_steps;
            cfg.batch_size = train_batch;
            cfg.learning_rate = train_lr;
            cfg.seed = train_seed;
            const auto result = mk::nnkit::train_supervised(data, train_hidden, cfg);
            mk::nnkit::save_checkpoint(train_out, result.model);
            if (!train_trace.empty()) mk::nnkit::save_trace(train_trace, result.trace);
            std::cout << "final_loss\t" << result.trace.back().total << '\n';
        } else if (*cmd_distill) {
            const auto expert = mk::nnkit::load_checkpoint(distill_expert);
            const auto data = load_or_make_dataset("", distill_ids, distill_samples,
                                                   expert.output_dim(), 0.0, distill_seed);
            mk::nnkit::TrainConfig cfg;
            cfg.steps = distill_steps;
            cfg.batch_size = distill_batch;
            cfg.learning_rate = distill_lr;
            cfg.seed = distill_seed;
            const auto result = mk::nnkit::train_distilled(expert, data, distill_hidden, cfg);
            mk::nnkit::save_checkpoint(distill_out, result.model);
            if (!distill_trace.empty()) mk::nnkit::save_trace(distill_trace, result.trace);
            std::cout << "final_loss\t" << result.trace.back().total << '\n';
        } else if (*cmd_mel) {
            const auto wav = mk::audio::load_wav(mel_in);
            mk::audio::MelConfig cfg;
            cfg.window_sec = mel_window;
            cfg.hop_sec = mel_hop;
            auto mel = mk::audio::melspectrogram(wav, cfg);
            if (mel_norm) mel = mk::audio::normalize_per_bin(mel);
            mk::audio::save_features(mel_out, mel);
            std::cout << "frames\t" << mel.frames.rows() << '\n';
        } else if (*cmd_sig) {
            mk::harness::PreferenceTally tally{sig_n, sig_k, sig_gamma};
            const auto result = mk::harness::significance_test(tally);
            std::cout << "reject\t" << (result.reject ? "true" : "false") << '\n'
                      << "p_value\t" << result.p_value << '\n'
                      << "threshold\t" << result.threshold << '\n';
        } else if (*cmd_synth) {
            const auto data = mk::nnkit::make_synthetic_dataset(
                synth_ids, synth_samples, synth_coeffs, synth_noise, synth_seed);
            std::filesystem::create_directories(synth_dir);
            const std::filesystem::path dir(synth_dir);
            mk::harness::DatasetManifest manifest;
            const auto groups = data.by_identity();
            for (size_t id = 0; id < groups.size(); ++id) {
                mk::harness::ManifestEntry entry;
                entry.identity = data.identity_names[id];
                entry.gender = id % 2 == 0 ? "m" : "f";
                entry.coeff_path = entry.identity + ".coeffs";
                Eigen::VectorXd mean = Eigen::VectorXd::Zero(synth_coeffs);
                for (int s : groups[id]) mean += data.samples[s].coefficients;
                mean /= static_cast<double>(groups[id].size());
                mk::morphable::save_coefficients((dir / entry.coeff_path).string(), {mean});
                manifest.entries.push_back(std::move(entry));
            }
            mk::harness::save_manifest((dir / "manifest.tsv").string(), manifest);

            const auto basis = mk::morphable::synthetic_basis(synth_rings, synth_segments,
                                                              synth_coeffs, synth_seed);
            mk::morphable::save_basis((dir / "basis.txt").string(), basis);
            {
                std::ofstream regions((dir / "regions.txt").string());
                const char* names[] = {"left_eye", "right_eye",  "nose",
                                       "mouth",    "left_cheek", "right_cheek"};
                const int per_region =
                    std::max(6, basis.vertex_count / 12);  // disjoint index bands
                for (int r = 0; r < 6; ++r) {
                    regions << names[r];
                    for (int i = 0; i < per_region; ++i) regions << ' ' << r * per_region + i;
                    regions << '\n';
                }
            }
            std::cout << "identities\t" << manifest.entries.size() << '\n';
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        const std::string what = e.what();
        return what.find("singular") != std::string::npos ||
                       what.find("non-finite") != std::string::npos ||
                       what.find("degenerate") != std::string::npos
                   ? kExitNumerical
                   : kExitData;
    }
    return kExitOk;
}
