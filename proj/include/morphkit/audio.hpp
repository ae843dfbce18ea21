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
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace morphkit::audio {

constexpr int kMelBins = 64;
constexpr double kLogFloor = 1e-10;

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 16000.0;

    void validate() const {
        if (samples.empty()) throw std::invalid_argument("Waveform: empty");
        if (sample_rate <= 0.0) throw std::invalid_argument("Waveform: sample_rate <= 0");
    }
};

struct MelSpectrogram {
    Eigen::MatrixXd frames;  // frames x 64, log power
    double frame_hop = 0.010;
    bool normalized = false;
    std::vector<bool> degenerate_bins;  // variance-floor columns after normalization
};

struct MelConfig {
    double window_sec = 0.025;
    double hop_sec = 0.010;
    int n_mels = kMelBins;
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

namespace detail {

/// In-place iterative radix-2 FFT.
inline void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double pi = std::acos(-1.0);
    for (size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(angle), std::sin(angle));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace detail

/// Triangular mel filterbank, n_mels x (n_fft/2 + 1), unit-peak triangles
/// spanning 0 Hz to Nyquist on the standard mel scale.
inline Eigen::MatrixXd mel_filterbank(int n_mels, size_t n_fft, double sample_rate) {
    const long n_bins = static_cast<long>(n_fft / 2 + 1);
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    for (size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_max * static_cast<double>(i) / (n_mels + 1));

    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
        for (long k = 0; k < n_bins; ++k) {
            const double f = sample_rate * static_cast<double>(k) / static_cast<double>(n_fft);
            if (f > lo && f < center)
                fb(m, k) = (f - lo) / (center - lo);
            else if (f >= center && f < hi)
                fb(m, k) = (hi - f) / (hi - center);
        }
    }
    return fb;
}

/// Center frequency of mel filter m (for test oracles).
inline double mel_filter_center_hz(int m, int n_mels, double sample_rate) {
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    return mel_to_hz(mel_max * static_cast<double>(m + 1) / (n_mels + 1));
}

/// Frame count for a given signal length: floor((len - window) / hop) + 1.
inline long frame_count(size_t n_samples, size_t window, size_t hop) {
    if (n_samples < window) return 0;
    return static_cast<long>((n_samples - window) / hop) + 1;
}

/// Frame -> Hann window -> power spectrum -> 64 triangular mel filters ->
/// log with floor 1e-10.
inline MelSpectrogram melspectrogram(const Waveform& w, const MelConfig& cfg = {}) {
    w.validate();
    const size_t window = static_cast<size_t>(std::lround(cfg.window_sec * w.sample_rate));
    const size_t hop = static_cast<size_t>(std::lround(cfg.hop_sec * w.sample_rate));
    if (window == 0 || hop == 0)
        throw std::invalid_argument("melspectrogram: window/hop rounds to zero samples");
    if (w.samples.size() < window)
        throw std::invalid_argument("melspectrogram: waveform shorter than one window");

    const size_t n_fft = detail::next_pow2(window);
    const Eigen::MatrixXd fb = mel_filterbank(cfg.n_mels, n_fft, w.sample_rate);

    std::vector<double> hann(window);
    const double pi = std::acos(-1.0);
    for (size_t i = 0; i < window; ++i)
        hann[i] = 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) /
                                        static_cast<double>(window - 1)));

    const long n_frames = frame_count(w.samples.size(), window, hop);
    MelSpectrogram out;
    out.frame_hop = cfg.hop_sec;
    out.frames.resize(n_frames, cfg.n_mels);

    std::vector<std::complex<double>> buf(n_fft);
    Eigen::VectorXd power(static_cast<long>(n_fft / 2 + 1));
    for (long t = 0; t < n_frames; ++t) {
        const size_t start = static_cast<size_t>(t) * hop;
        for (size_t i = 0; i < n_fft; ++i)
            buf[i] = i < window ? w.samples[start + i] * hann[i] : 0.0;
        detail::fft(buf);
        for (long k = 0; k < power.size(); ++k) power(k) = std::norm(buf[static_cast<size_t>(k)]);
        out.frames.row(t) =
            (fb * power).array().max(kLogFloor).log().transpose();
    }
    return out;
}

/// Per-bin mean/variance normalization across frames (biased variance).
/// Bins whose variance hits the floor are zeroed and flagged.
inline MelSpectrogram normalize_per_bin(const MelSpectrogram& m) {
    const long frames = m.frames.rows();
    if (frames < 2)
        throw std::invalid_argument("normalize_per_bin: need at least 2 frames");
    MelSpectrogram out = m;
    out.normalized = true;
    out.degenerate_bins.assign(static_cast<size_t>(m.frames.cols()), false);
    for (long c = 0; c < m.frames.cols(); ++c) {
        const double mean = m.frames.col(c).mean();
        const double var = (m.frames.col(c).array() - mean).square().mean();
        if (var < 1e-30) {
            out.frames.col(c).setZero();
            out.degenerate_bins[static_cast<size_t>(c)] = true;
        } else {
            out.frames.col(c) = (m.frames.col(c).array() - mean) / std::sqrt(var);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// WAV I/O (single channel, PCM16 or float32)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T read_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    T value{};
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace detail

inline Waveform load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_wav: cannot open " + path);
    char tag[5] = {};
    in.read(tag, 4);
    if (std::string(tag, 4) != "RIFF") throw std::runtime_error("load_wav: not RIFF: " + path);
    detail::read_le<uint32_t>(in);
    in.read(tag, 4);
    if (std::string(tag, 4) != "WAVE") throw std::runtime_error("load_wav: not WAVE: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    Waveform w;
    bool got_fmt = false, got_data = false;
    while (in.read(tag, 4)) {
        const uint32_t size = detail::read_le<uint32_t>(in);
        const std::string chunk(tag, 4);
        if (chunk == "fmt ") {
            format = detail::read_le<uint16_t>(in);
            channels = detail::read_le<uint16_t>(in);
            rate = detail::read_le<uint32_t>(in);
            detail::read_le<uint32_t>(in);
            detail::read_le<uint16_t>(in);
            bits = detail::read_le<uint16_t>(in);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            got_fmt = true;
        } else if (chunk == "data") {
            if (!got_fmt) throw std::runtime_error("load_wav: data before fmt in " + path);
            if (channels != 1)
                throw std::runtime_error("load_wav: only single-channel WAV supported");
            if (format == 1 && bits == 16) {
                for (uint32_t i = 0; i < size / 2; ++i)
                    w.samples.push_back(detail::read_le<int16_t>(in) / 32768.0);
            } else if (format == 3 && bits == 32) {
                for (uint32_t i = 0; i < size / 4; ++i)
                    w.samples.push_back(static_cast<double>(detail::read_le<float>(in)));
            } else {
                throw std::runtime_error("load_wav: unsupported format (need PCM16 or float32)");
            }
            got_data = true;
        } else {
            in.seekg(size, std::ios::cur);
        }
    }
    if (!got_data) throw std::runtime_error("load_wav: no data chunk in " + path);
    w.sample_rate = static_cast<double>(rate);
    w.validate();
    return w;
}

inline void save_wav(const std::string& path, const Waveform& w) {
    w.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_wav: cannot open " + path);
    const uint32_t data_size = static_cast<uint32_t>(w.samples.size()) * 4;
    out.write("RIFF", 4);
    detail::write_le<uint32_t>(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    detail::write_le<uint32_t>(out, 16);
    detail::write_le<uint16_t>(out, 3);  // float32
    detail::write_le<uint16_t>(out, 1);
    detail::write_le<uint32_t>(out, static_cast<uint32_t>(w.sample_rate));
    detail::write_le<uint32_t>(out, static_cast<uint32_t>(w.sample_rate) * 4);
    detail::write_le<uint16_t>(out, 4);
    detail::write_le<uint16_t>(out, 32);
    out.write("data", 4);
    detail::write_le<uint32_t>(out, data_size);
    for (double s : w.samples) detail::write_le<float>(out, static_cast<float>(s));
}

/// Feature matrix as delimited text: one frame per line, 64 columns.
inline void save_features(const std::string& path, const MelSpectrogram& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_features: cannot open " + path);
    out.precision(12);
    for (long r = 0; r < m.frames.rows(); ++r) {
        for (long c = 0; c < m.frames.cols(); ++c)
            out << m.frames(r, c) << (c + 1 < m.frames.cols() ? '\t' : '\n');
    }
}

}  // namespace morphkit::audio
