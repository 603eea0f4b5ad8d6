// SPDX-License-Identifier: Apache-2.0
//
// skinmimo - vibration MIMO channel simulation and CSI prediction toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SKINMIMO_DSP_HPP
#define SKINMIMO_DSP_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

// Deterministic DSP primitives used by both the simulator and the CSI pipeline.
namespace skinmimo::dsp
{
    inline constexpr double pi = 3.14159265358979323846;

    // Wraps an angle to [-pi, pi).
    double wrap_phase(double radians);

    // 2 pi (freq k / fs mod 1): keeps the argument small for long records.
    double carrier_angle(double freq, std::size_t k, double sample_rate);

    // Uniformly sampled, finite, real-valued time series.
    class Waveform
    {
    public:
        Waveform() = default;
        Waveform(std::vector<double> samples, double sample_rate);

        double sample_rate() const { return sample_rate_; }
        std::size_t size() const { return samples_.size(); }
        bool empty() const { return samples_.empty(); }
        double duration() const { return static_cast<double>(samples_.size()) / sample_rate_; }

        std::span<const double> samples() const { return samples_; }
        double operator[](std::size_t i) const { return samples_[i]; }

        Waveform scaled(double factor) const;
        Waveform plus(const Waveform &other) const; // same rate and length required

    private:
        std::vector<double> samples_;
        double sample_rate_ = 1.0;
    };

    double mean_power(const Waveform &w);
    double rms(std::span<const double> x);

    // samples[k] = amplitude * sin(2 pi freq k / sample_rate + phase)
    Waveform synth_tone(double freq, double amplitude, double phase, double duration, double sample_rate);

    struct BandpassSpec
    {
        double low_cut = 0.0;              // passband lower edge [Hz]
        double high_cut = 0.0;             // passband upper edge [Hz]
        double transition_width = 0.0;     // [Hz], outside each passband edge
        double stopband_attenuation = 60.0; // [dB]
    };

    // Linear-phase (type I, odd length) Kaiser-windowed sinc bandpass.
    class FirFilter
    {
    public:
        static FirFilter design_bandpass(const BandpassSpec &spec, double sample_rate);

        explicit FirFilter(std::vector<double> taps);

        std::span<const double> taps() const { return taps_; }
        std::size_t group_delay() const { return (taps_.size() - 1) / 2; }

        // Zero-padded convolution trimmed by the group delay: output[k] aligns with input[k].
        std::vector<double> apply(std::span<const double> x) const;
        Waveform apply(const Waveform &w) const;

        // |H(e^{j 2 pi f / fs})|
        double magnitude_response(double freq, double sample_rate) const;

    private:
        std::vector<double> taps_;
    };

    Waveform bandpass(const Waveform &w, const BandpassSpec &spec);

    struct ToneEstimate
    {
        double amplitude = 0.0; // >= 0
        double phase = 0.0;     // [-pi, pi), sine referenced, absolute sample time k / fs
        double frequency = 0.0;
    };

    // Least-squares fit of a sin + b cos at a known frequency over
    // samples [window_start, window_start + window_len).
    ToneEstimate estimate_tone(const Waveform &w, double freq, std::size_t window_start, std::size_t window_len);

    // Per-window tone amplitudes at rate sample_rate / hop.
    Waveform envelope(const Waveform &w, double carrier_freq, std::size_t hop, std::size_t window);

    // Biased, mean-removed, normalized autocorrelation for lags 0..max_lag.
    std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag);

    struct CoherenceResult
    {
        // nullopt: the envelope never decorrelates (zero variance, or no crossing within the lags examined)
        std::optional<double> coherence_time;
        double correlation_threshold = 0.8;
        std::vector<double> autocorr;

        bool infinite() const { return !coherence_time.has_value(); }
    };

    // Lag (seconds) at which the envelope autocorrelation first falls below the
    // threshold, linearly interpolated between the bracketing lags.
    CoherenceResult coherence_time(const Waveform &env, double threshold, std::size_t max_lag = 0);

    // Columnar text: "# sample_rate=<Hz>" header, then "time,value" rows.
    void write_waveform_text(const Waveform &w, const std::filesystem::path &path);
    Waveform read_waveform_text(const std::filesystem::path &path);

    // Raw little-endian: f64 sample_rate, u64 count, count x f64 samples.
    void write_waveform_binary(const Waveform &w, const std::filesystem::path &path);
    Waveform read_waveform_binary(const std::filesystem::path &path);
}

#endif
