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

#ifndef SKINMIMO_CSI_HPP
#define SKINMIMO_CSI_HPP

#include "skinmimo/dsp.hpp"
#include "skinmimo/mimo.hpp"
#include "skinmimo/sim.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// Quantization, IMU windowing, metrics and pilot-to-data-carrier interpolation.
namespace skinmimo::csi
{
    enum class Target
    {
        amplitude,
        phase,
    };

    std::string to_string(Target t);
    Target parse_target(const std::string &s);

    struct QuantizationScheme
    {
        int amp_levels = 16;
        int phase_levels = 32;
        double amp_min = 0.0; // [V]
        double amp_max = 1.0;

        void validate() const;
    };

    // Uniform bins with bin-centre representatives. Phase dictionaries span
    // [-pi, pi) and wrap their input first.
    class LevelDictionary
    {
    public:
        static LevelDictionary amplitude(double lo, double hi, int levels);
        static LevelDictionary phase(int levels);
        static LevelDictionary for_target(Target t, const QuantizationScheme &q);

        int levels() const { return static_cast<int>(values_.size()); }
        double lower() const { return lo_; }
        double upper() const { return hi_; }
        double bin_width() const { return (hi_ - lo_) / levels(); }
        bool periodic() const { return periodic_; }
        const std::vector<double> &values() const { return values_; }
        double operator[](int level) const { return values_.at(static_cast<std::size_t>(level)); }

        // Floor bin; out-of-range amplitudes clamp to the end levels.
        int quantize(double value) const;
        double dequantize(int level) const { return (*this)[level]; }

        // Value difference under this dictionary's metric (wrapped for phase).
        double difference(double a, double b) const;

    private:
        LevelDictionary(double lo, double hi, int levels, bool periodic);

        double lo_ = 0.0;
        double hi_ = 1.0;
        bool periodic_ = false;
        std::vector<double> values_;
    };

    int quantize(double value, const LevelDictionary &dict);

    // count x steps x features, row-major.
    struct Blocks
    {
        std::size_t count = 0;
        std::size_t steps = 0;
        std::size_t features = 0;
        std::vector<double> values;

        std::span<const double> block(std::size_t i) const
        {
            return std::span<const double>(values).subspan(i * steps * features, steps * features);
        }
        Blocks subset(std::span<const std::size_t> indices) const;
    };

    // Block i covers samples [i * hop, i * hop + window).
    Blocks window_imu(const sim::ImuStream &imu, std::size_t window, std::size_t hop);

    // Per-feature z-score. Zero-variance features map to 0.
    class Standardizer
    {
    public:
        Standardizer() = default;
        Standardizer(std::vector<double> mean, std::vector<double> stddev);

        static Standardizer fit(const Blocks &blocks, std::span<const std::size_t> indices);

        void apply(Blocks &blocks) const;
        const std::vector<double> &mean() const { return mean_; }
        const std::vector<double> &stddev() const { return std_; }

    private:
        std::vector<double> mean_;
        std::vector<double> std_;
    };

    enum class FrontendMode
    {
        demodulate, // I/Q of every axis at each carrier of the slot's transmitter
        bandpass,   // the slot carrier's band of every axis
    };

    FrontendMode parse_frontend_mode(const std::string &s);
    std::string to_string(FrontendMode m);

    struct FrontendSpec
    {
        FrontendMode mode = FrontendMode::demodulate;
        double half_width = 2.5;       // bandpass: passband half width [Hz]
        double transition_width = 5.0; // [Hz]
        double attenuation = 60.0;     // [dB]
    };

    sim::ImuStream imu_frontend(const sim::ImuStream &imu, double carrier_hz, const FrontendSpec &spec);

    // Sample k of output axis (a * carriers + c) * 2 + {0, 1} is the mean of
    // 2 x sin and 2 x cos at carrier c over samples [k - window / 2, k - window / 2 + window),
    // i.e. A cos(phi) and A sin(phi) of a steady tone A sin(wt + phi). The box
    // nulls every tone on a sample_rate / window grid. Samples whose box leaves
    // the stream are zero.
    sim::ImuStream imu_demodulate(const sim::ImuStream &imu, std::span<const double> carriers, std::size_t window);

    // Windows at either end touched by filter edge effects or the motor ramp.
    std::size_t guard_windows(const FrontendSpec &spec, double sample_rate, std::size_t window);

    struct SlotReport
    {
        std::size_t n = 0;
        double tpr = 0.0;
        double rmse = 0.0;
        std::vector<std::vector<std::size_t>> confusion; // [truth][prediction]
    };

    SlotReport metrics(std::span<const int> predictions, std::span<const int> truth, const LevelDictionary &dict);

    // Natural cubic spline through strictly increasing knots.
    class CubicSpline
    {
    public:
        CubicSpline(std::vector<double> x, std::vector<double> y);
        double operator()(double x) const; // throws ValidationError outside [x0, xn]
        double lower() const { return x_.front(); }
        double upper() const { return x_.back(); }

    private:
        std::vector<double> x_, y_, m_; // m: second derivatives
    };

    // Measured received tone of one pilot at one RX.
    struct PilotObservation
    {
        double carrier_hz = 0.0;
        int rx = 0;
        int tx = 0;
        double amplitude = 0.0; // [V]
        double phase = 0.0;     // [rad]
    };

    struct CsiEstimate
    {
        double carrier_hz = 0.0;
        mimo::ChannelMatrix h;
    };

    // Spline over amplitude and unwrapped phase per (rx, tx), then channel_response
    // against the transmitted tone (tx_amplitude, tx_phase).
    CsiEstimate interpolate_csi(std::span<const PilotObservation> pilots, int n_rx, int n_tx, double data_carrier,
                                double tx_amplitude = 1.0, double tx_phase = 0.0);
}

#endif
