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

#ifndef SKINMIMO_SIM_HPP
#define SKINMIMO_SIM_HPP

#include "skinmimo/dsp.hpp"
#include "skinmimo/kvconfig.hpp"
#include "skinmimo/mimo.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Synthetic skin-vibration testbed: fading subchannels, motor dynamics,
// receiver synthesis and a co-located 6-axis IMU.
namespace skinmimo::sim
{
    using mimo::ComplexGain;

    struct ActivityProfile
    {
        std::string name = "resting";
        double target_coherence = 0.150; // [s] envelope autocorrelation crosses 0.8 here
        double fade_depth = 0.10;        // RMS of the relative gain fluctuation, [0, 1)

        static ActivityProfile preset(const std::string &name); // resting | browsing | typing
        void validate() const;
    };

    // Per-step AR(1) coefficient of the relative fluctuation for a state update rate.
    double ar_coefficient(const ActivityProfile &profile, double rate, double threshold = 0.8);

    // Frequency dependence of the mean subchannel gain around a reference carrier:
    // mu_mn(f) = base_mn (1 + slope_mn (f - f_ref) / 50) exp(-j 2 pi (f - f_ref) delay_mn)
    struct MeanResponse
    {
        mimo::CMatrix base;          // n_rx x n_tx, at reference_hz
        Eigen::MatrixXd amp_slope;   // relative amplitude change per 50 Hz
        Eigen::MatrixXd delay;       // [s]
        double reference_hz = 125.0;

        static MeanResponse flat(mimo::CMatrix base, double reference_hz = 125.0);
        ComplexGain at(Eigen::Index rx, Eigen::Index tx, double freq) const;
        mimo::ChannelMatrix matrix_at(double freq) const;
    };

    // h_mn(f, t) = mu_mn(f) (1 + eps_mn(t)); eps is a complex AR(1) process per
    // subchannel with E|eps|^2 = fade_depth^2, shared across carriers.
    class ChannelProcess
    {
    public:
        ChannelProcess(MeanResponse mean, double rate, std::vector<std::vector<ComplexGain>> fluctuation);

        double rate() const { return rate_; }
        std::size_t steps() const { return steps_; }
        Eigen::Index n_rx() const { return mean_.base.rows(); }
        Eigen::Index n_tx() const { return mean_.base.cols(); }
        const MeanResponse &mean() const { return mean_; }

        ComplexGain fluctuation(Eigen::Index rx, Eigen::Index tx, std::size_t step) const;
        ComplexGain gain(Eigen::Index rx, Eigen::Index tx, double freq, std::size_t step) const;
        std::span<const ComplexGain> trajectory(Eigen::Index rx, Eigen::Index tx) const;

    private:
        MeanResponse mean_;
        double rate_;
        std::size_t steps_;
        std::vector<std::vector<ComplexGain>> eps_; // index rx * n_tx + tx
    };

    // Throws ValidationError unless rate >= 20 / target_coherence.
    ChannelProcess evolve_channel(const ActivityProfile &profile, const MeanResponse &mean, double duration,
                                  double rate, std::uint64_t seed);

    struct MotorInterval
    {
        double on = 0.0;  // [s]
        double off = 0.0; // [s], > on
    };

    struct MotorSchedule
    {
        std::vector<MotorInterval> intervals; // sorted, non-overlapping

        static MotorSchedule always_on(double duration);
        static MotorSchedule always_off() { return {}; }
        bool commanded(double t) const;
        void validate(double duration) const;
    };

    struct MotorState
    {
        double commanded = 0.0; // [V]
        double effective = 0.0; // [V]
        double t_ramp = 0.030;  // [s]
        double t_ring = 0.010;  // [s]

        // One first-order step of dt seconds towards the commanded level.
        void advance(double dt);
    };

    // Normalized (commanded = 1) effective amplitude per sample.
    dsp::Waveform motor_envelope(const MotorSchedule &schedule, double t_ramp, double t_ring, double sample_rate,
                                 double duration);

    enum class SensorSet
    {
        acc,
        gyro,
        acc_gyro,
    };

    SensorSet parse_sensor_set(const std::string &name); // ACC | GYRO | ACC+GYRO
    std::string to_string(SensorSet s);

    struct ImuFrame
    {
        double timestamp = 0.0;
        std::span<const double> axes;
    };

    // Row-major count x n_axes samples. Axes 0..2 accelerometer [m/s^2], 3..5 gyroscope [rad/s].
    class ImuStream
    {
    public:
        ImuStream() = default;
        ImuStream(double sample_rate, std::size_t n_axes, std::vector<double> data);

        double sample_rate() const { return rate_; }
        std::size_t n_axes() const { return n_axes_; }
        std::size_t size() const { return n_axes_ ? data_.size() / n_axes_ : 0; }
        ImuFrame frame(std::size_t i) const;
        double at(std::size_t i, std::size_t axis) const { return data_[i * n_axes_ + axis]; }
        std::span<const double> data() const { return data_; }

        dsp::Waveform axis(std::size_t a) const;
        ImuStream select(SensorSet set) const; // requires the full 6-axis stream

    private:
        double rate_ = 1.0;
        std::size_t n_axes_ = 0;
        std::vector<double> data_;
    };

    // Little-endian: f64 sample_rate, u64 count, u64 n_axes, count*n_axes f64 row-major.
    void write_imu_binary(const ImuStream &imu, const std::filesystem::path &path);
    ImuStream read_imu_binary(const std::filesystem::path &path);

    struct Pilot
    {
        double carrier_hz = 0.0;
        int tx = 0;
    };

    struct ImuCoupling
    {
        double acc_gain = 1.0;      // pilot tone amplitude per volt of drive
        double gyro_gain = 3.0;
        double acc_noise = 0.08;    // white noise std per axis
        double gyro_noise = 0.08;
        double saturation = 0.5;    // tanh knee of the fluctuation mixing
        double depth = 0.10;        // RMS of the mix input, independent of the activity fade depth
        double gravity = 9.81;      // static offset on acc z
        std::uint64_t seed = 7;     // mixing matrix and coupling phases
    };

    struct SimScenario
    {
        int n_rx = 2;
        int n_tx = 2;
        std::vector<Pilot> pilots;
        std::vector<double> data_carriers{125.0};
        double sample_rate = 300.0;
        double duration = 300.0;
        std::optional<double> snr_db = 10.0; // mean per-pilot received SNR; nullopt = noise free
        double tx_amplitude = 1.0;           // [V]
        ActivityProfile activity;
        double channel_scale = 1.0;
        double max_amp_slope = 0.2;
        double max_delay = 0.0015;           // [s]
        double reference_hz = 125.0;
        double t_ramp = 0.030;
        double t_ring = 0.010;
        bool motors_on = true;
        std::size_t window = 30;             // truth window [samples]
        std::size_t channel_oversample = 0;  // 0 = smallest integer meeting the rate precondition
        ImuCoupling imu;
        std::uint64_t seed = 1;

        void validate() const;
        std::vector<int> pilot_owner_set(int tx) const; // indices into pilots
        std::vector<double> carriers() const;           // pilots then data carriers
        double noise_std() const;                       // from snr_db and the mean response

        MeanResponse mean_response() const;

        KeyValueConfig to_config() const;
        static SimScenario from_config(const KeyValueConfig &cfg, const SimScenario &base);
    };

    // Reference printed 2x2 channel matrix used to seed the mean response.
    mimo::CMatrix reference_channel();

    SimScenario default_scenario(); // subject 1
    SimScenario subject_preset(int id);

    // Window-mean h for every carrier, stored [window][carrier] as n_rx x n_tx.
    struct TruthSeries
    {
        std::size_t window = 30;
        double sample_rate = 300.0;
        std::vector<double> carriers;
        std::vector<std::vector<mimo::CMatrix>> h;

        std::size_t n_windows() const { return h.size(); }
        std::size_t carrier_index(double carrier_hz) const; // throws ValidationError
        mimo::ChannelMatrix at(std::size_t w, std::size_t carrier) const;

        void write_csv(const std::filesystem::path &path) const;
        static TruthSeries read_csv(const std::filesystem::path &path, std::size_t window, double sample_rate);
    };

    struct SimOutput
    {
        std::vector<dsp::Waveform> rx;
        ImuStream imu;
        TruthSeries truth;
        dsp::Waveform motor; // normalized drive envelope shared by all TX
    };

    SimOutput simulate(const SimScenario &scenario);

    // Single-TX, single-carrier scenario used to measure coherence of an activity.
    struct CoherenceProbe
    {
        // A narrow band or long envelope window smooths the envelope and
        // lengthens short coherence times, hence the wide band here.
        double carrier_hz = 300.0;
        double sample_rate = 3000.0;
        double duration = 120.0;
        std::size_t envelope_window = 20;
        std::size_t envelope_hop = 3;
        double band_half_width = 150.0;
        double transition_width = 100.0;
        std::optional<double> snr_db; // noise free by default
    };

    // Coherence time [s] of the RX envelope, nullopt if it never decorrelates.
    std::optional<double> probe_coherence(const ActivityProfile &profile, const CoherenceProbe &probe,
                                          std::uint64_t seed, double threshold = 0.8);
}

#endif
