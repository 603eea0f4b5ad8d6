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

#include "skinmimo/sim.hpp"
#include "skinmimo/binio.hpp"
#include "skinmimo/error.hpp"
#include "skinmimo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace skinmimo::sim
{
    namespace
    {
        constexpr double two_pi = 2.0 * dsp::pi;

        // Stream tags for derive_seed.
        enum : std::uint64_t
        {
            tag_channel = 1,
            tag_mean = 2,
            tag_rx_noise = 3,
            tag_imu_noise = 4,
            tag_coupling = 5,
        };

        std::size_t sample_count(double duration, double rate)
        {
            return static_cast<std::size_t>(std::llround(duration * rate));
        }

        std::size_t oversample_factor(const SimScenario &sc)
        {
            if (sc.channel_oversample > 0)
                return sc.channel_oversample;
            const double needed = 20.0 / sc.activity.target_coherence;
            return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(needed / sc.sample_rate - 1e-12)));
        }

        ComplexGain saturate(ComplexGain u, double knee)
        {
            const double mag = std::abs(u);
            if (mag == 0.0)
                return {0.0, 0.0};
            return u * (knee * std::tanh(mag / knee) / mag);
        }

        std::string format_pilots(const std::vector<Pilot> &pilots)
        {
            std::string s;
            for (std::size_t i = 0; i < pilots.size(); ++i)
            {
                if (i)
                    s += ", ";
                s += format_double(pilots[i].carrier_hz) + ":" + std::to_string(pilots[i].tx);
            }
            return s;
        }

        std::string format_list(const std::vector<double> &v)
        {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i)
            {
                if (i)
                    s += ", ";
                s += format_double(v[i]);
            }
            return s;
        }

        double parse_number(const std::string &s, const std::string &what)
        {
            char *end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            require(end && *end == '\0' && !s.empty(), "scenario: bad number in " + what + ": " + s);
            return v;
        }

        // Sensor coupling drawn once per coupling seed.
        struct Coupling
        {
            // beta[axis][tx][rx], kappa[axis][pilot]
            std::vector<std::vector<std::vector<ComplexGain>>> beta;
            std::vector<std::vector<ComplexGain>> kappa;
        };

        Coupling draw_coupling(const SimScenario &sc)
        {
            Gaussian g(derive_seed(sc.imu.seed, {tag_coupling}));
            Coupling c;
            c.beta.assign(6, std::vector<std::vector<ComplexGain>>(sc.n_tx, std::vector<ComplexGain>(sc.n_rx)));
            for (auto &axis : c.beta)
                for (auto &tx : axis)
                    for (auto &b : tx)
                    {
                        const double re = g() / std::sqrt(2.0);
                        const double im = g() / std::sqrt(2.0);
                        b = {re, im};
                    }
            c.kappa.assign(6, std::vector<ComplexGain>(sc.pilots.size()));
            for (std::size_t a = 0; a < 6; ++a)
                for (std::size_t p = 0; p < sc.pilots.size(); ++p)
                {
                    const double gain = a < 3 ? sc.imu.acc_gain : sc.imu.gyro_gain;
                    const double mag = gain * (0.7 + 0.6 * g.uniform());
                    const double ph = two_pi * g.uniform() - dsp::pi;
                    c.kappa[a][p] = std::polar(mag, ph);
                }
            return c;
        }
    }

    // ---- activity profiles ------------------------------------------------

    ActivityProfile ActivityProfile::preset(const std::string &name)
    {
        if (name == "resting")
            return {"resting", 0.150, 0.10};
        if (name == "browsing")
            return {"browsing", 0.044, 0.15};
        if (name == "typing")
            return {"typing", 0.040, 0.15};
        throw ValidationError("unknown activity preset: " + name);
    }

    void ActivityProfile::validate() const
    {
        require(std::isfinite(target_coherence) && target_coherence > 0.0, "activity: target_coherence must be > 0");
        require(fade_depth >= 0.0 && fade_depth < 1.0, "activity: fade_depth must be in [0, 1)");
    }

    double ar_coefficient(const ActivityProfile &profile, double rate, double threshold)
    {
        profile.validate();
        require(rate > 0.0, "ar_coefficient: rate must be positive");
        require(threshold > 0.0 && threshold < 1.0, "ar_coefficient: threshold must be in (0, 1)");
        // Envelope |1 + eps| to second order: rho(r) = (r + s2 r^2 / 2) / (1 + s2 / 2),
        // s2 the per-component variance and r the lag correlation of eps.
        const double s2 = profile.fade_depth * profile.fade_depth / 2.0;
        double r = threshold;
        if (s2 > 0.0)
            r = (-1.0 + std::sqrt(1.0 + 2.0 * s2 * threshold * (1.0 + s2 / 2.0))) / s2;
        const double time_constant = profile.target_coherence / -std::log(r);
        return std::exp(-1.0 / (rate * time_constant));
    }

    // ---- mean response ------------------------------------------------------

    MeanResponse MeanResponse::flat(mimo::CMatrix base, double reference_hz)
    {
        MeanResponse m;
        m.amp_slope = Eigen::MatrixXd::Zero(base.rows(), base.cols());
        m.delay = Eigen::MatrixXd::Zero(base.rows(), base.cols());
        m.base = std::move(base);
        m.reference_hz = reference_hz;
        return m;
    }

    ComplexGain MeanResponse::at(Eigen::Index rx, Eigen::Index tx, double freq) const
    {
        const double df = freq - reference_hz;
        const double amp = 1.0 + amp_slope(rx, tx) * df / 50.0;
        return base(rx, tx) * amp * std::polar(1.0, -two_pi * df * delay(rx, tx));
    }

    mimo::ChannelMatrix MeanResponse::matrix_at(double freq) const
    {
        mimo::CMatrix m(base.rows(), base.cols());
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                m(r, c) = at(r, c, freq);
        return mimo::ChannelMatrix(m);
    }

    // ---- channel process ----------------------------------------------------

    ChannelProcess::ChannelProcess(MeanResponse mean, double rate, std::vector<std::vector<ComplexGain>> fluctuation)
        : mean_(std::move(mean)), rate_(rate), steps_(fluctuation.empty() ? 0 : fluctuation.front().size()),
          eps_(std::move(fluctuation))
    {
        require(static_cast<Eigen::Index>(eps_.size()) == n_rx() * n_tx(), "ChannelProcess: one trajectory per subchannel");
        for (const auto &t : eps_)
            require(t.size() == steps_, "ChannelProcess: trajectories must share a length");
    }

    ComplexGain ChannelProcess::fluctuation(Eigen::Index rx, Eigen::Index tx, std::size_t step) const
    {
        return eps_[static_cast<std::size_t>(rx * n_tx() + tx)][step];
    }

    ComplexGain ChannelProcess::gain(Eigen::Index rx, Eigen::Index tx, double freq, std::size_t step) const
    {
        return mean_.at(rx, tx, freq) * (1.0 + fluctuation(rx, tx, step));
    }

    std::span<const ComplexGain> ChannelProcess::trajectory(Eigen::Index rx, Eigen::Index tx) const
    {
        return eps_[static_cast<std::size_t>(rx * n_tx() + tx)];
    }

    ChannelProcess evolve_channel(const ActivityProfile &profile, const MeanResponse &mean, double duration,
                                  double rate, std::uint64_t seed)
    {
        profile.validate();
        require(duration > 0.0, "evolve_channel: duration must be positive");
        require(rate >= 20.0 / profile.target_coherence,
                "evolve_channel: state rate must be at least 20 / target_coherence");
        const double phi = ar_coefficient(profile, rate);
        const double s = profile.fade_depth / std::sqrt(2.0);
        const double innov = s * std::sqrt(1.0 - phi * phi);
        const std::size_t steps = sample_count(duration, rate) + 1;

        const auto n_sub = static_cast<std::size_t>(mean.base.rows() * mean.base.cols());
        std::vector<std::vector<ComplexGain>> eps(n_sub, std::vector<ComplexGain>(steps));
        for (std::size_t i = 0; i < n_sub; ++i)
        {
            if (s == 0.0)
                continue;
            Gaussian g(derive_seed(seed, {tag_channel, i}));
            auto &e = eps[i];
            const double re0 = g(), im0 = g();
            e[0] = {s * re0, s * im0};
            for (std::size_t k = 1; k < steps; ++k)
            {
                const double re = g(), im = g();
                e[k] = phi * e[k - 1] + ComplexGain(innov * re, innov * im);
            }
        }
        return ChannelProcess(mean, rate, std::move(eps));
    }

    // ---- motor --------------------------------------------------------------

    MotorSchedule MotorSchedule::always_on(double duration)
    {
        return {{{0.0, duration}}};
    }

    bool MotorSchedule::commanded(double t) const
    {
        for (const auto &iv : intervals)
            if (t >= iv.on && t < iv.off)
                return true;
        return false;
    }

    void MotorSchedule::validate(double duration) const
    {
        double last = 0.0;
        for (const auto &iv : intervals)
        {
            require(iv.on >= last && iv.off > iv.on, "motor schedule: intervals must be sorted and non-overlapping");
            require(iv.off <= duration + 1e-12, "motor schedule: interval beyond duration");
            last = iv.off;
        }
    }

    void MotorState::advance(double dt)
    {
        const bool rising = commanded >= effective;
        const double span = rising ? t_ramp : t_ring;
        if (span <= 0.0)
        {
            effective = commanded;
            return;
        }
        // 4.7 time constants per span leaves < 1% of the step.
        const double tau = span / 4.7;
        effective = commanded + (effective - commanded) * std::exp(-dt / tau);
    }

    dsp::Waveform motor_envelope(const MotorSchedule &schedule, double t_ramp, double t_ring, double sample_rate,
                                 double duration)
    {
        require(sample_rate > 0.0 && duration >= 0.0, "motor_envelope: bad rate or duration");
        require(t_ramp >= 0.0 && t_ring >= 0.0, "motor_envelope: negative ramp or ring time");
        schedule.validate(duration);

        // Switch instants, so that steps straddling a transition are split exactly.
        std::vector<double> edges;
        for (const auto &iv : schedule.intervals)
        {
            edges.push_back(iv.on);
            edges.push_back(iv.off);
        }

        const std::size_t n = sample_count(duration, sample_rate);
        std::vector<double> out(n);
        MotorState st{0.0, 0.0, t_ramp, t_ring};
        std::size_t next_edge = 0;
        double t = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            const double tk = static_cast<double>(k) / sample_rate;
            while (true)
            {
                while (next_edge < edges.size() && edges[next_edge] <= t)
                    ++next_edge;
                st.commanded = schedule.commanded(t) ? 1.0 : 0.0;
                const double stop = next_edge < edges.size() ? std::min(edges[next_edge], tk) : tk;
                if (stop > t)
                    st.advance(stop - t);
                t = stop;
                if (t >= tk)
                    break;
            }
            st.commanded = schedule.commanded(tk) ? 1.0 : 0.0;
            out[k] = st.effective;
        }
        return dsp::Waveform(std::move(out), sample_rate);
    }

    // ---- IMU ----------------------------------------------------------------

    SensorSet parse_sensor_set(const std::string &name)
    {
        if (name == "ACC" || name == "acc")
            return SensorSet::acc;
        if (name == "GYRO" || name == "gyro")
            return SensorSet::gyro;
        if (name == "ACC+GYRO" || name == "acc+gyro")
            return SensorSet::acc_gyro;
        throw ValidationError("unknown sensor set: " + name);
    }

    std::string to_string(SensorSet s)
    {
        switch (s)
        {
        case SensorSet::acc:
            return "ACC";
        case SensorSet::gyro:
            return "GYRO";
        case SensorSet::acc_gyro:
            return "ACC+GYRO";
        }
        return "?";
    }

    ImuStream::ImuStream(double sample_rate, std::size_t n_axes, std::vector<double> data)
        : rate_(sample_rate), n_axes_(n_axes), data_(std::move(data))
    {
        require(sample_rate > 0.0 && std::isfinite(sample_rate), "ImuStream: sample rate must be positive");
        require(n_axes > 0 && data_.size() % n_axes == 0, "ImuStream: data length must be a multiple of n_axes");
        for (double v : data_)
            require(std::isfinite(v), "ImuStream: samples must be finite");
    }

    ImuFrame ImuStream::frame(std::size_t i) const
    {
        require(i < size(), "ImuStream: frame index out of range");
        return {static_cast<double>(i) / rate_, std::span<const double>(data_).subspan(i * n_axes_, n_axes_)};
    }

    dsp::Waveform ImuStream::axis(std::size_t a) const
    {
        require(a < n_axes_, "ImuStream: axis out of range");
        std::vector<double> s(size());
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = at(i, a);
        return dsp::Waveform(std::move(s), rate_);
    }

    ImuStream ImuStream::select(SensorSet set) const
    {
        require(n_axes_ == 6, "ImuStream::select: needs the full 6-axis stream");
        std::size_t first = 0, count = 6;
        if (set == SensorSet::acc)
            count = 3;
        else if (set == SensorSet::gyro)
            first = 3, count = 3;
        std::vector<double> d(size() * count);
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t a = 0; a < count; ++a)
                d[i * count + a] = at(i, first + a);
        return ImuStream(rate_, count, std::move(d));
    }

    void write_imu_binary(const ImuStream &imu, const std::filesystem::path &path)
    {
        auto os = binio::open_out(path);
        binio::put<double>(os, imu.sample_rate());
        binio::put<std::uint64_t>(os, imu.size());
        binio::put<std::uint64_t>(os, imu.n_axes());
        for (double v : imu.data())
            binio::put<double>(os, v);
        if (!os)
            throw MissingArtifactError("write failed: " + path.string());
    }

    ImuStream read_imu_binary(const std::filesystem::path &path)
    {
        auto is = binio::open_in(path);
        const double rate = binio::get<double>(is);
        const auto count = binio::get<std::uint64_t>(is);
        const auto axes = binio::get<std::uint64_t>(is);
        require(axes > 0 && axes <= 64, "imu file: implausible axis count");
        require(count < (std::uint64_t{1} << 34) / axes, "imu file: implausible sample count");
        std::vector<double> d(count * axes);
        for (auto &v : d)
            v = binio::get<double>(is);
        return ImuStream(rate, axes, std::move(d));
    }

    // ---- scenario -----------------------------------------------------------

    mimo::CMatrix reference_channel()
    {
        mimo::CMatrix h(2, 2);
        h << ComplexGain(0.0541, 0.0712), ComplexGain(-0.0151, -0.0369),
            ComplexGain(0.0473, -0.0153), ComplexGain(0.0253, 0.0529);
        return h;
    }

    void SimScenario::validate() const
    {
        require(n_rx >= 1 && n_tx >= 1, "scenario: need at least one RX and one TX");
        require(std::isfinite(sample_rate) && sample_rate > 0.0, "scenario: sample_rate must be positive");
        require(std::isfinite(duration) && duration > 0.0, "scenario: duration must be positive");
        require(window >= 1, "scenario: window must be >= 1");
        require(sample_count(duration, sample_rate) >= window, "scenario: duration shorter than one window");
        require(tx_amplitude > 0.0, "scenario: tx_amplitude must be positive");
        require(!snr_db || std::isfinite(*snr_db), "scenario: snr_db must be finite");
        require(channel_scale > 0.0, "scenario: channel_scale must be positive");
        require(max_amp_slope >= 0.0 && max_amp_slope < 0.5, "scenario: max_amp_slope must be in [0, 0.5)");
        require(max_delay >= 0.0, "scenario: max_delay must be >= 0");
        require(t_ramp >= 0.0 && t_ring >= 0.0, "scenario: motor times must be >= 0");
        require(imu.saturation > 0.0, "scenario: imu saturation knee must be positive");
        require(imu.depth >= 0.0, "scenario: imu depth must be non-negative");
        require(imu.acc_noise >= 0.0 && imu.gyro_noise >= 0.0, "scenario: imu noise must be >= 0");
        activity.validate();
        require(!pilots.empty(), "scenario: pilot plan is empty");

        std::set<double> seen;
        for (const auto &p : pilots)
        {
            require(p.tx >= 0 && p.tx < n_tx, "scenario: pilot assigned to a nonexistent TX");
            require(p.carrier_hz > 0.0 && p.carrier_hz < sample_rate / 2.0, "scenario: carrier at or above Nyquist");
            require(seen.insert(p.carrier_hz).second,
                    "scenario: carrier " + format_double(p.carrier_hz) + " Hz used more than once");
        }
        for (double f : data_carriers)
            require(f > 0.0 && f < sample_rate / 2.0, "scenario: data carrier at or above Nyquist");
    }

    std::vector<int> SimScenario::pilot_owner_set(int tx) const
    {
        std::vector<int> out;
        for (std::size_t i = 0; i < pilots.size(); ++i)
            if (pilots[i].tx == tx)
                out.push_back(static_cast<int>(i));
        return out;
    }

    std::vector<double> SimScenario::carriers() const
    {
        std::vector<double> c;
        for (const auto &p : pilots)
            c.push_back(p.carrier_hz);
        for (double f : data_carriers)
            if (std::find(c.begin(), c.end(), f) == c.end())
                c.push_back(f);
        return c;
    }

    MeanResponse SimScenario::mean_response() const
    {
        const mimo::CMatrix ref = reference_channel();
        Gaussian g(derive_seed(seed, {tag_mean}));
        MeanResponse m;
        m.reference_hz = reference_hz;
        m.base.resize(n_rx, n_tx);
        m.amp_slope.resize(n_rx, n_tx);
        m.delay.resize(n_rx, n_tx);
        for (int r = 0; r < n_rx; ++r)
            for (int c = 0; c < n_tx; ++c)
            {
                // Larger arrays tile the reference matrix with a seeded rotation.
                ComplexGain b = ref(r % 2, c % 2);
                if (r >= 2 || c >= 2)
                    b *= std::polar(1.0, two_pi * g.uniform());
                m.base(r, c) = channel_scale * b;
                m.amp_slope(r, c) = max_amp_slope * (2.0 * g.uniform() - 1.0);
                m.delay(r, c) = max_delay * (2.0 * g.uniform() - 1.0);
            }
        return m;
    }

    double SimScenario::noise_std() const
    {
        if (!snr_db)
            return 0.0;
        const MeanResponse m = mean_response();
        double power = 0.0;
        for (const auto &p : pilots)
            for (int r = 0; r < n_rx; ++r)
                power += 0.5 * std::norm(tx_amplitude * m.at(r, p.tx, p.carrier_hz));
        power /= static_cast<double>(pilots.size() * static_cast<std::size_t>(n_rx));
        return std::sqrt(power / std::pow(10.0, *snr_db / 10.0));
    }

    KeyValueConfig SimScenario::to_config() const
    {
        KeyValueConfig c;
        c.set("n_rx", std::int64_t{n_rx});
        c.set("n_tx", std::int64_t{n_tx});
        c.set("pilots", format_pilots(pilots));
        c.set("data_carriers", format_list(data_carriers));
        c.set("sample_rate", sample_rate);
        c.set("duration", duration);
        c.set("snr_db", snr_db ? format_double(*snr_db) : std::string("none"));
        c.set("tx_amplitude", tx_amplitude);
        c.set("activity.name", activity.name);
        c.set("activity.target_coherence", activity.target_coherence);
        c.set("activity.fade_depth", activity.fade_depth);
        c.set("channel.scale", channel_scale);
        c.set("channel.max_amp_slope", max_amp_slope);
        c.set("channel.max_delay", max_delay);
        c.set("channel.reference_hz", reference_hz);
        c.set("channel.oversample", static_cast<std::int64_t>(channel_oversample));
        c.set("motor.t_ramp", t_ramp);
        c.set("motor.t_ring", t_ring);
        c.set("motor.on", std::string(motors_on ? "true" : "false"));
        c.set("window", static_cast<std::int64_t>(window));
        c.set("imu.acc_gain", imu.acc_gain);
        c.set("imu.gyro_gain", imu.gyro_gain);
        c.set("imu.acc_noise", imu.acc_noise);
        c.set("imu.gyro_noise", imu.gyro_noise);
        c.set("imu.saturation", imu.saturation);
        c.set("imu.depth", imu.depth);
        c.set("imu.gravity", imu.gravity);
        c.set("imu.seed", std::to_string(imu.seed));
        c.set("seed", std::to_string(seed));
        return c;
    }

    SimScenario SimScenario::from_config(const KeyValueConfig &c, const SimScenario &base)
    {
        SimScenario s = base;
        if (c.has("subject"))
            s = subject_preset(static_cast<int>(c.get_int("subject", 1)));
        s.n_rx = static_cast<int>(c.get_int("n_rx", s.n_rx));
        s.n_tx = static_cast<int>(c.get_int("n_tx", s.n_tx));
        if (c.has("pilots"))
        {
            s.pilots.clear();
            for (const auto &item : c.get_list("pilots"))
            {
                const auto colon = item.find(':');
                require(colon != std::string::npos, "scenario: pilot entries are <carrier_hz>:<tx>, got " + item);
                Pilot p;
                p.carrier_hz = parse_number(item.substr(0, colon), "pilots");
                p.tx = static_cast<int>(parse_number(item.substr(colon + 1), "pilots"));
                s.pilots.push_back(p);
            }
        }
        if (c.has("data_carriers"))
        {
            s.data_carriers.clear();
            for (const auto &item : c.get_list("data_carriers"))
                s.data_carriers.push_back(parse_number(item, "data_carriers"));
        }
        s.sample_rate = c.get_double("sample_rate", s.sample_rate);
        s.duration = c.get_double("duration", s.duration);
        if (c.has("snr_db"))
        {
            const auto v = c.get_string("snr_db", "none");
            if (v == "none" || v == "inf")
                s.snr_db.reset();
            else
                s.snr_db = c.get_double("snr_db", 0.0);
        }
        s.tx_amplitude = c.get_double("tx_amplitude", s.tx_amplitude);
        if (c.has("activity.name"))
        {
            const auto name = c.get_string("activity.name", "");
            if (name == "resting" || name == "browsing" || name == "typing")
                s.activity = ActivityProfile::preset(name);
            else
                s.activity.name = name;
        }
        s.activity.target_coherence = c.get_double("activity.target_coherence", s.activity.target_coherence);
        s.activity.fade_depth = c.get_double("activity.fade_depth", s.activity.fade_depth);
        s.channel_scale = c.get_double("channel.scale", s.channel_scale);
        s.max_amp_slope = c.get_double("channel.max_amp_slope", s.max_amp_slope);
        s.max_delay = c.get_double("channel.max_delay", s.max_delay);
        s.reference_hz = c.get_double("channel.reference_hz", s.reference_hz);
        s.channel_oversample = static_cast<std::size_t>(c.get_u64("channel.oversample", s.channel_oversample));
        s.t_ramp = c.get_double("motor.t_ramp", s.t_ramp);
        s.t_ring = c.get_double("motor.t_ring", s.t_ring);
        s.motors_on = c.get_bool("motor.on", s.motors_on);
        s.window = static_cast<std::size_t>(c.get_u64("window", s.window));
        s.imu.acc_gain = c.get_double("imu.acc_gain", s.imu.acc_gain);
        s.imu.gyro_gain = c.get_double("imu.gyro_gain", s.imu.gyro_gain);
        s.imu.acc_noise = c.get_double("imu.acc_noise", s.imu.acc_noise);
        s.imu.gyro_noise = c.get_double("imu.gyro_noise", s.imu.gyro_noise);
        s.imu.saturation = c.get_double("imu.saturation", s.imu.saturation);
        s.imu.depth = c.get_double("imu.depth", s.imu.depth);
        s.imu.gravity = c.get_double("imu.gravity", s.imu.gravity);
        s.imu.seed = c.get_u64("imu.seed", s.imu.seed);
        s.seed = c.get_u64("seed", s.seed);
        s.validate();
        return s;
    }

    SimScenario subject_preset(int id)
    {
        SimScenario s;
        s.pilots = {{90.0, 0}, {110.0, 0}, {130.0, 0}, {100.0, 1}, {120.0, 1}, {140.0, 1}};
        s.activity = ActivityProfile::preset("resting");
        if (id == 1)
        {
            s.channel_scale = 5.0;
            s.seed = 1;
        }
        else if (id == 2)
        {
            s.channel_scale = 1.6;
            s.seed = 2;
        }
        else
            throw ValidationError("unknown subject preset: " + std::to_string(id));
        return s;
    }

    SimScenario default_scenario()
    {
        return subject_preset(1);
    }

    // ---- truth --------------------------------------------------------------

    std::size_t TruthSeries::carrier_index(double carrier_hz) const
    {
        for (std::size_t i = 0; i < carriers.size(); ++i)
            if (std::abs(carriers[i] - carrier_hz) < 1e-9)
                return i;
        throw ValidationError("truth: no carrier at " + format_double(carrier_hz) + " Hz");
    }

    mimo::ChannelMatrix TruthSeries::at(std::size_t w, std::size_t carrier) const
    {
        require(w < h.size() && carrier < carriers.size(), "truth: index out of range");
        return mimo::ChannelMatrix(h[w][carrier]);
    }

    void TruthSeries::write_csv(const std::filesystem::path &path) const
    {
        std::ofstream os(path, std::ios::trunc);
        if (!os)
            throw MissingArtifactError("cannot open for writing: " + path.string());
        os << "window_index,carrier_hz,rx,tx,re,im\n";
        char buf[160];
        for (std::size_t w = 0; w < h.size(); ++w)
            for (std::size_t c = 0; c < carriers.size(); ++c)
                for (Eigen::Index r = 0; r < h[w][c].rows(); ++r)
                    for (Eigen::Index t = 0; t < h[w][c].cols(); ++t)
                    {
                        const auto v = h[w][c](r, t);
                        std::snprintf(buf, sizeof buf, "%zu,%s,%ld,%ld,%.17g,%.17g\n", w,
                                      format_double(carriers[c]).c_str(), static_cast<long>(r),
                                      static_cast<long>(t), v.real(), v.imag());
                        os << buf;
                    }
        if (!os)
            throw MissingArtifactError("write failed: " + path.string());
    }

    TruthSeries TruthSeries::read_csv(const std::filesystem::path &path, std::size_t window, double sample_rate)
    {
        std::ifstream is(path);
        if (!is)
            throw MissingArtifactError("cannot open truth file: " + path.string());
        std::string line;
        std::getline(is, line);
        require(line.rfind("window_index,carrier_hz,rx,tx,re,im", 0) == 0, "truth file: unexpected header");

        struct Row
        {
            std::size_t w;
            double f;
            long r, t;
            double re, im;
        };
        std::vector<Row> rows;
        std::vector<double> carriers;
        long max_r = -1, max_t = -1;
        std::size_t max_w = 0;
        while (std::getline(is, line))
        {
            if (line.empty())
                continue;
            Row row{};
            std::istringstream ls(line);
            char c1, c2, c3, c4, c5;
            ls >> row.w >> c1 >> row.f >> c2 >> row.r >> c3 >> row.t >> c4 >> row.re >> c5 >> row.im;
            require(ls && c1 == ',' && c2 == ',' && c3 == ',' && c4 == ',' && c5 == ',', "truth file: bad row: " + line);
            require(row.r >= 0 && row.t >= 0, "truth file: negative index");
            if (std::find(carriers.begin(), carriers.end(), row.f) == carriers.end())
                carriers.push_back(row.f);
            max_r = std::max(max_r, row.r);
            max_t = std::max(max_t, row.t);
            max_w = std::max(max_w, row.w);
            rows.push_back(row);
        }
        require(!rows.empty(), "truth file: no rows");

        TruthSeries ts;
        ts.window = window;
        ts.sample_rate = sample_rate;
        ts.carriers = carriers;
        ts.h.assign(max_w + 1, std::vector<mimo::CMatrix>(carriers.size(), mimo::CMatrix::Zero(max_r + 1, max_t + 1)));
        const auto expected = (max_w + 1) * carriers.size() * static_cast<std::size_t>((max_r + 1) * (max_t + 1));
        require(rows.size() == expected, "truth file: incomplete table");
        for (const auto &row : rows)
        {
            const auto ci = static_cast<std::size_t>(std::find(carriers.begin(), carriers.end(), row.f) - carriers.begin());
            ts.h[row.w][ci](row.r, row.t) = {row.re, row.im};
        }
        return ts;
    }

    // ---- simulation ---------------------------------------------------------

    SimOutput simulate(const SimScenario &sc)
    {
        sc.validate();
        const std::size_t n = sample_count(sc.duration, sc.sample_rate);
        const std::size_t os = oversample_factor(sc);
        const double rate = sc.sample_rate * static_cast<double>(os);
        const MeanResponse mean = sc.mean_response();
        const ChannelProcess proc = evolve_channel(sc.activity, mean, sc.duration, rate, derive_seed(sc.seed, {tag_channel}));

        const MotorSchedule sched = sc.motors_on ? MotorSchedule::always_on(sc.duration) : MotorSchedule::always_off();
        SimOutput out;
        out.motor = motor_envelope(sched, sc.t_ramp, sc.t_ring, sc.sample_rate, sc.duration);
        const auto env = out.motor.samples();

        const std::size_t n_p = sc.pilots.size();
        // Per-sample carrier phasors are shared by RX and IMU synthesis.
        std::vector<ComplexGain> phasor(n_p);
        std::vector<ComplexGain> mu(static_cast<std::size_t>(sc.n_rx) * n_p);
        for (std::size_t p = 0; p < n_p; ++p)
            for (int r = 0; r < sc.n_rx; ++r)
                mu[r * n_p + p] = mean.at(r, sc.pilots[p].tx, sc.pilots[p].carrier_hz);

        // RX synthesis
        const double sigma = sc.noise_std();
        std::vector<std::vector<double>> rx(sc.n_rx, std::vector<double>(n));
        {
            Gaussian g(derive_seed(sc.seed, {tag_rx_noise}));
            for (std::size_t k = 0; k < n; ++k)
            {
                for (std::size_t p = 0; p < n_p; ++p)
                    phasor[p] = std::polar(1.0, dsp::carrier_angle(sc.pilots[p].carrier_hz, k, sc.sample_rate));
                const double drive = env[k] * sc.tx_amplitude;
                for (int r = 0; r < sc.n_rx; ++r)
                {
                    double v = 0.0;
                    if (drive != 0.0)
                        for (std::size_t p = 0; p < n_p; ++p)
                        {
                            const ComplexGain h = mu[r * n_p + p] * (1.0 + proc.fluctuation(r, sc.pilots[p].tx, k * os));
                            v += drive * (h * phasor[p]).imag();
                        }
                    rx[r][k] = v;
                }
                // Noise drawn after the signal, in fixed (sample, rx) order.
                for (int r = 0; r < sc.n_rx; ++r)
                    rx[r][k] += sigma * g();
            }
        }
        for (auto &v : rx)
            out.rx.emplace_back(std::move(v), sc.sample_rate);

        // IMU synthesis: each axis sees every pilot through a fixed coupling whose
        // magnitude and phase are modulated by a saturated mix of the originating
        // TX's subchannel fluctuations.
        {
            const Coupling cp = draw_coupling(sc);
            const double fade = sc.activity.fade_depth;
            const double mix_scale = fade > 0.0 ? sc.imu.depth / fade : 0.0;
            Gaussian g(derive_seed(sc.seed, {tag_imu_noise}));
            std::vector<double> data(n * 6);
            std::vector<ComplexGain> mod(6 * static_cast<std::size_t>(sc.n_tx));
            for (std::size_t k = 0; k < n; ++k)
            {
                for (std::size_t p = 0; p < n_p; ++p)
                    phasor[p] = std::polar(1.0, dsp::carrier_angle(sc.pilots[p].carrier_hz, k, sc.sample_rate));
                for (std::size_t a = 0; a < 6; ++a)
                    for (int t = 0; t < sc.n_tx; ++t)
                    {
                        ComplexGain u{0.0, 0.0};
                        for (int r = 0; r < sc.n_rx; ++r)
                            u += cp.beta[a][t][r] * proc.fluctuation(r, t, k * os) * mix_scale;
                        mod[a * sc.n_tx + t] = 1.0 + saturate(u, sc.imu.saturation);
                    }
                const double drive = env[k] * sc.tx_amplitude;
                for (std::size_t a = 0; a < 6; ++a)
                {
                    double v = 0.0;
                    for (std::size_t p = 0; p < n_p; ++p)
                        v += drive * (cp.kappa[a][p] * mod[a * sc.n_tx + sc.pilots[p].tx] * phasor[p]).imag();
                    if (a == 2)
                        v += sc.imu.gravity;
                    const double noise = a < 3 ? sc.imu.acc_noise : sc.imu.gyro_noise;
                    data[k * 6 + a] = v + noise * g();
                }
            }
            out.imu = ImuStream(sc.sample_rate, 6, std::move(data));
        }

        // Truth: window-mean gains.
        TruthSeries &ts = out.truth;
        ts.window = sc.window;
        ts.sample_rate = sc.sample_rate;
        ts.carriers = sc.carriers();
        const std::size_t n_win = n / sc.window;
        ts.h.resize(n_win);
        for (std::size_t w = 0; w < n_win; ++w)
        {
            mimo::CMatrix mean_eps = mimo::CMatrix::Zero(sc.n_rx, sc.n_tx);
            for (std::size_t k = w * sc.window; k < (w + 1) * sc.window; ++k)
                for (int r = 0; r < sc.n_rx; ++r)
                    for (int t = 0; t < sc.n_tx; ++t)
                        mean_eps(r, t) += proc.fluctuation(r, t, k * os);
            mean_eps /= static_cast<double>(sc.window);
            ts.h[w].resize(ts.carriers.size());
            for (std::size_t c = 0; c < ts.carriers.size(); ++c)
            {
                mimo::CMatrix m(sc.n_rx, sc.n_tx);
                for (int r = 0; r < sc.n_rx; ++r)
                    for (int t = 0; t < sc.n_tx; ++t)
                        m(r, t) = mean.at(r, t, ts.carriers[c]) * (1.0 + mean_eps(r, t));
                ts.h[w][c] = m;
            }
        }
        return out;
    }

    std::optional<double> probe_coherence(const ActivityProfile &profile, const CoherenceProbe &probe,
                                          std::uint64_t seed, double threshold)
    {
        profile.validate();
        require(probe.carrier_hz + probe.band_half_width + probe.transition_width < probe.sample_rate / 2.0,
                "coherence probe: band above Nyquist");
        const std::size_t n = sample_count(probe.duration, probe.sample_rate);
        const auto mean = MeanResponse::flat(mimo::CMatrix::Constant(1, 1, ComplexGain(1.0, 0.0)), probe.carrier_hz);
        const ChannelProcess proc =
            evolve_channel(profile, mean, probe.duration, probe.sample_rate, derive_seed(seed, {tag_channel}));

        std::vector<double> x(n);
        Gaussian g(derive_seed(seed, {tag_rx_noise}));
        const double sigma = probe.snr_db ? std::sqrt(0.5 / std::pow(10.0, *probe.snr_db / 10.0)) : 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            const ComplexGain h = 1.0 + proc.fluctuation(0, 0, k);
            x[k] = (h * std::polar(1.0, dsp::carrier_angle(probe.carrier_hz, k, probe.sample_rate))).imag();
            if (sigma > 0.0)
                x[k] += sigma * g();
        }
        const dsp::Waveform rx(std::move(x), probe.sample_rate);
        const dsp::BandpassSpec bp{probe.carrier_hz - probe.band_half_width, probe.carrier_hz + probe.band_half_width,
                                   probe.transition_width, 60.0};
        const auto fir = dsp::FirFilter::design_bandpass(bp, probe.sample_rate);
        const auto full = fir.apply(rx.samples());
        // Drop the zero-padding transients at both ends.
        const std::size_t guard = std::min(fir.group_delay(), full.size() / 4);
        const dsp::Waveform filtered(std::vector<double>(full.begin() + static_cast<std::ptrdiff_t>(guard),
                                                         full.end() - static_cast<std::ptrdiff_t>(guard)),
                                     probe.sample_rate);
        const dsp::Waveform env = dsp::envelope(filtered, probe.carrier_hz, probe.envelope_hop, probe.envelope_window);
        return dsp::coherence_time(env, threshold).coherence_time;
    }
}
