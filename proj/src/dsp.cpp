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

#include "skinmimo/dsp.hpp"
#include "skinmimo/binio.hpp"
#include "skinmimo/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace skinmimo::dsp
{
    double carrier_angle(double freq, std::size_t k, double sample_rate)
    {
        const double cycles = freq * static_cast<double>(k) / sample_rate;
        return 2.0 * pi * (cycles - std::floor(cycles));
    }

    namespace
    {
        double sinc(double x)
        {
            if (x == 0.0)
                return 1.0;
            return std::sin(pi * x) / (pi * x);
        }

        double kaiser_beta(double attenuation)
        {
            if (attenuation > 50.0)
                return 0.1102 * (attenuation - 8.7);
            if (attenuation >= 21.0)
                return 0.5842 * std::pow(attenuation - 21.0, 0.4) + 0.07886 * (attenuation - 21.0);
            return 0.0;
        }
    }

    double wrap_phase(double radians)
    {
        // already in range: return as is, the shifted fmod below can round up to 2 pi
        if (radians >= -pi && radians < pi)
            return radians;
        double r = std::fmod(radians + pi, 2.0 * pi);
        if (r < 0.0)
            r += 2.0 * pi;
        r -= pi;
        if (r >= pi)
            r -= 2.0 * pi;
        return r;
    }

    Waveform::Waveform(std::vector<double> samples, double sample_rate)
        : samples_(std::move(samples)), sample_rate_(sample_rate)
    {
        require(sample_rate_ > 0.0 && std::isfinite(sample_rate_), "Waveform: sample_rate must be positive");
        for (double s : samples_)
            require(std::isfinite(s), "Waveform: samples must be finite");
    }

    Waveform Waveform::scaled(double factor) const
    {
        std::vector<double> out(samples_);
        for (double &s : out)
            s *= factor;
        return Waveform(std::move(out), sample_rate_);
    }

    Waveform Waveform::plus(const Waveform &other) const
    {
        require(other.size() == size() && other.sample_rate() == sample_rate_, "Waveform::plus: rate/length mismatch");
        std::vector<double> out(samples_);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += other[i];
        return Waveform(std::move(out), sample_rate_);
    }

    double rms(std::span<const double> x)
    {
        if (x.empty())
            return 0.0;
        double acc = 0.0;
        for (double v : x)
            acc += v * v;
        return std::sqrt(acc / static_cast<double>(x.size()));
    }

    double mean_power(const Waveform &w)
    {
        const double r = rms(w.samples());
        return r * r;
    }

    Waveform synth_tone(double freq, double amplitude, double phase, double duration, double sample_rate)
    {
        require(sample_rate > 0.0, "synth_tone: sample_rate must be positive");
        require(freq > 0.0 && freq < sample_rate / 2.0, "synth_tone: frequency must lie in (0, sample_rate/2)");
        require(duration >= 0.0, "synth_tone: duration must be non-negative");
        const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
        std::vector<double> s(n);
        for (std::size_t k = 0; k < n; ++k)
            s[k] = amplitude * std::sin(carrier_angle(freq, k, sample_rate) + phase);
        return Waveform(std::move(s), sample_rate);
    }

    FirFilter::FirFilter(std::vector<double> taps) : taps_(std::move(taps))
    {
        require(!taps_.empty() && taps_.size() % 2 == 1, "FirFilter: tap count must be odd");
    }

    FirFilter FirFilter::design_bandpass(const BandpassSpec &spec, double sample_rate)
    {
        const double nyquist = sample_rate / 2.0;
        require(spec.low_cut > 0.0 && spec.low_cut < spec.high_cut && spec.high_cut < nyquist,
                "bandpass: need 0 < low_cut < high_cut < sample_rate/2");
        require(spec.transition_width > 0.0, "bandpass: transition_width must be positive");
        require(spec.stopband_attenuation > 0.0, "bandpass: stopband_attenuation must be positive");
        const double f1 = spec.low_cut - spec.transition_width / 2.0;
        const double f2 = spec.high_cut + spec.transition_width / 2.0;
        require(f1 > 0.0 && f2 < nyquist, "bandpass: transition bands must fit inside (0, sample_rate/2)");

        const double a = spec.stopband_attenuation;
        const double dw = 2.0 * pi * spec.transition_width / sample_rate;
        auto n = static_cast<std::size_t>(std::ceil((a - 7.95) / (2.285 * dw))) + 1;
        n = std::max<std::size_t>(n, 3);
        if (n % 2 == 0)
            ++n;

        const double beta = kaiser_beta(a);
        const double m = static_cast<double>(n - 1) / 2.0;
        const double i0_beta = std::cyl_bessel_i(0.0, beta);
        const double c1 = f1 / sample_rate;
        const double c2 = f2 / sample_rate;

        std::vector<double> taps(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            const double t = static_cast<double>(i) - m;
            const double ideal = 2.0 * c2 * sinc(2.0 * c2 * t) - 2.0 * c1 * sinc(2.0 * c1 * t);
            const double r = t / m;
            const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
            taps[i] = ideal * window;
        }

        FirFilter filter(std::move(taps));
        const double centre_gain = filter.magnitude_response((spec.low_cut + spec.high_cut) / 2.0, sample_rate);
        for (double &t : filter.taps_)
            t /= centre_gain;
        return filter;
    }

    std::vector<double> FirFilter::apply(std::span<const double> x) const
    {
        const std::size_t n = x.size();
        const std::size_t taps = taps_.size();
        const std::size_t delay = group_delay();
        std::vector<double> y(n, 0.0);
        for (std::size_t k = 0; k < n; ++k)
        {
            // y[k] = sum_i h[i] x[k + delay - i]
            const std::size_t hi = k + delay;
            const std::size_t i_min = hi >= n ? hi - (n - 1) : 0;
            const std::size_t i_max = std::min(taps - 1, hi);
            double acc = 0.0;
            for (std::size_t i = i_min; i <= i_max; ++i)
                acc += taps_[i] * x[hi - i];
            y[k] = acc;
        }
        return y;
    }

    Waveform FirFilter::apply(const Waveform &w) const
    {
        return Waveform(apply(w.samples()), w.sample_rate());
    }

    double FirFilter::magnitude_response(double freq, double sample_rate) const
    {
        double re = 0.0;
        double im = 0.0;
        const double w = 2.0 * pi * freq / sample_rate;
        for (std::size_t i = 0; i < taps_.size(); ++i)
        {
            re += taps_[i] * std::cos(w * static_cast<double>(i));
            im -= taps_[i] * std::sin(w * static_cast<double>(i));
        }
        return std::hypot(re, im);
    }

    Waveform bandpass(const Waveform &w, const BandpassSpec &spec)
    {
        return FirFilter::design_bandpass(spec, w.sample_rate()).apply(w);
    }

    ToneEstimate estimate_tone(const Waveform &w, double freq, std::size_t window_start, std::size_t window_len)
    {
        require(freq > 0.0 && freq < w.sample_rate() / 2.0, "estimate_tone: frequency must lie in (0, sample_rate/2)");
        require(window_start + window_len <= w.size(), "estimate_tone: window exceeds waveform");
        require(static_cast<double>(window_len) >= 2.0 * w.sample_rate() / freq,
                "estimate_tone: window shorter than two carrier cycles");

        double ss = 0.0, cc = 0.0, sc = 0.0, xs = 0.0, xc = 0.0;
        for (std::size_t k = window_start; k < window_start + window_len; ++k)
        {
            const double ang = carrier_angle(freq, k, w.sample_rate());
            const double s = std::sin(ang);
            const double c = std::cos(ang);
            ss += s * s;
            cc += c * c;
            sc += s * c;
            xs += w[k] * s;
            xc += w[k] * c;
        }
        const double det = ss * cc - sc * sc;
        if (!(std::abs(det) > 0.0))
            throw NumericalError("estimate_tone: singular normal equations");
        const double a = (xs * cc - xc * sc) / det; // sine coefficient
        const double b = (xc * ss - xs * sc) / det; // cosine coefficient

        ToneEstimate e;
        e.frequency = freq;
        e.amplitude = std::hypot(a, b);
        e.phase = e.amplitude > 0.0 ? wrap_phase(std::atan2(b, a)) : 0.0;
        return e;
    }

    Waveform envelope(const Waveform &w, double carrier_freq, std::size_t hop, std::size_t window)
    {
        require(hop > 0, "envelope: hop must be positive");
        require(window <= w.size(), "envelope: window longer than waveform");
        std::vector<double> env;
        env.reserve(w.size() / hop + 1);
        for (std::size_t start = 0; start + window <= w.size(); start += hop)
            env.push_back(estimate_tone(w, carrier_freq, start, window).amplitude);
        return Waveform(std::move(env), w.sample_rate() / static_cast<double>(hop));
    }

    std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag)
    {
        const std::size_t n = x.size();
        require(n >= 2, "autocorrelation: need at least two samples");
        max_lag = std::min(max_lag, n - 1);
        double mean = 0.0;
        for (double v : x)
            mean += v;
        mean /= static_cast<double>(n);
        std::vector<double> d(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            d[i] = x[i] - mean;
            var += d[i] * d[i];
        }
        std::vector<double> r(max_lag + 1, 0.0);
        if (!(var > 0.0))
            return r;
        for (std::size_t lag = 0; lag <= max_lag; ++lag)
        {
            double acc = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i)
                acc += d[i] * d[i + lag];
            r[lag] = acc / var;
        }
        return r;
    }

    CoherenceResult coherence_time(const Waveform &env, double threshold, std::size_t max_lag)
    {
        const std::size_t n = env.size();
        require(n >= 2, "coherence_time: envelope needs at least two samples");
        require(threshold > 0.0 && threshold < 1.0, "coherence_time: threshold must lie in (0, 1)");
        if (max_lag == 0)
            max_lag = std::max<std::size_t>(1, n / 2);
        max_lag = std::min(max_lag, n - 1);

        CoherenceResult result;
        result.correlation_threshold = threshold;

        const auto x = env.samples();
        double mean = 0.0;
        for (double v : x)
            mean += v;
        mean /= static_cast<double>(n);
        std::vector<double> d(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            d[i] = x[i] - mean;
            var += d[i] * d[i];
        }
        // Relative to the signal level, so floating-point dust on a constant envelope counts as constant.
        const double scale = mean * mean * static_cast<double>(n);
        if (!(var > 1e-24 * std::max(scale, 1e-300)))
        {
            result.autocorr = {1.0};
            return result;
        }

        auto lag_value = [&](std::size_t lag) {
            double acc = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i)
                acc += d[i] * d[i + lag];
            return acc / var;
        };

        result.autocorr.push_back(1.0);
        std::size_t crossing = 0;
        for (std::size_t lag = 1; lag <= max_lag; ++lag)
        {
            const double r = lag_value(lag);
            result.autocorr.push_back(r);
            if (r < threshold)
            {
                crossing = lag;
                break;
            }
        }
        if (crossing == 0)
            return result;

        // Keep some of the decay tail for plotting.
        const std::size_t tail = std::min(max_lag, 4 * crossing);
        for (std::size_t lag = crossing + 1; lag <= tail; ++lag)
            result.autocorr.push_back(lag_value(lag));

        const double r0 = result.autocorr[crossing - 1];
        const double r1 = result.autocorr[crossing];
        const double frac = (r0 - threshold) / (r0 - r1);
        const double lag = static_cast<double>(crossing - 1) + frac;
        result.coherence_time = lag / env.sample_rate();
        return result;
    }

    void write_waveform_text(const Waveform &w, const std::filesystem::path &path)
    {
        std::ofstream os(path, std::ios::trunc);
        if (!os)
            throw MissingArtifactError("cannot open for writing: " + path.string());
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", w.sample_rate());
        os << "# sample_rate=" << buf << "\n";
        os << "time,value\n";
        for (std::size_t k = 0; k < w.size(); ++k)
        {
            std::snprintf(buf, sizeof buf, "%.17g,", static_cast<double>(k) / w.sample_rate());
            os << buf;
            std::snprintf(buf, sizeof buf, "%.17g", w[k]);
            os << buf << "\n";
        }
    }

    Waveform read_waveform_text(const std::filesystem::path &path)
    {
        std::ifstream is(path);
        if (!is)
            throw MissingArtifactError("cannot open: " + path.string());
        std::string line;
        double rate = 0.0;
        std::vector<double> samples;
        while (std::getline(is, line))
        {
            if (line.empty())
                continue;
            if (line[0] == '#')
            {
                const auto pos = line.find("sample_rate=");
                if (pos != std::string::npos)
                    rate = std::stod(line.substr(pos + 12));
                continue;
            }
            if (line.rfind("time", 0) == 0)
                continue;
            const auto comma = line.find(',');
            require(comma != std::string::npos, "waveform text: malformed row '" + line + "'");
            samples.push_back(std::stod(line.substr(comma + 1)));
        }
        require(rate > 0.0, "waveform text: missing sample_rate header in " + path.string());
        return Waveform(std::move(samples), rate);
    }

    void write_waveform_binary(const Waveform &w, const std::filesystem::path &path)
    {
        auto os = binio::open_out(path);
        binio::put<double>(os, w.sample_rate());
        binio::put<std::uint64_t>(os, w.size());
        for (double s : w.samples())
            binio::put<double>(os, s);
    }

    Waveform read_waveform_binary(const std::filesystem::path &path)
    {
        auto is = binio::open_in(path);
        const double rate = binio::get<double>(is);
        const auto count = binio::get<std::uint64_t>(is);
        std::vector<double> s(count);
        for (auto &v : s)
            v = binio::get<double>(is);
        return Waveform(std::move(s), rate);
    }
}
