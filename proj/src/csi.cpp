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

#include "skinmimo/csi.hpp"
#include "skinmimo/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace skinmimo::csi
{
    std::string to_string(Target t)
    {
        return t == Target::amplitude ? "amp" : "phase";
    }

    Target parse_target(const std::string &s)
    {
        if (s == "amp" || s == "amplitude")
            return Target::amplitude;
        if (s == "phase")
            return Target::phase;
        throw ValidationError("unknown target: " + s);
    }

    void QuantizationScheme::validate() const
    {
        require(amp_levels >= 2 && phase_levels >= 2, "quantization: levels must be >= 2");
        require(std::isfinite(amp_min) && std::isfinite(amp_max) && amp_min < amp_max,
                "quantization: amp_range needs min < max");
    }

    // ---- dictionary ---------------------------------------------------------

    LevelDictionary::LevelDictionary(double lo, double hi, int levels, bool periodic)
        : lo_(lo), hi_(hi), periodic_(periodic)
    {
        require(levels >= 2, "dictionary: levels must be >= 2");
        require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "dictionary: range needs min < max");
        values_.resize(static_cast<std::size_t>(levels));
        const double w = (hi - lo) / levels;
        for (int i = 0; i < levels; ++i)
            values_[static_cast<std::size_t>(i)] = lo + (i + 0.5) * w;
    }

    LevelDictionary LevelDictionary::amplitude(double lo, double hi, int levels)
    {
        return LevelDictionary(lo, hi, levels, false);
    }

    LevelDictionary LevelDictionary::phase(int levels)
    {
        return LevelDictionary(-dsp::pi, dsp::pi, levels, true);
    }

    LevelDictionary LevelDictionary::for_target(Target t, const QuantizationScheme &q)
    {
        q.validate();
        return t == Target::amplitude ? amplitude(q.amp_min, q.amp_max, q.amp_levels) : phase(q.phase_levels);
    }

    int LevelDictionary::quantize(double value) const
    {
        require(std::isfinite(value), "quantize: value must be finite");
        if (periodic_)
            value = dsp::wrap_phase(value);
        const double pos = std::floor((value - lo_) / bin_width());
        return static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(levels() - 1)));
    }

    double LevelDictionary::difference(double a, double b) const
    {
        const double d = a - b;
        if (!periodic_)
            return d;
        // Wrapped to [-pi, pi]: +pi stays +pi so |d| <= pi.
        const double w = dsp::wrap_phase(d);
        return (w == -dsp::pi && d > 0.0) ? dsp::pi : w;
    }

    int quantize(double value, const LevelDictionary &dict)
    {
        return dict.quantize(value);
    }

    // ---- windowing ----------------------------------------------------------

    Blocks Blocks::subset(std::span<const std::size_t> indices) const
    {
        Blocks out;
        out.count = indices.size();
        out.steps = steps;
        out.features = features;
        out.values.reserve(out.count * steps * features);
        for (auto i : indices)
        {
            require(i < count, "Blocks::subset: index out of range");
            const auto b = block(i);
            out.values.insert(out.values.end(), b.begin(), b.end());
        }
        return out;
    }

    Blocks window_imu(const sim::ImuStream &imu, std::size_t window, std::size_t hop)
    {
        require(window >= 1 && hop >= 1, "window_imu: window and hop must be >= 1");
        require(imu.size() >= window, "window_imu: stream shorter than one window");
        Blocks b;
        b.count = (imu.size() - window) / hop + 1;
        b.steps = window;
        b.features = imu.n_axes();
        b.values.resize(b.count * b.steps * b.features);
        const auto data = imu.data();
        for (std::size_t i = 0; i < b.count; ++i)
        {
            const auto src = data.subspan(i * hop * b.features, window * b.features);
            std::copy(src.begin(), src.end(), b.values.begin() + static_cast<std::ptrdiff_t>(i * window * b.features));
        }
        return b;
    }

    Standardizer::Standardizer(std::vector<double> mean, std::vector<double> stddev)
        : mean_(std::move(mean)), std_(std::move(stddev))
    {
        require(mean_.size() == std_.size(), "Standardizer: mean/std length mismatch");
    }

    Standardizer Standardizer::fit(const Blocks &blocks, std::span<const std::size_t> indices)
    {
        require(!indices.empty(), "Standardizer::fit: no training blocks");
        const std::size_t f = blocks.features;
        std::vector<double> sum(f, 0.0), mean(f, 0.0), var(f, 0.0);
        std::size_t n = 0;
        for (auto i : indices)
        {
            const auto b = blocks.block(i);
            for (std::size_t t = 0; t < blocks.steps; ++t)
                for (std::size_t a = 0; a < f; ++a)
                    sum[a] += b[t * f + a];
            n += blocks.steps;
        }
        for (std::size_t a = 0; a < f; ++a)
            mean[a] = sum[a] / static_cast<double>(n);
        for (auto i : indices)
        {
            const auto b = blocks.block(i);
            for (std::size_t t = 0; t < blocks.steps; ++t)
                for (std::size_t a = 0; a < f; ++a)
                {
                    const double d = b[t * f + a] - mean[a];
                    var[a] += d * d;
                }
        }
        std::vector<double> sd(f);
        for (std::size_t a = 0; a < f; ++a)
            sd[a] = std::sqrt(var[a] / static_cast<double>(n));
        return Standardizer(std::move(mean), std::move(sd));
    }

    void Standardizer::apply(Blocks &blocks) const
    {
        require(blocks.features == mean_.size(), "Standardizer: feature count mismatch");
        const std::size_t f = blocks.features;
        for (std::size_t k = 0; k < blocks.values.size(); ++k)
        {
            const std::size_t a = k % f;
            // Relative floor keeps float round-off on a constant axis from being amplified.
            const bool flat = std_[a] <= 1e-12 * std::max(1.0, std::abs(mean_[a]));
            blocks.values[k] = flat ? 0.0 : (blocks.values[k] - mean_[a]) / std_[a];
        }
    }

    sim::ImuStream imu_frontend(const sim::ImuStream &imu, double carrier_hz, const FrontendSpec &spec)
    {
        const dsp::BandpassSpec bp{carrier_hz - spec.half_width, carrier_hz + spec.half_width, spec.transition_width,
                                   spec.attenuation};
        const auto fir = dsp::FirFilter::design_bandpass(bp, imu.sample_rate());
        const std::size_t n = imu.size(), l = imu.n_axes();
        std::vector<double> out(n * l);
        for (std::size_t a = 0; a < l; ++a)
        {
            const auto y = fir.apply(imu.axis(a).samples());
            for (std::size_t i = 0; i < n; ++i)
                out[i * l + a] = y[i];
        }
        return sim::ImuStream(imu.sample_rate(), l, std::move(out));
    }

    FrontendMode parse_frontend_mode(const std::string &s)
    {
        if (s == "demodulate")
            return FrontendMode::demodulate;
        if (s == "bandpass")
            return FrontendMode::bandpass;
        throw ValidationError("unknown frontend mode: " + s);
    }

    std::string to_string(FrontendMode m)
    {
        return m == FrontendMode::demodulate ? "demodulate" : "bandpass";
    }

    sim::ImuStream imu_demodulate(const sim::ImuStream &imu, std::span<const double> carriers, std::size_t window)
    {
        require(window >= 1, "imu_demodulate: window must be >= 1");
        require(!carriers.empty(), "imu_demodulate: no carriers");
        const std::size_t n = imu.size(), na = imu.n_axes(), nc = carriers.size();
        const std::size_t nf = na * nc * 2;
        std::vector<double> out(n * nf, 0.0);
        std::vector<double> cs(n + 1), cc(n + 1);
        const double scale = 2.0 / static_cast<double>(window);
        for (std::size_t c = 0; c < nc; ++c)
        {
            std::vector<double> sn(n), co(n);
            for (std::size_t k = 0; k < n; ++k)
            {
                const double th = dsp::carrier_angle(carriers[c], k, imu.sample_rate());
                sn[k] = std::sin(th);
                co[k] = std::cos(th);
            }
            for (std::size_t a = 0; a < na; ++a)
            {
                // prefix sums make every box O(1)
                cs[0] = cc[0] = 0.0;
                for (std::size_t k = 0; k < n; ++k)
                {
                    const double x = imu.at(k, a);
                    cs[k + 1] = cs[k] + x * sn[k];
                    cc[k + 1] = cc[k] + x * co[k];
                }
                const std::size_t col = (a * nc + c) * 2;
                for (std::size_t k = window / 2; k + window - window / 2 <= n; ++k)
                {
                    const std::size_t lo = k - window / 2, hi = lo + window;
                    out[k * nf + col] = scale * (cs[hi] - cs[lo]);
                    out[k * nf + col + 1] = scale * (cc[hi] - cc[lo]);
                }
            }
        }
        return sim::ImuStream(imu.sample_rate(), nf, std::move(out));
    }

    std::size_t guard_windows(const FrontendSpec &spec, double sample_rate, std::size_t window)
    {
        if (spec.mode == FrontendMode::demodulate)
            return (window / 2 + window - 1) / window + 1;
        // Tap count only depends on the transition width, so any in-band centre works.
        const double centre = sample_rate / 4.0;
        const dsp::BandpassSpec bp{centre - spec.half_width, centre + spec.half_width, spec.transition_width,
                                   spec.attenuation};
        const auto fir = dsp::FirFilter::design_bandpass(bp, sample_rate);
        return (fir.group_delay() + window - 1) / window + 1;
    }

    // ---- metrics ------------------------------------------------------------

    SlotReport metrics(std::span<const int> predictions, std::span<const int> truth, const LevelDictionary &dict)
    {
        require(predictions.size() == truth.size(), "metrics: prediction/truth length mismatch");
        SlotReport r;
        r.n = truth.size();
        const auto levels = static_cast<std::size_t>(dict.levels());
        r.confusion.assign(levels, std::vector<std::size_t>(levels, 0));
        if (r.n == 0)
            return r;
        std::size_t correct = 0;
        double sq = 0.0;
        for (std::size_t i = 0; i < r.n; ++i)
        {
            const int p = predictions[i], g = truth[i];
            require(p >= 0 && p < dict.levels() && g >= 0 && g < dict.levels(), "metrics: level out of range");
            ++r.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)];
            if (p == g)
                ++correct;
            const double d = dict.difference(dict[g], dict[p]);
            sq += d * d;
        }
        r.tpr = static_cast<double>(correct) / static_cast<double>(r.n);
        r.rmse = std::sqrt(sq / static_cast<double>(r.n));
        return r;
    }

    // ---- interpolation ------------------------------------------------------

    CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y))
    {
        require(x_.size() == y_.size() && x_.size() >= 2, "spline: needs >= 2 knots of equal length");
        for (std::size_t i = 1; i < x_.size(); ++i)
            require(x_[i] > x_[i - 1], "spline: knots must be strictly increasing");
        const std::size_t n = x_.size();
        m_.assign(n, 0.0);
        if (n < 3)
            return;
        // Thomas algorithm on the natural-spline tridiagonal system for m_1..m_{n-2}.
        std::vector<double> c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i)
        {
            const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
            const double a = h0, b = 2.0 * (h0 + h1), cc = h1;
            const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
            const double denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for (std::size_t i = n - 2; i >= 1; --i)
        {
            m_[i] = d[i] - c[i] * m_[i + 1];
            if (i == 1)
                break;
        }
    }

    double CubicSpline::operator()(double x) const
    {
        require(std::isfinite(x), "spline: query must be finite");
        require(x >= x_.front() && x <= x_.back(), "spline: query outside the knot span (no extrapolation)");
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.end() ? x_.size() - 2 : static_cast<std::size_t>(it - x_.begin()) - 1;
        i = std::min(i, x_.size() - 2);
        if (x == x_[i])
            return y_[i];
        if (x == x_[i + 1])
            return y_[i + 1];
        const double h = x_[i + 1] - x_[i];
        const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
        return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
    }

    CsiEstimate interpolate_csi(std::span<const PilotObservation> pilots, int n_rx, int n_tx, double data_carrier,
                                double tx_amplitude, double tx_phase)
    {
        require(n_rx >= 1 && n_tx >= 1, "interpolate_csi: bad shape");
        std::map<std::pair<int, int>, std::vector<PilotObservation>> by_link;
        for (const auto &p : pilots)
        {
            require(p.rx >= 0 && p.rx < n_rx && p.tx >= 0 && p.tx < n_tx, "interpolate_csi: pilot index out of range");
            require(std::isfinite(p.amplitude) && std::isfinite(p.phase), "interpolate_csi: non-finite pilot");
            by_link[{p.rx, p.tx}].push_back(p);
        }
        mimo::CMatrix h(n_rx, n_tx);
        for (int r = 0; r < n_rx; ++r)
            for (int t = 0; t < n_tx; ++t)
            {
                auto it = by_link.find({r, t});
                require(it != by_link.end() && it->second.size() >= 3,
                        "interpolate_csi: need >= 3 pilots for rx " + std::to_string(r) + " tx " + std::to_string(t));
                auto obs = it->second;
                std::sort(obs.begin(), obs.end(),
                          [](const auto &a, const auto &b) { return a.carrier_hz < b.carrier_hz; });
                std::vector<double> f, amp, ph;
                for (const auto &o : obs)
                {
                    f.push_back(o.carrier_hz);
                    amp.push_back(o.amplitude);
                    // Unwrap against the previous carrier.
                    ph.push_back(ph.empty() ? o.phase : ph.back() + dsp::wrap_phase(o.phase - ph.back()));
                }
                require(data_carrier >= f.front() && data_carrier <= f.back(),
                        "interpolate_csi: data carrier outside the pilot span of tx " + std::to_string(t));
                const double a = std::max(0.0, CubicSpline(f, amp)(data_carrier));
                const double p = CubicSpline(f, ph)(data_carrier);
                h(r, t) = mimo::channel_response(a, p, tx_amplitude, tx_phase);
            }
        return {data_carrier, mimo::ChannelMatrix(h)};
    }
}
