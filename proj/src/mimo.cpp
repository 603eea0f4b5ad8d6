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

#include "skinmimo/mimo.hpp"
#include "skinmimo/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace skinmimo::mimo
{
    ChannelMatrix::ChannelMatrix(CMatrix entries) : m_(std::move(entries))
    {
        require(m_.rows() > 0 && m_.cols() > 0, "ChannelMatrix: shape must be positive");
        require(m_.allFinite(), "ChannelMatrix: entries must be finite");
    }

    ChannelMatrix::ChannelMatrix(Eigen::Index n_rx, Eigen::Index n_tx, std::initializer_list<ComplexGain> row_major)
    {
        require(n_rx > 0 && n_tx > 0, "ChannelMatrix: shape must be positive");
        require(static_cast<Eigen::Index>(row_major.size()) == n_rx * n_tx, "ChannelMatrix: entry count does not match shape");
        m_.resize(n_rx, n_tx);
        auto it = row_major.begin();
        for (Eigen::Index r = 0; r < n_rx; ++r)
            for (Eigen::Index c = 0; c < n_tx; ++c)
                m_(r, c) = *it++;
        require(m_.allFinite(), "ChannelMatrix: entries must be finite");
    }

    ChannelMatrix ChannelMatrix::identity(Eigen::Index n)
    {
        return ChannelMatrix(CMatrix::Identity(n, n));
    }

    ChannelMatrix ChannelMatrix::zero(Eigen::Index n_rx, Eigen::Index n_tx)
    {
        return ChannelMatrix(CMatrix::Zero(n_rx, n_tx));
    }

    ChannelMatrix ChannelMatrix::scaled(ComplexGain factor) const
    {
        return ChannelMatrix(m_ * factor);
    }

    ComplexGain channel_response(double a_rx, double theta_rx, double a_tx, double theta_tx)
    {
        if (a_tx == 0.0)
            throw DomainError("channel_response: reference amplitude is zero");
        require(std::isfinite(a_rx) && std::isfinite(a_tx) && std::isfinite(theta_rx) && std::isfinite(theta_tx),
                "channel_response: non-finite input");
        return std::polar(a_rx / a_tx, theta_rx - theta_tx);
    }

    SvdDecomposition svd(const ChannelMatrix &h)
    {
        const CMatrix &m = h.matrix();
        require(m.size() > 0 && m.allFinite(), "svd: input must be non-empty and finite");

        Eigen::JacobiSVD<CMatrix> solver(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
        SvdDecomposition out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
        return out;
    }

    std::vector<double> gram_eigenvalues(const ChannelMatrix &h)
    {
        const auto d = svd(h);
        std::vector<double> out(static_cast<std::size_t>(d.sigma.size()));
        for (Eigen::Index i = 0; i < d.sigma.size(); ++i)
            out[static_cast<std::size_t>(i)] = d.sigma(i) * d.sigma(i);
        return out;
    }

    double condition_number_db(const ChannelMatrix &h, DbConvention convention)
    {
        const auto lambda = gram_eigenvalues(h);
        const double lmax = lambda.front();
        const double lmin = lambda.back();
        if (!(lmin > 0.0) || rank(h) < static_cast<int>(lambda.size()))
            return std::numeric_limits<double>::infinity();
        const double factor = convention == DbConvention::power ? 10.0 : 20.0;
        return factor * std::log10(lmax / lmin);
    }

    int rank(const ChannelMatrix &h, double tol)
    {
        require(tol > 0.0, "rank: tolerance must be positive");
        const auto d = svd(h);
        const double smax = d.sigma.size() ? d.sigma(0) : 0.0;
        if (smax == 0.0)
            return 0;
        int n = 0;
        for (Eigen::Index i = 0; i < d.sigma.size(); ++i)
            if (d.sigma(i) > tol * smax)
                ++n;
        return n;
    }

    PrecodingPair svd_precoding(const ChannelMatrix &h_est)
    {
        const auto d = svd(h_est);
        const Eigen::Index streams = std::min(h_est.n_rx(), h_est.n_tx());
        return {d.v.leftCols(streams), d.u.leftCols(streams).adjoint()};
    }

    PrecodingPair identity_precoding(Eigen::Index n_rx, Eigen::Index n_tx)
    {
        const Eigen::Index streams = std::min(n_rx, n_tx);
        return {CMatrix::Identity(n_tx, streams), CMatrix::Identity(streams, n_rx)};
    }

    EffectiveChannel effective_channel(const PrecodingPair &pair, const ChannelMatrix &h_true)
    {
        require(pair.precoder.rows() == h_true.n_tx() && pair.decoder.cols() == h_true.n_rx(),
                "effective_channel: precoder/decoder shape does not match channel");
        EffectiveChannel e{pair.decoder * h_true.matrix() * pair.precoder};
        if (!e.phi.allFinite())
            throw NumericalError("effective_channel: non-finite result");
        return e;
    }

    std::vector<double> stream_sinr(const EffectiveChannel &phi, double snr_per_stream)
    {
        const CMatrix &p = phi.phi;
        require(p.rows() == p.cols(), "stream_sinr: effective channel must be square");
        std::vector<double> out(static_cast<std::size_t>(p.rows()));
        for (Eigen::Index i = 0; i < p.rows(); ++i)
        {
            double interference = 0.0;
            for (Eigen::Index j = 0; j < p.cols(); ++j)
                if (j != i)
                    interference += std::norm(p(i, j));
            out[static_cast<std::size_t>(i)] = std::norm(p(i, i)) * snr_per_stream / (interference * snr_per_stream + 1.0);
        }
        return out;
    }

    double capacity(const EffectiveChannel &phi, double snr, int n_tx)
    {
        require(snr > 0.0, "capacity: snr must be positive");
        require(n_tx > 0, "capacity: n_tx must be positive");
        double c = 0.0;
        for (double s : stream_sinr(phi, snr / n_tx))
            c += std::log2(1.0 + s);
        return c;
    }

    double effective_capacity(const ChannelMatrix &h_true, const ChannelMatrix &h_est, double snr, int n_tx)
    {
        require(h_true.n_rx() == h_est.n_rx() && h_true.n_tx() == h_est.n_tx(),
                "effective_capacity: h_true and h_est shapes differ");
        return capacity(effective_channel(svd_precoding(h_est), h_true), snr, n_tx);
    }

    double open_loop_capacity(const ChannelMatrix &h_true, double snr, int n_tx)
    {
        return capacity(effective_channel(identity_precoding(h_true.n_rx(), h_true.n_tx()), h_true), snr, n_tx);
    }

    double siso_capacity(const ChannelMatrix &h, double snr)
    {
        require(snr > 0.0, "siso_capacity: snr must be positive");
        const CMatrix &m = h.matrix();
        double sum = 0.0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                sum += std::log2(1.0 + std::norm(m(r, c)) * snr);
        return sum / static_cast<double>(m.size());
    }

    double sounding_overhead(const SoundingBudget &b, OverheadMode mode)
    {
        require(b.t_ramp >= 0 && b.t_ring >= 0 && b.t_sound >= 0 && b.t_feedback >= 0 && b.t_coherence >= 0,
                "SoundingBudget: times must be non-negative");
        if (mode == OverheadMode::ramp_plus_sounding)
            return b.t_ramp + b.t_sound;
        return 2.0 * b.t_ramp + b.t_ring + b.t_sound + b.t_feedback;
    }

    double sounding_overhead_factor(const SoundingBudget &b, OverheadMode mode)
    {
        const double overhead = sounding_overhead(b, mode);
        require(b.t_coherence > 0.0, "sounding_overhead_factor: coherence time must be positive");
        return std::clamp((b.t_coherence - overhead) / b.t_coherence, 0.0, 1.0);
    }
}
