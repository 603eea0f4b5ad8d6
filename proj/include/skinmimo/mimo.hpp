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

#ifndef SKINMIMO_MIMO_HPP
#define SKINMIMO_MIMO_HPP

#include <Eigen/Dense>

#include <complex>
#include <vector>

// Small-system MIMO linear algebra: channel responses, SVD precoding,
// per-stream SINR / capacity, channel diagnostics and sounding overhead.
namespace skinmimo::mimo
{
    using ComplexGain = std::complex<double>;
    using CMatrix = Eigen::MatrixXcd;

    // Complex n_rx x n_tx matrix of subchannel responses h_mn (row = RX, column = TX).
    class ChannelMatrix
    {
    public:
        ChannelMatrix() = default;
        explicit ChannelMatrix(CMatrix entries); // throws ValidationError on empty / non-finite
        ChannelMatrix(Eigen::Index n_rx, Eigen::Index n_tx, std::initializer_list<ComplexGain> row_major);

        static ChannelMatrix identity(Eigen::Index n);
        static ChannelMatrix zero(Eigen::Index n_rx, Eigen::Index n_tx);

        Eigen::Index n_rx() const { return m_.rows(); }
        Eigen::Index n_tx() const { return m_.cols(); }
        ComplexGain operator()(Eigen::Index rx, Eigen::Index tx) const { return m_(rx, tx); }
        const CMatrix &matrix() const { return m_; }

        ChannelMatrix scaled(ComplexGain factor) const;

    private:
        CMatrix m_;
    };

    struct SvdDecomposition
    {
        CMatrix u;             // n_rx x n_rx, unitary
        Eigen::VectorXd sigma; // min(n_rx, n_tx), descending, >= 0
        CMatrix v;             // n_tx x n_tx, unitary
    };

    // W (n_tx x n_streams) applied at the transmitter, Gamma (n_streams x n_rx) at the receiver.
    struct PrecodingPair
    {
        CMatrix precoder;
        CMatrix decoder;
    };

    // Phi = Gamma * H * W
    struct EffectiveChannel
    {
        CMatrix phi;
    };

    // Time budget of one sounding exchange inside a coherence window [s].
    struct SoundingBudget
    {
        double t_ramp = 0.0;
        double t_ring = 0.0;
        double t_sound = 0.0;
        double t_feedback = 0.0;
        double t_coherence = 0.0;
    };

    enum class OverheadMode
    {
        full_exchange,      // 2 t_ramp + t_ring + t_sound + t_feedback
        ramp_plus_sounding, // t_ramp + t_sound
    };

    // Which dB mapping is applied to the Gram eigenvalue ratio.
    enum class DbConvention
    {
        power,     // 10 log10(lambda_max / lambda_min)
        amplitude, // 20 log10(lambda_max / lambda_min)
    };

    ComplexGain channel_response(double a_rx, double theta_rx, double a_tx, double theta_tx);

    SvdDecomposition svd(const ChannelMatrix &h);

    // Eigenvalues of H^H H, i.e. squared singular values, descending.
    std::vector<double> gram_eigenvalues(const ChannelMatrix &h);

    // Returns +infinity for a rank-deficient matrix.
    double condition_number_db(const ChannelMatrix &h, DbConvention convention = DbConvention::power);

    int rank(const ChannelMatrix &h, double tol = 1e-6);

    PrecodingPair svd_precoding(const ChannelMatrix &h_est);
    PrecodingPair identity_precoding(Eigen::Index n_rx, Eigen::Index n_tx);

    EffectiveChannel effective_channel(const PrecodingPair &pair, const ChannelMatrix &h_true);

    // SINR_i = |phi_ii|^2 s / (sum_{j != i} |phi_ij|^2 s + 1)
    std::vector<double> stream_sinr(const EffectiveChannel &phi, double snr_per_stream);

    double capacity(const EffectiveChannel &phi, double snr, int n_tx);

    // Precoder/decoder from svd(h_est), evaluated on h_true with per-stream SNR snr / n_tx.
    double effective_capacity(const ChannelMatrix &h_true, const ChannelMatrix &h_est, double snr, int n_tx);

    // Identity precoder and decoder, no CSI.
    double open_loop_capacity(const ChannelMatrix &h_true, double snr, int n_tx);

    // Mean over subchannels of log2(1 + |h_mn|^2 snr).
    double siso_capacity(const ChannelMatrix &h, double snr);

    // Fraction of the coherence window left for data, clamped to [0, 1].
    double sounding_overhead_factor(const SoundingBudget &b, OverheadMode mode = OverheadMode::full_exchange);
    double sounding_overhead(const SoundingBudget &b, OverheadMode mode = OverheadMode::full_exchange);
}

#endif
