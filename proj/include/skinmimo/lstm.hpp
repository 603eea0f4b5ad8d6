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

#ifndef SKINMIMO_LSTM_HPP
#define SKINMIMO_LSTM_HPP

#include "skinmimo/error.hpp"
#include "skinmimo/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Single-layer LSTM sequence classifier: final hidden state -> dropout -> dense -> softmax.
//
//   z_t = W x_t + U h_{t-1} + b          gates stacked [i; f; g; o], each H rows
//   c_t = sigmoid(f) * c_{t-1} + sigmoid(i) * tanh(g)
//   h_t = sigmoid(o) * tanh(c_t)
//   p   = softmax(V dropout(h_T) + c)
//
// Parameters live in one flat vector in the order W, U, b, V, c (column-major blocks)
// so the optimizer and checkpoints treat them uniformly.
namespace skinmimo::lstm
{
    struct Shape
    {
        std::size_t input = 1;   // L
        std::size_t hidden = 128; // H
        std::size_t classes = 2; // C

        std::size_t parameter_count() const
        {
            return 4 * hidden * input + 4 * hidden * hidden + 4 * hidden + classes * hidden + classes;
        }
        bool operator==(const Shape &) const = default;
    };

    // 64-byte aligned so Eigen's vectorized loops split the same way on every run
    template <typename T>
    using Params = std::vector<T, Eigen::aligned_allocator<T>>;

    template <typename T>
    class Model
    {
    public:
        using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
        using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
        using MatMap = Eigen::Map<Mat>;
        using CMatMap = Eigen::Map<const Mat>;
        using VecMap = Eigen::Map<Vec>;
        using CVecMap = Eigen::Map<const Vec>;

        Model() = default;
        Model(Shape shape, double dropout = 0.5) : shape_(shape), dropout_(dropout), theta_(shape.parameter_count(), T(0))
        {
            require(shape.input >= 1 && shape.hidden >= 1 && shape.classes >= 2, "lstm: bad shape");
            require(dropout >= 0.0 && dropout < 1.0, "lstm: dropout must be in [0, 1)");
        }

        const Shape &shape() const { return shape_; }
        double dropout() const { return dropout_; }
        Params<T> &parameters() { return theta_; }
        const Params<T> &parameters() const { return theta_; }

        // Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except forget gate = 1.
        void initialize(std::uint64_t seed)
        {
            Gaussian g(seed);
            const double k = 1.0 / std::sqrt(static_cast<double>(shape_.hidden));
            for (auto &p : theta_)
                p = static_cast<T>(k * (2.0 * g.uniform() - 1.0));
            auto bias = b(theta_);
            bias.setZero();
            bias.segment(shape_.hidden, shape_.hidden).setOnes();
            c(theta_).setZero();
        }

        // Views into a flat parameter (or gradient) vector of this shape.
        MatMap W(Params<T> &v) const { return MatMap(v.data() + off_w(), 4 * H(), L()); }
        MatMap U(Params<T> &v) const { return MatMap(v.data() + off_u(), 4 * H(), H()); }
        VecMap b(Params<T> &v) const { return VecMap(v.data() + off_b(), 4 * H()); }
        MatMap V(Params<T> &v) const { return MatMap(v.data() + off_v(), C(), H()); }
        VecMap c(Params<T> &v) const { return VecMap(v.data() + off_c(), C()); }
        CMatMap W(const Params<T> &v) const { return CMatMap(v.data() + off_w(), 4 * H(), L()); }
        CMatMap U(const Params<T> &v) const { return CMatMap(v.data() + off_u(), 4 * H(), H()); }
        CVecMap b(const Params<T> &v) const { return CVecMap(v.data() + off_b(), 4 * H()); }
        CMatMap V(const Params<T> &v) const { return CMatMap(v.data() + off_v(), C(), H()); }
        CVecMap c(const Params<T> &v) const { return CVecMap(v.data() + off_c(), C()); }

        // Inputs: one matrix L x B per timestep (column = sequence in the batch).
        struct Cache
        {
            std::vector<Mat> x, i, f, g, o, c, tc, h; // h[0], c[0] are the zero initial state
            Mat mask;                                 // H x B dropout multipliers
            Mat probs;                                // C x B
        };

        // Eval mode when mask_rng is null.
        Mat forward(const std::vector<Mat> &xs, Cache *cache = nullptr, Gaussian *mask_rng = nullptr) const
        {
            require(!xs.empty(), "lstm: empty sequence");
            const Eigen::Index batch = xs.front().cols();
            const auto Wm = W(theta_);
            const auto Um = U(theta_);
            const auto bv = b(theta_);
            const auto h_ = static_cast<Eigen::Index>(H());
            Mat h = Mat::Zero(h_, batch), cs = Mat::Zero(h_, batch);
            if (cache)
            {
                *cache = Cache{};
                cache->h.push_back(h);
                cache->c.push_back(cs);
            }
            Mat z(4 * h_, batch);
            for (const auto &x : xs)
            {
                require(static_cast<std::size_t>(x.rows()) == L() && x.cols() == batch, "lstm: input shape mismatch");
                z.noalias() = Wm * x;
                z.noalias() += Um * h;
                z.colwise() += bv;
                Mat ig = sigmoid(z.topRows(h_));
                Mat fg = sigmoid(z.middleRows(h_, h_));
                Mat gg = z.middleRows(2 * h_, h_).array().tanh().matrix();
                Mat og = sigmoid(z.bottomRows(h_));
                cs = (fg.array() * cs.array() + ig.array() * gg.array()).matrix();
                Mat tc = cs.array().tanh().matrix();
                h = (og.array() * tc.array()).matrix();
                if (cache)
                {
                    cache->x.push_back(x);
                    cache->i.push_back(std::move(ig));
                    cache->f.push_back(std::move(fg));
                    cache->g.push_back(std::move(gg));
                    cache->o.push_back(std::move(og));
                    cache->c.push_back(cs);
                    cache->tc.push_back(std::move(tc));
                    cache->h.push_back(h);
                }
            }
            Mat d = h;
            if (mask_rng && dropout_ > 0.0)
            {
                Mat mask(h_, batch);
                const T keep = static_cast<T>(1.0 / (1.0 - dropout_));
                for (Eigen::Index j = 0; j < batch; ++j)
                    for (Eigen::Index r = 0; r < h_; ++r)
                        mask(r, j) = mask_rng->uniform() < dropout_ ? T(0) : keep;
                d = (d.array() * mask.array()).matrix();
                if (cache)
                    cache->mask = std::move(mask);
            }
            else if (cache)
                cache->mask = Mat::Ones(h_, batch);
            Mat logits = V(theta_) * d;
            logits.colwise() += c(theta_);
            Mat p = softmax(logits);
            if (cache)
                cache->probs = p;
            return p;
        }

        // Mean cross-entropy over the batch.
        static double loss(const Mat &probs, std::span<const int> labels)
        {
            double s = 0.0;
            for (Eigen::Index j = 0; j < probs.cols(); ++j)
                s -= std::log(std::max<double>(static_cast<double>(probs(labels[static_cast<std::size_t>(j)], j)), 1e-300));
            return s / static_cast<double>(probs.cols());
        }

        // Gradient of the mean cross-entropy for the batch held in `cache`.
        Params<T> backward(const Cache &cache, std::span<const int> labels) const
        {
            const auto h_ = static_cast<Eigen::Index>(H());
            const Eigen::Index batch = cache.probs.cols();
            require(static_cast<std::size_t>(batch) == labels.size(), "lstm: label count mismatch");
            Params<T> grad(theta_.size(), T(0));
            auto dW = W(grad);
            auto dU = U(grad);
            auto db = b(grad);
            auto dV = V(grad);
            auto dc = c(grad);

            Mat dlogits = cache.probs;
            for (Eigen::Index j = 0; j < batch; ++j)
            {
                const int y = labels[static_cast<std::size_t>(j)];
                require(y >= 0 && static_cast<std::size_t>(y) < C(), "lstm: label out of range");
                dlogits(y, j) -= T(1);
            }
            dlogits /= static_cast<T>(batch);

            const std::size_t steps = cache.x.size();
            const Mat d = (cache.h[steps].array() * cache.mask.array()).matrix();
            dV.noalias() += dlogits * d.transpose();
            dc += dlogits.rowwise().sum();

            Mat dh = ((V(theta_).transpose() * dlogits).array() * cache.mask.array()).matrix();
            Mat dcs = Mat::Zero(h_, batch);
            Mat dz(4 * h_, batch);
            const auto Um = U(theta_);
            for (std::size_t t = steps; t-- > 0;)
            {
                const auto &ig = cache.i[t], &fg = cache.f[t], &gg = cache.g[t], &og = cache.o[t], &tc = cache.tc[t];
                const auto &c_prev = cache.c[t];
                dcs.array() += dh.array() * og.array() * (T(1) - tc.array().square());
                dz.topRows(h_) = (dcs.array() * gg.array() * ig.array() * (T(1) - ig.array())).matrix();
                dz.middleRows(h_, h_) = (dcs.array() * c_prev.array() * fg.array() * (T(1) - fg.array())).matrix();
                dz.middleRows(2 * h_, h_) = (dcs.array() * ig.array() * (T(1) - gg.array().square())).matrix();
                dz.bottomRows(h_) = (dh.array() * tc.array() * og.array() * (T(1) - og.array())).matrix();
                dW.noalias() += dz * cache.x[t].transpose();
                dU.noalias() += dz * cache.h[t].transpose();
                db += dz.rowwise().sum();
                dh.noalias() = Um.transpose() * dz;
                dcs = (dcs.array() * fg.array()).matrix();
            }
            return grad;
        }

    private:
        std::size_t L() const { return shape_.input; }
        std::size_t H() const { return shape_.hidden; }
        std::size_t C() const { return shape_.classes; }
        std::size_t off_w() const { return 0; }
        std::size_t off_u() const { return off_w() + 4 * H() * L(); }
        std::size_t off_b() const { return off_u() + 4 * H() * H(); }
        std::size_t off_v() const { return off_b() + 4 * H(); }
        std::size_t off_c() const { return off_v() + C() * H(); }

        template <typename Derived>
        static Mat sigmoid(const Eigen::MatrixBase<Derived> &z)
        {
            return (T(1) / (T(1) + (-z.array()).exp())).matrix();
        }

        static Mat softmax(const Mat &logits)
        {
            Mat p = logits;
            for (Eigen::Index j = 0; j < p.cols(); ++j)
            {
                const T m = p.col(j).maxCoeff();
                p.col(j) = (p.col(j).array() - m).exp().matrix();
                p.col(j) /= p.col(j).sum();
            }
            return p;
        }

        Shape shape_;
        double dropout_ = 0.5;
        Params<T> theta_;
    };

    // Adam with bias correction.
    template <typename T>
    class Adam
    {
    public:
        Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
            : b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0)
        {
        }

        void step(Params<T> &theta, const Params<T> &grad, double lr)
        {
            require(theta.size() == m_.size() && grad.size() == m_.size(), "adam: size mismatch");
            ++t_;
            const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
            const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
            for (std::size_t k = 0; k < theta.size(); ++k)
            {
                const double g = static_cast<double>(grad[k]);
                m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
                v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
                const double mh = m_[k] / c1, vh = v_[k] / c2;
                theta[k] = static_cast<T>(static_cast<double>(theta[k]) - lr * mh / (std::sqrt(vh) + eps_));
            }
        }

        std::uint64_t steps() const { return t_; }

    private:
        double b1_, b2_, eps_;
        std::uint64_t t_ = 0;
        std::vector<double> m_, v_;
    };

    // Copy a model to another scalar type.
    template <typename To, typename From>
    Model<To> convert(const Model<From> &m)
    {
        Model<To> out(m.shape(), m.dropout());
        for (std::size_t k = 0; k < m.parameters().size(); ++k)
            out.parameters()[k] = static_cast<To>(m.parameters()[k]);
        return out;
    }
}

#endif
