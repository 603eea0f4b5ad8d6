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

#include "skinmimo/train.hpp"
#include "skinmimo/binio.hpp"
#include "skinmimo/error.hpp"
#include "skinmimo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace skinmimo::train
{
    namespace
    {
        using Mat = lstm::Model<float>::Mat;

        constexpr char magic[8] = {'S', 'K', 'M', 'L', 'S', 'T', 'M', '\0'};
        constexpr std::uint32_t checkpoint_version = 1;

        // Fisher-Yates with our own engine so the order does not depend on the
        // standard library's shuffle.
        void shuffle(std::vector<std::size_t> &v, Gaussian &g)
        {
            for (std::size_t i = v.size(); i > 1; --i)
            {
                const auto j = static_cast<std::size_t>(g.engine()() % i);
                std::swap(v[i - 1], v[j]);
            }
        }

        // Standardized values as float, laid out like Blocks.
        std::vector<float> standardized(const csi::Blocks &blocks, const csi::Standardizer &s)
        {
            csi::Blocks copy = blocks;
            s.apply(copy);
            return std::vector<float>(copy.values.begin(), copy.values.end());
        }

        std::vector<Mat> gather(const std::vector<float> &values, std::size_t steps, std::size_t features,
                                std::span<const std::size_t> idx)
        {
            const auto b = static_cast<Eigen::Index>(idx.size());
            std::vector<Mat> xs(steps, Mat(static_cast<Eigen::Index>(features), b));
            for (Eigen::Index j = 0; j < b; ++j)
            {
                const float *src = values.data() + idx[static_cast<std::size_t>(j)] * steps * features;
                for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t a = 0; a < features; ++a)
                        xs[t](static_cast<Eigen::Index>(a), j) = src[t * features + a];
            }
            return xs;
        }
    }

    FoldMode parse_fold_mode(const std::string &s)
    {
        if (s == "shuffled")
            return FoldMode::shuffled;
        if (s == "blocked")
            return FoldMode::blocked;
        throw ValidationError("unknown fold mode: " + s);
    }

    std::string to_string(FoldMode m)
    {
        return m == FoldMode::shuffled ? "shuffled" : "blocked";
    }

    void TrainConfig::validate() const
    {
        require(batch_size >= 1, "train: batch_size must be >= 1");
        require(std::isfinite(learning_rate) && learning_rate > 0.0, "train: learning rate must be positive");
        require(epochs >= 1, "train: epochs must be >= 1");
        require(folds >= 2, "train: folds must be >= 2");
        require(eval_folds >= 1 && eval_folds <= folds, "train: eval_folds must be in [1, folds]");
        require(hidden >= 1, "train: hidden must be >= 1");
        require(dropout >= 0.0 && dropout < 1.0, "train: dropout must be in [0, 1)");
    }

    std::vector<std::vector<std::size_t>> make_folds(std::span<const int> key, std::size_t k, FoldMode mode,
                                                     std::uint64_t seed)
    {
        const std::size_t n = key.size();
        require(k >= 2 && n >= k, "make_folds: need at least k windows");
        std::vector<std::vector<std::size_t>> folds(k);
        if (mode == FoldMode::blocked)
        {
            for (std::size_t f = 0; f < k; ++f)
                for (std::size_t i = f * n / k; i < (f + 1) * n / k; ++i)
                    folds[f].push_back(i);
            return folds;
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Gaussian g(seed);
        shuffle(order, g);
        // Stable sort by key keeps the shuffled order within each stratum;
        // dealing round-robin spreads every stratum evenly over the folds.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
        for (std::size_t r = 0; r < n; ++r)
            folds[r % k].push_back(order[r]);
        for (auto &f : folds)
            std::sort(f.begin(), f.end());
        return folds;
    }

    std::vector<std::size_t> complement(std::span<const std::size_t> subset, std::size_t n)
    {
        std::vector<char> in(n, 0);
        for (auto i : subset)
        {
            require(i < n, "complement: index out of range");
            in[i] = 1;
        }
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n; ++i)
            if (!in[i])
                out.push_back(i);
        return out;
    }

    FitResult fit(const csi::Blocks &blocks, std::span<const int> labels, std::size_t n_classes,
                  std::span<const std::size_t> train_idx, const TrainConfig &cfg, std::uint64_t seed)
    {
        cfg.validate();
        require(labels.size() == blocks.count, "fit: one label per block required");
        require(!train_idx.empty(), "fit: empty training split");
        for (auto i : train_idx)
            require(i < blocks.count, "fit: training index out of range");

        FitResult res;
        res.classifier.scaler = csi::Standardizer::fit(blocks, train_idx);
        const auto values = standardized(blocks, res.classifier.scaler);

        auto &model = res.classifier.model;
        model = lstm::Model<float>({blocks.features, cfg.hidden, n_classes}, cfg.dropout);
        model.initialize(derive_seed(seed, {1}));
        lstm::Adam<float> opt(model.parameters().size());
        Gaussian order_rng(derive_seed(seed, {2}));
        Gaussian mask_rng(derive_seed(seed, {3}));

        std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
        std::vector<int> batch_labels;
        lstm::Model<float>::Cache cache;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch)
        {
            double lr = cfg.learning_rate;
            if (cfg.cosine_schedule)
                lr *= 0.5 * (1.0 + std::cos(dsp::pi * static_cast<double>(epoch) / static_cast<double>(cfg.epochs)));
            shuffle(order, order_rng);
            double loss_sum = 0.0;
            std::size_t seen = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size)
            {
                const std::size_t end = std::min(order.size(), start + cfg.batch_size);
                const std::span<const std::size_t> idx(order.data() + start, end - start);
                batch_labels.resize(idx.size());
                for (std::size_t j = 0; j < idx.size(); ++j)
                    batch_labels[j] = labels[idx[j]];
                const auto xs = gather(values, blocks.steps, blocks.features, idx);
                const Mat p = model.forward(xs, &cache, &mask_rng);
                loss_sum += lstm::Model<float>::loss(p, batch_labels) * static_cast<double>(idx.size());
                seen += idx.size();
                const auto grad = model.backward(cache, batch_labels);
                opt.step(model.parameters(), grad, lr);
            }
            const double mean_loss = loss_sum / static_cast<double>(seen);
            if (!std::isfinite(mean_loss))
                throw NumericalError("training diverged (non-finite loss)");
            res.epoch_loss.push_back(mean_loss);
        }
        return res;
    }

    std::vector<int> predict(const Classifier &c, const csi::Blocks &blocks, std::span<const std::size_t> indices)
    {
        const auto values = standardized(blocks, c.scaler);
        std::vector<int> out;
        out.reserve(indices.size());
        constexpr std::size_t chunk = 256;
        for (std::size_t start = 0; start < indices.size(); start += chunk)
        {
            const std::size_t end = std::min(indices.size(), start + chunk);
            const std::span<const std::size_t> idx(indices.data() + start, end - start);
            for (auto i : idx)
                require(i < blocks.count, "predict: index out of range");
            const Mat p = c.model.forward(gather(values, blocks.steps, blocks.features, idx));
            for (Eigen::Index j = 0; j < p.cols(); ++j)
            {
                Eigen::Index best = 0;
                p.col(j).maxCoeff(&best);
                out.push_back(static_cast<int>(best));
            }
        }
        return out;
    }

    std::vector<double> predict_proba(const Classifier &c, std::span<const double> block, std::size_t steps)
    {
        csi::Blocks b;
        b.count = 1;
        b.steps = steps;
        b.features = c.model.shape().input;
        require(block.size() == steps * b.features, "predict_proba: block shape mismatch");
        b.values.assign(block.begin(), block.end());
        const auto values = standardized(b, c.scaler);
        const std::size_t idx = 0;
        const Mat p = c.model.forward(gather(values, steps, b.features, std::span<const std::size_t>(&idx, 1)));
        std::vector<double> out(static_cast<std::size_t>(p.rows()));
        for (Eigen::Index r = 0; r < p.rows(); ++r)
            out[static_cast<std::size_t>(r)] = static_cast<double>(p(r, 0));
        return out;
    }

    void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path)
    {
        auto os = binio::open_out(path);
        os.write(magic, sizeof magic);
        binio::put<std::uint32_t>(os, checkpoint_version);
        const auto &m = ck.classifier.model;
        binio::put<std::uint64_t>(os, m.shape().input);
        binio::put<std::uint64_t>(os, m.shape().hidden);
        binio::put<std::uint64_t>(os, m.shape().classes);
        binio::put<std::uint64_t>(os, ck.steps);
        binio::put<double>(os, m.dropout());
        const auto &mean = ck.classifier.scaler.mean();
        const auto &sd = ck.classifier.scaler.stddev();
        binio::put<std::uint64_t>(os, mean.size());
        for (double v : mean)
            binio::put<double>(os, v);
        for (double v : sd)
            binio::put<double>(os, v);
        binio::put<std::uint8_t>(os, ck.dictionary.periodic() ? 1 : 0);
        binio::put<double>(os, ck.dictionary.lower());
        binio::put<double>(os, ck.dictionary.upper());
        binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(ck.dictionary.levels()));
        binio::put<std::uint64_t>(os, m.parameters().size());
        for (float v : m.parameters())
            binio::put<double>(os, static_cast<double>(v));
        binio::put<std::uint64_t>(os, ck.tag.size());
        os.write(ck.tag.data(), static_cast<std::streamsize>(ck.tag.size()));
        if (!os)
            throw MissingArtifactError("write failed: " + path.string());
    }

    Checkpoint load_checkpoint(const std::filesystem::path &path)
    {
        auto is = binio::open_in(path);
        char head[8];
        is.read(head, sizeof head);
        require(is && std::memcmp(head, magic, sizeof magic) == 0, "checkpoint: bad magic in " + path.string());
        const auto version = binio::get<std::uint32_t>(is);
        require(version == checkpoint_version, "checkpoint: unsupported version " + std::to_string(version));
        lstm::Shape shape;
        shape.input = binio::get<std::uint64_t>(is);
        shape.hidden = binio::get<std::uint64_t>(is);
        shape.classes = binio::get<std::uint64_t>(is);
        require(shape.input >= 1 && shape.input <= 1024 && shape.hidden >= 1 && shape.hidden <= 4096 &&
                    shape.classes >= 2 && shape.classes <= 4096,
                "checkpoint: implausible shape");
        Checkpoint ck;
        ck.steps = binio::get<std::uint64_t>(is);
        const double dropout = binio::get<double>(is);
        const auto nf = binio::get<std::uint64_t>(is);
        require(nf == shape.input, "checkpoint: scaler does not match input dimension");
        std::vector<double> mean(nf), sd(nf);
        for (auto &v : mean)
            v = binio::get<double>(is);
        for (auto &v : sd)
            v = binio::get<double>(is);
        const bool periodic = binio::get<std::uint8_t>(is) != 0;
        const double lo = binio::get<double>(is);
        const double hi = binio::get<double>(is);
        const auto levels = static_cast<int>(binio::get<std::uint64_t>(is));
        ck.dictionary = periodic ? csi::LevelDictionary::phase(levels) : csi::LevelDictionary::amplitude(lo, hi, levels);
        require(static_cast<std::size_t>(levels) == shape.classes, "checkpoint: dictionary does not match classes");
        const auto np = binio::get<std::uint64_t>(is);
        require(np == shape.parameter_count(), "checkpoint: parameter count does not match shape");
        ck.classifier.model = lstm::Model<float>(shape, dropout);
        for (auto &p : ck.classifier.model.parameters())
            p = static_cast<float>(binio::get<double>(is));
        const auto tl = binio::get<std::uint64_t>(is);
        require(tl < 4096, "checkpoint: implausible tag length");
        ck.tag.resize(tl);
        is.read(ck.tag.data(), static_cast<std::streamsize>(tl));
        require(static_cast<bool>(is), "checkpoint: truncated tag");
        ck.classifier.scaler = csi::Standardizer(std::move(mean), std::move(sd));
        return ck;
    }
}
