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

#ifndef SKINMIMO_TRAIN_HPP
#define SKINMIMO_TRAIN_HPP

#include "skinmimo/csi.hpp"
#include "skinmimo/lstm.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace skinmimo::train
{
    enum class FoldMode
    {
        shuffled, // stratified by a per-window key, shuffled within strata
        blocked,  // contiguous runs of windows
    };

    FoldMode parse_fold_mode(const std::string &s);
    std::string to_string(FoldMode m);

    struct TrainConfig
    {
        std::size_t batch_size = 32;
        double learning_rate = 1e-3;
        std::size_t epochs = 30;
        std::size_t folds = 10;
        std::size_t eval_folds = 10; // folds actually trained and scored, <= folds
        FoldMode fold_mode = FoldMode::shuffled;
        bool cosine_schedule = false;
        std::size_t hidden = 128;
        double dropout = 0.5;
        std::uint64_t seed = 1;

        void validate() const;
    };

    // test indices per fold; each window appears in exactly one fold.
    // `key` drives stratification (windows sharing a key are spread across folds).
    std::vector<std::vector<std::size_t>> make_folds(std::span<const int> key, std::size_t k, FoldMode mode,
                                                     std::uint64_t seed);

    std::vector<std::size_t> complement(std::span<const std::size_t> subset, std::size_t n);

    struct Classifier
    {
        lstm::Model<float> model;
        csi::Standardizer scaler;
    };

    struct FitResult
    {
        Classifier classifier;
        std::vector<double> epoch_loss; // mean training loss per epoch
    };

    // Blocks must be raw (unstandardized); the scaler is fitted on `train_idx`.
    FitResult fit(const csi::Blocks &blocks, std::span<const int> labels, std::size_t n_classes,
                  std::span<const std::size_t> train_idx, const TrainConfig &cfg, std::uint64_t seed);

    // Argmax class per requested block (eval mode). Blocks raw.
    std::vector<int> predict(const Classifier &c, const csi::Blocks &blocks, std::span<const std::size_t> indices);

    // Class probabilities for one raw block.
    std::vector<double> predict_proba(const Classifier &c, std::span<const double> block, std::size_t steps);

    // Versioned little-endian checkpoint:
    //   "SKMLSTM\0" u32 version=1
    //   u64 input, hidden, classes, steps; f64 dropout
    //   u64 n_features; f64 mean[n]; f64 std[n]
    //   u8 periodic; f64 lo, hi; u64 levels
    //   u64 n_params; f64 params[n]
    //   u64 tag length; bytes tag
    struct Checkpoint
    {
        Classifier classifier;
        std::size_t steps = 30;
        csi::LevelDictionary dictionary = csi::LevelDictionary::phase(2);
        std::string tag; // free-form slot description
    };

    void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path);
    Checkpoint load_checkpoint(const std::filesystem::path &path);
}

#endif
