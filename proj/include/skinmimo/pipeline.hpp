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

#ifndef SKINMIMO_PIPELINE_HPP
#define SKINMIMO_PIPELINE_HPP

#include "skinmimo/csi.hpp"
#include "skinmimo/kvconfig.hpp"
#include "skinmimo/sim.hpp"
#include "skinmimo/train.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

// Dataset layout, model slots and the report stages driven by the CLI.
namespace skinmimo::pipeline
{
    namespace fs = std::filesystem;

    // Directory layout written by generate():
    //   manifest.cfg     file list and sizes
    //   scenario.cfg     full scenario, replayable
    //   rx<i>.bin        receiver waveforms (signal-core binary)
    //   noise_rx<i>.bin  same receivers with motors muted (noise floor)
    //   imu.bin          6-axis stream
    //   truth.csv        window-mean h per carrier
    struct Dataset
    {
        sim::SimScenario scenario;
        std::vector<dsp::Waveform> rx;
        std::vector<dsp::Waveform> noise_rx;
        sim::ImuStream imu;
        sim::TruthSeries truth;
    };

    Dataset make_dataset(const sim::SimScenario &scenario);

    // Refuses a non-empty `dir` unless `force`.
    void write_dataset(const Dataset &d, const fs::path &dir, bool force);
    Dataset load_dataset(const fs::path &dir);

    // Creates `dir` (or checks that it is empty).
    void prepare_output_dir(const fs::path &dir, bool force);

    enum class EvalWindows
    {
        heldout, // fold 0 test split
        all,     // every usable window
    };

    EvalWindows parse_eval_windows(const std::string &s);
    std::string to_string(EvalWindows e);

    // Everything past generation that shapes labels, features and metrics.
    struct PipelineConfig
    {
        train::TrainConfig train;
        csi::FrontendSpec frontend;
        int amp_levels = 16;
        int phase_levels = 32;
        std::vector<sim::SensorSet> sensors{sim::SensorSet::gyro};
        EvalWindows eval_windows = EvalWindows::heldout;
        std::size_t strata = 16;
        // SP-MIMO sounding budget [s]
        mimo::SoundingBudget sounding{0.030, 0.010, 0.050, 0.0, 0.150};
        mimo::OverheadMode sounding_mode = mimo::OverheadMode::ramp_plus_sounding;

        void validate() const;
        KeyValueConfig to_config() const;
        static PipelineConfig from_config(const KeyValueConfig &cfg);
    };

    // One model: a pilot carrier seen at one receiver, amplitude or phase.
    struct Slot
    {
        std::size_t pilot = 0; // index into scenario.pilots
        double carrier_hz = 0.0;
        int rx = 0;
        int tx = 0;
        csi::Target target = csi::Target::amplitude;

        std::string name() const; // e.g. "110hz_rx0_amp"
    };

    std::vector<Slot> make_slots(const sim::SimScenario &sc);

    // Label view of a dataset shared by every slot and stage.
    struct Plan
    {
        std::vector<Slot> slots;
        std::vector<std::size_t> windows;              // usable truth windows (guards trimmed)
        std::vector<std::vector<std::size_t>> folds;   // positions into `windows`
        std::vector<std::size_t> eval;                 // positions scored by reports
        std::vector<std::size_t> train;                // complement of folds[0]
    };

    Plan make_plan(const Dataset &d, const PipelineConfig &cfg);

    // Raw label value of a slot in truth window w: received amplitude [V] or phase [rad].
    double label_value(const Dataset &d, const Slot &s, std::size_t w);

    // Uniform dictionary over the training split of fold 0 (amplitude) or [-pi, pi).
    csi::LevelDictionary slot_dictionary(const Dataset &d, const Plan &p, const Slot &s, int levels);

    std::vector<int> slot_labels(const Dataset &d, const Plan &p, const Slot &s, const csi::LevelDictionary &dict);

    // Frontend output of the usable windows for one slot.
    csi::Blocks slot_features(const Dataset &d, const Plan &p, sim::SensorSet sensor, const Slot &slot,
                              const csi::FrontendSpec &fe);

    struct SlotScore
    {
        sim::SensorSet sensor = sim::SensorSet::gyro;
        Slot slot;
        std::size_t fold = 0;
        csi::SlotReport report;
        double final_loss = 0.0;
    };

    struct TrainSummary
    {
        std::vector<SlotScore> scores;
        // mean fold TPR per sensor and target
        double mean_tpr(sim::SensorSet sensor, csi::Target target) const;
        double mean_rmse(sim::SensorSet sensor, csi::Target target) const;
    };

    // models/<SENSOR>/<slot>.ckpt from fold 0, plus train_report.csv and pipeline.cfg.
    TrainSummary run_train(const Dataset &d, const PipelineConfig &cfg, const fs::path &out, bool force);

    // levels[slot][eval position]
    using LevelTable = std::vector<std::vector<int>>;

    // Missing checkpoints raise MissingArtifactError naming every absent slot.
    LevelTable predict_levels(const Dataset &d, const Plan &p, sim::SensorSet sensor, const fs::path &models,
                              std::vector<csi::LevelDictionary> *dictionaries = nullptr);

    // predictions.csv for every sensor that has a checkpoint directory.
    void run_predict(const Dataset &d, const PipelineConfig &cfg, const fs::path &models, const fs::path &out,
                     bool force);

    // signal power (A^2 / 2) over the mean noise-floor power at the receivers.
    double measured_snr(const Dataset &d);

    // Dequantized pilot levels of one window interpolated to the data carrier.
    mimo::ChannelMatrix estimate_channel(const Dataset &d, const Plan &p, const LevelTable &levels,
                                         const std::vector<csi::LevelDictionary> &dicts, std::size_t eval_pos,
                                         double data_carrier);

    // Truth labels quantized at (amp_levels, phase_levels), then interpolated.
    double oracle_capacity(const Dataset &d, const Plan &p, int amp_levels, int phase_levels, double snr);

    struct QuantizationCell
    {
        int amp_levels = 0;
        int phase_levels = 0;
        double capacity = 0.0;
    };

    std::vector<QuantizationCell> quantization_study(const Dataset &d, const PipelineConfig &cfg,
                                                     const std::vector<int> &amp_grid,
                                                     const std::vector<int> &phase_grid);
    void write_quantization_study(const std::vector<QuantizationCell> &cells, const fs::path &out, bool force);

    enum class LabelSource
    {
        model,
        truth,
    };

    LabelSource parse_label_source(const std::string &s);

    struct SchemeResult
    {
        std::string scheme;
        double mean = 0.0; // bits/s/Hz
        double vs_siso = 0.0;
        double vs_ol = 0.0;
        double vs_oracle = 0.0;
    };

    struct CapacityReport
    {
        double data_carrier = 0.0;
        double snr = 0.0;
        std::size_t windows = 0;
        std::vector<SchemeResult> schemes;

        const SchemeResult &at(const std::string &scheme) const; // throws ValidationError
    };

    // Schemes: SISO, OL-MIMO, SP-MIMO, SkinMIMO-<sensor> per configured sensor, Oracle.
    // With LabelSource::truth the Skin-MIMO rows use quantized truth labels instead of models.
    CapacityReport capacity_report(const Dataset &d, const PipelineConfig &cfg, const fs::path &models,
                                   LabelSource labels);
    void write_capacity_report(const CapacityReport &r, const fs::path &out, bool force);

    struct CoherenceRow
    {
        std::string activity;
        double target = 0.0;
        double fade_depth = 0.0;
        double threshold = 0.8;
        std::size_t seeds = 0;
        std::optional<double> coherence; // mean over seeds [s]; nullopt = infinite
    };

    struct CoherenceConfig
    {
        std::vector<sim::ActivityProfile> profiles;
        std::vector<double> thresholds{0.8};
        std::size_t seeds = 20;
        std::uint64_t seed = 1;
        sim::CoherenceProbe probe;

        static CoherenceConfig from_config(const KeyValueConfig &cfg);
    };

    std::vector<CoherenceRow> coherence_sweep(const CoherenceConfig &cfg);
    void write_coherence(const std::vector<CoherenceRow> &rows, const fs::path &out, bool force);
}

#endif
