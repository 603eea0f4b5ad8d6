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

#include "skinmimo/error.hpp"
#include "skinmimo/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace skinmimo;

namespace
{
    struct Globals
    {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::string out;
        bool force = false;
    };

    KeyValueConfig user_config(const Globals &g)
    {
        return g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config);
    }

    fs::path require_out(const Globals &g)
    {
        if (g.out.empty())
            throw ValidationError("--out DIR is required");
        return g.out;
    }

    // Models carry the pipeline settings they were trained with; --config overlays them.
    pipeline::PipelineConfig pipeline_config(const Globals &g, const std::string &models)
    {
        KeyValueConfig c;
        if (!models.empty())
        {
            if (!fs::is_directory(models))
                throw MissingArtifactError("models directory not found: " + models);
            if (fs::exists(fs::path(models) / "pipeline.cfg"))
                c = KeyValueConfig::load(fs::path(models) / "pipeline.cfg");
        }
        c.merge(user_config(g));
        if (g.seed)
            c.set("train.seed", std::to_string(*g.seed));
        return pipeline::PipelineConfig::from_config(c);
    }

    std::vector<int> int_list(const KeyValueConfig &c, const std::string &key)
    {
        std::vector<int> out;
        for (const auto &s : c.get_list(key))
        {
            try
            {
                out.push_back(std::stoi(s));
            }
            catch (const std::exception &)
            {
                throw ValidationError(key + ": not an integer: " + s);
            }
        }
        return out;
    }
}

int main(int argc, char **argv)
{
    CLI::App app{"skinmimo: skin-channel MIMO simulation and CSI prediction"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config, "key-value config file");
    app.add_option("--seed", g.seed, "override the seed of the command");
    app.add_option("--out", g.out, "output directory");
    app.add_flag("--force", g.force, "write into a non-empty output directory");

    int subject = 0;
    auto *gen = app.add_subcommand("generate", "simulate a scenario into a dataset directory");
    gen->add_option("--subject", subject, "start from subject preset 1 or 2");

    app.add_subcommand("coherence", "coherence time of the activity presets");

    std::string dataset, models, labels = "model";
    std::vector<std::string> sensors;
    auto *tr = app.add_subcommand("train", "train one LSTM per (pilot, rx, target) slot");
    tr->add_option("--dataset", dataset, "dataset directory")->required();
    tr->add_option("--sensor", sensors, "ACC, GYRO or ACC+GYRO (repeatable)");

    auto *pr = app.add_subcommand("predict", "predict quantized CSI levels on the evaluation windows");
    pr->add_option("--dataset", dataset, "dataset directory")->required();
    pr->add_option("--models", models, "directory written by train")->required();

    auto *qs = app.add_subcommand("quantization-study", "oracle capacity over an amplitude x phase level grid");
    qs->add_option("--dataset", dataset, "dataset directory")->required();

    auto *cr = app.add_subcommand("capacity-report", "capacity of every scheme at the data carrier");
    cr->add_option("--dataset", dataset, "dataset directory")->required();
    cr->add_option("--models", models, "directory written by train");
    cr->add_option("--labels", labels, "model or truth")->check(CLI::IsMember({"model", "truth"}));
    cr->add_option("--sensor", sensors, "restrict Skin-MIMO rows to these sensor sets");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        app.exit(e);
        return 2;
    }

    try
    {
        const auto apply_sensors = [&](pipeline::PipelineConfig &cfg) {
            if (sensors.empty())
                return;
            cfg.sensors.clear();
            for (const auto &s : sensors)
                cfg.sensors.push_back(sim::parse_sensor_set(s));
        };

        if (gen->parsed())
        {
            const auto base = subject ? sim::subject_preset(subject) : sim::default_scenario();
            auto sc = sim::SimScenario::from_config(user_config(g), base);
            if (g.seed)
                sc.seed = *g.seed;
            const auto out = require_out(g);
            const auto d = pipeline::make_dataset(sc);
            pipeline::write_dataset(d, out, g.force);
            std::printf("wrote %zu receivers, %zu IMU samples, %zu truth windows to %s\n", d.rx.size(), d.imu.size(),
                        d.truth.n_windows(), out.string().c_str());
        }
        else if (app.got_subcommand("coherence"))
        {
            auto cc = pipeline::CoherenceConfig::from_config(user_config(g));
            if (g.seed)
                cc.seed = *g.seed;
            const auto out = require_out(g);
            const auto rows = pipeline::coherence_sweep(cc);
            pipeline::write_coherence(rows, out, g.force);
            for (const auto &r : rows)
            {
                if (r.coherence)
                    std::printf("%-10s thr %.2f  %.1f ms\n", r.activity.c_str(), r.threshold, *r.coherence * 1e3);
                else
                    std::printf("%-10s thr %.2f  infinite\n", r.activity.c_str(), r.threshold);
            }
        }
        else if (tr->parsed())
        {
            auto cfg = pipeline_config(g, "");
            apply_sensors(cfg);
            const auto out = require_out(g);
            const auto d = pipeline::load_dataset(dataset);
            const auto summary = pipeline::run_train(d, cfg, out, g.force);
            for (auto s : cfg.sensors)
                std::printf("%-9s amp TPR %.3f  phase TPR %.3f\n", sim::to_string(s).c_str(),
                            summary.mean_tpr(s, csi::Target::amplitude), summary.mean_tpr(s, csi::Target::phase));
        }
        else if (pr->parsed())
        {
            const auto cfg = pipeline_config(g, models);
            const auto out = require_out(g);
            pipeline::run_predict(pipeline::load_dataset(dataset), cfg, models, out, g.force);
            std::printf("wrote %s\n", (out / "predictions.csv").string().c_str());
        }
        else if (qs->parsed())
        {
            const auto user = user_config(g);
            const auto cfg = pipeline_config(g, "");
            const auto amp = user.has("quant.grid_amp") ? int_list(user, "quant.grid_amp")
                                                        : std::vector<int>{4, 8, 16, 32, 64};
            const auto phase = user.has("quant.grid_phase") ? int_list(user, "quant.grid_phase")
                                                            : std::vector<int>{4, 8, 16, 32, 64};
            const auto out = require_out(g);
            const auto cells = pipeline::quantization_study(pipeline::load_dataset(dataset), cfg, amp, phase);
            pipeline::write_quantization_study(cells, out, g.force);
            for (const auto &c : cells)
                std::printf("amp %3d phase %3d  %.4f bit/s/Hz\n", c.amp_levels, c.phase_levels, c.capacity);
        }
        else if (cr->parsed())
        {
            const auto source = pipeline::parse_label_source(labels);
            if (source == pipeline::LabelSource::model && models.empty())
                throw ValidationError("--models DIR is required unless --labels truth");
            auto cfg = pipeline_config(g, models);
            apply_sensors(cfg);
            const auto out = require_out(g);
            const auto r = pipeline::capacity_report(pipeline::load_dataset(dataset), cfg, models, source);
            pipeline::write_capacity_report(r, out, g.force);
            std::printf("data carrier %.1f Hz, SNR %.2f dB, %zu windows\n", r.data_carrier,
                        10.0 * std::log10(r.snr), r.windows);
            for (const auto &s : r.schemes)
                std::printf("%-18s %.4f bit/s/Hz  x%.3f SISO  x%.3f OL  %.1f%% Oracle\n", s.scheme.c_str(), s.mean,
                            s.vs_siso, s.vs_ol, 100.0 * s.vs_oracle);
        }
        return 0;
    }
    catch (const ValidationError &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    catch (const MissingArtifactError &e)
    {
        std::cerr << "missing: " << e.what() << '\n';
        return 3;
    }
    catch (const NumericalError &e)
    {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    }
    catch (const std::filesystem::filesystem_error &e)
    {
        std::cerr << "missing: " << e.what() << '\n';
        return 3;
    }
}
