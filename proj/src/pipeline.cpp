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

#include "skinmimo/pipeline.hpp"

#include "skinmimo/error.hpp"
#include "skinmimo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace skinmimo::pipeline
{
    namespace
    {
        constexpr std::uint64_t tag_noise_floor = 99;

        std::string rx_name(std::size_t i) { return "rx" + std::to_string(i) + ".bin"; }
        std::string noise_name(std::size_t i) { return "noise_rx" + std::to_string(i) + ".bin"; }

        void write_text(const fs::path &path, const std::string &text)
        {
            std::ofstream os(path, std::ios::binary | std::ios::trunc);
            if (!os)
                throw MissingArtifactError("cannot open for writing: " + path.string());
            os << text;
        }

        std::string fmt(double v) { return format_double(v); }

        std::size_t slot_index(const Plan &p, std::size_t pilot, int rx, csi::Target t)
        {
            for (std::size_t i = 0; i < p.slots.size(); ++i)
            {
                const auto &s = p.slots[i];
                if (s.pilot == pilot && s.rx == rx && s.target == t)
                    return i;
            }
            throw ValidationError("no slot for pilot " + std::to_string(pilot));
        }

        double data_carrier_of(const Dataset &d)
        {
            require(!d.scenario.data_carriers.empty(), "scenario has no data carrier");
            return d.scenario.data_carriers.front();
        }

        fs::path checkpoint_path(const fs::path &models, sim::SensorSet sensor, const Slot &s)
        {
            return models / sim::to_string(sensor) / (s.name() + ".ckpt");
        }
    }

    Dataset make_dataset(const sim::SimScenario &scenario)
    {
        scenario.validate();
        Dataset d;
        d.scenario = scenario;
        auto out = sim::simulate(scenario);
        d.rx = std::move(out.rx);
        d.imu = std::move(out.imu);
        d.truth = std::move(out.truth);

        // Muted-motor recording: receiver noise alone, from its own stream.
        const double sigma = scenario.noise_std();
        for (std::size_t r = 0; r < d.rx.size(); ++r)
        {
            Gaussian g(derive_seed(scenario.seed, {tag_noise_floor, r}));
            std::vector<double> x(d.rx[r].size());
            for (auto &v : x)
                v = sigma * g();
            d.noise_rx.emplace_back(std::move(x), d.rx[r].sample_rate());
        }
        return d;
    }

    void prepare_output_dir(const fs::path &dir, bool force)
    {
        if (fs::exists(dir))
        {
            require(fs::is_directory(dir), "output path is not a directory: " + dir.string());
            if (!fs::is_empty(dir) && !force)
                throw ValidationError("output directory is not empty (use --force): " + dir.string());
        }
        else
            fs::create_directories(dir);
    }

    void write_dataset(const Dataset &d, const fs::path &dir, bool force)
    {
        prepare_output_dir(dir, force);
        d.scenario.to_config().save(dir / "scenario.cfg");
        for (std::size_t i = 0; i < d.rx.size(); ++i)
            dsp::write_waveform_binary(d.rx[i], dir / rx_name(i));
        for (std::size_t i = 0; i < d.noise_rx.size(); ++i)
            dsp::write_waveform_binary(d.noise_rx[i], dir / noise_name(i));
        sim::write_imu_binary(d.imu, dir / "imu.bin");
        d.truth.write_csv(dir / "truth.csv");

        KeyValueConfig m;
        m.set("scenario", "scenario.cfg");
        m.set("rx_count", static_cast<std::int64_t>(d.rx.size()));
        m.set("imu", "imu.bin");
        m.set("imu.samples", static_cast<std::int64_t>(d.imu.size()));
        m.set("imu.axes", static_cast<std::int64_t>(d.imu.n_axes()));
        m.set("truth", "truth.csv");
        m.set("truth.windows", static_cast<std::int64_t>(d.truth.n_windows()));
        m.set("truth.window", static_cast<std::int64_t>(d.truth.window));
        std::string files;
        for (std::size_t i = 0; i < d.rx.size(); ++i)
            files += (i ? "," : "") + rx_name(i);
        m.set("rx", files);
        files.clear();
        for (std::size_t i = 0; i < d.noise_rx.size(); ++i)
            files += (i ? "," : "") + noise_name(i);
        m.set("noise_rx", files);
        m.save(dir / "manifest.cfg");
    }

    Dataset load_dataset(const fs::path &dir)
    {
        const auto manifest_path = dir / "manifest.cfg";
        if (!fs::exists(manifest_path))
            throw MissingArtifactError("not a dataset (no manifest.cfg): " + dir.string());
        const auto m = KeyValueConfig::load(manifest_path);

        Dataset d;
        d.scenario = sim::SimScenario::from_config(KeyValueConfig::load(dir / m.get_string("scenario", "scenario.cfg")),
                                                   sim::default_scenario());
        for (const auto &f : m.get_list("rx"))
            d.rx.push_back(dsp::read_waveform_binary(dir / f));
        for (const auto &f : m.get_list("noise_rx"))
            d.noise_rx.push_back(dsp::read_waveform_binary(dir / f));
        d.imu = sim::read_imu_binary(dir / m.get_string("imu", "imu.bin"));
        d.truth = sim::TruthSeries::read_csv(dir / m.get_string("truth", "truth.csv"), d.scenario.window,
                                             d.scenario.sample_rate);

        require(static_cast<int>(d.rx.size()) == d.scenario.n_rx, "dataset: receiver count disagrees with scenario");
        require(static_cast<std::int64_t>(d.imu.size()) == m.get_int("imu.samples", -1),
                "dataset: imu sample count disagrees with manifest");
        require(static_cast<std::int64_t>(d.truth.n_windows()) == m.get_int("truth.windows", -1),
                "dataset: truth window count disagrees with manifest");
        return d;
    }

    EvalWindows parse_eval_windows(const std::string &s)
    {
        if (s == "heldout")
            return EvalWindows::heldout;
        if (s == "all")
            return EvalWindows::all;
        throw ValidationError("eval windows must be heldout or all: " + s);
    }

    std::string to_string(EvalWindows e) { return e == EvalWindows::heldout ? "heldout" : "all"; }

    void PipelineConfig::validate() const
    {
        train.validate();
        require(amp_levels >= 2 && phase_levels >= 2, "quantization levels must be >= 2");
        require(!sensors.empty(), "at least one sensor set is required");
        require(strata >= 1, "strata must be >= 1");
        require(frontend.half_width > 0.0 && frontend.transition_width > 0.0 && frontend.attenuation > 0.0,
                "frontend parameters must be positive");
        require(sounding.t_coherence > 0.0, "sounding coherence must be > 0");
    }

    KeyValueConfig PipelineConfig::to_config() const
    {
        KeyValueConfig c;
        c.set("train.batch_size", static_cast<std::int64_t>(train.batch_size));
        c.set("train.learning_rate", train.learning_rate);
        c.set("train.epochs", static_cast<std::int64_t>(train.epochs));
        c.set("train.folds", static_cast<std::int64_t>(train.folds));
        c.set("train.eval_folds", static_cast<std::int64_t>(train.eval_folds));
        c.set("train.fold_mode", train::to_string(train.fold_mode));
        c.set("train.cosine", train.cosine_schedule ? "true" : "false");
        c.set("train.hidden", static_cast<std::int64_t>(train.hidden));
        c.set("train.dropout", train.dropout);
        c.set("train.seed", std::to_string(train.seed));
        c.set("train.strata", static_cast<std::int64_t>(strata));
        c.set("frontend.mode", csi::to_string(frontend.mode));
        c.set("frontend.half_width", frontend.half_width);
        c.set("frontend.transition_width", frontend.transition_width);
        c.set("frontend.attenuation", frontend.attenuation);
        c.set("quant.amp_levels", static_cast<std::int64_t>(amp_levels));
        c.set("quant.phase_levels", static_cast<std::int64_t>(phase_levels));
        std::string s;
        for (std::size_t i = 0; i < sensors.size(); ++i)
            s += (i ? "," : "") + sim::to_string(sensors[i]);
        c.set("sensors", s);
        c.set("eval_windows", to_string(eval_windows));
        c.set("sounding.t_ramp", sounding.t_ramp);
        c.set("sounding.t_ring", sounding.t_ring);
        c.set("sounding.t_sound", sounding.t_sound);
        c.set("sounding.t_feedback", sounding.t_feedback);
        c.set("sounding.t_coherence", sounding.t_coherence);
        c.set("sounding.mode", sounding_mode == mimo::OverheadMode::full_exchange ? "full" : "simplified");
        return c;
    }

    // Desk-scale defaults: a 32-unit LSTM with a cosine schedule trains in
    // seconds per slot and one evaluation fold keeps 48 models under 10 min.
    PipelineConfig PipelineConfig::from_config(const KeyValueConfig &c)
    {
        PipelineConfig p;
        auto &t = p.train;
        t.hidden = 32;
        t.epochs = 120;
        t.learning_rate = 3e-3;
        t.cosine_schedule = true;
        t.eval_folds = 1;

        t.batch_size = static_cast<std::size_t>(c.get_u64("train.batch_size", t.batch_size));
        t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
        t.epochs = static_cast<std::size_t>(c.get_u64("train.epochs", t.epochs));
        t.folds = static_cast<std::size_t>(c.get_u64("train.folds", t.folds));
        t.eval_folds = static_cast<std::size_t>(c.get_u64("train.eval_folds", t.eval_folds));
        if (c.has("train.fold_mode"))
            t.fold_mode = train::parse_fold_mode(c.get_string("train.fold_mode", ""));
        t.cosine_schedule = c.get_bool("train.cosine", t.cosine_schedule);
        t.hidden = static_cast<std::size_t>(c.get_u64("train.hidden", t.hidden));
        t.dropout = c.get_double("train.dropout", t.dropout);
        t.seed = c.get_u64("train.seed", t.seed);
        p.strata = static_cast<std::size_t>(c.get_u64("train.strata", p.strata));
        if (c.has("frontend.mode"))
            p.frontend.mode = csi::parse_frontend_mode(c.get_string("frontend.mode", ""));
        p.frontend.half_width = c.get_double("frontend.half_width", p.frontend.half_width);
        p.frontend.transition_width = c.get_double("frontend.transition_width", p.frontend.transition_width);
        p.frontend.attenuation = c.get_double("frontend.attenuation", p.frontend.attenuation);
        p.amp_levels = static_cast<int>(c.get_int("quant.amp_levels", p.amp_levels));
        p.phase_levels = static_cast<int>(c.get_int("quant.phase_levels", p.phase_levels));
        if (c.has("sensors"))
        {
            p.sensors.clear();
            for (const auto &s : c.get_list("sensors"))
                p.sensors.push_back(sim::parse_sensor_set(s));
        }
        if (c.has("eval_windows"))
            p.eval_windows = parse_eval_windows(c.get_string("eval_windows", ""));
        p.sounding.t_ramp = c.get_double("sounding.t_ramp", p.sounding.t_ramp);
        p.sounding.t_ring = c.get_double("sounding.t_ring", p.sounding.t_ring);
        p.sounding.t_sound = c.get_double("sounding.t_sound", p.sounding.t_sound);
        p.sounding.t_feedback = c.get_double("sounding.t_feedback", p.sounding.t_feedback);
        p.sounding.t_coherence = c.get_double("sounding.t_coherence", p.sounding.t_coherence);
        if (c.has("sounding.mode"))
        {
            const auto mode = c.get_string("sounding.mode", "");
            if (mode == "full")
                p.sounding_mode = mimo::OverheadMode::full_exchange;
            else if (mode == "simplified")
                p.sounding_mode = mimo::OverheadMode::ramp_plus_sounding;
            else
                throw ValidationError("sounding.mode must be full or simplified: " + mode);
        }
        p.validate();
        return p;
    }

    std::string Slot::name() const
    {
        std::ostringstream os;
        os << fmt(carrier_hz) << "hz_rx" << rx << '_' << csi::to_string(target);
        return os.str();
    }

    std::vector<Slot> make_slots(const sim::SimScenario &sc)
    {
        std::vector<Slot> out;
        for (std::size_t p = 0; p < sc.pilots.size(); ++p)
            for (int rx = 0; rx < sc.n_rx; ++rx)
                for (auto t : {csi::Target::amplitude, csi::Target::phase})
                    out.push_back(Slot{p, sc.pilots[p].carrier_hz, rx, sc.pilots[p].tx, t});
        return out;
    }

    double label_value(const Dataset &d, const Slot &s, std::size_t w)
    {
        const auto h = d.truth.h.at(w).at(s.pilot)(s.rx, s.tx);
        return s.target == csi::Target::amplitude ? d.scenario.tx_amplitude * std::abs(h) : std::arg(h);
    }

    Plan make_plan(const Dataset &d, const PipelineConfig &cfg)
    {
        cfg.validate();
        require(d.truth.carriers.size() >= d.scenario.pilots.size(), "truth is missing pilot carriers");
        Plan p;
        p.slots = make_slots(d.scenario);

        const std::size_t guard = csi::guard_windows(cfg.frontend, d.scenario.sample_rate, d.scenario.window);
        const std::size_t n_blocks = d.imu.size() / d.scenario.window;
        const std::size_t n = std::min(n_blocks, d.truth.n_windows());
        require(n > 2 * guard + cfg.train.folds, "dataset too short for the guard windows and folds");
        for (std::size_t w = guard; w + guard < n; ++w)
            p.windows.push_back(w);

        // Stratify on the mean normalized amplitude across links so every fold
        // spans the amplitude range of every slot.
        std::vector<double> level(p.windows.size(), 0.0);
        for (const auto &s : p.slots)
        {
            if (s.target != csi::Target::amplitude)
                continue;
            double mean = 0.0;
            for (std::size_t i = 0; i < p.windows.size(); ++i)
                mean += label_value(d, s, p.windows[i]);
            mean /= static_cast<double>(p.windows.size());
            for (std::size_t i = 0; i < p.windows.size(); ++i)
                level[i] += label_value(d, s, p.windows[i]) / mean;
        }
        std::vector<std::size_t> order(level.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return level[a] < level[b]; });
        std::vector<int> key(level.size());
        for (std::size_t r = 0; r < order.size(); ++r)
            key[order[r]] = static_cast<int>(r * cfg.strata / order.size());

        p.folds = train::make_folds(key, cfg.train.folds, cfg.train.fold_mode, derive_seed(cfg.train.seed, {0}));
        p.train = train::complement(p.folds[0], p.windows.size());
        if (cfg.eval_windows == EvalWindows::heldout)
            p.eval = p.folds[0];
        else
        {
            p.eval.resize(p.windows.size());
            std::iota(p.eval.begin(), p.eval.end(), std::size_t{0});
        }
        return p;
    }

    csi::LevelDictionary slot_dictionary(const Dataset &d, const Plan &p, const Slot &s, int levels)
    {
        if (s.target == csi::Target::phase)
            return csi::LevelDictionary::phase(levels);
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (auto i : p.train)
        {
            const double v = label_value(d, s, p.windows[i]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!(hi > lo))
        {
            const double pad = std::max(1e-12, 1e-6 * std::abs(lo));
            lo -= pad;
            hi += pad;
        }
        return csi::LevelDictionary::amplitude(lo, hi, levels);
    }

    std::vector<int> slot_labels(const Dataset &d, const Plan &p, const Slot &s, const csi::LevelDictionary &dict)
    {
        std::vector<int> y(p.windows.size());
        for (std::size_t i = 0; i < p.windows.size(); ++i)
            y[i] = dict.quantize(label_value(d, s, p.windows[i]));
        return y;
    }

    csi::Blocks slot_features(const Dataset &d, const Plan &p, sim::SensorSet sensor, const Slot &slot,
                              const csi::FrontendSpec &fe)
    {
        const auto imu = d.imu.select(sensor);
        sim::ImuStream front;
        if (fe.mode == csi::FrontendMode::demodulate)
        {
            std::vector<double> carriers;
            for (const auto &pl : d.scenario.pilots)
                if (pl.tx == slot.tx)
                    carriers.push_back(pl.carrier_hz);
            front = csi::imu_demodulate(imu, carriers, d.scenario.window);
        }
        else
            front = csi::imu_frontend(imu, slot.carrier_hz, fe);
        return csi::window_imu(front, d.scenario.window, d.scenario.window).subset(p.windows);
    }

    double TrainSummary::mean_tpr(sim::SensorSet sensor, csi::Target target) const
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto &s : scores)
            if (s.sensor == sensor && s.slot.target == target)
            {
                sum += s.report.tpr;
                ++n;
            }
        if (n == 0)
            throw ValidationError("no scores for " + sim::to_string(sensor) + " " + csi::to_string(target));
        return sum / static_cast<double>(n);
    }

    double TrainSummary::mean_rmse(sim::SensorSet sensor, csi::Target target) const
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto &s : scores)
            if (s.sensor == sensor && s.slot.target == target)
            {
                sum += s.report.rmse;
                ++n;
            }
        if (n == 0)
            throw ValidationError("no scores for " + sim::to_string(sensor) + " " + csi::to_string(target));
        return sum / static_cast<double>(n);
    }

    TrainSummary run_train(const Dataset &d, const PipelineConfig &cfg, const fs::path &out, bool force)
    {
        const Plan p = make_plan(d, cfg);
        prepare_output_dir(out, force);
        cfg.to_config().save(out / "pipeline.cfg");

        TrainSummary summary;
        const std::size_t n_eval = std::min(cfg.train.eval_folds, p.folds.size());
        for (std::size_t si = 0; si < cfg.sensors.size(); ++si)
        {
            const auto sensor = cfg.sensors[si];
            fs::create_directories(out / sim::to_string(sensor));
            std::map<std::size_t, csi::Blocks> features; // by pilot
            for (std::size_t k = 0; k < p.slots.size(); ++k)
            {
                const auto &slot = p.slots[k];
                if (!features.count(slot.pilot))
                    features.emplace(slot.pilot, slot_features(d, p, sensor, slot, cfg.frontend));
                const auto &blocks = features.at(slot.pilot);

                const int levels = slot.target == csi::Target::amplitude ? cfg.amp_levels : cfg.phase_levels;
                const auto dict = slot_dictionary(d, p, slot, levels);
                const auto y = slot_labels(d, p, slot, dict);

                std::vector<std::size_t> counts(static_cast<std::size_t>(levels), 0);
                for (auto i : p.train)
                    ++counts[static_cast<std::size_t>(y[i])];
                const auto sparse = std::count_if(counts.begin(), counts.end(),
                                                  [&](std::size_t c) { return c > 0 && c < cfg.train.folds; });
                if (sparse > 0)
                    std::cerr << "warning: " << sim::to_string(sensor) << ' ' << slot.name() << ": " << sparse
                              << " level(s) with fewer than " << cfg.train.folds << " training windows\n";

                for (std::size_t f = 0; f < n_eval; ++f)
                {
                    const auto train_idx = train::complement(p.folds[f], p.windows.size());
                    const auto seed = derive_seed(cfg.train.seed, {1, static_cast<std::uint64_t>(sensor), k, f});
                    auto fitted = train::fit(blocks, y, static_cast<std::size_t>(levels), train_idx, cfg.train, seed);
                    const auto pred = train::predict(fitted.classifier, blocks, p.folds[f]);
                    std::vector<int> truth;
                    for (auto i : p.folds[f])
                        truth.push_back(y[i]);

                    SlotScore score;
                    score.sensor = sensor;
                    score.slot = slot;
                    score.fold = f;
                    score.report = csi::metrics(pred, truth, dict);
                    score.final_loss = fitted.epoch_loss.empty() ? 0.0 : fitted.epoch_loss.back();
                    summary.scores.push_back(score);

                    if (f == 0)
                    {
                        train::Checkpoint ck{std::move(fitted.classifier), d.scenario.window, dict,
                                             sim::to_string(sensor) + ' ' + slot.name()};
                        train::save_checkpoint(ck, checkpoint_path(out, sensor, slot));
                    }
                }
            }
        }

        std::ostringstream csv;
        csv << "sensor,carrier_hz,rx,tx,target,fold,n,tpr,rmse,final_loss\n";
        for (const auto &s : summary.scores)
            csv << sim::to_string(s.sensor) << ',' << fmt(s.slot.carrier_hz) << ',' << s.slot.rx << ',' << s.slot.tx
                << ',' << csi::to_string(s.slot.target) << ',' << s.fold << ',' << s.report.n << ','
                << fmt(s.report.tpr) << ',' << fmt(s.report.rmse) << ',' << fmt(s.final_loss) << '\n';
        write_text(out / "train_report.csv", csv.str());

        nlohmann::ordered_json j;
        j["windows"] = p.windows.size();
        j["eval_folds"] = n_eval;
        for (auto sensor : cfg.sensors)
        {
            auto &e = j["sensors"][sim::to_string(sensor)];
            e["amp_tpr"] = summary.mean_tpr(sensor, csi::Target::amplitude);
            e["phase_tpr"] = summary.mean_tpr(sensor, csi::Target::phase);
            e["amp_rmse"] = summary.mean_rmse(sensor, csi::Target::amplitude);
            e["phase_rmse"] = summary.mean_rmse(sensor, csi::Target::phase);
        }
        write_text(out / "train_summary.json", j.dump(2) + "\n");
        return summary;
    }

    LevelTable predict_levels(const Dataset &d, const Plan &p, sim::SensorSet sensor, const fs::path &models,
                              std::vector<csi::LevelDictionary> *dictionaries)
    {
        std::vector<std::string> missing;
        for (const auto &s : p.slots)
            if (!fs::exists(checkpoint_path(models, sensor, s)))
                missing.push_back(s.name());
        if (!missing.empty())
        {
            std::string list;
            for (const auto &m : missing)
                list += (list.empty() ? "" : ", ") + m;
            throw MissingArtifactError("missing " + sim::to_string(sensor) + " checkpoints: " + list);
        }

        // Frontend parameters travel with the models.
        csi::FrontendSpec fe;
        if (fs::exists(models / "pipeline.cfg"))
            fe = PipelineConfig::from_config(KeyValueConfig::load(models / "pipeline.cfg")).frontend;

        LevelTable table(p.slots.size());
        if (dictionaries)
            dictionaries->clear();
        std::map<std::size_t, csi::Blocks> features;
        for (std::size_t k = 0; k < p.slots.size(); ++k)
        {
            const auto &slot = p.slots[k];
            const auto ck = train::load_checkpoint(checkpoint_path(models, sensor, slot));
            require(ck.steps == d.scenario.window, "checkpoint window length disagrees with the dataset: " + slot.name());
            if (!features.count(slot.pilot))
                features.emplace(slot.pilot, slot_features(d, p, sensor, slot, fe));
            table[k] = train::predict(ck.classifier, features.at(slot.pilot), p.eval);
            if (dictionaries)
                dictionaries->push_back(ck.dictionary);
        }
        return table;
    }

    void run_predict(const Dataset &d, const PipelineConfig &cfg, const fs::path &models, const fs::path &out,
                     bool force)
    {
        const Plan p = make_plan(d, cfg);
        std::vector<sim::SensorSet> present;
        for (auto s : {sim::SensorSet::acc, sim::SensorSet::gyro, sim::SensorSet::acc_gyro})
            if (fs::is_directory(models / sim::to_string(s)))
                present.push_back(s);
        if (present.empty())
            throw MissingArtifactError("no checkpoint directories under " + models.string());

        std::vector<std::pair<sim::SensorSet, LevelTable>> tables;
        std::vector<std::vector<csi::LevelDictionary>> dicts;
        for (auto s : present)
        {
            std::vector<csi::LevelDictionary> dd;
            tables.emplace_back(s, predict_levels(d, p, s, models, &dd));
            dicts.push_back(std::move(dd));
        }

        prepare_output_dir(out, force);
        std::ostringstream csv;
        csv << "sensor,window_index,carrier_hz,rx,tx,target,level,value,truth_level,truth_value\n";
        for (std::size_t t = 0; t < tables.size(); ++t)
        {
            const auto &[sensor, table] = tables[t];
            for (std::size_t k = 0; k < p.slots.size(); ++k)
            {
                const auto &slot = p.slots[k];
                const auto &dict = dicts[t][k];
                for (std::size_t e = 0; e < p.eval.size(); ++e)
                {
                    const std::size_t w = p.windows[p.eval[e]];
                    const double v = label_value(d, slot, w);
                    csv << sim::to_string(sensor) << ',' << w << ',' << fmt(slot.carrier_hz) << ',' << slot.rx << ','
                        << slot.tx << ',' << csi::to_string(slot.target) << ',' << table[k][e] << ','
                        << fmt(dict[table[k][e]]) << ',' << dict.quantize(v) << ',' << fmt(v) << '\n';
                }
            }
        }
        write_text(out / "predictions.csv", csv.str());
    }

    double measured_snr(const Dataset &d)
    {
        require(!d.noise_rx.empty(), "dataset has no noise-floor recording");
        double noise = 0.0;
        for (const auto &w : d.noise_rx)
            noise += dsp::mean_power(w);
        noise /= static_cast<double>(d.noise_rx.size());
        if (!(noise > 0.0))
            throw NumericalError("noise floor power is zero; capacity needs a finite SNR (set snr_db)");
        const double a = d.scenario.tx_amplitude;
        return 0.5 * a * a / noise;
    }

    mimo::ChannelMatrix estimate_channel(const Dataset &d, const Plan &p, const LevelTable &levels,
                                         const std::vector<csi::LevelDictionary> &dicts, std::size_t eval_pos,
                                         double data_carrier)
    {
        std::vector<csi::PilotObservation> obs;
        obs.reserve(d.scenario.pilots.size() * static_cast<std::size_t>(d.scenario.n_rx));
        for (std::size_t pi = 0; pi < d.scenario.pilots.size(); ++pi)
            for (int rx = 0; rx < d.scenario.n_rx; ++rx)
            {
                const auto ka = slot_index(p, pi, rx, csi::Target::amplitude);
                const auto kp = slot_index(p, pi, rx, csi::Target::phase);
                obs.push_back(csi::PilotObservation{d.scenario.pilots[pi].carrier_hz, rx, d.scenario.pilots[pi].tx,
                                                    dicts[ka][levels[ka][eval_pos]], dicts[kp][levels[kp][eval_pos]]});
            }
        return csi::interpolate_csi(obs, d.scenario.n_rx, d.scenario.n_tx, data_carrier, d.scenario.tx_amplitude)
            .h;
    }

    namespace
    {
        struct TruthLevels
        {
            LevelTable levels;
            std::vector<csi::LevelDictionary> dicts;
        };

        TruthLevels truth_levels(const Dataset &d, const Plan &p, int amp_levels, int phase_levels)
        {
            TruthLevels t;
            for (const auto &s : p.slots)
            {
                auto dict = slot_dictionary(d, p, s, s.target == csi::Target::amplitude ? amp_levels : phase_levels);
                std::vector<int> row(p.eval.size());
                for (std::size_t e = 0; e < p.eval.size(); ++e)
                    row[e] = dict.quantize(label_value(d, s, p.windows[p.eval[e]]));
                t.levels.push_back(std::move(row));
                t.dicts.push_back(std::move(dict));
            }
            return t;
        }

        double mean_effective_capacity(const Dataset &d, const Plan &p, const LevelTable &levels,
                                       const std::vector<csi::LevelDictionary> &dicts, double snr)
        {
            const double fc = data_carrier_of(d);
            const std::size_t ci = d.truth.carrier_index(fc);
            double sum = 0.0;
            for (std::size_t e = 0; e < p.eval.size(); ++e)
            {
                const auto h_true = d.truth.at(p.windows[p.eval[e]], ci);
                const auto h_est = estimate_channel(d, p, levels, dicts, e, fc);
                sum += mimo::effective_capacity(h_true, h_est, snr, d.scenario.n_tx);
            }
            return sum / static_cast<double>(p.eval.size());
        }
    }

    double oracle_capacity(const Dataset &d, const Plan &p, int amp_levels, int phase_levels, double snr)
    {
        const auto t = truth_levels(d, p, amp_levels, phase_levels);
        return mean_effective_capacity(d, p, t.levels, t.dicts, snr);
    }

    std::vector<QuantizationCell> quantization_study(const Dataset &d, const PipelineConfig &cfg,
                                                     const std::vector<int> &amp_grid,
                                                     const std::vector<int> &phase_grid)
    {
        require(!amp_grid.empty() && !phase_grid.empty(), "quantization grid must be non-empty");
        const Plan p = make_plan(d, cfg);
        const double snr = measured_snr(d);
        std::vector<QuantizationCell> cells;
        for (int a : amp_grid)
            for (int ph : phase_grid)
            {
                require(a >= 2 && ph >= 2, "quantization levels must be >= 2");
                cells.push_back(QuantizationCell{a, ph, oracle_capacity(d, p, a, ph, snr)});
            }
        return cells;
    }

    void write_quantization_study(const std::vector<QuantizationCell> &cells, const fs::path &out, bool force)
    {
        prepare_output_dir(out, force);
        std::ostringstream csv;
        csv << "amp_levels,phase_levels,capacity\n";
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto &c : cells)
        {
            csv << c.amp_levels << ',' << c.phase_levels << ',' << fmt(c.capacity) << '\n';
            j.push_back({{"amp_levels", c.amp_levels}, {"phase_levels", c.phase_levels}, {"capacity", c.capacity}});
        }
        write_text(out / "quantization.csv", csv.str());
        write_text(out / "quantization.json", j.dump(2) + "\n");
    }

    LabelSource parse_label_source(const std::string &s)
    {
        if (s == "model")
            return LabelSource::model;
        if (s == "truth")
            return LabelSource::truth;
        throw ValidationError("labels must be model or truth: " + s);
    }

    const SchemeResult &CapacityReport::at(const std::string &scheme) const
    {
        for (const auto &s : schemes)
            if (s.scheme == scheme)
                return s;
        throw ValidationError("no scheme in report: " + scheme);
    }

    CapacityReport capacity_report(const Dataset &d, const PipelineConfig &cfg, const fs::path &models,
                                   LabelSource labels)
    {
        const Plan p = make_plan(d, cfg);
        CapacityReport r;
        r.data_carrier = data_carrier_of(d);
        r.snr = measured_snr(d);
        r.windows = p.eval.size();

        const std::size_t ci = d.truth.carrier_index(r.data_carrier);
        double siso = 0.0, ol = 0.0;
        for (auto e : p.eval)
        {
            const auto h = d.truth.at(p.windows[e], ci);
            siso += mimo::siso_capacity(h, r.snr);
            ol += mimo::open_loop_capacity(h, r.snr, d.scenario.n_tx);
        }
        siso /= static_cast<double>(p.eval.size());
        ol /= static_cast<double>(p.eval.size());
        const double oracle = oracle_capacity(d, p, cfg.amp_levels, cfg.phase_levels, r.snr);
        const double sp = oracle * mimo::sounding_overhead_factor(cfg.sounding, cfg.sounding_mode);

        std::vector<std::pair<std::string, double>> rows{{"SISO", siso}, {"OL-MIMO", ol}, {"SP-MIMO", sp}};
        for (auto sensor : cfg.sensors)
        {
            double c = 0.0;
            if (labels == LabelSource::truth)
                c = oracle;
            else
            {
                std::vector<csi::LevelDictionary> dicts;
                const auto table = predict_levels(d, p, sensor, models, &dicts);
                c = mean_effective_capacity(d, p, table, dicts, r.snr);
            }
            rows.emplace_back("SkinMIMO-" + sim::to_string(sensor), c);
        }
        rows.emplace_back("Oracle", oracle);

        for (const auto &[name, mean] : rows)
            r.schemes.push_back(SchemeResult{name, mean, mean / siso, mean / ol, mean / oracle});
        return r;
    }

    void write_capacity_report(const CapacityReport &r, const fs::path &out, bool force)
    {
        prepare_output_dir(out, force);
        std::ostringstream csv;
        csv << "scheme,mean_capacity,vs_siso,vs_ol_mimo,vs_oracle\n";
        nlohmann::ordered_json j;
        j["data_carrier_hz"] = r.data_carrier;
        j["snr"] = r.snr;
        j["snr_db"] = 10.0 * std::log10(r.snr);
        j["windows"] = r.windows;
        j["schemes"] = nlohmann::ordered_json::array();
        for (const auto &s : r.schemes)
        {
            csv << s.scheme << ',' << fmt(s.mean) << ',' << fmt(s.vs_siso) << ',' << fmt(s.vs_ol) << ','
                << fmt(s.vs_oracle) << '\n';
            j["schemes"].push_back({{"scheme", s.scheme},
                                    {"mean_capacity", s.mean},
                                    {"vs_siso", s.vs_siso},
                                    {"vs_ol_mimo", s.vs_ol},
                                    {"vs_oracle", s.vs_oracle}});
        }
        write_text(out / "capacity.csv", csv.str());
        write_text(out / "capacity.json", j.dump(2) + "\n");
    }

    // Entries are preset names or "name:target_seconds:fade_depth".
    CoherenceConfig CoherenceConfig::from_config(const KeyValueConfig &c)
    {
        CoherenceConfig cc;
        std::vector<std::string> names{"resting", "browsing", "typing", "static:0.15:0"};
        if (c.has("coherence.activities"))
            names = c.get_list("coherence.activities");
        for (const auto &n : names)
        {
            const auto colon = n.find(':');
            if (colon == std::string::npos)
            {
                cc.profiles.push_back(sim::ActivityProfile::preset(n));
                continue;
            }
            const auto second = n.find(':', colon + 1);
            require(second != std::string::npos, "coherence.activities: expected name:target:fade, got " + n);
            sim::ActivityProfile a;
            a.name = n.substr(0, colon);
            try
            {
                a.target_coherence = std::stod(n.substr(colon + 1, second - colon - 1));
                a.fade_depth = std::stod(n.substr(second + 1));
            }
            catch (const std::exception &)
            {
                throw ValidationError("coherence.activities: bad number in " + n);
            }
            a.validate();
            cc.profiles.push_back(a);
        }
        if (c.has("coherence.thresholds"))
        {
            cc.thresholds.clear();
            for (const auto &t : c.get_list("coherence.thresholds"))
            {
                try
                {
                    cc.thresholds.push_back(std::stod(t));
                }
                catch (const std::exception &)
                {
                    throw ValidationError("coherence.thresholds: not a number: " + t);
                }
            }
        }
        cc.seeds = static_cast<std::size_t>(c.get_u64("coherence.seeds", cc.seeds));
        cc.seed = c.get_u64("coherence.seed", cc.seed);
        cc.probe.duration = c.get_double("coherence.duration", cc.probe.duration);
        require(cc.seeds >= 1, "coherence.seeds must be >= 1");
        for (double t : cc.thresholds)
            require(t > 0.0 && t < 1.0, "coherence thresholds must lie in (0, 1)");
        return cc;
    }

    std::vector<CoherenceRow> coherence_sweep(const CoherenceConfig &cfg)
    {
        std::vector<CoherenceRow> rows;
        for (std::size_t a = 0; a < cfg.profiles.size(); ++a)
        {
            const auto &prof = cfg.profiles[a];
            for (double thr : cfg.thresholds)
            {
                CoherenceRow row{prof.name, prof.target_coherence, prof.fade_depth, thr, cfg.seeds, std::nullopt};
                double sum = 0.0;
                bool infinite = false;
                for (std::size_t s = 0; s < cfg.seeds && !infinite; ++s)
                {
                    const auto t = sim::probe_coherence(prof, cfg.probe, derive_seed(cfg.seed, {a, s}), thr);
                    if (!t)
                        infinite = true;
                    else
                        sum += *t;
                }
                if (!infinite)
                    row.coherence = sum / static_cast<double>(cfg.seeds);
                rows.push_back(row);
            }
        }
        return rows;
    }

    void write_coherence(const std::vector<CoherenceRow> &rows, const fs::path &out, bool force)
    {
        prepare_output_dir(out, force);
        std::ostringstream csv;
        csv << "activity,target_ms,fade_depth,threshold,seeds,coherence_ms\n";
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto &r : rows)
        {
            const std::string value = r.coherence ? fmt(*r.coherence * 1e3) : "infinite";
            csv << r.activity << ',' << fmt(r.target * 1e3) << ',' << fmt(r.fade_depth) << ',' << fmt(r.threshold)
                << ',' << r.seeds << ',' << value << '\n';
            nlohmann::ordered_json e{{"activity", r.activity},
                                     {"target_ms", r.target * 1e3},
                                     {"fade_depth", r.fade_depth},
                                     {"threshold", r.threshold},
                                     {"seeds", r.seeds}};
            if (r.coherence)
                e["coherence_ms"] = *r.coherence * 1e3;
            else
                e["coherence_ms"] = "infinite";
            j.push_back(e);
        }
        write_text(out / "coherence.csv", csv.str());
        write_text(out / "coherence.json", j.dump(2) + "\n");
    }
}
