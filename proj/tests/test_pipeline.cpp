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

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sys/wait.h>

using namespace skinmimo;
namespace fs = std::filesystem;

namespace
{
    fs::path scratch(const std::string &name)
    {
        const auto p = fs::temp_directory_path() / ("skinmimo_pipeline_" + name);
        fs::remove_all(p);
        return p;
    }

    std::string slurp(const fs::path &p)
    {
        std::ifstream is(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(is), {}};
    }

    // Every regular file under a and b exists in both with identical bytes.
    bool same_tree(const fs::path &a, const fs::path &b)
    {
        std::set<fs::path> fa, fb;
        for (const auto &e : fs::recursive_directory_iterator(a))
            if (e.is_regular_file())
                fa.insert(fs::relative(e.path(), a));
        for (const auto &e : fs::recursive_directory_iterator(b))
            if (e.is_regular_file())
                fb.insert(fs::relative(e.path(), b));
        if (fa != fb || fa.empty())
            return false;
        for (const auto &f : fa)
            if (slurp(a / f) != slurp(b / f))
                return false;
        return true;
    }

    sim::SimScenario small_scenario()
    {
        auto sc = sim::default_scenario();
        sc.duration = 30.0;
        return sc;
    }

    pipeline::PipelineConfig light_config()
    {
        KeyValueConfig c;
        c.set("train.epochs", std::int64_t{2});
        c.set("train.hidden", std::int64_t{4});
        return pipeline::PipelineConfig::from_config(c);
    }

    int run_cli(const std::string &args)
    {
        const std::string cmd = std::string(SKINMIMO_CLI) + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    const pipeline::Dataset &shared_dataset()
    {
        static const auto d = pipeline::make_dataset(small_scenario());
        return d;
    }
}

TEST_CASE("dataset files are complete, reloadable and reproducible")
{
    const auto a = scratch("gen_a"), b = scratch("gen_b");
    pipeline::write_dataset(shared_dataset(), a, false);
    pipeline::write_dataset(pipeline::make_dataset(small_scenario()), b, false);
    CHECK(same_tree(a, b));
    for (const auto *f : {"manifest.cfg", "scenario.cfg", "rx0.bin", "rx1.bin", "imu.bin", "truth.csv",
                          "noise_rx0.bin", "noise_rx1.bin"})
        CHECK(fs::exists(a / f));

    CHECK_THROWS_AS(pipeline::write_dataset(shared_dataset(), a, false), ValidationError);
    CHECK_NOTHROW(pipeline::write_dataset(shared_dataset(), a, true));

    const auto d = pipeline::load_dataset(a);
    CHECK(d.imu.size() == 9000);
    CHECK(d.truth.n_windows() == 300);
    CHECK(d.scenario.to_config().serialize() == small_scenario().to_config().serialize());
    CHECK(std::equal(d.rx[1].samples().begin(), d.rx[1].samples().end(),
                     shared_dataset().rx[1].samples().begin()));
    CHECK_THROWS_AS(pipeline::load_dataset(scratch("absent")), MissingArtifactError);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("noise floor recording matches the configured receiver noise")
{
    const auto &d = shared_dataset();
    const double sigma = d.scenario.noise_std();
    for (const auto &w : d.noise_rx)
        CHECK(dsp::mean_power(w) == doctest::Approx(sigma * sigma).epsilon(0.05));
    CHECK(pipeline::measured_snr(d) ==
          doctest::Approx(0.5 * d.scenario.tx_amplitude * d.scenario.tx_amplitude / (sigma * sigma)).epsilon(0.05));
}

TEST_CASE("slots and plan")
{
    const auto &d = shared_dataset();
    const auto cfg = light_config();
    const auto p = pipeline::make_plan(d, cfg);
    CHECK(p.slots.size() == 24);
    std::set<std::string> names;
    for (const auto &s : p.slots)
        names.insert(s.name());
    CHECK(names.size() == 24);
    CHECK(names.count("110hz_rx1_phase") == 1);

    const std::size_t guard = csi::guard_windows(cfg.frontend, 300.0, 30);
    CHECK(p.windows.front() == guard);
    CHECK(p.windows.size() == 300 - 2 * guard);
    std::size_t total = 0;
    for (const auto &f : p.folds)
        total += f.size();
    CHECK(total == p.windows.size());
    CHECK(p.eval == p.folds[0]);
    CHECK(p.train.size() + p.folds[0].size() == p.windows.size());

    // amplitude bins span the training split exactly
    const auto dict = pipeline::slot_dictionary(d, p, p.slots[0], 16);
    double lo = 1e300, hi = -1e300;
    for (auto i : p.train)
    {
        lo = std::min(lo, pipeline::label_value(d, p.slots[0], p.windows[i]));
        hi = std::max(hi, pipeline::label_value(d, p.slots[0], p.windows[i]));
    }
    CHECK(dict.lower() == lo);
    CHECK(dict.upper() == hi);
}

TEST_CASE("capacity report on truth labels equals the quantized oracle")
{
    const auto &d = shared_dataset();
    auto cfg = light_config();
    cfg.sensors = {sim::SensorSet::gyro, sim::SensorSet::acc};
    const auto r = pipeline::capacity_report(d, cfg, "", pipeline::LabelSource::truth);
    const auto cells = pipeline::quantization_study(d, cfg, {16}, {32});
    REQUIRE(cells.size() == 1);
    CHECK(std::abs(r.at("SkinMIMO-GYRO").mean - cells[0].capacity) < 1e-9);
    CHECK(std::abs(r.at("Oracle").mean - cells[0].capacity) < 1e-9);

    const double siso = r.at("SISO").mean, ol = r.at("OL-MIMO").mean, oracle = r.at("Oracle").mean;
    for (const auto &s : r.schemes)
    {
        CHECK(std::abs(s.vs_siso - s.mean / siso) < 1e-9);
        CHECK(std::abs(s.vs_ol - s.mean / ol) < 1e-9);
        CHECK(std::abs(s.vs_oracle - s.mean / oracle) < 1e-9);
        CHECK(s.mean >= 0.0);
    }
    CHECK(std::abs(r.at("SP-MIMO").mean - oracle * 70.0 / 150.0) < 1e-9);
    CHECK_THROWS_AS(r.at("MIMO-X"), ValidationError);
}

TEST_CASE("missing checkpoints are listed")
{
    const auto &d = shared_dataset();
    const auto p = pipeline::make_plan(d, light_config());
    const auto empty = scratch("nomodels");
    fs::create_directories(empty);
    try
    {
        pipeline::predict_levels(d, p, sim::SensorSet::gyro, empty);
        FAIL("expected MissingArtifactError");
    }
    catch (const MissingArtifactError &e)
    {
        const std::string what = e.what();
        CHECK(what.find("90hz_rx0_amp") != std::string::npos);
        CHECK(what.find("140hz_rx1_phase") != std::string::npos);
    }
    fs::remove_all(empty);
}

TEST_CASE("train, predict and report are replayable")
{
    const auto &d = shared_dataset();
    const auto cfg = light_config();
    const auto m1 = scratch("m1"), m2 = scratch("m2");
    const auto s1 = pipeline::run_train(d, cfg, m1, false);
    pipeline::run_train(d, cfg, m2, false);
    CHECK(same_tree(m1, m2));
    CHECK(s1.scores.size() == 24);
    for (const auto &s : s1.scores)
        CHECK((s.report.tpr >= 0.0 && s.report.tpr <= 1.0));

    const auto p1 = scratch("p1"), p2 = scratch("p2");
    pipeline::run_predict(d, cfg, m1, p1, false);
    pipeline::run_predict(d, cfg, m1, p2, false);
    CHECK(same_tree(p1, p2));

    const auto r1 = pipeline::capacity_report(d, cfg, m1, pipeline::LabelSource::model);
    const auto c1 = scratch("c1"), c2 = scratch("c2");
    pipeline::write_capacity_report(r1, c1, false);
    pipeline::write_capacity_report(pipeline::capacity_report(d, cfg, m2, pipeline::LabelSource::model), c2, false);
    CHECK(same_tree(c1, c2));
    CHECK(r1.at("Oracle").mean >= r1.at("SkinMIMO-GYRO").mean);

    for (const auto &p : {m1, m2, p1, p2, c1, c2})
        fs::remove_all(p);
}

TEST_CASE("pipeline config validation")
{
    KeyValueConfig c;
    c.set("quant.amp_levels", std::int64_t{1});
    CHECK_THROWS_AS(pipeline::PipelineConfig::from_config(c), ValidationError);
    KeyValueConfig e;
    e.set("eval_windows", "some");
    CHECK_THROWS_AS(pipeline::PipelineConfig::from_config(e), ValidationError);
    const auto round = pipeline::PipelineConfig::from_config(light_config().to_config());
    CHECK(round.to_config().serialize() == light_config().to_config().serialize());
}

TEST_CASE("coherence command rows")
{
    KeyValueConfig c;
    c.set("coherence.activities", "typing,still:0.15:0");
    c.set("coherence.thresholds", "0.8,0.9");
    c.set("coherence.seeds", std::int64_t{2});
    c.set("coherence.duration", 20.0);
    const auto rows = pipeline::coherence_sweep(pipeline::CoherenceConfig::from_config(c));
    REQUIRE(rows.size() == 4);
    REQUIRE(rows[0].coherence.has_value());
    REQUIRE(rows[1].coherence.has_value());
    CHECK(*rows[1].coherence <= *rows[0].coherence);
    CHECK(!rows[2].coherence.has_value());
    CHECK(!rows[3].coherence.has_value());

    const auto out = scratch("coh");
    pipeline::write_coherence(rows, out, false);
    CHECK(slurp(out / "coherence.csv").find("still,150,0,0.8,2,infinite") != std::string::npos);
    fs::remove_all(out);
}

TEST_CASE("cli exit codes and byte-identical reruns")
{
    const auto a = scratch("cli_a"), b = scratch("cli_b");
    const auto cfg = scratch("cli_cfg");
    fs::create_directories(cfg);
    std::ofstream(cfg / "short.cfg") << "schema_version = 1\nduration = 20\n";
    std::ofstream(cfg / "bad.cfg") << "duration = 20\n";

    const std::string conf = " --config " + (cfg / "short.cfg").string();
    CHECK(run_cli("generate --out " + a.string() + conf) == 0);
    CHECK(run_cli("generate --out " + b.string() + conf) == 0);
    CHECK(same_tree(a, b));
    CHECK(run_cli("generate --out " + a.string() + conf) == 2);
    CHECK(run_cli("generate --force --out " + a.string() + conf + " --seed 5") == 0);
    CHECK(!same_tree(a, b));

    CHECK(run_cli("generate --out " + (cfg / "x").string() + " --config " + (cfg / "bad.cfg").string()) == 2);
    CHECK(run_cli("generate --out " + (cfg / "x").string() + " --config " + (cfg / "absent.cfg").string()) == 3);
    CHECK(run_cli("train --dataset " + (cfg / "nothing").string() + " --out " + (cfg / "m").string()) == 3);
    CHECK(run_cli("capacity-report --dataset " + b.string() + " --out " + (cfg / "r").string()) == 2);
    CHECK(run_cli("capacity-report --dataset " + b.string() + " --models " + (cfg / "none").string() + " --out " +
                  (cfg / "r").string()) == 3);
    CHECK(run_cli("launch") == 2);

    std::ofstream(cfg / "quiet.cfg") << "schema_version = 1\nduration = 20\nsnr_db = none\n";
    const auto q = scratch("cli_q");
    CHECK(run_cli("generate --out " + q.string() + " --config " + (cfg / "quiet.cfg").string()) == 0);
    CHECK(run_cli("quantization-study --dataset " + q.string() + " --out " + (cfg / "qs").string()) == 4);

    const auto qa = scratch("cli_qa"), qb = scratch("cli_qb");
    CHECK(run_cli("quantization-study --dataset " + b.string() + " --out " + qa.string()) == 0);
    CHECK(run_cli("quantization-study --dataset " + b.string() + " --out " + qb.string()) == 0);
    CHECK(same_tree(qa, qb));

    for (const auto &p : {a, b, cfg, q, qa, qb})
        fs::remove_all(p);
}
