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

#ifndef SKINMIMO_KVCONFIG_HPP
#define SKINMIMO_KVCONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skinmimo
{
    // Flat "key = value" text with '#' comments. Keys may be dotted
    // ("imu.gyro_gain"). Every file carries "schema_version = <n>".
    //
    //     schema_version = 1
    //     # comment
    //     sample_rate = 300
    //     pilots = 90:0, 110:0, 130:0
    //
    // Keys are kept sorted so serialization is canonical.
    class KeyValueConfig
    {
    public:
        static constexpr int schema_version = 1;

        static KeyValueConfig parse(const std::string &text, const std::string &origin = "<string>");
        static KeyValueConfig load(const std::filesystem::path &path);

        std::string serialize() const;
        void save(const std::filesystem::path &path) const;

        bool has(const std::string &key) const { return values_.count(key) != 0; }
        void set(const std::string &key, const std::string &value) { values_[key] = value; }
        void set(const std::string &key, double value);
        void set(const std::string &key, std::int64_t value);

        std::string get_string(const std::string &key, const std::string &fallback) const;
        double get_double(const std::string &key, double fallback) const;
        std::int64_t get_int(const std::string &key, std::int64_t fallback) const;
        std::uint64_t get_u64(const std::string &key, std::uint64_t fallback) const;
        bool get_bool(const std::string &key, bool fallback) const;
        std::vector<std::string> get_list(const std::string &key) const; // comma separated

        const std::map<std::string, std::string> &values() const { return values_; }

        // Overlay: keys present in `other` replace ours.
        void merge(const KeyValueConfig &other);

    private:
        std::map<std::string, std::string> values_;
    };

    // Shortest round-tripping decimal form.
    std::string format_double(double v);
}

#endif
