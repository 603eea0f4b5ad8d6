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

#include "skinmimo/kvconfig.hpp"
#include "skinmimo/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace skinmimo
{
    namespace
    {
        std::string trim(const std::string &s)
        {
            const auto b = s.find_first_not_of(" \t\r\n");
            if (b == std::string::npos)
                return {};
            const auto e = s.find_last_not_of(" \t\r\n");
            return s.substr(b, e - b + 1);
        }
    }

    std::string format_double(double v)
    {
        char buf[32];
        for (int precision = 15; precision <= 17; ++precision)
        {
            std::snprintf(buf, sizeof buf, "%.*g", precision, v);
            if (std::strtod(buf, nullptr) == v)
                break;
        }
        return buf;
    }

    KeyValueConfig KeyValueConfig::parse(const std::string &text, const std::string &origin)
    {
        KeyValueConfig cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line))
        {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.erase(hash);
            line = trim(line);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            require(eq != std::string::npos,
                    origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            require(!key.empty(), origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = trim(line.substr(eq + 1));
        }
        if (cfg.has("schema_version"))
        {
            const auto v = cfg.get_int("schema_version", 0);
            require(v == schema_version, origin + ": unsupported schema_version " + std::to_string(v));
        }
        return cfg;
    }

    KeyValueConfig KeyValueConfig::load(const std::filesystem::path &path)
    {
        std::ifstream is(path);
        if (!is)
            throw MissingArtifactError("cannot open config: " + path.string());
        std::stringstream ss;
        ss << is.rdbuf();
        auto cfg = parse(ss.str(), path.string());
        require(cfg.has("schema_version"), path.string() + ": missing schema_version");
        return cfg;
    }

    std::string KeyValueConfig::serialize() const
    {
        std::ostringstream os;
        os << "schema_version = " << schema_version << "\n";
        for (const auto &[k, v] : values_)
            if (k != "schema_version")
                os << k << " = " << v << "\n";
        return os.str();
    }

    void KeyValueConfig::save(const std::filesystem::path &path) const
    {
        std::ofstream os(path, std::ios::trunc);
        if (!os)
            throw MissingArtifactError("cannot open for writing: " + path.string());
        os << serialize();
    }

    void KeyValueConfig::set(const std::string &key, double value)
    {
        values_[key] = format_double(value);
    }

    void KeyValueConfig::set(const std::string &key, std::int64_t value)
    {
        values_[key] = std::to_string(value);
    }

    std::string KeyValueConfig::get_string(const std::string &key, const std::string &fallback) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double KeyValueConfig::get_double(const std::string &key, double fallback) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        char *end = nullptr;
        const double v = std::strtod(it->second.c_str(), &end);
        require(end && *end == '\0' && !it->second.empty(), "config: '" + key + "' is not a number: " + it->second);
        return v;
    }

    std::int64_t KeyValueConfig::get_int(const std::string &key, std::int64_t fallback) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        std::int64_t v = 0;
        const auto &s = it->second;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc() && p == s.data() + s.size(), "config: '" + key + "' is not an integer: " + s);
        return v;
    }

    std::uint64_t KeyValueConfig::get_u64(const std::string &key, std::uint64_t fallback) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        std::uint64_t v = 0;
        const auto &s = it->second;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc() && p == s.data() + s.size(), "config: '" + key + "' is not an unsigned integer: " + s);
        return v;
    }

    bool KeyValueConfig::get_bool(const std::string &key, bool fallback) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes")
            return true;
        if (it->second == "false" || it->second == "0" || it->second == "no")
            return false;
        throw ValidationError("config: '" + key + "' is not a boolean: " + it->second);
    }

    std::vector<std::string> KeyValueConfig::get_list(const std::string &key) const
    {
        std::vector<std::string> out;
        const auto it = values_.find(key);
        if (it == values_.end())
            return out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ','))
        {
            item = trim(item);
            if (!item.empty())
                out.push_back(item);
        }
        return out;
    }

    void KeyValueConfig::merge(const KeyValueConfig &other)
    {
        for (const auto &[k, v] : other.values_)
            values_[k] = v;
    }
}
