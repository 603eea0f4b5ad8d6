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

#ifndef SKINMIMO_BINIO_HPP
#define SKINMIMO_BINIO_HPP

#include "skinmimo/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

// Little-endian scalar encoding shared by the binary file formats.
namespace skinmimo::binio
{
    template <typename T>
    T to_little(T value)
    {
        static_assert(std::is_trivially_copyable_v<T>);
        if constexpr (std::endian::native == std::endian::big)
        {
            unsigned char bytes[sizeof(T)];
            std::memcpy(bytes, &value, sizeof(T));
            for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
                std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
            std::memcpy(&value, bytes, sizeof(T));
        }
        return value;
    }

    template <typename T>
    void put(std::ostream &os, T value)
    {
        value = to_little(value);
        os.write(reinterpret_cast<const char *>(&value), sizeof(T));
    }

    template <typename T>
    T get(std::istream &is)
    {
        T value{};
        is.read(reinterpret_cast<char *>(&value), sizeof(T));
        if (!is)
            throw ValidationError("binary read: unexpected end of file");
        return to_little(value);
    }

    inline std::ofstream open_out(const std::filesystem::path &path)
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os)
            throw MissingArtifactError("cannot open for writing: " + path.string());
        return os;
    }

    inline std::ifstream open_in(const std::filesystem::path &path)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is)
            throw MissingArtifactError("cannot open: " + path.string());
        return is;
    }
}

#endif
