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

#ifndef SKINMIMO_RNG_HPP
#define SKINMIMO_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace skinmimo
{
    using Rng = std::mt19937_64;

    inline std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    // Independent stream seed for (seed, tag, index...).
    inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
    {
        std::uint64_t s = splitmix64(seed);
        for (auto p : path)
            s = splitmix64(s ^ splitmix64(p + 0x632BE59BD9B4E019ull));
        return s;
    }

    // Box-Muller on the 53-bit uniform; identical across standard libraries,
    // unlike std::normal_distribution.
    class Gaussian
    {
    public:
        explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

        double operator()()
        {
            if (has_spare_)
            {
                has_spare_ = false;
                return spare_;
            }
            double u1 = 0.0;
            do
                u1 = uniform();
            while (u1 <= 0.0);
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double a = 6.283185307179586 * u2;
            spare_ = r * std::sin(a);
            has_spare_ = true;
            return r * std::cos(a);
        }

        double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
        Rng &engine() { return rng_; }

    private:
        Rng rng_;
        double spare_ = 0.0;
        bool has_spare_ = false;
    };
}

#endif
