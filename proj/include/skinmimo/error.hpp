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

#ifndef SKINMIMO_ERROR_HPP
#define SKINMIMO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace skinmimo
{
    // Bad input: shapes, ranges, malformed files. CLI exit code 2.
    class ValidationError : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    // Mathematically undefined request (e.g. zero reference amplitude).
    class DomainError : public ValidationError
    {
    public:
        using ValidationError::ValidationError;
    };

    // A file or trained model the command depends on does not exist. CLI exit code 3.
    class MissingArtifactError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // NaN/Inf produced where a finite result is required. CLI exit code 4.
    class NumericalError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    inline void require(bool condition, const std::string &message)
    {
        if (!condition)
            throw ValidationError(message);
    }
}

#endif
