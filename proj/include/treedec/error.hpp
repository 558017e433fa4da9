// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace treedec {

enum class ErrorCode {
    UnknownSymbol,
    UnbalancedBraces,
    IllegalRelation,
    DuplicateRelation,
    SyntaxError,
    DanglingParent,
    MultipleRoots,
    BadOrder,
    EmptyList,
    UnknownKey,
    ShapeMismatch,
    ZeroDim,
    AllMasked,
    DomainError,
    NonFinite,
    StepTooEarly,
    BadDims,
    LengthMismatch,
    BadFormat,
    IoError,
    ConfigError,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type. `position` is a
// byte offset into the parsed input when one is meaningful, npos otherwise.
class Error : public std::runtime_error {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    Error(ErrorCode code, const std::string& what, std::size_t position = npos)
      : std::runtime_error(what), code_(code), position_(position) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] std::size_t position() const noexcept { return position_; }

  private:
    ErrorCode code_;
    std::size_t position_;
};

} // namespace treedec
