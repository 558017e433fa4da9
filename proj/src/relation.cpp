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

#include "treedec/error.hpp"
#include "treedec/relation.hpp"

#include <bit>

namespace treedec {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::UnbalancedBraces: return "UnbalancedBraces";
    case ErrorCode::IllegalRelation: return "IllegalRelation";
    case ErrorCode::DuplicateRelation: return "DuplicateRelation";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::DanglingParent: return "DanglingParent";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::BadOrder: return "BadOrder";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ZeroDim: return "ZeroDim";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::StepTooEarly: return "StepTooEarly";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

int emission_rank(Relation r) noexcept {
    for (int i = 0; i < kNumRelations; ++i) {
        if (kEmissionOrder[i] == r) return i;
    }
    return kNumRelations;
}

std::string_view relation_name(Relation r) noexcept {
    switch (r) {
    case Relation::Right: return "Right";
    case Relation::Sup: return "Sup";
    case Relation::Sub: return "Sub";
    case Relation::Above: return "Above";
    case Relation::Below: return "Below";
    case Relation::Inside: return "Inside";
    }
    return "?";
}

std::optional<Relation> relation_from_name(std::string_view name) noexcept {
    for (Relation r : kAllRelations) {
        if (relation_name(r) == name) return r;
    }
    return std::nullopt;
}

MaskVector MaskVector::parse(std::string_view s) {
    if (s.size() != kNumRelations) {
        throw Error(ErrorCode::BadFormat, "mask must have 6 bits, got '" + std::string(s) + "'");
    }
    std::uint8_t bits = 0;
    for (int i = 0; i < kNumRelations; ++i) {
        if (s[i] == '1') {
            bits |= static_cast<std::uint8_t>(1u << i);
        } else if (s[i] != '0') {
            throw Error(ErrorCode::BadFormat, "mask bits must be 0/1, got '" + std::string(s) + "'");
        }
    }
    return MaskVector(bits);
}

int MaskVector::count() const noexcept { return std::popcount(bits_); }

std::string MaskVector::str() const {
    std::string s(kNumRelations, '0');
    for (int i = 0; i < kNumRelations; ++i) {
        if (bits_ & (1u << i)) s[i] = '1';
    }
    return s;
}

} // namespace treedec
