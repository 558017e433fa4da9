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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace treedec {

/// Spatial link from a parent symbol to a child symbol. The ordinal is the
/// bit position inside a MaskVector and must not be reordered.
enum class Relation : std::uint8_t { Right = 0, Sup, Sub, Above, Below, Inside };

inline constexpr int kNumRelations = 6;

inline constexpr std::array<Relation, kNumRelations> kAllRelations{
    Relation::Right, Relation::Sup,   Relation::Sub,
    Relation::Above, Relation::Below, Relation::Inside};

/// Order in which the children of one node are emitted, both when writing
/// LaTeX and when linearizing a tree into triples.
inline constexpr std::array<Relation, kNumRelations> kEmissionOrder{
    Relation::Inside, Relation::Above, Relation::Below,
    Relation::Sub,    Relation::Sup,   Relation::Right};

constexpr int ordinal(Relation r) noexcept { return static_cast<int>(r); }

int emission_rank(Relation r) noexcept;

std::string_view relation_name(Relation r) noexcept;
std::optional<Relation> relation_from_name(std::string_view name) noexcept;

/// Six relation bits, written left to right as Right, Sup, Sub, Above,
/// Below, Inside (so "100001" allows Right and Inside).
class MaskVector {
  public:
    constexpr MaskVector() = default;
    constexpr explicit MaskVector(std::uint8_t bits) : bits_(bits & kFull) {}

    static constexpr MaskVector all() { return MaskVector(kFull); }
    static constexpr MaskVector none() { return MaskVector(0); }
    static MaskVector only(Relation r) { return MaskVector(bit(r)); }

    /// Throws Error{BadFormat} unless `s` is exactly six '0'/'1' characters.
    static MaskVector parse(std::string_view s);

    [[nodiscard]] constexpr bool test(Relation r) const noexcept { return (bits_ & bit(r)) != 0; }
    [[nodiscard]] constexpr bool any() const noexcept { return bits_ != 0; }
    [[nodiscard]] int count() const noexcept;
    [[nodiscard]] constexpr std::uint8_t bits() const noexcept { return bits_; }

    [[nodiscard]] MaskVector with(Relation r) const noexcept { return MaskVector(bits_ | bit(r)); }

    [[nodiscard]] std::string str() const;

    friend constexpr MaskVector operator|(MaskVector a, MaskVector b) { return MaskVector(a.bits_ | b.bits_); }
    friend constexpr MaskVector operator&(MaskVector a, MaskVector b) { return MaskVector(a.bits_ & b.bits_); }
    friend constexpr MaskVector operator^(MaskVector a, MaskVector b) { return MaskVector(a.bits_ ^ b.bits_); }
    constexpr MaskVector operator~() const { return MaskVector(~bits_ & kFull); }
    friend constexpr bool operator==(MaskVector a, MaskVector b) = default;

    /// Elementwise a <= b.
    [[nodiscard]] constexpr bool subset_of(MaskVector b) const noexcept { return (bits_ & ~b.bits_) == 0; }

  private:
    static constexpr std::uint8_t kFull = 0x3F;
    static constexpr std::uint8_t bit(Relation r) { return static_cast<std::uint8_t>(1u << ordinal(r)); }

    std::uint8_t bits_ = 0;
};

} // namespace treedec
