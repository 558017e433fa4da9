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

#include "treedec/relation.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace treedec {

/// Index into a Vocabulary. Cheap to copy; compare by index.
struct SymbolId {
    int index = -1;
    friend constexpr bool operator==(SymbolId, SymbolId) = default;
    friend constexpr auto operator<=>(SymbolId, SymbolId) = default;
};

/// Syntax classes that share one static relation mask. `End` is the
/// end-of-sequence marker, which never parents anything.
enum class SymbolClass { Frac, Sqrt, BigOp, Lim, Letter, Number, Bin, End };

inline constexpr int kNumSymbolClasses = 8;

std::string_view symbol_class_name(SymbolClass c) noexcept;
std::optional<SymbolClass> symbol_class_from_name(std::string_view name) noexcept;

/// Static relation mask of a class.
MaskVector class_mask(SymbolClass c) noexcept;

/// Elementwise OR of a non-empty list; throws Error{EmptyList} otherwise.
MaskVector or_combine(const std::vector<MaskVector>& masks);

struct VocabEntry {
    std::string glyph;
    std::vector<SymbolClass> classes; // more than one for multi-role glyphs
    MaskVector mask;                  // OR over the class masks
};

/// Bijective glyph <-> index table with per-symbol class assignment.
///
/// Text format, one symbol per line, '#' starts a comment:
///
///     glyph  Class[|Class...]
///
/// The start marker `<s>` and end marker `</s>` must be present.
class Vocabulary {
  public:
    static Vocabulary parse(std::string_view text);
    static Vocabulary load(const std::string& path);

    /// Compiled-in toy vocabulary (identical to data/vocab.txt).
    static const Vocabulary& builtin();
    static std::string_view builtin_text();

    [[nodiscard]] int size() const noexcept { return static_cast<int>(entries_.size()); }
    [[nodiscard]] bool contains(SymbolId id) const noexcept { return id.index >= 0 && id.index < size(); }

    [[nodiscard]] std::optional<SymbolId> find(std::string_view glyph) const;
    /// Throws Error{UnknownSymbol}.
    [[nodiscard]] SymbolId at(std::string_view glyph) const;

    [[nodiscard]] const std::string& glyph(SymbolId id) const;
    [[nodiscard]] const VocabEntry& entry(SymbolId id) const;
    [[nodiscard]] MaskVector mask(SymbolId id) const { return entry(id).mask; }
    [[nodiscard]] bool has_class(SymbolId id, SymbolClass c) const;

    [[nodiscard]] SymbolId start() const noexcept { return start_; }
    [[nodiscard]] SymbolId end() const noexcept { return end_; }

    [[nodiscard]] const std::vector<VocabEntry>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::string to_text() const;

  private:
    std::vector<VocabEntry> entries_;
    std::unordered_map<std::string, int> index_;
    SymbolId start_;
    SymbolId end_;
};

} // namespace treedec
