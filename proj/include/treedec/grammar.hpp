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
#include "treedec/symtree.hpp"
#include "treedec/vocab.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace treedec::grammar {

/// How the static and the used-relation masks are merged.
///   AndNot: static & ~dynamic; a relation outside the static mask can never
///           become legal.
///   Xor:    static ^ dynamic, the literal formulation; identical to AndNot
///           while every recorded relation was legal.
enum class MaskCombine { AndNot, Xor };

/// What indexes the rows of the used-relation matrix.
///   Instance: one row per decoded node (decode position).
///   Symbol:   one row per vocabulary symbol, shared by every node that
///             carries the same glyph.
enum class DynamicKey { Instance, Symbol };

std::string_view mask_combine_name(MaskCombine m);
std::string_view dynamic_key_name(DynamicKey k);
MaskCombine parse_mask_combine(std::string_view s);
DynamicKey parse_dynamic_key(std::string_view s);

/// One row per vocabulary symbol. Immutable and shareable.
class StaticMaskTable {
  public:
    static StaticMaskTable from_vocabulary(const Vocabulary& vocab);

    /// `glyph SPACE 6-bit-string` per line. Every vocabulary symbol must
    /// appear exactly once.
    static StaticMaskTable parse(std::string_view text, const Vocabulary& vocab);
    [[nodiscard]] std::string to_text(const Vocabulary& vocab) const;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(rows_.size()); }
    [[nodiscard]] MaskVector row(SymbolId sym) const;

  private:
    std::vector<MaskVector> rows_;
};

/// Throws Error{UnknownSymbol} when `sym` is outside the table.
MaskVector static_mask(SymbolId sym, const StaticMaskTable& table);

/// Per-decode record of relations already emitted from each parent key.
/// Updates return a new state; bits are only ever set.
class DynamicMaskState {
  public:
    /// `symbol_count` bounds the keys in Symbol mode; Instance mode accepts
    /// any decode position >= 1 and grows on demand.
    DynamicMaskState(DynamicKey mode, int symbol_count);

    [[nodiscard]] DynamicKey mode() const noexcept { return mode_; }
    [[nodiscard]] int step() const noexcept { return step_; }

    /// Row index for `parent` under this state's keying. Throws Error{UnknownKey}.
    [[nodiscard]] int key(const Node& parent) const;

    [[nodiscard]] MaskVector row(int key) const;
    [[nodiscard]] int popcount() const;
    [[nodiscard]] int rows() const noexcept { return static_cast<int>(rows_.size()); }

  private:
    friend DynamicMaskState update(const Node& parent, Relation rel, const DynamicMaskState& state);

    DynamicKey mode_;
    int symbol_count_;
    int step_ = 0;
    std::vector<MaskVector> rows_;
};

MaskVector dynamic_mask(const Node& parent, const DynamicMaskState& state);

/// Records `rel` as used by `parent`. Saturating: repeats leave the bit at 1.
DynamicMaskState update(const Node& parent, Relation rel, const DynamicMaskState& state);

/// Relations still legal from `parent`.
MaskVector step_mask(const Node& parent, const StaticMaskTable& table, const DynamicMaskState& state,
                     MaskCombine combine = MaskCombine::AndNot);

struct GrammarOptions {
    MaskCombine combine = MaskCombine::AndNot;
    DynamicKey key = DynamicKey::Instance;
};

struct RuleViolation {
    int step = 0; // 1-based position of the offending triple
    SymbolId parent_sym;
    int parent_pos = 0;
    Relation rel = Relation::Right;
    MaskVector mask; // legal relations at emission time
    std::string reason;
};

struct ViolationReport {
    std::vector<RuleViolation> violations;
    [[nodiscard]] bool empty() const noexcept { return violations.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return violations.size(); }
};

/// Replays the sequence through step_mask/update and lists every triple
/// whose relation bit was 0 when it was emitted. Structurally broken
/// triples (unknown parent, missing relation) are reported too.
ViolationReport validate_triples(const TripleSeq& seq, const StaticMaskTable& table, GrammarOptions opts = {});

/// Line-oriented diagnostic: one `step N: parent <glyph>@<pos> relation
/// <Rel> mask <bits> (<reason>)` line per violation.
std::string format_report(const ViolationReport& report, const Vocabulary& vocab = Vocabulary::builtin());

} // namespace treedec::grammar
