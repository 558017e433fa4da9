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

#include "treedec/grammar.hpp"

#include "treedec/error.hpp"

#include <sstream>

namespace treedec::grammar {

std::string_view mask_combine_name(MaskCombine m) { return m == MaskCombine::AndNot ? "and_not" : "xor"; }
std::string_view dynamic_key_name(DynamicKey k) { return k == DynamicKey::Instance ? "instance" : "symbol"; }

MaskCombine parse_mask_combine(std::string_view s) {
    if (s == "and_not") return MaskCombine::AndNot;
    if (s == "xor") return MaskCombine::Xor;
    throw Error(ErrorCode::ConfigError, "mask_combine must be and_not|xor, got '" + std::string(s) + "'");
}

DynamicKey parse_dynamic_key(std::string_view s) {
    if (s == "instance") return DynamicKey::Instance;
    if (s == "symbol") return DynamicKey::Symbol;
    throw Error(ErrorCode::ConfigError, "dynamic_key must be instance|symbol, got '" + std::string(s) + "'");
}

StaticMaskTable StaticMaskTable::from_vocabulary(const Vocabulary& vocab) {
    StaticMaskTable t;
    t.rows_.reserve(vocab.size());
    for (const auto& e : vocab.entries()) t.rows_.push_back(e.mask);
    return t;
}

StaticMaskTable StaticMaskTable::parse(std::string_view text, const Vocabulary& vocab) {
    StaticMaskTable t;
    t.rows_.assign(vocab.size(), MaskVector{});
    std::vector<bool> seen(vocab.size(), false);
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream f(line);
        std::string glyph, bits, extra;
        if (!(f >> glyph)) continue;
        if (!(f >> bits) || (f >> extra)) {
            throw Error(ErrorCode::BadFormat, "mask table line " + std::to_string(lineno) + ": expected 'glyph bits'");
        }
        const SymbolId id = vocab.at(glyph);
        if (seen[id.index]) {
            throw Error(ErrorCode::BadFormat, "mask table line " + std::to_string(lineno) + ": duplicate '" + glyph + "'");
        }
        seen[id.index] = true;
        t.rows_[id.index] = MaskVector::parse(bits);
    }
    for (int i = 0; i < vocab.size(); ++i) {
        if (!seen[i]) throw Error(ErrorCode::BadFormat, "mask table lacks '" + vocab.glyph(SymbolId{i}) + "'");
    }
    return t;
}

std::string StaticMaskTable::to_text(const Vocabulary& vocab) const {
    std::string out;
    for (int i = 0; i < size(); ++i) {
        out += vocab.glyph(SymbolId{i});
        out += ' ';
        out += rows_[i].str();
        out += '\n';
    }
    return out;
}

MaskVector StaticMaskTable::row(SymbolId sym) const {
    if (sym.index < 0 || sym.index >= size()) {
        throw Error(ErrorCode::UnknownSymbol, "symbol index " + std::to_string(sym.index) + " outside mask table");
    }
    return rows_[sym.index];
}

MaskVector static_mask(SymbolId sym, const StaticMaskTable& table) { return table.row(sym); }

DynamicMaskState::DynamicMaskState(DynamicKey mode, int symbol_count) : mode_(mode), symbol_count_(symbol_count) {
    if (mode_ == DynamicKey::Symbol) rows_.assign(symbol_count, MaskVector{});
}

int DynamicMaskState::key(const Node& parent) const {
    if (mode_ == DynamicKey::Symbol) {
        if (parent.sym.index < 0 || parent.sym.index >= symbol_count_) {
            throw Error(ErrorCode::UnknownKey, "symbol index " + std::to_string(parent.sym.index) + " is not a mask key");
        }
        return parent.sym.index;
    }
    if (parent.order < 1) {
        throw Error(ErrorCode::UnknownKey, "decode position " + std::to_string(parent.order) + " is not a mask key");
    }
    return parent.order - 1;
}

MaskVector DynamicMaskState::row(int key) const {
    if (key < 0) throw Error(ErrorCode::UnknownKey, "negative mask key");
    if (key >= rows()) return MaskVector{};
    return rows_[key];
}

int DynamicMaskState::popcount() const {
    int n = 0;
    for (MaskVector m : rows_) n += m.count();
    return n;
}

MaskVector dynamic_mask(const Node& parent, const DynamicMaskState& state) { return state.row(state.key(parent)); }

DynamicMaskState update(const Node& parent, Relation rel, const DynamicMaskState& state) {
    DynamicMaskState next = state;
    const int k = next.key(parent);
    if (k >= next.rows()) next.rows_.resize(k + 1);
    next.rows_[k] = next.rows_[k].with(rel);
    ++next.step_;
    return next;
}

MaskVector step_mask(const Node& parent, const StaticMaskTable& table, const DynamicMaskState& state,
                     MaskCombine combine) {
    const MaskVector s = static_mask(parent.sym, table);
    const MaskVector d = dynamic_mask(parent, state);
    return combine == MaskCombine::AndNot ? (s & ~d) : (s ^ d);
}

ViolationReport validate_triples(const TripleSeq& seq, const StaticMaskTable& table, GrammarOptions opts) {
    ViolationReport report;
    DynamicMaskState state(opts.key, table.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const Triple& t = seq[i];
        const int step = static_cast<int>(i) + 1;
        if (i == 0 && t.parent_pos == 0) continue;
        RuleViolation v;
        v.step = step;
        v.parent_pos = t.parent_pos;
        if (t.parent_pos < 1 || t.parent_pos >= step) {
            v.reason = "parent position does not reference an earlier node";
            report.violations.push_back(v);
            continue;
        }
        const Node parent{seq[t.parent_pos - 1].child.sym, t.parent_pos};
        v.parent_sym = parent.sym;
        if (!t.rel) {
            v.reason = "missing relation";
            report.violations.push_back(v);
            continue;
        }
        v.rel = *t.rel;
        v.mask = step_mask(parent, table, state, opts.combine);
        if (!v.mask.test(*t.rel)) {
            v.reason = std::string(relation_name(*t.rel)) + " bit is 0: " +
                       (static_mask(parent.sym, table).test(*t.rel) ? "relation already used" : "not in the static row");
            report.violations.push_back(v);
        }
        state = update(parent, *t.rel, state);
    }
    return report;
}

std::string format_report(const ViolationReport& report, const Vocabulary& vocab) {
    std::string out;
    for (const auto& v : report.violations) {
        out += "step " + std::to_string(v.step) + ": parent ";
        out += vocab.contains(v.parent_sym) ? vocab.glyph(v.parent_sym) : std::string("?");
        out += "@" + std::to_string(v.parent_pos);
        out += " relation ";
        out += relation_name(v.rel);
        out += " mask " + v.mask.str();
        out += " (" + v.reason + ")\n";
    }
    return out;
}

} // namespace treedec::grammar
