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

#include "treedec/vocab.hpp"

#include "treedec/error.hpp"

#include <fstream>
#include <sstream>

namespace treedec {

namespace {

constexpr std::string_view kBuiltinVocab = R"(# Toy symbol inventory with syntax classes.
# glyph  Class[|Class...]
<s>     Bin
</s>    End
0       Number
1       Number
2       Number
3       Number
4       Number
5       Number
6       Number
7       Number
8       Number
9       Number
a       Letter
b       Letter
c       Letter
i       Letter
k       Letter
n       Letter
x       Letter
y       Letter
e       Letter|Number
\alpha  Letter
\pi     Letter
\sin    Number
\cos    Number
+       Bin
-       Bin
=       Bin
\times  Bin
\to     Bin
\frac   Frac
\sqrt   Sqrt
\sum    BigOp
\prod   BigOp
\lim    Lim
)";

struct ClassRow {
    SymbolClass cls;
    std::string_view name;
    std::string_view bits;
};

// Bit order: Right, Sup, Sub, Above, Below, Inside.
constexpr ClassRow kClassRows[kNumSymbolClasses] = {
    {SymbolClass::Frac, "Frac", "110110"},
    {SymbolClass::Sqrt, "Sqrt", "100001"},
    {SymbolClass::BigOp, "BigOp", "111110"},
    {SymbolClass::Lim, "Lim", "100010"},
    {SymbolClass::Letter, "Letter", "111000"},
    {SymbolClass::Number, "Number", "110000"},
    {SymbolClass::Bin, "Bin", "100000"},
    {SymbolClass::End, "End", "000000"},
};

} // namespace

std::string_view symbol_class_name(SymbolClass c) noexcept {
    return kClassRows[static_cast<int>(c)].name;
}

std::optional<SymbolClass> symbol_class_from_name(std::string_view name) noexcept {
    for (const auto& row : kClassRows) {
        if (row.name == name) return row.cls;
    }
    return std::nullopt;
}

MaskVector class_mask(SymbolClass c) noexcept {
    return MaskVector::parse(kClassRows[static_cast<int>(c)].bits);
}

MaskVector or_combine(const std::vector<MaskVector>& masks) {
    if (masks.empty()) throw Error(ErrorCode::EmptyList, "or_combine needs at least one mask");
    MaskVector out;
    for (MaskVector m : masks) out = out | m;
    return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    Vocabulary v;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string glyph, classes, extra;
        if (!(fields >> glyph)) continue;
        if (!(fields >> classes) || (fields >> extra)) {
            throw Error(ErrorCode::BadFormat, "vocab line " + std::to_string(lineno) + ": expected 'glyph Class[|Class]'");
        }
        VocabEntry entry{glyph, {}, {}};
        std::vector<MaskVector> masks;
        std::size_t start = 0;
        while (start <= classes.size()) {
            auto bar = classes.find('|', start);
            auto name = std::string_view(classes).substr(start, bar == std::string::npos ? std::string::npos : bar - start);
            auto cls = symbol_class_from_name(name);
            if (!cls) {
                throw Error(ErrorCode::BadFormat, "vocab line " + std::to_string(lineno) + ": unknown class '" + std::string(name) + "'");
            }
            entry.classes.push_back(*cls);
            masks.push_back(class_mask(*cls));
            if (bar == std::string::npos) break;
            start = bar + 1;
        }
        entry.mask = or_combine(masks);
        if (v.index_.contains(glyph)) {
            throw Error(ErrorCode::BadFormat, "vocab line " + std::to_string(lineno) + ": duplicate glyph '" + glyph + "'");
        }
        v.index_.emplace(glyph, static_cast<int>(v.entries_.size()));
        v.entries_.push_back(std::move(entry));
    }
    auto s = v.find("<s>");
    auto e = v.find("</s>");
    if (!s || !e) throw Error(ErrorCode::BadFormat, "vocabulary must define <s> and </s>");
    v.start_ = *s;
    v.end_ = *e;
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open vocabulary '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const Vocabulary& Vocabulary::builtin() {
    static const Vocabulary v = parse(kBuiltinVocab);
    return v;
}

std::string_view Vocabulary::builtin_text() { return kBuiltinVocab; }

std::optional<SymbolId> Vocabulary::find(std::string_view glyph) const {
    auto it = index_.find(std::string(glyph));
    if (it == index_.end()) return std::nullopt;
    return SymbolId{it->second};
}

SymbolId Vocabulary::at(std::string_view glyph) const {
    if (auto id = find(glyph)) return *id;
    throw Error(ErrorCode::UnknownSymbol, "unknown symbol '" + std::string(glyph) + "'");
}

const VocabEntry& Vocabulary::entry(SymbolId id) const {
    if (!contains(id)) throw Error(ErrorCode::UnknownSymbol, "symbol index " + std::to_string(id.index) + " out of range");
    return entries_[id.index];
}

const std::string& Vocabulary::glyph(SymbolId id) const { return entry(id).glyph; }

bool Vocabulary::has_class(SymbolId id, SymbolClass c) const {
    for (SymbolClass x : entry(id).classes) {
        if (x == c) return true;
    }
    return false;
}

std::string Vocabulary::to_text() const {
    std::string out;
    for (const auto& e : entries_) {
        out += e.glyph;
        out += ' ';
        for (std::size_t i = 0; i < e.classes.size(); ++i) {
            if (i) out += '|';
            out += symbol_class_name(e.classes[i]);
        }
        out += '\n';
    }
    return out;
}

} // namespace treedec
