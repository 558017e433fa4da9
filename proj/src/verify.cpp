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

#include "treedec/verify.hpp"

#include "treedec/data.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace treedec::verify {

using grammar::DynamicKey;
using grammar::DynamicMaskState;
using grammar::MaskCombine;

namespace {

// The class table, written out bit by bit (Right Sup Sub Above
// Below Inside) so it does not share code with class_mask().
const std::map<SymbolClass, const char*>& class_rows() {
    static const std::map<SymbolClass, const char*> rows{
        {SymbolClass::Frac, "110110"},   {SymbolClass::Sqrt, "100001"},   {SymbolClass::BigOp, "111110"},
        {SymbolClass::Lim, "100010"},    {SymbolClass::Letter, "111000"}, {SymbolClass::Number, "110000"},
        {SymbolClass::Bin, "100000"},    {SymbolClass::End, "000000"},
    };
    return rows;
}

std::uint8_t bits_of(const char* s) {
    std::uint8_t b = 0;
    for (int i = 0; i < kNumRelations; ++i) {
        if (s[i] == '1') b |= static_cast<std::uint8_t>(1u << i);
    }
    return b;
}

void fail(SuiteResult& r, const std::string& line) {
    if (r.total - r.passed <= 20) r.detail += line + "\n";
}

} // namespace

SuiteResult mask_table(const Vocabulary& vocab) {
    SuiteResult r;
    r.name = "mask-table";
    const auto table = grammar::StaticMaskTable::from_vocabulary(vocab);
    auto check = [&](SymbolId id, std::uint8_t want, const std::string& what) {
        ++r.total;
        const MaskVector got = grammar::static_mask(id, table);
        if (got == MaskVector(want)) {
            ++r.passed;
        } else {
            fail(r, what + ": table has " + got.str() + ", expected " + MaskVector(want).str());
        }
    };
    for (int i = 0; i < vocab.size(); ++i) {
        const SymbolId id{i};
        std::uint8_t want = 0;
        for (SymbolClass c : vocab.entry(id).classes) want |= bits_of(class_rows().at(c));
        check(id, want, vocab.glyph(id));
    }
    const std::pair<const char*, const char*> named[] = {
        {"\\frac", "110110"}, {"\\sqrt", "100001"}, {"\\sum", "111110"}, {"\\prod", "111110"},
        {"\\lim", "100010"},  {"+", "100000"},      {"e", "111000"},
    };
    for (auto [glyph, bits] : named) {
        if (auto id = vocab.find(glyph)) check(*id, bits_of(bits), glyph);
    }
    return r;
}

SuiteResult mask_oracle(const Vocabulary& vocab, int max_history) {
    SuiteResult r;
    r.name = "mask-oracle";
    const auto table = grammar::StaticMaskTable::from_vocabulary(vocab);
    std::vector<SymbolId> reps;
    std::set<std::string> seen;
    for (int i = 0; i < vocab.size(); ++i) {
        if (seen.insert(vocab.mask(SymbolId{i}).str()).second) reps.push_back(SymbolId{i});
    }
    for (MaskCombine combine : {MaskCombine::AndNot, MaskCombine::Xor}) {
        for (SymbolId sym : reps) {
            const Node nodes[2] = {Node{sym, 1}, Node{sym, 2}};
            std::vector<std::pair<int, Relation>> events;
            std::function<void(int)> go = [&](int depth) {
                for (DynamicKey key : {DynamicKey::Instance, DynamicKey::Symbol}) {
                    DynamicMaskState state(key, vocab.size());
                    for (auto [n, rel] : events) state = grammar::update(nodes[n], rel, state);
                    for (int probe = 0; probe < 2; ++probe) {
                        // Replay: which relations were recorded against this key?
                        bool used[kNumRelations] = {};
                        for (auto [n, rel] : events) {
                            if (key == DynamicKey::Symbol || n == probe) used[ordinal(rel)] = true;
                        }
                        const MaskVector stat = vocab.mask(sym);
                        std::uint8_t want = 0;
                        for (int i = 0; i < kNumRelations; ++i) {
                            const bool s = stat.test(static_cast<Relation>(i));
                            const bool legal = combine == MaskCombine::AndNot ? (s && !used[i]) : (s != used[i]);
                            if (legal) want |= static_cast<std::uint8_t>(1u << i);
                        }
                        const MaskVector got = grammar::step_mask(nodes[probe], table, state, combine);
                        ++r.total;
                        if (got == MaskVector(want)) {
                            ++r.passed;
                        } else {
                            fail(r, vocab.glyph(sym) + " history " + std::to_string(events.size()) + ": got " +
                                        got.str() + ", expected " + MaskVector(want).str());
                        }
                    }
                }
                if (depth == max_history) return;
                for (int n = 0; n < 2; ++n) {
                    for (Relation rel : kAllRelations) {
                        events.emplace_back(n, rel);
                        go(depth + 1);
                        events.pop_back();
                    }
                }
            };
            go(0);
        }
    }
    return r;
}

SuiteResult roundtrip(int n, std::uint64_t seed, const Vocabulary& vocab) {
    SuiteResult r;
    r.name = "roundtrip";
    std::mt19937_64 rng(seed);
    const data::GenGrammar g;
    for (int i = 0; i < n; ++i) {
        const ExprTree t = data::random_tree(rng, g, vocab);
        const std::string latex = to_latex(t, vocab);
        ++r.total;
        try {
            const TripleSeq seq = linearize(parse_latex(latex, vocab));
            const TripleSeq back = read_triples(write_triples(seq, vocab), vocab);
            const ExprTree rebuilt = delinearize(back, DelinearizeMode::Strict, vocab).tree;
            const std::string again = to_latex(rebuilt, vocab);
            if (again == latex && tree_equal(rebuilt, t)) {
                ++r.passed;
            } else {
                fail(r, latex + " -> " + again);
            }
        } catch (const Error& e) {
            fail(r, latex + ": " + e.what());
        }
    }
    return r;
}

SuiteResult gradcheck(std::uint64_t seed, double tolerance) {
    SuiteResult r;
    r.name = "gradcheck";
    model::ModelConfig c;
    c.embed = 5;
    c.att = 4;
    c.hidden = 6;
    c.feature = 4;
    c.enc_c1 = 2;
    c.enc_c2 = 3;
    c.cov_kernel = 3;
    c.cov_channels = 2;
    c.seed = seed;
    model::Model m(c);
    std::mt19937_64 rng(seed);
    const auto sample = data::make_sample("g", parse_latex("x^{2}y"), rng);
    const auto target = model::training_target(sample.triples);
    std::ostringstream o;
    char buf[160];
    for (const auto& e : model::gradcheck(m, sample.img, target)) {
        ++r.total;
        const bool ok = e.max_rel_error < tolerance;
        r.passed += ok;
        if (e.max_rel_error >= r.worst) {
            r.worst = e.max_rel_error;
            r.worst_at = e.name;
        }
        std::snprintf(buf, sizeof buf, "%-22s %6zu  %.3e  %.3e%s\n", e.name.c_str(), e.count, e.max_abs_grad,
                      e.max_rel_error, ok ? "" : "  FAIL");
        o << buf;
    }
    r.detail = "parameter              count  max|grad|  rel.error\n" + o.str();
    return r;
}

SuiteResult grammaticality(const model::Model& m, const std::vector<const Bitmap*>& images, int max_steps) {
    SuiteResult r;
    r.name = "grammaticality";
    const auto table = grammar::StaticMaskTable::from_vocabulary(m.vocab());
    const grammar::GrammarOptions opts{m.config().combine, m.config().key};
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto out = m.greedy_decode(*images[i], max_steps);
        const auto report = grammar::validate_triples(out.triples, table, opts);
        ++r.total;
        if (report.empty()) {
            ++r.passed;
        } else {
            fail(r, "image " + std::to_string(i) + ":\n" + grammar::format_report(report, m.vocab()));
        }
    }
    return r;
}

std::string format_result(const SuiteResult& r) {
    return r.name + ": " + std::to_string(r.passed) + "/" + std::to_string(r.total) + (r.ok() ? " ok" : " FAILED");
}

} // namespace treedec::verify
