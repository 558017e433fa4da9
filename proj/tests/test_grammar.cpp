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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "treedec/grammar.hpp"

#include <functional>
#include <random>
#include <set>

using namespace treedec;
using namespace treedec::grammar;

namespace {

const Vocabulary& V() { return Vocabulary::builtin(); }
SymbolId S(const char* g) { return V().at(g); }
const StaticMaskTable& table() {
    static const StaticMaskTable t = StaticMaskTable::from_vocabulary(V());
    return t;
}
MaskVector M(const char* bits) { return MaskVector::parse(bits); }

// Independent rule: a relation is legal iff the static row allows it and it
// does not appear among the relations already recorded for the same key.
MaskVector oracle_mask(MaskVector stat, const std::set<Relation>& used, MaskCombine combine) {
    MaskVector dyn;
    for (Relation r : used) dyn = dyn.with(r);
    std::uint8_t bits = 0;
    for (int i = 0; i < kNumRelations; ++i) {
        const bool s = stat.test(static_cast<Relation>(i));
        const bool d = dyn.test(static_cast<Relation>(i));
        const bool legal = combine == MaskCombine::AndNot ? (s && !d) : (s != d);
        if (legal) bits |= static_cast<std::uint8_t>(1u << i);
    }
    return MaskVector(bits);
}

} // namespace

TEST_CASE("static_mask matches the class table") {
    CHECK(static_mask(S("\\frac"), table()) == M("110110"));
    CHECK(static_mask(S("+"), table()) == M("100000"));
    CHECK(static_mask(S("\\sqrt"), table()) == M("100001"));
    CHECK(static_mask(S("\\sum"), table()) == M("111110"));
    CHECK(static_mask(S("\\prod"), table()) == M("111110"));
    CHECK(static_mask(S("\\lim"), table()) == M("100010"));
    CHECK(static_mask(S("x"), table()) == M("111000"));
    CHECK(static_mask(S("2"), table()) == M("110000"));
    CHECK(static_mask(S("e"), table()) == M("111000"));
    CHECK(static_mask(V().end(), table()) == M("000000"));
    CHECK_THROWS_AS(static_mask(SymbolId{V().size()}, table()), Error);
}

TEST_CASE("every row but the end marker allows Right") {
    for (int i = 0; i < V().size(); ++i) {
        const SymbolId id{i};
        CHECK((static_mask(id, table()).test(Relation::Right) || id == V().end()));
    }
}

TEST_CASE("or_combine") {
    CHECK(or_combine({M("111000"), M("110000")}) == M("111000"));
    CHECK(or_combine({M("101010")}) == M("101010"));
    CHECK(or_combine({M("100000"), M("000001")}) == M("100001"));
    CHECK_THROWS_AS(or_combine({}), Error);
}

TEST_CASE("mask table file round-trips") {
    const std::string text = table().to_text(V());
    const auto back = StaticMaskTable::parse(text, V());
    for (int i = 0; i < V().size(); ++i) CHECK(back.row(SymbolId{i}) == table().row(SymbolId{i}));
    CHECK_THROWS_AS(StaticMaskTable::parse("x 111000\n", V()), Error);
}

TEST_CASE("dynamic mask and update") {
    DynamicMaskState fresh(DynamicKey::Instance, V().size());
    const Node sqrt{S("\\sqrt"), 1};
    CHECK(dynamic_mask(sqrt, fresh) == M("000000"));

    auto s1 = update(sqrt, Relation::Inside, fresh);
    CHECK(dynamic_mask(sqrt, s1) == M("000001"));
    CHECK(s1.popcount() == 1);
    CHECK(fresh.popcount() == 0); // functional update

    const Node x{S("x"), 2};
    auto s2 = update(x, Relation::Right, update(x, Relation::Sup, fresh));
    CHECK(dynamic_mask(x, s2) == M("110000"));

    auto twice = update(sqrt, Relation::Inside, s1);
    CHECK(twice.popcount() == 1);
    CHECK(dynamic_mask(sqrt, twice) == dynamic_mask(sqrt, s1));

    auto three = update(Node{S("x"), 3}, Relation::Sub, update(x, Relation::Sup, s1));
    CHECK(three.popcount() == 3);

    CHECK_THROWS_AS(dynamic_mask(Node{S("x"), 0}, fresh), Error);
    DynamicMaskState sym(DynamicKey::Symbol, V().size());
    CHECK_THROWS_AS(dynamic_mask(Node{SymbolId{V().size()}, 1}, sym), Error);
}

TEST_CASE("step_mask") {
    DynamicMaskState fresh(DynamicKey::Instance, V().size());
    const Node sqrt{S("\\sqrt"), 1};
    CHECK(step_mask(sqrt, table(), fresh) == M("100001"));
    CHECK(step_mask(sqrt, table(), update(sqrt, Relation::Inside, fresh)) == M("100000"));

    const Node sum{S("\\sum"), 1};
    auto used = update(sum, Relation::Below, update(sum, Relation::Above, fresh));
    CHECK(step_mask(sum, table(), used) == M("111000"));

    // An illegal recorded relation re-enables a forbidden bit only under XOR.
    auto bogus = update(sqrt, Relation::Sup, fresh);
    CHECK(step_mask(sqrt, table(), bogus, MaskCombine::AndNot) == M("100001"));
    CHECK(step_mask(sqrt, table(), bogus, MaskCombine::Xor) == M("110001"));
}

TEST_CASE("instance keying separates identical glyphs; symbol keying shares them") {
    const Node first{S("x"), 1};
    const Node second{S("x"), 3};
    DynamicMaskState inst(DynamicKey::Instance, V().size());
    DynamicMaskState sym(DynamicKey::Symbol, V().size());
    inst = update(first, Relation::Sup, inst);
    sym = update(first, Relation::Sup, sym);
    CHECK(step_mask(second, table(), inst) == M("111000"));
    CHECK(step_mask(second, table(), sym) == M("101000"));
}

TEST_CASE("validate_triples") {
    TripleSeq ok{{Node{S("x"), 1}, 0, std::nullopt}, {Node{S("2"), 2}, 1, Relation::Sup}};
    CHECK(validate_triples(ok, table()).empty());

    TripleSeq inside{{Node{S("\\sum"), 1}, 0, std::nullopt}, {Node{S("2"), 2}, 1, Relation::Inside}};
    auto rep = validate_triples(inside, table());
    REQUIRE(rep.size() == 1);
    CHECK(rep.violations[0].rel == Relation::Inside);
    CHECK(rep.violations[0].mask == M("111110"));
    CHECK(format_report(rep).find("relation Inside mask 111110") != std::string::npos);

    TripleSeq twice{{Node{S("x"), 1}, 0, std::nullopt},
                    {Node{S("a"), 2}, 1, Relation::Right},
                    {Node{S("b"), 3}, 1, Relation::Right}};
    auto rep2 = validate_triples(twice, table());
    REQUIRE(rep2.size() == 1);
    CHECK(rep2.violations[0].step == 3);

    TripleSeq dangling{{Node{S("x"), 1}, 0, std::nullopt}, {Node{S("a"), 2}, 5, Relation::Right}};
    CHECK(validate_triples(dangling, table()).size() == 1);
}

TEST_CASE("property: incremental masks agree with the replay oracle") {
    // Two nodes of every class, histories of up to 3 (node, relation) events.
    std::vector<SymbolId> reps;
    std::set<std::string> seen;
    for (const auto& e : V().entries()) {
        const std::string key = e.mask.str();
        if (seen.insert(key).second) reps.push_back(V().at(e.glyph));
    }
    long checked = 0;
    for (MaskCombine combine : {MaskCombine::AndNot, MaskCombine::Xor}) {
        for (SymbolId sym : reps) {
            const Node nodes[2] = {Node{sym, 1}, Node{sym, 2}};
            std::vector<std::pair<int, Relation>> events;
            std::function<void(int)> go = [&](int depth) {
                for (DynamicKey key : {DynamicKey::Instance, DynamicKey::Symbol}) {
                    DynamicMaskState state(key, V().size());
                    for (auto [n, rel] : events) state = update(nodes[n], rel, state);
                    for (int probe = 0; probe < 2; ++probe) {
                        std::set<Relation> used;
                        for (auto [n, rel] : events) {
                            if (key == DynamicKey::Symbol || n == probe) used.insert(rel);
                        }
                        const auto want = oracle_mask(static_mask(sym, table()), used, combine);
                        CHECK(step_mask(nodes[probe], table(), state, combine) == want);
                        ++checked;
                    }
                }
                if (depth == 3) return;
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
    CHECK(checked > 0);
}

TEST_CASE("property: step_mask never exceeds the static mask under and_not") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        DynamicMaskState state(DynamicKey::Instance, V().size());
        const SymbolId sym{std::uniform_int_distribution<int>(0, V().size() - 1)(rng)};
        const Node n{sym, 1};
        for (int k = 0; k < 4; ++k) {
            state = update(n, kAllRelations[std::uniform_int_distribution<int>(0, 5)(rng)], state);
            CHECK(step_mask(n, table(), state).subset_of(static_mask(sym, table())));
        }
    }
}
