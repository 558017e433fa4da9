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

#include "treedec/symtree.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace treedec;

namespace {

const Vocabulary& V() { return Vocabulary::builtin(); }
SymbolId S(const char* g) { return V().at(g); }

ErrorCode parse_error(std::string_view s) {
    try {
        parse_latex(s);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected parse failure for " << s);
    return ErrorCode::SyntaxError;
}

// Random tree over the builtin vocabulary, respecting static masks.
ExprTree random_tree(std::mt19937_64& rng, int nodes) {
    std::vector<SymbolId> pool;
    for (int i = 0; i < V().size(); ++i) {
        if (SymbolId{i} != V().start() && SymbolId{i} != V().end()) pool.push_back(SymbolId{i});
    }
    auto pick = [&] { return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]; };
    ExprTree t(pick());
    int guard = 0;
    while (t.size() < nodes && ++guard < 10000) {
        const int parent = std::uniform_int_distribution<int>(0, t.size() - 1)(rng);
        const Relation rel = kAllRelations[std::uniform_int_distribution<int>(0, 5)(rng)];
        if (!V().mask(t.vertex(parent).node.sym).test(rel) || t.child(parent, rel)) continue;
        t.add_child(parent, rel, pick(), V());
    }
    t.renumber();
    return t;
}

} // namespace

TEST_CASE("parse_latex builds the expected trees") {
    SUBCASE("superscript") {
        auto t = parse_latex("x^{2}");
        REQUIRE(t.size() == 2);
        CHECK(t.vertex(0).node.sym == S("x"));
        auto c = t.child(0, Relation::Sup);
        REQUIRE(c);
        CHECK(t.vertex(*c).node.sym == S("2"));
    }
    SUBCASE("fraction") {
        auto t = parse_latex("\\frac{a}{b}");
        REQUIRE(t.size() == 3);
        CHECK(t.vertex(*t.child(0, Relation::Above)).node.sym == S("a"));
        CHECK(t.vertex(*t.child(0, Relation::Below)).node.sym == S("b"));
    }
    SUBCASE("concatenation chains by Right") {
        auto t = parse_latex("x+1");
        auto plus = t.child(0, Relation::Right);
        REQUIRE(plus);
        REQUIRE(t.child(*plus, Relation::Right));
        CHECK(t.vertex(*t.child(*plus, Relation::Right)).node.sym == S("1"));
    }
    SUBCASE("whitespace and bare script arguments") {
        CHECK(tree_equal(parse_latex(" x ^ 2 "), parse_latex("x^{2}")));
    }
    SUBCASE("big operator limits and nolimits") {
        auto t = parse_latex("\\sum_{i}^{n}x");
        CHECK(t.child(0, Relation::Below));
        CHECK(t.child(0, Relation::Above));
        CHECK(t.child(0, Relation::Right));
        auto u = parse_latex("\\sum\\nolimits_{i}");
        CHECK(u.child(0, Relation::Sub));
    }
}

TEST_CASE("parse_latex errors") {
    CHECK(parse_error("2_{i}") == ErrorCode::IllegalRelation);
    CHECK(parse_error("x^{2}^{3}") == ErrorCode::DuplicateRelation);
    CHECK(parse_error("x^{2") == ErrorCode::UnbalancedBraces);
    CHECK(parse_error("x}") == ErrorCode::UnbalancedBraces);
    CHECK(parse_error("\\foo") == ErrorCode::UnknownSymbol);
    CHECK(parse_error("z") == ErrorCode::UnknownSymbol);
    CHECK(parse_error("") == ErrorCode::SyntaxError);
    CHECK(parse_error("\\lim^{x}") == ErrorCode::IllegalRelation);
    CHECK(parse_error("+^{2}") == ErrorCode::IllegalRelation);

    try {
        parse_latex("x^{2");
    } catch (const Error& e) {
        CHECK(e.position() == 2);
    }
}

TEST_CASE("to_latex") {
    ExprTree sup(S("x"));
    sup.add_child(0, Relation::Sup, S("2"), V());
    CHECK(to_latex(sup) == "x^{2}");

    ExprTree root(S("\\sqrt"));
    root.add_child(0, Relation::Inside, S("2"), V());
    CHECK(to_latex(root) == "\\sqrt{2}");

    ExprTree sum(S("\\sum"));
    sum.add_child(0, Relation::Below, S("i"), V());
    sum.add_child(0, Relation::Right, S("x"), V());
    const std::string s = to_latex(sum);
    CHECK(s == "\\sum_{i}x");
    CHECK(tree_equal(parse_latex(s), sum));

    CHECK(to_latex(parse_latex("\\pi x")) == "\\pi x");
    CHECK(to_latex(parse_latex("\\sin\\alpha")) == "\\sin\\alpha");
    CHECK(to_latex(parse_latex("\\sum\\nolimits_{i}^{2}")) == "\\sum\\nolimits_{i}^{2}");
}

TEST_CASE("linearize") {
    auto seq = linearize(parse_latex("x^{2}"));
    REQUIRE(seq.size() == 2);
    CHECK(seq[0] == Triple{Node{S("x"), 1}, 0, std::nullopt});
    CHECK(seq[1] == Triple{Node{S("2"), 2}, 1, Relation::Sup});

    auto frac = linearize(parse_latex("\\frac{a}{b}"));
    REQUIRE(frac.size() == 3);
    CHECK(frac[1] == Triple{Node{S("a"), 2}, 1, Relation::Above});
    CHECK(frac[2] == Triple{Node{S("b"), 3}, 1, Relation::Below});

    // depth first: the Sup subtree is finished before the Right sibling
    auto deep = linearize(parse_latex("x^{2+1}y"));
    REQUIRE(deep.size() == 5);
    CHECK(deep[4].child.sym == S("y"));
    CHECK(deep[4].parent_pos == 1);
}

TEST_CASE("delinearize") {
    auto t = delinearize({{Node{S("x"), 1}, 0, std::nullopt}, {Node{S("2"), 2}, 1, Relation::Sup}});
    CHECK(tree_equal(t.tree, parse_latex("x^{2}")));
    CHECK(t.violations.empty());

    TripleSeq dangling{{Node{S("a"), 1}, 0, std::nullopt}, {Node{S("b"), 2}, 3, Relation::Right}};
    CHECK_THROWS_AS(delinearize(dangling), Error);
    try {
        delinearize(dangling);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DanglingParent);
    }

    TripleSeq twice{{Node{S("x"), 1}, 0, std::nullopt},
                    {Node{S("a"), 2}, 1, Relation::Right},
                    {Node{S("b"), 3}, 1, Relation::Right}};
    try {
        delinearize(twice);
        FAIL("strict mode accepted a duplicate relation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DuplicateRelation);
    }
    auto lenient = delinearize(twice, DelinearizeMode::Lenient);
    CHECK(lenient.violations.size() == 1);
    CHECK(lenient.violations[0].kind == Violation::Kind::DuplicateRelation);
    CHECK(tree_equal(lenient.tree, parse_latex("xa")));

    // a dropped node takes its descendants with it
    TripleSeq chain = twice;
    chain.push_back({Node{S("c"), 4}, 3, Relation::Sup});
    auto dropped = delinearize(chain, DelinearizeMode::Lenient);
    CHECK(dropped.violations.size() == 2);
    CHECK(dropped.violations[1].kind == Violation::Kind::Orphaned);

    CHECK(delinearize({}, DelinearizeMode::Lenient).tree.empty());
}

TEST_CASE("tree_equal ignores decode order") {
    auto a = parse_latex("\\frac{a}{b}+x^{2}");
    CHECK(tree_equal(a, a));
    ExprTree b(S("\\frac"));
    b.add_child(0, Relation::Right, S("+"), V());
    b.add_child(0, Relation::Below, S("b"), V());
    b.add_child(0, Relation::Above, S("a"), V());
    b.add_child(1, Relation::Right, S("x"), V());
    b.add_child(4, Relation::Sup, S("2"), V());
    CHECK(tree_equal(a, b));

    ExprTree sub(S("x"));
    sub.add_child(0, Relation::Sub, S("2"), V());
    CHECK_FALSE(tree_equal(parse_latex("x^{2}"), sub));
    CHECK_FALSE(tree_equal(ExprTree{}, sub));
}

TEST_CASE("text formats") {
    auto t = parse_latex("\\sqrt{x_{i}}+\\frac{1}{n}");
    auto seq = linearize(t);
    const std::string text = write_triples(seq);
    CHECK(text.rfind("1\t\\sqrt\t0\t-\n", 0) == 0);
    CHECK(read_triples(text) == seq);
    CHECK_THROWS_AS(read_triples("1\tx\t0\n"), Error);
    CHECK_THROWS_AS(read_triples("1\tzz\t0\t-\n"), Error);

    const std::string dump = write_tree_dump(t);
    CHECK(tree_equal(read_tree_dump(dump), t));
    CHECK(dump.rfind("\\sqrt\n  Inside x\n    Sub i\n", 0) == 0);
}

TEST_CASE("property: random trees survive every conversion") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        auto t = random_tree(rng, 1 + trial % 12);
        const auto seq = linearize(t);
        REQUIRE(static_cast<int>(seq.size()) == t.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            CHECK(seq[i].child.order == static_cast<int>(i) + 1);
            CHECK(seq[i].parent_pos < seq[i].child.order);
        }
        const auto back = delinearize(seq);
        CHECK(tree_equal(back.tree, t));
        CHECK(linearize(back.tree) == seq);
        const auto latex = to_latex(t);
        const auto reparsed = parse_latex(latex);
        CHECK_MESSAGE(tree_equal(reparsed, t), latex);
        CHECK(to_latex(reparsed) == latex);
        CHECK(tree_equal(read_tree_dump(write_tree_dump(t)), t));
    }
}

TEST_CASE("property: tree_equal is an equivalence") {
    std::mt19937_64 rng(11);
    std::vector<ExprTree> trees;
    for (int i = 0; i < 40; ++i) trees.push_back(random_tree(rng, 1 + i % 3));
    for (const auto& a : trees) {
        CHECK(tree_equal(a, a));
        for (const auto& b : trees) {
            CHECK(tree_equal(a, b) == tree_equal(b, a));
            if (!tree_equal(a, b)) continue;
            for (const auto& c : trees) {
                if (tree_equal(b, c)) CHECK(tree_equal(a, c));
            }
        }
    }
}

TEST_CASE("shipped vocabulary file matches the builtin table") {
    std::ifstream in(std::string(TREEDEC_SOURCE_DIR) + "/data/vocab.txt");
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == Vocabulary::builtin_text());
    CHECK(Vocabulary::parse(V().to_text()).size() == V().size());
}
