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

#include "treedec/error.hpp"
#include "treedec/relation.hpp"
#include "treedec/vocab.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace treedec {

/// A decoded symbol together with its 1-based decode position.
struct Node {
    SymbolId sym;
    int order = 0;
    friend bool operator==(const Node&, const Node&) = default;
};

/// One decode step: the child, the decode position of its parent (0 is the
/// virtual root) and the relation linking them (absent for the root).
struct Triple {
    Node child;
    int parent_pos = 0;
    std::optional<Relation> rel;
    friend bool operator==(const Triple&, const Triple&) = default;
};

using TripleSeq = std::vector<Triple>;

/// Rooted symbol tree with relation-labelled edges.
///
/// Every tree built through the public interface satisfies: single root, no
/// node with two outgoing edges of the same relation, and every edge
/// allowed by the parent's static mask. Children are kept sorted by
/// emission rank. A default-constructed tree is empty (no nodes), which
/// only arises from lenient delinearization of an empty prediction.
class ExprTree {
  public:
    struct Edge {
        Relation rel;
        int child; // vertex index
    };
    struct Vertex {
        Node node;
        int parent = -1;
        std::vector<Edge> children;
    };

    ExprTree() = default;
    explicit ExprTree(SymbolId root);

    /// Attaches a new leaf; returns its vertex index. Throws
    /// Error{DuplicateRelation} or Error{IllegalRelation}.
    int add_child(int parent, Relation rel, SymbolId sym, const Vocabulary& vocab);

    /// Reassigns `order` fields to depth-first emission rank.
    void renumber();

    [[nodiscard]] bool empty() const noexcept { return vertices_.empty(); }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(vertices_.size()); }
    [[nodiscard]] static constexpr int root() noexcept { return 0; }
    [[nodiscard]] const Vertex& vertex(int i) const { return vertices_.at(i); }
    [[nodiscard]] const std::vector<Vertex>& vertices() const noexcept { return vertices_; }
    [[nodiscard]] std::optional<int> child(int parent, Relation rel) const;
    [[nodiscard]] int depth() const;

    /// Sets the decode position of one vertex (used when rebuilding from triples).
    void set_order(int vertex, int order) { vertices_.at(vertex).node.order = order; }

  private:
    std::vector<Vertex> vertices_;
};

/// Structural equality: same labels and relation-labelled shape; decode
/// order is ignored.
bool tree_equal(const ExprTree& a, const ExprTree& b);

ExprTree parse_latex(std::string_view s, const Vocabulary& vocab = Vocabulary::builtin());
std::string to_latex(const ExprTree& t, const Vocabulary& vocab = Vocabulary::builtin());

/// Depth-first, parent before child, siblings in emission order.
TripleSeq linearize(const ExprTree& t);

enum class DelinearizeMode { Strict, Lenient };

struct Violation {
    enum class Kind { DanglingParent, MultipleRoots, DuplicateRelation, IllegalRelation, MissingRelation, Orphaned };
    Kind kind;
    int step = 0; // 1-based index into the sequence
    std::string detail;
};

std::string_view violation_kind_name(Violation::Kind kind);

struct DelinearizeResult {
    ExprTree tree;
    std::vector<Violation> violations;
};

/// Rebuilds the tree from a triple sequence. Strict mode throws on the
/// first violation; lenient mode drops offending triples (and anything
/// hanging off them) and reports each drop.
DelinearizeResult delinearize(const TripleSeq& seq, DelinearizeMode mode = DelinearizeMode::Strict,
                              const Vocabulary& vocab = Vocabulary::builtin());

/// `order TAB glyph TAB parent_pos TAB relation` per line; the root's
/// relation is written as '-'.
std::string write_triples(const TripleSeq& seq, const Vocabulary& vocab = Vocabulary::builtin());
TripleSeq read_triples(std::string_view text, const Vocabulary& vocab = Vocabulary::builtin());

/// Indented dump: root glyph on the first line, then `Relation glyph` per
/// child, two spaces of indentation per level.
std::string write_tree_dump(const ExprTree& t, const Vocabulary& vocab = Vocabulary::builtin());
ExprTree read_tree_dump(std::string_view text, const Vocabulary& vocab = Vocabulary::builtin());

} // namespace treedec
