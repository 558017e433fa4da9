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

#include "treedec/symtree.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <memory>
#include <sstream>

namespace treedec {

ExprTree::ExprTree(SymbolId root) { vertices_.push_back(Vertex{Node{root, 1}, -1, {}}); }

int ExprTree::add_child(int parent, Relation rel, SymbolId sym, const Vocabulary& vocab) {
    auto& p = vertices_.at(parent);
    if (!vocab.mask(p.node.sym).test(rel)) {
        throw Error(ErrorCode::IllegalRelation, "'" + vocab.glyph(p.node.sym) + "' cannot have a " +
                                                    std::string(relation_name(rel)) + " child");
    }
    if (child(parent, rel)) {
        throw Error(ErrorCode::DuplicateRelation, "'" + vocab.glyph(p.node.sym) + "' already has a " +
                                                      std::string(relation_name(rel)) + " child");
    }
    vocab.entry(sym); // range check
    const int idx = size();
    vertices_.push_back(Vertex{Node{sym, idx + 1}, parent, {}});
    auto& children = vertices_[parent].children;
    auto pos = std::find_if(children.begin(), children.end(),
                            [&](const Edge& e) { return emission_rank(e.rel) > emission_rank(rel); });
    children.insert(pos, Edge{rel, idx});
    return idx;
}

std::optional<int> ExprTree::child(int parent, Relation rel) const {
    for (const auto& e : vertices_.at(parent).children) {
        if (e.rel == rel) return e.child;
    }
    return std::nullopt;
}

void ExprTree::renumber() {
    int next = 1;
    std::function<void(int)> visit = [&](int v) {
        vertices_[v].node.order = next++;
        for (const auto& e : vertices_[v].children) visit(e.child);
    };
    if (!empty()) visit(root());
}

int ExprTree::depth() const {
    if (empty()) return 0;
    std::function<int(int)> go = [&](int v) {
        int d = 0;
        for (const auto& e : vertices_[v].children) d = std::max(d, go(e.child));
        return d + 1;
    };
    return go(root());
}

bool tree_equal(const ExprTree& a, const ExprTree& b) {
    if (a.empty() || b.empty()) return a.empty() && b.empty();
    if (a.size() != b.size()) return false;
    std::function<bool(int, int)> same = [&](int u, int v) {
        const auto& x = a.vertex(u);
        const auto& y = b.vertex(v);
        if (x.node.sym != y.node.sym || x.children.size() != y.children.size()) return false;
        for (std::size_t i = 0; i < x.children.size(); ++i) {
            if (x.children[i].rel != y.children[i].rel) return false;
            if (!same(x.children[i].child, y.children[i].child)) return false;
        }
        return true;
    };
    return same(ExprTree::root(), ExprTree::root());
}

// ---------------------------------------------------------------------------
// LaTeX reader

namespace {

struct Token {
    enum class Kind { Symbol, LBrace, RBrace, Caret, Underscore, Limits, NoLimits, End };
    Kind kind;
    std::size_t pos;
    SymbolId sym{};
};

struct ParsedNode {
    SymbolId sym;
    std::vector<std::pair<Relation, std::unique_ptr<ParsedNode>>> children;
};

class LatexReader {
  public:
    LatexReader(std::string_view src, const Vocabulary& vocab) : src_(src), vocab_(vocab) { tokenize(); }

    ExprTree run() {
        auto head = parse_expr(false);
        if (!head) throw Error(ErrorCode::SyntaxError, "empty expression", 0);
        ExprTree tree(head->sym);
        std::function<void(int, const ParsedNode&)> build = [&](int v, const ParsedNode& n) {
            for (const auto& [rel, child] : n.children) {
                int c = tree.add_child(v, rel, child->sym, vocab_);
                build(c, *child);
            }
        };
        build(ExprTree::root(), *head);
        tree.renumber();
        return tree;
    }

  private:
    void tokenize() {
        std::size_t i = 0;
        while (i < src_.size()) {
            const char ch = src_[i];
            if (std::isspace(static_cast<unsigned char>(ch))) {
                ++i;
                continue;
            }
            const std::size_t start = i;
            switch (ch) {
            case '{': tokens_.push_back({Token::Kind::LBrace, start}); ++i; continue;
            case '}': tokens_.push_back({Token::Kind::RBrace, start}); ++i; continue;
            case '^': tokens_.push_back({Token::Kind::Caret, start}); ++i; continue;
            case '_': tokens_.push_back({Token::Kind::Underscore, start}); ++i; continue;
            default: break;
            }
            std::string name;
            if (ch == '\\') {
                ++i;
                while (i < src_.size() && std::isalpha(static_cast<unsigned char>(src_[i]))) ++i;
                if (i == start + 1 && i < src_.size()) ++i; // control symbol such as "\{"
                name = std::string(src_.substr(start, i - start));
                if (name == "\\limits") {
                    tokens_.push_back({Token::Kind::Limits, start});
                    continue;
                }
                if (name == "\\nolimits") {
                    tokens_.push_back({Token::Kind::NoLimits, start});
                    continue;
                }
            } else {
                name = std::string(1, ch);
                ++i;
            }
            auto sym = vocab_.find(name);
            if (!sym) throw Error(ErrorCode::UnknownSymbol, "unknown symbol '" + name + "'", start);
            tokens_.push_back({Token::Kind::Symbol, start, *sym});
        }
        tokens_.push_back({Token::Kind::End, src_.size()});
    }

    const Token& peek() const { return tokens_[next_]; }
    const Token& take() { return tokens_[next_++]; }

    void attach(ParsedNode& parent, Relation rel, std::unique_ptr<ParsedNode> child, std::size_t pos) {
        if (!vocab_.mask(parent.sym).test(rel)) {
            throw Error(ErrorCode::IllegalRelation,
                        "'" + vocab_.glyph(parent.sym) + "' cannot have a " + std::string(relation_name(rel)) + " child",
                        pos);
        }
        for (const auto& c : parent.children) {
            if (c.first == rel) {
                throw Error(ErrorCode::DuplicateRelation,
                            "'" + vocab_.glyph(parent.sym) + "' already has a " + std::string(relation_name(rel)) +
                                " child",
                            pos);
            }
        }
        parent.children.emplace_back(rel, std::move(child));
    }

    // A run of terms chained by Right. Returns null for an empty run.
    std::unique_ptr<ParsedNode> parse_expr(bool in_group) {
        std::vector<std::pair<std::unique_ptr<ParsedNode>, std::size_t>> terms;
        while (true) {
            const Token& t = peek();
            if (t.kind == Token::Kind::End) break;
            if (t.kind == Token::Kind::RBrace) {
                if (in_group) break;
                throw Error(ErrorCode::UnbalancedBraces, "unmatched '}'", t.pos);
            }
            const std::size_t pos = t.pos;
            terms.emplace_back(parse_term(), pos);
        }
        if (terms.empty()) return nullptr;
        for (std::size_t j = terms.size() - 1; j > 0; --j) {
            attach(*terms[j - 1].first, Relation::Right, std::move(terms[j].first), terms[j].second);
        }
        return std::move(terms.front().first);
    }

    std::unique_ptr<ParsedNode> parse_group(bool allow_empty) {
        const Token& open = peek();
        if (open.kind == Token::Kind::End) throw Error(ErrorCode::SyntaxError, "missing argument", open.pos);
        if (open.kind != Token::Kind::LBrace) throw Error(ErrorCode::SyntaxError, "expected '{'", open.pos);
        take();
        auto body = parse_expr(true);
        const Token& close = peek();
        if (close.kind != Token::Kind::RBrace) {
            throw Error(ErrorCode::UnbalancedBraces, "'{' is never closed", open.pos);
        }
        take();
        if (!body && !allow_empty) throw Error(ErrorCode::SyntaxError, "empty group", open.pos);
        return body;
    }

    std::unique_ptr<ParsedNode> parse_script_arg() {
        const Token& t = peek();
        if (t.kind == Token::Kind::Symbol) {
            take();
            auto n = std::make_unique<ParsedNode>();
            n->sym = t.sym;
            return n;
        }
        return parse_group(false);
    }

    std::unique_ptr<ParsedNode> parse_term() {
        const Token& t = take();
        switch (t.kind) {
        case Token::Kind::Symbol: break;
        case Token::Kind::LBrace: throw Error(ErrorCode::SyntaxError, "group without a base symbol", t.pos);
        case Token::Kind::Caret:
        case Token::Kind::Underscore: throw Error(ErrorCode::SyntaxError, "script without a base symbol", t.pos);
        default: throw Error(ErrorCode::SyntaxError, "unexpected token", t.pos);
        }
        auto node = std::make_unique<ParsedNode>();
        node->sym = t.sym;
        if (vocab_.has_class(t.sym, SymbolClass::Frac)) {
            std::size_t pos = peek().pos;
            if (auto num = parse_group(true)) attach(*node, Relation::Above, std::move(num), pos);
            pos = peek().pos;
            if (auto den = parse_group(true)) attach(*node, Relation::Below, std::move(den), pos);
        } else if (vocab_.has_class(t.sym, SymbolClass::Sqrt)) {
            std::size_t pos = peek().pos;
            if (auto body = parse_group(true)) attach(*node, Relation::Inside, std::move(body), pos);
        }
        const bool takes_limits = vocab_.has_class(t.sym, SymbolClass::BigOp) || vocab_.has_class(t.sym, SymbolClass::Lim);
        bool limits = takes_limits;
        while (true) {
            const Token& s = peek();
            if (s.kind == Token::Kind::Limits || s.kind == Token::Kind::NoLimits) {
                if (!takes_limits) throw Error(ErrorCode::SyntaxError, "\\limits/\\nolimits after a non-operator", s.pos);
                limits = s.kind == Token::Kind::Limits;
                take();
                continue;
            }
            if (s.kind != Token::Kind::Caret && s.kind != Token::Kind::Underscore) break;
            take();
            const bool up = s.kind == Token::Kind::Caret;
            const Relation rel = limits ? (up ? Relation::Above : Relation::Below) : (up ? Relation::Sup : Relation::Sub);
            attach(*node, rel, parse_script_arg(), s.pos);
        }
        return node;
    }

    std::string_view src_;
    const Vocabulary& vocab_;
    std::vector<Token> tokens_;
    std::size_t next_ = 0;
};

// Appends a glyph, separating it from a preceding control word when the
// glyph begins with a letter ("\pi x", not "\pix").
void append_glyph(std::string& out, const std::string& glyph) {
    if (!glyph.empty() && std::isalpha(static_cast<unsigned char>(glyph.front()))) {
        std::size_t k = out.size();
        while (k > 0 && std::isalpha(static_cast<unsigned char>(out[k - 1]))) --k;
        if (k > 0 && k < out.size() && out[k - 1] == '\\') out += ' ';
    }
    out += glyph;
}

class LatexWriter {
  public:
    LatexWriter(const ExprTree& t, const Vocabulary& vocab) : tree_(t), vocab_(vocab) {}

    std::string run() {
        if (!tree_.empty()) emit(ExprTree::root());
        return std::move(out_);
    }

  private:
    void group(std::optional<int> v) {
        out_ += '{';
        if (v) emit(*v);
        out_ += '}';
    }

    void emit(int v) {
        const auto& vert = tree_.vertex(v);
        const SymbolId sym = vert.node.sym;
        auto kid = [&](Relation r) { return tree_.child(v, r); };
        append_glyph(out_, vocab_.glyph(sym));

        if (vocab_.has_class(sym, SymbolClass::Frac)) {
            group(kid(Relation::Above));
            group(kid(Relation::Below));
        } else if (vocab_.has_class(sym, SymbolClass::Sqrt)) {
            group(kid(Relation::Inside));
        }
        const bool limits = vocab_.has_class(sym, SymbolClass::BigOp) || vocab_.has_class(sym, SymbolClass::Lim);
        if (limits) {
            if (auto a = kid(Relation::Above)) { out_ += '^'; group(a); }
            if (auto b = kid(Relation::Below)) { out_ += '_'; group(b); }
            if (kid(Relation::Sub) || kid(Relation::Sup)) out_ += "\\nolimits";
        }
        if (auto s = kid(Relation::Sub)) { out_ += '_'; group(s); }
        if (auto s = kid(Relation::Sup)) { out_ += '^'; group(s); }
        if (auto r = kid(Relation::Right)) emit(*r);
    }

    const ExprTree& tree_;
    const Vocabulary& vocab_;
    std::string out_;
};

} // namespace

ExprTree parse_latex(std::string_view s, const Vocabulary& vocab) { return LatexReader(s, vocab).run(); }

std::string to_latex(const ExprTree& t, const Vocabulary& vocab) { return LatexWriter(t, vocab).run(); }

// ---------------------------------------------------------------------------
// Triples

TripleSeq linearize(const ExprTree& t) {
    TripleSeq out;
    if (t.empty()) return out;
    out.reserve(t.size());
    std::function<void(int, int, std::optional<Relation>)> visit = [&](int v, int parent_pos, std::optional<Relation> rel) {
        const int order = static_cast<int>(out.size()) + 1;
        out.push_back(Triple{Node{t.vertex(v).node.sym, order}, parent_pos, rel});
        for (const auto& e : t.vertex(v).children) visit(e.child, order, e.rel);
    };
    visit(ExprTree::root(), 0, std::nullopt);
    return out;
}

std::string_view violation_kind_name(Violation::Kind kind) {
    switch (kind) {
    case Violation::Kind::DanglingParent: return "DanglingParent";
    case Violation::Kind::MultipleRoots: return "MultipleRoots";
    case Violation::Kind::DuplicateRelation: return "DuplicateRelation";
    case Violation::Kind::IllegalRelation: return "IllegalRelation";
    case Violation::Kind::MissingRelation: return "MissingRelation";
    case Violation::Kind::Orphaned: return "Orphaned";
    }
    return "?";
}

DelinearizeResult delinearize(const TripleSeq& seq, DelinearizeMode mode, const Vocabulary& vocab) {
    const bool strict = mode == DelinearizeMode::Strict;
    DelinearizeResult result;
    if (seq.empty()) {
        if (strict) throw Error(ErrorCode::BadOrder, "empty triple sequence");
        return result;
    }

    // position (1-based) -> vertex index, -1 when the triple was dropped
    std::vector<int> vertex_of(seq.size() + 1, -1);

    auto fail = [&](Violation::Kind kind, ErrorCode code, int step, std::string detail) {
        if (strict) throw Error(code, "step " + std::to_string(step) + ": " + detail);
        result.violations.push_back(Violation{kind, step, std::move(detail)});
    };

    for (std::size_t i = 0; i < seq.size(); ++i) {
        const Triple& tr = seq[i];
        const int step = static_cast<int>(i) + 1;
        vocab.entry(tr.child.sym);
        if (strict && tr.child.order != step) {
            throw Error(ErrorCode::BadOrder, "step " + std::to_string(step) + ": order field is " +
                                                 std::to_string(tr.child.order));
        }
        if (i == 0) {
            if (tr.parent_pos != 0) {
                fail(Violation::Kind::DanglingParent, ErrorCode::DanglingParent, step,
                     "first triple must hang off the virtual root");
                continue;
            }
            result.tree = ExprTree(tr.child.sym);
            result.tree.set_order(0, step);
            vertex_of[step] = 0;
            continue;
        }
        if (tr.parent_pos == 0) {
            fail(Violation::Kind::MultipleRoots, ErrorCode::MultipleRoots, step, "second root");
            continue;
        }
        if (tr.parent_pos < 0 || tr.parent_pos >= step) {
            fail(Violation::Kind::DanglingParent, ErrorCode::DanglingParent, step,
                 "parent position " + std::to_string(tr.parent_pos) + " does not precede the child");
            continue;
        }
        const int pv = vertex_of[tr.parent_pos];
        if (pv < 0 || result.tree.empty()) {
            fail(Violation::Kind::Orphaned, ErrorCode::DanglingParent, step,
                 "parent position " + std::to_string(tr.parent_pos) + " was dropped");
            continue;
        }
        if (!tr.rel) {
            fail(Violation::Kind::MissingRelation, ErrorCode::BadFormat, step, "non-root triple without relation");
            continue;
        }
        const SymbolId psym = result.tree.vertex(pv).node.sym;
        if (!vocab.mask(psym).test(*tr.rel)) {
            fail(Violation::Kind::IllegalRelation, ErrorCode::IllegalRelation, step,
                 "'" + vocab.glyph(psym) + "' cannot have a " + std::string(relation_name(*tr.rel)) + " child");
            continue;
        }
        if (result.tree.child(pv, *tr.rel)) {
            fail(Violation::Kind::DuplicateRelation, ErrorCode::DuplicateRelation, step,
                 "'" + vocab.glyph(psym) + "' already has a " + std::string(relation_name(*tr.rel)) + " child");
            continue;
        }
        const int v = result.tree.add_child(pv, *tr.rel, tr.child.sym, vocab);
        result.tree.set_order(v, step);
        vertex_of[step] = v;
    }
    if (!strict) result.tree.renumber();
    return result;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string f;
    while (in >> f) out.push_back(f);
    return out;
}

int parse_int(const std::string& s, int lineno) {
    try {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": expected an integer, got '" + s + "'");
}

} // namespace

std::string write_triples(const TripleSeq& seq, const Vocabulary& vocab) {
    std::string out;
    for (const auto& t : seq) {
        out += std::to_string(t.child.order);
        out += '\t';
        out += vocab.glyph(t.child.sym);
        out += '\t';
        out += std::to_string(t.parent_pos);
        out += '\t';
        out += t.rel ? std::string(relation_name(*t.rel)) : std::string("-");
        out += '\n';
    }
    return out;
}

TripleSeq read_triples(std::string_view text, const Vocabulary& vocab) {
    TripleSeq seq;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto f = split_fields(line);
        if (f.empty()) continue;
        if (f.size() != 4) {
            throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": expected 4 fields, got " +
                                                  std::to_string(f.size()));
        }
        Triple t;
        t.child.order = parse_int(f[0], lineno);
        auto sym = vocab.find(f[1]);
        if (!sym) throw Error(ErrorCode::UnknownSymbol, "line " + std::to_string(lineno) + ": unknown symbol '" + f[1] + "'");
        t.child.sym = *sym;
        t.parent_pos = parse_int(f[2], lineno);
        if (f[3] != "-") {
            auto rel = relation_from_name(f[3]);
            if (!rel) throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": unknown relation '" + f[3] + "'");
            t.rel = rel;
        }
        seq.push_back(t);
    }
    return seq;
}

std::string write_tree_dump(const ExprTree& t, const Vocabulary& vocab) {
    std::string out;
    if (t.empty()) return out;
    std::function<void(int, int, std::optional<Relation>)> visit = [&](int v, int depth, std::optional<Relation> rel) {
        out.append(static_cast<std::size_t>(depth) * 2, ' ');
        if (rel) {
            out += relation_name(*rel);
            out += ' ';
        }
        out += vocab.glyph(t.vertex(v).node.sym);
        out += '\n';
        for (const auto& e : t.vertex(v).children) visit(e.child, depth + 1, e.rel);
    };
    visit(ExprTree::root(), 0, std::nullopt);
    return out;
}

ExprTree read_tree_dump(std::string_view text, const Vocabulary& vocab) {
    ExprTree tree;
    std::vector<int> stack; // vertex at each depth
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::size_t indent = line.find_first_not_of(' ');
        if (indent % 2 != 0) throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": odd indentation");
        const std::size_t depth = indent / 2;
        auto f = split_fields(line);
        if (tree.empty()) {
            if (depth != 0 || f.size() != 1) {
                throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": first line must be the root glyph");
            }
            tree = ExprTree(vocab.at(f[0]));
            stack = {ExprTree::root()};
            continue;
        }
        if (depth == 0 || depth > stack.size() || f.size() != 2) {
            throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": expected 'Relation glyph' under a parent");
        }
        auto rel = relation_from_name(f[0]);
        if (!rel) throw Error(ErrorCode::BadFormat, "line " + std::to_string(lineno) + ": unknown relation '" + f[0] + "'");
        stack.resize(depth);
        const int v = tree.add_child(stack.back(), *rel, vocab.at(f[1]), vocab);
        stack.push_back(v);
    }
    if (tree.empty()) throw Error(ErrorCode::BadFormat, "empty tree dump");
    tree.renumber();
    return tree;
}

} // namespace treedec
