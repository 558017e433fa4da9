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

#include "treedec/data.hpp"

#include "treedec/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

namespace treedec::data {

namespace {

// --- glyph atlas ---------------------------------------------------------------

using GlyphRows = std::array<const char*, 7>;

// Internal codes for the non-ASCII shapes: A alpha, P pi, S sigma, Q product,
// * times, > arrow, ? unknown.
const std::map<char, GlyphRows>& atlas() {
    static const std::map<char, GlyphRows> a = {
        {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
        {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
        {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
        {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
        {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
        {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
        {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
        {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
        {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
        {'a', {"     ", "     ", " ### ", "    #", " ####", "#   #", " ####"}},
        {'b', {"#    ", "#    ", "# ## ", "##  #", "#   #", "#   #", "#### "}},
        {'c', {"     ", "     ", " ### ", "#    ", "#    ", "#   #", " ### "}},
        {'e', {"     ", "     ", " ### ", "#   #", "#####", "#    ", " ### "}},
        {'i', {"  #  ", "     ", " ##  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'k', {"#    ", "#    ", "#  # ", "# #  ", "##   ", "# #  ", "#  # "}},
        {'l', {" ##  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
        {'m', {"     ", "     ", "## # ", "# # #", "# # #", "#   #", "#   #"}},
        {'n', {"     ", "     ", "# ## ", "##  #", "#   #", "#   #", "#   #"}},
        {'o', {"     ", "     ", " ### ", "#   #", "#   #", "#   #", " ### "}},
        {'s', {"     ", "     ", " ####", "#    ", " ### ", "    #", "#### "}},
        {'x', {"     ", "     ", "#   #", " # # ", "  #  ", " # # ", "#   #"}},
        {'y', {"     ", "     ", "#   #", "#   #", " ####", "    #", " ### "}},
        {'A', {"     ", "     ", " ## #", "#  # ", "#  # ", "#  # ", " ## #"}},
        {'P', {"     ", "     ", "#####", " # # ", " # # ", " # # ", " # # "}},
        {'S', {"#####", "#    ", " #   ", "  #  ", " #   ", "#    ", "#####"}},
        {'Q', {"#####", " # # ", " # # ", " # # ", " # # ", " # # ", " # # "}},
        {'+', {"     ", "  #  ", "  #  ", "#####", "  #  ", "  #  ", "     "}},
        {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
        {'=', {"     ", "     ", "#####", "     ", "#####", "     ", "     "}},
        {'*', {"     ", "#   #", " # # ", "  #  ", " # # ", "#   #", "     "}},
        {'>', {"     ", "   # ", "    #", "#####", "    #", "   # ", "     "}},
        {'?', {"#####", "#   #", "#   #", "#   #", "#   #", "#   #", "#####"}},
    };
    return a;
}

std::string glyph_text(const std::string& g) {
    static const std::map<std::string, std::string> named = {
        {"\\alpha", "A"}, {"\\pi", "P"},   {"\\sin", "sin"}, {"\\cos", "cos"}, {"\\times", "*"},
        {"\\to", ">"},    {"\\sum", "S"},  {"\\prod", "Q"},  {"\\lim", "lim"},
    };
    if (auto it = named.find(g); it != named.end()) return it->second;
    if (g.size() == 1 && atlas().contains(g[0])) return g;
    return "?";
}

// --- layout --------------------------------------------------------------------

// Layout units: one glyph cell at scale 1. y grows downward, baseline at 0.
struct Prim {
    bool line = false;
    char ch = 0;
    double x = 0, y = 0, s = 1;        // glyph: top-left corner and cell size
    double x1 = 0, y1 = 0, thick = 1; // line: second end point and width
};

struct Box {
    double w = 0, asc = 0, desc = 0;
    std::vector<Prim> prims;

    void place(const Box& b, double dx, double dy) {
        for (Prim p : b.prims) {
            p.x += dx;
            p.y += dy;
            p.x1 += dx;
            p.y1 += dy;
            prims.push_back(p);
        }
        w = std::max(w, dx + b.w);
        asc = std::max(asc, b.asc - dy);
        desc = std::max(desc, b.desc + dy);
    }
};

Box text_box(const std::string& text, double s, double lift = 0) {
    Box b;
    for (std::size_t i = 0; i < text.size(); ++i) {
        Prim p;
        p.ch = text[i];
        p.x = static_cast<double>(i) * 6 * s;
        p.y = -7 * s - lift;
        p.s = s;
        b.prims.push_back(p);
    }
    b.w = static_cast<double>(text.size()) * 6 * s - s;
    b.asc = 7 * s + lift;
    b.desc = std::max(0.0, -lift);
    return b;
}

Prim line(double x0, double y0, double x1, double y1, double thick) {
    Prim p;
    p.line = true;
    p.x = x0;
    p.y = y0;
    p.x1 = x1;
    p.y1 = y1;
    p.thick = thick;
    return p;
}

class Layouter {
  public:
    Layouter(const ExprTree& t, const Vocabulary& v) : t_(t), v_(v) {}

    Box row(int vtx, double s) {
        Box r;
        double x = 0;
        for (std::optional<int> cur = vtx; cur; cur = t_.child(*cur, Relation::Right)) {
            r.place(item(*cur, s), x, 0);
            x = r.w + 1.2 * s;
        }
        return r;
    }

  private:
    Box item(int vtx, double s) {
        const SymbolId sym = t_.vertex(vtx).node.sym;
        const auto& e = v_.entry(sym);
        const SymbolClass cls = e.classes.front();
        const auto child = [&](Relation r) { return t_.child(vtx, r); };
        const double axis = -3.5 * s;
        Box n;
        if (cls == SymbolClass::Frac) {
            Box num, den;
            if (auto c = child(Relation::Above)) num = row(*c, s * 0.8);
            if (auto c = child(Relation::Below)) den = row(*c, s * 0.8);
            const double w = std::max({num.w, den.w, 4 * s}) + 2 * s;
            n.prims.push_back(line(0, axis, w, axis, 0.7 * s));
            n.w = w;
            n.asc = -axis;
            n.place(num, (w - num.w) / 2, axis - 1.2 * s - num.desc);
            n.place(den, (w - den.w) / 2, axis + 1.2 * s + den.asc);
        } else if (cls == SymbolClass::Sqrt) {
            Box in;
            if (auto c = child(Relation::Inside)) in = row(*c, s);
            const double top = -(std::max(in.asc, 7 * s) + 1.5 * s);
            const double w = 5 * s + std::max(in.w, 3 * s);
            n.prims.push_back(line(0, -3 * s, 1.5 * s, 0, 0.6 * s));
            n.prims.push_back(line(1.5 * s, 0, 3.5 * s, top, 0.6 * s));
            n.prims.push_back(line(3.5 * s, top, w, top, 0.6 * s));
            n.w = w;
            n.asc = -top + 0.3 * s;
            n.place(in, 4.5 * s, 0);
        } else {
            const bool big = cls == SymbolClass::BigOp;
            const double gs = big ? 1.3 * s : s;
            n = text_box(glyph_text(e.glyph), gs, big ? -(axis + 3.5 * gs) : 0);
            Box above, below;
            if (auto c = child(Relation::Above)) above = row(*c, s * 0.7);
            if (auto c = child(Relation::Below)) below = row(*c, s * 0.7);
            const double w = std::max({n.w, above.w, below.w});
            Box stacked;
            stacked.place(n, (w - n.w) / 2, 0);
            if (!above.prims.empty()) stacked.place(above, (w - above.w) / 2, -n.asc - 0.8 * s - above.desc);
            if (!below.prims.empty()) stacked.place(below, (w - below.w) / 2, n.desc + 0.8 * s + below.asc);
            n = std::move(stacked);
        }
        auto sup = child(Relation::Sup);
        auto sub = child(Relation::Sub);
        const double nw = n.w;
        if (sup) {
            Box b = row(*sup, s * 0.7);
            n.place(b, nw + 0.5 * s, -4.5 * s);
        }
        if (sub) {
            Box b = row(*sub, s * 0.7);
            n.place(b, nw + 0.5 * s, 0.55 * b.asc);
        }
        return n;
    }

    const ExprTree& t_;
    const Vocabulary& v_;
};

// --- rasterizer ----------------------------------------------------------------

void ink(Bitmap& img, int x, int y, double cover) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height || cover <= 0) return;
    const auto v = static_cast<std::uint8_t>(std::lround(std::min(1.0, cover) * 255));
    img.at(x, y) = std::max(img.at(x, y), v);
}

void draw_glyph(Bitmap& img, char ch, double x, double y, double cell) {
    auto it = atlas().find(ch);
    const GlyphRows& rows = it != atlas().end() ? it->second : atlas().at('?');
    const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
    const int x1 = static_cast<int>(std::ceil(x + 5 * cell)), y1 = static_cast<int>(std::ceil(y + 7 * cell));
    constexpr int kSub = 3;
    for (int py = y0; py < y1; ++py) {
        for (int px = x0; px < x1; ++px) {
            int hits = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    const double u = (px + (sx + 0.5) / kSub - x) / cell;
                    const double v = (py + (sy + 0.5) / kSub - y) / cell;
                    if (u < 0 || v < 0 || u >= 5 || v >= 7) continue;
                    if (rows[static_cast<int>(v)][static_cast<int>(u)] == '#') ++hits;
                }
            }
            ink(img, px, py, static_cast<double>(hits) / (kSub * kSub));
        }
    }
}

void draw_line(Bitmap& img, double ax, double ay, double bx, double by, double thick) {
    const double r = std::max(0.5, thick / 2);
    const int x0 = static_cast<int>(std::floor(std::min(ax, bx) - r)), x1 = static_cast<int>(std::ceil(std::max(ax, bx) + r));
    const int y0 = static_cast<int>(std::floor(std::min(ay, by) - r)), y1 = static_cast<int>(std::ceil(std::max(ay, by) + r));
    const double dx = bx - ax, dy = by - ay, len2 = dx * dx + dy * dy;
    for (int py = y0; py <= y1; ++py) {
        for (int px = x0; px <= x1; ++px) {
            const double cx = px + 0.5, cy = py + 0.5;
            const double t = len2 > 0 ? std::clamp(((cx - ax) * dx + (cy - ay) * dy) / len2, 0.0, 1.0) : 0.0;
            const double d = std::hypot(cx - ax - t * dx, cy - ay - t * dy);
            ink(img, px, py, std::clamp(r + 0.5 - d, 0.0, 1.0));
        }
    }
}

// --- generator -----------------------------------------------------------------

class Generator {
  public:
    Generator(std::mt19937_64& rng, const GenGrammar& g, const Vocabulary& v) : rng_(rng), g_(g), v_(v) {
        for (int i = 0; i < v.size(); ++i) {
            const SymbolId id{i};
            if (id == v.start() || id == v.end()) continue;
            if (!g.symbols.empty() && std::find(g.symbols.begin(), g.symbols.end(), v.glyph(id)) == g.symbols.end()) continue;
            pools_[v.entry(id).classes.front()].push_back(id);
        }
        if (pools_.empty()) throw Error(ErrorCode::ConfigError, "generator has no symbols to draw from");
    }

    ExprTree run() {
        tree_ = ExprTree();
        fill_row(-1, Relation::Right, 1);
        tree_.renumber();
        return tree_;
    }

  private:
    bool coin(double p) { return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng_); }

    SymbolId pick(int depth) {
        const bool nest = depth < g_.max_depth;
        const std::pair<SymbolClass, double> weights[] = {
            {SymbolClass::Letter, g_.w_letter}, {SymbolClass::Number, g_.w_number},
            {SymbolClass::Bin, g_.w_bin},       {SymbolClass::Frac, nest ? g_.w_frac : 0},
            {SymbolClass::Sqrt, nest ? g_.w_sqrt : 0}, {SymbolClass::BigOp, g_.w_bigop},
            {SymbolClass::Lim, nest ? g_.w_lim : 0},
        };
        std::vector<SymbolClass> classes;
        std::vector<double> w;
        for (auto [c, wt] : weights) {
            if (wt > 0 && pools_.contains(c)) {
                classes.push_back(c);
                w.push_back(wt);
            }
        }
        if (classes.empty()) throw Error(ErrorCode::ConfigError, "generator weights leave no usable class");
        const auto c = classes[std::discrete_distribution<int>(w.begin(), w.end())(rng_)];
        const auto& pool = pools_.at(c);
        return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng_)];
    }

    int attach(int parent, Relation rel, SymbolId sym) {
        if (parent < 0) {
            tree_ = ExprTree(sym);
            return ExprTree::root();
        }
        return tree_.add_child(parent, rel, sym, v_);
    }

    void fill_row(int parent, Relation rel, int depth) {
        int cur = place(parent, rel, depth);
        const double p = depth == 1 ? g_.p_continue : g_.p_continue_nested;
        while (tree_.size() < g_.max_nodes && coin(p)) cur = place(cur, Relation::Right, depth);
    }

    int place(int parent, Relation rel, int depth) {
        const SymbolId sym = pick(depth);
        const int v = attach(parent, rel, sym);
        const bool nest = depth < g_.max_depth;
        switch (v_.entry(sym).classes.front()) {
        case SymbolClass::Frac:
            fill_row(v, Relation::Above, depth + 1);
            fill_row(v, Relation::Below, depth + 1);
            break;
        case SymbolClass::Sqrt:
            fill_row(v, Relation::Inside, depth + 1);
            break;
        case SymbolClass::Lim:
            fill_row(v, Relation::Below, depth + 1);
            break;
        case SymbolClass::BigOp:
            if (nest) {
                const bool limits = coin(g_.p_limits);
                if (coin(0.8)) fill_row(v, limits ? Relation::Below : Relation::Sub, depth + 1);
                if (coin(0.6)) fill_row(v, limits ? Relation::Above : Relation::Sup, depth + 1);
            }
            break;
        case SymbolClass::Letter:
        case SymbolClass::Number:
            if (nest && coin(g_.p_script)) {
                const MaskVector m = v_.mask(sym);
                const bool can_sub = m.test(Relation::Sub);
                const bool both = can_sub && coin(g_.p_both_scripts);
                const bool sup = both || !can_sub || coin(0.6);
                if (sup) fill_row(v, Relation::Sup, depth + 1);
                if (both || !sup) fill_row(v, Relation::Sub, depth + 1);
            }
            break;
        default:
            break;
        }
        return v;
    }

    std::mt19937_64& rng_;
    const GenGrammar& g_;
    const Vocabulary& v_;
    std::map<SymbolClass, std::vector<SymbolId>> pools_;
    ExprTree tree_;
};

std::string sample_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%05d", i);
    return buf;
}

} // namespace

int nesting_depth(const ExprTree& t) {
    if (t.empty()) return 0;
    int best = 0;
    std::vector<std::pair<int, int>> stack{{ExprTree::root(), 1}};
    while (!stack.empty()) {
        auto [v, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        for (const auto& e : t.vertex(v).children) stack.emplace_back(e.child, e.rel == Relation::Right ? d : d + 1);
    }
    return best;
}

ExprTree random_tree(std::mt19937_64& rng, const GenGrammar& g, const Vocabulary& vocab) {
    if (g.max_depth < 1 || g.max_nodes < 1) throw Error(ErrorCode::ConfigError, "max_depth and max_nodes must be >= 1");
    Generator gen(rng, g, vocab);
    // Structural children can overshoot the node budget; redraw until it fits.
    for (int attempt = 0; attempt < 10000; ++attempt) {
        ExprTree t = gen.run();
        if (t.size() <= g.max_nodes && nesting_depth(t) <= g.max_depth) return t;
    }
    throw Error(ErrorCode::ConfigError, "generator could not satisfy max_nodes");
}

Bitmap render(const ExprTree& t, std::mt19937_64& rng, const RenderOptions& opts, const Vocabulary& vocab) {
    if (opts.height < 8 || opts.stride < 1) throw Error(ErrorCode::BadDims, "render height must be >= 8");
    Box box;
    if (!t.empty()) box = Layouter(t, vocab).row(ExprTree::root(), 1.0);
    const double margin = 2;
    const double H = std::max(box.asc + box.desc, 1.0);
    const double k = std::min(opts.base_cell, (opts.height - 2 * margin) / H);
    int width = static_cast<int>(std::ceil(box.w * k + 2 * margin));
    width = std::max(width, opts.stride);
    width = (width + opts.stride - 1) / opts.stride * opts.stride;
    Bitmap img(width, opts.height);
    const double x0 = margin + (width - 2 * margin - box.w * k) / 2;
    const double y0 = (opts.height - H * k) / 2 + box.asc * k;
    std::uniform_real_distribution<double> jit(-opts.jitter, opts.jitter);
    std::uniform_real_distribution<double> noise(1 - opts.scale_noise, 1 + opts.scale_noise);
    for (const Prim& p : box.prims) {
        const double jx = jit(rng), jy = jit(rng);
        if (p.line) {
            draw_line(img, x0 + p.x * k + jx, y0 + p.y * k + jy, x0 + p.x1 * k + jx, y0 + p.y1 * k + jy, p.thick * k);
        } else {
            const double cell = p.s * k * noise(rng);
            draw_glyph(img, p.ch, x0 + p.x * k + jx, y0 + p.y * k + jy, cell);
        }
    }
    return img;
}

Sample make_sample(std::string id, const ExprTree& t, std::mt19937_64& rng, const RenderOptions& opts,
                   const Vocabulary& vocab) {
    Sample s;
    s.id = std::move(id);
    s.tree = t;
    s.tree.renumber();
    s.latex = to_latex(s.tree, vocab);
    s.triples = linearize(s.tree);
    s.img = render(s.tree, rng, opts, vocab);
    return s;
}

std::vector<Sample> generate(std::uint64_t seed, const GenGrammar& g, int n, const RenderOptions& opts,
                             const Vocabulary& vocab) {
    if (n < 1) throw Error(ErrorCode::ConfigError, "generate needs n >= 1");
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(make_sample(sample_id(i), random_tree(rng, g, vocab), rng, opts, vocab));
    return out;
}

// --- corpus I/O ----------------------------------------------------------------

void write_corpus(const std::string& dir, const std::vector<Sample>& samples, const Vocabulary& vocab) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create '" + dir + "': " + ec.message());
    std::string labels;
    for (const auto& s : samples) {
        labels += s.id + "\t" + s.latex + "\n";
        write_file((fs::path(dir) / (s.id + ".triples")).string(), write_triples(s.triples, vocab));
        write_pgm((fs::path(dir) / (s.id + ".pgm")).string(), s.img);
    }
    write_file((fs::path(dir) / "labels.txt").string(), labels);
}

std::vector<Sample> read_corpus(const std::string& dir, const Vocabulary& vocab) {
    namespace fs = std::filesystem;
    const std::string labels = read_file((fs::path(dir) / "labels.txt").string());
    std::vector<Sample> out;
    std::istringstream in(labels);
    std::string ln;
    int lineno = 0;
    while (std::getline(in, ln)) {
        ++lineno;
        if (!ln.empty() && ln.back() == '\r') ln.pop_back();
        if (ln.empty()) continue;
        const auto tab = ln.find('\t');
        if (tab == std::string::npos) {
            throw Error(ErrorCode::BadFormat, "labels.txt line " + std::to_string(lineno) + ": expected 'id<TAB>latex'");
        }
        Sample s;
        s.id = ln.substr(0, tab);
        s.latex = ln.substr(tab + 1);
        s.triples = read_triples(read_file((fs::path(dir) / (s.id + ".triples")).string()), vocab);
        s.tree = delinearize(s.triples, DelinearizeMode::Strict, vocab).tree;
        if (to_latex(s.tree, vocab) != s.latex) {
            throw Error(ErrorCode::BadFormat, "sample " + s.id + ": triples and latex label disagree");
        }
        s.img = read_pgm((fs::path(dir) / (s.id + ".pgm")).string());
        out.push_back(std::move(s));
    }
    return out;
}

// --- evaluation ----------------------------------------------------------------

long stream_distance(const std::vector<int>& pred, const std::vector<int>& ref, WerAlignment align) {
    if (align == WerAlignment::PerStep) {
        const std::size_t n = std::min(pred.size(), ref.size());
        long d = static_cast<long>(std::max(pred.size(), ref.size()) - n);
        for (std::size_t i = 0; i < n; ++i) d += pred[i] != ref[i];
        return d;
    }
    std::vector<long> prev(ref.size() + 1), cur(ref.size() + 1);
    for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = static_cast<long>(j);
    for (std::size_t i = 1; i <= pred.size(); ++i) {
        cur[0] = static_cast<long>(i);
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (pred[i - 1] != ref[j - 1])});
        }
        std::swap(prev, cur);
    }
    return prev[ref.size()];
}

std::vector<int> position_stream(const TripleSeq& seq) {
    std::vector<int> out;
    out.reserve(seq.size());
    for (const auto& t : seq) out.push_back(t.parent_pos);
    return out;
}

std::vector<int> relation_stream(const TripleSeq& seq) {
    std::vector<int> out;
    out.reserve(seq.size());
    for (const auto& t : seq) out.push_back(t.rel ? ordinal(*t.rel) : -1);
    return out;
}

EvalReport evaluate(const std::vector<TripleSeq>& preds, const std::vector<Sample>& refs, WerAlignment align,
                    const Vocabulary& vocab) {
    if (preds.size() != refs.size()) {
        throw Error(ErrorCode::LengthMismatch, "evaluate: " + std::to_string(preds.size()) + " predictions for " +
                                                   std::to_string(refs.size()) + " references");
    }
    EvalReport r;
    r.count = static_cast<int>(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const ExprTree pred = delinearize(preds[i], DelinearizeMode::Lenient, vocab).tree;
        if (tree_equal(pred, refs[i].tree)) ++r.tree_correct;
        if (!pred.empty() && to_latex(pred, vocab) == refs[i].latex) ++r.latex_correct;
        r.pos_errors += stream_distance(position_stream(preds[i]), position_stream(refs[i].triples), align);
        r.rel_errors += stream_distance(relation_stream(preds[i]), relation_stream(refs[i].triples), align);
        r.pos_tokens += static_cast<long>(refs[i].triples.size());
        r.rel_tokens += static_cast<long>(refs[i].triples.size());
    }
    if (r.count > 0) {
        r.exprate_tree = static_cast<double>(r.tree_correct) / r.count;
        r.exprate_latex = static_cast<double>(r.latex_correct) / r.count;
    }
    if (r.pos_tokens > 0) r.wer_pos = static_cast<double>(r.pos_errors) / r.pos_tokens;
    if (r.rel_tokens > 0) r.wer_rel = static_cast<double>(r.rel_errors) / r.rel_tokens;
    return r;
}

std::string format_report(const EvalReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %-14s %-9s %-9s\n%-14.2f %-14.2f %-9.2f %-9.2f\n", "ExpRate_tree",
                  "ExpRate_latex", "WER_pos", "WER_rel", 100 * r.exprate_tree, 100 * r.exprate_latex, 100 * r.wer_pos,
                  100 * r.wer_rel);
    return buf;
}

} // namespace treedec::data
