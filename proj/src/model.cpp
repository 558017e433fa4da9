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

#include "treedec/model.hpp"

#include "treedec/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace treedec::model {

using nn::Tape;
using nn::Tensor;
using nn::Var;

// --- configuration -------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

int to_int(std::string_view key, std::string_view v) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw Error(ErrorCode::ConfigError, std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
    }
    return out;
}

double to_double(std::string_view key, std::string_view v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(std::string(v), &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::ConfigError, std::string(key) + ": expected a number, got '" + std::string(v) + "'");
}

std::uint64_t to_seed(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw Error(ErrorCode::ConfigError, std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw Error(ErrorCode::ConfigError, std::string(key) + ": expected on/off, got '" + std::string(v) + "'");
}

std::string fmt_double(double d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

} // namespace

void validate_config(const ModelConfig& c) {
    const std::pair<const char*, int> dims[] = {
        {"embed", c.embed},     {"att", c.att},       {"hidden", c.hidden},
        {"feature", c.feature}, {"enc_c1", c.enc_c1}, {"enc_c2", c.enc_c2},
        {"cov_kernel", c.cov_kernel}, {"cov_channels", c.cov_channels},
        {"pool_h", c.pool_h},   {"pool_w", c.pool_w},
    };
    for (auto [name, v] : dims) {
        if (v < 1) throw Error(ErrorCode::ConfigError, std::string(name) + " must be >= 1");
    }
    if (c.cov_kernel % 2 == 0) throw Error(ErrorCode::ConfigError, "cov_kernel must be odd");
    for (double l : c.lambda) {
        if (!(l >= 0) || !std::isfinite(l)) throw Error(ErrorCode::ConfigError, "loss weights must be finite and >= 0");
    }
}

bool apply_model_setting(ModelConfig& c, std::string_view key, std::string_view value) {
    const std::pair<const char*, int*> ints[] = {
        {"embed", &c.embed},     {"att", &c.att},       {"hidden", &c.hidden},
        {"feature", &c.feature}, {"enc_c1", &c.enc_c1}, {"enc_c2", &c.enc_c2},
        {"cov_kernel", &c.cov_kernel}, {"cov_channels", &c.cov_channels},
        {"pool_h", &c.pool_h},   {"pool_w", &c.pool_w},
    };
    for (auto [name, p] : ints) {
        if (key == name) {
            *p = to_int(key, value);
            return true;
        }
    }
    if (key == "spatial_info") c.spatial_info = to_bool(key, value);
    else if (key == "static_mask") c.static_mask = to_bool(key, value);
    else if (key == "dynamic_mask") c.dynamic_mask = to_bool(key, value);
    else if (key == "mask_mode") c.mask_mode = nn::parse_mask_mode(value);
    else if (key == "mask_combine") c.combine = grammar::parse_mask_combine(value);
    else if (key == "dynamic_key") c.key = grammar::parse_dynamic_key(value);
    else if (key == "lambda1") c.lambda[0] = to_double(key, value);
    else if (key == "lambda2") c.lambda[1] = to_double(key, value);
    else if (key == "lambda3") c.lambda[2] = to_double(key, value);
    else if (key == "lambda4") c.lambda[3] = to_double(key, value);
    else if (key == "seed") c.seed = to_seed(key, value);
    else return false;
    return true;
}

bool apply_train_setting(TrainConfig& c, std::string_view key, std::string_view value) {
    if (key == "epochs") c.epochs = to_int(key, value);
    else if (key == "batch") c.batch = to_int(key, value);
    else if (key == "lr") c.lr = to_double(key, value);
    else if (key == "lr_decay") c.lr_decay = to_double(key, value);
    else if (key == "rho") c.rho = to_double(key, value);
    else if (key == "eps") c.eps = to_double(key, value);
    else if (key == "shuffle") c.shuffle = to_bool(key, value);
    else if (key == "seed") c.seed = to_seed(key, value);
    else return false;
    return true;
}

std::string model_config_text(const ModelConfig& c) {
    std::ostringstream o;
    o << "embed=" << c.embed << "\natt=" << c.att << "\nhidden=" << c.hidden << "\nfeature=" << c.feature
      << "\nenc_c1=" << c.enc_c1 << "\nenc_c2=" << c.enc_c2 << "\ncov_kernel=" << c.cov_kernel
      << "\ncov_channels=" << c.cov_channels << "\npool_h=" << c.pool_h << "\npool_w=" << c.pool_w
      << "\nspatial_info=" << (c.spatial_info ? "on" : "off") << "\nstatic_mask=" << (c.static_mask ? "on" : "off")
      << "\ndynamic_mask=" << (c.dynamic_mask ? "on" : "off") << "\nmask_mode=" << nn::mask_mode_name(c.mask_mode)
      << "\nmask_combine=" << grammar::mask_combine_name(c.combine)
      << "\ndynamic_key=" << grammar::dynamic_key_name(c.key);
    for (int i = 0; i < 4; ++i) o << "\nlambda" << i + 1 << "=" << fmt_double(c.lambda[i]);
    o << "\nseed=" << c.seed << "\n";
    return o.str();
}

ModelConfig parse_model_config(std::string_view text) {
    ModelConfig c;
    std::istringstream in{std::string(text)};
    std::string ln;
    while (std::getline(in, ln)) {
        const std::string t = trim(ln);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "expected key=value, got '" + t + "'");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        if (!apply_model_setting(c, key, trim(std::string_view(t).substr(eq + 1)))) {
            throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
        }
    }
    validate_config(c);
    return c;
}

TripleSeq training_target(const TripleSeq& seq, const Vocabulary& vocab) {
    if (seq.empty()) throw Error(ErrorCode::EmptyList, "training target needs at least one node");
    TripleSeq out = seq;
    // Follow Right edges from the root to the last node of its row.
    int last = 1;
    for (bool moved = true; moved;) {
        moved = false;
        for (const auto& t : seq) {
            if (t.parent_pos == last && t.rel == Relation::Right) {
                last = t.child.order;
                moved = true;
                break;
            }
        }
    }
    out.push_back(Triple{Node{vocab.end(), static_cast<int>(seq.size()) + 1}, last, Relation::Right});
    return out;
}

// --- building blocks -----------------------------------------------------------

AttentionOut coverage_attention(Var query, Var E, Var feat_proj, Var coverage, int grid_h, int grid_w,
                                const AttentionParams& p) {
    const int L = grid_h * grid_w;
    if (E.value().rank() != 2 || E.value().dim(0) != L) {
        throw Error(ErrorCode::ShapeMismatch, "attention grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                                  " does not match features " + nn::shape_str(E.shape()));
    }
    Tape& tape = *query.tape;
    Var cov = coverage.valid() ? coverage : tape.constant(Tensor(nn::Shape{L}));
    const int Q = p.conv_w.value().dim(0);
    Var fmap = nn::conv2d(nn::reshape(cov, {1, grid_h, grid_w}), p.conv_w, p.conv_b, 1);
    Var fproj = nn::linear(nn::transpose(nn::reshape(fmap, {Q, L})), p.u_cov);
    Var q = nn::add(nn::linear(query, p.w_query), p.bias);
    Var pre = nn::add_rowwise(nn::add(feat_proj, fproj), q);
    Var e = nn::reshape(nn::linear(nn::tanh(pre), p.v), {L});
    Var a = nn::softmax(e);
    return {a, nn::weighted_rows(a, E)};
}

PositionOut predict_parent_position(Var s_p, Var pooled_parent_att, const std::vector<Var>& mem_keys,
                                    const std::vector<Var>& alpha_keys, Var prev_child_embed, Var prev_child_state,
                                    const PositionParams& p, bool spatial_info) {
    if (mem_keys.empty()) throw Error(ErrorCode::StepTooEarly, "parent position needs at least one previous node");
    const int m = static_cast<int>(mem_keys.size());
    PositionOut out;
    Var q = nn::linear(s_p, p.w_mem);
    out.e_mem = nn::reshape(nn::linear(nn::tanh(nn::add_rowwise(nn::stack_rows(mem_keys), q)), p.v_mem), {m});
    out.e_pos = out.e_mem;
    if (spatial_info) {
        if (static_cast<int>(alpha_keys.size()) != m) {
            throw Error(ErrorCode::ShapeMismatch, "spatial keys and memory keys differ in count");
        }
        Var qa = nn::linear(pooled_parent_att, p.w_alpha);
        out.e_alpha = nn::reshape(nn::linear(nn::tanh(nn::add_rowwise(nn::stack_rows(alpha_keys), qa)), p.v_alpha), {m});
        out.gate = nn::sigmoid(
            nn::add(nn::add(nn::linear(prev_child_embed, p.w_yg), nn::linear(prev_child_state, p.u_sg)), p.b_g));
        out.e_pos = nn::add(out.e_mem, nn::mul_scalar(out.e_alpha, out.gate));
    }
    out.G = nn::sigmoid(out.e_pos);
    return out;
}

// --- parameters ----------------------------------------------------------------

namespace {

void add_gru(nn::ParamStore& ps, const std::string& pre, int in, int n, std::mt19937_64& rng) {
    for (const char* g : {"wz", "wr", "wh"}) ps.add_uniform(pre + "." + g, {n, in}, in, rng);
    for (const char* g : {"uz", "ur", "uh"}) ps.add_uniform(pre + "." + g, {n, n}, n, rng);
    for (const char* g : {"bz", "br", "bh"}) ps.add_uniform(pre + "." + g, {n}, n, rng);
}

void add_attention(nn::ParamStore& ps, const std::string& pre, const ModelConfig& c, std::mt19937_64& rng) {
    const int k = c.cov_kernel;
    ps.add_uniform(pre + ".w_query", {c.att, c.hidden}, c.hidden, rng);
    ps.add_uniform(pre + ".u_feat", {c.att, c.feature}, c.feature, rng);
    ps.add_uniform(pre + ".u_cov", {c.att, c.cov_channels}, c.cov_channels, rng);
    ps.add_uniform(pre + ".conv_w", {c.cov_channels, 1, k, k}, k * k, rng);
    ps.add_uniform(pre + ".conv_b", {c.cov_channels}, k * k, rng);
    ps.add_uniform(pre + ".bias", {c.att}, c.att, rng);
    ps.add_uniform(pre + ".v", {1, c.att}, c.att, rng);
}

} // namespace

struct Model::Bound {
    Var c1w, c1b, c2w, c2b, c3w, c3b;
    Var init_w, init_b;
    Var emb_child, emb_parent;
    nn::GruWeights pgru1, pgru2, cgru1, cgru2;
    AttentionParams patt, catt;
    PositionParams pos;
    Var w_e, w_h, w_c, w_out, b_out;
    Var w_cp, w_cc, w_rel;
};

Model::Model(ModelConfig cfg, const Vocabulary& vocab)
    : cfg_(cfg), vocab_(vocab), table_(grammar::StaticMaskTable::from_vocabulary(vocab)) {
    validate_config(cfg_);
    std::mt19937_64 rng(cfg_.seed);
    const int S = vocab_.size(), E = cfg_.embed, A = cfg_.att, n = cfg_.hidden, D = cfg_.feature;
    const int P = cfg_.pool_h * cfg_.pool_w;
    auto& ps = params_;
    ps.add_uniform("enc.conv1.w", {cfg_.enc_c1, 1, 3, 3}, 9, rng);
    ps.add_uniform("enc.conv1.b", {cfg_.enc_c1}, 9, rng);
    ps.add_uniform("enc.conv2.w", {cfg_.enc_c2, cfg_.enc_c1, 3, 3}, 9 * cfg_.enc_c1, rng);
    ps.add_uniform("enc.conv2.b", {cfg_.enc_c2}, 9 * cfg_.enc_c1, rng);
    ps.add_uniform("enc.conv3.w", {D, cfg_.enc_c2, 3, 3}, 9 * cfg_.enc_c2, rng);
    ps.add_uniform("enc.conv3.b", {D}, 9 * cfg_.enc_c2, rng);
    ps.add_uniform("init.w", {n, D}, D, rng);
    ps.add_uniform("init.b", {n}, D, rng);
    ps.add_uniform("emb.child", {S, E}, 1, rng);
    ps.add_uniform("emb.parent", {S, E}, 1, rng);
    add_gru(ps, "pdec.gru1", E, n, rng);
    add_gru(ps, "pdec.gru2", D, n, rng);
    add_attention(ps, "pdec.att", cfg_, rng);
    add_gru(ps, "cdec.gru1", E, n, rng);
    add_gru(ps, "cdec.gru2", D, n, rng);
    add_attention(ps, "cdec.att", cfg_, rng);
    ps.add_uniform("pos.w_mem", {A, n}, n, rng);
    ps.add_uniform("pos.u_mem", {A, n}, n, rng);
    ps.add_uniform("pos.v_mem", {1, A}, A, rng);
    ps.add_uniform("pos.w_alpha", {A, P}, P, rng);
    ps.add_uniform("pos.u_alpha", {A, P}, P, rng);
    ps.add_uniform("pos.v_alpha", {1, A}, A, rng);
    ps.add_uniform("pos.w_yg", {1, E}, E, rng);
    ps.add_uniform("pos.u_sg", {1, n}, n, rng);
    ps.add_uniform("pos.b_g", {1}, 1, rng);
    ps.add_uniform("child.w_e", {E, E}, E, rng);
    ps.add_uniform("child.w_h", {E, n}, n, rng);
    ps.add_uniform("child.w_c", {E, D}, D, rng);
    ps.add_uniform("child.w_out", {S, E}, E, rng);
    ps.add_uniform("child.b_out", {S}, E, rng);
    ps.add_uniform("rel.w_cp", {A, D}, D, rng);
    ps.add_uniform("rel.w_cc", {A, D}, D, rng);
    ps.add_uniform("rel.w_out", {kNumRelations, A}, A, rng);
}

void Model::set_switches(bool spatial_info, bool static_mask, bool dynamic_mask) {
    cfg_.spatial_info = spatial_info;
    cfg_.static_mask = static_mask;
    cfg_.dynamic_mask = dynamic_mask;
}

Model::Bound Model::bind(Tape& tape) const {
    // A recording tape deposits gradients into the store; callers that
    // record only do so through non-const paths (forward from Trainer).
    auto P = [&](const std::string& name) -> Var {
        const nn::Param& p = params_.get(name);
        return tape.recording() ? tape.param(const_cast<nn::Param&>(p)) : tape.param(p);
    };
    auto gru = [&](const std::string& pre) {
        return nn::GruWeights{P(pre + ".wz"), P(pre + ".wr"), P(pre + ".wh"), P(pre + ".uz"), P(pre + ".ur"),
                              P(pre + ".uh"), P(pre + ".bz"), P(pre + ".br"), P(pre + ".bh")};
    };
    auto att = [&](const std::string& pre) {
        return AttentionParams{P(pre + ".w_query"), P(pre + ".u_feat"), P(pre + ".u_cov"), P(pre + ".conv_w"),
                               P(pre + ".conv_b"),  P(pre + ".bias"),   P(pre + ".v")};
    };
    Bound b;
    b.c1w = P("enc.conv1.w");
    b.c1b = P("enc.conv1.b");
    b.c2w = P("enc.conv2.w");
    b.c2b = P("enc.conv2.b");
    b.c3w = P("enc.conv3.w");
    b.c3b = P("enc.conv3.b");
    b.init_w = P("init.w");
    b.init_b = P("init.b");
    b.emb_child = P("emb.child");
    b.emb_parent = P("emb.parent");
    b.pgru1 = gru("pdec.gru1");
    b.pgru2 = gru("pdec.gru2");
    b.cgru1 = gru("cdec.gru1");
    b.cgru2 = gru("cdec.gru2");
    b.patt = att("pdec.att");
    b.catt = att("cdec.att");
    b.pos = PositionParams{P("pos.w_mem"),   P("pos.u_mem"), P("pos.v_mem"), P("pos.w_alpha"), P("pos.u_alpha"),
                           P("pos.v_alpha"), P("pos.w_yg"),  P("pos.u_sg"),  P("pos.b_g")};
    b.w_e = P("child.w_e");
    b.w_h = P("child.w_h");
    b.w_c = P("child.w_c");
    b.w_out = P("child.w_out");
    b.b_out = P("child.b_out");
    b.w_cp = P("rel.w_cp");
    b.w_cc = P("rel.w_cc");
    b.w_rel = P("rel.w_out");
    return b;
}

Model::Grid Model::encode(Tape& tape, const Bitmap& img) const {
    if (img.width <= 0 || img.height <= 0 || img.width % 4 != 0 || img.height % 4 != 0) {
        throw Error(ErrorCode::BadDims, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                            " must have both sides divisible by 4");
    }
    auto P = [&](const std::string& name) -> Var {
        const nn::Param& p = params_.get(name);
        return tape.recording() ? tape.param(const_cast<nn::Param&>(p)) : tape.param(p);
    };
    Tensor x(nn::Shape{1, img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) x[i] = img.pixels[i] / 255.0;
    Var h = nn::relu(nn::conv2d(tape.constant(std::move(x)), P("enc.conv1.w"), P("enc.conv1.b"), 2));
    h = nn::relu(nn::conv2d(h, P("enc.conv2.w"), P("enc.conv2.b"), 2));
    h = nn::relu(nn::conv2d(h, P("enc.conv3.w"), P("enc.conv3.b"), 1));
    Grid g;
    g.h = img.height / 4;
    g.w = img.width / 4;
    g.E = nn::transpose(nn::reshape(h, {cfg_.feature, g.h * g.w}));
    return g;
}

MaskVector Model::relation_mask(const Node& parent, const grammar::DynamicMaskState& state) const {
    const MaskVector stat = cfg_.static_mask ? grammar::static_mask(parent.sym, table_) : MaskVector::all();
    if (!cfg_.dynamic_mask) return stat;
    const MaskVector dyn = grammar::dynamic_mask(parent, state);
    return cfg_.combine == grammar::MaskCombine::AndNot ? (stat & ~dyn) : (stat ^ dyn);
}

namespace {

// Shared per-step machinery of the teacher-forced and the greedy pass.
struct Runner {
    const ModelConfig& cfg;
    const Vocabulary& vocab;
    Tape& tape;
    Var E, proj_p, proj_c;
    int gh = 0, gw = 0;
    Var s_p, cov_p, cov_c;
    std::vector<Var> s_c_hist, a_c_hist, mem_keys, alpha_keys;

    Var pooled(Var a) const {
        return nn::reshape(nn::adaptive_avg_pool(nn::reshape(a, {gh, gw}), cfg.pool_h, cfg.pool_w),
                           {cfg.pool_h * cfg.pool_w});
    }
};

std::size_t argmax(const Tensor& t) {
    return static_cast<std::size_t>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

} // namespace

ForwardResult Model::forward(Tape& tape, const Bitmap& img, const TripleSeq& target, const ForwardOptions& opts) const {
    const int T = static_cast<int>(target.size());
    if (T == 0) throw Error(ErrorCode::EmptyList, "forward needs a non-empty target");
    for (int t = 1; t <= T; ++t) {
        const Triple& tr = target[t - 1];
        const bool ok = t == 1 ? tr.parent_pos == 0 : (tr.parent_pos >= 1 && tr.parent_pos < t && tr.rel.has_value());
        if (!ok || !vocab_.contains(tr.child.sym)) {
            throw Error(ErrorCode::BadFormat, "target triple " + std::to_string(t) + " is not a valid decode step");
        }
    }
    if (opts.frozen_refs && static_cast<int>(opts.frozen_refs->size()) != T + 1) {
        throw Error(ErrorCode::LengthMismatch, "frozen reference maps must have one entry per step plus one");
    }

    const Bound b = bind(tape);
    const Grid g = encode(tape, img);
    Runner r{cfg_, vocab_, tape, g.E, nn::linear(g.E, b.patt.u_feat), nn::linear(g.E, b.catt.u_feat), g.h, g.w, {}, {}, {}, {}, {}, {}, {}};
    r.s_p = nn::tanh(nn::add(nn::linear(nn::mean_rows(g.E), b.init_w), b.init_b));

    ForwardResult res;
    res.refs.assign(static_cast<std::size_t>(T) + 1, Tensor());
    std::vector<Var> lc, lpos, lrel, lalpha;
    grammar::DynamicMaskState state(cfg_.key, vocab_.size());
    SymbolId y_prev = vocab_.start();

    for (int t = 1; t <= T; ++t) {
        const Triple& tr = target[t - 1];
        Var e_prev = nn::row(b.emb_child, y_prev.index);
        Var sp_hat = nn::gru_cell(e_prev, r.s_p, b.pgru1);
        const AttentionOut pa = coverage_attention(sp_hat, g.E, r.proj_p, r.cov_p, g.h, g.w, b.patt);
        r.cov_p = r.cov_p.valid() ? nn::add(r.cov_p, pa.a) : pa.a;
        r.s_p = nn::gru_cell(pa.c, sp_hat, b.pgru2);

        const int ppos = tr.parent_pos;
        const SymbolId y_par = ppos == 0 ? vocab_.start() : target[ppos - 1].child.sym;
        PositionOut po;
        if (t >= 2) {
            po = predict_parent_position(r.s_p, cfg_.spatial_info ? r.pooled(pa.a) : Var{}, r.mem_keys, r.alpha_keys,
                                         e_prev, r.s_c_hist.back(), b.pos, cfg_.spatial_info);
            Tensor onehot(nn::Shape{t - 1});
            onehot[ppos - 1] = 1.0;
            lpos.push_back(nn::bce_with_logits(po.e_pos, onehot));
        }

        Var e_par = nn::row(b.emb_parent, y_par.index);
        Var sc_hat = nn::gru_cell(e_par, r.s_p, b.cgru1);
        const AttentionOut ca = coverage_attention(sc_hat, g.E, r.proj_c, r.cov_c, g.h, g.w, b.catt);
        r.cov_c = r.cov_c.valid() ? nn::add(r.cov_c, ca.a) : ca.a;
        Var s_c = nn::gru_cell(ca.c, sc_hat, b.cgru2);

        Var readout = nn::add(nn::add(nn::linear(e_par, b.w_e), nn::linear(s_c, b.w_h)), nn::linear(ca.c, b.w_c));
        Var child_lp = nn::log_softmax(nn::add(nn::linear(readout, b.w_out), b.b_out));
        lc.push_back(nn::scale(nn::pick(child_lp, tr.child.sym.index), -1.0));

        Var rel_lp;
        MaskVector mask;
        if (t >= 2) {
            const Node parent{y_par, ppos};
            mask = relation_mask(parent, state);
            Var logits = nn::linear(nn::add(nn::linear(pa.c, b.w_cp), nn::linear(ca.c, b.w_cc)), b.w_rel);
            rel_lp = nn::log_softmax(nn::apply_mask(logits, mask, cfg_.mask_mode));
            lrel.push_back(nn::scale(nn::pick(rel_lp, ordinal(*tr.rel)), -1.0));
            state = grammar::update(parent, *tr.rel, state);

            res.refs[t] = opts.frozen_refs ? (*opts.frozen_refs)[t] : r.a_c_hist[ppos - 1].value();
            lalpha.push_back(nn::kl_divergence(res.refs[t], pa.a));
        }

        if (tr.child.sym != vocab_.end()) {
            Triple pred;
            pred.child = Node{SymbolId{static_cast<int>(argmax(child_lp.value()))}, t};
            if (t >= 2) {
                pred.parent_pos = static_cast<int>(argmax(po.G.value())) + 1;
                pred.rel = static_cast<Relation>(argmax(rel_lp.value()));
            }
            res.teacher_forced.push_back(pred);
        }
        if (opts.keep_trace) {
            StepRecord rec;
            rec.step = t;
            rec.child = tr.child.sym;
            rec.parent_pos = ppos;
            rec.rel = tr.rel;
            rec.mask = mask;
            Tensor p = child_lp.value();
            for (auto& v : p.data()) v = std::exp(v);
            rec.p_child = std::move(p);
            if (t >= 2) {
                rec.G = po.G.value();
                rec.e_mem = po.e_mem.value();
                if (po.e_alpha.valid()) rec.e_alpha = po.e_alpha.value();
                if (po.gate.valid()) rec.gate = po.gate.item();
                Tensor pr = rel_lp.value();
                for (auto& v : pr.data()) v = std::exp(v);
                rec.p_rel = std::move(pr);
            }
            rec.att_parent = pa.a.value().reshaped({g.h, g.w});
            rec.att_child = ca.a.value().reshaped({g.h, g.w});
            res.trace.push_back(std::move(rec));
        }

        r.s_c_hist.push_back(s_c);
        r.a_c_hist.push_back(ca.a);
        r.mem_keys.push_back(nn::linear(s_c, b.pos.u_mem));
        if (cfg_.spatial_info) r.alpha_keys.push_back(nn::linear(r.pooled(ca.a), b.pos.u_alpha));
        y_prev = tr.child.sym;
    }

    auto total_of = [&](const std::vector<Var>& v) { return v.empty() ? tape.constant(Tensor::scalar(0.0)) : nn::sum_all(v); };
    res.child = total_of(lc);
    res.position = total_of(lpos);
    res.relation = total_of(lrel);
    res.attention = total_of(lalpha);
    res.total = nn::sum_all({nn::scale(res.child, cfg_.lambda[0]), nn::scale(res.position, cfg_.lambda[1]),
                             nn::scale(res.relation, cfg_.lambda[2]), nn::scale(res.attention, cfg_.lambda[3])});
    return res;
}

Losses ForwardResult::values() const {
    return Losses{child.item(), position.item(), relation.item(), attention.item(), total.item()};
}

DecodeResult Model::greedy_decode(const Bitmap& img, int max_steps) const {
    if (max_steps < 1) throw Error(ErrorCode::ConfigError, "max_steps must be >= 1");
    Tape tape(false);
    const Bound b = bind(tape);
    const Grid g = encode(tape, img);
    Runner r{cfg_, vocab_, tape, g.E, nn::linear(g.E, b.patt.u_feat), nn::linear(g.E, b.catt.u_feat), g.h, g.w, {}, {}, {}, {}, {}, {}, {}};
    r.s_p = nn::tanh(nn::add(nn::linear(nn::mean_rows(g.E), b.init_w), b.init_b));

    DecodeResult res;
    res.trace.grid_h = g.h;
    res.trace.grid_w = g.w;
    grammar::DynamicMaskState state(cfg_.key, vocab_.size());
    SymbolId y_prev = vocab_.start();
    bool finished = false;

    for (int t = 1; t <= max_steps; ++t) {
        Var e_prev = nn::row(b.emb_child, y_prev.index);
        Var sp_hat = nn::gru_cell(e_prev, r.s_p, b.pgru1);
        const AttentionOut pa = coverage_attention(sp_hat, g.E, r.proj_p, r.cov_p, g.h, g.w, b.patt);
        r.cov_p = r.cov_p.valid() ? nn::add(r.cov_p, pa.a) : pa.a;
        r.s_p = nn::gru_cell(pa.c, sp_hat, b.pgru2);

        StepRecord rec;
        rec.step = t;
        int ppos = 0;
        SymbolId y_par = vocab_.start();
        if (t >= 2) {
            const PositionOut po = predict_parent_position(r.s_p, cfg_.spatial_info ? r.pooled(pa.a) : Var{}, r.mem_keys,
                                                           r.alpha_keys, e_prev, r.s_c_hist.back(), b.pos,
                                                           cfg_.spatial_info);
            rec.G = po.G.value();
            rec.e_mem = po.e_mem.value();
            if (po.e_alpha.valid()) rec.e_alpha = po.e_alpha.value();
            if (po.gate.valid()) rec.gate = po.gate.item();
            // Best-scoring candidate that can still take a child.
            double best = -1;
            for (int i = 0; i < t - 1; ++i) {
                const Node cand = res.triples[i].child;
                if (rec.G[i] > best && relation_mask(cand, state).any()) {
                    best = rec.G[i];
                    ppos = i + 1;
                }
            }
            if (ppos == 0) {
                res.stalled = true;
                break;
            }
            y_par = res.triples[ppos - 1].child.sym;
            rec.mask = relation_mask(res.triples[ppos - 1].child, state);
        }

        Var e_par = nn::row(b.emb_parent, y_par.index);
        Var sc_hat = nn::gru_cell(e_par, r.s_p, b.cgru1);
        const AttentionOut ca = coverage_attention(sc_hat, g.E, r.proj_c, r.cov_c, g.h, g.w, b.catt);
        r.cov_c = r.cov_c.valid() ? nn::add(r.cov_c, ca.a) : ca.a;
        Var s_c = nn::gru_cell(ca.c, sc_hat, b.cgru2);

        Var readout = nn::add(nn::add(nn::linear(e_par, b.w_e), nn::linear(s_c, b.w_h)), nn::linear(ca.c, b.w_c));
        rec.p_child = nn::softmax(nn::add(nn::linear(readout, b.w_out), b.b_out).value());
        int best_sym = -1;
        for (int s = 0; s < vocab_.size(); ++s) {
            if (SymbolId{s} == vocab_.start()) continue;
            if (best_sym < 0 || rec.p_child[s] > rec.p_child[best_sym]) best_sym = s;
        }
        const SymbolId child{best_sym};
        rec.child = child;
        rec.parent_pos = ppos;
        rec.att_parent = pa.a.value().reshaped({g.h, g.w});
        rec.att_child = ca.a.value().reshaped({g.h, g.w});
        if (child == vocab_.end()) {
            res.trace.steps.push_back(std::move(rec));
            finished = true;
            break;
        }

        Triple tr{Node{child, t}, ppos, std::nullopt};
        if (t >= 2) {
            Var logits = nn::linear(nn::add(nn::linear(pa.c, b.w_cp), nn::linear(ca.c, b.w_cc)), b.w_rel);
            rec.p_rel = nn::masked_softmax(logits.value(), rec.mask, cfg_.mask_mode);
            int best_rel = -1;
            for (int k = 0; k < kNumRelations; ++k) {
                // Under hard masking only legal relations are eligible; the
                // multiplicative mode keeps the plain argmax.
                if (cfg_.mask_mode == nn::MaskMode::NegInf && !rec.mask.test(static_cast<Relation>(k))) continue;
                if (best_rel < 0 || rec.p_rel[k] > rec.p_rel[best_rel]) best_rel = k;
            }
            tr.rel = static_cast<Relation>(best_rel);
            state = grammar::update(res.triples[ppos - 1].child, *tr.rel, state);
        }
        rec.rel = tr.rel;
        res.triples.push_back(tr);
        res.trace.steps.push_back(std::move(rec));

        r.s_c_hist.push_back(s_c);
        r.a_c_hist.push_back(ca.a);
        r.mem_keys.push_back(nn::linear(s_c, b.pos.u_mem));
        if (cfg_.spatial_info) r.alpha_keys.push_back(nn::linear(r.pooled(ca.a), b.pos.u_alpha));
        y_prev = child;
    }
    res.max_steps_exceeded = !finished && !res.stalled;
    return res;
}

// --- training ------------------------------------------------------------------

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model), cfg_(cfg), opt_(cfg.rho, cfg.eps, cfg.lr), rng_(cfg.seed) {
    if (cfg_.batch < 1) throw Error(ErrorCode::ConfigError, "batch must be >= 1");
    if (cfg_.epochs < 0) throw Error(ErrorCode::ConfigError, "epochs must be >= 0");
    if (!(cfg_.lr > 0) || !(cfg_.lr_decay > 0)) throw Error(ErrorCode::ConfigError, "lr and lr_decay must be > 0");
}

Losses Trainer::train_step(const std::vector<const TrainSample*>& batch) {
    if (batch.empty()) throw Error(ErrorCode::EmptyList, "empty training batch");
    auto& ps = model_.params();
    ps.zero_grad();
    const double inv = 1.0 / static_cast<double>(batch.size());
    const auto& lam = model_.config().lambda;
    Losses mean;
    for (const TrainSample* s : batch) {
        Tape tape;
        const ForwardResult fr = model_.forward(tape, *s->img, s->target);
        const Losses v = fr.values();
        const double recombined = lam[0] * v.child + lam[1] * v.position + lam[2] * v.relation + lam[3] * v.attention;
        max_decomp_err_ = std::max(max_decomp_err_, std::abs(v.total - recombined));
        tape.backward(nn::scale(fr.total, inv));
        mean.child += v.child * inv;
        mean.position += v.position * inv;
        mean.relation += v.relation * inv;
        mean.attention += v.attention * inv;
        mean.total += v.total * inv;
    }
    for (auto& [name, p] : ps) {
        if (!p.grad.all_finite()) throw Error(ErrorCode::NonFinite, "non-finite gradient for " + name);
    }
    opt_.step(ps);
    ++steps_;
    return mean;
}

Losses Trainer::train_epoch(const std::vector<TrainSample>& data) {
    if (data.empty()) throw Error(ErrorCode::EmptyList, "empty training set");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    if (cfg_.shuffle) std::shuffle(order.begin(), order.end(), rng_);
    Losses sum;
    int batches = 0;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg_.batch)) {
        std::vector<const TrainSample*> batch;
        for (std::size_t j = i; j < std::min(order.size(), i + cfg_.batch); ++j) batch.push_back(&data[order[j]]);
        const Losses l = train_step(batch);
        sum.child += l.child;
        sum.position += l.position;
        sum.relation += l.relation;
        sum.attention += l.attention;
        sum.total += l.total;
        ++batches;
    }
    ++epoch_;
    opt_.set_lr(opt_.lr() * cfg_.lr_decay);
    for (double* v : {&sum.child, &sum.position, &sum.relation, &sum.attention, &sum.total}) *v /= batches;
    return sum;
}

std::vector<TrainSample> make_train_set(const std::vector<const Bitmap*>& imgs, const std::vector<TripleSeq>& seqs,
                                        const Vocabulary& vocab) {
    if (imgs.size() != seqs.size()) throw Error(ErrorCode::LengthMismatch, "images and targets differ in count");
    std::vector<TrainSample> out;
    out.reserve(imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) out.push_back(TrainSample{imgs[i], training_target(seqs[i], vocab)});
    return out;
}

// --- checkpoints ---------------------------------------------------------------

namespace {

std::string vocab_line(const Vocabulary& v) {
    std::string text = v.to_text();
    std::string out;
    for (char ch : text) out += ch == '\n' ? ';' : ch;
    return out;
}

std::map<std::string, std::string> meta_map(const std::string& meta) {
    std::map<std::string, std::string> m;
    std::istringstream in(meta);
    std::string ln;
    while (std::getline(in, ln)) {
        const auto eq = ln.find('=');
        if (eq == std::string::npos) continue;
        m[ln.substr(0, eq)] = ln.substr(eq + 1);
    }
    return m;
}

} // namespace

nn::Checkpoint model_checkpoint(const Model& m) {
    nn::Checkpoint ck;
    ck.meta = model_config_text(m.config()) + "vocab=" + vocab_line(m.vocab()) + "\n";
    for (const auto& [name, p] : m.params()) ck.records.emplace_back("p/" + name, p.value);
    return ck;
}

Model model_from_checkpoint(const nn::Checkpoint& ck) {
    const auto meta = meta_map(ck.meta);
    ModelConfig cfg;
    for (const auto& [k, v] : meta) apply_model_setting(cfg, k, v);
    validate_config(cfg);
    Vocabulary vocab = Vocabulary::builtin();
    if (auto it = meta.find("vocab"); it != meta.end()) {
        std::string text;
        for (char ch : it->second) text += ch == ';' ? '\n' : ch;
        vocab = Vocabulary::parse(text);
    }
    Model m(cfg, vocab);
    std::size_t loaded = 0;
    for (const auto& [name, t] : ck.records) {
        if (name.rfind("p/", 0) != 0) continue;
        const std::string pname = name.substr(2);
        if (!m.params().contains(pname)) throw Error(ErrorCode::BadFormat, "checkpoint has unknown parameter " + pname);
        auto& p = m.params().get(pname);
        if (p.value.shape() != t.shape()) {
            throw Error(ErrorCode::ShapeMismatch, "checkpoint parameter " + pname + " has shape " + nn::shape_str(t.shape()) +
                                                      ", model expects " + nn::shape_str(p.value.shape()));
        }
        p.value = t;
        ++loaded;
    }
    if (loaded != m.params().size()) throw Error(ErrorCode::BadFormat, "checkpoint is missing parameters");
    return m;
}

nn::Checkpoint Trainer::checkpoint() const {
    nn::Checkpoint ck = model_checkpoint(model_);
    std::ostringstream rng;
    rng << rng_;
    ck.meta += "train.epochs=" + std::to_string(cfg_.epochs) + "\ntrain.batch=" + std::to_string(cfg_.batch) +
               "\ntrain.lr=" + fmt_double(opt_.lr()) + "\ntrain.lr_decay=" + fmt_double(cfg_.lr_decay) +
               "\ntrain.rho=" + fmt_double(cfg_.rho) + "\ntrain.eps=" + fmt_double(cfg_.eps) +
               "\ntrain.shuffle=" + (cfg_.shuffle ? "on" : "off") + "\ntrain.seed=" + std::to_string(cfg_.seed) +
               "\nepoch=" + std::to_string(epoch_) + "\nsteps=" + std::to_string(steps_) + "\nrng=" + rng.str() + "\n";
    for (auto& [name, t] : opt_.export_state()) ck.records.emplace_back("opt/" + name, t);
    return ck;
}

TrainConfig train_config_from_checkpoint(const nn::Checkpoint& ck) {
    TrainConfig c;
    for (const auto& [k, v] : meta_map(ck.meta)) {
        if (k.rfind("train.", 0) == 0) apply_train_setting(c, std::string_view(k).substr(6), v);
    }
    return c;
}

int checkpoint_epoch(const nn::Checkpoint& ck) {
    const auto meta = meta_map(ck.meta);
    const auto it = meta.find("epoch");
    return it == meta.end() ? 0 : to_int("epoch", it->second);
}

void Trainer::restore(const nn::Checkpoint& ck) {
    Model loaded = model_from_checkpoint(ck);
    for (auto& [name, p] : model_.params()) {
        const auto& src = loaded.params().get(name);
        if (src.value.shape() != p.value.shape()) throw Error(ErrorCode::ShapeMismatch, "checkpoint does not fit the model");
        p.value = src.value;
    }
    std::vector<std::pair<std::string, Tensor>> state;
    for (const auto& [name, t] : ck.records) {
        if (name.rfind("opt/", 0) == 0) state.emplace_back(name.substr(4), t);
    }
    opt_.import_state(state);
    const auto meta = meta_map(ck.meta);
    if (auto it = meta.find("train.lr"); it != meta.end()) opt_.set_lr(std::stod(it->second));
    if (auto it = meta.find("epoch"); it != meta.end()) epoch_ = std::stoi(it->second);
    if (auto it = meta.find("steps"); it != meta.end()) steps_ = std::stol(it->second);
    if (auto it = meta.find("rng"); it != meta.end()) {
        std::istringstream in(it->second);
        in >> rng_;
    }
}

// --- verification --------------------------------------------------------------

std::vector<GradcheckEntry> gradcheck(Model& m, const Bitmap& img, const TripleSeq& target, double h, double floor) {
    auto& ps = m.params();
    ps.zero_grad();
    std::vector<Tensor> refs;
    {
        Tape tape;
        const ForwardResult fr = m.forward(tape, img, target);
        refs = fr.refs;
        tape.backward(fr.total);
    }
    ForwardOptions frozen;
    frozen.frozen_refs = &refs;
    auto loss = [&] {
        Tape tape(false);
        return m.forward(tape, img, target, frozen).total.item();
    };
    std::vector<GradcheckEntry> out;
    for (auto& [name, p] : ps) {
        GradcheckEntry e;
        e.name = name;
        e.count = p.value.size();
        double diff = 0, na = 0, nn_ = 0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = loss();
            p.value[i] = keep - h;
            const double down = loss();
            p.value[i] = keep;
            const double numeric = (up - down) / (2 * h);
            diff = std::max(diff, std::abs(numeric - p.grad[i]));
            na = std::max(na, std::abs(p.grad[i]));
            nn_ = std::max(nn_, std::abs(numeric));
        }
        e.max_abs_grad = na;
        e.max_rel_error = diff / std::max({na, nn_, floor});
        out.push_back(std::move(e));
    }
    return out;
}

// --- inspection ----------------------------------------------------------------

namespace {

std::string join(const Tensor& t) {
    std::string s;
    char buf[32];
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::snprintf(buf, sizeof buf, i ? " %.4f" : "%.4f", t[i]);
        s += buf;
    }
    return s;
}

} // namespace

std::string format_trace(const DecodeTrace& trace, const Vocabulary& vocab) {
    std::ostringstream o;
    o << "grid " << trace.grid_h << "x" << trace.grid_w << "\n";
    for (const auto& r : trace.steps) {
        o << "step " << r.step << " child " << vocab.glyph(r.child) << " parent " << r.parent_pos << " relation "
          << (r.rel ? relation_name(*r.rel) : std::string_view("-")) << " mask " << r.mask.str() << " gate "
          << fmt_double(r.gate) << "\n";
        if (!r.G.empty()) o << "  G " << join(r.G) << "\n";
        if (!r.e_mem.empty()) o << "  e_mem " << join(r.e_mem) << "\n";
        if (!r.e_alpha.empty()) o << "  e_alpha " << join(r.e_alpha) << "\n";
        if (!r.p_rel.empty()) o << "  p_rel " << join(r.p_rel) << "\n";
        if (!r.p_child.empty()) {
            const auto best = argmax(r.p_child);
            char buf[64];
            std::snprintf(buf, sizeof buf, "  p_child max %.4f at %s\n", r.p_child[best],
                          vocab.glyph(SymbolId{static_cast<int>(best)}).c_str());
            o << buf;
        }
    }
    return o.str();
}

std::vector<std::string> write_heatmaps(const DecodeTrace& trace, const std::string& prefix) {
    std::vector<std::string> paths;
    auto dump = [&](const Tensor& a, const std::string& path) {
        if (a.empty()) return;
        Bitmap img(a.dim(1), a.dim(0));
        double hi = 0;
        for (double v : a.data()) hi = std::max(hi, v);
        for (std::size_t i = 0; i < a.size(); ++i) {
            img.pixels[i] = static_cast<std::uint8_t>(hi > 0 ? std::lround(255 * a[i] / hi) : 0);
        }
        write_pgm(path, img);
        paths.push_back(path);
    };
    for (const auto& r : trace.steps) {
        const std::string base = prefix + "_" + std::to_string(r.step);
        dump(r.att_parent, base + "_parent.pgm");
        dump(r.att_child, base + "_child.pgm");
    }
    return paths;
}

} // namespace treedec::model
