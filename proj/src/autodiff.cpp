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

#include "treedec/autodiff.hpp"

#include "treedec/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace treedec::nn {

namespace {

constexpr double kMaskedLogit = -1e9;

void require_same(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

void require_rank(const Tensor& a, int rank, std::string_view op) {
    if (a.rank() != rank) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                                  shape_str(a.shape()));
    }
}

Tape& tape_of(Var a) {
    if (!a.tape) throw Error(ErrorCode::ShapeMismatch, "operation on an unbound variable");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape) throw Error(ErrorCode::ShapeMismatch, "variables recorded on different tapes");
    return tape_of(a);
}

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

} // namespace

// --- tape ---------------------------------------------------------------------

const Tensor& Var::value() const { return tape_of(*this).value(id); }

Var Tape::constant(Tensor value) { return push(std::move(value), nullptr, "constant"); }

Var Tape::leaf(Tensor value) {
    // A no-op backward keeps the node "reachable" so grad() reports it.
    return push(std::move(value), [](Tape&, int) {}, "leaf");
}

Var Tape::param(Param& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
    Node n;
    n.ref = &p.value;
    n.param = &p;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_.emplace(&p, id);
    return Var{this, id};
}

Var Tape::param(const Param& p) {
    if (record_) throw Error(ErrorCode::ShapeMismatch, "read-only parameter on a recording tape");
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
    Node n;
    n.ref = &p.value;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_.emplace(&p, id);
    return Var{this, id};
}

Var Tape::push(Tensor value, BackwardFn fn, std::string_view op) {
    if (!value.all_finite()) {
        throw Error(ErrorCode::NonFinite, "non-finite value produced by " + std::string(op));
    }
    Node n;
    n.value = std::move(value);
    if (record_) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(int id) const {
    const Node& n = nodes_.at(id);
    return n.ref ? *n.ref : n.value;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor(value(id).shape());
    return n.grad;
}

bool Tape::has_grad(int id) const { return !nodes_.at(id).grad.empty(); }

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor(value(v.id).shape());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (!record_) throw Error(ErrorCode::ShapeMismatch, "backward() on a tape built without recording");
    if (loss.tape != this) throw Error(ErrorCode::ShapeMismatch, "loss belongs to another tape");
    if (value(loss.id).size() != 1) {
        throw Error(ErrorCode::ShapeMismatch, "backward() needs a scalar loss, got " + shape_str(value(loss.id).shape()));
    }
    grad_buffer(loss.id).fill(1.0);
    // Inputs always precede outputs on the tape, so one reverse sweep suffices.
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, id);
    }
    for (Node& n : nodes_) {
        if (n.param && !n.grad.empty()) n.param->grad += n.grad;
    }
}

// --- elementwise and shape ops -----------------------------------------------

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same(a.value(), b.value(), "add");
    Tensor out = a.value();
    out += b.value();
    return t.push(std::move(out), [a = a.id, b = b.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        t.grad_buffer(a) += g;
        t.grad_buffer(b) += g;
    }, "add");
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t.push(std::move(out), [a = a.id, b = b.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        t.grad_buffer(a) += g;
        Tensor& gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }, "sub");
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    require_same(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const auto bv = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return t.push(std::move(out), [a = a.id, b = b.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        Tensor& gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }, "mul");
}

Var scale(Var a, double k) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v *= k;
    return t.push(std::move(out), [a = a.id, k](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
    }, "scale");
}

Var mul_scalar(Var a, Var s) {
    Tape& t = tape_of(a, s);
    const double k = s.value().item();
    Tensor out = a.value();
    for (double& v : out.data()) v *= k;
    return t.push(std::move(out), [a = a.id, s = s.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& av = t.value(a);
        const double k = t.value(s).item();
        Tensor& ga = t.grad_buffer(a);
        double gs = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += k * g[i];
            gs += g[i] * av[i];
        }
        t.grad_buffer(s)[0] += gs;
    }, "mul_scalar");
}

Var add_rowwise(Var x, Var b) {
    if (x.value().shape() == b.value().shape()) return add(x, b);
    Tape& t = tape_of(x, b);
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    require_rank(xv, 2, "add_rowwise");
    require_rank(bv, 1, "add_rowwise");
    const int rows = xv.dim(0);
    const int cols = xv.dim(1);
    if (bv.dim(0) != cols) throw Error(ErrorCode::ShapeMismatch, "add_rowwise: bias " + shape_str(bv.shape()) + " vs " + shape_str(xv.shape()));
    Tensor out = xv;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) out.at(r, c) += bv[c];
    }
    return t.push(std::move(out), [x = x.id, b = b.id, rows, cols](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        t.grad_buffer(x) += g;
        Tensor& gb = t.grad_buffer(b);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) gb[c] += g.at(r, c);
        }
    }, "add_rowwise");
}

Var tanh(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = std::tanh(v);
    return t.push(std::move(out), [a = a.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    }, "tanh");
}

Var sigmoid(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = stable_sigmoid(v);
    return t.push(std::move(out), [a = a.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    }, "sigmoid");
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = std::max(v, 0.0);
    return t.push(std::move(out), [a = a.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& x = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] > 0) ga[i] += g[i];
        }
    }, "relu");
}

Var reshape(Var a, Shape shape) {
    Tape& t = tape_of(a);
    return t.push(a.value().reshaped(std::move(shape)), [a = a.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }, "reshape");
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    require_rank(av, 2, "transpose");
    const int r = av.dim(0);
    const int c = av.dim(1);
    Tensor out(Shape{c, r});
    for (int i = 0; i < r; ++i) {
        for (int j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
    }
    return t.push(std::move(out), [a = a.id, r, c](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& ga = t.grad_buffer(a);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
        }
    }, "transpose");
}

Var row(Var m, int r) {
    Tape& t = tape_of(m);
    const Tensor& mv = m.value();
    require_rank(mv, 2, "row");
    if (r < 0 || r >= mv.dim(0)) throw Error(ErrorCode::ShapeMismatch, "row " + std::to_string(r) + " outside " + shape_str(mv.shape()));
    const int cols = mv.dim(1);
    std::vector<double> v(mv.data().begin() + static_cast<std::ptrdiff_t>(r) * cols,
                          mv.data().begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
    return t.push(Tensor::vector(std::move(v)), [m = m.id, r, cols](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gm = t.grad_buffer(m);
        for (int c = 0; c < cols; ++c) gm.at(r, c) += g[c];
    }, "row");
}

Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw Error(ErrorCode::ShapeMismatch, "stack_rows of nothing");
    Tape& t = tape_of(rows.front());
    const Tensor& first = rows.front().value();
    require_rank(first, 1, "stack_rows");
    const int cols = first.dim(0);
    const int n = static_cast<int>(rows.size());
    Tensor out(Shape{n, cols});
    std::vector<int> ids;
    for (int r = 0; r < n; ++r) {
        tape_of(rows.front(), rows[r]);
        require_same(first, rows[r].value(), "stack_rows");
        const Tensor& v = rows[r].value();
        for (int c = 0; c < cols; ++c) out.at(r, c) = v[c];
        ids.push_back(rows[r].id);
    }
    return t.push(std::move(out), [ids = std::move(ids), cols](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        for (std::size_t r = 0; r < ids.size(); ++r) {
            Tensor& gr = t.grad_buffer(ids[r]);
            for (int c = 0; c < cols; ++c) gr[c] += g.at(static_cast<int>(r), c);
        }
    }, "stack_rows");
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    return t.push(Tensor::scalar(a.value().sum()), [a = a.id](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        Tensor& ga = t.grad_buffer(a);
        for (double& v : ga.data()) v += g;
    }, "sum");
}

Var sum_all(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw Error(ErrorCode::EmptyList, "sum_all of nothing");
    Tape& t = tape_of(scalars.front());
    double total = 0.0;
    std::vector<int> ids;
    for (Var s : scalars) {
        tape_of(scalars.front(), s);
        total += s.value().item();
        ids.push_back(s.id);
    }
    return t.push(Tensor::scalar(total), [ids = std::move(ids)](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        for (int id : ids) t.grad_buffer(id)[0] += g;
    }, "sum_all");
}

Var pick(Var a, int index) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    if (index < 0 || static_cast<std::size_t>(index) >= av.size()) {
        throw Error(ErrorCode::ShapeMismatch, "pick index " + std::to_string(index) + " outside " + shape_str(av.shape()));
    }
    return t.push(Tensor::scalar(av[index]), [a = a.id, index](Tape& t, int self) {
        t.grad_buffer(a)[index] += t.grad_buffer(self)[0];
    }, "pick");
}

Var mean_rows(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.value();
    require_rank(xv, 2, "mean_rows");
    const int rows = xv.dim(0);
    const int cols = xv.dim(1);
    if (rows == 0) throw Error(ErrorCode::ZeroDim, "mean_rows of zero rows");
    Tensor out(Shape{cols});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) out[c] += xv.at(r, c);
    }
    for (double& v : out.data()) v /= rows;
    return t.push(std::move(out), [x = x.id, rows, cols](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& gx = t.grad_buffer(x);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) gx.at(r, c) += g[c] / rows;
        }
    }, "mean_rows");
}

// --- linear algebra ------------------------------------------------------------

Var linear(Var x, Var w) {
    Tape& t = tape_of(x, w);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require_rank(wv, 2, "linear");
    const int out_dim = wv.dim(0);
    const int in_dim = wv.dim(1);
    const bool batched = xv.rank() == 2;
    if (!batched) require_rank(xv, 1, "linear");
    const int rows = batched ? xv.dim(0) : 1;
    if ((batched ? xv.dim(1) : xv.dim(0)) != in_dim) {
        throw Error(ErrorCode::ShapeMismatch, "linear: input " + shape_str(xv.shape()) + " vs weight " + shape_str(wv.shape()));
    }
    Tensor out(batched ? Shape{rows, out_dim} : Shape{out_dim});
    const double* W = wv.data().data();
    const double* X = xv.data().data();
    double* Y = out.data().data();
    for (int r = 0; r < rows; ++r) {
        const double* xr = X + static_cast<std::size_t>(r) * in_dim;
        for (int o = 0; o < out_dim; ++o) {
            const double* wr = W + static_cast<std::size_t>(o) * in_dim;
            double acc = 0.0;
            for (int i = 0; i < in_dim; ++i) acc += wr[i] * xr[i];
            Y[static_cast<std::size_t>(r) * out_dim + o] = acc;
        }
    }
    return t.push(std::move(out), [x = x.id, w = w.id, rows, in_dim, out_dim](Tape& t, int self) {
        const double* G = t.grad_buffer(self).data().data();
        const double* W = t.value(w).data().data();
        const double* X = t.value(x).data().data();
        double* GX = t.grad_buffer(x).data().data();
        double* GW = t.grad_buffer(w).data().data();
        for (int r = 0; r < rows; ++r) {
            const double* xr = X + static_cast<std::size_t>(r) * in_dim;
            double* gxr = GX + static_cast<std::size_t>(r) * in_dim;
            for (int o = 0; o < out_dim; ++o) {
                const double g = G[static_cast<std::size_t>(r) * out_dim + o];
                if (g == 0.0) continue;
                const double* wr = W + static_cast<std::size_t>(o) * in_dim;
                double* gwr = GW + static_cast<std::size_t>(o) * in_dim;
                for (int i = 0; i < in_dim; ++i) {
                    gxr[i] += g * wr[i];
                    gwr[i] += g * xr[i];
                }
            }
        }
    }, "linear");
}

Var weighted_rows(Var a, Var h) {
    Tape& t = tape_of(a, h);
    const Tensor& av = a.value();
    const Tensor& hv = h.value();
    require_rank(av, 1, "weighted_rows");
    require_rank(hv, 2, "weighted_rows");
    const int L = hv.dim(0);
    const int D = hv.dim(1);
    if (av.dim(0) != L) throw Error(ErrorCode::ShapeMismatch, "weighted_rows: " + shape_str(av.shape()) + " vs " + shape_str(hv.shape()));
    Tensor out(Shape{D});
    for (int l = 0; l < L; ++l) {
        for (int d = 0; d < D; ++d) out[d] += av[l] * hv.at(l, d);
    }
    return t.push(std::move(out), [a = a.id, h = h.id, L, D](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& av = t.value(a);
        const Tensor& hv = t.value(h);
        Tensor& ga = t.grad_buffer(a);
        Tensor& gh = t.grad_buffer(h);
        for (int l = 0; l < L; ++l) {
            double acc = 0.0;
            for (int d = 0; d < D; ++d) {
                acc += g[d] * hv.at(l, d);
                gh.at(l, d) += av[l] * g[d];
            }
            ga[l] += acc;
        }
    }, "weighted_rows");
}

// --- probability -----------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
    Tensor out = logits;
    if (out.size() == 0) throw Error(ErrorCode::ZeroDim, "softmax of an empty tensor");
    const double m = *std::max_element(out.data().begin(), out.data().end());
    double z = 0.0;
    for (double& v : out.data()) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : out.data()) v /= z;
    return out;
}

Var softmax(Var a) {
    Tape& t = tape_of(a);
    return t.push(softmax(a.value()), [a = a.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& y = t.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
    }, "softmax");
}

Var log_softmax(Var a) {
    Tape& t = tape_of(a);
    const Tensor& av = a.value();
    if (av.size() == 0) throw Error(ErrorCode::ZeroDim, "log_softmax of an empty tensor");
    const double m = *std::max_element(av.data().begin(), av.data().end());
    double z = 0.0;
    for (double v : av.data()) z += std::exp(v - m);
    const double lse = m + std::log(z);
    Tensor out = av;
    for (double& v : out.data()) v -= lse;
    return t.push(std::move(out), [a = a.id](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        const Tensor& y = t.value(self);
        double gsum = 0.0;
        for (double v : g.data()) gsum += v;
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] - std::exp(y[i]) * gsum;
    }, "log_softmax");
}

std::string_view mask_mode_name(MaskMode m) { return m == MaskMode::Multiply ? "multiply" : "neg_inf"; }

MaskMode parse_mask_mode(std::string_view s) {
    if (s == "multiply") return MaskMode::Multiply;
    if (s == "neg_inf") return MaskMode::NegInf;
    throw Error(ErrorCode::ConfigError, "mask mode must be multiply|neg_inf, got '" + std::string(s) + "'");
}

namespace {

Tensor masked_logits(const Tensor& logits, MaskVector mask, MaskMode mode) {
    if (logits.size() != static_cast<std::size_t>(kNumRelations)) {
        throw Error(ErrorCode::ShapeMismatch, "relation logits must have 6 entries, got " + shape_str(logits.shape()));
    }
    if (!mask.any()) throw Error(ErrorCode::AllMasked, "every relation is masked");
    Tensor out = logits;
    for (int r = 0; r < kNumRelations; ++r) {
        if (mask.test(static_cast<Relation>(r))) continue;
        out[r] = mode == MaskMode::Multiply ? 0.0 : kMaskedLogit;
    }
    return out;
}

} // namespace

Var apply_mask(Var logits, MaskVector mask, MaskMode mode) {
    Tape& t = tape_of(logits);
    return t.push(masked_logits(logits.value(), mask, mode), [a = logits.id, mask](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& ga = t.grad_buffer(a);
        for (int r = 0; r < kNumRelations; ++r) {
            if (mask.test(static_cast<Relation>(r))) ga[r] += g[r];
        }
    }, "apply_mask");
}

Tensor masked_softmax(const Tensor& logits, MaskVector mask, MaskMode mode) {
    return softmax(masked_logits(logits, mask, mode));
}

double kl_divergence(const Tensor& p, const Tensor& q) {
    require_same(p, q, "kl_divergence");
    double psum = 0.0;
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0) throw Error(ErrorCode::DomainError, "kl_divergence: negative probability in p");
        psum += p[i];
        if (p[i] == 0.0) continue;
        if (q[i] <= 0) throw Error(ErrorCode::DomainError, "kl_divergence: q vanishes where p does not");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    if (std::abs(psum - 1.0) > 1e-6) throw Error(ErrorCode::DomainError, "kl_divergence: p does not sum to 1");
    return kl;
}

Var kl_divergence(const Tensor& p, Var q) {
    Tape& t = tape_of(q);
    const double kl = kl_divergence(p, q.value());
    return t.push(Tensor::scalar(kl), [p, q = q.id](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        const Tensor& qv = t.value(q);
        Tensor& gq = t.grad_buffer(q);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] != 0.0) gq[i] -= g * p[i] / qv[i];
        }
    }, "kl_divergence");
}

Var bce_with_logits(Var logits, const Tensor& target) {
    Tape& t = tape_of(logits);
    const Tensor& e = logits.value();
    require_same(e, target, "bce_with_logits");
    double loss = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) loss += softplus(e[i]) - target[i] * e[i];
    return t.push(Tensor::scalar(loss), [a = logits.id, target](Tape& t, int self) {
        const double g = t.grad_buffer(self)[0];
        const Tensor& e = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < e.size(); ++i) ga[i] += g * (stable_sigmoid(e[i]) - target[i]);
    }, "bce_with_logits");
}

// --- layers --------------------------------------------------------------------------

Var conv2d(Var x, Var w, Var b, int stride) {
    Tape& t = tape_of(x, w);
    tape_of(x, b);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    require_rank(xv, 3, "conv2d input");
    require_rank(wv, 4, "conv2d weight");
    const int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    const int O = wv.dim(0), K = wv.dim(2);
    if (wv.dim(1) != C || wv.dim(3) != K || bv.size() != static_cast<std::size_t>(O) || stride < 1 || K % 2 == 0) {
        throw Error(ErrorCode::ShapeMismatch, "conv2d: input " + shape_str(xv.shape()) + ", weight " + shape_str(wv.shape()));
    }
    if (H == 0 || W == 0) throw Error(ErrorCode::ZeroDim, "conv2d on an empty map");
    const int pad = K / 2;
    const int Ho = (H + 2 * pad - K) / stride + 1;
    const int Wo = (W + 2 * pad - K) / stride + 1;
    Tensor out(Shape{O, Ho, Wo});
    const double* X = xv.data().data();
    const double* Wt = wv.data().data();
    double* Y = out.data().data();
    for (int o = 0; o < O; ++o) {
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = bv[o];
                for (int c = 0; c < C; ++c) {
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= H) continue;
                        const double* xrow = X + (static_cast<std::size_t>(c) * H + iy) * W;
                        const double* wrow = Wt + ((static_cast<std::size_t>(o) * C + c) * K + ky) * K;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= W) continue;
                            acc += wrow[kx] * xrow[ix];
                        }
                    }
                }
                Y[(static_cast<std::size_t>(o) * Ho + oy) * Wo + ox] = acc;
            }
        }
    }
    return t.push(std::move(out), [x = x.id, w = w.id, b = b.id, C, H, W, O, K, Ho, Wo, stride, pad](Tape& t, int self) {
        const double* G = t.grad_buffer(self).data().data();
        const double* X = t.value(x).data().data();
        const double* Wt = t.value(w).data().data();
        double* GX = t.grad_buffer(x).data().data();
        double* GW = t.grad_buffer(w).data().data();
        Tensor& gb = t.grad_buffer(b);
        for (int o = 0; o < O; ++o) {
            for (int oy = 0; oy < Ho; ++oy) {
                for (int ox = 0; ox < Wo; ++ox) {
                    const double g = G[(static_cast<std::size_t>(o) * Ho + oy) * Wo + ox];
                    if (g == 0.0) continue;
                    gb[o] += g;
                    for (int c = 0; c < C; ++c) {
                        for (int ky = 0; ky < K; ++ky) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            const std::size_t xoff = (static_cast<std::size_t>(c) * H + iy) * W;
                            const std::size_t woff = ((static_cast<std::size_t>(o) * C + c) * K + ky) * K;
                            for (int kx = 0; kx < K; ++kx) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= W) continue;
                                GW[woff + kx] += g * X[xoff + ix];
                                GX[xoff + ix] += g * Wt[woff + kx];
                            }
                        }
                    }
                }
            }
        }
    }, "conv2d");
}

namespace {

struct Bin {
    int begin;
    int end;
};

std::vector<Bin> pool_bins(int in, int out) {
    std::vector<Bin> bins(out);
    for (int i = 0; i < out; ++i) {
        bins[i].begin = static_cast<int>((static_cast<long long>(i) * in) / out);
        bins[i].end = static_cast<int>((static_cast<long long>(i + 1) * in + out - 1) / out);
    }
    return bins;
}

} // namespace

Tensor adaptive_avg_pool(const Tensor& a, int out_h, int out_w) {
    require_rank(a, 2, "adaptive_avg_pool");
    const int H = a.dim(0);
    const int W = a.dim(1);
    if (H < 1 || W < 1 || out_h < 1 || out_w < 1) throw Error(ErrorCode::ZeroDim, "adaptive_avg_pool with a zero dimension");
    const auto rows = pool_bins(H, out_h);
    const auto cols = pool_bins(W, out_w);
    Tensor out(Shape{out_h, out_w});
    for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
            double acc = 0.0;
            for (int y = rows[i].begin; y < rows[i].end; ++y) {
                for (int x = cols[j].begin; x < cols[j].end; ++x) acc += a.at(y, x);
            }
            out.at(i, j) = acc / ((rows[i].end - rows[i].begin) * (cols[j].end - cols[j].begin));
        }
    }
    return out;
}

Var adaptive_avg_pool(Var a, int out_h, int out_w) {
    Tape& t = tape_of(a);
    Tensor out = adaptive_avg_pool(a.value(), out_h, out_w);
    const int H = a.value().dim(0);
    const int W = a.value().dim(1);
    return t.push(std::move(out), [a = a.id, H, W, out_h, out_w](Tape& t, int self) {
        const Tensor& g = t.grad_buffer(self);
        Tensor& ga = t.grad_buffer(a);
        const auto rows = pool_bins(H, out_h);
        const auto cols = pool_bins(W, out_w);
        for (int i = 0; i < out_h; ++i) {
            for (int j = 0; j < out_w; ++j) {
                const double share = g.at(i, j) / ((rows[i].end - rows[i].begin) * (cols[j].end - cols[j].begin));
                for (int y = rows[i].begin; y < rows[i].end; ++y) {
                    for (int x = cols[j].begin; x < cols[j].end; ++x) ga.at(y, x) += share;
                }
            }
        }
    }, "adaptive_avg_pool");
}

Var gru_cell(Var x, Var h, const GruWeights& w) {
    Var z = sigmoid(add(add(linear(x, w.wz), linear(h, w.uz)), w.bz));
    Var r = sigmoid(add(add(linear(x, w.wr), linear(h, w.ur)), w.br));
    Var c = tanh(add(add(linear(x, w.wh), linear(mul(r, h), w.uh)), w.bh));
    return add(h, mul(z, sub(c, h)));
}

} // namespace treedec::nn
