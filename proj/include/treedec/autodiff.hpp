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

#include "treedec/params.hpp"
#include "treedec/relation.hpp"
#include "treedec/tensor.hpp"

#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace treedec::nn {

class Tape;

/// Handle to a value recorded on a Tape. Valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    [[nodiscard]] const Tensor& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] double item() const { return value().item(); }
    [[nodiscard]] bool valid() const noexcept { return tape != nullptr; }
};

/// Reverse-mode tape. One tape records one forward computation; backward()
/// walks it once in reverse and deposits parameter gradients into the
/// owning ParamStore. Every recorded value is checked for NaN/Inf.
///
/// A tape built with `record = false` keeps values only; it is meant for
/// inference against a frozen ParamStore and may run concurrently with
/// other such tapes.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool recording() const noexcept { return record_; }

    Var constant(Tensor value);
    /// Differentiable leaf not tied to a ParamStore; read its gradient with grad().
    Var leaf(Tensor value);
    /// Leaf reading `p.value` in place; backward() adds into `p.grad`.
    Var param(Param& p);
    /// Read-only parameter access; only valid on a non-recording tape.
    Var param(const Param& p);

    /// Records an op result. `fn` must accumulate into the inputs' gradients.
    Var push(Tensor value, BackwardFn fn, std::string_view op);

    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
    void backward(Var loss);

    [[nodiscard]] const Tensor& value(int id) const;
    /// Gradient of a node after backward(); zeros if the node was not reached.
    [[nodiscard]] Tensor grad(Var v) const;

    /// Mutable gradient buffer of a node, allocated on first use.
    Tensor& grad_buffer(int id);
    [[nodiscard]] bool has_grad(int id) const;

    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        const Tensor* ref = nullptr; // parameter value read in place
        Param* param = nullptr;
        Tensor grad;
        BackwardFn backward;
    };

    bool record_;
    std::vector<Node> nodes_;
    std::unordered_map<const Param*, int> param_ids_;
};

// --- elementwise and shape ops ---------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double k);
/// a * s where s holds a single element.
Var mul_scalar(Var a, Var s);
/// X[r x c] + b[c] broadcast over rows (b may also match X exactly).
Var add_rowwise(Var x, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var row(Var m, int r);
Var stack_rows(const std::vector<Var>& rows);
Var sum(Var a);
Var sum_all(const std::vector<Var>& scalars);
Var pick(Var a, int index);
Var mean_rows(Var x);

// --- linear algebra --------------------------------------------------------

/// x[in] -> W x [out];  X[r x in] -> X W^T [r x out].  W is [out x in].
Var linear(Var x, Var w);
/// sum_i a[i] * H[i, :] for a[L], H[L x D].
Var weighted_rows(Var a, Var h);

// --- probability -----------------------------------------------------------

Var softmax(Var a);
Var log_softmax(Var a);

enum class MaskMode {
    Multiply, // logits multiplied by the mask before softmax
    NegInf,   // masked logits replaced by -1e9
};

std::string_view mask_mode_name(MaskMode m);
MaskMode parse_mask_mode(std::string_view s);

/// Masked logits prior to the (log-)softmax. Throws Error{AllMasked}.
Var apply_mask(Var logits, MaskVector mask, MaskMode mode);

/// KL(p || q) with p a constant distribution; 0 log 0 := 0.
Var kl_divergence(const Tensor& p, Var q);

/// -sum_i [t_i log sigmoid(e_i) + (1 - t_i) log(1 - sigmoid(e_i))], evaluated stably.
Var bce_with_logits(Var logits, const Tensor& target);

// --- layers ----------------------------------------------------------------

/// x[C x H x W], w[O x C x k x k], b[O], zero padding k/2 ("same" at stride 1).
Var conv2d(Var x, Var w, Var b, int stride);

/// a[H x W] -> [out_h x out_w]; bin i spans [floor(i H / out_h), ceil((i+1) H / out_h)).
Var adaptive_avg_pool(Var a, int out_h, int out_w);

struct GruWeights {
    Var wz, wr, wh; // [n x in]
    Var uz, ur, uh; // [n x n]
    Var bz, br, bh; // [n]
};

/// z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
/// c = tanh(Wh x + Uh (r * h) + bh), h' = h + z * (c - h).
Var gru_cell(Var x, Var h, const GruWeights& w);

// --- plain tensor versions -------------------------------------------------

Tensor adaptive_avg_pool(const Tensor& a, int out_h, int out_w);
Tensor masked_softmax(const Tensor& logits, MaskVector mask, MaskMode mode);
Tensor softmax(const Tensor& logits);
double kl_divergence(const Tensor& p, const Tensor& q);

} // namespace treedec::nn
