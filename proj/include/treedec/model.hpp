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

#include "treedec/autodiff.hpp"
#include "treedec/grammar.hpp"
#include "treedec/image.hpp"
#include "treedec/symtree.hpp"
#include "treedec/vocab.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace treedec::model {

struct ModelConfig {
    int embed = 128;  // symbol embeddings (child and parent tables)
    int att = 128;    // attention / memory MLP width
    int hidden = 256; // GRU state n
    int feature = 64; // encoder output D
    int enc_c1 = 16;
    int enc_c2 = 32;
    int cov_kernel = 11;
    int cov_channels = 32;
    int pool_h = 4;
    int pool_w = 32;

    bool spatial_info = true;
    bool static_mask = true;
    bool dynamic_mask = true;
    nn::MaskMode mask_mode = nn::MaskMode::NegInf;
    grammar::MaskCombine combine = grammar::MaskCombine::AndNot;
    grammar::DynamicKey key = grammar::DynamicKey::Instance;

    std::array<double, 4> lambda{1.0, 1.0, 1.0, 0.1}; // child, position, relation, attention
    std::uint64_t seed = 1;
};

/// Throws Error{ConfigError} on non-positive dims, an even kernel or negative weights.
void validate_config(const ModelConfig& c);

/// Flat `key=value` lines; parse_model_config rejects unknown keys.
std::string model_config_text(const ModelConfig& c);
ModelConfig parse_model_config(std::string_view text);
/// Applies one `key=value` setting; returns false if the key is not a model key.
bool apply_model_setting(ModelConfig& c, std::string_view key, std::string_view value);

/// The linearized tree followed by the end triple: `</s>` attached Right to
/// the last node of the root's horizontal chain.
TripleSeq training_target(const TripleSeq& seq, const Vocabulary& vocab = Vocabulary::builtin());

// --- building blocks (exposed for testing) -------------------------------------

struct AttentionParams {
    nn::Var w_query; // [A x n]
    nn::Var u_feat;  // [A x D]
    nn::Var u_cov;   // [A x Q]
    nn::Var conv_w;  // [Q x 1 x k x k]
    nn::Var conv_b;  // [Q]
    nn::Var bias;    // [A]
    nn::Var v;       // [1 x A]
};

struct AttentionOut {
    nn::Var a; // [L], softmax over the grid
    nn::Var c; // [D]
};

/// Coverage attention. `feat_proj` is u_feat applied to every row of `E`
/// (passed in so it is computed once per image). `coverage` is the running
/// sum of past maps, or an invalid Var when there is no history.
AttentionOut coverage_attention(nn::Var query, nn::Var E, nn::Var feat_proj, nn::Var coverage, int grid_h, int grid_w,
                                const AttentionParams& p);

struct PositionParams {
    nn::Var w_mem, u_mem, v_mem;       // [A x n], [A x n], [1 x A]
    nn::Var w_alpha, u_alpha, v_alpha; // [A x P], [A x P], [1 x A]; P = pool_h * pool_w
    nn::Var w_yg, u_sg, b_g;           // [1 x E], [1 x n], [1]
};

struct PositionOut {
    nn::Var e_mem;   // [t-1]
    nn::Var e_alpha; // [t-1]; invalid when spatial information is off
    nn::Var gate;    // [1]; invalid when spatial information is off
    nn::Var e_pos;   // [t-1]
    nn::Var G;       // [t-1], sigmoid of e_pos
};

/// Scores the previous nodes as parent candidates. `mem_keys[i]` is
/// u_mem * s_c_i and `alpha_keys[i]` is u_alpha * pool(a_c_i).
/// Throws Error{StepTooEarly} when there is no candidate.
PositionOut predict_parent_position(nn::Var s_p, nn::Var pooled_parent_att, const std::vector<nn::Var>& mem_keys,
                                    const std::vector<nn::Var>& alpha_keys, nn::Var prev_child_embed,
                                    nn::Var prev_child_state, const PositionParams& p, bool spatial_info);

// --- model ---------------------------------------------------------------------

/// Per-step record kept for inspection.
struct StepRecord {
    int step = 0;
    SymbolId child;
    int parent_pos = 0;
    std::optional<Relation> rel;
    MaskVector mask;        // legal relations for the chosen parent
    double gate = 0;        // spatial gate (0 when absent)
    nn::Tensor p_child;     // [S]
    nn::Tensor G;           // [t-1]
    nn::Tensor e_mem;       // [t-1]
    nn::Tensor e_alpha;     // [t-1]
    nn::Tensor p_rel;       // [6]
    nn::Tensor att_parent;  // [H' x W']
    nn::Tensor att_child;   // [H' x W']
};

struct DecodeTrace {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<StepRecord> steps;
};

struct DecodeResult {
    TripleSeq triples;
    DecodeTrace trace;
    bool max_steps_exceeded = false; // no end symbol within the step budget
    bool stalled = false;            // every parent candidate had an empty mask
};

struct Losses {
    double child = 0;
    double position = 0;
    double relation = 0;
    double attention = 0;
    double total = 0;
};

struct ForwardOptions {
    /// Reference maps for the attention regulariser, indexed by step (1-based,
    /// entry 0 unused). When null the maps come from this forward pass.
    const std::vector<nn::Tensor>* frozen_refs = nullptr;
    bool keep_trace = false;
};

struct ForwardResult {
    nn::Var child, position, relation, attention, total;
    std::vector<nn::Tensor> refs; // reference maps used, same indexing as frozen_refs
    std::vector<StepRecord> trace;
    /// Argmax predictions at each teacher-forced step (end step excluded).
    TripleSeq teacher_forced;

    [[nodiscard]] Losses values() const;
};

class Model {
  public:
    explicit Model(ModelConfig cfg, const Vocabulary& vocab = Vocabulary::builtin());

    [[nodiscard]] const ModelConfig& config() const noexcept { return cfg_; }
    /// Ablation and masking switches may change after construction; dims may not.
    void set_switches(bool spatial_info, bool static_mask, bool dynamic_mask);
    [[nodiscard]] const Vocabulary& vocab() const noexcept { return vocab_; }
    [[nodiscard]] const grammar::StaticMaskTable& mask_table() const noexcept { return table_; }
    nn::ParamStore& params() noexcept { return params_; }
    [[nodiscard]] const nn::ParamStore& params() const noexcept { return params_; }

    struct Grid {
        nn::Var E; // [L x D]
        int h = 0;
        int w = 0;
    };
    /// Throws Error{BadDims} unless both image sides are positive multiples of 4.
    Grid encode(nn::Tape& tape, const Bitmap& img) const;

    /// Teacher-forced pass over `target` (normally training_target(...)).
    ForwardResult forward(nn::Tape& tape, const Bitmap& img, const TripleSeq& target, const ForwardOptions& opts = {}) const;

    /// Safe to call concurrently on one model.
    DecodeResult greedy_decode(const Bitmap& img, int max_steps = 64) const;

    /// Mask handed to the relation head for `parent` under the configured switches.
    [[nodiscard]] MaskVector relation_mask(const Node& parent, const grammar::DynamicMaskState& state) const;

  private:
    struct Bound;
    Bound bind(nn::Tape& tape) const;

    ModelConfig cfg_;
    Vocabulary vocab_;
    grammar::StaticMaskTable table_;
    nn::ParamStore params_;
};

// --- training ------------------------------------------------------------------

struct TrainConfig {
    int epochs = 200;
    int batch = 1;
    double lr = 1.0;       // Adadelta step multiplier
    double lr_decay = 1.0; // multiplier applied to lr after every epoch
    double rho = 0.95;
    double eps = 1e-8;
    bool shuffle = true;
    std::uint64_t seed = 1;
};

struct TrainSample {
    const Bitmap* img;
    TripleSeq target; // includes the end triple
};

/// Keys: epochs, batch, lr, lr_decay, rho, eps, shuffle, seed. Returns
/// false for any other key; throws Error{ConfigError} on a bad value.
bool apply_train_setting(TrainConfig& c, std::string_view key, std::string_view value);

class Trainer {
  public:
    Trainer(Model& model, TrainConfig cfg);

    /// One optimizer update on the batch; losses are averaged over it. Throws
    /// Error{NonFinite} if any value is not finite.
    Losses train_step(const std::vector<const TrainSample*>& batch);

    /// One pass over `data` in (optionally shuffled) mini-batches; returns mean losses.
    Losses train_epoch(const std::vector<TrainSample>& data);

    [[nodiscard]] int epoch() const noexcept { return epoch_; }
    [[nodiscard]] long steps() const noexcept { return steps_; }
    /// Largest |total - lambda . components| seen on any step.
    [[nodiscard]] double max_decomposition_error() const noexcept { return max_decomp_err_; }

    nn::Adadelta& optimizer() noexcept { return opt_; }
    [[nodiscard]] const TrainConfig& config() const noexcept { return cfg_; }

    /// Checkpoint with parameters, optimizer state, config and progress.
    [[nodiscard]] nn::Checkpoint checkpoint() const;
    /// Restores parameters, optimizer state and progress into this trainer.
    void restore(const nn::Checkpoint& ck);

  private:
    Model& model_;
    TrainConfig cfg_;
    nn::Adadelta opt_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
    long steps_ = 0;
    double max_decomp_err_ = 0;
};

std::vector<TrainSample> make_train_set(const std::vector<const Bitmap*>& imgs, const std::vector<TripleSeq>& seqs,
                                        const Vocabulary& vocab = Vocabulary::builtin());

/// Model config and vocabulary stored in a checkpoint.
Model model_from_checkpoint(const nn::Checkpoint& ck);
nn::Checkpoint model_checkpoint(const Model& m);
/// Training settings recorded by Trainer::checkpoint(); `lr` is the decayed value at save time.
TrainConfig train_config_from_checkpoint(const nn::Checkpoint& ck);
/// Completed epochs recorded in a trainer checkpoint (0 for a bare model checkpoint).
int checkpoint_epoch(const nn::Checkpoint& ck);

struct GradcheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0; // max|a - n| / max(max|a|, max|n|, floor) over the tensor
    double max_abs_grad = 0;
};

/// Compares tape gradients of the total loss against central differences for
/// every parameter. Reference maps of the attention regulariser are frozen
/// at the unperturbed values so both sides differentiate the same function.
///
/// `floor` keeps tensors whose gradients sit near the finite-difference
/// round-off level (about eps * |L| / h) from being judged purely relatively:
/// with h = 1e-5 and a loss of order 10 that level is a few 1e-10.
std::vector<GradcheckEntry> gradcheck(Model& m, const Bitmap& img, const TripleSeq& target, double h = 1e-5,
                                      double floor = 1e-5);

/// Line-oriented dump of a decode trace.
std::string format_trace(const DecodeTrace& trace, const Vocabulary& vocab = Vocabulary::builtin());
/// Writes `<prefix>_<step>_parent.pgm` and `_child.pgm` heatmaps; returns the paths.
std::vector<std::string> write_heatmaps(const DecodeTrace& trace, const std::string& prefix);

} // namespace treedec::model
