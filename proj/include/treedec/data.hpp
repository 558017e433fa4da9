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

#include "treedec/image.hpp"
#include "treedec/symtree.hpp"
#include "treedec/vocab.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace treedec::data {

/// Knobs for the random expression generator. Depth counts nesting through
/// non-Right relations: a flat row has depth 1, `x^{2}` has depth 2.
struct GenGrammar {
    int max_depth = 3;
    int max_nodes = 12;
    double p_continue = 0.75; // probability of extending the top-level row by one more item
    double p_continue_nested = 0.3;
    double p_script = 0.25;  // Sup/Sub on a letter or number
    double p_both_scripts = 0.3;
    double p_limits = 0.6; // big operator scripts stacked (Above/Below) rather than Sup/Sub
    // Relative weights for the class of each freshly placed symbol.
    double w_letter = 4.0;
    double w_number = 3.0;
    double w_bin = 2.0;
    double w_frac = 0.8;
    double w_sqrt = 0.6;
    double w_bigop = 0.5;
    double w_lim = 0.3;
    /// If non-empty, only these glyphs are used.
    std::vector<std::string> symbols;
};

struct RenderOptions {
    int height = 32;
    int stride = 4;       // canvas width is padded to a multiple of this
    double base_cell = 2; // pixels per glyph cell at the top level
    double jitter = 0.8;  // max per-glyph offset, pixels
    double scale_noise = 0.08;
};

struct Sample {
    std::string id;
    Bitmap img;
    ExprTree tree;
    std::string latex;
    TripleSeq triples;
};

int nesting_depth(const ExprTree& t);

ExprTree random_tree(std::mt19937_64& rng, const GenGrammar& g, const Vocabulary& vocab = Vocabulary::builtin());

/// Draws the tree with procedural 5x7 glyphs. Height is fixed; width grows
/// with the expression.
Bitmap render(const ExprTree& t, std::mt19937_64& rng, const RenderOptions& opts = {},
              const Vocabulary& vocab = Vocabulary::builtin());

/// Builds the three label forms and the image for one tree.
Sample make_sample(std::string id, const ExprTree& t, std::mt19937_64& rng, const RenderOptions& opts = {},
                   const Vocabulary& vocab = Vocabulary::builtin());

/// Deterministic in `seed`. Throws Error{ConfigError} when n < 1.
std::vector<Sample> generate(std::uint64_t seed, const GenGrammar& g, int n, const RenderOptions& opts = {},
                             const Vocabulary& vocab = Vocabulary::builtin());

/// Corpus directory: labels.txt (`id TAB latex`), `<id>.triples`, `<id>.pgm`.
void write_corpus(const std::string& dir, const std::vector<Sample>& samples,
                  const Vocabulary& vocab = Vocabulary::builtin());
std::vector<Sample> read_corpus(const std::string& dir, const Vocabulary& vocab = Vocabulary::builtin());

// --- evaluation --------------------------------------------------------------

enum class WerAlignment {
    Levenshtein, // edit distance between the predicted and reference streams
    PerStep,     // position-by-position mismatches plus the length difference
};

struct EvalReport {
    int count = 0;
    int tree_correct = 0;
    int latex_correct = 0;
    long pos_errors = 0;
    long pos_tokens = 0;
    long rel_errors = 0;
    long rel_tokens = 0;
    double exprate_tree = 0;
    double exprate_latex = 0;
    double wer_pos = 0;
    double wer_rel = 0;
};

/// Token distance between two integer streams under the chosen alignment.
long stream_distance(const std::vector<int>& pred, const std::vector<int>& ref, WerAlignment align);

/// Parent-position and relation token streams of a triple sequence. The
/// root's relation is the token -1.
std::vector<int> position_stream(const TripleSeq& seq);
std::vector<int> relation_stream(const TripleSeq& seq);

/// Throws Error{LengthMismatch} when the lists differ in length.
EvalReport evaluate(const std::vector<TripleSeq>& preds, const std::vector<Sample>& refs,
                    WerAlignment align = WerAlignment::Levenshtein, const Vocabulary& vocab = Vocabulary::builtin());

/// One Table-style row: `ExpRate_tree ExpRate_latex WER_pos WER_rel` in percent.
std::string format_report(const EvalReport& r);

} // namespace treedec::data
