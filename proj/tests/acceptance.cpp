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

// Acceptance suite: one PASS/FAIL line per criterion, tolerances and time
// budgets fixed below. Exit status is the number of failed criteria.

#include "treedec/data.hpp"
#include "treedec/model.hpp"
#include "treedec/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

using namespace treedec;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s  %-28s %s  [%.1f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs,
                budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[200];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// Small model used for every training criterion.
model::ModelConfig toy_config(std::uint64_t seed) {
    model::ModelConfig c;
    c.embed = 32;
    c.att = 32;
    c.hidden = 32;
    c.feature = 32;
    c.enc_c1 = 8;
    c.enc_c2 = 16;
    c.cov_kernel = 5;
    c.cov_channels = 4;
    c.seed = seed;
    return c;
}

model::TrainConfig toy_training(std::uint64_t seed) {
    model::TrainConfig t;
    t.lr = 10;
    t.lr_decay = 0.99;
    t.seed = seed;
    return t;
}

std::vector<model::TrainSample> train_set(const std::vector<data::Sample>& corpus) {
    std::vector<const Bitmap*> imgs;
    std::vector<TripleSeq> seqs;
    for (const auto& s : corpus) {
        imgs.push_back(&s.img);
        seqs.push_back(s.triples);
    }
    return model::make_train_set(imgs, seqs);
}

data::EvalReport evaluate(const model::Model& m, const std::vector<data::Sample>& corpus) {
    std::vector<TripleSeq> preds;
    for (const auto& s : corpus) preds.push_back(m.greedy_decode(s.img).triples);
    return data::evaluate(preds, corpus);
}

// Ambiguous-parent fixture: rows of x, 2 and + whose scripts are rows too.
// Trees such as x^{2x} and x^{2}x share their decode-order symbol and
// relation streams and differ only in which earlier node is the parent,
// so only the image can settle it.
ExprTree ambiguous_tree(std::mt19937_64& rng) {
    const auto& v = Vocabulary::builtin();
    const SymbolId glyphs[] = {v.at("x"), v.at("2"), v.at("+")};
    std::uniform_int_distribution<int> len(1, 3), pick(0, 2);
    std::bernoulli_distribution script(0.5);
    ExprTree t(v.at("x"));
    int prev = 0;
    const int items = len(rng) + 1;
    for (int i = 0; i < items; ++i) {
        const int cur = i == 0 ? 0 : t.add_child(prev, Relation::Right, glyphs[pick(rng)], v);
        if (t.vertex(cur).node.sym != v.at("+") && script(rng)) {
            int s = t.add_child(cur, Relation::Sup, glyphs[pick(rng)], v);
            for (int j = len(rng) - 1; j > 0; --j) s = t.add_child(s, Relation::Right, glyphs[pick(rng)], v);
        }
        prev = cur;
    }
    t.renumber();
    return t;
}

std::vector<data::Sample> ambiguous_corpus(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    std::vector<data::Sample> out;
    for (int i = 0; i < n; ++i) out.push_back(data::make_sample("a" + std::to_string(i), ambiguous_tree(rng), rng));
    return out;
}

// Largest |total - lambda . parts| over every training step of every run.
double decomposition_error = 0;
long decomposition_steps = 0;

} // namespace

int main() {
    constexpr double kClosedFormTol = 1e-9;
    constexpr double kGradTol = 1e-4;
    constexpr double kDecompTol = 1e-12;
    constexpr double kOverfitTarget = 0.95;

    run("mask-table fidelity", 1, [] {
        const auto r = verify::mask_table();
        return Outcome{r.ok(), std::to_string(r.passed) + "/" + std::to_string(r.total) + " rows exact"};
    });

    run("mask-engine oracle", 10, [] {
        const auto r = verify::mask_oracle(Vocabulary::builtin(), 3);
        return Outcome{r.ok(), std::to_string(r.passed) + "/" + std::to_string(r.total) + " states agree"};
    });

    run("round-trip", 30, [] {
        const auto r = verify::roundtrip(1000, 2024);
        return Outcome{r.ok() && r.total == 1000, std::to_string(r.passed) + "/" + std::to_string(r.total)};
    });

    run("gradient correctness", 300, [] {
        const auto r = verify::gradcheck(1, kGradTol);
        return Outcome{r.ok(), std::to_string(r.passed) + "/" + std::to_string(r.total) + " tensors, worst " +
                                   fmt("%.2e", r.worst) + " (" + r.worst_at + "), tol " + fmt("%.0e", kGradTol)};
    });

    run("closed-form losses", 10, [&] {
        // Zeroed readouts make every prediction uniform.
        const auto& v = Vocabulary::builtin();
        model::ModelConfig c = toy_config(3);
        c.mask_mode = nn::MaskMode::Multiply;
        model::Model m(c);
        m.params().get("child.w_out").value.fill(0);
        m.params().get("child.b_out").value.fill(0);
        m.params().get("rel.w_out").value.fill(0);
        double worst = 0;
        data::GenGrammar g;
        for (const auto& s : data::generate(77, g, 20)) {
            const auto target = model::training_target(s.triples);
            nn::Tape tape(false);
            const auto l = m.forward(tape, s.img, target).values();
            const double T = static_cast<double>(target.size());
            worst = std::max(worst, std::abs(l.child - T * std::log(static_cast<double>(v.size()))));
            worst = std::max(worst, std::abs(l.relation - (T - 1) * std::log(6.0)));
        }
        return Outcome{worst <= kClosedFormTol, "20 expressions, max |L - T log S|, |L_rel - T log 6| = " +
                                                    fmt("%.1e", worst) + ", tol " + fmt("%.0e", kClosedFormTol)};
    });

    // Trained once, reused by the grammaticality criterion.
    model::Model overfit_model(toy_config(5));
    bool overfit_ok = false;
    run("overfit sanity", 600, [&] {
        const auto corpus = data::generate(11, data::GenGrammar{}, 50);
        const auto set = train_set(corpus);
        model::Trainer tr(overfit_model, toy_training(5));
        double best = 0;
        int reached = 0;
        for (int e = 1; e <= 200 && !reached; ++e) {
            tr.train_epoch(set);
            if (e % 10 == 0) {
                best = evaluate(overfit_model, corpus).exprate_tree;
                if (best >= kOverfitTarget) reached = e;
            }
        }
        decomposition_error = std::max(decomposition_error, tr.max_decomposition_error());
        decomposition_steps += tr.steps();
        overfit_ok = reached > 0;
        return Outcome{overfit_ok, "50 expressions, ExpRate_tree " + fmt("%.0f%%", 100 * best) +
                                       (reached ? " at epoch " + std::to_string(reached) : std::string(" after 200 epochs")) +
                                       ", target " + fmt("%.0f%%", 100 * kOverfitTarget)};
    });

    run("grammaticality guarantee", 120, [&] {
        const auto fresh = data::generate(909, data::GenGrammar{}, 500);
        std::vector<const Bitmap*> imgs;
        for (const auto& s : fresh) imgs.push_back(&s.img);
        const auto r = verify::grammaticality(overfit_model, imgs, 64);
        return Outcome{r.ok() && r.total == 500, std::to_string(r.total - r.passed) + " violating decodes of " +
                                                    std::to_string(r.total) + (overfit_ok ? "" : " (model under-trained)")};
    });

    run("ablation direction", 1200, [&] {
        // Same seeds, data and epochs for both arms; held-out WER_pos pooled over seeds.
        const std::uint64_t seeds[] = {4, 5, 6};
        long err[2] = {0, 0}, tok[2] = {0, 0};
        std::string per_seed;
        for (std::uint64_t seed : seeds) {
            const auto train = ambiguous_corpus(seed * 100 + 1, 300);
            const auto test = ambiguous_corpus(seed * 100 + 2, 200);
            const auto set = train_set(train);
            double wer[2] = {0, 0};
            for (int arm = 0; arm < 2; ++arm) {
                model::ModelConfig c = toy_config(seed);
                c.spatial_info = arm == 0;
                model::Model m(c);
                model::Trainer tr(m, toy_training(seed));
                for (int e = 0; e < 60; ++e) tr.train_epoch(set);
                decomposition_error = std::max(decomposition_error, tr.max_decomposition_error());
                decomposition_steps += tr.steps();
                const auto r = evaluate(m, test);
                err[arm] += r.pos_errors;
                tok[arm] += r.pos_tokens;
                wer[arm] = r.wer_pos;
            }
            per_seed += fmt(" %.3f/%.3f", wer[0], wer[1]);
        }
        const double on = static_cast<double>(err[0]) / static_cast<double>(tok[0]);
        const double off = static_cast<double>(err[1]) / static_cast<double>(tok[1]);
        return Outcome{on < off, "held-out WER_pos spatial on " + fmt("%.4f", on) + " vs off " + fmt("%.4f", off) +
                                     " (per seed on/off:" + per_seed + ")"};
    });

    run("loss decomposition", 1, [&] {
        return Outcome{decomposition_steps > 0 && decomposition_error <= kDecompTol,
                       "max |total - lambda . parts| " + fmt("%.1e", decomposition_error) + " over " +
                           std::to_string(decomposition_steps) + " steps, tol " + fmt("%.0e", kDecompTol)};
    });

    std::printf("%d criterion(s) failed\n", failures);
    return failures;
}
