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

// treedec: command-line front end for conversion, validation, training,
// evaluation, decoding and the verification suites.
//
// Exit codes: 0 success, 1 violations or a failed suite, 2 bad input
// (parse failure, missing file, bad config), 3 non-finite loss in training.

#include "treedec/data.hpp"
#include "treedec/grammar.hpp"
#include "treedec/image.hpp"
#include "treedec/model.hpp"
#include "treedec/params.hpp"
#include "treedec/symtree.hpp"
#include "treedec/verify.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace treedec;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kBadInput = 2;
constexpr int kNonFinite = 3;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Prints the message and, when the error carries an offset, the offending
// line with a caret under the column.
void diagnose(const Error& e, const std::string& input) {
    std::cerr << "error: " << e.what() << "\n";
    if (e.position() == Error::npos || e.position() > input.size()) return;
    const auto begin = input.rfind('\n', e.position() == 0 ? 0 : e.position() - 1);
    const std::size_t line_start = begin == std::string::npos || e.position() == 0 ? 0 : begin + 1;
    const auto line_end = input.find('\n', line_start);
    const std::string line = input.substr(line_start, line_end == std::string::npos ? std::string::npos : line_end - line_start);
    std::cerr << "  " << line << "\n  " << std::string(e.position() - line_start, ' ') << "^\n";
}

const Vocabulary& load_vocab(const std::string& path) {
    static Vocabulary custom = Vocabulary::builtin();
    if (path.empty()) return Vocabulary::builtin();
    custom = Vocabulary::load(path);
    return custom;
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("TREEDEC_SEED");
    if (!s || !*s) return std::nullopt;
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, std::string("TREEDEC_SEED: expected an integer, got '") + s + "'");
    }
}

// --- run configuration -------------------------------------------------------

// Flat view of everything `train` needs. Defaults are the full model
// (spatial information and both masks on).
struct RunConfig {
    model::ModelConfig model;
    model::TrainConfig train;
    std::uint64_t seed = 1;
    std::string corpus;    // training corpus directory; empty means generate
    int samples = 50;      // generated expressions when no corpus is given
    int max_nodes = 12;
    int max_depth = 3;
    std::string out = "model.ckpt";
    std::string log = "loss.csv";
};

void apply_setting(RunConfig& rc, const std::string& key, const std::string& value) {
    if (key == "seed") {
        try {
            std::size_t used = 0;
            rc.seed = std::stoull(value, &used);
            if (used == value.size()) return;
        } catch (const std::exception&) {
        }
        throw Error(ErrorCode::ConfigError, "seed: expected an integer, got '" + value + "'");
    }
    if (model::apply_model_setting(rc.model, key, value)) return;
    if (model::apply_train_setting(rc.train, key, value)) return;
    auto to_int = [&](const std::string& v) {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ConfigError, key + ": expected an integer, got '" + v + "'");
        }
    };
    if (key == "corpus") rc.corpus = value;
    else if (key == "samples") rc.samples = to_int(value);
    else if (key == "max_nodes") rc.max_nodes = to_int(value);
    else if (key == "max_depth") rc.max_depth = to_int(value);
    else if (key == "out") rc.out = value;
    else if (key == "log") rc.log = value;
    else throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
}

void apply_line(RunConfig& rc, const std::string& raw, const std::string& where) {
    const std::string t = trim(raw);
    if (t.empty() || t[0] == '#') return;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + ": expected key=value, got '" + t + "'");
    apply_setting(rc, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
}

// `spatial=off,static=on,...`
void apply_ablation(RunConfig& rc, const std::string& spec) {
    std::stringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "ablation: expected name=on|off, got '" + item + "'");
        const std::string name = trim(item.substr(0, eq));
        const std::string v = trim(item.substr(eq + 1));
        const std::string key = name == "spatial" ? "spatial_info"
                                : name == "static" ? "static_mask"
                                : name == "dynamic" ? "dynamic_mask"
                                                    : "";
        if (key.empty()) throw Error(ErrorCode::ConfigError, "ablation: unknown switch '" + name + "'");
        model::apply_model_setting(rc.model, key, v);
    }
}

// --- shared helpers ----------------------------------------------------------

data::GenGrammar gen_grammar(int max_nodes, int max_depth) {
    data::GenGrammar g;
    g.max_nodes = max_nodes;
    g.max_depth = max_depth;
    return g;
}

std::vector<TripleSeq> decode_all(const model::Model& m, const std::vector<data::Sample>& corpus, int max_steps,
                                  int threads) {
    std::vector<TripleSeq> out(corpus.size());
    const int n = static_cast<int>(corpus.size());
    threads = std::max(1, std::min(threads, n));
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += threads) out[i] = m.greedy_decode(corpus[i].img, max_steps).triples;
        });
    }
    for (auto& t : pool) t.join();
    return out;
}

// --- subcommands -------------------------------------------------------------

struct ConvertArgs {
    std::string from = "latex";
    std::string to = "triples";
    std::string input;
    std::string output;
};

int cmd_convert(const ConvertArgs& a, const Vocabulary& vocab) {
    // An argument naming an existing file is read; otherwise it is the text itself.
    std::string text = a.input;
    if (std::filesystem::is_regular_file(a.input)) text = read_file(a.input);
    if (a.from == "latex") text = trim(text.substr(0, text.find('\n')));
    ExprTree tree;
    try {
        if (a.from == "latex") tree = parse_latex(text, vocab);
        else if (a.from == "triples") tree = delinearize(read_triples(text, vocab), DelinearizeMode::Strict, vocab).tree;
        else tree = read_tree_dump(text, vocab);
    } catch (const Error& e) {
        diagnose(e, text);
        return kBadInput;
    }
    std::string out;
    if (a.to == "latex") out = to_latex(tree, vocab) + "\n";
    else if (a.to == "triples") out = write_triples(linearize(tree), vocab);
    else out = write_tree_dump(tree, vocab);
    if (a.output.empty()) std::cout << out;
    else write_file(a.output, out);
    return kOk;
}

struct ValidateArgs {
    std::string file;
    std::string combine = "and_not";
    std::string key = "instance";
};

int cmd_validate(const ValidateArgs& a, const Vocabulary& vocab) {
    const std::string text = read_file(a.file);
    TripleSeq seq;
    try {
        seq = read_triples(text, vocab);
    } catch (const Error& e) {
        diagnose(e, text);
        return kBadInput;
    }
    if (seq.empty()) {
        std::cerr << "error: " << a.file << " holds no triples\n";
        return kBadInput;
    }
    const auto table = grammar::StaticMaskTable::from_vocabulary(vocab);
    const grammar::GrammarOptions opts{grammar::parse_mask_combine(a.combine), grammar::parse_dynamic_key(a.key)};
    const auto report = grammar::validate_triples(seq, table, opts);
    if (report.empty()) {
        std::cout << "ok: " << seq.size() << " triples, no violations\n";
        return kOk;
    }
    std::cout << grammar::format_report(report, vocab);
    std::cout << report.size() << " violation(s)\n";
    return kFail;
}

struct GenerateArgs {
    int n = 50;
    std::uint64_t seed = 1;
    int max_nodes = 12;
    int max_depth = 3;
    std::string out;
};

int cmd_generate(const GenerateArgs& a, const Vocabulary& vocab) {
    const auto corpus = data::generate(a.seed, gen_grammar(a.max_nodes, a.max_depth), a.n, {}, vocab);
    data::write_corpus(a.out, corpus, vocab);
    std::cout << "wrote " << corpus.size() << " samples to " << a.out << "\n";
    return kOk;
}

struct TrainArgs {
    std::string config;
    std::vector<std::string> sets;
    std::string ablation;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::string corpus;
    std::string out;
    std::string log;
    std::string resume;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, const Vocabulary& vocab) {
    RunConfig rc;
    if (!a.config.empty()) {
        std::istringstream in(read_file(a.config));
        std::string ln;
        while (std::getline(in, ln)) apply_line(rc, ln, a.config);
    }
    if (auto s = env_seed()) rc.seed = *s;
    for (const auto& s : a.sets) apply_line(rc, s, "--set");
    if (!a.ablation.empty()) apply_ablation(rc, a.ablation);
    if (a.seed) rc.seed = *a.seed;
    if (a.epochs) rc.train.epochs = *a.epochs;
    if (!a.corpus.empty()) rc.corpus = a.corpus;
    if (!a.out.empty()) rc.out = a.out;
    if (!a.log.empty()) rc.log = a.log;
    rc.model.seed = rc.seed;
    rc.train.seed = rc.seed;

    const auto corpus = rc.corpus.empty()
                            ? data::generate(rc.seed, gen_grammar(rc.max_nodes, rc.max_depth), rc.samples, {}, vocab)
                            : data::read_corpus(rc.corpus, vocab);

    std::optional<model::Model> m;
    model::TrainConfig tc = rc.train;
    std::optional<nn::Checkpoint> resume;
    if (!a.resume.empty()) {
        // Model and optimiser settings come from the checkpoint; only the
        // epoch target may change.
        resume = nn::read_checkpoint(a.resume);
        m.emplace(model::model_from_checkpoint(*resume));
        tc = model::train_config_from_checkpoint(*resume);
        tc.epochs = rc.train.epochs;
    } else {
        m.emplace(rc.model, vocab);
    }
    model::Trainer trainer(*m, tc);
    if (resume) trainer.restore(*resume);

    std::vector<const Bitmap*> imgs;
    std::vector<TripleSeq> seqs;
    for (const auto& s : corpus) {
        imgs.push_back(&s.img);
        seqs.push_back(s.triples);
    }
    const auto set = model::make_train_set(imgs, seqs, m->vocab());

    const bool fresh_log = !resume || !std::filesystem::exists(rc.log);
    std::ofstream log(rc.log, fresh_log ? std::ios::trunc : std::ios::app);
    if (!log) throw Error(ErrorCode::IoError, "cannot write " + rc.log);
    if (fresh_log) log << "epoch,lr,total,child,position,relation,attention,decomposition_error\n";
    log.precision(17);

    if (!a.quiet) {
        std::cout << "training on " << set.size() << " samples, epochs " << trainer.epoch() << ".." << tc.epochs
                  << ", spatial=" << (m->config().spatial_info ? "on" : "off")
                  << " static=" << (m->config().static_mask ? "on" : "off")
                  << " dynamic=" << (m->config().dynamic_mask ? "on" : "off") << "\n";
    }
    while (trainer.epoch() < tc.epochs) {
        const double lr = trainer.optimizer().lr();
        model::Losses l;
        try {
            l = trainer.train_epoch(set);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFinite) throw;
            std::cerr << "error: non-finite value during epoch " << trainer.epoch() + 1 << " after "
                      << trainer.steps() << " optimizer steps\n  " << e.what() << "\n  lr " << lr << "\n";
            for (const auto& [name, p] : m->params()) {
                if (!p.value.all_finite() || !p.grad.all_finite()) std::cerr << "  non-finite in " << name << "\n";
            }
            return kNonFinite;
        }
        log << trainer.epoch() << "," << lr << "," << l.total << "," << l.child << "," << l.position << ","
            << l.relation << "," << l.attention << "," << trainer.max_decomposition_error() << "\n";
        log.flush();
        if (!a.quiet) {
            std::printf("epoch %4d  loss %.6f  (c %.4f pos %.4f rel %.4f att %.4f)\n", trainer.epoch(), l.total,
                        l.child, l.position, l.relation, l.attention);
            std::fflush(stdout);
        }
    }
    nn::write_checkpoint(rc.out, trainer.checkpoint());
    if (!a.quiet) std::cout << "saved " << rc.out << "\n";
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string predictions;
    std::string corpus;
    int max_steps = 64;
    int threads = 0;
    bool per_step = false;
};

int cmd_eval(const EvalArgs& a, const Vocabulary& vocab) {
    if (a.checkpoint.empty() == a.predictions.empty()) {
        std::cerr << "error: give exactly one of --checkpoint or --predictions\n";
        return kBadInput;
    }
    std::optional<model::Model> m;
    if (!a.checkpoint.empty()) m.emplace(model::model_from_checkpoint(nn::read_checkpoint(a.checkpoint)));
    const Vocabulary& v = m ? m->vocab() : vocab;
    const auto corpus = data::read_corpus(a.corpus, v);

    std::vector<TripleSeq> preds;
    if (m) {
        const int threads = a.threads > 0 ? a.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
        preds = decode_all(*m, corpus, a.max_steps, threads);
    } else {
        for (const auto& s : corpus) {
            const auto path = (std::filesystem::path(a.predictions) / (s.id + ".triples")).string();
            preds.push_back(read_triples(read_file(path), v));
        }
    }
    const auto table = grammar::StaticMaskTable::from_vocabulary(v);
    const grammar::GrammarOptions opts = m ? grammar::GrammarOptions{m->config().combine, m->config().key}
                                           : grammar::GrammarOptions{};
    long violations = 0;
    int bad = 0;
    for (const auto& p : preds) {
        const auto r = grammar::validate_triples(p, table, opts);
        violations += static_cast<long>(r.size());
        bad += !r.empty();
    }
    const auto report =
        data::evaluate(preds, corpus, a.per_step ? data::WerAlignment::PerStep : data::WerAlignment::Levenshtein, v);
    std::cout << "samples " << report.count << "\n" << data::format_report(report);
    std::cout << "violations " << violations << " in " << bad << " of " << preds.size() << " outputs\n";
    return kOk;
}

struct DecodeArgs {
    std::string checkpoint;
    std::string image;
    std::string heatmaps;
    int max_steps = 64;
    bool trace = false;
};

int cmd_decode(const DecodeArgs& a) {
    const auto m = model::model_from_checkpoint(nn::read_checkpoint(a.checkpoint));
    const Bitmap img = read_pgm(a.image);
    const auto out = m.greedy_decode(img, a.max_steps);
    const auto tree = delinearize(out.triples, DelinearizeMode::Lenient, m.vocab()).tree;
    std::cout << "latex: " << (tree.empty() ? "" : to_latex(tree, m.vocab())) << "\n";
    if (out.stalled) std::cout << "note: no parent candidate had a legal relation left\n";
    if (out.max_steps_exceeded) std::cout << "note: stopped after " << a.max_steps << " steps without an end symbol\n";
    std::cout << write_triples(out.triples, m.vocab());
    if (a.trace) std::cout << model::format_trace(out.trace, m.vocab());
    if (!a.heatmaps.empty()) {
        const auto files = model::write_heatmaps(out.trace, a.heatmaps);
        std::cout << "wrote " << files.size() << " heatmaps with prefix " << a.heatmaps << "\n";
    }
    return kOk;
}

struct VerifyArgs {
    std::vector<std::string> suites{"all"};
    int n = 1000;
    std::optional<std::uint64_t> seed;
};

int cmd_verify(const VerifyArgs& a, const Vocabulary& vocab) {
    std::uint64_t seed = 1;
    if (auto s = env_seed()) seed = *s;
    if (a.seed) seed = *a.seed;
    std::vector<std::string> suites;
    for (const auto& s : a.suites) {
        if (s == "all") suites.insert(suites.end(), {"mask-table", "mask-oracle", "roundtrip", "gradcheck"});
        else suites.push_back(s);
    }
    bool ok = true;
    for (const auto& name : suites) {
        const auto t0 = std::chrono::steady_clock::now();
        verify::SuiteResult r;
        if (name == "mask-table") r = verify::mask_table(vocab);
        else if (name == "mask-oracle") r = verify::mask_oracle(vocab);
        else if (name == "roundtrip") r = verify::roundtrip(a.n, seed, vocab);
        else r = verify::gradcheck(seed);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (name == "gradcheck" || !r.ok()) std::cout << r.detail;
        std::printf("%s  (%.2fs)\n", verify::format_result(r).c_str(), secs);
        ok = ok && r.ok();
    }
    return ok ? kOk : kFail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tree decoder for handwritten mathematical expressions: conversion, grammar checks, training and "
                 "evaluation"};
    app.require_subcommand(1);
    std::string vocab_path;
    app.add_option("--vocab", vocab_path, "Vocabulary file (glyph and class names per line); default is built in")
        ->check(CLI::ExistingFile);

    const std::vector<std::string> formats{"latex", "triples", "tree"};

    ConvertArgs ca;
    auto* convert = app.add_subcommand("convert", "Convert between latex, triples and tree-dump forms");
    convert->add_option("--from", ca.from, "Input form")->check(CLI::IsMember(formats));
    convert->add_option("--to", ca.to, "Output form")->check(CLI::IsMember(formats));
    convert->add_option("input", ca.input, "Input text, or a file holding it")->required();
    convert->add_option("-o,--output", ca.output, "Output file (default stdout)");

    ValidateArgs va;
    auto* validate = app.add_subcommand("validate", "Check a triples file against the syntax rules");
    validate->add_option("file", va.file, "Triples file")->required()->check(CLI::ExistingFile);
    validate->add_option("--combine", va.combine, "Mask combination")->check(CLI::IsMember({"and_not", "xor"}));
    validate->add_option("--key", va.key, "Used-relation keying")->check(CLI::IsMember({"instance", "symbol"}));

    GenerateArgs ga;
    auto* generate = app.add_subcommand("generate", "Write a synthetic corpus");
    generate->add_option("-n", ga.n, "Number of samples")->check(CLI::PositiveNumber);
    generate->add_option("--seed", ga.seed, "Random seed");
    generate->add_option("--max-nodes", ga.max_nodes, "Largest tree")->check(CLI::PositiveNumber);
    generate->add_option("--max-depth", ga.max_depth, "Deepest nesting")->check(CLI::PositiveNumber);
    generate->add_option("-o,--out", ga.out, "Corpus directory")->required();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a model (flags > config file > defaults)");
    train->add_option("-c,--config", ta.config, "Flat key=value config file")->check(CLI::ExistingFile);
    train->add_option("--set", ta.sets, "Override one key=value setting (repeatable)");
    train->add_option("--ablation", ta.ablation, "Switches, e.g. spatial=off,static=off,dynamic=off");
    train->add_option("--seed", ta.seed, "Seed for data, weights and shuffling");
    train->add_option("--epochs", ta.epochs, "Total epochs (also the target when resuming)");
    train->add_option("--corpus", ta.corpus, "Training corpus directory (default: generate)");
    train->add_option("-o,--out", ta.out, "Checkpoint to write");
    train->add_option("--log", ta.log, "Per-epoch loss CSV");
    train->add_option("--resume", ta.resume, "Continue from a training checkpoint")->check(CLI::ExistingFile);
    train->add_flag("-q,--quiet", ta.quiet, "Only errors");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Decode a corpus and report expression rates and WER");
    eval->add_option("--checkpoint", ea.checkpoint, "Model checkpoint");
    eval->add_option("--predictions", ea.predictions, "Directory of <id>.triples files to score instead of decoding");
    eval->add_option("--corpus", ea.corpus, "Reference corpus directory")->required();
    eval->add_option("--max-steps", ea.max_steps, "Decode step limit")->check(CLI::PositiveNumber);
    eval->add_option("--threads", ea.threads, "Worker threads (default: hardware)");
    eval->add_flag("--per-step", ea.per_step, "Position-wise WER instead of edit distance");

    DecodeArgs da;
    auto* decode = app.add_subcommand("decode", "Decode one PGM image");
    decode->add_option("--checkpoint", da.checkpoint, "Model checkpoint")->required();
    decode->add_option("image", da.image, "PGM image")->required();
    decode->add_option("--max-steps", da.max_steps, "Decode step limit")->check(CLI::PositiveNumber);
    decode->add_option("--heatmaps", da.heatmaps, "Write attention maps as <prefix>_<step>_{parent,child}.pgm");
    decode->add_flag("--trace", da.trace, "Print per-step probabilities");

    VerifyArgs vfa;
    auto* verify_cmd = app.add_subcommand("verify", "Run property suites");
    verify_cmd->add_option("--suite", vfa.suites, "mask-table, mask-oracle, roundtrip, gradcheck or all")
        ->check(CLI::IsMember({"all", "mask-table", "mask-oracle", "roundtrip", "gradcheck"}));
    verify_cmd->add_option("-n", vfa.n, "Round-trip sample count")->check(CLI::PositiveNumber);
    verify_cmd->add_option("--seed", vfa.seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kBadInput;
    }

    try {
        const Vocabulary& vocab = load_vocab(vocab_path);
        if (*convert) return cmd_convert(ca, vocab);
        if (*validate) return cmd_validate(va, vocab);
        if (*generate) return cmd_generate(ga, vocab);
        if (*train) return cmd_train(ta, vocab);
        if (*eval) return cmd_eval(ea, vocab);
        if (*decode) return cmd_decode(da);
        if (*verify_cmd) return cmd_verify(vfa, vocab);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::NonFinite ? kNonFinite : kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    }
    return kBadInput;
}
