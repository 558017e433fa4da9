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

#include "treedec/grammar.hpp"
#include "treedec/image.hpp"
#include "treedec/model.hpp"
#include "treedec/vocab.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace treedec::verify {

/// Outcome of one property suite. `detail` holds one line per failure (or a
/// table, for the gradient check).
struct SuiteResult {
    std::string name;
    long passed = 0;
    long total = 0;
    std::string detail;
    double worst = 0; // largest measured error, where the suite has one
    std::string worst_at;
    [[nodiscard]] bool ok() const noexcept { return total > 0 && passed == total; }
};

/// Every vocabulary row against the class table, ORed over the
/// glyph's classes, plus the named single-glyph examples.
SuiteResult mask_table(const Vocabulary& vocab = Vocabulary::builtin());

/// Exhaustive: one glyph per distinct mask, two instances of it, every
/// history of up to `max_history` (node, relation) events, both combine
/// rules and both keyings; incremental step_mask against a replay oracle.
SuiteResult mask_oracle(const Vocabulary& vocab = Vocabulary::builtin(), int max_history = 3);

/// latex -> tree -> triples -> tree -> latex on `n` generated trees.
SuiteResult roundtrip(int n, std::uint64_t seed, const Vocabulary& vocab = Vocabulary::builtin());

/// Finite-difference check of the full loss on a rendered three-symbol
/// expression with a small model. One entry per parameter tensor.
SuiteResult gradcheck(std::uint64_t seed, double tolerance = 1e-4);

/// Greedy-decodes every image and validates the output against the
/// model's grammar settings. Counts decodes with zero violations.
SuiteResult grammaticality(const model::Model& m, const std::vector<const Bitmap*>& images, int max_steps);

std::string format_result(const SuiteResult& r);

} // namespace treedec::verify
