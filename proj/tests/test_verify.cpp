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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "treedec/verify.hpp"

using namespace treedec;

TEST_CASE("shipped table passes the fidelity suite") {
    const auto r = verify::mask_table();
    CHECK(r.ok());
    CHECK(r.total == Vocabulary::builtin().size() + 7);
}

TEST_CASE("a mislabelled glyph fails the fidelity suite") {
    const auto v = Vocabulary::parse("<s> Bin\n</s> End\n+ Letter\nx Letter\n");
    const auto r = verify::mask_table(v);
    CHECK_FALSE(r.ok());
    CHECK(r.detail.find("+:") != std::string::npos);
}

TEST_CASE("mask oracle suite") {
    const auto r = verify::mask_oracle(Vocabulary::builtin(), 2);
    CHECK(r.ok());
    CHECK(r.total > 1000);
}

TEST_CASE("roundtrip suite") {
    const auto r = verify::roundtrip(200, 5);
    CHECK(r.ok());
    CHECK(r.total == 200);
}

TEST_CASE("gradcheck suite") {
    const auto r = verify::gradcheck(1);
    CHECK(r.ok());
    CHECK(r.detail.find("rel.error") != std::string::npos);
    CHECK(verify::format_result(r).find(" ok") != std::string::npos);
}
