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

#include "treedec/tensor.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace treedec::nn {

struct Param {
    Tensor value;
    Tensor grad; // same shape as value
};

/// Named trainable tensors with matching gradient accumulators. Iteration
/// order is by name, so anything derived from it is deterministic. Entry
/// addresses are stable for the lifetime of the store.
class ParamStore {
  public:
    /// Throws Error{ConfigError} on a duplicate name.
    Param& add(const std::string& name, Tensor init);

    /// Adds a parameter initialised uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Param& add_uniform(const std::string& name, Shape shape, int fan_in, std::mt19937_64& rng);

    [[nodiscard]] bool contains(const std::string& name) const { return params_.contains(name); }
    Param& get(const std::string& name);
    [[nodiscard]] const Param& get(const std::string& name) const;

    void zero_grad();
    [[nodiscard]] std::size_t scalar_count() const;
    [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    [[nodiscard]] auto begin() const { return params_.begin(); }
    [[nodiscard]] auto end() const { return params_.end(); }

  private:
    std::map<std::string, Param> params_;
};

/// Adadelta with an outer learning-rate multiplier:
///   E[g^2]  <- rho E[g^2] + (1-rho) g^2
///   dx      <- -sqrt(E[dx^2]+eps) / sqrt(E[g^2]+eps) * g
///   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
///   x       <- x + lr * dx
class Adadelta {
  public:
    Adadelta(double rho = 0.95, double eps = 1e-8, double lr = 1.0) : rho_(rho), eps_(eps), lr_(lr) {}

    void step(ParamStore& params);
    void set_lr(double lr) noexcept { lr_ = lr; }
    [[nodiscard]] double lr() const noexcept { return lr_; }

    /// Accumulators as named tensors ("<param>/eg2", "<param>/edx2") for checkpointing.
    [[nodiscard]] std::vector<std::pair<std::string, Tensor>> export_state() const;
    void import_state(const std::vector<std::pair<std::string, Tensor>>& records);

  private:
    struct Slot {
        Tensor eg2;
        Tensor edx2;
    };
    double rho_;
    double eps_;
    double lr_;
    std::map<std::string, Slot> slots_;
};

/// Versioned little-endian container:
///
///     magic "TDCK" | u32 version | u32 meta_len | meta bytes | u32 count |
///     count x ( u32 name_len | name | u32 rank | rank x u64 dim | f64 payload )
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;
    std::uint32_t version = kVersion;
    std::string meta; // flat key=value text
    std::vector<std::pair<std::string, Tensor>> records;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

} // namespace treedec::nn
