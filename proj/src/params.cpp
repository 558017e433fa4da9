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

#include "treedec/params.hpp"

#include "treedec/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace treedec::nn {

Param& ParamStore::add(const std::string& name, Tensor init) {
    if (params_.contains(name)) throw Error(ErrorCode::ConfigError, "duplicate parameter '" + name + "'");
    Tensor grad(init.shape());
    auto [it, _] = params_.emplace(name, Param{std::move(init), std::move(grad)});
    return it->second;
}

Param& ParamStore::add_uniform(const std::string& name, Shape shape, int fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng);
    return add(name, std::move(t));
}

Param& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorCode::ConfigError, "unknown parameter '" + name + "'");
    return it->second;
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error(ErrorCode::ConfigError, "unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
}

void Adadelta::step(ParamStore& params) {
    for (auto& [name, p] : params) {
        auto it = slots_.find(name);
        if (it == slots_.end()) {
            it = slots_.emplace(name, Slot{Tensor(p.value.shape()), Tensor(p.value.shape())}).first;
        }
        Slot& s = it->second;
        auto x = p.value.data();
        auto g = p.grad.data();
        auto eg2 = s.eg2.data();
        auto edx2 = s.edx2.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            eg2[i] = rho_ * eg2[i] + (1.0 - rho_) * g[i] * g[i];
            const double dx = -std::sqrt(edx2[i] + eps_) / std::sqrt(eg2[i] + eps_) * g[i];
            edx2[i] = rho_ * edx2[i] + (1.0 - rho_) * dx * dx;
            x[i] += lr_ * dx;
        }
    }
}

std::vector<std::pair<std::string, Tensor>> Adadelta::export_state() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& [name, s] : slots_) {
        out.emplace_back(name + "/eg2", s.eg2);
        out.emplace_back(name + "/edx2", s.edx2);
    }
    return out;
}

void Adadelta::import_state(const std::vector<std::pair<std::string, Tensor>>& records) {
    slots_.clear();
    for (const auto& [key, t] : records) {
        const auto slash = key.rfind('/');
        if (slash == std::string::npos) throw Error(ErrorCode::BadFormat, "bad optimizer record '" + key + "'");
        const std::string name = key.substr(0, slash);
        const std::string kind = key.substr(slash + 1);
        auto& slot = slots_[name];
        if (kind == "eg2") {
            slot.eg2 = t;
        } else if (kind == "edx2") {
            slot.edx2 = t;
        } else {
            throw Error(ErrorCode::BadFormat, "bad optimizer record '" + key + "'");
        }
    }
}

// --- checkpoint container ---------------------------------------------------

namespace {

constexpr char kMagic[4] = {'T', 'D', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
        bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
    } else {
        bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
  public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > bytes_.size()) throw Error(ErrorCode::BadFormat, "truncated checkpoint");
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        if constexpr (std::is_floating_point_v<T>) {
            return std::bit_cast<double>(bits);
        } else {
            return static_cast<T>(bits);
        }
    }

    std::string bytes(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw Error(ErrorCode::BadFormat, "truncated checkpoint");
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

  private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, ckpt.version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    out += ckpt.meta;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.records.size()));
    for (const auto& [name, t] : ckpt.records) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        for (double v : t.data()) put<double>(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.bytes(4) != std::string(kMagic, kMagic + 4)) throw Error(ErrorCode::BadFormat, "not a checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = in.get<std::uint32_t>();
    if (ckpt.version != Checkpoint::kVersion) {
        throw Error(ErrorCode::BadFormat, "unsupported checkpoint version " + std::to_string(ckpt.version));
    }
    ckpt.meta = in.bytes(in.get<std::uint32_t>());
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t r = 0; r < count; ++r) {
        std::string name = in.bytes(in.get<std::uint32_t>());
        const auto rank = in.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(in.get<std::uint64_t>()));
        Tensor t(shape);
        for (double& v : t.data()) v = in.get<double>();
        ckpt.records.emplace_back(std::move(name), std::move(t));
    }
    if (!in.done()) throw Error(ErrorCode::BadFormat, "trailing bytes after checkpoint records");
    return ckpt;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    const std::string bytes = encode_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

} // namespace treedec::nn
