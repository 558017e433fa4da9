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

#include "treedec/tensor.hpp"

#include "treedec/error.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace treedec::nn {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw Error(ErrorCode::ShapeMismatch, "negative dimension in " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
        throw Error(ErrorCode::ShapeMismatch, "tensor of shape " + shape_str(shape_) + " given " +
                                                  std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::vector(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor(Shape{n}, std::move(v));
}

double Tensor::item() const {
    if (data_.size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
    if (o.data_.size() != data_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "cannot add " + shape_str(o.shape_) + " into " + shape_str(shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

} // namespace treedec::nn
