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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace treedec::nn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. A rank-0 tensor holds one scalar.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v);

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] int rank() const noexcept { return static_cast<int>(shape_.size()); }
    [[nodiscard]] int dim(int i) const { return shape_.at(i); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    [[nodiscard]] double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    [[nodiscard]] double item() const;
    [[nodiscard]] Tensor reshaped(Shape shape) const;
    [[nodiscard]] bool all_finite() const noexcept;
    [[nodiscard]] double sum() const noexcept;

    void fill(double v);
    Tensor& operator+=(const Tensor& o);

  private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace treedec::nn
