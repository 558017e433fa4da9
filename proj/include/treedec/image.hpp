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

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace treedec {

/// 8-bit grayscale image, row-major. 0 is background, 255 is full ink.
struct Bitmap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Bitmap() = default;
    Bitmap(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

    [[nodiscard]] std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] bool blank() const;
    friend bool operator==(const Bitmap&, const Bitmap&) = default;
};

/// Binary (P5) portable graymap, maxval 255.
std::string encode_pgm(const Bitmap& img);
/// Accepts P5 and plain P2 with maxval up to 255. Throws Error{BadFormat}.
Bitmap decode_pgm(std::string_view bytes);

void write_pgm(const std::string& path, const Bitmap& img);
Bitmap read_pgm(const std::string& path);

/// Reads a whole file; throws Error{IoError}.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

} // namespace treedec
