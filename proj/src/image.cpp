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

#include "treedec/image.hpp"

#include "treedec/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace treedec {

bool Bitmap::blank() const {
    return std::all_of(pixels.begin(), pixels.end(), [](std::uint8_t p) { return p == 0; });
}

std::string encode_pgm(const Bitmap& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

namespace {

class HeaderReader {
  public:
    explicit HeaderReader(std::string_view s) : s_(s) {}

    int number() {
        skip();
        if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            throw Error(ErrorCode::BadFormat, "pgm: expected a number in the header");
        }
        long v = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            v = v * 10 + (s_[pos_++] - '0');
            if (v > (1 << 24)) throw Error(ErrorCode::BadFormat, "pgm: header value too large");
        }
        return static_cast<int>(v);
    }

    std::size_t pos() const { return pos_; }

  private:
    void skip() {
        while (pos_ < s_.size()) {
            if (s_[pos_] == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view s_;
    std::size_t pos_ = 2;
};

} // namespace

Bitmap decode_pgm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
        throw Error(ErrorCode::BadFormat, "pgm: missing P5/P2 magic");
    }
    const bool binary = bytes[1] == '5';
    HeaderReader h(bytes);
    const int w = h.number();
    const int ht = h.number();
    const int maxval = h.number();
    if (w <= 0 || ht <= 0) throw Error(ErrorCode::BadFormat, "pgm: empty image");
    if (maxval <= 0 || maxval > 255) throw Error(ErrorCode::BadFormat, "pgm: maxval must be in 1..255");
    Bitmap img(w, ht);
    const auto scale = [&](int v) { return static_cast<std::uint8_t>((v * 255 + maxval / 2) / maxval); };
    if (binary) {
        const std::size_t start = h.pos() + 1; // single whitespace after maxval
        if (bytes.size() < start + img.pixels.size()) throw Error(ErrorCode::BadFormat, "pgm: truncated pixel data");
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            img.pixels[i] = scale(static_cast<unsigned char>(bytes[start + i]));
        }
    } else {
        for (auto& p : img.pixels) {
            const int v = h.number();
            if (v > maxval) throw Error(ErrorCode::BadFormat, "pgm: pixel above maxval");
            p = scale(v);
        }
    }
    return img;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

void write_pgm(const std::string& path, const Bitmap& img) { write_file(path, encode_pgm(img)); }

Bitmap read_pgm(const std::string& path) { return decode_pgm(read_file(path)); }

} // namespace treedec
