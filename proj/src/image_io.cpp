#include "gtasr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gtasr {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            if (!tok.empty()) break;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
        } else {
            tok.push_back(c);
        }
    }
    return tok;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Tensor& img) {
    if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 1)
        throw std::invalid_argument("write_pgm expects a [1,1,H,W] image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P5\n" << img.dim(3) << ' ' << img.dim(2) << "\n255\n";
    for (real v : img.data()) {
        const double q = std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
        out.put(static_cast<char>(static_cast<unsigned char>(q)));
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    if (header_token(in) != "P5") throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
    const long w = std::stol(header_token(in));
    const long h = std::stol(header_token(in));
    const long maxval = std::stol(header_token(in));
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error(path.string() + ": unsupported PGM header");
    std::vector<real> values(static_cast<std::size_t>(w * h));
    for (real& v : values) {
        char c;
        if (!in.get(c)) throw std::runtime_error(path.string() + ": truncated pixel data");
        v = static_cast<real>(static_cast<unsigned char>(c)) / static_cast<real>(maxval);
    }
    return Tensor::from_vector({1, 1, h, w}, std::move(values));
}

}  // namespace gtasr
