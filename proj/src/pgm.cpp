#include "bodyfit/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "bodyfit/errors.hpp"

namespace bodyfit {

namespace {

// Reads the next whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

}  // namespace

Mat read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");

    const std::string magic = next_token(in);
    if (magic != "P5")
        throw FormatError(path.string() + ": not a binary PGM (magic '" + magic + "')");
    int width = 0, height = 0;
    long maxval = 0;
    try {
        width = std::stoi(next_token(in));
        height = std::stoi(next_token(in));
        maxval = std::stol(next_token(in));
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": malformed PGM header");
    }
    if (width < 1 || height < 1 || maxval < 1 || maxval > 65535)
        throw FormatError(path.string() + ": unsupported PGM dimensions/maxval");

    const int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes_per);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw FormatError(path.string() + ": truncated PGM payload");

    Mat values(height, width);
    const double scale = 1.0 / static_cast<double>(maxval);
    std::size_t k = 0;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            long v;
            if (bytes_per == 2) {
                v = (static_cast<long>(buf[k]) << 8) | buf[k + 1];
                k += 2;
            } else {
                v = buf[k++];
            }
            values(r, c) = static_cast<double>(v) * scale;
        }
    return values;
}

void write_pgm(const std::filesystem::path& path, const Mat& values, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw ValidationError("PGM bit depth must be 8 or 16");
    const long maxval = bit_depth == 8 ? 255 : 65535;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << values.cols() << " " << values.rows() << "\n" << maxval << "\n";
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            const double clamped = std::clamp(values(r, c), 0.0, 1.0);
            const long v = std::lround(clamped * static_cast<double>(maxval));
            if (bit_depth == 16) {
                out.put(static_cast<char>((v >> 8) & 0xff));
                out.put(static_cast<char>(v & 0xff));
            } else {
                out.put(static_cast<char>(v & 0xff));
            }
        }
    if (!out) throw FormatError("short write to '" + path.string() + "'");
}

void write_ppm(const std::filesystem::path& path, const Mat& red, const Mat& green,
               const Mat& blue) {
    if (red.rows() != green.rows() || red.rows() != blue.rows() ||
        red.cols() != green.cols() || red.cols() != blue.cols())
        throw DimensionError("PPM channels differ in size");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out << "P6\n" << red.cols() << " " << red.rows() << "\n255\n";
    for (Eigen::Index r = 0; r < red.rows(); ++r)
        for (Eigen::Index c = 0; c < red.cols(); ++c) {
            for (const Mat* ch : {&red, &green, &blue}) {
                const long v = std::lround(std::clamp((*ch)(r, c), 0.0, 1.0) * 255.0);
                out.put(static_cast<char>(v & 0xff));
            }
        }
    if (!out) throw FormatError("short write to '" + path.string() + "'");
}

}  // namespace bodyfit
