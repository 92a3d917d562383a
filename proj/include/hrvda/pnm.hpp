// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrvda {

/// Binary 8-bit greymap (P5). `values` are row-major in [0, 1].
inline void write_pgm(const std::string& path, int width, int height, const std::vector<double>& values) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        throw std::invalid_argument("write_pgm: value count does not match " + std::to_string(width) + "x" +
                                    std::to_string(height));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out << "P5\n" << width << " " << height << "\n255\n";
    for (double v : values) {
        const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(c * 255.0))));
    }
    if (!out) {
        throw std::runtime_error("write failed for '" + path + "'");
    }
}

/// Binary bitmap (P4). A set entry in `ink` is drawn black.
inline void write_pbm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& ink) {
    if (ink.size() != static_cast<std::size_t>(width) * height) {
        throw std::invalid_argument("write_pbm: bit count does not match " + std::to_string(width) + "x" +
                                    std::to_string(height));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    out << "P4\n" << width << " " << height << "\n";
    const int row_bytes = (width + 7) / 8;
    for (int y = 0; y < height; ++y) {
        std::vector<std::uint8_t> packed(static_cast<std::size_t>(row_bytes), 0);
        for (int x = 0; x < width; ++x) {
            if (ink[static_cast<std::size_t>(y) * width + x] != 0) {
                packed[static_cast<std::size_t>(x / 8)] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
            }
        }
        out.write(reinterpret_cast<const char*>(packed.data()), row_bytes);
    }
    if (!out) {
        throw std::runtime_error("write failed for '" + path + "'");
    }
}

struct Bitmap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> ink;
};

inline Bitmap read_pbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path + "'");
    }
    std::string magic;
    Bitmap bm;
    in >> magic >> bm.width >> bm.height;
    if (magic != "P4" || bm.width <= 0 || bm.height <= 0) {
        throw std::runtime_error("'" + path + "' is not a P4 bitmap");
    }
    in.get();
    const int row_bytes = (bm.width + 7) / 8;
    bm.ink.assign(static_cast<std::size_t>(bm.width) * bm.height, 0);
    std::vector<char> row(static_cast<std::size_t>(row_bytes));
    for (int y = 0; y < bm.height; ++y) {
        in.read(row.data(), row_bytes);
        for (int x = 0; x < bm.width; ++x) {
            const auto byte = static_cast<std::uint8_t>(row[static_cast<std::size_t>(x / 8)]);
            bm.ink[static_cast<std::size_t>(y) * bm.width + x] = (byte >> (7 - x % 8)) & 1u;
        }
    }
    if (!in) {
        throw std::runtime_error("truncated bitmap '" + path + "'");
    }
    return bm;
}

}  // namespace hrvda
