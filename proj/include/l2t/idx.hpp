#pragma once

// IDX binary format, as used by the MNIST distribution: big-endian magic
// [0x00 0x00 dtype ndims], dtype 0x08 (unsigned byte), then ndims big-endian
// 32-bit extents, then the raw payload.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "l2t/dataset.hpp"
#include "l2t/error.hpp"

namespace l2t {

namespace idx_detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                          const std::string& path) {
    if (off + 4 > b.size())
        throw DataError("'" + path + "' truncated at byte offset " + std::to_string(b.size()) +
                        " (need 4 bytes at offset " + std::to_string(off) + ")");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

struct RawIdx {
    std::vector<std::size_t> dims;
    std::vector<unsigned char> payload;
};

inline RawIdx read_idx(const std::string& path, std::size_t expect_ndims) {
    auto bytes = read_file(path);
    if (bytes.size() < 4)
        throw DataError("'" + path + "' truncated at byte offset " + std::to_string(bytes.size()) +
                        " (magic needs 4 bytes)");
    if (bytes[0] != 0 || bytes[1] != 0)
        throw DataError("'" + path + "' bad magic at byte offset 0");
    if (bytes[2] != 0x08)
        throw DataError("'" + path + "' unsupported dtype 0x" + std::to_string(bytes[2]) +
                        " at byte offset 2 (only 0x08 unsigned byte)");
    const std::size_t ndims = bytes[3];
    if (ndims != expect_ndims)
        throw DataError("'" + path + "' has " + std::to_string(ndims) + " dimensions at byte " +
                        "offset 3, expected " + std::to_string(expect_ndims));
    RawIdx out;
    std::size_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        out.dims.push_back(be32(bytes, 4 + 4 * d, path));
        total *= out.dims.back();
    }
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() != header + total)
        throw DataError("'" + path + "' payload is " + std::to_string(bytes.size() - header) +
                        " bytes at byte offset " + std::to_string(header) + ", header promises " +
                        std::to_string(total));
    out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace idx_detail

// Loads an image/label file pair. Pixels are scaled to [0,1].
inline LabeledDataset load_idx(const std::string& path_images, const std::string& path_labels,
                               const std::string& name = "idx") {
    auto images = idx_detail::read_idx(path_images, 3);
    auto labels = idx_detail::read_idx(path_labels, 1);
    if (images.dims[0] != labels.dims[0])
        throw DataError("count mismatch: '" + path_images + "' has " +
                        std::to_string(images.dims[0]) + " images, '" + path_labels + "' has " +
                        std::to_string(labels.dims[0]) + " labels");

    LabeledDataset ds;
    ds.name = name;
    ds.feature_shape = {images.dims[1], images.dims[2]};
    const std::size_t stride = images.dims[1] * images.dims[2];
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < images.dims[0]; ++i) {
        Tensor t(ds.feature_shape);
        for (std::size_t p = 0; p < stride; ++p)
            t[p] = static_cast<double>(images.payload[i * stride + p]) / 255.0;
        ds.features.push_back(std::move(t));
        ds.labels.push_back(labels.payload[i]);
        max_label = std::max(max_label, ds.labels.back());
    }
    ds.num_classes = max_label + 1;
    ds.validate();
    return ds;
}

// Writes the pair back out, quantizing pixels to bytes (round to nearest).
inline void save_idx(const LabeledDataset& ds, const std::string& path_images,
                     const std::string& path_labels) {
    if (ds.feature_shape.size() != 2)
        throw DataError("save_idx: feature shape must be 2-d, got " +
                        shape_str(ds.feature_shape));
    std::ofstream imgs(path_images, std::ios::binary);
    std::ofstream labs(path_labels, std::ios::binary);
    if (!imgs || !labs) throw DataError("save_idx: cannot open output files");

    idx_detail::write_be32(imgs, 0x00000803);
    idx_detail::write_be32(imgs, static_cast<std::uint32_t>(ds.size()));
    idx_detail::write_be32(imgs, static_cast<std::uint32_t>(ds.feature_shape[0]));
    idx_detail::write_be32(imgs, static_cast<std::uint32_t>(ds.feature_shape[1]));
    for (const Tensor& t : ds.features)
        for (double v : t.values()) {
            const double q = std::min(255.0, std::max(0.0, std::round(v * 255.0)));
            const unsigned char b = static_cast<unsigned char>(q);
            imgs.write(reinterpret_cast<const char*>(&b), 1);
        }

    idx_detail::write_be32(labs, 0x00000801);
    idx_detail::write_be32(labs, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t l : ds.labels) {
        const unsigned char b = static_cast<unsigned char>(l);
        labs.write(reinterpret_cast<const char*>(&b), 1);
    }
}

} // namespace l2t
