#include "blade/idx.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <vector>

#include "blade/errors.hpp"

namespace blade::idx {

namespace {

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx open failed: " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

// IDX integers are big-endian
uint32_t be32(const std::vector<uint8_t>& b, size_t at, const std::string& path) {
    if (at + 4 > b.size()) throw IoError("idx truncated header: " + path);
    return uint32_t(b[at]) << 24 | uint32_t(b[at + 1]) << 16 | uint32_t(b[at + 2]) << 8 |
           uint32_t(b[at + 3]);
}

}  // namespace

mlcore::Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = slurp(images_path);
    const auto lab = slurp(labels_path);

    if (be32(img, 0, images_path) != 0x803u)
        throw IoError("idx bad magic (want 0x803 images): " + images_path);
    if (be32(lab, 0, labels_path) != 0x801u)
        throw IoError("idx bad magic (want 0x801 labels): " + labels_path);

    const uint32_t n_img = be32(img, 4, images_path);
    const uint32_t rows = be32(img, 8, images_path);
    const uint32_t cols = be32(img, 12, images_path);
    const uint32_t n_lab = be32(lab, 4, labels_path);
    if (n_img != n_lab)
        throw IoError("idx count mismatch: " + std::to_string(n_img) + " images vs " +
                      std::to_string(n_lab) + " labels");

    const size_t dim = size_t(rows) * cols;
    if (img.size() != 16 + size_t(n_img) * dim) throw IoError("idx truncated: " + images_path);
    if (lab.size() != 8 + size_t(n_lab)) throw IoError("idx truncated: " + labels_path);

    mlcore::Dataset d;
    d.dims = int(dim);
    d.features.resize(size_t(n_img) * dim);
    d.labels.resize(n_img);
    for (size_t i = 0; i < d.features.size(); ++i)
        d.features[i] = double(img[16 + i]) / 255.0;
    int max_label = 0;
    for (uint32_t i = 0; i < n_lab; ++i) {
        d.labels[i] = int(lab[8 + i]);
        max_label = std::max(max_label, d.labels[i]);
    }
    d.num_classes = max_label + 1;
    d.validate();
    return d;
}

}  // namespace blade::idx
