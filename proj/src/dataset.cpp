#include "hz/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

namespace hz {

namespace {

struct Shape4 {
    std::array<std::pair<int, int>, 4> cells;  // (row, col) offsets
    int bbox_h, bbox_w;
};

// Fixed orientations; translation is the only degree of freedom.
const std::array<Shape4, 4>& tetromino_table() {
    static const std::array<Shape4, 4> shapes = {{
        {{{{0, 0}, {1, 0}, {2, 0}, {2, 1}}}, 3, 2},  // L
        {{{{0, 0}, {0, 1}, {0, 2}, {1, 1}}}, 2, 3},  // T
        {{{{0, 1}, {0, 2}, {1, 0}, {1, 1}}}, 2, 3},  // S
        {{{{0, 0}, {0, 1}, {0, 2}, {0, 3}}}, 1, 4},  // I
    }};
    return shapes;
}

uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw LengthError("idx: truncated header in " + path);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

std::vector<int> tetris_placement_counts() {
    std::vector<int> out;
    for (const auto& s : tetromino_table())
        out.push_back((4 - s.bbox_h + 1) * (4 - s.bbox_w + 1));
    return out;
}

ImageDataset generate_tetris(uint64_t seed, int samples_per_class, double noise_std) {
    if (samples_per_class <= 0) throw ConfigError("generate_tetris: samples_per_class must be positive");
    if (noise_std < 0.0) throw ConfigError("generate_tetris: noise_std must be nonnegative");
    ImageDataset d;
    d.channels = 1;
    d.height = 4;
    d.width = 4;
    d.classes = 4;
    const size_t n = size_t(samples_per_class) * 4;
    d.pixels.assign(n * 16, 0.0f);
    d.labels.resize(n);
    RngStream rng = RngStream::root(seed).derive("tetris");
    const auto& shapes = tetromino_table();
    size_t idx = 0;
    for (int cls = 0; cls < 4; ++cls) {
        const Shape4& s = shapes[size_t(cls)];
        const int dy_max = 4 - s.bbox_h, dx_max = 4 - s.bbox_w;
        for (int k = 0; k < samples_per_class; ++k, ++idx) {
            float* img = d.pixels.data() + idx * 16;
            const int dy = int(rng.below(uint64_t(dy_max + 1)));
            const int dx = int(rng.below(uint64_t(dx_max + 1)));
            for (const auto& [r, c] : s.cells) img[(r + dy) * 4 + (c + dx)] = 1.0f;
            if (noise_std > 0.0)
                for (int p = 0; p < 16; ++p)
                    img[p] = std::clamp(img[p] + float(rng.normal(0.0, noise_std)), 0.0f, 1.0f);
            d.labels[idx] = cls;
        }
    }
    return d;
}

std::vector<std::vector<uint8_t>> load_idx_images_raw(const std::string& path, int& rows, int& cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("idx: cannot open " + path);
    const uint32_t magic = read_be_u32(in, path);
    if (magic != 0x00000803u)
        throw FormatError("idx: bad image magic in " + path);
    const uint32_t n = read_be_u32(in, path);
    rows = int(read_be_u32(in, path));
    cols = int(read_be_u32(in, path));
    if (rows <= 0 || cols <= 0 || rows > 4096 || cols > 4096)
        throw FormatError("idx: implausible image dims in " + path);
    std::vector<std::vector<uint8_t>> images(n, std::vector<uint8_t>(size_t(rows) * cols));
    for (auto& img : images) {
        in.read(reinterpret_cast<char*>(img.data()), std::streamsize(img.size()));
        if (!in) throw LengthError("idx: truncated image payload in " + path);
    }
    return images;
}

std::vector<uint8_t> load_idx_labels_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageError("idx: cannot open " + path);
    const uint32_t magic = read_be_u32(in, path);
    if (magic != 0x00000801u)
        throw FormatError("idx: bad label magic in " + path);
    const uint32_t n = read_be_u32(in, path);
    std::vector<uint8_t> labels(n);
    in.read(reinterpret_cast<char*>(labels.data()), std::streamsize(labels.size()));
    if (!in) throw LengthError("idx: truncated label payload in " + path);
    return labels;
}

ImageDataset load_idx_pair(const std::string& images_path, const std::string& labels_path) {
    int rows = 0, cols = 0;
    auto images = load_idx_images_raw(images_path, rows, cols);
    auto labels = load_idx_labels_raw(labels_path);
    if (images.size() != labels.size())
        throw ConsistencyError("idx: image count " + std::to_string(images.size()) +
                               " != label count " + std::to_string(labels.size()));
    ImageDataset d;
    d.channels = 1;
    d.height = rows;
    d.width = cols;
    int max_label = 0;
    for (uint8_t l : labels) max_label = std::max(max_label, int(l));
    d.classes = max_label + 1;
    d.pixels.resize(images.size() * size_t(rows) * cols);
    d.labels.resize(labels.size());
    for (size_t i = 0; i < images.size(); ++i) {
        for (size_t p = 0; p < images[i].size(); ++p)
            d.pixels[i * images[i].size() + p] = float(images[i][p]) / 255.0f;
        d.labels[i] = int(labels[i]);
    }
    return d;
}

std::pair<ImageDataset, ImageDataset> split_dataset(const ImageDataset& d, double train_fraction,
                                                    uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction > 1.0)
        throw ConfigError("split_dataset: train_fraction must be in (0,1]");
    const size_t n = d.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    RngStream rng = RngStream::root(seed).derive("split");
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const size_t ntr = size_t(double(n) * train_fraction);
    auto take = [&](size_t begin, size_t end) {
        ImageDataset out;
        out.channels = d.channels;
        out.height = d.height;
        out.width = d.width;
        out.classes = d.classes;
        const size_t dim = d.sample_dim();
        out.pixels.resize((end - begin) * dim);
        out.labels.resize(end - begin);
        for (size_t i = begin; i < end; ++i) {
            std::copy(d.sample(order[i]), d.sample(order[i]) + dim,
                      out.pixels.data() + (i - begin) * dim);
            out.labels[i - begin] = d.labels[order[i]];
        }
        return out;
    };
    return {take(0, ntr), take(ntr, n)};
}

uint64_t dataset_fingerprint(const ImageDataset& d) {
    uint64_t h = fnv1a64("dataset");
    const int32_t dims[4] = {d.channels, d.height, d.width, d.classes};
    h ^= fnv1a64(dims, sizeof(dims));
    h *= 1099511628211ull;
    h ^= fnv1a64(d.labels.data(), d.labels.size() * sizeof(int));
    h *= 1099511628211ull;
    h ^= fnv1a64(d.pixels.data(), d.pixels.size() * sizeof(float));
    return h;
}

}  // namespace hz
