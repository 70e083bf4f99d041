#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hz/errors.hpp"
#include "hz/rng.hpp"

namespace hz {

struct ImageDataset {
    int channels = 0;
    int height = 0;
    int width = 0;
    int classes = 0;
    std::vector<float> pixels;  // [n, channels, height, width], values in [0,1]
    std::vector<int> labels;

    size_t size() const { return labels.size(); }
    size_t sample_dim() const { return size_t(channels) * height * width; }
    const float* sample(size_t i) const { return pixels.data() + i * sample_dim(); }
};

// 4x4 grayscale images, one of four tetromino shapes per image, placed at a
// uniformly chosen valid translation. Classes: 0=L, 1=T, 2=S, 3=I.
// Pixel noise is gaussian with the given std, clamped back into [0,1];
// with noise_std 0 each image has exactly four pixels equal to 1.
ImageDataset generate_tetris(uint64_t seed, int samples_per_class, double noise_std);

// Number of distinct translations per tetris class, in class order.
std::vector<int> tetris_placement_counts();

// IDX files as distributed for MNIST: big-endian magic + dims, u8 payload.
// Pixels are scaled to [0,1]. Throws FormatError on a bad magic, LengthError
// on truncation, ConsistencyError when images and labels disagree.
ImageDataset load_idx_pair(const std::string& images_path, const std::string& labels_path);

std::vector<std::vector<uint8_t>> load_idx_images_raw(const std::string& path, int& rows, int& cols);
std::vector<uint8_t> load_idx_labels_raw(const std::string& path);

// Seeded shuffle split into train/test by sample.
std::pair<ImageDataset, ImageDataset> split_dataset(const ImageDataset& d, double train_fraction,
                                                    uint64_t seed);

// Stable content hash over dims, labels, and pixel bytes.
uint64_t dataset_fingerprint(const ImageDataset& d);

}  // namespace hz
