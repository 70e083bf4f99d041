#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hz/arch.hpp"
#include "hz/checkpoint.hpp"
#include "hz/dataset.hpp"
#include "hz/report.hpp"
#include "hz/rng.hpp"

using namespace hz;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("hz_io_test_" + std::to_string(counter++));
    fs::create_directories(p);
    return p;
}

void put_be32(std::ofstream& f, uint32_t v) {
    const unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                                (unsigned char)(v >> 8), (unsigned char)v};
    f.write(reinterpret_cast<const char*>(b), 4);
}

// Hand-assembled IDX pair: n images of rows x cols, pixel (i, r, c) =
// (i + r * cols + c) mod 256, label i mod 10.
void write_idx_fixture(const fs::path& images, const fs::path& labels, int n, int rows, int cols) {
    {
        std::ofstream f(images, std::ios::binary);
        put_be32(f, 0x00000803u);
        put_be32(f, uint32_t(n));
        put_be32(f, uint32_t(rows));
        put_be32(f, uint32_t(cols));
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    const unsigned char px = (unsigned char)((i + r * cols + c) % 256);
                    f.write(reinterpret_cast<const char*>(&px), 1);
                }
    }
    {
        std::ofstream f(labels, std::ios::binary);
        put_be32(f, 0x00000801u);
        put_be32(f, uint32_t(n));
        for (int i = 0; i < n; ++i) {
            const unsigned char lb = (unsigned char)(i % 10);
            f.write(reinterpret_cast<const char*>(&lb), 1);
        }
    }
}

std::vector<char> read_all(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("idx fixture parses to the expected shapes and values") {
    const fs::path dir = temp_dir();
    write_idx_fixture(dir / "img", dir / "lbl", 12, 5, 4);
    const ImageDataset d = load_idx_pair((dir / "img").string(), (dir / "lbl").string());
    CHECK(d.size() == 12);
    CHECK(d.channels == 1);
    CHECK(d.height == 5);
    CHECK(d.width == 4);
    CHECK(d.classes == 10);
    CHECK(d.labels[3] == 3);
    CHECK(d.labels[11] == 1);
    // pixel (i=2, r=1, c=3): (2 + 4 + 3) / 255
    CHECK(d.sample(2)[1 * 4 + 3] == doctest::Approx(9.0 / 255.0));
}

TEST_CASE("idx loader raises typed errors on damaged input") {
    const fs::path dir = temp_dir();
    write_idx_fixture(dir / "img", dir / "lbl", 6, 3, 3);

    SUBCASE("bad magic") {
        auto bytes = read_all(dir / "img");
        bytes[3] = 0x07;
        std::ofstream(dir / "bad", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_AS(load_idx_pair((dir / "bad").string(), (dir / "lbl").string()),
                        FormatError);
    }
    SUBCASE("truncated payload") {
        auto bytes = read_all(dir / "img");
        bytes.resize(bytes.size() - 5);
        std::ofstream(dir / "cut", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_AS(load_idx_pair((dir / "cut").string(), (dir / "lbl").string()),
                        LengthError);
    }
    SUBCASE("image and label counts disagree") {
        write_idx_fixture(dir / "img2", dir / "lbl2", 7, 3, 3);
        CHECK_THROWS_AS(load_idx_pair((dir / "img").string(), (dir / "lbl2").string()),
                        ConsistencyError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_idx_pair((dir / "nope").string(), (dir / "lbl").string()), DataError);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const fs::path dir = temp_dir();
    RngStream rng = RngStream::root(3);
    WeightVector v;
    v.layout_hash = 0xdeadbeefcafe1234ull;
    v.model_id = 17;
    v.epoch = 4;
    for (int i = 0; i < 257; ++i) v.data.push_back(float(rng.normal()));

    const std::string path = (dir / "w.hzw").string();
    save_checkpoint(path, v);
    const WeightVector r = load_checkpoint(path, v.layout_hash);
    CHECK(r.model_id == 17);
    CHECK(r.epoch == 4);
    CHECK(r.layout_hash == v.layout_hash);
    REQUIRE(r.data.size() == v.data.size());
    for (size_t i = 0; i < v.data.size(); ++i) {
        // bit-level comparison, not approximate
        uint32_t a, b;
        static_assert(sizeof a == sizeof v.data[0]);
        std::memcpy(&a, &v.data[i], 4);
        std::memcpy(&b, &r.data[i], 4);
        CHECK(a == b);
    }
}

TEST_CASE("checkpoint loader raises typed errors") {
    const fs::path dir = temp_dir();
    WeightVector v;
    v.layout_hash = 42;
    v.data = {1.0f, 2.0f, 3.0f};
    const std::string path = (dir / "w.hzw").string();
    save_checkpoint(path, v);

    SUBCASE("wrong expected layout") {
        CHECK_THROWS_AS(load_checkpoint(path, 43), ConsistencyError);
    }
    SUBCASE("corrupt magic") {
        auto bytes = read_all(path);
        bytes[0] = 'X';
        std::ofstream(dir / "bad", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_AS(load_checkpoint((dir / "bad").string()), FormatError);
    }
    SUBCASE("truncation") {
        auto bytes = read_all(path);
        bytes.resize(bytes.size() - 2);
        std::ofstream(dir / "cut", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_AS(load_checkpoint((dir / "cut").string()), LengthError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint((dir / "gone.hzw").string()), DataError);
    }
}

TEST_CASE("parameter bundles round-trip bit-exactly") {
    const fs::path dir = temp_dir();
    RngStream rng = RngStream::root(11);
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({7});
    for (size_t i = 0; i < a.numel(); ++i) a.data()[i] = float(rng.normal());
    for (size_t i = 0; i < b.numel(); ++i) b.data()[i] = float(rng.uniform(-2, 2));
    const std::string cfg = "{\"k\":1,\"name\":\"with \\\"quotes\\\" and\\nnewline\"}";

    const std::string path = (dir / "p.hzb").string();
    save_bundle(path, cfg, {{"alpha", &a}, {"beta.w", &b}});
    const Bundle r = load_bundle(path);
    CHECK(r.config == cfg);
    REQUIRE(r.arrays.size() == 2);
    CHECK(r.arrays[0].name == "alpha");
    CHECK(r.arrays[0].shape == std::vector<int>{3, 4});
    CHECK(r.arrays[1].name == "beta.w");
    for (size_t i = 0; i < a.numel(); ++i) {
        uint32_t x, y;
        std::memcpy(&x, &a.data()[i], 4);
        std::memcpy(&y, &r.arrays[0].data[i], 4);
        CHECK(x == y);
    }

    SUBCASE("corrupt magic") {
        auto bytes = read_all(path);
        bytes[1] = 'Q';
        std::ofstream(dir / "bad", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_AS(load_bundle((dir / "bad").string()), FormatError);
    }
    SUBCASE("truncation") {
        auto bytes = read_all(path);
        bytes.resize(bytes.size() / 2);
        std::ofstream(dir / "cut", std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
        CHECK_THROWS_AS(load_bundle((dir / "cut").string()), LengthError);
    }
}

TEST_CASE("tetris boards have four lit pixels and valid labels") {
    const ImageDataset d = generate_tetris(5, 50, 0.0);
    CHECK(d.size() == 200);
    CHECK(d.channels == 1);
    CHECK(d.height == 4);
    CHECK(d.width == 4);
    CHECK(d.classes == 4);
    std::vector<int> per_class(4, 0);
    for (size_t i = 0; i < d.size(); ++i) {
        REQUIRE(d.labels[i] >= 0);
        REQUIRE(d.labels[i] < 4);
        per_class[size_t(d.labels[i])]++;
        int lit = 0;
        for (int p = 0; p < 16; ++p) {
            const float v = d.sample(i)[p];
            CHECK((v == 0.0f || v == 1.0f));
            lit += v == 1.0f ? 1 : 0;
        }
        CHECK(lit == 4);
    }
    for (int c = 0; c < 4; ++c) CHECK(per_class[size_t(c)] == 50);
}

TEST_CASE("tetris noise stays inside the pixel range") {
    const ImageDataset d = generate_tetris(5, 30, 0.1);
    for (size_t i = 0; i < d.pixels.size(); ++i) {
        CHECK(d.pixels[i] >= 0.0f);
        CHECK(d.pixels[i] <= 1.0f);
    }
}

TEST_CASE("dataset fingerprints track content") {
    const ImageDataset a = generate_tetris(5, 20, 0.05);
    const ImageDataset b = generate_tetris(5, 20, 0.05);
    const ImageDataset c = generate_tetris(6, 20, 0.05);
    CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
    CHECK(dataset_fingerprint(a) != dataset_fingerprint(c));

    ImageDataset mutated = a;
    mutated.labels[0] = (mutated.labels[0] + 1) % 4;
    CHECK(dataset_fingerprint(a) != dataset_fingerprint(mutated));
}

TEST_CASE("seeded split is a partition and is reproducible") {
    const ImageDataset d = generate_tetris(2, 40, 0.0);
    auto [tr1, te1] = split_dataset(d, 0.7, 99);
    auto [tr2, te2] = split_dataset(d, 0.7, 99);
    CHECK(tr1.size() == 112);  // 0.7 * 160
    CHECK(te1.size() == 48);
    CHECK(dataset_fingerprint(tr1) == dataset_fingerprint(tr2));
    CHECK(dataset_fingerprint(te1) == dataset_fingerprint(te2));
    auto [tr3, te3] = split_dataset(d, 0.7, 100);
    CHECK(dataset_fingerprint(tr1) != dataset_fingerprint(tr3));
}

TEST_CASE("weight statistics match hand-computed quantiles") {
    // bias-free two-layer net: 16->5->4. First segment holds 80 weights,
    // second 20. Fill the first with 0..79, the second with constants.
    const ArchSpec arch = build_ffn_tetris();
    const LayerLayout layout = derive_layout(arch);
    REQUIRE(layout.total == 100);
    WeightVector v;
    v.layout_hash = layout.hash;
    v.data.resize(100);
    for (int i = 0; i < 80; ++i) v.data[size_t(i)] = float(i);
    for (int i = 80; i < 100; ++i) v.data[size_t(i)] = 7.0f;

    const std::vector<double> s = weight_statistics(v, layout);
    const std::vector<std::string> names = weight_statistic_names(layout);
    REQUIRE(s.size() == names.size());
    REQUIRE(s.size() == 14);  // 2 segments x (mean, var, 5 quantiles), no biases

    // segment 0: values 0..79
    CHECK(s[0] == doctest::Approx(39.5).epsilon(1e-12));           // mean
    CHECK(s[1] == doctest::Approx(533.25).epsilon(1e-12));         // population variance
    CHECK(s[2] == doctest::Approx(0.0).epsilon(1e-12));            // min
    CHECK(s[3] == doctest::Approx(19.75).epsilon(1e-12));          // 25% with interpolation
    CHECK(s[4] == doctest::Approx(39.5).epsilon(1e-12));           // median
    CHECK(s[5] == doctest::Approx(59.25).epsilon(1e-12));          // 75%
    CHECK(s[6] == doctest::Approx(79.0).epsilon(1e-12));           // max
    // segment 1: constant 7
    CHECK(s[7] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(s[8] == doctest::Approx(0.0).epsilon(1e-12));
    for (int q = 9; q < 14; ++q) CHECK(s[size_t(q)] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("csv writer and reader round-trip quoted content") {
    const fs::path dir = temp_dir();
    const std::string path = (dir / "t.csv").string();
    write_csv(path, {"name", "value"},
              {{"plain", "1"}, {"comma, inside", "2"}, {"quote \" inside", "3"}, {"multi\nline", "4"}});
    const CsvTable t = read_csv(path);
    REQUIRE(t.header.size() == 2);
    REQUIRE(t.rows.size() == 4);
    CHECK(t.rows[1][0] == "comma, inside");
    CHECK(t.rows[2][0] == "quote \" inside");
    CHECK(t.rows[3][0] == "multi\nline");
    CHECK(t.rows[3][1] == "4");
}
