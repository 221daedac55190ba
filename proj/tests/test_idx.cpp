#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "blade/errors.hpp"
#include "blade/idx.hpp"
#include "blade/sim.hpp"

using namespace blade;
using idx::load_idx;

namespace {

void put_be32(std::ofstream& out, uint32_t v) {
    char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    out.write(b, 4);
}

void write_images(const std::string& path, uint32_t n, uint32_t rows, uint32_t cols,
                  const std::vector<uint8_t>& pixels, uint32_t magic = 0x00000803u,
                  bool truncate = false) {
    std::ofstream out(path, std::ios::binary);
    put_be32(out, magic);
    put_be32(out, n);
    put_be32(out, rows);
    put_be32(out, cols);
    size_t count = truncate ? pixels.size() / 2 : pixels.size();
    out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(count));
}

void write_labels(const std::string& path, const std::vector<uint8_t>& labels,
                  uint32_t magic = 0x00000801u) {
    std::ofstream out(path, std::ios::binary);
    put_be32(out, magic);
    put_be32(out, uint32_t(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

// n images of rows x cols, pixel = (i + p) % 256, label = i % classes
void make_fixture(const std::string& stem, uint32_t n, uint32_t rows, uint32_t cols,
                  uint32_t classes) {
    std::vector<uint8_t> pixels(size_t(n) * rows * cols);
    for (uint32_t i = 0; i < n; ++i)
        for (uint32_t p = 0; p < rows * cols; ++p)
            pixels[size_t(i) * rows * cols + p] = uint8_t((i + p) % 256);
    std::vector<uint8_t> labels(n);
    for (uint32_t i = 0; i < n; ++i) labels[i] = uint8_t(i % classes);
    write_images(stem + "-images", n, rows, cols, pixels);
    write_labels(stem + "-labels", labels);
}

}  // namespace

TEST_CASE("idx loader decodes shapes, scaling, and labels") {
    make_fixture("idx_ok", 10, 4, 3, 4);
    auto ds = load_idx("idx_ok-images", "idx_ok-labels");
    CHECK(ds.size() == 10);
    CHECK(ds.dims == 12);
    CHECK(ds.num_classes == 4);
    CHECK(ds.labels[0] == 0);
    CHECK(ds.labels[7] == 3);
    // pixel value 255 scales to exactly 1.0, 0 to exactly 0.0
    // image 0 pixel p has value p (p < 12), image 9: (9+p) % 256
    CHECK(ds.row(0)[0] == 0.0);
    CHECK(ds.row(0)[5] == doctest::Approx(5.0 / 255.0));
    std::vector<uint8_t> px(12, 255);
    write_images("idx_max-images", 1, 4, 3, px);
    write_labels("idx_max-labels", {1});
    auto mx = load_idx("idx_max-images", "idx_max-labels");
    CHECK(mx.row(0)[11] == 1.0);
}

TEST_CASE("idx loader refuses malformed files distinctly") {
    std::vector<uint8_t> pixels(2 * 4, 7);
    std::vector<uint8_t> labels = {0, 1};

    write_images("idx_badmagic-images", 2, 2, 2, pixels, 0x00000999u);
    write_labels("idx_badmagic-labels", labels);
    CHECK_THROWS_WITH_AS(load_idx("idx_badmagic-images", "idx_badmagic-labels"),
                         doctest::Contains("bad magic"), IoError);

    write_images("idx_short-images", 2, 2, 2, pixels, 0x00000803u, true);
    write_labels("idx_short-labels", labels);
    CHECK_THROWS_WITH_AS(load_idx("idx_short-images", "idx_short-labels"),
                         doctest::Contains("truncated"), IoError);

    write_images("idx_n-images", 2, 2, 2, pixels);
    write_labels("idx_n-labels", {0, 1, 2});
    CHECK_THROWS_WITH_AS(load_idx("idx_n-images", "idx_n-labels"),
                         doctest::Contains("count mismatch"), IoError);

    CHECK_THROWS_AS(load_idx("idx_missing-images", "idx_missing-labels"), IoError);
}

TEST_CASE("a simulation ingests idx shards end to end") {
    make_fixture("idx_run", 60, 4, 3, 3);
    sim::SimConfig cfg;
    cfg.seed = 5;
    cfg.n_clients = 4;
    cfg.data.source = "idx";
    cfg.data.images = "idx_run-images";
    cfg.data.labels = "idx_run-labels";
    cfg.data.test_images = "idx_run-images";
    cfg.data.test_labels = "idx_run-labels";
    cfg.data.synth.samples_per_client = 10;
    cfg.chain.c_b = 8.0; // t_b = 1*8/(4*1) = 2
    cfg.budget.t_sum = 28.0;
    cfg.budget.theta = 6.0; // t_t = 12, K = 2
    cfg.privacy_enabled = false;
    cfg.watermark.enabled = false;
    auto rep = sim::run(cfg);
    CHECK(rep.summary.rounds_executed == 2);
    CHECK(rep.summary.consensus_every_round);
    CHECK(rep.summary.final_accuracy > 0.0);
}
