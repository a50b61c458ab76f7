/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "gypsum/envi.hpp"
#include "gypsum/error.hpp"
#include "gypsum/map_io.hpp"
#include "support.hpp"

#include <doctest.h>
#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>

using namespace gypsum;
namespace fs = std::filesystem;

namespace {

// The 12 values of a 2 x 2 x 3 cube, indexed [line][sample][band].
float fixture_value(std::size_t line, std::size_t sample, std::size_t band) {
    return 0.125f * static_cast<float>(1 + band + 3 * (sample + 2 * line)) + 0.001f;
}

template <class T>
void write_raw(const fs::path& path, const std::vector<T>& values, bool big_endian = false) {
    std::ofstream out(path, std::ios::binary);
    for (T v : values) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &v, sizeof(T));
        if (big_endian) std::reverse(bytes, bytes + sizeof(T));
        out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::vector<float> interleaved(Interleave il) {
    std::vector<float> v;
    if (il == Interleave::Bsq) {
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t l = 0; l < 2; ++l)
                for (std::size_t s = 0; s < 2; ++s) v.push_back(fixture_value(l, s, b));
    } else if (il == Interleave::Bil) {
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t b = 0; b < 3; ++b)
                for (std::size_t s = 0; s < 2; ++s) v.push_back(fixture_value(l, s, b));
    } else {
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t s = 0; s < 2; ++s)
                for (std::size_t b = 0; b < 3; ++b) v.push_back(fixture_value(l, s, b));
    }
    return v;
}

std::string header_for(const std::string& interleave, std::size_t bands = 3, int data_type = 4) {
    return "ENVI\nsamples = 2\nlines = 2\nbands = " + std::to_string(bands) + "\nheader offset = 0\ndata type = " +
           std::to_string(data_type) + "\ninterleave = " + interleave +
           "\nbyte order = 0\nwavelength units = Nanometers\nwavelength = {1100, 1500, 2000}\n";
}

HsiCube read_fixture(const test::TempDir& dir, Interleave il, const std::string& name) {
    write_raw(dir / (name + ".img"), interleaved(il));
    write_text(dir / (name + ".hdr"), header_for(name));
    return read_envi(dir / (name + ".hdr"));
}

std::vector<unsigned char> read_png_rgb(const fs::path& path, unsigned& width, unsigned& height) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    REQUIRE(png_image_begin_read_from_file(&image, path.c_str()));
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    REQUIRE(png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr));
    width = image.width;
    height = image.height;
    return buf;
}

ClusterMap map_from(std::size_t rows, std::size_t cols, std::vector<std::int32_t> labels, std::size_t k) {
    ClusterMap m;
    m.rows = rows;
    m.cols = cols;
    m.labels = std::move(labels);
    m.k = k;
    m.cluster_sizes.assign(k, 0);
    for (auto l : m.labels)
        if (l >= 0) ++m.cluster_sizes[static_cast<std::size_t>(l)];
    m.palette = default_palette(k);
    return m;
}

}  // namespace

TEST_CASE("BSQ float32 fixture is read bit-exactly") {
    test::TempDir dir("ingest");
    const auto cube = read_fixture(dir, Interleave::Bsq, "bsq");
    REQUIRE(cube.rows() == 2);
    REQUIRE(cube.cols() == 2);
    REQUIRE(cube.bands() == 3);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t b = 0; b < 3; ++b)
                CHECK(cube.at(l, s, b) == static_cast<double>(fixture_value(l, s, b)));
    CHECK(cube.grid().centers() == std::vector<double>{1100, 1500, 2000});
}

TEST_CASE("reading is independent of interleave") {
    test::TempDir dir("ingest");
    const auto bsq = read_fixture(dir, Interleave::Bsq, "bsq");
    CHECK(read_fixture(dir, Interleave::Bil, "bil") == bsq);
    CHECK(read_fixture(dir, Interleave::Bip, "bip") == bsq);
}

TEST_CASE("header declaring more bands than the payload holds is a size mismatch") {
    test::TempDir dir("ingest");
    write_raw(dir / "c.img", interleaved(Interleave::Bsq));
    write_text(dir / "c.hdr", "ENVI\nsamples = 2\nlines = 2\nbands = 5\ndata type = 4\ninterleave = bsq\n"
                              "wavelength = {1100, 1200, 1300, 1400, 1500}\n");
    try {
        read_envi(dir / "c.hdr");
        FAIL("expected a size mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
        CHECK(std::string(e.what()).find("size mismatch") != std::string::npos);
    }
}

TEST_CASE("missing required fields and unsupported types are named") {
    auto message = [](const std::string& text) {
        try {
            parse_envi_header(text);
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("ENVI\nsamples = 2\nlines = 2\ndata type = 4\n").find("bands") != std::string::npos);
    CHECK(message("ENVI\nsamples = 2\nbands = 2\ndata type = 4\n").find("lines") != std::string::npos);
    CHECK(message("ENVI\nsamples = 2\nlines = 2\nbands = 1\n").find("data type") != std::string::npos);
    CHECK(message("samples = 2\nlines = 2\nbands = 1\ndata type = 4\n").find("ENVI") != std::string::npos);
    CHECK(message("ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 4\ninterleave = zigzag\n").find("interleave") !=
          std::string::npos);
    CHECK(message("ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 6\n").find("data type") != std::string::npos);
}

TEST_CASE("header keys are case-insensitive, lists span lines, unknown keys are ignored") {
    const auto h = parse_envi_header(
        "ENVI\ndescription = {\n  some text, with commas }\nSAMPLES = 3\nLines   = 1\nBands=2\n"
        "Data Type = 2\nInterleave = BIP\nByte Order = 1\nmystery key = 42\n"
        "Wavelength Units = Micrometers\nwavelength = {\n 1.25,\n 2.5 }\n");
    CHECK(h.samples == 3);
    CHECK(h.lines == 1);
    CHECK(h.bands == 2);
    CHECK(h.data_type == 2);
    CHECK(h.interleave == Interleave::Bip);
    CHECK(h.byte_order == ByteOrder::Big);
    REQUIRE(h.wavelength);
    CHECK((*h.wavelength)[0] == doctest::Approx(1250.0));
    CHECK((*h.wavelength)[1] == doctest::Approx(2500.0));
}

TEST_CASE("integer payloads in either byte order are widened") {
    test::TempDir dir("ingest");
    const std::vector<std::int16_t> v{-3, 7, 1000, -32768};
    write_raw(dir / "be.img", v, true);
    write_text(dir / "be.hdr", "ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 2\ninterleave = bsq\n"
                               "byte order = 1\nwavelength = {1500}\n");
    const auto cube = read_envi(dir / "be.hdr");
    CHECK(cube.at(0, 0, 0) == -3.0);
    CHECK(cube.at(0, 1, 0) == 7.0);
    CHECK(cube.at(1, 0, 0) == 1000.0);
    CHECK(cube.at(1, 1, 0) == -32768.0);

    const std::vector<std::uint16_t> u{1, 65535, 2, 3};
    write_raw(dir / "u.img", u);
    write_text(dir / "u.hdr", "ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 12\nwavelength = {1500}\n");
    CHECK(read_envi(dir / "u.hdr").at(0, 1, 0) == 65535.0);
}

TEST_CASE("wavelengths can come from a sidecar") {
    test::TempDir dir("ingest");
    write_raw(dir / "c.img", interleaved(Interleave::Bsq));
    write_text(dir / "c.hdr", "ENVI\nsamples = 2\nlines = 2\nbands = 3\ndata type = 4\n");
    CHECK_THROWS_AS(read_envi(dir / "c.hdr"), Error);
    write_text(dir / "wl.txt", "1100\n1500\n2000\n");
    const auto cube = read_envi(dir / "c.hdr", std::nullopt, dir / "wl.txt");
    CHECK(cube.grid().centers() == std::vector<double>{1100, 1500, 2000});
}

TEST_CASE("cube write/read round trip in every interleave") {
    test::TempDir dir("ingest");
    const auto cube = test::random_cube(3, 4, 5, 9);
    for (auto il : {Interleave::Bsq, Interleave::Bil, Interleave::Bip}) {
        write_envi(cube, dir / "r.hdr", dir / "r.img", il, 5);
        CHECK(read_envi(dir / "r.hdr") == cube);
    }
}

TEST_CASE("label raster and mask round trips") {
    test::TempDir dir("ingest");
    LabelRaster lr;
    lr.rows = 3;
    lr.cols = 2;
    lr.labels = {0, 1, 2, 65535, 7, 0};
    write_label_raster(lr, dir / "l.hdr", dir / "l.img");
    const auto back = read_label_raster(dir / "l.hdr");
    CHECK(back.rows == 3);
    CHECK(back.cols == 2);
    CHECK(back.labels == lr.labels);

    PixelMask m(2, 2, true);
    m.set(1, 1, false);
    write_mask(m, dir / "m.hdr", dir / "m.img");
    const auto mb = read_mask(dir / "m.hdr");
    CHECK(mb.count() == 3);
    CHECK_FALSE(mb.kept(1, 1));
}

TEST_CASE("single-cluster map renders as one colour") {
    test::TempDir dir("ingest");
    auto map = map_from(3, 4, std::vector<std::int32_t>(12, 0), 1);
    write_cluster_map_png(map, dir / "m.png");
    unsigned w = 0, h = 0;
    const auto px = read_png_rgb(dir / "m.png", w, h);
    CHECK(w == 4);
    CHECK(h == 3);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(px[3 * i] == map.palette[0].r);
        CHECK(px[3 * i + 1] == map.palette[0].g);
        CHECK(px[3 * i + 2] == map.palette[0].b);
    }
}

TEST_CASE("no-data pixels render black and the palette never uses black") {
    test::TempDir dir("ingest");
    auto map = map_from(2, 2, {0, kNoData, 1, kNoData}, 2);
    write_cluster_map_png(map, dir / "m.png");
    unsigned w = 0, h = 0;
    const auto px = read_png_rgb(dir / "m.png", w, h);
    for (std::size_t i : {1u, 3u}) {
        CHECK(px[3 * i] == 0);
        CHECK(px[3 * i + 1] == 0);
        CHECK(px[3 * i + 2] == 0);
    }
    for (const auto& c : default_palette(200)) CHECK_FALSE(c == Rgb{0, 0, 0});
    const auto pal = default_palette(200);
    for (std::size_t i = 0; i < pal.size(); ++i)
        for (std::size_t j = i + 1; j < pal.size(); ++j) CHECK_FALSE(pal[i] == pal[j]);
}

TEST_CASE("cluster map ENVI round trip keeps labels and palette") {
    test::TempDir dir("ingest");
    auto map = map_from(2, 3, {0, 1, 2, kNoData, 2, 1}, 3);
    write_cluster_map_envi(map, dir / "c.hdr", dir / "c.img");
    const auto back = read_cluster_map(dir / "c.hdr");
    CHECK(back.labels == map.labels);
    CHECK(back.k == 3);
    CHECK(back.palette == map.palette);
    const auto raw = read_label_raster(dir / "c.hdr");
    CHECK(raw.labels == std::vector<std::int32_t>{1, 2, 3, 0, 3, 2});
}

TEST_CASE("unwritable output is an I/O error") {
    auto map = map_from(1, 1, {0}, 1);
    try {
        write_cluster_map_png(map, "/nonexistent-dir/x/m.png");
        FAIL("expected an I/O error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
}

TEST_CASE("palette matching: identity and permutation") {
    auto ref = map_from(2, 3, {0, 0, 1, 1, 2, 2}, 3);
    ref.palette = {{10, 0, 0}, {0, 20, 0}, {0, 0, 30}};
    CHECK(match_palette(ref, ref) == ref.palette);

    // Same partition with ids renumbered 0->2, 1->0, 2->1.
    auto cur = map_from(2, 3, {2, 2, 0, 0, 1, 1}, 3);
    const auto pal = match_palette(cur, ref);
    CHECK(pal[2] == ref.palette[0]);
    CHECK(pal[0] == ref.palette[1]);
    CHECK(pal[1] == ref.palette[2]);
}

TEST_CASE("palette matching: two clusters over one reference cluster") {
    // 4x4 reference: left half cluster 0, right half cluster 1.
    std::vector<std::int32_t> ref_labels(16), cur_labels(16);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) {
            ref_labels[r * 4 + c] = c < 2 ? 0 : 1;
            // Current: left half split into a 6-pixel and a 2-pixel cluster, right half one cluster.
            cur_labels[r * 4 + c] = c >= 2 ? 2 : (r == 3 ? 1 : 0);
        }
    auto ref = map_from(4, 4, ref_labels, 2);
    ref.palette = {{200, 10, 10}, {10, 200, 10}};
    auto cur = map_from(4, 4, cur_labels, 3);

    // Overlap counts by direct enumeration.
    std::size_t overlap[3][2] = {};
    for (std::size_t i = 0; i < 16; ++i) ++overlap[cur_labels[i]][ref_labels[i]];
    REQUIRE(overlap[0][0] == 6);
    REQUIRE(overlap[1][0] == 2);
    REQUIRE(overlap[2][1] == 8);

    const auto pal = match_palette(cur, ref);
    CHECK(pal[0] == ref.palette[0]);  // larger of the two wins the colour
    CHECK(pal[2] == ref.palette[1]);
    CHECK_FALSE(pal[1] == ref.palette[0]);
    CHECK_FALSE(pal[1] == ref.palette[1]);
    CHECK_FALSE(pal[1] == Rgb{0, 0, 0});
}

TEST_CASE("palette matching never reuses a colour") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        std::uniform_int_distribution<int> kr(1, 6), kc(1, 9);
        const int rk = kr(rng), ck = kc(rng);
        std::uniform_int_distribution<int> lr(-1, rk - 1), lc(-1, ck - 1);
        std::vector<std::int32_t> a(64), b(64);
        for (auto& v : a) v = lc(rng);
        for (auto& v : b) v = lr(rng);
        const auto pal = match_palette(map_from(8, 8, a, ck), map_from(8, 8, b, rk));
        for (std::size_t i = 0; i < pal.size(); ++i)
            for (std::size_t j = i + 1; j < pal.size(); ++j) CHECK_FALSE(pal[i] == pal[j]);
    }
    CHECK_THROWS_AS(match_palette(map_from(2, 2, {0, 0, 0, 0}, 1), map_from(1, 4, {0, 0, 0, 0}, 1)), Error);
}

TEST_CASE("cluster means CSV has wavelength-labelled columns") {
    test::TempDir dir("ingest");
    auto map = map_from(1, 2, {0, 1}, 2);
    map.cluster_means = RowMatrix{{0.1, 0.2}, {0.3, 0.4}};
    write_cluster_means_csv(map, WavelengthGrid({1100, 1200}), dir / "m.csv");
    std::ifstream in(dir / "m.csv");
    std::string header, row0;
    std::getline(in, header);
    std::getline(in, row0);
    CHECK(header == "cluster,pixels,nm_1100,nm_1200");
    CHECK(row0.rfind("0,1,0.1", 0) == 0);
}
