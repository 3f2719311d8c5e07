#include <cmath>
#include <deque>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pathohr/error.hpp"
#include "pathohr/patch/patches.hpp"
#include "pathohr/patch/slide_image.hpp"
#include "pathohr/patch/tissue.hpp"

using namespace pathohr;

namespace {

std::vector<std::uint64_t> to_vec(const Histogram& h) { return {h.begin(), h.end()}; }

// Background pixels reachable from the border through 4-neighbour
// background steps. Everything else is tissue after hole filling.
std::vector<bool> border_reachable(const TissueMask& m) {
  std::vector<bool> seen(m.bits.size(), false);
  std::deque<std::pair<int, int>> queue;
  auto push = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= m.width || y >= m.height) return;
    const std::size_t i = static_cast<std::size_t>(y) * m.width + x;
    if (seen[i] || m.at(x, y)) return;
    seen[i] = true;
    queue.emplace_back(x, y);
  };
  for (int x = 0; x < m.width; ++x) {
    push(x, 0);
    push(x, m.height - 1);
  }
  for (int y = 0; y < m.height; ++y) {
    push(0, y);
    push(m.width - 1, y);
  }
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    push(x + 1, y);
    push(x - 1, y);
    push(x, y + 1);
    push(x, y - 1);
  }
  return seen;
}

SlideImage disk_image(int size, double r_outer, double r_inner) {
  SlideImage img(size, size, 240);
  const double c = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double r = std::hypot(x - c, y - c);
      if (r <= r_outer && r >= r_inner) img.at(x, y) = 40;
    }
  return img;
}

// Random dark blobs with random bright speckles inside, producing holes of
// every shape and some background pockets touching the border.
SlideImage blob_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SlideImage img(w, h, 230);
  for (int b = 0; b < 6; ++b) {
    const double cx = u(gen) * w, cy = u(gen) * h, r = 4 + u(gen) * 12;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (std::hypot(x - cx, y - cy) <= r) img.at(x, y) = static_cast<std::uint8_t>(50 + u(gen) * 30);
  }
  for (int i = 0; i < w * h / 12; ++i) {
    const int x = static_cast<int>(u(gen) * w), y = static_cast<int>(u(gen) * h);
    img.at(x, y) = static_cast<std::uint8_t>(200 + u(gen) * 55);
  }
  return img;
}

}  // namespace

TEST_CASE("otsu examples") {
  Histogram two{};
  two[10] = 50;
  two[200] = 50;
  const auto r = otsu_threshold(two);
  CHECK(r.level == 10);
  CHECK_FALSE(r.degenerate);
  CHECK(r.level == oracle::otsu_scan(to_vec(two)));

  Histogram flat{};
  flat[128] = 1000;
  const auto c = otsu_threshold(flat);
  CHECK(c.level == 0);
  CHECK(c.degenerate);

  CHECK_THROWS_AS(otsu_threshold(Histogram{}), EmptyInputError);
}

TEST_CASE("otsu equals the exhaustive scan on seeded histograms") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> lo(60, 12), hi(190, 15);
  std::uniform_int_distribution<int> any(0, 255);
  for (int trial = 0; trial < 60; ++trial) {
    Histogram h{};
    const int n = 500 + trial * 37;
    for (int i = 0; i < n; ++i) {
      double v = 0;
      if (trial % 3 == 2)
        v = any(gen);
      else
        v = (i % 3 == 0 || trial % 3 == 1) ? lo(gen) : hi(gen);
      h[std::clamp(static_cast<int>(std::lround(v)), 0, 255)] += 1;
    }
    bool degen = false;
    const int expect = oracle::otsu_scan(to_vec(h), &degen);
    const auto got = otsu_threshold(h);
    CHECK(got.level == expect);
    CHECK(got.degenerate == degen);
  }

  // Sparse histograms with exact ties in between-class variance.
  for (int trial = 0; trial < 200; ++trial) {
    Histogram h{};
    const int k = 2 + trial % 4;
    for (int i = 0; i < k; ++i) h[any(gen)] += 1 + gen() % 3;
    CHECK(otsu_threshold(h).level == oracle::otsu_scan(to_vec(h)));
  }
}

TEST_CASE("between_class_variance matches the definition") {
  Histogram h{};
  h[10] = 3;
  h[100] = 5;
  h[250] = 2;
  const double n = 10.0;
  const double w0 = 8 / n, w1 = 2 / n, mu0 = (30.0 + 500.0) / 8, mu1 = 250.0;
  CHECK(std::abs(between_class_variance(h, 150) - w0 * w1 * (mu0 - mu1) * (mu0 - mu1)) < 1e-9);
  CHECK(between_class_variance(h, 255) == 0.0);
  CHECK(between_class_variance(h, 5) == 0.0);
}

TEST_CASE("tissue mask examples") {
  const SlideImage disk = disk_image(41, 12.0, 0.0);
  const auto res = build_tissue_mask(disk, otsu_threshold(histogram(disk)));
  CHECK_FALSE(res.warning.has_value());
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) CHECK(res.mask.at(x, y) == (disk.at(x, y) == 40));

  const SlideImage ring = disk_image(41, 12.0, 6.0);
  const auto filled = build_tissue_mask(ring, otsu_threshold(histogram(ring)));
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) CHECK(filled.mask.at(x, y) == res.mask.at(x, y));

  const SlideImage flat(20, 20, 128);
  const auto degenerate = build_tissue_mask(flat, otsu_threshold(histogram(flat)));
  CHECK(degenerate.warning.has_value());
  CHECK(degenerate.mask.count() == 0);
}

TEST_CASE("hole filling equals the border flood-fill oracle") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const SlideImage img = blob_image(64, 48, seed);
    const int level = otsu_threshold(histogram(img)).level;
    const TissueMask raw = threshold_mask(img, level);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) REQUIRE(raw.at(x, y) == (img.at(x, y) <= level));

    const TissueMask filled = fill_holes(raw);
    const auto reach = border_reachable(raw);
    for (std::size_t i = 0; i < raw.bits.size(); ++i) CHECK((filled.bits[i] != 0) == !reach[i]);

    CHECK(fill_holes(filled) == filled);
    // After filling, every background pixel touches the border through background.
    const auto again = border_reachable(filled);
    for (std::size_t i = 0; i < filled.bits.size(); ++i)
      if (!filled.bits[i]) CHECK(again[i]);
  }
}

TEST_CASE("extract_patches examples") {
  const SlideImage img(32, 32, 10);
  const auto full = extract_patches(img, TissueMask(32, 32, true), 16);
  REQUIRE(full.patches.size() == 4);
  for (const auto& p : full.patches) {
    CHECK(p.tissue_fraction == 1.0);
    CHECK(p.pixels.size() == 256u);
  }
  CHECK(extract_patches(img, TissueMask(32, 32, false), 16).patches.empty());

  const auto too_big = extract_patches(img, TissueMask(32, 32, true), 33);
  CHECK(too_big.patches.empty());
  CHECK_FALSE(too_big.warnings.empty());

  CHECK_THROWS_AS(extract_patches(img, TissueMask(32, 32, true), 0), ConfigError);
  CHECK_THROWS_AS(extract_patches(img, TissueMask(32, 32, true), 16, 1.5), ConfigError);
  CHECK_THROWS_AS(extract_patches(img, TissueMask(31, 32, true), 16), DimensionError);
}

TEST_CASE("kept tiles equal the per-tile popcount oracle") {
  std::mt19937_64 gen(48);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 48 + trial * 5, h = 48 + (trial % 3) * 7;
    SlideImage img(w, h);
    TissueMask mask(w, h);
    // Correlated mask so fractions spread over [0, 1].
    const double p_row = (trial + 1) / 11.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        img.at(x, y) = static_cast<std::uint8_t>(gen() % 256);
        const double bias = ((x / 16 + y / 16) % 3) / 2.0;
        mask.set(x, y, std::uniform_real_distribution<double>(0, 1)(gen) < 0.5 * bias + 0.5 * p_row);
      }
    for (const double min_fraction : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const int ps = 16;
      const auto grid = extract_patches(img, mask, ps, min_fraction);
      CHECK(grid.grid_rows == h / ps);
      CHECK(grid.grid_cols == w / ps);
      std::vector<std::tuple<int, int, double>> expect;
      for (int gr = 0; gr < h / ps; ++gr)
        for (int gc = 0; gc < w / ps; ++gc) {
          int count = 0;
          for (int y = 0; y < ps; ++y)
            for (int x = 0; x < ps; ++x) count += mask.at(gc * ps + x, gr * ps + y) ? 1 : 0;
          const double frac = count / double(ps * ps);
          if (frac >= min_fraction) expect.emplace_back(gr, gc, frac);
        }
      REQUIRE(grid.patches.size() == expect.size());
      for (std::size_t i = 0; i < expect.size(); ++i) {
        const auto& p = grid.patches[i];
        CHECK(p.grid_row == std::get<0>(expect[i]));
        CHECK(p.grid_col == std::get<1>(expect[i]));
        CHECK(p.tissue_fraction == std::get<2>(expect[i]));
        for (int y = 0; y < ps; ++y)
          for (int x = 0; x < ps; ++x)
            REQUIRE(p.pixels[static_cast<std::size_t>(y) * ps + x] == img.at(p.grid_col * ps + x, p.grid_row * ps + y));
      }
    }
  }
}

TEST_CASE("patch count is monotone in min_tissue_fraction and bounded by the grid") {
  const SlideImage img = blob_image(96, 80, 9);
  const TissueMask mask = build_tissue_mask(img, otsu_threshold(histogram(img))).mask;
  for (int ps : {8, 16, 24}) {
    std::size_t previous = SIZE_MAX;
    for (double f = 0.0; f <= 1.0; f += 0.125) {
      const auto n = extract_patches(img, mask, ps, f).patches.size();
      CHECK(n <= static_cast<std::size_t>((96 / ps) * (80 / ps)));
      CHECK(n <= previous);
      previous = n;
    }
  }
  const auto a = slide_to_patches(img, 16);
  const auto b = slide_to_patches(img, 16);
  REQUIRE(a.patches.size() == b.patches.size());
  for (std::size_t i = 0; i < a.patches.size(); ++i) CHECK(a.patches[i].pixels == b.patches[i].pixels);
}

TEST_CASE("PGM round trip and header handling") {
  SlideImage img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 17);
  std::stringstream buf;
  write_pgm(buf, img);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 11) == "P5\n5 3\n255\n");
  CHECK(bytes.size() == 11 + 15);
  CHECK(read_pgm(buf) == img);

  std::stringstream commented("P5 # magic\n# a comment line\n5 3\n# another\n255\n" + bytes.substr(11));
  CHECK(read_pgm(commented) == img);

  std::stringstream wrong_magic("P2\n5 3\n255\n" + bytes.substr(11));
  CHECK_THROWS_AS(read_pgm(wrong_magic), FormatError);
  std::stringstream truncated("P5\n5 3\n255\n" + bytes.substr(11, 7));
  CHECK_THROWS_AS(read_pgm(truncated), FormatError);
  std::stringstream deep("P5\n5 3\n65535\n" + bytes.substr(11));
  CHECK_THROWS_AS(read_pgm(deep), FormatError);

  const auto dir = std::filesystem::temp_directory_path() / "pathohr_test_patch";
  std::filesystem::create_directories(dir);
  write_pgm(dir / "img.pgm", img);
  CHECK(read_pgm(dir / "img.pgm") == img);

  TissueMask mask(4, 2);
  mask.set(1, 0, true);
  mask.set(3, 1, true);
  write_mask_pgm(dir / "mask.pgm", mask);
  const SlideImage as_img = read_pgm(dir / "mask.pgm");
  CHECK(as_img.pixels == std::vector<std::uint8_t>{0, 255, 0, 0, 0, 0, 0, 255});
  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), FormatError);
  std::filesystem::remove_all(dir);
}
