#include "pathohr/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pathohr/error.hpp"
#include "pathohr/numeric/rng.hpp"
#include "pathohr/parallel.hpp"

namespace pathohr {

namespace {

constexpr std::uint64_t kSlideStream = 0x736c6964;
constexpr std::uint64_t kDatasetStream = 0x64617461;

std::uint8_t clamp_pixel(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

int noise(RngStream& rng, int half_width) {
  if (half_width <= 0) return 0;
  return static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * half_width + 1))) - half_width;
}

std::vector<std::uint8_t> tissue_blob(int w, int h, RngStream& rng) {
  const double cx = w * (0.5 + rng.uniform(-0.05, 0.05));
  const double cy = h * (0.5 + rng.uniform(-0.05, 0.05));
  const double rx = w * rng.uniform(0.30, 0.42);
  const double ry = h * rng.uniform(0.30, 0.42);
  const double lobes = 2.0 + static_cast<double>(rng.below(3));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double wobble = rng.uniform(0.04, 0.10);
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5 - cx) / rx;
      const double dy = (y + 0.5 - cy) / ry;
      const double radius = 1.0 + wobble * std::sin(lobes * std::atan2(dy, dx) + phase);
      inside[static_cast<std::size_t>(y) * w + x] = dx * dx + dy * dy <= radius * radius;
    }
  }
  return inside;
}

}  // namespace

SyntheticSlide gen_synthetic_slide(std::uint64_t seed, int width, int height, int label, double signal_fraction,
                                   const SyntheticParams& params) {
  if (params.signal_block < 2) throw ConfigError("signal_block must be >= 2");
  if (width < params.signal_block || height < params.signal_block) {
    throw ConfigError("slide " + std::to_string(width) + "x" + std::to_string(height) + " is smaller than one " +
                      std::to_string(params.signal_block) + "-pixel block");
  }
  if (label != 0 && label != 1) throw ConfigError("label must be 0 or 1");
  if (!(signal_fraction >= 0.0 && signal_fraction <= 1.0)) throw ConfigError("signal_fraction must lie in [0, 1]");
  if (label == 1 && signal_fraction == 0.0) throw ConfigError("a label-1 slide needs a positive signal_fraction");

  RngStream rng(seed, kSlideStream);
  SyntheticSlide slide;
  slide.label = label;
  slide.signal_fraction = label == 1 ? signal_fraction : 0.0;
  slide.seed = seed;
  slide.image = SlideImage(width, height);
  const std::vector<std::uint8_t> inside = tissue_blob(width, height, rng);
  slide.tissue_pixels = static_cast<std::size_t>(std::count(inside.begin(), inside.end(), 1));

  std::vector<std::uint8_t> signal(inside.size(), 0);
  if (label == 1) {
    // Whole blocks first (in random order), then blocks cut by the blob edge,
    // added until the covered tissue area reaches the target.
    const int b = params.signal_block;
    std::vector<SignalBlock> full;
    std::vector<SignalBlock> partial;
    for (int y = 0; y + b <= height; y += b) {
      for (int x = 0; x + b <= width; x += b) {
        SignalBlock blk{x, y, b, 0};
        for (int yy = y; yy < y + b; ++yy)
          for (int xx = x; xx < x + b; ++xx) blk.tissue_pixels += inside[static_cast<std::size_t>(yy) * width + xx];
        if (blk.tissue_pixels == static_cast<std::size_t>(b * b)) full.push_back(blk);
        else if (blk.tissue_pixels > 0) partial.push_back(blk);
      }
    }
    auto shuffle = [&](std::vector<SignalBlock>& v) {
      for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(full);
    shuffle(partial);
    full.insert(full.end(), partial.begin(), partial.end());
    const double target = signal_fraction * static_cast<double>(slide.tissue_pixels);
    const double half_block = 0.5 * b * b;
    for (const SignalBlock& blk : full) {
      if (static_cast<double>(slide.signal_pixels) >= target - half_block) break;
      slide.signal_blocks.push_back(blk);
      slide.signal_pixels += blk.tissue_pixels;
      for (int yy = blk.y; yy < blk.y + b; ++yy)
        for (int xx = blk.x; xx < blk.x + b; ++xx) {
          const std::size_t i = static_cast<std::size_t>(yy) * width + xx;
          signal[i] = inside[i];
        }
    }
    if (slide.signal_blocks.empty()) {
      throw ConfigError("slide has no tissue to carry a signal");
    }
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      int v;
      if (!inside[i]) {
        v = params.background_level + noise(rng, params.background_noise);
      } else {
        v = params.tissue_level + noise(rng, params.tissue_noise);
        if (signal[i]) v += ((x + y) % 2 == 0 ? 1 : -1) * params.checker_amplitude;
      }
      slide.image.pixels[i] = clamp_pixel(v);
    }
  }
  return slide;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw FormatError("unknown split '" + std::string(name) + "'");
}

std::vector<Split> split_assignment(const std::vector<int>& labels, std::uint64_t seed) {
  const std::size_t n = labels.size();
  RngStream rng(seed, kDatasetStream + 1);
  // Shuffle each class, then order all slides by their relative position
  // within their class so the classes interleave proportionally.
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i] == 1].push_back(i);
  std::vector<std::pair<double, std::size_t>> keyed;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    for (std::size_t r = 0; r < members.size(); ++r)
      keyed.emplace_back((static_cast<double>(r) + 0.5) / static_cast<double>(members.size()), members[r]);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Split> splits(n, Split::train);
  const std::size_t held = n / 10;
  for (std::size_t k = 0; k < n; ++k) {
    if (k < held) splits[keyed[k].second] = Split::test;
    else if (k < 2 * held) splits[keyed[k].second] = Split::val;
  }
  return splits;
}

SyntheticDataset gen_dataset(std::size_t n_slides, double class_balance, std::uint64_t seed,
                             const SyntheticParams& params) {
  if (n_slides < 10) throw ConfigError("a dataset needs at least 10 slides");
  if (!(class_balance > 0.0 && class_balance < 1.0)) throw ConfigError("class_balance must lie in (0, 1)");
  const auto positives = static_cast<std::size_t>(std::llround(class_balance * static_cast<double>(n_slides)));
  if (positives == 0 || positives == n_slides) throw ConfigError("class_balance leaves one class empty");

  RngStream rng(seed, kDatasetStream);
  std::vector<std::size_t> order(n_slides);
  for (std::size_t i = 0; i < n_slides; ++i) order[i] = i;
  for (std::size_t i = n_slides; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<int> labels(n_slides, 0);
  for (std::size_t k = 0; k < positives; ++k) labels[order[k]] = 1;

  SyntheticDataset ds;
  ds.slides.resize(n_slides);
  const RngStream seeds(seed, kDatasetStream + 2);
  parallel_for(n_slides, [&](std::size_t i) {
    RngStream s = seeds.split(i);
    ds.slides[i] = gen_synthetic_slide(s.next_u64(), params.width, params.height, labels[i], params.signal_fraction,
                                       params);
  });
  ds.splits = split_assignment(labels, seed);
  return ds;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "filename,label,split\n";
  for (const auto& e : entries) out << e.filename << ',' << e.label << ',' << to_string(e.split) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "filename,label,split") {
    throw FormatError("manifest header must be 'filename,label,split'");
  }
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string filename, label, split, extra;
    if (!std::getline(ss, filename, ',') || !std::getline(ss, label, ',') || !std::getline(ss, split, ',') ||
        std::getline(ss, extra, ',') || filename.empty() || (label != "0" && label != "1")) {
      throw FormatError("malformed manifest line " + std::to_string(line_no) + ": '" + line + "'");
    }
    entries.push_back({filename, label == "1" ? 1 : 0, parse_split(split)});
  }
  return entries;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& dataset) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < dataset.slides.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slide_%04zu.pgm", i);
    write_pgm(dir / name, dataset.slides[i].image);
    entries.push_back({name, dataset.slides[i].label, dataset.splits[i]});
  }
  write_manifest(dir / kManifestName, entries);
}

}  // namespace pathohr
