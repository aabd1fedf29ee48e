#include "slsnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "slsnet/error.hpp"
#include "slsnet/networks.hpp"

namespace slsnet {

namespace fs = std::filesystem;

Tensor image_to_tensor(const Image8& img) {
  const std::size_t plane = img.width * img.height;
  std::vector<real> v(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src = img.channels == 1 ? i : i * img.channels + c;
      v[c * plane + i] = static_cast<real>(img.pixels[src] / 255.0);
    }
  }
  return Tensor::from(Shape{1, 3, img.height, img.width}, std::move(v));
}

Tensor mask_to_tensor(const Image8& img) {
  const std::size_t plane = img.width * img.height;
  std::vector<real> v(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    unsigned sum = 0;
    for (std::size_t c = 0; c < img.channels; ++c) sum += img.pixels[i * img.channels + c];
    v[i] = static_cast<real>(sum / (255.0 * static_cast<double>(img.channels)));
  }
  return Tensor::from(Shape{1, 1, img.height, img.width}, std::move(v));
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image8 tensor_to_image(const Tensor& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("tensor_to_image expects (1, 3, h, w), got " + s.str());
  Image8 img{s.w, s.h, 3, std::vector<std::uint8_t>(3 * s.plane())};
  auto d = image.data();
  for (std::size_t i = 0; i < s.plane(); ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = to_byte(d[c * s.plane() + i]);
  return img;
}

Image8 mask_to_image(const Tensor& mask) {
  const Shape& s = mask.shape();
  if (s.n != 1 || s.c != 1) throw DimensionError("mask_to_image expects (1, 1, h, w), got " + s.str());
  Image8 img{s.w, s.h, 1, std::vector<std::uint8_t>(s.plane())};
  auto d = mask.data();
  for (std::size_t i = 0; i < s.plane(); ++i) img.pixels[i] = d[i] >= real(0.5) ? 255 : 0;
  return img;
}

Sample load_sample(const fs::path& image_path, const fs::path& mask_path, std::size_t target_size) {
  if (target_size == 0) throw ConfigError("load_sample: target size must be positive");
  NoGradGuard no_grad;
  Sample s;
  s.id = image_path.stem().string();
  s.image = bilinear_resize(image_to_tensor(read_png(image_path)), target_size, target_size);
  if (!mask_path.empty()) {
    const Tensor m = bilinear_resize(mask_to_tensor(read_png(mask_path)), target_size, target_size);
    s.mask = binarize(m, 0.5);
  }
  return s;
}

std::string AugmentOps::label() const {
  std::vector<std::string> parts;
  if (hflip) parts.emplace_back("hflip");
  if (vflip) parts.emplace_back("vflip");
  if (gamma) {
    std::ostringstream g;
    g << "gamma" << *gamma;
    parts.push_back(g.str());
  }
  if (clahe) parts.emplace_back("clahe");
  if (parts.empty()) return "identity";
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

namespace {

Tensor flip(const Tensor& t, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return t;
  const Shape& s = t.shape();
  std::vector<real> out(t.size());
  auto in = t.data();
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const real* src = in.data() + p * s.plane();
    real* dst = out.data() + p * s.plane();
    for (std::size_t y = 0; y < s.h; ++y) {
      const std::size_t sy = vertical ? s.h - 1 - y : y;
      for (std::size_t x = 0; x < s.w; ++x) {
        const std::size_t sx = horizontal ? s.w - 1 - x : x;
        dst[y * s.w + x] = src[sy * s.w + sx];
      }
    }
  }
  return Tensor::from(s, std::move(out));
}

Tensor apply_gamma(const Tensor& t, double g) {
  std::vector<real> out(t.data().begin(), t.data().end());
  if (g != 1.0)
    for (auto& v : out) v = static_cast<real>(std::pow(std::clamp<double>(v, 0.0, 1.0), g));
  return Tensor::from(t.shape(), std::move(out));
}

}  // namespace

Tensor clahe(const Tensor& image, const ClaheParams& p) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("clahe expects (1, 3, h, w), got " + s.str());
  if (!(p.clip_limit >= 1.0)) throw ConfigError("clahe: clip limit must be >= 1");
  if (p.tiles < 1) throw ConfigError("clahe: tile count must be >= 1");
  constexpr std::size_t kBins = 256;
  const std::size_t plane = s.plane();
  auto in = image.data();
  const real* r = in.data();
  const real* g = r + plane;
  const real* b = g + plane;

  std::vector<double> luma(plane);
  std::vector<std::uint8_t> bin(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    luma[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    bin[i] = to_byte(luma[i]);
  }

  const std::size_t ty = std::min(p.tiles, s.h);
  const std::size_t tx = std::min(p.tiles, s.w);
  auto edge = [](std::size_t i, std::size_t extent, std::size_t tiles) { return i * extent / tiles; };

  // Per-tile lookup tables mapping a luminance bin to an equalised value in [0, 1].
  std::vector<std::array<double, kBins>> lut(ty * tx);
  for (std::size_t i = 0; i < ty; ++i) {
    for (std::size_t j = 0; j < tx; ++j) {
      const std::size_t y0 = edge(i, s.h, ty), y1 = edge(i + 1, s.h, ty);
      const std::size_t x0 = edge(j, s.w, tx), x1 = edge(j + 1, s.w, tx);
      std::array<double, kBins> hist{};
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) hist[bin[y * s.w + x]] += 1.0;
      const double area = static_cast<double>((y1 - y0) * (x1 - x0));
      const double limit = std::max(1.0, p.clip_limit * area / kBins);
      double excess = 0;
      for (auto& h : hist) {
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      }
      double cdf = 0;
      for (std::size_t k = 0; k < kBins; ++k) {
        cdf += hist[k] + excess / kBins;
        lut[i * tx + j][k] = cdf / area;
      }
    }
  }

  // Bilinear blend of the four nearest tile mappings, anchored at tile centres.
  auto coord = [](std::size_t pix, std::size_t extent, std::size_t tiles, std::size_t& lo,
                  std::size_t& hi, double& frac) {
    const double t = (static_cast<double>(pix) + 0.5) * static_cast<double>(tiles) / static_cast<double>(extent) - 0.5;
    const double fl = std::floor(t);
    if (t <= 0) {
      lo = hi = 0;
      frac = 0;
    } else if (fl >= static_cast<double>(tiles - 1)) {
      lo = hi = tiles - 1;
      frac = 0;
    } else {
      lo = static_cast<std::size_t>(fl);
      hi = lo + 1;
      frac = t - fl;
    }
  };

  std::vector<real> out(3 * plane);
  for (std::size_t y = 0; y < s.h; ++y) {
    std::size_t i0, i1;
    double fy;
    coord(y, s.h, ty, i0, i1, fy);
    for (std::size_t x = 0; x < s.w; ++x) {
      std::size_t j0, j1;
      double fx;
      coord(x, s.w, tx, j0, j1, fx);
      const std::size_t idx = y * s.w + x;
      const std::uint8_t k = bin[idx];
      const double top = (1 - fx) * lut[i0 * tx + j0][k] + fx * lut[i0 * tx + j1][k];
      const double bot = (1 - fx) * lut[i1 * tx + j0][k] + fx * lut[i1 * tx + j1][k];
      const double y_new = (1 - fy) * top + fy * bot;
      // Keep the colour differences R - Y and B - Y.
      const double rr = y_new + (r[idx] - luma[idx]);
      const double bb = y_new + (b[idx] - luma[idx]);
      const double gg = (y_new - 0.299 * rr - 0.114 * bb) / 0.587;
      out[idx] = static_cast<real>(std::clamp(rr, 0.0, 1.0));
      out[plane + idx] = static_cast<real>(std::clamp(gg, 0.0, 1.0));
      out[2 * plane + idx] = static_cast<real>(std::clamp(bb, 0.0, 1.0));
    }
  }
  return Tensor::from(s, std::move(out));
}

Sample augment(const Sample& s, const AugmentOps& ops) {
  if (ops.gamma && !(*ops.gamma > 0)) throw ConfigError("augment: gamma must be positive");
  if (ops.clahe && !(ops.clahe->clip_limit >= 1.0)) throw ConfigError("augment: CLAHE clip must be >= 1");
  if (ops.clahe && ops.clahe->tiles < 1) throw ConfigError("augment: CLAHE tiles must be >= 1");
  Sample out;
  out.id = s.id;
  out.image = flip(s.image, ops.hflip, ops.vflip);
  if (s.mask.defined()) out.mask = flip(s.mask, ops.hflip, ops.vflip);
  if (ops.gamma) out.image = apply_gamma(out.image, *ops.gamma);
  if (ops.clahe) out.image = clahe(out.image, *ops.clahe);
  return out;
}

std::vector<AugmentOps> expansion_recipes(Rng& rng) {
  std::vector<AugmentOps> recipes;
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kAugmentGammas) - 1);
  for (int f = 0; f < 4; ++f) {
    AugmentOps with_gamma{(f & 1) != 0, (f & 2) != 0, kAugmentGammas[pick(rng)], std::nullopt};
    AugmentOps with_clahe{(f & 1) != 0, (f & 2) != 0, std::nullopt, ClaheParams{}};
    recipes.push_back(with_gamma);
    recipes.push_back(with_clahe);
  }
  return recipes;
}

std::vector<Sample> expand_dataset(const std::vector<Sample>& samples, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(samples.size() * 8);
  for (const auto& s : samples) {
    for (const auto& ops : expansion_recipes(rng)) {
      Sample a = augment(s, ops);
      a.id = s.id + "_" + ops.label();
      out.push_back(std::move(a));
    }
  }
  return out;
}

bool ellipse_contains(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return u * u + v * v <= 1.0;
}

namespace {

// Normalised radius: 1 on the boundary.
double ellipse_radius(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return std::sqrt(u * u + v * v);
}

}  // namespace

std::vector<SyntheticSample> synthesize_disk_dataset(std::size_t n, std::size_t size,
                                                     std::uint64_t seed) {
  if (n == 0) throw ConfigError("synthesize_disk_dataset: n must be positive");
  if (size < 16) throw ConfigError("synthesize_disk_dataset: size must be at least 16");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.04);
  const double sz = static_cast<double>(size);
  const std::size_t plane = size * size;

  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    SyntheticSample smp;
    const std::array<double, 3> skin = {0.75 + 0.15 * unit(rng), 0.55 + 0.15 * unit(rng),
                                        0.45 + 0.15 * unit(rng)};
    const std::size_t count = unit(rng) < 0.5 ? 1 : 2;
    std::vector<std::array<double, 3>> colors;
    for (std::size_t l = 0; l < count; ++l) {
      Ellipse e;
      e.a = sz * (0.10 + 0.15 * unit(rng));
      e.b = sz * (0.10 + 0.15 * unit(rng));
      e.theta = std::numbers::pi * unit(rng);
      e.cx = sz * (0.25 + 0.5 * unit(rng));
      e.cy = sz * (0.25 + 0.5 * unit(rng));
      const double shade = 0.15 + 0.25 * unit(rng);
      colors.push_back({shade + 0.15, shade + 0.05 * unit(rng), shade * 0.8});
      smp.lesions.push_back(e);
    }

    std::vector<real> img(3 * plane), mask(plane, real(0));
    const double edge = 0.06 + 0.06 * unit(rng);  // softness in normalised radius
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double py = static_cast<double>(y) + 0.5;
        std::array<double, 3> rgb = skin;
        for (std::size_t l = 0; l < count; ++l) {
          const double rad = ellipse_radius(smp.lesions[l], px, py);
          const double w = 1.0 / (1.0 + std::exp((rad - 1.0) / edge * 4.0));
          for (int c = 0; c < 3; ++c) rgb[c] = (1 - w) * rgb[c] + w * colors[l][c];
          if (ellipse_contains(smp.lesions[l], px, py)) mask[y * size + x] = 1;
        }
        for (int c = 0; c < 3; ++c) {
          img[c * plane + y * size + x] = static_cast<real>(std::clamp(rgb[c] + noise(rng), 0.0, 1.0));
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", k);
    smp.sample.id = id;
    smp.sample.image = Tensor::from(Shape{1, 3, size, size}, std::move(img));
    smp.sample.mask = Tensor::from(Shape{1, 1, size, size}, std::move(mask));
    out.push_back(std::move(smp));
  }
  return out;
}

std::vector<Sample> synthesize_samples(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::vector<Sample> out;
  for (auto& s : synthesize_disk_dataset(n, size, seed)) out.push_back(std::move(s.sample));
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   bool shuffle, Rng& rng) {
  if (count == 0) throw UsageError("make_batches: empty dataset");
  if (batch_size == 0) throw ConfigError("make_batches: batch size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return batches;
}

std::pair<Tensor, Tensor> collate(const std::vector<Sample>& samples,
                                  const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("collate: empty batch");
  const Shape is = samples.at(indices.front()).image.shape();
  const bool labeled = samples.at(indices.front()).mask.defined();
  std::vector<real> x, y;
  x.reserve(is.item() * indices.size());
  if (labeled) y.reserve(is.plane() * indices.size());
  for (std::size_t i : indices) {
    const Sample& s = samples.at(i);
    if (!(s.image.shape() == is)) throw DimensionError("collate: sample " + s.id + " has shape " + s.image.shape().str());
    x.insert(x.end(), s.image.data().begin(), s.image.data().end());
    if (labeled) {
      if (!s.mask.defined()) throw UsageError("collate: sample " + s.id + " has no mask");
      y.insert(y.end(), s.mask.data().begin(), s.mask.data().end());
    }
  }
  const std::size_t n = indices.size();
  Tensor xt = Tensor::from(Shape{n, is.c, is.h, is.w}, std::move(x));
  Tensor yt = labeled ? Tensor::from(Shape{n, 1, is.h, is.w}, std::move(y)) : Tensor{};
  return {xt, yt};
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
      cols.push_back(line.substr(start, tab - start));
    cols.push_back(line.substr(start));
    if (cols.size() < 2 || cols.size() > 3 || cols[0].empty() || cols[1].empty()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected image<TAB>mask[<TAB>note]");
    }
    ManifestEntry e;
    e.image = resolve(cols[0]);
    if (cols[1] != "-") e.mask = resolve(cols[1]);
    if (cols.size() == 3) e.note = cols[2];
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  auto rel = [&](const fs::path& p) {
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path r = abs.lexically_relative(base);
    return (r.empty() ? abs : r).string();
  };
  for (const auto& e : entries) {
    out << rel(e.image) << '\t' << (e.mask.empty() ? std::string("-") : rel(e.mask));
    if (!e.note.empty()) out << '\t' << e.note;
    out << '\n';
  }
  if (!out) throw IoError("cannot write manifest " + path.string());
}

std::vector<Sample> load_manifest(const fs::path& path, std::size_t target_size) {
  std::vector<Sample> samples;
  for (const auto& e : read_manifest(path)) samples.push_back(load_sample(e.image, e.mask, target_size));
  return samples;
}

}  // namespace slsnet
