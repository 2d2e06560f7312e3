#pragma once

// Procedural signature corpus. Each writer is a set of cubic Bezier stroke
// chains; genuine samples jitter the control points slightly, forgeries are
// stronger perturbations of the same writer's template.

#include <filesystem>

#include "signet/checkpoint.hpp"
#include "signet/data.hpp"
#include "signet/keyvalue.hpp"

namespace signet {

inline constexpr int kSynthGeneratorVersion = 1;

struct Point2 {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Stroke {
  std::vector<Point2> control;  // 3k + 1 points: k chained cubic segments
  double width = 1.0;           // relative to image height
  friend bool operator==(const Stroke&, const Stroke&) = default;
};

struct WriterTemplate {
  std::uint64_t seed = 0;
  std::vector<Stroke> strokes;
  double slant = 0.0;  // horizontal shear applied at render time
  friend bool operator==(const WriterTemplate&, const WriterTemplate&) = default;
};

/// Knobs that give a corpus its overall look.
struct StrokeStyle {
  std::size_t min_strokes = 3;
  std::size_t max_strokes = 5;
  std::size_t min_segments = 2;
  std::size_t max_segments = 4;
  double min_width = 0.035;
  double max_width = 0.055;
  double max_slant = 0.25;
  double vertical_spread = 0.30;  // amplitude of the stroke wander around the baseline
  // Per-sample variation shared by genuine and forged renders.
  double width_jitter = 0.0;  // relative std of stroke width
  double shift_jitter = 0.0;  // std of a global translation (normalized units)
};

struct CorpusSpec {
  std::size_t num_writers = 10;
  std::size_t genuine_per_writer = 24;
  std::size_t forged_per_writer = 30;
  std::size_t height = 64;
  std::size_t width = 96;
  double genuine_jitter = 0.006;
  double forgery_amplitude = 0.06;
  double forgery_pen_scale = 1.0;  // forgers' pen width relative to the writer's
  std::uint64_t seed = 1;
  StrokeStyle style{};
};

inline WriterTemplate gen_writer(std::uint64_t seed, const StrokeStyle& style = {}) {
  Rng rng(derive_seed(seed, "writer-template"));
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  auto count = [&](std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); };

  WriterTemplate t;
  t.seed = seed;
  t.slant = uniform(-style.max_slant, style.max_slant);
  const std::size_t n_strokes = std::max<std::size_t>(3, count(style.min_strokes, style.max_strokes));
  // Strokes occupy consecutive horizontal bands with some overlap, like words.
  const double band = 0.8 / static_cast<double>(n_strokes);
  const double baseline = uniform(0.4, 0.6);
  for (std::size_t s = 0; s < n_strokes; ++s) {
    Stroke stroke;
    stroke.width = uniform(style.min_width, style.max_width);
    const std::size_t segments = count(style.min_segments, style.max_segments);
    const double x0 = 0.1 + band * static_cast<double>(s) - 0.15 * band;
    const double x1 = x0 + 1.3 * band;
    const std::size_t points = 3 * segments + 1;
    for (std::size_t i = 0; i < points; ++i) {
      const double progress = static_cast<double>(i) / static_cast<double>(points - 1);
      Point2 p;
      p.x = std::clamp(x0 + (x1 - x0) * progress + uniform(-0.6, 0.6) * band, 0.02, 0.98);
      p.y = std::clamp(baseline + uniform(-style.vertical_spread, style.vertical_spread), 0.02, 0.98);
      stroke.control.push_back(p);
    }
    t.strokes.push_back(std::move(stroke));
  }
  return t;
}

namespace detail {

inline Point2 cubic(const Point2& p0, const Point2& p1, const Point2& p2, const Point2& p3, double t) {
  const double u = 1 - t;
  const double a = u * u * u, b = 3 * u * u * t, c = 3 * u * t * t, d = t * t * t;
  return {a * p0.x + b * p1.x + c * p2.x + d * p3.x, a * p0.y + b * p1.y + c * p2.y + d * p3.y};
}

/// Max-coverage anti-aliased thick line from a to b, in pixel coordinates.
inline void stamp_segment(std::vector<double>& ink, std::size_t h, std::size_t w, Point2 a, Point2 b,
                          double radius) {
  const double reach = radius + 1.0;
  const auto x_lo = static_cast<long>(std::floor(std::min(a.x, b.x) - reach));
  const auto x_hi = static_cast<long>(std::ceil(std::max(a.x, b.x) + reach));
  const auto y_lo = static_cast<long>(std::floor(std::min(a.y, b.y) - reach));
  const auto y_hi = static_cast<long>(std::ceil(std::max(a.y, b.y) + reach));
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  for (long y = std::max(0L, y_lo); y <= std::min(static_cast<long>(h) - 1, y_hi); ++y) {
    for (long x = std::max(0L, x_lo); x <= std::min(static_cast<long>(w) - 1, x_hi); ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = a.x + t * dx - px, ey = a.y + t * dy - py;
      const double cover = std::clamp(radius + 0.5 - std::sqrt(ex * ex + ey * ey), 0.0, 1.0);
      double& cell = ink[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
      cell = std::max(cell, cover);
    }
  }
}

}  // namespace detail

/// Renders one sample: white background (255), dark anti-aliased ink. Control
/// points get Gaussian jitter of the given amplitude (normalized units). The
/// drawing area leaves a margin so image corners stay background.
inline GrayImage render_sample(const WriterTemplate& t, double amplitude, Rng& rng, std::size_t height,
                               std::size_t width, const StrokeStyle& style = {}, double pen_scale = 1.0) {
  if (height < 32 || width < 32) fail("render_sample: image must be at least 32x32, got ", height, "x", width);
  const double shift_x = style.shift_jitter > 0 ? style.shift_jitter * gaussian(rng) : 0.0;
  const double shift_y = style.shift_jitter > 0 ? style.shift_jitter * gaussian(rng) : 0.0;
  const double margin = 0.08;
  const double span_x = (1 - 2 * margin) * static_cast<double>(width);
  const double span_y = (1 - 2 * margin) * static_cast<double>(height);
  auto to_pixels = [&](Point2 p) {
    p.x += t.slant * (0.5 - p.y);
    p.x = std::clamp(p.x + shift_x, 0.0, 1.0);
    p.y = std::clamp(p.y + shift_y, 0.0, 1.0);
    return Point2{margin * static_cast<double>(width) + p.x * span_x,
                  margin * static_cast<double>(height) + p.y * span_y};
  };

  std::vector<double> ink(height * width, 0.0);
  for (const auto& stroke : t.strokes) {
    std::vector<Point2> ctrl = stroke.control;
    if (amplitude > 0) {
      for (auto& p : ctrl) {
        p.x += amplitude * gaussian(rng);
        p.y += amplitude * gaussian(rng);
      }
    }
    double w = stroke.width * pen_scale;
    if (style.width_jitter > 0) w *= std::max(0.3, 1.0 + style.width_jitter * gaussian(rng));
    const double radius = std::max(0.5, 0.5 * w * static_cast<double>(height));
    for (std::size_t s = 0; s + 3 < ctrl.size(); s += 3) {
      const Point2 p0 = to_pixels(ctrl[s]), p1 = to_pixels(ctrl[s + 1]), p2 = to_pixels(ctrl[s + 2]),
                   p3 = to_pixels(ctrl[s + 3]);
      const double approx_len = std::hypot(p1.x - p0.x, p1.y - p0.y) + std::hypot(p2.x - p1.x, p2.y - p1.y) +
                                std::hypot(p3.x - p2.x, p3.y - p2.y);
      const auto steps = std::max<std::size_t>(4, static_cast<std::size_t>(approx_len));
      Point2 prev = p0;
      for (std::size_t k = 1; k <= steps; ++k) {
        const Point2 cur = detail::cubic(p0, p1, p2, p3, static_cast<double>(k) / static_cast<double>(steps));
        detail::stamp_segment(ink, height, width, prev, cur, radius);
        prev = cur;
      }
    }
  }
  GrayImage img(height, width);
  for (std::size_t i = 0; i < ink.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - ink[i])));
  }
  return img;
}

inline std::string writer_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%03zu", i);
  return buf;
}

inline std::uint64_t writer_seed(const CorpusSpec& spec, std::size_t i) {
  return derive_seed(spec.seed, writer_name(i));
}

/// Renders sample `i` of one writer; forged samples use the forgery amplitude.
inline GrayImage render_corpus_sample(const CorpusSpec& spec, const WriterTemplate& t, SampleLabel label,
                                      std::size_t i) {
  const bool forged = label == SampleLabel::forged;
  Rng rng(derive_seed(t.seed, (forged ? 1'000'000ULL : 0ULL) + i));
  return render_sample(t, forged ? spec.forgery_amplitude : spec.genuine_jitter, rng, spec.height, spec.width,
                       spec.style, forged ? spec.forgery_pen_scale : 1.0);
}

inline std::string format_corpus_meta(const CorpusSpec& spec) {
  const auto& s = spec.style;
  return format_key_values({
      {"generator_version", std::to_string(kSynthGeneratorVersion)},
      {"seed", std::to_string(spec.seed)},
      {"num_writers", std::to_string(spec.num_writers)},
      {"genuine_per_writer", std::to_string(spec.genuine_per_writer)},
      {"forged_per_writer", std::to_string(spec.forged_per_writer)},
      {"height", std::to_string(spec.height)},
      {"width", std::to_string(spec.width)},
      {"genuine_jitter", format_double(spec.genuine_jitter)},
      {"forgery_amplitude", format_double(spec.forgery_amplitude)},
      {"forgery_pen_scale", format_double(spec.forgery_pen_scale)},
      {"style.strokes", concat(s.min_strokes, "-", s.max_strokes)},
      {"style.segments", concat(s.min_segments, "-", s.max_segments)},
      {"style.width", concat(format_double(s.min_width), "-", format_double(s.max_width))},
      {"style.max_slant", format_double(s.max_slant)},
      {"style.vertical_spread", format_double(s.vertical_spread)},
      {"style.width_jitter", format_double(s.width_jitter)},
      {"style.shift_jitter", format_double(s.shift_jitter)},
  });
}

struct CorpusSummary {
  std::size_t files = 0;      // image files
  std::size_t written = 0;    // new or changed files, manifest included
  std::size_t unchanged = 0;  // already present with identical bytes
};

/// Writes <out>/<writer>/{genuine,forged}/*.pgm and <out>/corpus.meta. Files
/// whose bytes already match are left untouched.
inline CorpusSummary gen_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (spec.num_writers == 0) fail("gen_corpus: num_writers must be positive");
  if (spec.genuine_per_writer < 2) fail("gen_corpus: need at least 2 genuine samples per writer");
  if (!(spec.forgery_pen_scale > 0)) fail("gen_corpus: forgery pen scale must be positive");
  if (spec.genuine_jitter < 0 || spec.forgery_amplitude < spec.genuine_jitter) {
    fail("gen_corpus: need 0 <= genuine jitter <= forgery amplitude");
  }
  if (spec.forgery_amplitude == spec.genuine_jitter && spec.forgery_pen_scale == 1.0) {
    fail("gen_corpus: forgeries would be drawn like genuine samples (raise the amplitude or change the pen scale)");
  }
  CorpusSummary summary;
  auto emit = [&](const fs::path& path, const std::string& bytes) {
    std::error_code ec;
    if (fs::exists(path, ec) && fs::file_size(path, ec) == bytes.size() && read_file(path) == bytes) {
      ++summary.unchanged;
      return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail("gen_corpus: cannot write '", path.string(), "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail("gen_corpus: write failed for '", path.string(), "'");
    ++summary.written;
  };
  auto make_dir = [](const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec || !fs::is_directory(p)) fail("gen_corpus: cannot create directory '", p.string(), "'");
  };

  make_dir(out_dir);
  for (std::size_t wi = 0; wi < spec.num_writers; ++wi) {
    const auto wdir = out_dir / writer_name(wi);
    make_dir(wdir / "genuine");
    make_dir(wdir / "forged");
    const auto tmpl = gen_writer(writer_seed(spec, wi), spec.style);
    char name[32];
    for (std::size_t i = 0; i < spec.genuine_per_writer; ++i) {
      std::snprintf(name, sizeof name, "g%02zu.pgm", i);
      ++summary.files;
      emit(wdir / "genuine" / name, encode_pgm(render_corpus_sample(spec, tmpl, SampleLabel::genuine, i)));
    }
    for (std::size_t i = 0; i < spec.forged_per_writer; ++i) {
      std::snprintf(name, sizeof name, "f%02zu.pgm", i);
      ++summary.files;
      emit(wdir / "forged" / name, encode_pgm(render_corpus_sample(spec, tmpl, SampleLabel::forged, i)));
    }
  }
  emit(out_dir / "corpus.meta", format_corpus_meta(spec));
  return summary;
}

}  // namespace signet
