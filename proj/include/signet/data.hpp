#pragma once

// Dataset indexing, preprocessing and the writer-independent pair protocol.
//
// Layout on disk: <root>/<writer_id>/genuine/*.png|*.pgm and
// <root>/<writer_id>/forged/*.png|*.pgm.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "signet/image.hpp"
#include "signet/tensor.hpp"

namespace signet {

enum class SampleLabel { genuine, forged };
enum class PairingMode { skilled, unskilled };

inline std::string_view to_string(PairingMode m) { return m == PairingMode::skilled ? "skilled" : "unskilled"; }

inline PairingMode pairing_mode_from(std::string_view s) {
  if (s == "skilled") return PairingMode::skilled;
  if (s == "unskilled") return PairingMode::unskilled;
  fail("pairing mode must be 'skilled' or 'unskilled', got '", s, "'");
}

struct SignatureImage {
  GrayImage pixels;
  std::string writer_id;
  SampleLabel label = SampleLabel::genuine;
  std::string source_path;
};

struct WriterEntry {
  std::string id;
  std::vector<std::size_t> genuine;  // indices into DatasetIndex::images
  std::vector<std::size_t> forged;
};

struct DatasetIndex {
  std::string name;
  std::vector<SignatureImage> images;
  std::vector<WriterEntry> writers;  // sorted by id

  const WriterEntry& writer(std::string_view id) const {
    for (const auto& w : writers) {
      if (w.id == id) return w;
    }
    fail("dataset '", name, "': unknown writer '", id, "'");
  }
  std::vector<std::string> writer_ids() const {
    std::vector<std::string> ids;
    for (const auto& w : writers) ids.push_back(w.id);
    return ids;
  }
  std::size_t genuine_count() const {
    std::size_t n = 0;
    for (const auto& w : writers) n += w.genuine.size();
    return n;
  }
  std::size_t forged_count() const {
    std::size_t n = 0;
    for (const auto& w : writers) n += w.forged.size();
    return n;
  }
};

/// Error carrying one line per problem found while indexing a dataset.
class DatasetError : public Error {
 public:
  explicit DatasetError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s = "dataset validation failed:";
    for (const auto& x : p) s += "\n  - " + x;
    return s;
  }
  std::vector<std::string> problems_;
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_path(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Scans and decodes a dataset. Every writer needs a genuine/ directory with
/// at least 2 images; all problems are collected before failing.
inline DatasetIndex load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<std::string> problems;
  if (!fs::is_directory(root)) throw DatasetError({root.string() + ": not a directory"});
  DatasetIndex index;
  index.name = root.filename().empty() ? root.parent_path().filename().string() : root.filename().string();

  std::vector<fs::path> writer_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) writer_dirs.push_back(e.path());
  }
  std::sort(writer_dirs.begin(), writer_dirs.end());
  if (writer_dirs.empty()) throw DatasetError({root.string() + ": no writer directories"});

  for (const auto& wdir : writer_dirs) {
    WriterEntry w;
    w.id = wdir.filename().string();
    if (!fs::is_directory(wdir / "genuine")) {
      problems.push_back("writer '" + w.id + "': missing genuine/ directory");
      continue;
    }
    for (auto label : {SampleLabel::genuine, SampleLabel::forged}) {
      const auto sub = wdir / (label == SampleLabel::genuine ? "genuine" : "forged");
      if (!fs::is_directory(sub)) continue;
      for (const auto& p : detail::sorted_images(sub)) {
        try {
          index.images.push_back({read_image(p), w.id, label, p.string()});
          (label == SampleLabel::genuine ? w.genuine : w.forged).push_back(index.images.size() - 1);
        } catch (const Error& e) {
          problems.push_back(e.what());
        }
      }
    }
    if (w.genuine.size() < 2) {
      problems.push_back(concat("writer '", w.id, "': needs at least 2 genuine images, found ", w.genuine.size()));
    }
    index.writers.push_back(std::move(w));
  }
  if (!problems.empty()) throw DatasetError(std::move(problems));
  return index;
}

/// Bilinear resize with half-pixel centres (src = (dst + 0.5) * scale - 0.5),
/// edge-clamped.
inline std::vector<float> resize_bilinear(const GrayImage& img, std::size_t out_h, std::size_t out_w) {
  if (img.empty() || img.height == 0 || img.width == 0) fail("resize: zero-area image");
  if (out_h == 0 || out_w == 0) fail("resize: zero-area target");
  std::vector<float> out(out_h * out_w);
  const double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
  auto coord = [](std::size_t dst, double scale, std::size_t extent) {
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    const auto i0 = static_cast<std::size_t>(src);
    const auto i1 = std::min(i0 + 1, extent - 1);
    return std::tuple{i0, i1, src - static_cast<double>(i0)};
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = coord(y, sy, img.height);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = coord(x, sx, img.width);
      const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
      const double bottom = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
      out[y * out_w + x] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
    }
  }
  return out;
}

/// Resized and inverted pixels (background 0, ink up to 255), before scaling.
inline std::vector<float> resize_and_invert(const GrayImage& img, std::size_t h, std::size_t w) {
  auto v = resize_bilinear(img, h, w);
  for (auto& x : v) x = 255.0f - x;
  return v;
}

/// Population standard deviation of all resized+inverted pixels of the given
/// writers' images (genuine and forged).
inline double dataset_std(const DatasetIndex& index, const std::vector<std::string>& writers, std::size_t h,
                          std::size_t w) {
  if (writers.empty()) fail("dataset_std: empty writer subset");
  // Shifted single-pass sums; the shift keeps the variance well conditioned.
  double count = 0, s1 = 0, s2 = 0;
  bool have_shift = false;
  double shift = 0;
  for (const auto& id : writers) {
    const auto& wr = index.writer(id);
    for (const auto* list : {&wr.genuine, &wr.forged}) {
      for (auto i : *list) {
        for (float v : resize_and_invert(index.images[i].pixels, h, w)) {
          if (!have_shift) {
            shift = v;
            have_shift = true;
          }
          const double d = v - shift;
          s1 += d;
          s2 += d * d;
          count += 1;
        }
      }
    }
  }
  if (count == 0) fail("dataset_std: subset has no images");
  const double var = std::max(0.0, s2 / count - (s1 / count) * (s1 / count));
  const double sd = std::sqrt(var);
  if (!(sd > 0)) fail("dataset_std: pixel standard deviation is zero (constant images)");
  return sd;
}

/// resize -> invert -> divide by the dataset std; returns [1, h, w].
inline Tensor<float> preprocess(const GrayImage& img, std::size_t h, std::size_t w, double std_dev) {
  if (!(std_dev > 0)) fail("preprocess: std must be positive");
  auto v = resize_and_invert(img, h, w);
  const float inv = static_cast<float>(1.0 / std_dev);
  for (auto& x : v) x *= inv;
  return Tensor<float>({1, h, w}, std::move(v));
}

struct SplitSpec {
  std::size_t total_writers = 0;     // K
  std::size_t training_writers = 0;  // M
  std::uint64_t seed = 0;
};

struct WriterSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded uniform choice of M of the K writers for training; the rest test.
inline WriterSplit split_writers(const DatasetIndex& index, const SplitSpec& spec) {
  if (index.writers.size() != spec.total_writers) {
    fail("split: dataset has ", index.writers.size(), " writers, split expects K=", spec.total_writers);
  }
  if (spec.training_writers == 0 || spec.training_writers >= spec.total_writers) {
    fail("split: need 0 < M < K, got M=", spec.training_writers, " K=", spec.total_writers);
  }
  auto ids = index.writer_ids();
  Rng rng(derive_seed(spec.seed, "writer-split"));
  shuffle(ids.begin(), ids.end(), rng);
  WriterSplit out;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(spec.training_writers));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(spec.training_writers), ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

/// y = 0: similar (genuine, genuine); y = 1: dissimilar.
struct PairSample {
  std::size_t image_a = 0;  // indices into DatasetIndex::images
  std::size_t image_b = 0;
  int y = 0;
  std::string writer_id;
  PairingMode mode = PairingMode::skilled;
};

namespace detail {

/// k distinct indices from [0, n) in sampling order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace detail

inline std::size_t similar_pair_count(std::size_t genuine) { return genuine * (genuine - 1) / 2; }

/// All C(G,2) genuine-genuine pairs plus an equal-sized random draw of
/// dissimilar pairs. Skilled: (genuine, forged of the same writer), G*F
/// candidates. Unskilled: (genuine, genuine of another writer in `others`).
/// When fewer dissimilar candidates exist than similar pairs, the similar set is
/// down-sampled to match.
inline std::vector<PairSample> generate_pairs(const DatasetIndex& index, const std::string& writer_id,
                                              PairingMode mode, std::uint64_t seed,
                                              const std::vector<std::string>* others = nullptr) {
  const auto& w = index.writer(writer_id);
  const std::size_t G = w.genuine.size();
  if (G < 2) fail("generate_pairs: writer '", writer_id, "' has ", G, " genuine images, need 2");

  std::vector<std::size_t> negatives;
  if (mode == PairingMode::skilled) {
    negatives = w.forged;
  } else {
    for (const auto& other : index.writers) {
      if (other.id == writer_id) continue;
      if (others && std::find(others->begin(), others->end(), other.id) == others->end()) continue;
      negatives.insert(negatives.end(), other.genuine.begin(), other.genuine.end());
    }
  }
  if (negatives.empty()) {
    fail("generate_pairs: writer '", writer_id, "' has no ",
         mode == PairingMode::skilled ? "forged images" : "other writers' genuine images", " for dissimilar pairs");
  }

  Rng rng(derive_seed(seed, writer_id));
  std::vector<std::pair<std::size_t, std::size_t>> similar;
  for (std::size_t i = 0; i < G; ++i) {
    for (std::size_t j = i + 1; j < G; ++j) similar.emplace_back(w.genuine[i], w.genuine[j]);
  }
  const std::size_t candidates = G * negatives.size();
  const std::size_t n = std::min(similar.size(), candidates);
  if (n < similar.size()) {
    auto keep = detail::sample_without_replacement(similar.size(), n, rng);
    std::sort(keep.begin(), keep.end());
    std::vector<std::pair<std::size_t, std::size_t>> reduced;
    for (auto k : keep) reduced.push_back(similar[k]);
    similar = std::move(reduced);
  }

  std::vector<PairSample> out;
  out.reserve(2 * n);
  for (const auto& [a, b] : similar) out.push_back({a, b, 0, writer_id, mode});
  for (auto c : detail::sample_without_replacement(candidates, n, rng)) {
    out.push_back({w.genuine[c / negatives.size()], negatives[c % negatives.size()], 1, writer_id, mode});
  }
  return out;
}

/// Number of dissimilar candidates available to a writer in the given mode.
inline std::size_t dissimilar_candidates(const DatasetIndex& index, const std::string& writer_id, PairingMode mode) {
  const auto& w = index.writer(writer_id);
  if (mode == PairingMode::skilled) return w.genuine.size() * w.forged.size();
  std::size_t others = 0;
  for (const auto& o : index.writers) {
    if (o.id != writer_id) others += o.genuine.size();
  }
  return w.genuine.size() * others;
}

struct Protocol {
  WriterSplit split;
  std::vector<PairSample> train;
  std::vector<PairSample> test;
};

/// Pairs for the train writers (in `mode`) and test writers (always skilled).
/// Unskilled negatives for training are drawn from training writers only.
inline Protocol build_protocol(const DatasetIndex& index, const SplitSpec& spec, PairingMode mode) {
  Protocol p;
  p.split = split_writers(index, spec);
  for (const auto& id : p.split.train) {
    auto pairs = generate_pairs(index, id, mode, spec.seed, &p.split.train);
    p.train.insert(p.train.end(), pairs.begin(), pairs.end());
  }
  for (const auto& id : p.split.test) {
    auto pairs = generate_pairs(index, id, PairingMode::skilled, spec.seed);
    p.test.insert(p.test.end(), pairs.begin(), pairs.end());
  }
  return p;
}

/// One line per pair: path_a <TAB> path_b <TAB> y <TAB> writer_id.
inline std::string format_pair_manifest(const DatasetIndex& index, const std::vector<PairSample>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    out += index.images[p.image_a].source_path + "\t" + index.images[p.image_b].source_path + "\t" +
           std::to_string(p.y) + "\t" + p.writer_id + "\n";
  }
  return out;
}

/// Preprocessed [1,h,w] tensor for every image of the index.
inline std::vector<Tensor<float>> preprocess_all(const DatasetIndex& index, std::size_t h, std::size_t w,
                                                 double std_dev) {
  std::vector<Tensor<float>> out(index.images.size());
  parallel_for(index.images.size(),
               [&](std::size_t i) { out[i] = preprocess(index.images[i].pixels, h, w, std_dev); });
  return out;
}

/// Stacks the given [1,H,W] images into [N,1,H,W].
template <std::floating_point T>
Tensor<T> stack_images(const std::vector<Tensor<float>>& images, const std::vector<std::size_t>& which) {
  if (which.empty()) fail("stack_images: empty batch");
  const auto& first = images.at(which.front());
  const std::size_t h = first.dim(1), w = first.dim(2);
  std::vector<T> v;
  v.reserve(which.size() * h * w);
  for (auto i : which) {
    const auto& img = images.at(i);
    if (img.dim(1) != h || img.dim(2) != w) fail("stack_images: images differ in size");
    v.insert(v.end(), img.data().begin(), img.data().end());
  }
  return Tensor<T>({which.size(), 1, h, w}, std::move(v));
}

}  // namespace signet
