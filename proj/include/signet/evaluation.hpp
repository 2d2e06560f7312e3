#pragma once

// Verification metrics over embedding distances. A pair is accepted as
// similar when D <= d. Accuracy is the best balanced accuracy
// 0.5 * (TPR(d) + TNR(d)) over a threshold sweep from the smallest to the
// largest observed distance.

#include <limits>
#include <optional>

#include "signet/data.hpp"
#include "signet/model.hpp"

namespace signet {

struct DistanceRecord {
  std::size_t pair_index = 0;
  int y = 0;  // 0 similar, 1 dissimilar
  double distance = 0;
};

struct SweepPoint {
  double threshold = 0;
  double tpr = 0;
  double tnr = 0;
};

struct EvalReport {
  double threshold = 0;  // d*
  double accuracy = 0;
  double far = 0;
  double frr = 0;
  std::size_t n_similar = 0;
  std::size_t n_dissimilar = 0;
  std::vector<SweepPoint> curve;
};

/// Infer-mode distances for each pair, in input order. Each distinct image is
/// embedded once.
template <std::floating_point T>
std::vector<DistanceRecord> compute_distances(const Model<T>& model, const std::vector<PairSample>& pairs,
                                              const std::vector<Tensor<float>>& images, std::size_t batch = 64) {
  const auto& cfg = model.config();
  std::vector<std::size_t> needed;
  for (const auto& p : pairs) {
    needed.push_back(p.image_a);
    needed.push_back(p.image_b);
  }
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  for (auto i : needed) {
    const auto& img = images.at(i);
    if (img.rank() != 3 || img.dim(1) != cfg.input_height || img.dim(2) != cfg.input_width) {
      fail("compute_distances: image ", i, " has shape ", shape_str(img.shape()), ", model expects [1,",
           cfg.input_height, ",", cfg.input_width, "]");
    }
  }
  std::unordered_map<std::size_t, std::vector<double>> emb;
  for (std::size_t s = 0; s < needed.size(); s += batch) {
    std::vector<std::size_t> chunk(needed.begin() + static_cast<std::ptrdiff_t>(s),
                                   needed.begin() + static_cast<std::ptrdiff_t>(std::min(needed.size(), s + batch)));
    const auto e = embed(model, stack_images<T>(images, chunk), Mode::infer);
    const std::size_t dim = e.dim(1);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      emb[chunk[r]] = std::vector<double>(e.data().begin() + static_cast<std::ptrdiff_t>(r * dim),
                                          e.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
    }
  }
  std::vector<DistanceRecord> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& a = emb.at(pairs[i].image_a);
    const auto& b = emb.at(pairs[i].image_b);
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    out.push_back({i, pairs[i].y, std::sqrt(s)});
  }
  return out;
}

namespace detail {

struct ClassDistances {
  std::vector<double> similar;
  std::vector<double> dissimilar;
};

inline ClassDistances split_classes(const std::vector<DistanceRecord>& records) {
  ClassDistances c;
  for (const auto& r : records) {
    if (r.y != 0 && r.y != 1) fail("evaluation: label ", r.y, " is not 0 or 1");
    if (!(r.distance >= 0)) fail("evaluation: invalid distance ", r.distance);
    (r.y == 0 ? c.similar : c.dissimilar).push_back(r.distance);
  }
  if (c.similar.empty() || c.dissimilar.empty()) {
    fail("evaluation: need both similar and dissimilar pairs (got ", c.similar.size(), " similar, ",
         c.dissimilar.size(), " dissimilar)");
  }
  std::sort(c.similar.begin(), c.similar.end());
  std::sort(c.dissimilar.begin(), c.dissimilar.end());
  return c;
}

inline double fraction_at_most(const std::vector<double>& sorted, double d) {
  const auto n = std::upper_bound(sorted.begin(), sorted.end(), d) - sorted.begin();
  return static_cast<double>(n) / static_cast<double>(sorted.size());
}

}  // namespace detail

/// (FAR, FRR) at threshold d: accepted dissimilar fraction, rejected similar fraction.
inline std::pair<double, double> far_frr(const std::vector<DistanceRecord>& records, double d) {
  const auto c = detail::split_classes(records);
  return {detail::fraction_at_most(c.dissimilar, d), 1.0 - detail::fraction_at_most(c.similar, d)};
}

/// Sweep d = min, min + step, ... up to and including max. Ties in accuracy
/// keep the smallest d.
inline EvalReport threshold_sweep(const std::vector<DistanceRecord>& records, double step = 0.01) {
  if (!(step > 0)) fail("threshold_sweep: step must be positive");
  const auto c = detail::split_classes(records);
  const double lo = std::min(c.similar.front(), c.dissimilar.front());
  const double hi = std::max(c.similar.back(), c.dissimilar.back());
  EvalReport report;
  report.n_similar = c.similar.size();
  report.n_dissimilar = c.dissimilar.size();
  report.accuracy = -1;
  auto visit = [&](double d) {
    const double tpr = detail::fraction_at_most(c.similar, d);
    const double tnr = 1.0 - detail::fraction_at_most(c.dissimilar, d);
    report.curve.push_back({d, tpr, tnr});
    const double acc = 0.5 * (tpr + tnr);
    if (acc > report.accuracy) {
      report.accuracy = acc;
      report.threshold = d;
      report.far = 1.0 - tnr;
      report.frr = 1.0 - tpr;
    }
  };
  for (std::size_t k = 0;; ++k) {
    const double d = lo + static_cast<double>(k) * step;
    if (d >= hi) break;
    visit(d);
  }
  visit(hi);
  return report;
}

inline std::string format_report(const EvalReport& r) {
  return format_key_values({
      {"accuracy", format_double(r.accuracy)},
      {"far", format_double(r.far)},
      {"frr", format_double(r.frr)},
      {"threshold", format_double(r.threshold)},
      {"similar_pairs", std::to_string(r.n_similar)},
      {"dissimilar_pairs", std::to_string(r.n_dissimilar)},
      {"sweep_points", std::to_string(r.curve.size())},
  });
}

/// Tab-separated `d TPR TNR` rows with a header line.
inline std::string format_sweep_curve(const EvalReport& r) {
  std::string out = "d\tTPR\tTNR\n";
  for (const auto& p : r.curve) {
    out += format_double(p.threshold) + "\t" + format_double(p.tpr) + "\t" + format_double(p.tnr) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-dataset matrix: rows are the models' training corpora, columns the
// test corpora.
// ---------------------------------------------------------------------------

struct NamedModel {
  std::string name;
  const Model<float>* model = nullptr;
  double input_std = 1.0;  // normalization frozen from the model's training writers
};

struct NamedTestSet {
  std::string name;
  const DatasetIndex* index = nullptr;
  std::vector<PairSample> pairs;
  std::string error;  // non-empty: the test set could not be built
};

struct CrossMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<std::optional<double>>> accuracy;
  std::vector<std::vector<std::string>> errors;
};

/// Each cell is threshold_sweep accuracy of a model on a test set. A failing
/// cell records its error and the remaining cells are still computed.
inline CrossMatrix cross_dataset_matrix(const std::vector<NamedModel>& models,
                                        const std::vector<NamedTestSet>& tests, double step = 0.01) {
  CrossMatrix m;
  for (const auto& nm : models) m.rows.push_back(nm.name);
  for (const auto& t : tests) m.cols.push_back(t.name);
  m.accuracy.assign(models.size(), std::vector<std::optional<double>>(tests.size()));
  m.errors.assign(models.size(), std::vector<std::string>(tests.size()));
  for (std::size_t r = 0; r < models.size(); ++r) {
    for (std::size_t c = 0; c < tests.size(); ++c) {
      try {
        if (!tests[c].error.empty()) fail(tests[c].error);
        if (!models[r].model || !tests[c].index) fail("missing model or dataset");
        const auto& cfg = models[r].model->config();
        const auto images = preprocess_all(*tests[c].index, cfg.input_height, cfg.input_width, models[r].input_std);
        const auto records = compute_distances(*models[r].model, tests[c].pairs, images);
        m.accuracy[r][c] = threshold_sweep(records, step).accuracy;
      } catch (const std::exception& e) {
        m.errors[r][c] = e.what();
      }
    }
  }
  return m;
}

/// Tab-separated grid; failed cells print as "ERR".
inline std::string format_matrix(const CrossMatrix& m) {
  std::string out = "train\\test";
  for (const auto& c : m.cols) out += "\t" + c;
  out += "\n";
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    out += m.rows[r];
    for (std::size_t c = 0; c < m.cols.size(); ++c) {
      char buf[32];
      if (m.accuracy[r][c]) {
        std::snprintf(buf, sizeof buf, "%.4f", *m.accuracy[r][c]);
      } else {
        std::snprintf(buf, sizeof buf, "ERR");
      }
      out += std::string("\t") + buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace signet
