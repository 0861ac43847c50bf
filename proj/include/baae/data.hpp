#pragma once

// Zero-shot datasets: in-memory model, portable on-disk format, feature
// normalization, class prototypes, and a seeded synthetic generator.
//
// On-disk layout of a dataset directory (see docs/dataset_format.md):
//   manifest.json   shapes, file names, normalization record
//   X.f64           N x p features, little-endian float64, row-major
//   A.f64           q x M class prototypes, little-endian float64, row-major
//   y.i32           N labels, little-endian int32
//   splits.json     seen/unseen class indices, train/test row indices

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "baae/error.hpp"
#include "baae/io.hpp"
#include "baae/rng.hpp"
#include "baae/tensor.hpp"

namespace baae {

enum class AttributeMode { ClassLevel, ImageAveraged };

inline std::string attribute_mode_name(AttributeMode m) {
  return m == AttributeMode::ClassLevel ? "class-level" : "image-averaged";
}

inline AttributeMode parse_attribute_mode(const std::string& s) {
  if (s == "class-level") return AttributeMode::ClassLevel;
  if (s == "image-averaged") return AttributeMode::ImageAveraged;
  throw DataError("attribute_mode", "unknown mode '" + s + "'");
}

enum class NormMode { PerDimension, PerVectorMax };

inline std::string norm_mode_name(NormMode m) {
  return m == NormMode::PerDimension ? "per-dimension" : "per-vector-max";
}

inline NormMode parse_norm_mode(const std::string& s) {
  if (s == "per-dimension") return NormMode::PerDimension;
  if (s == "per-vector-max") return NormMode::PerVectorMax;
  throw DataError("normalization.mode", "unknown mode '" + s + "'");
}

/// Column extrema fitted on training rows (per-dimension mode only).
struct NormRecord {
  NormMode mode = NormMode::PerDimension;
  std::vector<double> min;
  std::vector<double> max;

  friend bool operator==(const NormRecord&, const NormRecord&) = default;
};

struct ZslDataset {
  std::string name = "dataset";
  Tensor features;    // N x p
  Tensor prototypes;  // q x M
  std::vector<std::int32_t> labels;
  std::vector<std::int32_t> seen_classes;
  std::vector<std::int32_t> unseen_classes;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  AttributeMode attribute_mode = AttributeMode::ClassLevel;
  std::optional<NormRecord> normalization;

  std::size_t visual_dim() const { return features.cols(); }
  std::size_t semantic_dim() const { return prototypes.rows(); }
  std::size_t num_classes() const { return prototypes.cols(); }
  std::size_t num_rows() const { return features.rows(); }

  /// Prototype of class `c` as a 1 x q row.
  Tensor prototype(std::int32_t c) const {
    Tensor out = Tensor::matrix(1, semantic_dim());
    for (std::size_t k = 0; k < semantic_dim(); ++k) out[k] = prototypes(k, static_cast<std::size_t>(c));
    return out;
  }

  /// Test rows whose label lies in `classes`.
  std::vector<std::size_t> test_rows_in(std::span<const std::int32_t> classes) const {
    const std::set<std::int32_t> set(classes.begin(), classes.end());
    std::vector<std::size_t> out;
    for (std::size_t r : test_rows) {
      if (set.count(labels[r])) out.push_back(r);
    }
    return out;
  }

  friend bool operator==(const ZslDataset&, const ZslDataset&) = default;
};

/// Throws DataError naming the first violated field.
inline void validate(const ZslDataset& ds) {
  if (ds.features.rank() != 2) throw DataError("X", "must be rank 2, got " + ds.features.shape_string());
  if (ds.prototypes.rank() != 2) throw DataError("A", "must be rank 2, got " + ds.prototypes.shape_string());
  const std::size_t n = ds.num_rows();
  const auto m = static_cast<std::int32_t>(ds.num_classes());
  if (ds.labels.size() != n) {
    throw DataError("y", std::to_string(ds.labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] >= m) {
      throw DataError("y", "label " + std::to_string(ds.labels[i]) + " at row " + std::to_string(i) +
                               " outside [0, " + std::to_string(m) + ")");
    }
  }
  auto check_classes = [&](const std::vector<std::int32_t>& cs, const std::string& field) {
    std::set<std::int32_t> seen;
    for (std::int32_t c : cs) {
      if (c < 0 || c >= m) throw DataError(field, "class " + std::to_string(c) + " out of range");
      if (!seen.insert(c).second) throw DataError(field, "duplicate class " + std::to_string(c));
    }
    return seen;
  };
  const auto seen = check_classes(ds.seen_classes, "splits.seen_classes");
  const auto unseen = check_classes(ds.unseen_classes, "splits.unseen_classes");
  for (std::int32_t c : unseen) {
    if (seen.count(c)) {
      throw DataError("splits", "class " + std::to_string(c) + " is both seen and unseen");
    }
  }
  std::vector<char> in_train(n, 0);
  for (std::size_t r : ds.train_rows) {
    if (r >= n) throw DataError("splits.train_rows", "row " + std::to_string(r) + " out of range");
    if (!seen.count(ds.labels[r])) {
      throw DataError("splits.train_rows", "row " + std::to_string(r) + " has non-seen label " +
                                               std::to_string(ds.labels[r]));
    }
    in_train[r] = 1;
  }
  for (std::size_t r : ds.test_rows) {
    if (r >= n) throw DataError("splits.test_rows", "row " + std::to_string(r) + " out of range");
    if (in_train[r]) throw DataError("splits.test_rows", "row " + std::to_string(r) + " is also a train row");
    if (!seen.count(ds.labels[r]) && !unseen.count(ds.labels[r])) {
      throw DataError("splits.test_rows", "row " + std::to_string(r) + " has a label in neither split");
    }
  }
}

// ---------------------------------------------------------------------------
// Normalization

struct NormalizedFeatures {
  Tensor features;
  NormRecord record;
};

/// Applies a fitted record to every row. Per-dimension mode maps
/// (v - min) / (max - min), sends constant columns to 0 and clamps to
/// [0, 1]. Per-vector mode divides each row by its own maximum.
inline Tensor apply_normalization(const Tensor& x, const NormRecord& rec) {
  Tensor out = x;
  if (rec.mode == NormMode::PerVectorMax) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      for (double& v : row) v = mx > 0 ? std::clamp(v / mx, 0.0, 1.0) : 0.0;
    }
    return out;
  }
  if (rec.min.size() != x.cols() || rec.max.size() != x.cols()) {
    throw ShapeError("normalize: record has " + std::to_string(rec.min.size()) + " columns, features " +
                     std::to_string(x.cols()));
  }
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const double range = rec.max[c] - rec.min[c];
      row[c] = range > 0 ? std::clamp((row[c] - rec.min[c]) / range, 0.0, 1.0) : 0.0;
    }
  }
  return out;
}

/// Fits normalization on `fit_rows` only and transforms all rows.
inline NormalizedFeatures normalize_features(const Tensor& x, std::span<const std::size_t> fit_rows,
                                             NormMode mode = NormMode::PerDimension) {
  if (fit_rows.empty()) throw ContractError("normalize_features: empty fit set");
  NormRecord rec;
  rec.mode = mode;
  if (mode == NormMode::PerDimension) {
    rec.min.assign(x.cols(), 0.0);
    rec.max.assign(x.cols(), 0.0);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double lo = x(fit_rows[0], c);
      double hi = lo;
      for (std::size_t r : fit_rows) {
        lo = std::min(lo, x(r, c));
        hi = std::max(hi, x(r, c));
      }
      rec.min[c] = lo;
      rec.max[c] = hi;
    }
  }
  return {apply_normalization(x, rec), std::move(rec)};
}

// ---------------------------------------------------------------------------
// Prototypes

/// Class-level mode returns `raw` (q x M) unchanged. Image-averaged mode
/// takes per-image attribute rows (N x q) with `labels` and returns the
/// q x M matrix of per-class means.
inline Tensor build_prototypes(const Tensor& raw, AttributeMode mode,
                               std::span<const std::int32_t> labels = {}, std::size_t classes = 0) {
  if (mode == AttributeMode::ClassLevel) return raw;
  if (labels.size() != raw.rows()) {
    throw ShapeError("build_prototypes: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(raw.rows()) + " attribute rows");
  }
  const std::size_t q = raw.cols();
  Tensor sums = Tensor::matrix(q, classes);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw DataError("labels", "label " + std::to_string(labels[i]) + " out of range");
    }
    const auto c = static_cast<std::size_t>(labels[i]);
    ++counts[c];
    for (std::size_t k = 0; k < q; ++k) sums(k, c) += raw(i, k);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw DataError("labels", "class " + std::to_string(c) + " has no images");
    for (std::size_t k = 0; k < q; ++k) sums(k, c) /= static_cast<double>(counts[c]);
  }
  return sums;
}

// ---------------------------------------------------------------------------
// Portable format

namespace detail {

inline io::json norm_to_json(const std::optional<NormRecord>& rec) {
  if (!rec) return nullptr;
  return {{"mode", norm_mode_name(rec->mode)}, {"min", rec->min}, {"max", rec->max}};
}

inline std::optional<NormRecord> norm_from_json(const io::json& j) {
  if (j.is_null()) return std::nullopt;
  NormRecord rec;
  rec.mode = parse_norm_mode(io::field<std::string>(j, "mode", "normalization"));
  rec.min = j.value("min", std::vector<double>{});
  rec.max = j.value("max", std::vector<double>{});
  return rec;
}

inline Tensor read_tensor(const std::filesystem::path& dir, const io::json& entry,
                          const std::string& field) {
  const auto file = io::field<std::string>(entry, "file", "files." + field);
  const auto shape = io::field<Tensor::Shape>(entry, "shape", "files." + field);
  const auto offset = entry.value("offset", std::size_t{0});
  const std::string bytes = io::read_file(dir / file);
  const std::size_t need = Tensor::element_count(shape) * 8;
  if (offset > bytes.size() || bytes.size() - offset != need) {
    throw DataError(field, "payload of " + std::to_string(bytes.size() - std::min(offset, bytes.size())) +
                               " bytes does not match declared shape " + Tensor::shape_string(shape));
  }
  return Tensor(shape, io::decode_f64(std::string_view(bytes).substr(offset), field));
}

}  // namespace detail

inline void save_dataset(const std::filesystem::path& dir, const ZslDataset& ds) {
  validate(ds);
  std::filesystem::create_directories(dir);
  io::json manifest;
  manifest["format"] = "baae-zsl-dataset";
  manifest["version"] = 1;
  manifest["name"] = ds.name;
  manifest["p"] = ds.visual_dim();
  manifest["q"] = ds.semantic_dim();
  manifest["M"] = ds.num_classes();
  manifest["N"] = ds.num_rows();
  manifest["attribute_mode"] = attribute_mode_name(ds.attribute_mode);
  manifest["files"] = {
      {"X", {{"file", "X.f64"}, {"dtype", "f64le"}, {"shape", ds.features.shape()}, {"offset", 0}}},
      {"A", {{"file", "A.f64"}, {"dtype", "f64le"}, {"shape", ds.prototypes.shape()}, {"offset", 0}}},
      {"y", {{"file", "y.i32"}, {"dtype", "i32le"}, {"shape", {ds.labels.size()}}, {"offset", 0}}},
      {"splits", {{"file", "splits.json"}}}};
  manifest["normalization"] = detail::norm_to_json(ds.normalization);

  io::json splits = {{"seen_classes", ds.seen_classes},
                     {"unseen_classes", ds.unseen_classes},
                     {"train_rows", ds.train_rows},
                     {"test_rows", ds.test_rows}};

  io::write_file_atomic(dir / "X.f64", io::encode_f64(ds.features.values()));
  io::write_file_atomic(dir / "A.f64", io::encode_f64(ds.prototypes.values()));
  io::write_file_atomic(dir / "y.i32", io::encode_i32(ds.labels));
  io::write_json(dir / "splits.json", splits);
  io::write_json(dir / "manifest.json", manifest);
}

inline ZslDataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw DataError((dir / "manifest.json").string(), "no such file");
  }
  const io::json m = io::read_json(dir / "manifest.json");
  if (m.value("format", std::string{}) != "baae-zsl-dataset") {
    throw DataError("format", "not a baae-zsl-dataset manifest");
  }
  ZslDataset ds;
  ds.name = m.value("name", std::string("dataset"));
  ds.attribute_mode = parse_attribute_mode(m.value("attribute_mode", std::string("class-level")));
  const io::json files = io::field<io::json>(m, "files", "manifest");
  ds.features = detail::read_tensor(dir, io::field<io::json>(files, "X", "files"), "X");
  ds.prototypes = detail::read_tensor(dir, io::field<io::json>(files, "A", "files"), "A");

  const io::json y = io::field<io::json>(files, "y", "files");
  const auto y_shape = io::field<Tensor::Shape>(y, "shape", "files.y");
  const std::string y_bytes = io::read_file(dir / io::field<std::string>(y, "file", "files.y"));
  if (y_shape.size() != 1 || y_bytes.size() != y_shape[0] * 4) {
    throw DataError("y", "payload size does not match declared shape");
  }
  ds.labels = io::decode_i32(y_bytes, "y");

  const auto check_dim = [&](const char* key, std::size_t actual) {
    if (m.contains(key) && m.at(key).get<std::size_t>() != actual) {
      throw DataError(key, "manifest declares " + std::to_string(m.at(key).get<std::size_t>()) +
                               ", payload has " + std::to_string(actual));
    }
  };
  check_dim("p", ds.visual_dim());
  check_dim("q", ds.semantic_dim());
  check_dim("M", ds.num_classes());
  check_dim("N", ds.num_rows());

  const std::string splits_file =
      files.contains("splits") ? files.at("splits").value("file", std::string("splits.json")) : "splits.json";
  const io::json s = io::read_json(dir / splits_file);
  ds.seen_classes = io::field<std::vector<std::int32_t>>(s, "seen_classes", "splits");
  ds.unseen_classes = io::field<std::vector<std::int32_t>>(s, "unseen_classes", "splits");
  ds.train_rows = io::field<std::vector<std::size_t>>(s, "train_rows", "splits");
  ds.test_rows = io::field<std::vector<std::size_t>>(s, "test_rows", "splits");
  ds.normalization = detail::norm_from_json(m.value("normalization", io::json()));
  validate(ds);
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic datasets

struct SyntheticConfig {
  std::size_t visual_dim = 32;
  std::size_t semantic_dim = 12;
  std::size_t seen_classes = 10;
  std::size_t unseen_classes = 5;
  std::size_t samples_per_class = 200;
  double noise_std = 0.05;
  /// Fraction of each seen class's rows used for training; the rest are
  /// seen-class test rows.
  double train_fraction = 0.8;
  std::uint64_t seed = 7;

  void validate() const {
    if (visual_dim == 0 || semantic_dim == 0 || seen_classes == 0 || samples_per_class == 0) {
      throw ContractError("synthetic config: counts and dims must be positive");
    }
    if (unseen_classes < 2) throw ContractError("synthetic config: need at least 2 unseen classes");
    if (!(noise_std >= 0)) throw ContractError("synthetic config: negative noise std");
    if (!(train_fraction > 0 && train_fraction <= 1)) {
      throw ContractError("synthetic config: train fraction must lie in (0, 1]");
    }
  }
};

struct SyntheticDataset {
  ZslDataset dataset;
  Tensor ground_truth_map;  // q x p
  /// Normalized noiseless features relu(a_c W*) of each class, M x p.
  Tensor class_exemplars;
};

/// Prototypes a_c ~ U[0,1]^q, a hidden map W* with N(0,1) entries, and
/// samples x = relu(a_c W*) + N(0, noise_std^2), normalized per dimension
/// on the seen training rows. Classes [0, seen) are seen, the rest unseen.
inline SyntheticDataset make_synthetic_with_truth(const SyntheticConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  Rng proto_rng = root.split(1);
  Rng map_rng = root.split(2);
  Rng noise_rng = root.split(3);
  const std::size_t m = cfg.seen_classes + cfg.unseen_classes;
  const std::size_t p = cfg.visual_dim;
  const std::size_t q = cfg.semantic_dim;

  SyntheticDataset out;
  ZslDataset& ds = out.dataset;
  ds.name = "synthetic";
  ds.prototypes = Tensor::matrix(q, m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t k = 0; k < q; ++k) ds.prototypes(k, c) = proto_rng.uniform();
  }
  out.ground_truth_map = Tensor::matrix(q, p);
  for (double& w : out.ground_truth_map.values()) w = map_rng.normal();

  Tensor clean = Tensor::matrix(m, p);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += ds.prototypes(k, c) * out.ground_truth_map(k, j);
      clean(c, j) = std::max(s, 0.0);
    }
  }

  const std::size_t n = m * cfg.samples_per_class;
  Tensor raw = Tensor::matrix(n, p);
  const auto n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(cfg.samples_per_class)));
  for (std::size_t c = 0; c < m; ++c) {
    ds.labels.insert(ds.labels.end(), cfg.samples_per_class, static_cast<std::int32_t>(c));
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
      const std::size_t r = c * cfg.samples_per_class + s;
      for (std::size_t j = 0; j < p; ++j) raw(r, j) = clean(c, j) + cfg.noise_std * noise_rng.normal();
      const bool seen = c < cfg.seen_classes;
      if (seen && s < n_train) {
        ds.train_rows.push_back(r);
      } else {
        ds.test_rows.push_back(r);
      }
    }
    (c < cfg.seen_classes ? ds.seen_classes : ds.unseen_classes).push_back(static_cast<std::int32_t>(c));
  }

  auto normalized = normalize_features(raw, ds.train_rows);
  ds.features = std::move(normalized.features);
  out.class_exemplars = apply_normalization(clean, normalized.record);
  ds.normalization = std::move(normalized.record);
  validate(ds);
  return out;
}

inline ZslDataset make_synthetic(const SyntheticConfig& cfg) {
  return make_synthetic_with_truth(cfg).dataset;
}

}  // namespace baae
