#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bro/core/errors.hpp"
#include "bro/core/tensor.hpp"

namespace bro {

/// f(x)_t - max_{k != t} f(x)_k. Negative iff misclassified; zero on ties.
inline double margin(std::span<const double> logits, std::size_t t) {
  require(logits.size() >= 2, "margin: need at least two classes");
  require(t < logits.size(), "margin: label out of range");
  double runner_up = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (k != t) runner_up = std::max(runner_up, logits[k]);
  return logits[t] - runner_up;
}

inline double margin(const Tensor& logits, std::size_t t) { return margin(logits.data(), t); }

/// max(0, m / (sqrt(2) L)).
inline double certified_radius(double m, double lipschitz) {
  require(lipschitz > 0.0, "certified_radius: Lipschitz bound must be positive");
  return std::max(0.0, m / (std::numbers::sqrt2 * lipschitz));
}

/// Pairwise certificate for a last-layer-normalized head:
///   max(0, min_{j != t} (z_t - z_j) / (L ||w_t - w_j||)).
/// Pairs with identical rows and z_t > z_j cannot be flipped and are
/// skipped; if every pair is skipped the radius is +infinity.
inline double lln_certified_radius(std::span<const double> logits, std::size_t t, const Tensor& head_rows,
                                   double lipschitz_backbone) {
  const std::size_t classes = logits.size();
  require(classes >= 2 && t < classes, "lln_certified_radius: bad label or class count");
  require(head_rows.rank() == 2 && head_rows.dim(0) == classes, "lln_certified_radius: head rows must be K x d");
  require(lipschitz_backbone > 0.0, "lln_certified_radius: Lipschitz bound must be positive");
  const std::size_t d = head_rows.dim(1);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < classes; ++j) {
    if (j == t) continue;
    const double gap = logits[t] - logits[j];
    if (gap <= 0.0) return 0.0;
    double dist2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = head_rows(t, i) - head_rows(j, i);
      dist2 += diff * diff;
    }
    if (dist2 == 0.0) continue;
    best = std::min(best, gap / (lipschitz_backbone * std::sqrt(dist2)));
  }
  return best;
}

struct LayerBound {
  std::string kind;
  double constant = 1.0;
};

/// Ordered layers with their Lipschitz constants; the network bound is the product.
struct LipschitzModel {
  std::vector<LayerBound> layers;

  double composed_bound() const {
    double prod = 1.0;
    for (const auto& l : layers) prod *= l.constant;
    return prod;
  }
};

inline double compose_lipschitz(const LipschitzModel& model) {
  for (const auto& l : model.layers)
    require(l.constant > 0.0, "compose_lipschitz: constant for '" + l.kind + "' must be positive");
  return model.composed_bound();
}

struct RadiusStats {
  double median = 0.0;
  double variance = 0.0;  // population
  double skewness = 0.0;  // Fisher-Pearson g1 = m3 / m2^{3/2}
};

inline RadiusStats radius_stats(std::vector<double> radii) {
  require(!radii.empty(), "radius_stats: empty sample");
  const std::size_t n = radii.size();
  std::sort(radii.begin(), radii.end());
  RadiusStats st;
  st.median = n % 2 ? radii[n / 2] : 0.5 * (radii[n / 2 - 1] + radii[n / 2]);
  double mean = 0.0;
  for (double r : radii) mean += r;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0;
  for (double r : radii) {
    const double d = r - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  st.variance = m2;
  st.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return st;
}

struct CertificationRecord {
  std::size_t label = 0;
  std::size_t predicted = 0;
  double margin = 0.0;
  double radius = 0.0;

  bool correct() const { return predicted == label; }
};

struct CurvePoint {
  double radius = 0.0;
  double accuracy = 0.0;
};

struct CertificationReport {
  static constexpr int kVersion = 1;

  std::vector<CertificationRecord> records;
  RadiusStats stats;           // over finite radii
  std::size_t unbounded = 0;   // records with an infinite radius
  std::vector<CurvePoint> curve;
};

/// Fraction of samples that are correct with radius >= each grid point.
inline std::vector<CurvePoint> accuracy_radius_curve(const std::vector<CertificationRecord>& records,
                                                     const std::vector<double>& grid) {
  require(std::is_sorted(grid.begin(), grid.end()), "accuracy_radius_curve: grid must be ascending");
  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  const double n = records.empty() ? 1.0 : static_cast<double>(records.size());
  for (double r : grid) {
    std::size_t hits = 0;
    for (const auto& rec : records)
      if (rec.correct() && rec.radius >= r) ++hits;
    curve.push_back({r, static_cast<double>(hits) / n});
  }
  return curve;
}

inline std::vector<CurvePoint> accuracy_radius_curve(const CertificationReport& report,
                                                     const std::vector<double>& grid) {
  return accuracy_radius_curve(report.records, grid);
}

/// One record from logits. A tie with the runner-up counts as correct with
/// radius zero; misclassified samples always get radius zero.
inline CertificationRecord certify_logits(std::span<const double> logits, std::size_t t, double radius_if_correct) {
  CertificationRecord rec;
  rec.label = t;
  rec.margin = margin(logits, t);
  if (rec.margin >= 0.0) {
    rec.predicted = t;
    rec.radius = std::max(0.0, radius_if_correct);
  } else {
    rec.predicted = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    rec.radius = 0.0;
  }
  return rec;
}

inline CertificationReport make_report(std::vector<CertificationRecord> records, const std::vector<double>& grid) {
  CertificationReport rep;
  std::vector<double> radii;
  radii.reserve(records.size());
  for (const auto& r : records) {
    if (std::isfinite(r.radius))
      radii.push_back(r.radius);
    else
      ++rep.unbounded;
  }
  if (!radii.empty()) rep.stats = radius_stats(radii);
  rep.curve = accuracy_radius_curve(records, grid);
  for (std::size_t i = 1; i < rep.curve.size(); ++i)
    if (rep.curve[i].accuracy > rep.curve[i - 1].accuracy)
      throw std::logic_error("certification curve is not non-increasing");
  rep.records = std::move(records);
  return rep;
}

// Line-delimited serialization: one aggregate header object, then one
// object per record.

inline void write_report(std::ostream& os, const CertificationReport& rep) {
  nlohmann::json header = {{"version", CertificationReport::kVersion},
                           {"count", rep.records.size()},
                           {"unbounded", rep.unbounded},
                           {"median", rep.stats.median},
                           {"variance", rep.stats.variance},
                           {"skewness", rep.stats.skewness}};
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : rep.curve) curve.push_back({{"radius", p.radius}, {"accuracy", p.accuracy}});
  header["curve"] = std::move(curve);
  os << header.dump() << '\n';
  for (const auto& r : rep.records) {
    const double radius = std::isfinite(r.radius) ? r.radius : -1.0;
    os << nlohmann::json{{"label", r.label}, {"predicted", r.predicted}, {"margin", r.margin}, {"radius", radius}}
              .dump()
       << '\n';
  }
}

inline CertificationReport read_report(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("certification report: missing header");
  CertificationReport rep;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("version").get<int>() != CertificationReport::kVersion)
      throw FormatError("certification report: unsupported version");
    rep.stats = {header.at("median"), header.at("variance"), header.at("skewness")};
    rep.unbounded = header.at("unbounded");
    for (const auto& p : header.at("curve")) rep.curve.push_back({p.at("radius"), p.at("accuracy")});
    const std::size_t count = header.at("count");
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      double radius = j.at("radius");
      if (radius < 0.0) radius = std::numeric_limits<double>::infinity();
      rep.records.push_back({j.at("label"), j.at("predicted"), j.at("margin"), radius});
    }
    if (rep.records.size() != count) throw FormatError("certification report: record count mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("certification report: ") + e.what());
  }
  return rep;
}

}  // namespace bro
