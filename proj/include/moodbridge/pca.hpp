#pragma once

// Two-component PCA fitted on one set of embeddings and applied to others.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "moodbridge/error.hpp"
#include "moodbridge/numcore.hpp"

namespace moodbridge {

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // row i is the unit eigenvector of values[i]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymmetricEigen symmetric_eigen(Matrix a, int max_sweeps = 100) {
  const std::size_t n = a.rows();
  if (a.cols() != n) fail(ErrorKind::Dimension, "symmetric_eigen: matrix is not square");
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q) {
        total += a(p, q) * a(p, q);
        if (p != q) off += a(p, q) * a(p, q);
      }
    if (off <= 1e-30 * std::max(total, 1e-300)) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(i, k) = v(k, order[i]);
  }
  return out;
}

struct LabeledPoint {
  std::string id;    // item id or tag name
  std::string kind;  // e.g. "music", "text", "tag"
  Vector values;
};

struct ProjectionRow {
  std::string id;
  std::string kind;
  double x = 0.0;
  double y = 0.0;
};

struct ProjectionExport {
  std::string fitted_kind;
  Vector mean;
  Matrix components;  // 2 x dim, unit rows
  Vector variances;   // eigenvalues of the two components
  std::vector<ProjectionRow> rows;
};

/// Fits the top two principal directions on `fit` and projects `fit` followed
/// by `others` through the same centering and directions. Each direction's
/// largest-magnitude coordinate is made positive.
inline ProjectionExport pca_project(std::span<const LabeledPoint> fit, std::span<const LabeledPoint> others = {}) {
  if (fit.size() < 3) fail(ErrorKind::InvalidArgument, "pca_project: need at least 3 fit points");
  const std::size_t d = fit.front().values.size();
  for (const auto* set : {&fit, &others})
    for (const auto& p : *set)
      if (p.values.size() != d) fail(ErrorKind::Dimension, "pca_project: point '" + p.id + "' has a different dimension");
  if (d < 2) fail(ErrorKind::InvalidArgument, "pca_project: need at least 2 dimensions");

  ProjectionExport out;
  out.fitted_kind = fit.front().kind;
  out.mean.assign(d, 0.0);
  for (const auto& p : fit) axpy(out.mean, 1.0, p.values);
  for (double& m : out.mean) m /= static_cast<double>(fit.size());

  Matrix cov(d, d);
  Vector c(d);
  for (const auto& p : fit) {
    for (std::size_t i = 0; i < d; ++i) c[i] = p.values[i] - out.mean[i];
    for (std::size_t i = 0; i < d; ++i) axpy(cov.row(i), c[i], c);
  }
  for (double& x : cov.values()) x /= static_cast<double>(fit.size() - 1);

  const SymmetricEigen eig = symmetric_eigen(cov);
  const double scale = std::max(std::abs(eig.values[0]), 1e-300);
  if (!(eig.values[0] > 0.0) || !(eig.values[1] > 1e-12 * scale))
    fail(ErrorKind::Numeric, "pca_project: covariance has rank < 2");

  out.components = Matrix(2, d);
  for (std::size_t r = 0; r < 2; ++r) {
    auto src = eig.vectors.row(r);
    std::size_t big = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(src[i]) > std::abs(src[big])) big = i;
    const double sign = src[big] < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) out.components(r, i) = sign * src[i];
    out.variances.push_back(eig.values[r]);
  }

  auto project = [&](const LabeledPoint& p) {
    for (std::size_t i = 0; i < d; ++i) c[i] = p.values[i] - out.mean[i];
    out.rows.push_back({p.id, p.kind, dot(out.components.row(0), c), dot(out.components.row(1), c)});
  };
  for (const auto& p : fit) project(p);
  for (const auto& p : others) project(p);
  return out;
}

inline std::string format_projection_csv(const ProjectionExport& e) {
  std::string out = "id,kind,x,y\n";
  char buf[64];
  for (const auto& r : e.rows) {
    out += r.id + "," + r.kind + ",";
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r.x, r.y);
    out += buf;
  }
  return out;
}

/// Unprojected embeddings as CSV `id,kind,e1,...,eD`, for external projection tools.
inline std::string format_embeddings_csv(std::span<const LabeledPoint> points) {
  const std::size_t d = points.empty() ? 0 : points.front().values.size();
  std::string out = "id,kind";
  for (std::size_t j = 0; j < d; ++j) out += ",e" + std::to_string(j + 1);
  out += "\n";
  char buf[32];
  for (const auto& p : points) {
    if (p.values.size() != d) fail(ErrorKind::Dimension, "format_embeddings_csv: '" + p.id + "' has a different dimension");
    out += p.id + "," + p.kind;
    for (double v : p.values) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace moodbridge
