#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "tit/core/error.hpp"
#include "tit/core/types.hpp"

namespace tit::metric {

inline constexpr double kCosineClampTolerance = 1e-9;

/// (a.b) / (|a||b|). Results within 1e-9 outside [-1, 1] are clamped;
/// anything further out indicates a bug and is returned unchanged.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(Errc::DimensionMismatch, "vectors differ in dimension", {{"a", a.size()}, {"b", b.size()}});
  if (a.empty()) throw Error(Errc::DimensionMismatch, "vectors have dimension 0");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(Errc::ZeroVector, "cosine similarity of a zero vector");
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  if (c > 1.0 && c <= 1.0 + kCosineClampTolerance) return 1.0;
  if (c < -1.0 && c >= -1.0 - kCosineClampTolerance) return -1.0;
  return c;
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(std::span<const double>(a.values), std::span<const double>(b.values));
}

}  // namespace tit::metric
