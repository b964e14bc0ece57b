#pragma once

#include "promptcap/core.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace promptcap {

// L2 norm below which a vector has no usable direction.
inline constexpr real kDegenerateNorm = real(1e-12);
// Allowed deviation of a UnitVector's norm from 1.
inline constexpr real kUnitTolerance = real(1e-6);

// An L2-normalized feature (a text feature, its augmented variant, or a vision feature).
class UnitVector {
 public:
  UnitVector() = default;

  // Wraps values already on the unit sphere; throws if the norm is off by more than kUnitTolerance.
  static UnitVector from_normalized(Vector values);

  Index dim() const { return values_.size(); }
  const Vector& values() const { return values_; }
  real operator[](Index i) const { return values_(i); }
  real dot(const UnitVector& other) const;

  friend bool operator==(const UnitVector& a, const UnitVector& b) { return a.values_ == b.values_; }

 private:
  explicit UnitVector(Vector v) : values_(std::move(v)) {}
  friend UnitVector normalize(const Eigen::Ref<const Vector>& raw);

  Vector values_;
};

// Running audit of every UnitVector built in this process: how many, and the
// largest |norm - 1| seen. Used by the normalization sweep tests.
struct UnitAudit {
  std::uint64_t count = 0;
  double max_deviation = 0;
};
UnitAudit unit_audit();
void reset_unit_audit();

UnitVector normalize(const Eigen::Ref<const Vector>& raw);
UnitVector normalize(std::span<const real> raw);

struct Concept {
  std::string surface;
  UnitVector feature;
};

// Concept features C, one row per concept, in extraction-rank order.
class ConceptBank {
 public:
  ConceptBank() = default;
  // Throws on duplicate surfaces or mixed dimensions.
  explicit ConceptBank(std::vector<Concept> concepts);

  Index size() const { return static_cast<Index>(concepts_.size()); }
  Index dim() const { return features_.cols(); }
  bool empty() const { return concepts_.empty(); }
  const Concept& operator[](Index i) const { return concepts_[static_cast<std::size_t>(i)]; }
  const std::vector<Concept>& concepts() const { return concepts_; }
  // size() x dim() matrix of unit rows.
  const Matrix& features() const { return features_; }

 private:
  std::vector<Concept> concepts_;
  Matrix features_;
};

// K retrieved concept features, ordered by descending similarity.
struct PromptSet {
  Matrix features;  // K x d
  std::vector<Index> indices;
  std::vector<real> similarities;

  Index size() const { return static_cast<Index>(indices.size()); }
  static PromptSet empty(Index dim) { return PromptSet{Matrix(0, dim), {}, {}}; }
};

// Indices of the k largest scores, descending, ties to the lower index.
std::vector<Index> top_k_indices(const Eigen::Ref<const Vector>& scores, Index k);

PromptSet retrieve_prompts(const UnitVector& query, const ConceptBank& bank, Index k);

// normalize(mean of frames).
UnitVector pool_frames(std::span<const UnitVector> frames);

struct GapReport {
  real centroid_distance = 0;
  real mean_paired_cosine = 0;
};

GapReport gap_report(std::span<const UnitVector> text_feats, std::span<const UnitVector> vision_feats,
                     std::span<const std::pair<Index, Index>> pairing);

// Rows of `m` as UnitVectors (each row normalized).
std::vector<UnitVector> normalize_rows(const Matrix& m);
Matrix stack_rows(std::span<const UnitVector> rows);

}  // namespace promptcap
