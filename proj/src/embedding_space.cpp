#include "promptcap/embedding_space.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace promptcap {

namespace {

std::atomic<std::uint64_t> audit_count{0};
std::atomic<double> audit_max{0.0};

void audit(const Vector& v) {
  const double dev = std::abs(static_cast<double>(v.norm()) - 1.0);
  audit_count.fetch_add(1, std::memory_order_relaxed);
  double seen = audit_max.load(std::memory_order_relaxed);
  while (dev > seen && !audit_max.compare_exchange_weak(seen, dev, std::memory_order_relaxed)) {
  }
}

}  // namespace

UnitAudit unit_audit() { return {audit_count.load(), audit_max.load()}; }

void reset_unit_audit() {
  audit_count.store(0);
  audit_max.store(0.0);
}

UnitVector UnitVector::from_normalized(Vector values) {
  const real n = values.norm();
  if (std::abs(n - real(1)) > kUnitTolerance) {
    throw Error(ErrorKind::numeric, "UnitVector: norm " + std::to_string(n) + " is not 1");
  }
  audit(values);
  return UnitVector(std::move(values));
}

real UnitVector::dot(const UnitVector& other) const {
  if (other.dim() != dim()) {
    throw Error(ErrorKind::dimension,
                "dot: dimension " + std::to_string(dim()) + " vs " + std::to_string(other.dim()));
  }
  return values_.dot(other.values_);
}

UnitVector normalize(const Eigen::Ref<const Vector>& raw) {
  const real n = raw.norm();
  if (!(n > kDegenerateNorm)) {
    throw Error(ErrorKind::degenerate_vector, "normalize: vector norm " + std::to_string(n) + " has no direction");
  }
  Vector v = raw / n;
  audit(v);
  return UnitVector(std::move(v));
}

UnitVector normalize(std::span<const real> raw) {
  return normalize(Eigen::Map<const Vector>(raw.data(), static_cast<Index>(raw.size())));
}

ConceptBank::ConceptBank(std::vector<Concept> concepts) : concepts_(std::move(concepts)) {
  if (concepts_.empty()) {
    features_.resize(0, 0);
    return;
  }
  const Index d = concepts_.front().feature.dim();
  std::unordered_set<std::string> seen;
  features_.resize(static_cast<Index>(concepts_.size()), d);
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const Concept& c = concepts_[i];
    if (c.feature.dim() != d) {
      throw Error(ErrorKind::dimension, "ConceptBank: concept '" + c.surface + "' has dimension " +
                                            std::to_string(c.feature.dim()) + ", expected " + std::to_string(d));
    }
    if (!seen.insert(c.surface).second) throw Error(ErrorKind::data, "ConceptBank: duplicate concept '" + c.surface + "'");
    features_.row(static_cast<Index>(i)) = c.feature.values().transpose();
  }
}

std::vector<Index> top_k_indices(const Eigen::Ref<const Vector>& scores, Index k) {
  const Index n = scores.size();
  if (k < 0 || k > n) {
    throw Error(ErrorKind::bound, "top_k: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " candidates");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto better = [&](Index a, Index b) { return scores(a) > scores(b) || (scores(a) == scores(b) && a < b); };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
  order.resize(static_cast<std::size_t>(k));
  return order;
}

PromptSet retrieve_prompts(const UnitVector& query, const ConceptBank& bank, Index k) {
  if (k < 0 || k > bank.size()) {
    throw Error(ErrorKind::bound,
                "retrieve_prompts: k=" + std::to_string(k) + " exceeds bank of " + std::to_string(bank.size()));
  }
  if (k == 0) return PromptSet::empty(query.dim());
  if (query.dim() != bank.dim()) {
    throw Error(ErrorKind::dimension, "retrieve_prompts: query dimension " + std::to_string(query.dim()) +
                                          " vs bank dimension " + std::to_string(bank.dim()));
  }
  const Vector scores = bank.features() * query.values();
  PromptSet out;
  out.indices = top_k_indices(scores, k);
  out.features.resize(k, bank.dim());
  out.similarities.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    const Index idx = out.indices[static_cast<std::size_t>(i)];
    out.features.row(i) = bank.features().row(idx);
    out.similarities.push_back(scores(idx));
  }
  return out;
}

UnitVector pool_frames(std::span<const UnitVector> frames) {
  if (frames.empty()) throw Error(ErrorKind::empty_input, "pool_frames: no frames");
  if (frames.size() == 1) return frames.front();
  const Index d = frames.front().dim();
  Vector sum = Vector::Zero(d);
  for (const UnitVector& f : frames) {
    if (f.dim() != d) {
      throw Error(ErrorKind::dimension,
                  "pool_frames: frame dimension " + std::to_string(f.dim()) + " vs " + std::to_string(d));
    }
    sum += f.values();
  }
  return normalize(Vector(sum / static_cast<real>(frames.size())));
}

GapReport gap_report(std::span<const UnitVector> text_feats, std::span<const UnitVector> vision_feats,
                     std::span<const std::pair<Index, Index>> pairing) {
  if (text_feats.empty() || vision_feats.empty()) throw Error(ErrorKind::empty_input, "gap_report: empty feature set");
  const Index d = text_feats.front().dim();
  auto centroid = [d](std::span<const UnitVector> feats) {
    Vector c = Vector::Zero(d);
    for (const UnitVector& f : feats) {
      if (f.dim() != d) throw Error(ErrorKind::dimension, "gap_report: mixed feature dimensions");
      c += f.values();
    }
    return Vector(c / static_cast<real>(feats.size()));
  };
  GapReport report;
  report.centroid_distance = (centroid(text_feats) - centroid(vision_feats)).norm();
  if (!pairing.empty()) {
    real total = 0;
    for (const auto& [t, v] : pairing) {
      if (t < 0 || t >= static_cast<Index>(text_feats.size()) || v < 0 ||
          v >= static_cast<Index>(vision_feats.size())) {
        throw Error(ErrorKind::bound, "gap_report: pair (" + std::to_string(t) + ", " + std::to_string(v) +
                                          ") out of range");
      }
      total += text_feats[static_cast<std::size_t>(t)].dot(vision_feats[static_cast<std::size_t>(v)]);
    }
    report.mean_paired_cosine = total / static_cast<real>(pairing.size());
  }
  return report;
}

std::vector<UnitVector> normalize_rows(const Matrix& m) {
  std::vector<UnitVector> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) out.push_back(normalize(Vector(m.row(r).transpose())));
  return out;
}

Matrix stack_rows(std::span<const UnitVector> rows) {
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(rows.size()), rows.front().dim());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = rows[i].values().transpose();
  return m;
}

}  // namespace promptcap
