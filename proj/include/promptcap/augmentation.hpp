#pragma once

#include "promptcap/embedding_space.hpp"
#include "promptcap/rng.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace promptcap {

// X_S for one anchor: the anchor itself followed by its N-1 nearest neighbours.
struct CandidateSet {
  Index anchor = 0;
  std::vector<Index> members;  // members[0] == anchor

  Index size() const { return static_cast<Index>(members.size()); }
  friend bool operator==(const CandidateSet&, const CandidateSet&) = default;
};

struct NoiseConfig {
  real epsilon = real(0.01);  // per-dimension variance
  std::uint64_t seed = 0;
};

// For every anchor i: i, then the n-1 other items with the highest cosine
// (ties to the lower index). With `groups`, neighbours come only from items
// sharing the anchor's group label (e.g. language).
std::vector<CandidateSet> build_candidate_sets(const Matrix& features, Index n,
                                               std::span<const int> groups = {});
std::vector<CandidateSet> build_candidate_sets(std::span<const UnitVector> features, Index n,
                                               std::span<const int> groups = {});

// Uniform draw over the set's members.
Index input_augment(const CandidateSet& set, Rng& rng);

// normalize(feat + noise), noise ~ N(0, epsilon) per dimension. A degenerate
// sum is redrawn once before failing.
UnitVector feature_augment(const UnitVector& feat, const NoiseConfig& cfg, Rng& rng);
// Same with the noise supplied by the caller.
UnitVector feature_augment(const UnitVector& feat, const Eigen::Ref<const Vector>& noise);

// JSON Lines {"anchor": i, "members": [...]}.
void write_candidates(const std::filesystem::path& path, std::span<const CandidateSet> sets);
std::vector<CandidateSet> read_candidates(const std::filesystem::path& path);

}  // namespace promptcap
