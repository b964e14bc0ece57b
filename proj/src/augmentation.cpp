#include "promptcap/augmentation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_set>

namespace promptcap {

std::vector<CandidateSet> build_candidate_sets(const Matrix& features, Index n, std::span<const int> groups) {
  const Index count = features.rows();
  if (n <= 0) throw Error(ErrorKind::argument, "build_candidate_sets: n must be positive");
  if (n > count) {
    throw Error(ErrorKind::bound,
                "build_candidate_sets: n=" + std::to_string(n) + " exceeds corpus of " + std::to_string(count));
  }
  if (!groups.empty() && static_cast<Index>(groups.size()) != count) {
    throw Error(ErrorKind::dimension, "build_candidate_sets: group labels do not match feature rows");
  }

  std::vector<CandidateSet> sets(static_cast<std::size_t>(count));
  constexpr Index kBlock = 256;
  for (Index start = 0; start < count; start += kBlock) {
    const Index rows = std::min(kBlock, count - start);
    const Matrix sims = features.middleRows(start, rows) * features.transpose();
    for (Index r = 0; r < rows; ++r) {
      const Index anchor = start + r;
      Vector scores = sims.row(r).transpose();
      Index eligible = count - 1;
      scores(anchor) = -std::numeric_limits<real>::infinity();
      if (!groups.empty()) {
        eligible = 0;
        for (Index j = 0; j < count; ++j) {
          if (j == anchor) continue;
          if (groups[static_cast<std::size_t>(j)] != groups[static_cast<std::size_t>(anchor)]) {
            scores(j) = -std::numeric_limits<real>::infinity();
          } else {
            ++eligible;
          }
        }
      }
      if (eligible < n - 1) {
        throw Error(ErrorKind::bound, "build_candidate_sets: anchor " + std::to_string(anchor) + " has only " +
                                          std::to_string(eligible) + " eligible neighbours for n=" + std::to_string(n));
      }
      CandidateSet& set = sets[static_cast<std::size_t>(anchor)];
      set.anchor = anchor;
      set.members.push_back(anchor);
      for (Index idx : top_k_indices(scores, n - 1)) set.members.push_back(idx);
    }
  }
  return sets;
}

std::vector<CandidateSet> build_candidate_sets(std::span<const UnitVector> features, Index n,
                                               std::span<const int> groups) {
  return build_candidate_sets(stack_rows(features), n, groups);
}

Index input_augment(const CandidateSet& set, Rng& rng) {
  if (set.members.empty()) throw Error(ErrorKind::empty_input, "input_augment: empty candidate set");
  if (set.members.size() == 1) return set.members.front();
  std::uniform_int_distribution<std::size_t> pick(0, set.members.size() - 1);
  return set.members[pick(rng)];
}

UnitVector feature_augment(const UnitVector& feat, const Eigen::Ref<const Vector>& noise) {
  if (noise.size() != feat.dim()) {
    throw Error(ErrorKind::dimension, "feature_augment: noise dimension " + std::to_string(noise.size()) +
                                          " vs feature dimension " + std::to_string(feat.dim()));
  }
  return normalize(Vector(feat.values() + noise));
}

UnitVector feature_augment(const UnitVector& feat, const NoiseConfig& cfg, Rng& rng) {
  if (!(cfg.epsilon >= 0)) throw Error(ErrorKind::argument, "feature_augment: epsilon must be non-negative");
  if (cfg.epsilon == 0) return feat;
  std::normal_distribution<real> gauss(real(0), std::sqrt(cfg.epsilon));
  for (int attempt = 0;; ++attempt) {
    Vector noise(feat.dim());
    for (Index i = 0; i < noise.size(); ++i) noise(i) = gauss(rng);
    try {
      return feature_augment(feat, noise);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_vector || attempt == 1) throw;
    }
  }
}

void write_candidates(const std::filesystem::path& path, std::span<const CandidateSet> sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::data, "cannot write candidates " + path.string());
  for (const CandidateSet& s : sets) out << nlohmann::json{{"anchor", s.anchor}, {"members", s.members}}.dump() << '\n';
}

std::vector<CandidateSet> read_candidates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open candidates " + path.string());
  std::vector<CandidateSet> sets;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      CandidateSet s;
      s.anchor = obj.at("anchor").get<Index>();
      s.members = obj.at("members").get<std::vector<Index>>();
      if (s.members.empty() || s.members.front() != s.anchor) {
        throw Error(ErrorKind::data, "candidate set for anchor " + std::to_string(s.anchor) + " does not start with it");
      }
      std::unordered_set<Index> distinct(s.members.begin(), s.members.end());
      if (distinct.size() != s.members.size()) {
        throw Error(ErrorKind::data, "candidate set for anchor " + std::to_string(s.anchor) + " repeats a member");
      }
      sets.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::data, "candidates " + path.string() + ": " + e.what());
    }
  }
  return sets;
}

}  // namespace promptcap
