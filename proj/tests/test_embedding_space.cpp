#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace promptcap {
namespace {

using test::random_unit;

UnitVector unit(std::initializer_list<real> xs) {
  Vector v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (real x : xs) v(i++) = x;
  return normalize(v);
}

ConceptBank random_bank(Index size, Index dim, Rng& rng) {
  std::vector<Concept> cs;
  for (Index i = 0; i < size; ++i) cs.push_back({"c" + std::to_string(i), random_unit(dim, rng)});
  return ConceptBank(std::move(cs));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::argument;
}

TEST(Normalize, ThreeFourFive) {
  const UnitVector u = unit({3, 4});
  EXPECT_NEAR(u[0], 0.6, 1e-15);
  EXPECT_NEAR(u[1], 0.8, 1e-15);
}

TEST(Normalize, IdempotentOnUnitVectors) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const UnitVector u = random_unit(16, rng);
    EXPECT_LT((normalize(u.values()).values() - u.values()).norm(), 1e-15);
  }
}

TEST(Normalize, ZeroVectorIsDegenerate) {
  EXPECT_EQ(kind_of([] { normalize(Vector(Vector::Zero(3))); }), ErrorKind::degenerate_vector);
}

TEST(UnitVectorType, RejectsOffSphereValues) {
  Vector v(2);
  v << 1, 0.01;
  EXPECT_EQ(kind_of([&] { UnitVector::from_normalized(v); }), ErrorKind::numeric);
  v << 1, 0;
  EXPECT_NO_THROW(UnitVector::from_normalized(v));
}

ConceptBank hand_bank() {
  return ConceptBank({{"x", unit({1, 0})}, {"y", unit({0, 1})}, {"xy", unit({0.6, 0.8})}});
}

TEST(Retrieve, HandComputedDotProducts) {
  const PromptSet p = retrieve_prompts(unit({1, 0}), hand_bank(), 2);
  ASSERT_EQ(p.size(), 2);
  EXPECT_EQ(p.indices, (std::vector<Index>{0, 2}));
  EXPECT_NEAR(p.similarities[0], 1.0, 1e-15);
  EXPECT_NEAR(p.similarities[1], 0.6, 1e-15);
  EXPECT_EQ(p.features.row(1), hand_bank().features().row(2));
}

TEST(Retrieve, WholeBankSorted) {
  const PromptSet p = retrieve_prompts(unit({1, 0}), hand_bank(), 3);
  EXPECT_EQ(p.indices, (std::vector<Index>{0, 2, 1}));
}

TEST(Retrieve, Errors) {
  EXPECT_EQ(kind_of([] { retrieve_prompts(unit({1, 0}), hand_bank(), 4); }), ErrorKind::bound);
  EXPECT_EQ(kind_of([] { retrieve_prompts(unit({1, 0, 0}), hand_bank(), 1); }), ErrorKind::dimension);
}

TEST(Retrieve, TiesGoToLowerIndex) {
  const ConceptBank bank({{"a", unit({0, 1})}, {"b", unit({1, 0})}, {"c", unit({1, 0})}});
  const PromptSet p = retrieve_prompts(unit({1, 0}), bank, 2);
  EXPECT_EQ(p.indices, (std::vector<Index>{1, 2}));
}

TEST(Retrieve, MatchesFullSortOracle) {
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const ConceptBank bank = random_bank(1000, 64, rng);
    const UnitVector q = random_unit(64, rng);
    std::vector<std::pair<real, Index>> all;
    for (Index i = 0; i < bank.size(); ++i) all.emplace_back(bank[i].feature.dot(q), i);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const PromptSet p = retrieve_prompts(q, bank, 16);
    for (Index j = 0; j < 16; ++j) {
      EXPECT_EQ(p.indices[static_cast<std::size_t>(j)], all[static_cast<std::size_t>(j)].second);
      EXPECT_NEAR(p.similarities[static_cast<std::size_t>(j)], all[static_cast<std::size_t>(j)].first, 1e-12);
      EXPECT_EQ(p.features.row(j), bank.features().row(all[static_cast<std::size_t>(j)].second));
    }
  }
}

TEST(Retrieve, PermutationStable) {
  Rng rng(4);
  const ConceptBank bank = random_bank(200, 8, rng);
  std::vector<std::size_t> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Concept> shuffled;
  for (std::size_t i : perm) shuffled.push_back(bank.concepts()[i]);
  const ConceptBank permuted(std::move(shuffled));
  for (int trial = 0; trial < 20; ++trial) {
    const UnitVector q = random_unit(8, rng);
    const PromptSet a = retrieve_prompts(q, bank, 10);
    const PromptSet b = retrieve_prompts(q, permuted, 10);
    for (std::size_t j = 0; j < 10; ++j) {
      EXPECT_EQ(bank[a.indices[j]].surface, permuted[b.indices[j]].surface);
      EXPECT_EQ(a.similarities[j], b.similarities[j]);
    }
  }
}

TEST(Retrieve, SmallerKIsPrefix) {
  Rng rng(5);
  const ConceptBank bank = random_bank(300, 12, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const UnitVector q = random_unit(12, rng);
    const PromptSet big = retrieve_prompts(q, bank, 40);
    for (Index k : {1, 7, 39}) {
      const PromptSet small = retrieve_prompts(q, bank, k);
      EXPECT_TRUE(std::equal(small.indices.begin(), small.indices.end(), big.indices.begin()));
    }
    EXPECT_TRUE(std::is_sorted(big.similarities.rbegin(), big.similarities.rend()));
  }
}

TEST(ConceptBankType, RejectsDuplicatesAndMixedDims) {
  EXPECT_THROW(ConceptBank({{"a", unit({1, 0})}, {"a", unit({0, 1})}}), Error);
  EXPECT_THROW(ConceptBank({{"a", unit({1, 0})}, {"b", unit({0, 1, 0})}}), Error);
}

TEST(PoolFrames, SingleAndIdenticalFrames) {
  const UnitVector f = unit({0.3, -0.4, 1});
  const std::vector<UnitVector> one{f};
  const std::vector<UnitVector> two{f, f};
  EXPECT_LT((pool_frames(one).values() - f.values()).norm(), 1e-15);
  EXPECT_LT((pool_frames(two).values() - f.values()).norm(), 1e-15);
}

TEST(PoolFrames, Symmetric) {
  const std::vector<UnitVector> frames{unit({1, 0}), unit({0, 1})};
  const UnitVector p = pool_frames(frames);
  EXPECT_NEAR(p[0], std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(p[1], std::sqrt(0.5), 1e-15);
}

TEST(PoolFrames, Errors) {
  EXPECT_EQ(kind_of([] { pool_frames(std::vector<UnitVector>{}); }), ErrorKind::empty_input);
  EXPECT_EQ(kind_of([] { pool_frames(std::vector<UnitVector>{unit({1, 0}), unit({-1, 0})}); }),
            ErrorKind::degenerate_vector);
}

TEST(PoolFrames, OrderInvariant) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<UnitVector> frames;
    for (int i = 0; i < 5; ++i) frames.push_back(random_unit(10, rng));
    const UnitVector a = pool_frames(frames);
    std::shuffle(frames.begin(), frames.end(), rng);
    EXPECT_LT((pool_frames(frames).values() - a.values()).norm(), 1e-14);
  }
}

TEST(GapReport, IdenticalSets) {
  Rng rng(1);
  std::vector<UnitVector> t;
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 10; ++i) {
    t.push_back(random_unit(6, rng));
    pairs.emplace_back(i, i);
  }
  const GapReport r = gap_report(t, t, pairs);
  EXPECT_NEAR(r.centroid_distance, 0, 1e-15);
  EXPECT_NEAR(r.mean_paired_cosine, 1, 1e-14);
}

TEST(GapReport, OrthogonalPair) {
  const std::vector<UnitVector> t{unit({1, 0})}, v{unit({0, 1})};
  const std::vector<std::pair<Index, Index>> pairs{{0, 0}};
  const GapReport r = gap_report(t, v, pairs);
  EXPECT_NEAR(r.centroid_distance, std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(r.mean_paired_cosine, 0, 1e-15);
}

TEST(GapReport, RotatedSetMatchesRecompute) {
  Rng rng(12);
  const Index d = 5;
  const Eigen::HouseholderQR<Matrix> qr(test::random_matrix(d, d, rng));
  const Matrix rot = qr.householderQ();
  std::vector<UnitVector> t, v;
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 30; ++i) {
    t.push_back(random_unit(d, rng));
    v.push_back(normalize(Vector(rot * t.back().values())));
    pairs.emplace_back(i, i);
  }
  real cos_sum = 0;
  Vector ct = Vector::Zero(d), cv = Vector::Zero(d);
  for (Index i = 0; i < 30; ++i) {
    const Vector& a = t[static_cast<std::size_t>(i)].values();
    cos_sum += a.dot(rot * a);
    ct += a;
    cv += rot * a;
  }
  const GapReport r = gap_report(t, v, pairs);
  EXPECT_NEAR(r.mean_paired_cosine, cos_sum / 30, 1e-12);
  EXPECT_NEAR(r.centroid_distance, (ct / 30 - cv / 30).norm(), 1e-12);
}

TEST(GapReport, Errors) {
  const std::vector<UnitVector> t{unit({1, 0})};
  const std::vector<std::pair<Index, Index>> bad{{0, 1}};
  EXPECT_EQ(kind_of([&] { gap_report(t, t, bad); }), ErrorKind::bound);
  EXPECT_EQ(kind_of([&] { gap_report(std::vector<UnitVector>{}, t, {}); }), ErrorKind::empty_input);
}

TEST(TopK, DescendingWithLowIndexTies) {
  Vector s(5);
  s << 0.1, 0.5, 0.5, -1, 0.9;
  EXPECT_EQ(top_k_indices(s, 3), (std::vector<Index>{4, 1, 2}));
  EXPECT_EQ(kind_of([&] { top_k_indices(s, 6); }), ErrorKind::bound);
}

TEST(UnitAuditTest, TracksDeviation) {
  reset_unit_audit();
  Rng rng(3);
  for (int i = 0; i < 100; ++i) random_unit(32, rng);
  const UnitAudit a = unit_audit();
  EXPECT_GE(a.count, 100u);
  EXPECT_LE(a.max_deviation, 1e-6);
}

}  // namespace
}  // namespace promptcap
