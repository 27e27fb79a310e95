#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "corrode/des.hpp"

using namespace corrode;

namespace {

const WorkloadSpec kDeskLoad{500, 0.4, 0.005};

EdgeRecord recordIn(EdgeState s, bool distributed = true) {
  EdgeRecord e;
  e.state = s;
  e.isDistributed = distributed;
  return e;
}

WriteInFlight writeBy(bool dirty, bool conflicted = false, bool partnerDirty = false) {
  WriteInFlight w;
  w.writerDirty = dirty;
  w.conflicted = conflicted;
  w.partnerDirty = partnerDirty;
  w.completionTime = 1.0;
  return w;
}

}  // namespace

TEST(ReadCount, DegenerateAtROne) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sampleReadCount(rng, 1.0), 2);
}

TEST(ReadCount, MeanAndMassFunction) {
  Rng rng(2);
  const int n = 1'000'000;
  double sum = 0.0;
  int minSeen = 100;
  for (int i = 0; i < n; ++i) {
    const int k = sampleReadCount(rng, 0.4);
    sum += k;
    minSeen = std::min(minSeen, k);
  }
  EXPECT_EQ(minSeen, 2);
  EXPECT_NEAR(sum / n, 3.5, 0.01);  // 2 + (1 - r) / r

  int twos = 0;
  for (int i = 0; i < n; ++i) twos += sampleReadCount(rng, 0.5) == 2;
  EXPECT_NEAR(static_cast<double>(twos) / n, 0.5, 0.005);
}

TEST(EdgeSampling, CompleteIsUniform) {
  GraphSpec g{10, 0.3, Complete{}};
  EdgeSampler sampler(g);
  Rng rng(3);
  std::vector<int> hits(10);
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) ++hits[sampleEdge(rng, sampler)];
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / n, 0.1, 0.003);
}

TEST(EdgeSampling, DefaultScaleFreeCategoryFrequencies) {
  const auto sf = ScaleFree::defaultTable();
  GraphSpec g{static_cast<double>(sf.totalEdges()), 0.3, sf};
  EdgeSampler sampler(g);
  Rng rng(4);
  const int n = 1'000'000;
  std::vector<int> perCategory(7);
  for (int i = 0; i < n; ++i) {
    const auto e = sampler(rng);
    std::size_t j = 0;
    while (j + 1 < 7 && e >= sampler.categoryOffset(j + 1)) ++j;
    ++perCategory[j];
  }
  EXPECT_NEAR(static_cast<double>(perCategory[0]) / n, 0.50, 0.002);
  EXPECT_NEAR(static_cast<double>(perCategory[6]) / n, 0.01, 0.001);

  const double perEdge0 = sf.categories[0].probability / static_cast<double>(sf.categories[0].edges);
  const double perEdge6 = sf.categories[6].probability / static_cast<double>(sf.categories[6].edges);
  EXPECT_NEAR(perEdge0 / perEdge6, 5e7, 1e-3);
}

TEST(EdgeSampling, SingleCategoryEqualsComplete) {
  EdgeSampler complete(GraphSpec{1000, 0.3, Complete{}});
  EdgeSampler single(GraphSpec{1000, 0.3, ScaleFree{{{1000, 1.0}}}});
  Rng a(5), b(5);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(complete(a), single(b));
}

TEST(Read, Outcomes) {
  Rng rng(6);
  EXPECT_EQ(executeRead(recordIn(EdgeState::CleanLocal, false), rng), ReadOutcome::Clean);
  EXPECT_EQ(executeRead(recordIn(EdgeState::CleanDistributed), rng), ReadOutcome::Clean);
  EXPECT_EQ(executeRead(recordIn(EdgeState::SemanticallyCorrupt), rng), ReadOutcome::Corrupt);

  const auto inconsistent = recordIn(EdgeState::ReciprocallyInconsistent);
  const int n = 1'000'000;
  int clean = 0;
  for (int i = 0; i < n; ++i) clean += executeRead(inconsistent, rng) == ReadOutcome::Clean;
  EXPECT_NEAR(static_cast<double>(clean) / n, 0.5, 0.0015);
}

TEST(Conflict, EndMatchingDefinition) {
  WriteInFlight w1;
  w1.edge = 9;
  w1.startTime = 1.000;
  w1.completionTime = 1.007;
  w1.remoteEnd = End::B;

  WriteInFlight w2;
  w2.edge = 9;
  w2.startTime = 1.003;
  w2.completionTime = 1.010;
  w2.remoteEnd = End::A;  // starts at B
  ASSERT_EQ(w2.startEnd(), End::B);
  EXPECT_TRUE(conflicts(w1, w2));

  w2.remoteEnd = End::B;  // starts at A
  EXPECT_FALSE(conflicts(w1, w2));

  w2.remoteEnd = End::A;
  w2.startTime = 1.008;  // after w1 landed
  EXPECT_FALSE(conflicts(w1, w2));

  w2.startTime = 1.003;
  w2.writerDirty = true;
  markConflict(w1, w2);
  EXPECT_TRUE(w1.conflicted && w2.conflicted);
  EXPECT_TRUE(w1.partnerDirty);
  EXPECT_FALSE(w2.partnerDirty);
}

TEST(Conflict, SimulatorMarksOverlappingWritesAtMatchingEnds) {
  GraphSpec g{10, 1.0, Complete{}};
  int seen[2] = {0, 0};
  for (std::uint64_t seed = 1; seed < 200 && (!seen[0] || !seen[1]); ++seed) {
    SimConfig c;
    c.seed = seed;
    Simulator sim(g, WorkloadSpec{1, 0.4, 10.0}, c);
    sim.setTime(1.0);
    const auto w1 = sim.beginWrite(3, false);
    sim.setTime(1.0 + 1e-9);
    const auto w2 = sim.beginWrite(3, true);
    ASSERT_TRUE(w1 && w2);
    const bool expect = sim.write(*w2).startEnd() == sim.write(*w1).remoteEnd;
    EXPECT_EQ(sim.write(*w1).conflicted, expect);
    EXPECT_EQ(sim.write(*w2).conflicted, expect);
    EXPECT_EQ(sim.edge(3).inFlight, *w2);
    ++seen[expect];
    if (expect) {
      EXPECT_TRUE(sim.write(*w1).partnerDirty);
      sim.completeWrite(*w1);
      EXPECT_EQ(sim.edge(3).state, EdgeState::SemanticallyCorrupt);
    }
  }
  EXPECT_GT(seen[0], 0);
  EXPECT_GT(seen[1], 0);
}

TEST(Conflict, LocalWritesCommitImmediately) {
  SimConfig c;
  Simulator sim(GraphSpec{10, 0.0, Complete{}}, kDeskLoad, c);
  EXPECT_FALSE(sim.beginWrite(0, false).has_value());
  EXPECT_EQ(sim.edge(0).state, EdgeState::CleanLocal);
  EXPECT_FALSE(sim.beginWrite(0, true).has_value());
  EXPECT_EQ(sim.edge(0).state, EdgeState::SemanticallyCorrupt);
  EXPECT_EQ(sim.counts()[3], 1u);
}

TEST(Conflict, StationaryFrequencyMatchesConflictProbability) {
  const double lambda = 1e4, delta = 0.005, n = 2e5;
  SimConfig c;
  c.seed = 99;
  c.horizon = 600.0;
  c.sampleInterval = 600.0;
  c.dirtyReads = false;
  const auto r = runSimulation(GraphSpec{n, 1.0, Complete{}}, WorkloadSpec{lambda, 0.4, delta}, c);
  const double writes = static_cast<double>(r.events.distributedWrites);
  ASSERT_GE(writes, 1e5);
  const double q = conflictProbability(lambda, delta, n);
  const double est = static_cast<double>(r.events.conflicts) / writes;
  EXPECT_NEAR(est, q, 3 * std::sqrt(q * (1 - q) / writes));
}

TEST(WriteOutcome, PrecedenceRules) {
  using enum EdgeState;
  EXPECT_EQ(applyWriteOutcome(recordIn(ReciprocallyInconsistent), writeBy(false)), CleanDistributed);
  EXPECT_EQ(applyWriteOutcome(recordIn(CleanDistributed), writeBy(false, true, false)), ReciprocallyInconsistent);
  EXPECT_EQ(applyWriteOutcome(recordIn(ReciprocallyInconsistent), writeBy(false, true, false)),
            ReciprocallyInconsistent);
  EXPECT_EQ(applyWriteOutcome(recordIn(CleanLocal, false), writeBy(true)), SemanticallyCorrupt);
  EXPECT_EQ(applyWriteOutcome(recordIn(CleanLocal, false), writeBy(false)), CleanLocal);
  EXPECT_EQ(applyWriteOutcome(recordIn(CleanDistributed), writeBy(false, true, true)), SemanticallyCorrupt);
  EXPECT_EQ(applyWriteOutcome(recordIn(CleanDistributed), writeBy(true, true, false)), SemanticallyCorrupt);
  for (bool d : {false, true})
    for (bool c : {false, true})
      for (bool p : {false, true})
        EXPECT_EQ(applyWriteOutcome(recordIn(SemanticallyCorrupt), writeBy(d, c, p)), SemanticallyCorrupt);
}

TEST(Run, NoDistributedEdgesNeverCorrupts) {
  SimConfig c;
  c.horizon = 200.0;
  const auto r = runSimulation(GraphSpec{1e4, 0.0, Complete{}}, kDeskLoad, c);
  EXPECT_TRUE(r.horizonExceeded());
  EXPECT_EQ(r.endTime, 200.0);
  ASSERT_EQ(r.trajectory.size(), 201u);
  for (const auto& row : r.trajectory) {
    EXPECT_EQ(row.n[2], 0u);
    EXPECT_EQ(row.n[3], 0u);
  }
}

TEST(Run, DeterministicForSeed) {
  SimConfig c;
  c.seed = 42;
  const GraphSpec g{1e4, 0.3, Complete{}};
  const auto a = runSimulation(g, kDeskLoad, c);
  const auto b = runSimulation(g, kDeskLoad, c);
  EXPECT_TRUE(a == b);
  c.seed = 43;
  EXPECT_FALSE(a == runSimulation(g, kDeskLoad, c));
}

TEST(Run, ConservationMonotoneCorruptionAndLegality) {
  const GraphSpec g{1e4, 0.3, Complete{}};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SimConfig c;
    c.seed = seed;
    c.sampleInterval = 0.5;
    const auto r = runSimulation(g, kDeskLoad, c);
    ASSERT_TRUE(r.uGammaEstimate.has_value());
    std::uint64_t prev3 = 0;
    for (const auto& row : r.trajectory) {
      EXPECT_EQ(row.total(), 10000u);
      EXPECT_GE(row.n[3], prev3);
      prev3 = row.n[3];
    }
    EXPECT_GE(r.trajectory.back().n[3], 1000u);
    EXPECT_EQ(r.trajectory.back().t, *r.uGammaEstimate);
    EXPECT_EQ(r.illegalTransitions(), 0u);
    EXPECT_GT(r.events.conflicts, 0u);
  }
}

TEST(Run, StateTwoStaysBoundedWithoutDirtyReads) {
  // delta = 1 s makes conflicts frequent: q = 500 / 20500
  SimConfig c;
  c.seed = 8;
  c.horizon = 4000.0;
  c.sampleInterval = 10.0;
  c.dirtyReads = false;
  const auto r = runSimulation(GraphSpec{1e4, 0.3, Complete{}}, WorkloadSpec{500, 0.4, 1.0}, c);
  ASSERT_TRUE(r.horizonExceeded());
  EXPECT_GT(r.events.inconsistencies, 100u);
  EXPECT_GT(r.events.corrections, 100u);
  std::uint64_t maxN2 = 0;
  double firstHalf = 0, secondHalf = 0;
  const std::size_t half = r.trajectory.size() / 2;
  for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
    const auto n2 = r.trajectory[i].n[2];
    maxN2 = std::max(maxN2, n2);
    (i < half ? firstHalf : secondHalf) += static_cast<double>(n2);
    EXPECT_EQ(r.trajectory[i].n[3], 0u);
  }
  // balance n2 ~ n1 * g12 / g21 = 3000 * q / (1 - q) ~ 75
  EXPECT_LT(maxN2, 300u);
  EXPECT_LT(secondHalf, 1.5 * firstHalf);
}

TEST(Run, SingleCategoryScaleFreeEqualsComplete) {
  SimConfig c;
  c.seed = 17;
  const auto a = runSimulation(GraphSpec{1e4, 0.3, Complete{}}, kDeskLoad, c);
  const auto b = runSimulation(GraphSpec{1e4, 0.3, ScaleFree{{{10000, 1.0}}}}, kDeskLoad, c);
  EXPECT_TRUE(a == b);
}

TEST(Run, ScaleFreeSplitsDistributedEdgesPerCategory) {
  ScaleFree sf{{{100, 0.5}, {1000, 0.3}, {10000, 0.2}}};
  SimConfig c;
  c.horizon = 1.0;
  Simulator sim(GraphSpec{11100, 0.3, sf}, kDeskLoad, c);
  EXPECT_EQ(sim.counts()[1], 30u + 300u + 3000u);
  EXPECT_TRUE(sim.edge(29).isDistributed);
  EXPECT_FALSE(sim.edge(30).isDistributed);
  EXPECT_EQ(sim.edge(100).category, 1);
  EXPECT_TRUE(sim.edge(100 + 299).isDistributed);
  EXPECT_FALSE(sim.edge(100 + 300).isDistributed);
}

TEST(Run, CategoryOnsetsWithAllCategoriesRule) {
  ScaleFree sf{{{10, 0.5}, {100, 0.3}, {1000, 0.2}}};
  SimConfig c;
  c.seed = 3;
  c.stopRule = StopRule::AllCategoryOnsets;
  c.sampleInterval = 10.0;
  const auto r = runSimulation(GraphSpec{1110, 0.3, sf}, WorkloadSpec{200, 0.4, 0.01}, c);
  ASSERT_TRUE(r.uGammaEstimate.has_value());
  ASSERT_EQ(r.categoryOnset.size(), 3u);
  for (const auto& o : r.categoryOnset) ASSERT_TRUE(o.has_value());
  EXPECT_LT(*r.categoryOnset[0], *r.categoryOnset[2]);
  EXPECT_GE(r.endTime, *r.uGammaEstimate);
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_GE(static_cast<double>(r.categoryCounts[j][3]), 0.1 * static_cast<double>(r.categorySizes[j]));
}

TEST(Run, RejectsUnsimulatableGraphs) {
  SimConfig c;
  EXPECT_THROW(Simulator(GraphSpec{0, 0.3, Complete{}}, kDeskLoad, c), InvalidInput);
  EXPECT_THROW(Simulator(GraphSpec{10.5, 0.3, Complete{}}, kDeskLoad, c), InvalidInput);
  EXPECT_THROW(Simulator(GraphSpec{1e10, 0.3, Complete{}}, kDeskLoad, c), InvalidInput);
  c.horizon = 0;
  EXPECT_THROW(Simulator(GraphSpec{10, 0.3, Complete{}}, kDeskLoad, c), InvalidInput);
}
