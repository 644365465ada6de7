#include "resumetrace/analyzer.hpp"

#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

using namespace resumetrace::metrics;

namespace {
constexpr std::int64_t kHourMs = 3'600'000;
constexpr std::int64_t kDayMs = 86'400'000;

std::vector<std::int64_t> hours(std::initializer_list<double> hs) {
  std::vector<std::int64_t> t;
  for (double h : hs) t.push_back(static_cast<std::int64_t>(h * kHourMs));
  return t;
}
}  // namespace

TEST_CASE("consecutive_ok boundary is inclusive") {
  std::vector<std::int64_t> t{0, 600'000};
  CHECK(consecutive_ok(t, 600));
  t = {0, 601'000};
  CHECK(!consecutive_ok(t, 600));
  t = {42};
  CHECK(consecutive_ok(t, 1));
  t = {};
  CHECK(consecutive_ok(t, 1));
}

TEST_CASE("lctp splits runs at oversized gaps") {
  CHECK(lctp_ms(hours({0, 1, 10, 11}), 2 * 3600) == kHourMs);
  CHECK(lctp_ms(std::vector<std::int64_t>{}, 3600) == 0);
  CHECK(lctp_ms(hours({0, 20, 40}), 24 * 3600) == 40 * kHourMs);
  CHECK(lctp_ms(std::vector<std::int64_t>{5}, 3600) == 0);
}

TEST_CASE("lctp equals the brute-force definition") {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::int64_t> l_dist(1, 5'000);
  for (int trial = 0; trial < 300; ++trial) {
    std::int64_t l_s = l_dist(rng);
    auto times = oracle::random_times(rng, 50, 10 * l_s * 1000);
    CAPTURE(trial);
    CHECK(lctp_ms(times, l_s) == oracle::lctp_bruteforce_ms(times, l_s));
  }
}

TEST_CASE("lctp sweep answers match the direct computation") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    auto times = oracle::random_times(rng, 40, 400'000);
    LctpSweep sweep(times);
    for (std::int64_t l_s : {1, 2, 10, 50, 100, 400, 1000}) {
      CHECK(sweep.lctp_ms(l_s) == lctp_ms(times, l_s));
    }
  }
}

TEST_CASE("lctp_max takes the max across hosts") {
  std::vector<VisitSequence> seqs{
      {"u", "a", {0, 3 * kDayMs}},
      {"u", "b", {0, 8 * kDayMs}},
  };
  CHECK(lctp_max_ms(seqs, 9 * 86'400) == 8 * kDayMs);
  CHECK(lctp_max_ms({}, 60) == 0);
}

TEST_CASE("permanently trackable needs edge coverage and the predicate") {
  SampleWindow window{0, 61 * kDayMs};
  std::vector<std::int64_t> daily;
  for (int d = 0; d <= 61; ++d) daily.push_back(d * kDayMs);
  CHECK(permanently_trackable(daily, 86'400, window));

  std::vector<std::int64_t> late(daily.begin(), daily.end());
  late.erase(late.begin(), late.begin() + 2);  // first visit two days in
  CHECK(!permanently_trackable(late, 86'400, window));

  CHECK(!permanently_trackable(std::vector<std::int64_t>{}, 86'400, window));
}

TEST_CASE("resumption ratio counts gaps within the lifetime") {
  std::vector<std::int64_t> t{0, 600'000, 1'200'000};  // ten-minute gaps
  CHECK(resumption_ratio(t, 15 * 60) == 1.0);
  CHECK(resumption_ratio(t, 5 * 60) == 0.0);
  CHECK(resumption_ratio(t, 1'000'000'000) == 1.0);
  CHECK_THROWS_AS(resumption_ratio(std::vector<std::int64_t>{7}, 60), UndefinedMetric);
}

TEST_CASE("lctp is bounded by the total span, equality iff consecutive") {
  std::mt19937_64 rng(4321);
  for (int trial = 0; trial < 200; ++trial) {
    auto times = oracle::random_times(rng, 30, 100'000);
    if (times.size() < 2) continue;
    std::int64_t l_s = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
    std::int64_t span = times.back() - times.front();
    std::int64_t v = lctp_ms(times, l_s);
    CHECK(v <= span);
    CHECK((v == span) == consecutive_ok(times, l_s));
  }
}

TEST_CASE("metrics are nondecreasing in the lifetime") {
  std::mt19937_64 rng(5);
  SampleWindow window{0, 2'000'000};
  for (int trial = 0; trial < 50; ++trial) {
    auto times = oracle::random_times(rng, 25, 150'000);
    std::int64_t prev_lctp = -1;
    double prev_rr = -1.0;
    int prev_pt = -1;
    for (std::int64_t l_s : {1, 5, 20, 60, 150, 400, 2000}) {
      std::int64_t cur = lctp_ms(times, l_s);
      CHECK(cur >= prev_lctp);
      prev_lctp = cur;
      if (times.size() >= 2) {
        double rr = resumption_ratio(times, l_s);
        CHECK(rr >= prev_rr);
        prev_rr = rr;
      }
      int pt = permanently_trackable(times, l_s, window) ? 1 : 0;
      CHECK(pt >= prev_pt);
      prev_pt = pt;
    }
  }
}

TEST_CASE("visit log load collapses duplicates and sorts") {
  std::istringstream csv(
      "user_id,timestamp_ms,host\n"
      "u1,5000,example.org\n"
      "u1,1000,example.org\n"
      "u1,1000,example.org\n"
      "u2,3000,example.org\n");
  VisitLog log = VisitLog::load_csv(csv);
  CHECK(log.user_count() == 2);
  CHECK(log.visits["u1"]["example.org"] == std::vector<std::int64_t>{1000, 5000});

  VisitLog clipped = log.clipped({2000, 6000});
  CHECK(clipped.visits["u1"]["example.org"] == std::vector<std::int64_t>{5000});
}

TEST_CASE("trackable share over a dataset") {
  SampleWindow window{0, 100 * kDayMs};
  VisitLog everyone, nobody, empty;
  for (int u = 0; u < 4; ++u) {
    std::vector<std::int64_t> dense, sparse;
    for (std::int64_t t = 0; t <= 100 * kDayMs; t += kDayMs / 2) dense.push_back(t);
    for (std::int64_t t = 0; t <= 100 * kDayMs; t += 3 * kDayMs) sparse.push_back(t);
    everyone.visits["u" + std::to_string(u)]["h"] = dense;    // every l/2
    nobody.visits["u" + std::to_string(u)]["h"] = sparse;     // every 3l
  }
  CHECK(trackable_share(everyone, 86'400, window) == 1.0);
  CHECK(trackable_share(nobody, 86'400, window) == 0.0);
  CHECK(trackable_share(empty, 86'400, window) == 0.0);
}

TEST_CASE("revisit interval cdf") {
  VisitLog log;
  log.visits["u"]["a"] = {0, 300'000, 600'000};
  auto points = revisit_interval_cdf(log);
  REQUIRE(points.size() == 1);
  CHECK(points[0].x == 300.0);
  CHECK(points[0].y == 1.0);

  VisitLog mixed;
  mixed.visits["u"]["a"] = {0, 60'000};
  mixed.visits["u"]["b"] = {0, 600'000};
  mixed.visits["v"]["c"] = {0, 6'000'000};
  auto pooled = revisit_interval_cdf(mixed);
  REQUIRE(pooled.size() == 3);
  CHECK(pooled[1].x == 600.0);
  CHECK(pooled[1].y == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("grid curves agree with pointwise evaluation") {
  std::mt19937_64 rng(77);
  VisitLog log;
  for (int u = 0; u < 6; ++u) {
    for (int h = 0; h < 3; ++h) {
      log.visits["u" + std::to_string(u)]["h" + std::to_string(h)] =
          oracle::random_times(rng, 20, 500'000);
    }
  }
  LifetimeGrid grid{{10, 60, 300, 900}};

  auto curves = lctp_max_curves(log, grid);
  for (std::size_t g = 0; g < grid.lifetimes_s.size(); ++g) {
    double sum = 0;
    std::vector<std::int64_t> values;
    for (const auto& [user, hosts] : log.visits) {
      std::int64_t best = 0;
      for (const auto& [host, times] : hosts) {
        best = std::max(best, lctp_ms(times, grid.lifetimes_s[g]));
      }
      values.push_back(best);
      sum += static_cast<double>(best);
    }
    CHECK(curves.mean_s[g] ==
          doctest::Approx(sum / static_cast<double>(values.size()) / 1000.0));
  }

  auto rr_curve = resumption_ratio_curve(log, grid);
  double direct = 0;
  int count = 0;
  for (const auto& [user, hosts] : log.visits) {
    for (const auto& [host, times] : hosts) {
      if (times.size() < 2) continue;
      direct += resumption_ratio(times, grid.lifetimes_s[1]);
      ++count;
    }
  }
  if (count > 0) CHECK(rr_curve[1] == doctest::Approx(direct / count));
}

TEST_CASE("lifetime grid validation") {
  CHECK_THROWS_AS(LifetimeGrid{{}}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(LifetimeGrid{{0, 5}}.validate(), std::invalid_argument);
  CHECK_THROWS_AS(LifetimeGrid{{5, 5}}.validate(), std::invalid_argument);
  CHECK_NOTHROW(LifetimeGrid{{5, 10}}.validate());
}
