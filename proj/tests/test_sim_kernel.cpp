#include <gtest/gtest.h>

#include <vector>

#include "atfn/sim_kernel.hpp"

using namespace atfn;

TEST(Kernel, FiresInTimeOrderWithFifoTies) {
  Kernel k;
  std::vector<int> order;
  k.schedule(30, [&] { order.push_back(3); });
  k.schedule(10, [&] { order.push_back(1); });
  k.schedule(10, [&] { order.push_back(2); });
  k.run();
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(k.now(), 30u);
}

TEST(Kernel, RunUntilStopsAtBoundaryAndAdvancesClock) {
  Kernel k;
  int fired = 0;
  k.schedule(100, [&] { ++fired; });
  k.schedule(101, [&] { ++fired; });
  EXPECT_EQ(k.run_until(100), 1u);
  EXPECT_EQ(fired, 1);
  EXPECT_EQ(k.now(), 100u);
  EXPECT_EQ(k.pending(), 1u);
  EXPECT_THROW(k.run_until(50), std::logic_error);
}

TEST(Kernel, EventsScheduledWhileRunningAreFired) {
  Kernel k;
  std::vector<SimTime> at;
  k.schedule(5, [&] {
    at.push_back(k.now());
    k.schedule_in(0, [&] { at.push_back(k.now()); });
    k.schedule_in(7, [&] { at.push_back(k.now()); });
  });
  k.run_until(20);
  EXPECT_EQ(at, (std::vector<SimTime>{5, 5, 12}));
}

TEST(Kernel, CancelledEventNeverFires) {
  Kernel k;
  bool a = false, b = false;
  const auto id = k.schedule(10, [&] { a = true; });
  k.schedule(10, [&] { b = true; });
  k.cancel(id);
  k.run();
  EXPECT_FALSE(a);
  EXPECT_TRUE(b);
  EXPECT_EQ(k.fired_total(), 1u);
}

TEST(Kernel, SchedulingInThePastThrows) {
  Kernel k;
  k.schedule(10, [] {});
  k.run();
  EXPECT_THROW(k.schedule(5, [] {}), std::logic_error);
}

TEST(Time, Conversions) {
  EXPECT_EQ(time::from_us(84.915), 84915u);
  EXPECT_EQ(time::service_interval(3e6), 333u);
  EXPECT_EQ(time::wire_time(256, 10.0), 205u);
  EXPECT_THROW(time::from_us(-1.0), std::invalid_argument);
  EXPECT_THROW(time::service_interval(0.0), std::invalid_argument);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, ForksAreIndependentOfParentUse) {
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) b.next_u64();
  Rng fa = a.fork(3), fb = b.fork(3);
  EXPECT_EQ(fa.next_u64(), fb.next_u64());
  EXPECT_NE(a.fork(1).next_u64(), a.fork(2).next_u64());
}

TEST(Rng, UniformStaysInRangeAndCoversIt) {
  Rng r(1);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.uniform(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int c : seen) EXPECT_GT(c, 800);
  EXPECT_THROW(r.uniform(0), std::invalid_argument);
}

TEST(Rng, ExponentialMean) {
  Rng r(9);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(r.exponential(1000.0));
  EXPECT_NEAR(sum / n, 1000.0, 15.0);
  EXPECT_EQ(r.exponential(0.0), 0u);
}
