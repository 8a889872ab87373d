#include "gptree/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using gptree::RngStream;

TEST_CASE("identical seed and stream give identical sequences") {
    RngStream a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different streams diverge") {
    RngStream a(42, 0), b(42, 1);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("derive does not advance the parent and is reproducible") {
    RngStream parent(5);
    RngStream copy = parent;
    const RngStream c1 = parent.derive(3);
    const RngStream c2 = parent.derive(3);
    CHECK(parent.next_u64() == copy.next_u64());
    RngStream x = c1, y = c2;
    CHECK(x.next_u64() == y.next_u64());
    RngStream z = parent.derive(4);
    RngStream w = parent.derive(3);
    CHECK(z.next_u64() != w.next_u64());
}

TEST_CASE("derived children of different parents differ") {
    RngStream a = RngStream(1).derive(0).derive(1);
    RngStream b = RngStream(1).derive(1).derive(0);
    CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("uniform stays strictly inside (0, 1) and has mean near one half") {
    RngStream r(11);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal and exponential moments") {
    RngStream r(12);
    const int n = 200000;
    double s = 0, s2 = 0, e = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        e += r.exponential();
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(e / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("below covers its range and handles trivial bounds") {
    RngStream r(13);
    CHECK(r.below(0) == 0);
    CHECK(r.below(1) == 0);
    std::set<std::size_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t v = r.below(5);
        REQUIRE(v < 5);
        seen.insert(v);
    }
    CHECK(seen.size() == 5);
}

TEST_CASE("permutation is a permutation") {
    RngStream r(14);
    std::vector<std::size_t> p = r.permutation(50);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(50);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    CHECK(p != iota);
}

TEST_CASE("saved state continues the stream exactly") {
    RngStream r(15, 2);
    for (int i = 0; i < 17; ++i) r.next_u64();
    RngStream restored = RngStream::restore(r.seed(), r.stream_id(), r.state());
    for (int i = 0; i < 50; ++i) CHECK(r.next_u64() == restored.next_u64());
    CHECK_THROWS_AS(RngStream::restore(1, 0, "not a state"), std::invalid_argument);
}
