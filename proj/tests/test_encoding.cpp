#include <cmath>

#include "doctest.h"
#include "nexus/encoding.hpp"

using namespace nexus;

TEST_SUITE_BEGIN("encoding");

TEST_CASE("sinusoidal encoding hits the analytic anchor points") {
    const long long steps[] = {0, 72, 144};
    TimeEncoding enc = sinusoidal_time_encoding(steps, 288);
    CHECK(enc.u.at(0, 0) == doctest::Approx(0.0));   // sin 0
    CHECK(enc.u.at(0, 1) == doctest::Approx(1.0));   // cos 0
    CHECK(enc.u.at(1, 0) == doctest::Approx(1.0));   // quarter period
    CHECK(enc.u.at(1, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(enc.u.at(2, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(enc.u.at(2, 1) == doctest::Approx(-1.0));
}

TEST_CASE("encoding is periodic in the step index") {
    const long long a[] = {300};
    const long long b[] = {12};
    TimeEncoding ea = sinusoidal_time_encoding(a, 288);
    TimeEncoding eb = sinusoidal_time_encoding(b, 288);
    CHECK(ea.u.equals(eb.u));

    const long long neg[] = {-276};  // == 12 mod 288
    CHECK(sinusoidal_time_encoding(neg, 288).u.equals(eb.u));
}

TEST_CASE("every row has unit norm") {
    std::vector<long long> steps = {1, 7, 55, 123, 999, 100000};
    TimeEncoding enc = sinusoidal_time_encoding(steps, 288);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const double norm = enc.u.at(i, 0) * enc.u.at(i, 0) + enc.u.at(i, 1) * enc.u.at(i, 1);
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero period is a domain error") {
    const long long steps[] = {0};
    CHECK_THROWS_AS(sinusoidal_time_encoding(steps, 0), DomainError);
}

TEST_CASE("constant encoding repeats the step-0 row") {
    TimeEncoding enc = constant_time_encoding(4, 288);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(enc.u.at(i, 0) == 0.0);
        CHECK(enc.u.at(i, 1) == 1.0);
    }
}

TEST_CASE("node embedding init is deterministic per seed") {
    Tensor a = init_node_embedding(8, 16, 42);
    Tensor b = init_node_embedding(8, 16, 42);
    Tensor c = init_node_embedding(8, 16, 43);
    CHECK(a.equals(b));
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != c[i];
    CHECK(differs);
}

TEST_CASE("node embedding entries are centered with the stated scale") {
    const std::size_t n = 100, d = 100;  // 10^4 entries
    Tensor e = init_node_embedding(n, d, 7);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    double sum = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(std::fabs(e[i]) <= scale);
        sum += e[i];
    }
    const double mean = sum / static_cast<double>(e.size());
    // uniform(-s, s) has sd s/sqrt(3); 3 standard errors of the sample mean
    const double se = scale / std::sqrt(3.0) / std::sqrt(static_cast<double>(e.size()));
    CHECK(std::fabs(mean) <= 3.0 * se);
}

TEST_SUITE_END();
