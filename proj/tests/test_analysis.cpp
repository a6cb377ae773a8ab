#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "fefm/analysis.hpp"
#include "test_helpers.hpp"

using namespace fefm;

namespace {

std::vector<double> random_symmetric(int k, std::mt19937_64& rng, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> A(k * k);
    for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) A[a * k + b] = A[b * k + a] = dist(rng);
    return A;
}

// roots of the characteristic cubic of a symmetric 3x3, via the trigonometric
// solution (all roots real), sorted non-increasing
std::vector<double> cubic_eigen_oracle(const std::vector<double>& A) {
    const double a11 = A[0], a12 = A[1], a13 = A[2], a22 = A[4], a23 = A[5], a33 = A[8];
    const double p1 = a12 * a12 + a13 * a13 + a23 * a23;
    const double q = (a11 + a22 + a33) / 3.0;
    const double p2 = (a11 - q) * (a11 - q) + (a22 - q) * (a22 - q) + (a33 - q) * (a33 - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    // B = (A - q I) / p ; r = det(B) / 2
    auto d = [&](double x) { return x; };
    const double b11 = (a11 - q) / p, b22 = (a22 - q) / p, b33 = (a33 - q) / p;
    const double b12 = a12 / p, b13 = a13 / p, b23 = a23 / p;
    const double detB = b11 * (b22 * b33 - b23 * b23) - b12 * (b12 * b33 - b23 * b13) +
                        b13 * (b12 * b23 - b22 * b13);
    double r = detB / 2.0;
    r = std::clamp(r, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    const double e2 = 3.0 * q - e1 - e3;
    (void)d;
    return {e1, e2, e3};
}

}  // namespace

TEST_CASE("jacobi handles diagonal and known 2x2 cases") {
    auto diag = symmetric_eigenvalues({3, 0, 0, -1}, 2);
    REQUIRE(diag.values == std::vector<double>{3, -1});
    auto flip = symmetric_eigenvalues({0, 1, 1, 0}, 2);
    REQUIRE(flip.values[0] == Catch::Approx(1.0));
    REQUIRE(flip.values[1] == Catch::Approx(-1.0));
}

TEST_CASE("jacobi rejects non-symmetric input") {
    REQUIRE_THROWS_AS(symmetric_eigenvalues({0, 1, 0, 0}, 2), NumericError);
}

TEST_CASE("jacobi matches the characteristic-cubic oracle on random 3x3") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        auto A = random_symmetric(3, rng);
        auto eig = symmetric_eigenvalues(A, 3);
        auto oracle = cubic_eigen_oracle(A);
        REQUIRE(eig.values.size() == 3);
        for (int t = 0; t < 3; ++t) REQUIRE(eig.values[t] == Catch::Approx(oracle[t]).margin(1e-8));
        REQUIRE(eig.values[0] >= eig.values[1]);
        REQUIRE(eig.values[1] >= eig.values[2]);
    }
}

TEST_CASE("eigen reconstruction and orthonormality") {
    std::mt19937_64 rng(23);
    for (int k : {2, 5, 9, 16}) {
        auto A = random_symmetric(k, rng);
        auto eig = symmetric_eigenvalues(A, k);
        const double normF = frobenius_norm(A);
        // Q Lambda Q^T rebuilds A
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) {
                double s = 0.0;
                for (int t = 0; t < k; ++t)
                    s += eig.vectors[a * k + t] * eig.values[t] * eig.vectors[b * k + t];
                REQUIRE(std::abs(s - A[a * k + b]) <= 1e-8 * normF);
            }
        // Q^T Q = I
        for (int s = 0; s < k; ++s)
            for (int t = 0; t < k; ++t) {
                double dot = 0.0;
                for (int r = 0; r < k; ++r) dot += eig.vectors[r * k + s] * eig.vectors[r * k + t];
                REQUIRE(std::abs(dot - (s == t ? 1.0 : 0.0)) <= 1e-8);
            }
    }
}

TEST_CASE("pair strength examples and the Frobenius identity") {
    REQUIRE(pair_strength({3, 0, 0, 4}, 2) == Catch::Approx(5.0));
    REQUIRE(pair_strength({0, 1, 1, 0}, 2) == Catch::Approx(std::sqrt(2.0)));
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 15);
        auto A = random_symmetric(k, rng);
        REQUIRE(pair_strength(A, k) == Catch::Approx(frobenius_norm(A)).epsilon(1e-8));
    }
}

TEST_CASE("bilinear form equals the eigenbasis expansion") {
    // v_i^T W v_j == sum_t lambda_t b_t c_t with b, c the eigenbasis coordinates
    std::mt19937_64 rng(31);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 7);
        auto W = random_symmetric(k, rng);
        std::vector<double> vi(k), vj(k);
        for (auto& x : vi) x = dist(rng);
        for (auto& x : vj) x = dist(rng);
        auto eig = symmetric_eigenvalues(W, k);
        double expansion = 0.0;
        for (int t = 0; t < k; ++t) {
            double b = 0.0, c = 0.0;
            for (int r = 0; r < k; ++r) {
                b += vi[r] * eig.vectors[r * k + t];
                c += vj[r] * eig.vectors[r * k + t];
            }
            expansion += eig.values[t] * b * c;
        }
        REQUIRE(pair_score_fefm(vi, vj, W) == Catch::Approx(expansion).epsilon(1e-8).margin(1e-8));
    }
}

TEST_CASE("field pair ranking orders by strength with deterministic tiebreak") {
    const int n = 4, k = 2;
    auto model = ShallowParams::init(ModelKind::FEFM, 8, n, k, 0);
    std::mt19937_64 rng(33);
    randomize(model, rng, 0.2);
    FieldPairIndex pairs(n);
    // scale one pair far above the rest
    const int strong = pairs.index(1, 3);
    for (int t = 0; t < k * k; ++t) model.u[static_cast<int64_t>(strong) * k * k + t] *= 10.0;
    std::vector<std::string> names{"fa", "fb", "fc", "fd"};
    auto report = rank_field_pairs(model, names, -1);
    REQUIRE(report.entries.size() == static_cast<size_t>(pairs.count()));
    REQUIRE(report.entries[0].field_a == "fb");
    REQUIRE(report.entries[0].field_b == "fd");
    for (size_t i = 1; i < report.entries.size(); ++i)
        REQUIRE(report.entries[i - 1].strength >= report.entries[i].strength);

    // strengths agree with the Frobenius oracle and ranking is reproducible from it
    for (const auto& e : report.entries) REQUIRE(e.eigenvalues.size() == static_cast<size_t>(k));
    for (int p = 0; p < pairs.count(); ++p) {
        auto W = effective_pair_matrix(model, p);
        auto [f, g] = pairs.fields(p);
        for (const auto& e : report.entries)
            if (e.field_a == names[f] && e.field_b == names[g])
                REQUIRE(e.strength == Catch::Approx(frobenius_norm(W)).epsilon(1e-8));
    }

    auto top2 = rank_field_pairs(model, names, 2);
    REQUIRE(top2.entries.size() == 2);

    model.symmetric_mode = false;
    REQUIRE_THROWS_AS(rank_field_pairs(model, names, 7), ConfigError);
}

TEST_CASE("report csv shape") {
    auto model = ShallowParams::init(ModelKind::FEFM, 4, 2, 2, 1);
    auto report = rank_field_pairs(model, {"a", "b"}, 7);
    std::ostringstream out;
    write_report_csv(out, report);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "field_a,field_b,strength,eigenvalues");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == 1);
}
