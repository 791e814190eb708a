#include <gtest/gtest.h>

#include "nuhops/noise.hpp"

using namespace nuhops;

namespace {

std::vector<NoisePath> sample(const BcfSpec& spec, double dt, std::size_t steps, std::size_t M, std::uint64_t seed) {
    std::vector<NoisePath> out;
    for (std::size_t i = 0; i < M; ++i) {
        KeyedStream rng(seed, i, StreamPurpose::noise);
        out.push_back(generate_path(spec, dt, steps, rng));
    }
    return out;
}

}  // namespace

TEST(KeyedStream, ReproducibleAndKeyed) {
    KeyedStream a(7, 3, StreamPurpose::noise), b(7, 3, StreamPurpose::noise);
    KeyedStream c(7, 4, StreamPurpose::noise), d(7, 3, StreamPurpose::thermal), e(7, 3, StreamPurpose::noise, 1);
    for (int k = 0; k < 100; ++k) EXPECT_EQ(a(), b());
    KeyedStream a2(7, 3, StreamPurpose::noise);
    const auto first = a2();
    EXPECT_NE(first, c());
    EXPECT_NE(first, d());
    EXPECT_NE(first, e());
}

TEST(KeyedStream, ComplexNormalMoments) {
    KeyedStream rng(11, 0, StreamPurpose::noise);
    ComplexNormal n;
    const int M = 200000;
    cplx mean = 0.0, pseudo = 0.0;
    double var = 0.0;
    for (int k = 0; k < M; ++k) {
        const cplx x = n(rng);
        mean += x;
        var += std::norm(x);
        pseudo += x * x;
    }
    EXPECT_LT(std::abs(mean / double(M)), 5.0 / std::sqrt(double(M)));
    EXPECT_NEAR(var / M, 1.0, 5.0 * std::sqrt(1.0 / M));
    EXPECT_LT(std::abs(pseudo / double(M)), 5.0 / std::sqrt(double(M)));
}

TEST(NoisePath, GridAndDrive) {
    const NoisePath z = zero_path(0.01, 50);
    EXPECT_EQ(z.z.size(), 101u);
    EXPECT_EQ(z.n_steps(), 50u);
    EXPECT_DOUBLE_EQ(z.dt(), 0.01);

    const NoisePath d = designed_step_path(0.1, 100, 4.0, cplx(0.5, 0.1), -0.5);
    EXPECT_EQ(d.z[0], cplx(0.5, 0.1));
    EXPECT_EQ(d.z[80], cplx(0.5, 0.1));   // t = 4.0 still before the switch
    EXPECT_EQ(d.z[81], cplx(-0.5));
    EXPECT_EQ(d.drive(0), cplx(0.5, -0.1));
}

TEST(NoisePath, OuCovarianceMatchesTarget) {
    BcfSpec spec;
    spec.terms = {ExpTerm{0.25, cplx(1.0, 1.0)}};
    const auto paths = sample(spec, 0.02, 200, 4000, 101);
    const CovarianceReport rep = verify_covariance(paths, spec, 5.0, 50);
    EXPECT_TRUE(rep.pass) << rep.max_sigma_ratio;
    EXPECT_EQ(rep.lags.size(), 10u);
    EXPECT_NEAR(std::abs(rep.target[0] - 0.25), 0.0, 1e-15);
}

TEST(NoisePath, SpectralCovarianceMatchesTarget) {
    // complex amplitudes force the circulant-embedding route
    BcfSpec spec;
    spec.terms = {ExpTerm{cplx(0.3, 0.05), cplx(0.8, 2.0)}, ExpTerm{cplx(0.2, -0.05), cplx(1.5, -1.0)}};
    ASSERT_GT(spectrum(spec, 0.0), 0.0);
    const auto paths = sample(spec, 0.02, 150, 3000, 202);
    const CovarianceReport rep = verify_covariance(paths, spec, 5.0, 100);
    EXPECT_TRUE(rep.pass) << rep.max_sigma_ratio;
}

TEST(NoisePath, WrongModelIsDetected) {
    // paths drawn for one decay rate must fail against another
    BcfSpec spec, other;
    spec.terms = {ExpTerm{0.25, cplx(1.0, 1.0)}};
    other.terms = {ExpTerm{0.25, cplx(2.0, 1.0)}};
    const auto paths = sample(spec, 0.02, 200, 4000, 303);
    EXPECT_FALSE(verify_covariance(paths, other, 5.0).pass);
}

TEST(NoisePath, InvalidSpectrumIsRejected) {
    BcfSpec spec;
    spec.terms = {ExpTerm{1.0, 1.0}, ExpTerm{cplx(-0.9, 0.0), cplx(0.1, 0.0)}};
    KeyedStream rng(1, 0, StreamPurpose::noise);
    EXPECT_THROW(generate_path(spec, 0.01, 100, rng), Error);
}

TEST(NoisePath, GeneratorArgumentChecks) {
    KeyedStream rng(1, 0, StreamPurpose::noise);
    EXPECT_THROW(generate_ou_path(ExpTerm{0.25, cplx(0.0, 1.0)}, 0.01, 10, rng), Error);
    EXPECT_THROW(generate_ou_path(ExpTerm{0.25, 1.0}, -0.01, 10, rng), Error);
    EXPECT_THROW(generate_ou_path(ExpTerm{0.25, 1.0}, 0.01, 0, rng), Error);
    std::vector<NoisePath> few(10, zero_path(0.01, 10));
    BcfSpec spec;
    spec.terms = {ExpTerm{0.25, 1.0}};
    EXPECT_THROW(verify_covariance(few, spec), Error);
}

TEST(NoisePath, SameKeySamePath) {
    BcfSpec spec;
    spec.terms = {ExpTerm{0.25, cplx(1.0, 1.0)}, ExpTerm{0.1, cplx(0.5, 0.0)}};
    KeyedStream a(9, 5, StreamPurpose::noise), b(9, 5, StreamPurpose::noise), c(9, 6, StreamPurpose::noise);
    const NoisePath pa = generate_path(spec, 0.01, 100, a), pb = generate_path(spec, 0.01, 100, b);
    const NoisePath pc = generate_path(spec, 0.01, 100, c);
    EXPECT_EQ(pa.z, pb.z);
    EXPECT_NE(pa.z, pc.z);
    ASSERT_EQ(pa.components.size(), 2u);
    for (std::size_t k = 0; k < pa.z.size(); ++k)
        EXPECT_NEAR(std::abs(pa.z[k] - pa.components[0][k] - pa.components[1][k]), 0.0, 1e-15);
}

TEST(NoisePath, BinaryRoundTrip) {
    BcfSpec spec;
    spec.terms = {ExpTerm{0.25, cplx(1.0, 1.0)}};
    KeyedStream rng(4, 0, StreamPurpose::noise);
    NoisePath p = generate_path(spec, 0.01, 64, rng);
    p.seed = 1234;
    const auto file = std::filesystem::temp_directory_path() / "nuhops_test_path.bin";
    write_path(file, p);
    EXPECT_EQ(std::filesystem::file_size(file), 64u + 8u * p.z.size());
    const NoisePath q = read_path(file);
    EXPECT_EQ(q.h, p.h);
    EXPECT_EQ(q.seed, 1234u);
    ASSERT_EQ(q.z.size(), p.z.size());
    for (std::size_t k = 0; k < p.z.size(); ++k) {
        EXPECT_EQ(float(q.z[k].real()), float(p.z[k].real()));
        EXPECT_EQ(float(q.z[k].imag()), float(p.z[k].imag()));
    }
    {
        std::ofstream bad(file, std::ios::binary);
        bad << "NOTAPATH and some more bytes to fill the header region ........................";
    }
    EXPECT_THROW(read_path(file), Error);
    std::filesystem::remove(file);
}
