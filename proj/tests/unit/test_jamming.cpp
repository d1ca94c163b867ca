#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <unsupported/Eigen/FFT>

#include "dmdd/jamming.hpp"
#include "helpers.hpp"

using namespace dmdd;

namespace {

ErrorCode read_error(const std::string& path) {
  try {
    read_dataset(path);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("synthesize_comb: single-tone fixtures") {
  const CVector dc = synthesize_comb(0.0, 1e6, {1.0}, {0.0}, 16, 31.25e6);
  CHECK((dc - CVector::Ones(16)).norm() < 1e-12);

  const CVector quarter = synthesize_comb(31.25e6 / 4.0, 1e6, {1.0}, {0.0}, 16, 31.25e6);
  const cplx j(0.0, 1.0);
  for (int n = 0; n < 16; ++n) CHECK(std::abs(quarter[n] - std::pow(j, n)) < 1e-9);
}

TEST_CASE("draw_comb: tones lie in range and are reproducible") {
  const CombParams params;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng a(seed), b(seed);
    const CombRealization r = draw_comb(params, 512, 31.25e6, a);
    const CombRealization s = draw_comb(params, 512, 31.25e6, b);
    CHECK((r.signal - s.signal).norm() == 0.0);
    CHECK(r.n_tones >= 5);
    CHECK(r.n_tones <= 10);
    CHECK(r.spacing >= 0.5e6);
    CHECK(r.spacing <= 1.5e6);
    for (double f : r.tone_freqs()) {
      CHECK(f >= -7.5e6);
      CHECK(f <= 7.5e6);
    }
    for (double amp : r.amplitudes) CHECK((amp >= 0.5 && amp <= 1.5));
    for (double ph : r.phases) CHECK((ph >= 0.0 && ph < 2.0 * kPi));
  }
}

TEST_CASE("draw_comb: DFT peaks at the tones exceed the median by 20 dB") {
  CombParams params;
  params.spacing_range = {1.0e6, 1.5e6};  // N df / fs >= 16
  Rng rng(17);
  Eigen::FFT<double> fft;
  for (int rep = 0; rep < 10; ++rep) {
    const CombRealization r = draw_comb(params, 512, 31.25e6, rng);
    std::vector<cplx> in(r.signal.data(), r.signal.data() + 512), spec;
    fft.fwd(spec, in);
    std::vector<double> mag(512);
    for (int k = 0; k < 512; ++k) mag[k] = std::abs(spec[k]);
    std::vector<double> sorted = mag;
    std::nth_element(sorted.begin(), sorted.begin() + 256, sorted.end());
    const double median = sorted[256];
    for (double f : r.tone_freqs()) {
      const long bin = std::lround(f / 31.25e6 * 512.0);
      const int k = static_cast<int>((bin % 512 + 512) % 512);
      CHECK(20.0 * std::log10(mag[k] / median) >= 20.0);
    }
  }
}

TEST_CASE("draw_comb: infeasible parameters are rejected") {
  CombParams params;
  params.k_range = {10, 10};
  params.freq_range = {-1e6, 1e6};
  Rng rng(1);
  try {
    draw_comb(params, 64, 31.25e6, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("gaussian_prior_from_tones") {
  const double fs = 32e6;
  SUBCASE("single tone is rank one with trace N") {
    const auto prior = gaussian_prior_from_tones({{1e6, 1.0}}, 32, fs);
    CHECK(prior.covariance.trace().real() == doctest::Approx(32.0));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(prior.covariance);
    CHECK(es.eigenvalues()[31] == doctest::Approx(32.0));
    CHECK(std::abs(es.eigenvalues()[30]) < 1e-9);
  }
  SUBCASE("orthogonal tones give eigenvalues N p") {
    const auto prior = gaussian_prior_from_tones({{2e6, 0.5}, {5e6, 2.0}}, 32, fs);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(prior.covariance);
    CHECK(es.eigenvalues()[31] == doctest::Approx(64.0));
    CHECK(es.eigenvalues()[30] == doctest::Approx(16.0));
    CHECK(std::abs(es.eigenvalues()[29]) < 1e-9);
    CHECK((prior.covariance - prior.covariance.adjoint()).norm() < 1e-12);
  }
  SUBCASE("no tones gives the zero matrix and zero draws") {
    const auto prior = gaussian_prior_from_tones({}, 8, fs);
    CHECK(prior.covariance.norm() == 0.0);
    Rng rng(2);
    CHECK(draw_gaussian_jamming(prior, rng).norm() == 0.0);
  }
}

TEST_CASE("draw_gaussian_jamming: second-order statistics") {
  Rng rng(3);
  const int draws = 10000;
  SUBCASE("identity covariance") {
    const auto prior = GaussianJammingPrior::from_covariance(CMatrix::Identity(8, 8));
    double power = 0.0;
    for (int d = 0; d < draws; ++d) power += draw_gaussian_jamming(prior, rng).squaredNorm();
    CHECK(power / (8.0 * draws) == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("tone covariance and projections") {
    const auto prior = gaussian_prior_from_tones({{1.3e6, 1.0}, {-4.1e6, 0.7}, {6e6, 0.2}}, 16, 31.25e6);
    CMatrix acc = CMatrix::Zero(16, 16);
    CVector u = complex_normal_vector(rng, 16, 1.0);
    u.normalize();
    double proj = 0.0;
    for (int d = 0; d < draws; ++d) {
      const CVector i = draw_gaussian_jamming(prior, rng);
      acc += i * i.adjoint();
      proj += std::norm(u.dot(i));
    }
    acc /= draws;
    CHECK((acc - prior.covariance).norm() / prior.covariance.norm() < 0.1);
    const double expected = (u.adjoint() * prior.covariance * u)(0, 0).real();
    CHECK(proj / draws == doctest::Approx(expected).epsilon(0.1));
  }
}

TEST_CASE("dataset round trip and error codes") {
  const auto dir = testutil::scratch_dir("dataset");
  const JammingDataset ds = generate_comb_dataset(CombParams{}, 12, 64, 31.25e6, 9);
  const std::string path = (dir / "ds.bin").string();
  write_dataset(path, ds);

  const JammingDataset back = read_dataset(path, 64);
  CHECK(back.size() == 12);
  CHECK(back.length() == 64);
  CHECK(back.raw() == ds.raw());

  SUBCASE("length mismatch") {
    try {
      read_dataset(path, 128);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::LengthMismatch);
    }
  }
  SUBCASE("truncated payload") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
    CHECK(read_error(path) == ErrorCode::TruncatedPayload);
  }
  SUBCASE("count disagrees with payload") {
    std::ofstream(path, std::ios::binary | std::ios::app).write(
        reinterpret_cast<const char*>(ds.raw().data()), 64 * sizeof(std::complex<float>));
    CHECK(read_error(path) == ErrorCode::Integrity);
  }
  SUBCASE("unsupported version") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto at = bytes.find("\"version\":1");
    REQUIRE(at != std::string::npos);
    bytes.replace(at, 11, "\"version\":7");
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK(read_error(path) == ErrorCode::VersionMismatch);
  }
  SUBCASE("missing file") { CHECK(read_error((dir / "absent.bin").string()) == ErrorCode::MissingPath); }
}
