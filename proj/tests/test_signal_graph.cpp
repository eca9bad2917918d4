#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spdsemg/error.hpp"
#include "spdsemg/signal_graph.hpp"
#include "support.hpp"

using namespace spdsemg;
using namespace spdsemg::testing;

namespace {

Recording noise_recording(Pcg32& rng, int channels, std::int64_t n, double rate) {
  Recording rec;
  rec.sample_rate = rate;
  rec.samples = random_matrix(rng, channels, static_cast<int>(n));
  return rec;
}

double rms(const Eigen::RowVectorXd& x) { return std::sqrt(x.squaredNorm() / x.size()); }

}  // namespace

TEST(Windows, WholeTrialAtPaperRate) {
  Pcg32 rng(30);
  const Recording rec = noise_recording(rng, 22, 8000, 5000.0);
  const TrialSpec trial{"Alfa", 0, 100, 7600, "s1", 0};
  const auto blocks = extract_windows(rec, trial, WindowSpec{WindowMode::WholeTrial, 1.5, 0.0});
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].rows(), 22);
  EXPECT_EQ(blocks[0].cols(), 7500);
  EXPECT_EQ(blocks[0], rec.samples.block(0, 100, 22, 7500));
}

TEST(Windows, SlidingCountAndAlignment) {
  Pcg32 rng(31);
  const Recording rec = noise_recording(rng, 2, 7500, 5000.0);
  const TrialSpec trial{"Alfa", 0, 0, 7500, "s1", 0};
  const auto blocks = extract_windows(rec, trial, WindowSpec{WindowMode::Sliding, 0.15, 0.03});
  // (7500 - 750) / 150 + 1
  ASSERT_EQ(blocks.size(), 46u);
  EXPECT_EQ(blocks[1], rec.samples.block(0, 150, 2, 750));
  EXPECT_EQ(blocks.back(), rec.samples.block(0, 45 * 150, 2, 750));
}

TEST(Windows, ExactContextGivesOneBlockShorterThrows) {
  Pcg32 rng(32);
  const Recording rec = noise_recording(rng, 2, 1000, 1000.0);
  const WindowSpec spec{WindowMode::Sliding, 0.2, 0.05};
  EXPECT_EQ(extract_windows(rec, TrialSpec{"a", 0, 0, 200, "", 0}, spec).size(), 1u);
  try {
    extract_windows(rec, TrialSpec{"a", 0, 0, 199, "", 0}, spec);
    FAIL() << "expected WindowTooLong";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WindowTooLong);
  }
  EXPECT_THROW(extract_windows(rec, TrialSpec{"a", 0, 900, 1100, "", 0}, spec), Error);
  EXPECT_THROW(WindowSpec({WindowMode::Sliding, 0.1, 0.2}).validate(), Error);
}

TEST(EdgeMatrix, MatchesDirectSummation) {
  Pcg32 rng(33);
  const Matrix block = random_matrix(rng, 4, 50);
  const SymMatrix raw = edge_matrix(block, false);
  const SymMatrix centered = edge_matrix(block, true);
  for (int i = 0; i < 4; ++i) {
    const double mi = block.row(i).mean();
    for (int j = 0; j < 4; ++j) {
      const double mj = block.row(j).mean();
      double s = 0.0;
      double c = 0.0;
      for (int t = 0; t < 50; ++t) {
        s += block(i, t) * block(j, t);
        c += (block(i, t) - mi) * (block(j, t) - mj);
      }
      EXPECT_NEAR(raw(i, j), s, 1e-12);
      EXPECT_NEAR(centered(i, j), c, 1e-12);
    }
  }
}

TEST(EdgeMatrix, IdenticalChannelsAndOrthogonalSinusoids) {
  Matrix same(2, 40);
  Pcg32 rng(34);
  same.row(0) = random_matrix(rng, 1, 40);
  same.row(1) = same.row(0);
  const SymMatrix e = edge_matrix(same, false);
  EXPECT_EQ(e(0, 1), e(0, 0));
  EXPECT_EQ(e(1, 1), e(0, 0));

  Matrix sc(2, 400);
  for (int t = 0; t < 400; ++t) {
    const double phase = 2.0 * std::numbers::pi * 5.0 * t / 400.0;
    sc(0, t) = std::sin(phase);
    sc(1, t) = std::cos(phase);
  }
  const SymMatrix o = edge_matrix(sc, false);
  EXPECT_LE(std::abs(o(0, 1)), 1e-6 * o(0, 0));
}

TEST(EdgeMatrix, PsdScalingAndPermutation) {
  Pcg32 rng(35);
  for (int t = 0; t < 10; ++t) {
    const Matrix block = random_matrix(rng, 6, 3);  // rank-deficient on purpose
    const SymMatrix e = edge_matrix(block, true);
    EXPECT_GE(sym_eig(e).sigma.minCoeff(), -1e-10 * e.trace());
    EXPECT_LE(max_abs(edge_matrix(2.5 * block, true).matrix() - 6.25 * e.matrix()),
              1e-12 * max_abs(e.matrix()));
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.setIdentity();
    std::swap(perm.indices()(0), perm.indices()(4));
    const SymMatrix ep = edge_matrix(perm * block, true);
    EXPECT_LE(max_abs(ep.matrix() - perm * e.matrix() * perm.transpose()), 1e-12 * max_abs(e.matrix()));
  }
  EXPECT_THROW(edge_matrix(Matrix::Ones(3, 1)), Error);
}

TEST(Regularize, PrintedFormula) {
  const SymMatrix r = regularize(SymMatrix::identity(2), 0.1);
  EXPECT_NEAR(r(0, 0), 1.1, 1e-15);
  EXPECT_EQ(r(0, 1), 0.0);

  const SymMatrix rank1 = regularize(SymMatrix(Matrix::Ones(2, 2)), 0.1);
  const EigPair p = sym_eig(rank1);
  EXPECT_NEAR(p.sigma(0), 2.0, 1e-12);
  EXPECT_NEAR(p.sigma(1), 0.2, 1e-12);

  Pcg32 rng(36);
  const SymMatrix e = edge_matrix(random_matrix(rng, 5, 3), true);
  EXPECT_EQ(regularize(e, 0.0).matrix(), e.matrix());
  EXPECT_THROW(regularize(e, 1.0), Error);
  EXPECT_THROW(regularize(e, -0.1), Error);
}

TEST(Regularize, EigenvalueLowerBound) {
  Pcg32 rng(37);
  for (double eta : {0.1, 0.15, 0.2}) {
    const SymMatrix e = edge_matrix(random_matrix(rng, 6, 4), true);
    const SymMatrix r = regularize(e, eta);
    EXPECT_GE(sym_eig(r).sigma.minCoeff(),
              (1.0 - eta) * sym_eig(e).sigma.minCoeff() + eta * e.trace() - 1e-9);
  }
}

TEST(Filters, NoFilterIsIdentity) {
  Pcg32 rng(38);
  const Recording rec = noise_recording(rng, 3, 200, 1000.0);
  EXPECT_EQ(apply_filters(rec, FilterOptions{}).samples, rec.samples);
}

TEST(Filters, NotchAndBandpassAttenuate) {
  const double rate = 5000.0;
  const int n = 20000;
  Recording hum;
  hum.sample_rate = rate;
  hum.samples.resize(1, n);
  Recording tone = hum;
  Recording dc = hum;
  for (int t = 0; t < n; ++t) {
    hum.samples(0, t) = std::sin(2.0 * std::numbers::pi * 60.0 * t / rate);
    tone.samples(0, t) = std::sin(2.0 * std::numbers::pi * 200.0 * t / rate);
    dc.samples(0, t) = 1.0;
  }
  FilterOptions notch;
  notch.notch = true;
  const auto tail = [&](const Recording& r) { return Eigen::RowVectorXd(r.samples.row(0).tail(n / 2)); };
  EXPECT_LE(rms(tail(apply_filters(hum, notch))), 0.01 * rms(tail(hum)));
  EXPECT_GE(rms(tail(apply_filters(tone, notch))), 0.95 * rms(tail(tone)));

  FilterOptions band;
  band.bandpass = true;
  EXPECT_LE(rms(tail(apply_filters(dc, band))), 1e-3);
  EXPECT_GE(rms(tail(apply_filters(tone, band))), 0.9 * rms(tail(tone)));
}
