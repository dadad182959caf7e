#include <gtest/gtest.h>

#include <vector>

#include "beetl/spd.hpp"
#include "testing.hpp"

namespace beetl {
namespace {

using testing::Rng;

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

TEST(EigSym, IdentityHasUnitSpectrum) {
  const EigenFactorization e = eig_sym(Matrix::Identity(3, 3));
  EXPECT_TRUE(e.eigenvalues.isApprox(Vector::Ones(3)));
  EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(EigSym, DiagonalIsPermutedIdentity) {
  const EigenFactorization e = eig_sym(diag({3, 1}));
  EXPECT_DOUBLE_EQ(e.eigenvalues(0), 1.0);
  EXPECT_DOUBLE_EQ(e.eigenvalues(1), 3.0);
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  EXPECT_LT((e.eigenvectors - expected).norm(), 1e-14);
}

TEST(EigSym, ReconstructsRandomSymmetric) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix s = testing::random_symmetric(rng, 5);
    const EigenFactorization e = eig_sym(s);
    EXPECT_LT((e.reconstruct() - s).norm() / s.norm(), 1e-9);
    EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(5, 5)).norm(), 1e-10);
    for (Index i = 1; i < 5; ++i) EXPECT_LE(e.eigenvalues(i - 1), e.eigenvalues(i));
    for (Index j = 0; j < 5; ++j) {
      for (Index i = 0; i < 5; ++i) {
        if (std::abs(e.eigenvectors(i, j)) > 1e-12) {
          EXPECT_GT(e.eigenvectors(i, j), 0.0);
          break;
        }
      }
    }
  }
}

TEST(EigSym, RejectsNonSymmetric) {
  Matrix m(2, 2);
  m << 1, 2, 0, 1;
  EXPECT_THROW(eig_sym(m), DataError);
}

TEST(SpdMatrix, ValidatesOnConstruction) {
  EXPECT_THROW(SpdMatrix(diag({1, -1})), NotPositiveDefinite);
  EXPECT_THROW(SpdMatrix(diag({1, 0})), NotPositiveDefinite);
  Matrix ns(2, 2);
  ns << 2, 1, 0, 2;
  EXPECT_THROW(SpdMatrix{ns}, NotPositiveDefinite);
  Matrix nf = Matrix::Identity(2, 2);
  nf(0, 0) = std::nan("");
  EXPECT_THROW(SpdMatrix{nf}, NotPositiveDefinite);
  EXPECT_THROW(SpdMatrix(Matrix(2, 3)), ShapeError);
}

TEST(SpdApply, ClosedForms) {
  EXPECT_LT(logm(SpdMatrix::identity(2)).norm(), 1e-15);
  EXPECT_LT((sqrtm(SpdMatrix(diag({4, 9}))) - diag({2, 3})).norm(), 1e-14);
  EXPECT_THROW(spd_apply(diag({1, -2}), ScalarFunction::log()), NotPositiveDefinite);
  // exp of an indefinite symmetric matrix is SPD.
  EXPECT_NO_THROW(expm(diag({-3, 2})));
}

TEST(SpdApply, ExpLogRoundTrip) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const SpdMatrix s = testing::random_spd(rng, 6);
    const SpdMatrix back = expm(logm(s));
    EXPECT_LT((back.matrix() - s.matrix()).norm(), 1e-10 * std::max(1.0, s.matrix().norm()));
  }
}

TEST(Regularize, LiftsSmallEigenvalues) {
  const SpdMatrix r = regularize(diag({1.0, 0.0, -1e-3}), 1e-3);
  EXPECT_LT((r.matrix() - diag({1.0, 1e-3, 1e-3})).norm(), 1e-15);
  const SpdMatrix d = regularize(diag({2.0, 0.0}));
  EXPECT_NEAR(eig_sym(d).eigenvalues(0), 2e-10, 1e-20);
  EXPECT_THROW(regularize(diag({0.0, -1.0})), NotPositiveDefinite);
}

TEST(AirmDistance, ClosedForms) {
  const SpdMatrix i2 = SpdMatrix::identity(2);
  EXPECT_NEAR(airm_distance(i2, i2), 0.0, 1e-14);
  EXPECT_NEAR(airm_distance(i2, SpdMatrix(std::exp(1.0) * Matrix::Identity(2, 2))), std::sqrt(2.0), 1e-12);
  EXPECT_THROW(airm_distance(i2, SpdMatrix::identity(3)), ShapeError);
}

TEST(AirmDistance, MetricAxiomsAndCongruence) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + trial % 7;
    const SpdMatrix a = testing::random_spd(rng, n), b = testing::random_spd(rng, n), c = testing::random_spd(rng, n);
    const double ab = airm_distance(a, b), ba = airm_distance(b, a);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, ba, 1e-9);
    EXPECT_LE(ab, airm_distance(a, c) + airm_distance(c, b) + 1e-9);
    const Matrix w = testing::random_invertible(rng, n);
    const SpdMatrix wa(w * a.matrix() * w.transpose()), wb(w * b.matrix() * w.transpose());
    EXPECT_NEAR(airm_distance(wa, wb), ab, 1e-8);
  }
}

TEST(LogExpMap, ClosedFormsAndRoundTrip) {
  const SpdMatrix b = SpdMatrix(diag({2, 3}));
  EXPECT_LT(log_map(b, b).value().norm(), 1e-14);
  const TangentVector v = log_map(SpdMatrix::identity(2), SpdMatrix(diag({std::exp(1.0), 1})));
  EXPECT_LT((v.value() - diag({1, 0})).norm(), 1e-14);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + trial % 6;
    const SpdMatrix base = testing::random_spd(rng, n), p = testing::random_spd(rng, n);
    const TangentVector t = log_map(base, p);
    EXPECT_LT((exp_map(base, t).matrix() - p.matrix()).norm() / p.matrix().norm(), 1e-9);
    EXPECT_NEAR(t.norm(), airm_distance(base, p), 1e-9);
  }
  EXPECT_THROW(log_map(SpdMatrix::identity(2), SpdMatrix::identity(3)), ShapeError);
}

TEST(Geodesic, EndpointsAndMidpoint) {
  Rng rng(5);
  const SpdMatrix a = testing::random_spd(rng, 4), b = testing::random_spd(rng, 4);
  EXPECT_EQ(geodesic(a, b, 0.0).matrix(), a.matrix());
  EXPECT_EQ(geodesic(a, b, 1.0).matrix(), b.matrix());
  EXPECT_LT((geodesic(a, a, 0.3).matrix() - a.matrix()).norm(), 1e-12);
  const SpdMatrix mid = geodesic(SpdMatrix::identity(2), SpdMatrix(4.0 * Matrix::Identity(2, 2)), 0.5);
  EXPECT_LT((mid.matrix() - 2.0 * Matrix::Identity(2, 2)).norm(), 1e-14);
  // Points on the geodesic split the distance proportionally.
  const SpdMatrix g = geodesic(a, b, 0.25);
  EXPECT_NEAR(airm_distance(a, g), 0.25 * airm_distance(a, b), 1e-9);
  EXPECT_THROW(geodesic(a, b, 1.5), ConfigError);
  EXPECT_THROW(geodesic(a, b, -0.1), ConfigError);
}

TEST(FrechetMean, ClosedForms) {
  Rng rng(6);
  const SpdMatrix a = testing::random_spd(rng, 3);
  const std::vector<SpdMatrix> same{a, a, a};
  EXPECT_LT((frechet_mean(same).matrix() - a.matrix()).norm(), 1e-12);
  const std::vector<SpdMatrix> single{a};
  EXPECT_EQ(frechet_mean(single).matrix(), a.matrix());
  const std::vector<SpdMatrix> pair{SpdMatrix::identity(2), SpdMatrix(4.0 * Matrix::Identity(2, 2))};
  EXPECT_LT((frechet_mean(pair).matrix() - 2.0 * Matrix::Identity(2, 2)).norm(), 1e-10);
}

TEST(FrechetMean, ResidualAndEquivariance) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 3 + trial % 5;
    std::vector<SpdMatrix> mats, moved;
    const Matrix w = testing::random_invertible(rng, n);
    for (int i = 0; i < 6; ++i) {
      mats.push_back(testing::random_spd(rng, n));
      moved.emplace_back(w * mats.back().matrix() * w.transpose());
    }
    const KarcherResult r = frechet_mean_detailed(mats);
    EXPECT_LE(r.residual, 1e-10);
    const SpdMatrix m2 = frechet_mean(moved);
    const Matrix expected = w * r.mean.matrix() * w.transpose();
    EXPECT_LT((m2.matrix() - expected).norm() / expected.norm(), 1e-8);
  }
}

TEST(FrechetMean, WeightedAndErrors) {
  const std::vector<SpdMatrix> pair{SpdMatrix::identity(2), SpdMatrix(std::exp(4.0) * Matrix::Identity(2, 2))};
  const std::vector<double> w{0.75, 0.25};
  EXPECT_LT((frechet_mean(pair, w).matrix() - std::exp(1.0) * Matrix::Identity(2, 2)).norm(), 1e-10);
  EXPECT_THROW(frechet_mean(std::vector<SpdMatrix>{}), DataError);
  const std::vector<double> bad{0.5, 0.6};
  EXPECT_THROW(frechet_mean(pair, bad), ConfigError);

  Rng rng(8);
  std::vector<SpdMatrix> spread;
  for (int i = 0; i < 5; ++i) spread.push_back(testing::random_spd(rng, 4, 3.0));
  try {
    frechet_mean(spread, {}, KarcherOptions{1, 1e-14});
    FAIL() << "expected non-convergence";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 1);
    EXPECT_GT(e.residual(), 1e-14);
  }
}

TEST(EigFnBackward, IdentityGivesSymmetrizedUpstream) {
  Rng rng(9);
  const Matrix s = testing::random_symmetric(rng, 4);
  const Matrix up = testing::random_matrix(rng, 4, 4);
  const Matrix g = eig_fn_backward(s, ScalarFunction::identity(), up);
  EXPECT_LT((g - 0.5 * (up + up.transpose())).norm(), 1e-12);
}

TEST(EigFnBackward, LogDetGradientIsInverse) {
  Rng rng(10);
  const SpdMatrix s = testing::random_spd(rng, 5);
  const Matrix g = eig_fn_backward(s.matrix(), ScalarFunction::log(), Matrix::Identity(5, 5));
  EXPECT_LT((g - s.matrix().inverse()).norm(), 1e-8);
}

// ⟨grad, E⟩ against central differences of ⟨upstream, f(S + hE)⟩.
double fd_check(const Matrix& s, const ScalarFunction& f, const Matrix& up, const Matrix& dir) {
  const Matrix g = eig_fn_backward(s, f, up);
  const double analytic = (g.array() * dir.array()).sum();
  const double numeric = testing::directional_fd([&](double h) {
    return (up.array() * spd_apply(Matrix(s + h * dir), f).array()).sum();
  });
  return testing::relative_error(analytic, numeric);
}

TEST(EigFnBackward, MatchesFiniteDifferences) {
  Rng rng(11);
  const std::vector<ScalarFunction> fs{ScalarFunction::log(), ScalarFunction::exp(), ScalarFunction::sqrt(),
                                       ScalarFunction::invsqrt(), ScalarFunction::pow(0.3)};
  for (const auto& f : fs) {
    for (int trial = 0; trial < 5; ++trial) {
      const SpdMatrix s = testing::random_spd(rng, 5);
      const Matrix up = testing::random_symmetric(rng, 5);
      const Matrix dir = testing::random_symmetric(rng, 5);
      EXPECT_LT(fd_check(s.matrix(), f, up, dir), 1e-5) << f.name();
    }
  }
}

TEST(EigFnBackward, NearDegenerateEigenvalues) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix q = testing::random_stiefel(rng, 5, 5);
    Vector l(5);
    l << 0.5, 1.0, 1.0 + 1e-8, 2.0, 3.5;
    const Matrix s = 0.5 * (q * l.asDiagonal() * q.transpose() + (q * l.asDiagonal() * q.transpose()).transpose());
    const Matrix up = testing::random_symmetric(rng, 5);
    const Matrix dir = testing::random_symmetric(rng, 5);
    EXPECT_LT(fd_check(s, ScalarFunction::log(), up, dir), 1e-5);
  }
}

TEST(FrechetMeanBackward, MatchesFiniteDifferences) {
  Rng rng(13);
  std::vector<SpdMatrix> mats;
  for (int i = 0; i < 3; ++i) mats.push_back(testing::random_spd(rng, 4, 0.7));
  const KarcherOptions tight{200, 1e-13};
  KarcherTape tape;
  frechet_mean_detailed(mats, {}, tight, &tape);
  const Matrix up = testing::random_symmetric(rng, 4);
  const std::vector<Matrix> grads = frechet_mean_backward(tape, mats, {}, up);
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const Matrix dir = testing::random_symmetric(rng, 4);
    const double analytic = (grads[i].array() * dir.array()).sum();
    const double numeric = testing::directional_fd([&](double h) {
      std::vector<SpdMatrix> moved = mats;
      moved[i] = SpdMatrix(mats[i].matrix() + h * dir);
      return (up.array() * frechet_mean(moved, {}, tight).matrix().array()).sum();
    });
    EXPECT_LT(testing::relative_error(analytic, numeric), 1e-5);
  }
}

}  // namespace
}  // namespace beetl
