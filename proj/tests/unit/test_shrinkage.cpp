#include "linkedmf/rng.hpp"
#include "linkedmf/shrinkage.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace linkedmf {
namespace {

// Independent long-double bisection on 2x log(x + 1) - 1 (the m = n case).
long double square_kappa_oracle() {
  long double lo = 0.0L, hi = 10.0L;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    if (2.0L * mid * std::log(mid + 1.0L) - 1.0L < 0.0L) lo = mid;
    else hi = mid;
  }
  return 0.5L * (lo + hi);
}

TEST(Kappa, SquareMatchesIndependentBisection) {
  const long double k = square_kappa_oracle();
  EXPECT_NEAR(kappa(100, 100), static_cast<double>(k), 1e-12);
  EXPECT_NEAR(kappa(100, 100), 0.8285034055369342, 1e-12);
  EXPECT_LT(std::abs(kappa_equation(kappa(100, 100), 100, 100)), 1e-12);
}

TEST(Kappa, SymmetricAndRootOfEquation) {
  EXPECT_DOUBLE_EQ(kappa(1000, 100), kappa(100, 1000));
  EXPECT_DOUBLE_EQ(kappa(7, 3), kappa(3, 7));
  EXPECT_LT(std::abs(kappa_equation(kappa(1000, 100), 1000, 100)), 1e-12);
  EXPECT_LT(std::abs(kappa_equation(kappa(1, 1), 1, 1)), 1e-12);
  const double r = kappa(1000, 100, KappaForm::Reference);
  EXPECT_LT(std::abs(kappa_equation(r, 1000, 100, KappaForm::Reference)), 1e-12);
}

TEST(Kappa, ReferenceFormSquareValue) {
  // log(z + 1)/z = 1/2 at m = n.
  long double lo = 0.1L, hi = 10.0L;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    if (2.0L * std::log(mid + 1.0L) / mid - 1.0L > 0.0L) lo = mid;
    else hi = mid;
  }
  EXPECT_NEAR(kappa(50, 50, KappaForm::Reference), static_cast<double>(0.5L * (lo + hi)), 1e-10);
}

TEST(EvbThreshold, SquareHundred) {
  const long double k = square_kappa_oracle();
  const long double expected = std::sqrt(200.0L + 100.0L * (k + 1.0L / k));
  EXPECT_NEAR(evb_threshold(100, 100, 1.0), static_cast<double>(expected), 1e-10);
  EXPECT_NEAR(evb_threshold(100, 100, 1.0), 20.088551584670288, 1e-9);
  EXPECT_NEAR(evb_threshold(100, 100, 2.5), 2.5 * evb_threshold(100, 100, 1.0), 1e-12);
}

TEST(EvbShrinkValue, BelowThresholdIsZero) {
  EXPECT_EQ(evb_shrink_value(10.0, 100, 100, 1.0), 0.0);
  EXPECT_EQ(evb_shrink_value(0.0, 100, 100, 1.0), 0.0);
}

TEST(EvbShrinkValue, ClosedFormAtThirty) {
  const long double expected = (700.0L + std::sqrt(450000.0L)) / 60.0L;
  EXPECT_NEAR(evb_shrink_value(30.0, 100, 100, 1.0), static_cast<double>(expected), 1e-12);
  EXPECT_NEAR(evb_shrink_value(30.0, 100, 100, 1.0), 22.847006554165613, 1e-12);
}

TEST(EvbShrinkValue, RejectsNonPositiveSigma) {
  try {
    evb_shrink_value(1.0, 10, 10, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
  EXPECT_THROW(evb_shrink_value(1.0, 10, 10, -1.0), Error);
}

TEST(EvbShrinkValue, NeverInflatesAndMonotone) {
  double previous = 0.0;
  for (double d = 0.0; d < 200.0; d += 0.37) {
    const double s = evb_shrink_value(d, 300, 40, 1.3);
    EXPECT_LE(s, d);
    EXPECT_GE(s, previous);
    previous = s;
  }
}

TEST(EvbShrinkValue, SmallSigmaLimit) {
  EXPECT_NEAR(evb_shrink_value(5.0, 100, 50, 1e-6), 5.0, 1e-6);
}

TEST(EvbShrinkMatrix, ZeroMatrix) {
  const ShrinkageResult r = evb_shrink_matrix(Matrix::Zero(8, 5), 1.0);
  EXPECT_EQ(r.rank, 0);
  EXPECT_TRUE((r.shrunk_values.array() == 0.0).all());
  EXPECT_EQ(r.reconstruct().norm(), 0.0);
}

TEST(EvbShrinkMatrix, UsesPerValueRule) {
  Rng rng(11);
  const Matrix x = 3.0 * rng.normal_matrix(40, 12);
  const ShrinkageResult r = evb_shrink_matrix(x, 1.0);
  for (Index i = 0; i < r.svd.values.size(); ++i)
    EXPECT_DOUBLE_EQ(r.shrunk_values[i], evb_shrink_value(r.svd.values[i], 40, 12, 1.0));
  Index positive = 0;
  for (Index i = 0; i < r.shrunk_values.size(); ++i) positive += r.shrunk_values[i] > 0.0;
  EXPECT_EQ(r.rank, positive);
  EXPECT_EQ(r.retained().components(), r.rank);
  EXPECT_NEAR((r.retained().reconstruct() - r.reconstruct()).norm(), 0.0, 1e-10);
}

TEST(EvbShrinkMatrix, RecoversStrongRankOne) {
  Rng rng(3);
  const Vector u = rng.normal_matrix(200, 1).col(0).normalized();
  const Vector v = rng.normal_matrix(50, 1).col(0).normalized();
  const Matrix x = 100.0 * u * v.transpose() + rng.normal_matrix(200, 50);
  EXPECT_EQ(evb_shrink_matrix(x, 1.0).rank, 1);
}

TEST(SoftThreshold, Examples) {
  Matrix x = Matrix::Zero(4, 3);
  x(0, 0) = 5.0;
  x(1, 1) = 3.0;
  x(2, 2) = 1.0;
  const ShrinkageResult r = soft_threshold_matrix(x, 2.0);
  EXPECT_NEAR(r.shrunk_values[0], 3.0, 1e-12);
  EXPECT_NEAR(r.shrunk_values[1], 1.0, 1e-12);
  EXPECT_EQ(r.shrunk_values[2], 0.0);
  EXPECT_EQ(r.rank, 2);
  EXPECT_NEAR((soft_threshold_matrix(x, 0.0).reconstruct() - x).norm(), 0.0, 1e-12);
  EXPECT_EQ(soft_threshold_matrix(x, 5.0).rank, 0);
}

TEST(HardThreshold, Examples) {
  Matrix x = Matrix::Zero(4, 3);
  x(0, 0) = 5.0;
  x(1, 1) = 3.0;
  x(2, 2) = 1.0;
  const ShrinkageResult r = hard_threshold_matrix(x, 2);
  EXPECT_NEAR(r.shrunk_values[0], 5.0, 1e-12);
  EXPECT_NEAR(r.shrunk_values[1], 3.0, 1e-12);
  EXPECT_EQ(r.shrunk_values[2], 0.0);
  EXPECT_EQ(hard_threshold_matrix(x, 0).reconstruct().norm(), 0.0);
  EXPECT_NEAR((hard_threshold_matrix(x, 3).reconstruct() - x).norm(), 0.0, 1e-12);
  EXPECT_THROW(hard_threshold_matrix(x, 4), Error);
}

TEST(OracleOperator, Examples) {
  Rng rng(5);
  const Matrix x = rng.normal_matrix(20, 10);
  const ShrinkageResult self = oracle_operator(x, x);
  EXPECT_NEAR((self.shrunk_values - self.svd.values).norm(), 0.0, 1e-10);
  EXPECT_EQ(oracle_operator(x, Matrix::Zero(20, 10)).rank, 0);
  EXPECT_THROW(oracle_operator(x, Matrix::Zero(10, 20)), Error);
}

TEST(OracleOperator, MatchesNormalEquations) {
  Rng rng(6);
  const Matrix x = rng.normal_matrix(20, 10);
  const Matrix s = rng.normal_matrix(20, 3) * rng.normal_matrix(3, 10);
  const ShrinkageResult r = oracle_operator(x, s);
  // Brute force: design matrix with columns vec(u_r v_r^T).
  const Index k = r.svd.values.size();
  Matrix design(200, k);
  for (Index c = 0; c < k; ++c) {
    const Matrix outer = r.svd.left.col(c) * r.svd.right.col(c).transpose();
    design.col(c) = Eigen::Map<const Vector>(outer.data(), outer.size());
  }
  const Vector target = Eigen::Map<const Vector>(s.data(), s.size());
  const Vector coef = (design.transpose() * design).ldlt().solve(design.transpose() * target);
  for (Index c = 0; c < k; ++c) EXPECT_NEAR(r.shrunk_values[c], std::max(coef[c], 0.0), 1e-10);
}

TEST(EstimateSigma, ScaleEquivariant) {
  Rng rng(9);
  for (int rep = 0; rep < 3; ++rep) {
    const Matrix x = rng.normal_matrix(120, 30);
    const double base = estimate_sigma(x).sigma_hat;
    const double c = 0.1 + 10.0 * rng.uniform();
    EXPECT_NEAR(estimate_sigma(c * x).sigma_hat, c * base, 1e-10 * c * base);
  }
}

TEST(EstimateSigma, OrientationAndAlpha) {
  Rng rng(10);
  const Matrix x = rng.normal_matrix(200, 50);
  const NoiseFitDiagnostics a = estimate_sigma(x);
  const NoiseFitDiagnostics b = estimate_sigma(x.transpose());
  EXPECT_DOUBLE_EQ(a.sigma_hat, b.sigma_hat);
  EXPECT_DOUBLE_EQ(a.alpha, 0.25);
  EXPECT_GT(a.grid_evaluations, 0);
}

TEST(EstimateSigma, NoiseScaleRecovered) {
  Rng rng(12);
  const Matrix x = 2.0 * rng.normal_matrix(1000, 100);
  EXPECT_NEAR(estimate_sigma(x).sigma_hat, 2.0, 0.1);
}

TEST(EstimateSigma, MinimisesObjectiveOnGrid) {
  Rng rng(13);
  const Matrix x = rng.normal_matrix(150, 40) + 0.5 * rng.normal_matrix(150, 2) * rng.normal_matrix(2, 40);
  const NoiseFitDiagnostics d = estimate_sigma(x);
  const Vector sv = thin_svd(x).values;
  for (double s = 0.2; s < 3.0; s += 0.01) EXPECT_LE(d.objective_value, noise_objective(sv, 150, 40, s) + 1e-9);
  EXPECT_NEAR(d.objective_value, noise_objective(sv, 150, 40, d.sigma_hat), 1e-12);
}

TEST(EstimateSigma, ZeroMatrixRejected) {
  EXPECT_THROW(estimate_sigma(Matrix::Zero(10, 5)), Error);
}

// Alternating ridge updates for ||X - U V^T||^2 + lambda (||U||^2 + ||V||^2).
TEST(Property, AlternatingRidgeMatchesSoftThreshold) {
  Rng rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix x = rng.normal_matrix(15, 8) * 2.0;
    for (double lambda : {0.5, 2.0}) {
      Matrix u = rng.normal_matrix(15, 8);
      Matrix v = rng.normal_matrix(8, 8);
      const Matrix eye = Matrix::Identity(8, 8);
      for (int it = 0; it < 20000; ++it) {
        u = x * v * (v.transpose() * v + lambda * eye).inverse();
        v = x.transpose() * u * (u.transpose() * u + lambda * eye).inverse();
      }
      const Matrix svt = soft_threshold_matrix(x, lambda).reconstruct();
      EXPECT_LT((u * v.transpose() - svt).norm(), 1e-6) << "rep " << rep << " lambda " << lambda;
    }
  }
}

}  // namespace
}  // namespace linkedmf
