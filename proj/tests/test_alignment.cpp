#include <gtest/gtest.h>

#include <algorithm>

#include "beetl/alignment.hpp"
#include "testing.hpp"

namespace beetl {
namespace {

using testing::Rng;
using Eigen::Vector2d;

std::vector<SpdMatrix> random_set(Rng& rng, int count, Index n) {
  std::vector<SpdMatrix> out;
  for (int i = 0; i < count; ++i) out.push_back(testing::random_spd(rng, n, 1.5));
  return out;
}

Matrix mean_after(const AlignmentTransform& a, const std::vector<SpdMatrix>& covs) {
  std::vector<SpdMatrix> moved;
  for (const auto& c : covs) moved.push_back(apply_alignment(a, c));
  return arithmetic_mean(moved).matrix();
}

TEST(EuclideanAlignment, IdentityMeanGivesIdentityTransform) {
  const std::vector<SpdMatrix> covs{SpdMatrix(Vector::Constant(3, 0.5).asDiagonal()),
                                    SpdMatrix(Vector::Constant(3, 1.5).asDiagonal())};
  const AlignmentTransform a = fit_euclidean_alignment(covs, "s1");
  EXPECT_LT((a.transform - Matrix::Identity(3, 3)).norm(), 1e-14);
  EXPECT_EQ(a.scope, "s1");
}

TEST(EuclideanAlignment, SingleTrialIsWhitened) {
  Rng rng(1);
  const std::vector<SpdMatrix> one{testing::random_spd(rng, 4)};
  const AlignmentTransform a = fit_euclidean_alignment(one);
  EXPECT_LT((apply_alignment(a, one[0]).matrix() - Matrix::Identity(4, 4)).norm(), 1e-10);
}

TEST(EuclideanAlignment, MeanBecomesIdentityAndIsIdempotent) {
  Rng rng(2);
  for (int subject = 0; subject < 5; ++subject) {
    const auto covs = random_set(rng, 20, 8);
    const AlignmentTransform a = fit_euclidean_alignment(covs);
    EXPECT_LT((a.transform * a.reference.matrix() * a.transform.transpose() - Matrix::Identity(8, 8)).norm(), 1e-8);
    EXPECT_LT((a.transform - a.transform.transpose()).norm(), 1e-12);
    EXPECT_LT((mean_after(a, covs) - Matrix::Identity(8, 8)).norm(), 1e-8);

    std::vector<SpdMatrix> aligned;
    for (const auto& c : covs) aligned.push_back(apply_alignment(a, c));
    EXPECT_LT((fit_euclidean_alignment(aligned).transform - Matrix::Identity(8, 8)).norm(), 1e-8);
  }
  EXPECT_THROW(fit_euclidean_alignment(std::vector<SpdMatrix>{}), DataError);
}

TEST(RiemannianAlignment, ClosedForms) {
  Rng rng(3);
  const SpdMatrix c = testing::random_spd(rng, 3);
  const std::vector<SpdMatrix> same{c, c, c};
  const AlignmentTransform r = fit_riemannian_alignment(same);
  EXPECT_LT((r.reference.matrix() - c.matrix()).norm(), 1e-12);
  EXPECT_LT((r.transform - invsqrtm(c)).norm(), 1e-10);
  EXPECT_LT((r.transform - fit_euclidean_alignment(same).transform).norm(), 1e-10);

  const std::vector<SpdMatrix> pair{SpdMatrix::identity(2), SpdMatrix(4.0 * Matrix::Identity(2, 2))};
  EXPECT_LT((fit_riemannian_alignment(pair).reference.matrix() - 2.0 * Matrix::Identity(2, 2)).norm(), 1e-10);
  EXPECT_EQ(fit_riemannian_alignment(pair).kind, AlignmentKind::Riemannian);
}

TEST(ApplyAlignment, TrialSignalAndCovariance) {
  Rng rng(4);
  const Trial t{testing::random_matrix(rng, 4, 200), 128.0, TrialInfo{"s", "d", "S1", 2, 0}};
  const AlignmentTransform id = make_alignment(AlignmentKind::Euclidean, "s", SpdMatrix::identity(4));
  EXPECT_EQ(apply_alignment(id, t).signal, t.signal);

  const AlignmentTransform a = make_alignment(AlignmentKind::Euclidean, "s", testing::random_spd(rng, 4));
  const Trial moved = apply_alignment(a, t);
  EXPECT_EQ(moved.info, t.info);
  const Matrix c = sample_covariance(t, 0.0).cov.matrix();
  const Matrix expected = a.transform * c * a.transform.transpose();
  EXPECT_LT((sample_covariance(moved, 0.0).cov.matrix() - expected).norm() / expected.norm(), 1e-12);

  const Trial wrong{testing::random_matrix(rng, 3, 50), 128.0, {}};
  EXPECT_THROW(apply_alignment(a, wrong), ShapeError);
}

TEST(LabelAlignment, DiagonalClosedForm) {
  const std::vector<SpdMatrix> src{SpdMatrix(Vector2d(1, 4).asDiagonal())};
  const std::vector<SpdMatrix> tgt{SpdMatrix(Vector2d(4, 1).asDiagonal())};
  const std::vector<int> ls{3}, lt{0};
  const std::vector<ClassPair> pairs{{3, 0}};
  const LabelAlignmentMap m = fit_label_alignment(src, ls, tgt, lt, pairs);
  ASSERT_EQ(m.entries.size(), 1u);
  EXPECT_LT((m.entries[0].transform - Matrix(Vector2d(2, 0.5).asDiagonal())).norm(), 1e-14);

  const LabelAlignmentMap same = fit_label_alignment(src, ls, src, ls, std::vector<ClassPair>{{3, 3}});
  EXPECT_LT((same.entries[0].transform - Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(LabelAlignment, MapsSourceClassMeansOntoTargetMeans) {
  Rng rng(5);
  std::vector<SpdMatrix> src, tgt;
  std::vector<int> ls, lt;
  for (int i = 0; i < 30; ++i) {
    src.push_back(testing::random_spd(rng, 6));
    ls.push_back(i % 4);  // 4 source classes, class 3 is "tongue"
    tgt.push_back(testing::random_spd(rng, 6));
    lt.push_back(i % 3);
  }
  const std::vector<ClassPair> pairs{{0, 0}, {1, 1}, {3, 2}};
  for (ClassMean mean : {ClassMean::Arithmetic, ClassMean::Frechet}) {
    const LabelAlignmentMap m = fit_label_alignment(src, ls, tgt, lt, pairs, mean);
    for (const auto& e : m.entries) {
      std::vector<SpdMatrix> mapped;
      for (std::size_t i = 0; i < src.size(); ++i) {
        auto out = m.apply(src[i], ls[i]);
        if (ls[i] == e.pair.source) {
          ASSERT_TRUE(out.has_value());
          EXPECT_EQ(out->second, e.pair.target);
          mapped.push_back(out->first);  // SPD by construction
        }
      }
      const Matrix got = mean == ClassMean::Arithmetic ? arithmetic_mean(mapped).matrix()
                                                       : frechet_mean(mapped).matrix();
      EXPECT_LT((got - e.target_mean.matrix()).norm(), 1e-8);
    }
    EXPECT_FALSE(m.apply(src[2], 2).has_value());
  }
}

TEST(LabelAlignment, Errors) {
  Rng rng(6);
  const std::vector<SpdMatrix> covs{testing::random_spd(rng, 2)};
  const std::vector<int> labels{0};
  EXPECT_THROW(fit_label_alignment(covs, labels, covs, labels, std::vector<ClassPair>{{1, 0}}), DataError);
  EXPECT_THROW(fit_label_alignment(covs, labels, covs, labels, std::vector<ClassPair>{{0, 1}}), DataError);
  EXPECT_THROW(fit_label_alignment(covs, labels, covs, labels, std::vector<ClassPair>{{0, 0}, {0, 0}}),
               ConfigError);
}

TEST(FeatureStandardizer, ConstantColumnAndStandardizedGroup) {
  Matrix f(4, 2);
  f << 5, -1, 5, 1, 5, -1, 5, 1;
  const FeatureStandardizer s = fit_feature_standardizer({{"a", f}});
  EXPECT_DOUBLE_EQ(s.groups.at("a").stddev(0), kDefaultStdFloor);
  const Matrix out = apply_standardizer(s, f, "a");
  EXPECT_LT(out.col(0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.col(1) - f.col(1)).cwiseAbs().maxCoeff(), 1e-12);  // already mean 0, variance 1
  EXPECT_THROW(apply_standardizer(s, f, "b"), DataError);
}

TEST(FeatureStandardizer, RandomGroupsAreStandardizedAndIdempotent) {
  Rng rng(7);
  std::map<std::string, Matrix> groups;
  for (const char* g : {"s1", "s2", "s3"}) {
    groups[g] = (testing::random_matrix(rng, 25, 6) * 3.0).array() + 7.0;
  }
  const FeatureStandardizer s = fit_feature_standardizer(groups);
  for (const auto& [key, f] : groups) {
    const Matrix z = apply_standardizer(s, f, key);
    EXPECT_LT(z.colwise().mean().cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((z.array().square().colwise().mean() - 1.0).abs().maxCoeff(), 1e-10);
    // idempotent
    const FeatureStandardizer again = fit_feature_standardizer({{key, z}});
    EXPECT_LT((apply_standardizer(again, z, key) - z).cwiseAbs().maxCoeff(), 1e-10);
    // scale-equivariant: scaling a group leaves its standardized output unchanged
    FeatureStandardizer scaled = s;
    refit_group(scaled, key, 4.0 * f);
    EXPECT_LT((apply_standardizer(scaled, 4.0 * f, key) - z).cwiseAbs().maxCoeff(), 1e-10);
  }
  // Single vector: σ falls back to the floor.
  const FeatureStandardizer one = fit_feature_standardizer({{"x", testing::random_matrix(rng, 1, 3)}});
  EXPECT_TRUE(one.groups.at("x").stddev.isApprox(Vector::Constant(3, kDefaultStdFloor)));
}

TEST(AlignmentJson, RecordsRoundTripExactly) {
  Rng rng(8);
  const auto covs = random_set(rng, 5, 5);
  const AlignmentTransform a = fit_riemannian_alignment(covs, "subject-7");
  const nlohmann::json j = to_json(a);
  EXPECT_EQ(j.at("kind"), "riemannian");
  const AlignmentTransform b = alignment_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(b.kind, a.kind);
  EXPECT_EQ(b.scope, a.scope);
  EXPECT_EQ(b.transform, a.transform);
  EXPECT_EQ(b.reference.matrix(), a.reference.matrix());

  std::vector<int> labels{0, 1, 0, 1, 0};
  const LabelAlignmentMap m = fit_label_alignment(covs, labels, covs, labels, std::vector<ClassPair>{{0, 1}});
  const LabelAlignmentMap m2 = label_alignment_from_json(nlohmann::json::parse(to_json(m).dump()));
  ASSERT_EQ(m2.entries.size(), 1u);
  EXPECT_EQ(m2.entries[0].transform, m.entries[0].transform);
  EXPECT_EQ(m2.entries[0].pair, m.entries[0].pair);

  nlohmann::json broken = j;
  broken["transform"] = "AAAA";
  EXPECT_THROW(alignment_from_json(broken), DataError);
  broken.erase("kind");
  EXPECT_THROW(alignment_from_json(broken), DataError);
}

}  // namespace
}  // namespace beetl
