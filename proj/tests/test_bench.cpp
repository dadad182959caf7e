#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "beetl/bench/dataset.hpp"
#include "beetl/bench/pipeline.hpp"
#include "beetl/bench/protocol.hpp"
#include "beetl/bench/synthetic.hpp"
#include "testing.hpp"

namespace beetl::bench {
namespace {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("beetl_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<int> sizes(const FoldSpec& f) {
  std::vector<int> out;
  for (const auto& fold : f.folds) out.push_back(static_cast<int>(fold.size()));
  return out;
}

TEST(Folds, TenAndElevenBlocks) {
  std::vector<int> ten(10);
  std::iota(ten.begin(), ten.end(), 0);
  const FoldSpec a = blockwise_folds(ten, 5);
  EXPECT_EQ(sizes(a), (std::vector<int>{2, 2, 2, 2, 2}));
  EXPECT_EQ(a.folds[1], (std::vector<int>{2, 3}));

  std::vector<int> eleven(11);
  std::iota(eleven.begin(), eleven.end(), 0);
  EXPECT_EQ(sizes(blockwise_folds(eleven, 5)), (std::vector<int>{3, 2, 2, 2, 2}));
  EXPECT_EQ(blockwise_folds(eleven, 5).folds[0], (std::vector<int>{0, 1, 2}));

  EXPECT_THROW(blockwise_folds(std::vector<int>{0, 1, 2}, 5), DataError);
  EXPECT_THROW(blockwise_folds(ten, 0), ConfigError);
}

TEST(Folds, PartitionBlocksContiguouslyForAnyCount) {
  for (int n = 1; n <= 30; ++n) {
    for (int k = 1; k <= n; ++k) {
      // Per-trial block indices, unsorted and repeated, with gaps.
      std::vector<int> blocks;
      for (int b = n - 1; b >= 0; --b) blocks.insert(blocks.end(), 3, 10 * b + 7);
      const FoldSpec f = blockwise_folds(blocks, k);
      ASSERT_EQ(static_cast<int>(f.folds.size()), k);
      std::vector<int> flat;
      for (const auto& fold : f.folds) {
        ASSERT_FALSE(fold.empty());
        flat.insert(flat.end(), fold.begin(), fold.end());
      }
      ASSERT_EQ(static_cast<int>(flat.size()), n);
      EXPECT_TRUE(std::is_sorted(flat.begin(), flat.end()));
      EXPECT_EQ(std::adjacent_find(flat.begin(), flat.end()), flat.end());
      const auto sz = sizes(f);
      EXPECT_LE(*std::max_element(sz.begin(), sz.end()) - *std::min_element(sz.begin(), sz.end()), 1);
      EXPECT_TRUE(std::is_sorted(sz.rbegin(), sz.rend()));
      for (int b : blocks) EXPECT_EQ(f.folds[static_cast<std::size_t>(f.fold_of(b))].size() > 0, true);
    }
  }
}

TEST(MajorityVote, RulesAndErrors) {
  const std::vector<std::vector<int>> five{{0}, {1}, {1}, {2}, {1}};
  EXPECT_EQ(majority_vote(five), std::vector<int>{1});
  const std::vector<std::vector<int>> tie{{1, 2}, {0, 2}};
  EXPECT_EQ(majority_vote(tie), (std::vector<int>{0, 2}));
  const std::vector<std::vector<int>> one{{3, 1, 4, 1, 5}};
  EXPECT_EQ(majority_vote(one), one[0]);
  const std::vector<std::vector<int>> unanimous(4, std::vector<int>{2, 0, 1});
  EXPECT_EQ(majority_vote(unanimous), unanimous[0]);
  const std::vector<std::vector<int>> ragged{{0, 1}, {0}};
  EXPECT_THROW(majority_vote(ragged), ShapeError);
  EXPECT_THROW(majority_vote(std::vector<std::vector<int>>{}), DataError);
}

TEST(BalancedAccuracy, EdgeCasesAndConfusionCrossCheck) {
  const std::vector<int> t{0, 1, 2, 2, 1};
  EXPECT_DOUBLE_EQ(balanced_accuracy(t, t), 1.0);
  EXPECT_DOUBLE_EQ(balanced_accuracy(std::vector<int>{0, 0, 0, 1}, std::vector<int>{0, 0, 0, 0}), 0.5);
  EXPECT_THROW(balanced_accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
  EXPECT_THROW(balanced_accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), ShapeError);

  testing::Rng rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    // Balanced classes: equals plain accuracy.
    std::vector<int> y, p;
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 5; ++i) {
        y.push_back(c);
        p.push_back(cls(rng));
      }
    int correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) correct += y[i] == p[i];
    EXPECT_NEAR(balanced_accuracy(y, p), correct / 20.0, 1e-15);

    // Any labels: matches the mean recall read off the confusion matrix.
    y.resize(7);
    p.resize(7);
    const Confusion c = confusion_matrix(y, p);
    EXPECT_EQ(c.counts.sum(), 7.0);
    double sum = 0.0;
    for (const auto& [label, r] : per_class_recall(c)) sum += r;
    EXPECT_NEAR(balanced_accuracy(y, p), sum / static_cast<double>(per_class_recall(c).size()), 1e-15);
  }
}

TEST(Leaderboard, SumsTaskScores) {
  const std::vector<std::array<double, 3>> rows{{65.55, 76.33, 141.88}, {68.66, 71.33, 139.99}, {65.57, 59.87, 125.44},
                                                {69.23, 54.47, 123.7},  {66.78, 56.47, 123.25}};
  for (const auto& r : rows) EXPECT_NEAR(leaderboard_score(std::vector<double>{r[0], r[1]}), r[2], 1e-9);
  EXPECT_EQ(leaderboard_score(std::vector<double>{0.0, 0.0}), 0.0);
  EXPECT_NEAR(leaderboard_score(std::vector<double>{57.6, 49.9}), 107.5, 1e-9);
}

TEST(TrialFile, RoundTripAndCorruption) {
  testing::Rng rng(4);
  Trial t;
  t.rate = 250.0;
  t.signal = testing::random_matrix(rng, 3, 17) * 10.0;
  const std::string bytes = encode_trial(t);
  EXPECT_EQ(bytes.size(), kTrialHeaderBytes + 3 * 17 * 4);
  EXPECT_EQ(bytes.substr(0, 6), "BEETL1");
  const Trial back = decode_trial(bytes);
  EXPECT_EQ(back.rate, 250.0);
  EXPECT_EQ(back.signal, t.signal.cast<float>().cast<double>());

  auto kind_of = [](const std::string& b) {
    try {
      decode_trial(b);
    } catch (const DatasetError& e) {
      return e.kind();
    }
    return DatasetErrorKind::Io;
  };
  std::string bad = bytes;
  bad[2] = 'X';
  EXPECT_EQ(kind_of(bad), DatasetErrorKind::BadMagic);
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() - 1)), DatasetErrorKind::Truncated);
  EXPECT_EQ(kind_of(bytes.substr(0, 12)), DatasetErrorKind::Truncated);
  EXPECT_EQ(kind_of(bytes + "xx"), DatasetErrorKind::Inconsistent);
}

SyntheticConfig small_config(std::uint64_t seed) {
  SyntheticConfig c;
  c.classes = 3;
  c.trials_per_class = 12;
  c.trials_per_block = 3;
  c.subject_shift = 0.4;
  c.class_separation = 2.0;
  c.seed = seed;
  c.domains = {{"src", {"C3", "Cz", "C4", "Pz", "Fz"}, 128.0, 128, 3, false},
               {"tgt", {"C3", "Cz", "C4", "Pz", "O1"}, 256.0, 256, 1, true}};
  return c;
}

TEST(Dataset, SaveLoadRoundTripAndManifestErrors) {
  TempDir dir("dataset_roundtrip");
  const SyntheticDataset syn = generate_synthetic(small_config(1));
  save_dataset(dir.path(), syn.dataset);
  const Dataset back = load_dataset(dir.path());
  EXPECT_EQ(back.manifest, syn.dataset.manifest);
  ASSERT_EQ(back.trials.size(), syn.dataset.trials.size());
  for (std::size_t i = 0; i < back.trials.size(); ++i) {
    EXPECT_EQ(back.trials[i].signal, syn.dataset.trials[i].signal.cast<float>().cast<double>());
    EXPECT_EQ(back.trials[i].info, syn.dataset.trials[i].info);
  }

  // Label beyond the domain's classes.
  nlohmann::json j = to_json(syn.dataset.manifest);
  j["trials"][0]["label"] = 9;
  EXPECT_THROW(manifest_from_json(j), DatasetError);
  // Trial whose header disagrees with its domain.
  Trial odd = syn.dataset.trials[0];
  odd.signal.conservativeResize(2, Eigen::NoChange);
  write_file(dir.path() / syn.dataset.manifest.trials[0].file, encode_trial(odd));
  try {
    load_dataset(dir.path());
    FAIL() << "expected an inconsistency";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetErrorKind::Inconsistent);
  }
  fs::remove(dir.path() / syn.dataset.manifest.trials[0].file);
  try {
    load_dataset(dir.path() / kManifestName);
    FAIL() << "expected an I/O error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetErrorKind::Io);
  }
}

TEST(Synthetic, DeterministicFiles) {
  TempDir a("syn_a"), b("syn_b");
  save_dataset(a.path(), generate_synthetic(small_config(7)).dataset);
  save_dataset(b.path(), generate_synthetic(small_config(7)).dataset);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(read_file(entry.path()), read_file(b.path() / fs::relative(entry.path(), a.path())));
  }
  EXPECT_EQ(files, 3u * 36 + 36 + 1);
  const SyntheticDataset other = generate_synthetic(small_config(8));
  EXPECT_NE(other.dataset.trials[0].signal, generate_synthetic(small_config(7)).dataset.trials[0].signal);
}

TEST(Synthetic, StructureBlocksAndSplits) {
  const SyntheticDataset syn = generate_synthetic(small_config(2));
  const DatasetManifest& m = syn.dataset.manifest;
  EXPECT_EQ(syn.canonical_channels.size(), 6u);
  std::map<std::string, std::map<int, int>> per_subject_class;
  int calibration = 0, test = 0;
  for (const auto& t : m.trials) {
    ++per_subject_class[t.subject][*t.label];
    calibration += t.split == Split::Calibration;
    test += t.split == Split::Test;
  }
  for (const auto& [s, counts] : per_subject_class)
    for (const auto& [c, n] : counts) EXPECT_EQ(n, 12);
  EXPECT_EQ(calibration, 18);
  EXPECT_EQ(test, 18);
  // Blocks advance with trial order; calibration precedes test in time.
  int last_block = -1;
  bool seen_test = false;
  for (const auto& t : m.trials) {
    if (t.subject != "tgt-s1") continue;
    EXPECT_GE(t.block, last_block);
    last_block = t.block;
    seen_test = seen_test || t.split == Split::Test;
    if (seen_test) {
      EXPECT_EQ(t.split, Split::Test);
    }
  }
  EXPECT_EQ(last_block, 11);
}

TEST(Synthetic, MonteCarloCovarianceMatchesModel) {
  SyntheticConfig c = small_config(3);
  c.trials_per_class = 1;
  c.trials_per_block = 1;
  c.domains = {{"src", {"C3", "Cz", "C4", "Pz", "Fz", "O1"}, 128.0, 4096, 2, false}};
  const SyntheticDataset syn = generate_synthetic(c);
  for (std::size_t i = 0; i < syn.dataset.trials.size(); ++i) {
    const Trial& t = syn.dataset.trials[i];
    const Matrix expected = syn.expected_covariance("src", t.info.subject_id, *t.info.label, 0.0);
    const Matrix estimate = t.signal * t.signal.transpose() / static_cast<double>(t.samples());
    EXPECT_LT((estimate - expected).norm() / expected.norm(), 0.05) << i;
  }
}

TEST(Synthetic, NoShiftMeansSubjectsAgree) {
  SyntheticConfig c = small_config(4);
  c.subject_shift = 0.0;
  c.trials_per_class = 1;
  c.domains = {{"src", {"C3", "Cz", "C4", "Pz"}, 128.0, 4096, 3, false}};
  const SyntheticDataset syn = generate_synthetic(c);
  for (const auto& [s, a] : syn.mixing) EXPECT_EQ(a, Matrix::Identity(4, 4));
  std::map<int, std::vector<Matrix>> by_class;
  for (const auto& t : syn.dataset.trials) by_class[*t.info.label].push_back(t.signal * t.signal.transpose() / 4096.0);
  for (const auto& [label, covs] : by_class)
    for (const auto& cov : covs) EXPECT_LT((cov - covs.front()).norm() / covs.front().norm(), 0.1);
}

TEST(Synthetic, ConfigValidationAndJson) {
  SyntheticConfig c = small_config(5);
  EXPECT_EQ(to_json(synthetic_config_from_json(to_json(c))), to_json(c));
  c.classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  nlohmann::json j = to_json(small_config(5));
  j["extra"] = 1;
  EXPECT_THROW(synthetic_config_from_json(j), ConfigError);
  j.erase("extra");
  j["subject_shift"] = "lots";
  try {
    synthetic_config_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "subject_shift");
  }
}

TEST(Pipeline, ConfigParsingAndErrors) {
  PipelineConfig c;
  c.dataset = "somewhere";
  c.classifier = ClassifierKind::Tangent;
  c.alignment = AlignmentMethod::LabelEuclidean;
  c.seed = 99;
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(to_json(pipeline_config_from_json(j)), j);

  nlohmann::json bad = j;
  bad["classifier"] = "forest";
  try {
    pipeline_config_from_json(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "classifier");
  }
  bad = j;
  bad["cv"]["folds"] = 0;
  EXPECT_THROW(pipeline_config_from_json(bad), ConfigError);
  bad = j;
  bad["spdnet"]["momentum"] = 0.5;
  try {
    pipeline_config_from_json(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "spdnet.momentum");
  }
  EXPECT_NE(cell_seed(1, 0), cell_seed(1, 1));
  EXPECT_EQ(cell_seed(1, 5), cell_seed(1, 5));
}

TEST(Pipeline, ReportsAreReproducibleAndConsistent) {
  const SyntheticDataset syn = generate_synthetic(small_config(6));
  PipelineConfig cfg;
  cfg.seed = 11;
  cfg.folds = 3;
  for (auto method : {AlignmentMethod::None, AlignmentMethod::Euclidean, AlignmentMethod::Riemannian,
                      AlignmentMethod::LabelEuclidean}) {
    cfg.alignment = method;
    const EvalReport r = run_pipeline(syn.dataset, cfg);
    ASSERT_EQ(r.subjects.size(), 1u);
    const SubjectResult& s = r.subjects[0];
    EXPECT_EQ(s.folds.size(), 3u);
    EXPECT_EQ(s.y_true.size(), 18u);
    // Every calibration trial is validated exactly once.
    std::size_t validated = 0;
    for (const auto& f : s.folds) validated += f.validation_trials;
    EXPECT_EQ(validated, 18u);
    for (const auto& f : s.folds) EXPECT_EQ(f.train_trials, 3u * 36 + 18 - f.validation_trials);
    for (Index i = 0; i < s.confusion.counts.rows(); ++i) {
      const int truth = s.confusion.classes[static_cast<std::size_t>(i)];
      EXPECT_EQ(s.confusion.support(static_cast<std::size_t>(i)), std::count(s.y_true.begin(), s.y_true.end(), truth));
    }
    const nlohmann::json j = to_json(r);
    EXPECT_LT(check_report(j), 1e-15);
    EXPECT_EQ(j.dump(), to_json(run_pipeline(syn.dataset, cfg)).dump());
    EXPECT_NEAR(r.leaderboard, 100.0 * s.balanced_accuracy, 1e-12);
  }
}

TEST(Pipeline, SpdNetClassifierRuns) {
  const SyntheticDataset syn = generate_synthetic(small_config(9));
  PipelineConfig cfg;
  cfg.seed = 5;
  cfg.folds = 2;
  cfg.classifier = ClassifierKind::SpdNet;
  cfg.spdnet.train.epochs = 2;
  const EvalReport a = run_pipeline(syn.dataset, cfg);
  const EvalReport b = run_pipeline(syn.dataset, cfg);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_FALSE(a.subjects[0].folds[0].loss_curve.empty());
}

}  // namespace
}  // namespace beetl::bench
