// beetl: command-line front end for the transfer-learning benchmark.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "beetl/alignment.hpp"
#include "beetl/bench/dataset.hpp"
#include "beetl/bench/pipeline.hpp"
#include "beetl/bench/protocol.hpp"
#include "beetl/bench/synthetic.hpp"
#include "beetl/classify.hpp"
#include "beetl/errors.hpp"

namespace {

using beetl::ConfigError;
using beetl::DataError;
using nlohmann::json;
namespace bench = beetl::bench;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr double kReportTolerance = 1e-12;

json read_json(const std::string& path, bool config) {
  std::ifstream in(path);
  if (!in) {
    if (config) throw ConfigError("config", "cannot open " + path);
    throw DataError("cannot open " + path);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    if (config) throw ConfigError("config", path + ": " + e.what());
    throw DataError(path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw DataError("cannot write " + path.string());
}

// Flags fill a JSON object; a --config file is merged over it, so any field
// it sets wins.
json merge_config(json flags, const std::string& config_path) {
  if (!config_path.empty()) flags.merge_patch(read_json(config_path, true));
  return flags;
}

template <class T>
void set_if(json& j, const json::json_pointer& ptr, const std::optional<T>& v) {
  if (v) j[ptr] = *v;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  std::optional<int> classes, trials_per_class, trials_per_block, class_rank, source_subjects, target_subjects;
  std::optional<double> subject_shift, class_separation, noise, calibration_fraction;
};

json default_domains(int source_subjects, int target_subjects) {
  const std::vector<std::string> shared{"Fz", "FC3", "FC4", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "CP3", "CP4"};
  std::vector<std::string> wide = shared;
  wide.insert(wide.end(), {"Pz", "Oz"});
  return json::array({{{"id", "source"}, {"channels", wide}, {"rate", 160.0}, {"samples", 320},
                       {"subjects", source_subjects}, {"role", "source"}},
                      {{"id", "target"}, {"channels", shared}, {"rate", 128.0}, {"samples", 256},
                       {"subjects", target_subjects}, {"role", "target"}}});
}

int run_generate(const GenerateArgs& a) {
  json flags = bench::to_json(bench::SyntheticConfig{});
  flags["domains"] = default_domains(a.source_subjects.value_or(6), a.target_subjects.value_or(2));
  flags["seed"] = a.seed;
  set_if(flags, "/classes"_json_pointer, a.classes);
  set_if(flags, "/trials_per_class"_json_pointer, a.trials_per_class);
  set_if(flags, "/trials_per_block"_json_pointer, a.trials_per_block);
  set_if(flags, "/class_rank"_json_pointer, a.class_rank);
  set_if(flags, "/subject_shift"_json_pointer, a.subject_shift);
  set_if(flags, "/class_separation"_json_pointer, a.class_separation);
  set_if(flags, "/noise"_json_pointer, a.noise);
  set_if(flags, "/calibration_fraction"_json_pointer, a.calibration_fraction);
  const bench::SyntheticConfig cfg = bench::synthetic_config_from_json(merge_config(flags, a.config));
  const bench::SyntheticDataset syn = bench::generate_synthetic(cfg);
  bench::save_dataset(a.out, syn.dataset);
  write_text(fs::path(a.out) / "synthetic_config.json", bench::to_json(cfg).dump(2) + "\n");
  std::cout << "wrote " << syn.dataset.trials.size() << " trials to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_inspect(const std::string& path) {
  const bench::Dataset ds = bench::load_dataset(path);
  const auto& m = ds.manifest;
  std::cout << "format " << m.format_version << ", " << m.domains.size() << " domains, " << m.trials.size()
            << " trials\n";
  for (const auto& d : m.domains) {
    std::cout << "\n" << d.id << " (" << (d.target ? "target" : "source") << "): " << d.channels.size()
              << " channels at " << d.rate << " Hz, classes";
    for (const auto& c : d.classes) std::cout << " " << c;
    std::cout << "\n";
    for (const auto& s : d.subjects) {
      std::map<bench::Split, int> splits;
      std::map<int, int> labels;
      int blocks = -1;
      for (const auto& t : m.trials) {
        if (t.domain != d.id || t.subject != s) continue;
        ++splits[t.split];
        if (t.label) ++labels[*t.label];
        blocks = std::max(blocks, t.block);
      }
      std::cout << "  " << s << ":";
      for (const auto& [split, n] : splits) std::cout << " " << bench::to_string(split) << "=" << n;
      std::cout << ", blocks=" << blocks + 1 << ", per class";
      for (const auto& [label, n] : labels) std::cout << " " << label << ":" << n;
      std::cout << "\n";
    }
  }
  const std::vector<beetl::ChannelMap> maps = [&] {
    std::vector<beetl::ChannelMap> v;
    for (const auto& d : m.domains) v.push_back(d.channels);
    return v;
  }();
  std::cout << "\ncommon channels: " << beetl::common_channels(maps).size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_align(const std::string& dataset, const std::string& method, double shrinkage, const std::string& out) {
  bench::PipelineConfig cfg;
  cfg.shrinkage = shrinkage;
  cfg.alignment = bench::alignment_method_from_string(method);
  if (cfg.alignment == bench::AlignmentMethod::None || cfg.alignment == bench::AlignmentMethod::LabelEuclidean) {
    throw ConfigError("method", "align caches unsupervised transforms only (euclidean, riemannian)");
  }
  cfg.validate();
  bench::PreparedData data = bench::prepare(bench::load_dataset(dataset), cfg);
  const auto transforms = bench::align_subjects(data, cfg.alignment);

  json records = json::array();
  for (const auto& t : transforms) {
    std::vector<beetl::SpdMatrix> covs;
    for (const auto& p : data.trials)
      if (p.domain + "/" + p.subject == t.scope) covs.push_back(p.cov);
    const beetl::Matrix id = beetl::Matrix::Identity(t.dim(), t.dim());
    const double deviation = (beetl::arithmetic_mean(covs).matrix() - id).norm();
    std::cout << t.scope << ": " << covs.size() << " trials, aligned mean deviation " << deviation << "\n";
    records.push_back(beetl::to_json(t));
  }
  const json doc{{"channels", data.channels.names()}, {"rate", data.rate}, {"transforms", records}};
  write_text(out, doc.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  std::optional<std::string> dataset, alignment, classifier;
  std::optional<int> folds, epochs;
  std::optional<double> shrinkage, resample_rate, lr;
  bool no_calibration = false;
};

int run_train(const TrainArgs& a) {
  json flags = bench::to_json(bench::PipelineConfig{});
  flags["seed"] = a.seed;
  set_if(flags, "/dataset"_json_pointer, a.dataset);
  set_if(flags, "/alignment"_json_pointer, a.alignment);
  set_if(flags, "/classifier"_json_pointer, a.classifier);
  set_if(flags, "/cv/folds"_json_pointer, a.folds);
  set_if(flags, "/shrinkage"_json_pointer, a.shrinkage);
  set_if(flags, "/resample_rate"_json_pointer, a.resample_rate);
  set_if(flags, "/spdnet/epochs"_json_pointer, a.epochs);
  set_if(flags, "/spdnet/lr"_json_pointer, a.lr);
  if (a.no_calibration) flags["cv"]["use_calibration"] = false;
  const bench::PipelineConfig cfg = bench::pipeline_config_from_json(merge_config(flags, a.config));
  const bench::EvalReport report = bench::run_pipeline(cfg);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_text(out / "report.json", bench::to_json(report).dump(2) + "\n");
  for (const auto& s : report.subjects) {
    for (const auto& f : s.folds) {
      if (f.loss_curve.empty()) continue;
      std::ostringstream csv;
      beetl::spdnet::write_loss_csv(csv, f.loss_curve);
      write_text(out / ("loss_" + s.subject + "_fold" + std::to_string(f.fold) + ".csv"), csv.str());
    }
    std::printf("%-12s %-14s balanced accuracy %.4f\n", s.domain.c_str(), s.subject.c_str(), s.balanced_accuracy);
  }
  for (const auto& t : report.tasks) std::printf("task %-12s score %.2f\n", t.domain.c_str(), t.score);
  std::printf("leaderboard %.2f\n", report.leaderboard);
  return 0;
}

// ---------------------------------------------------------------------------

int run_evaluate(const std::string& report_path, const std::string& out_dir) {
  const json report = read_json(report_path, false);
  double disagreement = 0.0;
  try {
    disagreement = bench::check_report(report);
  } catch (const json::exception& e) {
    throw DataError(report_path + ": malformed report (" + e.what() + ")");
  }
  if (disagreement > kReportTolerance) {
    throw DataError(report_path + ": balanced accuracy disagrees with its confusion matrix by " +
                    std::to_string(disagreement));
  }
  const fs::path dir = out_dir.empty() ? fs::path(report_path).parent_path() : fs::path(out_dir);
  std::ostringstream subjects, folds, tasks;
  subjects << "domain,subject,test_trials,balanced_accuracy\n";
  folds << "domain,subject,fold,train_trials,validation_trials,validation_balanced_accuracy\n";
  tasks << "domain,score\n";
  subjects.precision(17);
  folds.precision(17);
  tasks.precision(17);
  try {
    for (const auto& s : report.at("subjects")) {
      const auto domain = s.at("domain").get<std::string>();
      const auto subject = s.at("subject").get<std::string>();
      subjects << domain << "," << subject << "," << s.at("test_trials").get<int>() << ","
               << s.at("balanced_accuracy").get<double>() << "\n";
      for (const auto& f : s.at("folds")) {
        folds << domain << "," << subject << "," << f.at("fold").get<int>() << "," << f.at("train_trials").get<int>()
              << "," << f.at("validation_trials").get<int>() << ",";
        if (!f.at("validation_balanced_accuracy").is_null()) folds << f.at("validation_balanced_accuracy").get<double>();
        folds << "\n";
      }
      std::printf("%-12s %-14s balanced accuracy %.4f\n", domain.c_str(), subject.c_str(),
                  s.at("balanced_accuracy").get<double>());
    }
    for (const auto& t : report.at("tasks")) {
      tasks << t.at("domain").get<std::string>() << "," << t.at("score").get<double>() << "\n";
    }
    std::printf("leaderboard %.2f\n", report.at("leaderboard_score").get<double>());
  } catch (const json::exception& e) {
    throw DataError(report_path + ": malformed report (" + e.what() + ")");
  }
  write_text(dir / "report_subjects.csv", subjects.str());
  write_text(dir / "report_folds.csv", folds.str());
  write_text(dir / "report_tasks.csv", tasks.str());
  std::cout << "report consistent; CSV written to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_distances(const std::string& dataset, const std::string& subject, const std::string& alignment,
                  const std::string& out) {
  bench::PipelineConfig cfg;
  cfg.alignment = bench::alignment_method_from_string(alignment);
  if (cfg.alignment == bench::AlignmentMethod::LabelEuclidean) {
    throw ConfigError("alignment", "distances supports none, euclidean and riemannian");
  }
  bench::PreparedData data = bench::prepare(bench::load_dataset(dataset), cfg);
  bench::align_subjects(data, cfg.alignment);
  std::vector<beetl::SpdMatrix> covs;
  for (const auto& t : data.trials)
    if (subject.empty() || t.subject == subject) covs.push_back(t.cov);
  if (covs.empty()) throw DataError("distances: no trials for subject '" + subject + "'");
  std::ostringstream csv;
  beetl::write_distance_csv(csv, beetl::pairwise_distances(covs));
  if (out.empty() || out == "-") {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

int run_score(const std::vector<double>& scores, const std::string& report_path) {
  std::vector<double> all = scores;
  if (!report_path.empty()) {
    const json report = read_json(report_path, false);
    try {
      for (const auto& t : report.at("tasks")) all.push_back(t.at("score").get<double>());
    } catch (const json::exception& e) {
      throw DataError(report_path + ": malformed report (" + e.what() + ")");
    }
  }
  if (all.empty()) throw ConfigError("scores", "give task scores or --report");
  std::printf("%.10g\n", bench::leaderboard_score(all));
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Cross-dataset EEG transfer-learning benchmark"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic multi-domain dataset");
  generate->add_option("--config", gen.config, "Synthetic config JSON (overrides flags)");
  generate->add_option("--seed", gen.seed, "Random seed")->required();
  generate->add_option("--out", gen.out, "Output dataset directory")->required();
  generate->add_option("--classes", gen.classes);
  generate->add_option("--trials-per-class", gen.trials_per_class);
  generate->add_option("--trials-per-block", gen.trials_per_block);
  generate->add_option("--class-rank", gen.class_rank);
  generate->add_option("--source-subjects", gen.source_subjects);
  generate->add_option("--target-subjects", gen.target_subjects);
  generate->add_option("--subject-shift", gen.subject_shift);
  generate->add_option("--class-separation", gen.class_separation);
  generate->add_option("--noise", gen.noise);
  generate->add_option("--calibration-fraction", gen.calibration_fraction);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset manifest");
  inspect->add_option("dataset", inspect_path, "Dataset directory or manifest.json")->required();

  std::string align_dataset, align_method = "euclidean", align_out;
  double align_shrinkage = beetl::kDefaultShrinkage;
  auto* align = app.add_subcommand("align", "Fit and cache per-subject alignment transforms");
  align->add_option("--dataset", align_dataset)->required();
  align->add_option("--method", align_method, "euclidean or riemannian")->capture_default_str();
  align->add_option("--shrinkage", align_shrinkage)->capture_default_str();
  align->add_option("--out", align_out, "Output JSON")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Cross-validate a classifier and write a report");
  train->add_option("--config", tr.config, "Pipeline config JSON (overrides flags)");
  train->add_option("--seed", tr.seed, "Master seed")->required();
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--dataset", tr.dataset);
  train->add_option("--alignment", tr.alignment, "none, euclidean, riemannian, label+euclidean");
  train->add_option("--classifier", tr.classifier, "mdrm, tangent, spdnet");
  train->add_option("--folds", tr.folds);
  train->add_option("--shrinkage", tr.shrinkage);
  train->add_option("--resample-rate", tr.resample_rate);
  train->add_option("--epochs", tr.epochs);
  train->add_option("--lr", tr.lr);
  train->add_flag("--no-calibration", tr.no_calibration, "Train on source domains only");

  std::string eval_report, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Check a report and write CSV mirrors");
  evaluate->add_option("report", eval_report)->required();
  evaluate->add_option("--out", eval_out, "CSV directory (default: next to the report)");

  std::string dist_dataset, dist_subject, dist_alignment = "none", dist_out;
  auto* distances = app.add_subcommand("distances", "Pairwise Riemannian distances as CSV");
  distances->add_option("--dataset", dist_dataset)->required();
  distances->add_option("--subject", dist_subject, "Restrict to one subject");
  distances->add_option("--alignment", dist_alignment)->capture_default_str();
  distances->add_option("--out", dist_out, "Output CSV (default: stdout)");

  std::vector<double> score_values;
  std::string score_report;
  auto* score = app.add_subcommand("score", "Sum task scores into a leaderboard score");
  score->add_option("scores", score_values, "Task scores in percent");
  score->add_option("--report", score_report, "Take task scores from a report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*generate) return run_generate(gen);
  if (*inspect) return run_inspect(inspect_path);
  if (*align) return run_align(align_dataset, align_method, align_shrinkage, align_out);
  if (*train) return run_train(tr);
  if (*evaluate) return run_evaluate(eval_report, eval_out);
  if (*distances) return run_distances(dist_dataset, dist_subject, dist_alignment, dist_out);
  return run_score(score_values, score_report);
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const beetl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const beetl::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const beetl::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
