#include "aed/cli.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aed/evaluation.hpp"
#include "aed/feature_pack.hpp"
#include "aed/gridbank.hpp"
#include "aed/pipeline.hpp"
#include "aed/recounting.hpp"
#include "aed/synthbench.hpp"

namespace aed {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kModelEnv = "AED_MODEL_DIR";

/// JSON config files for CLI11. Flat keys apply to the subcommand being
/// run; an object keyed by a subcommand name scopes its keys to it.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* app) : app_(app) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<std::string> active;
    for (const auto* sc : app_->get_subcommands()) active = {sc->get_name()};
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto& [sub_key, sub_value] : value.items()) items.push_back(item({key}, sub_key, sub_value));
      } else {
        items.push_back(item(active, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be strings, numbers, booleans or arrays of them");
  }

  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs = {scalar(v)};
    }
    return it;
  }

  const CLI::App* app_;
};

/// Numbers plus "inf", "+inf", "-inf".
double parse_threshold(const std::string& text) {
  if (text.empty()) fail_validation("empty threshold");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || std::isnan(v))
    fail_validation("bad threshold '", text, "' (expected a number, inf or -inf)");
  return v;
}

std::map<std::string, std::vector<std::string>> parse_unseen(const std::string& spec) {
  std::map<std::string, std::vector<std::string>> out;
  if (fs::exists(spec)) {
    const auto j = detail::parse_json_file(spec);
    if (!j.is_object()) fail_validation(spec, ": expected an object of task -> [categories]");
    for (const auto& [task, cats] : j.items()) out[task] = cats.get<std::vector<std::string>>();
    return out;
  }
  // task:cat,cat;task:cat
  std::stringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    const auto colon = group.find(':');
    if (colon == std::string::npos || colon == 0)
      fail_validation("bad --unseen '", spec, "' (expected a JSON file or task:cat,cat;task:cat)");
    std::stringstream cats(group.substr(colon + 1));
    std::string cat;
    while (std::getline(cats, cat, ','))
      if (!cat.empty()) out[group.substr(0, colon)].push_back(cat);
  }
  if (out.empty()) fail_validation("--unseen names no categories");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << text;
  if (!f) throw RuntimeError(detail::concat("cannot write ", path.string()));
}

void write_jsonl(const std::string& path, const std::vector<json>& lines, std::ostream& out) {
  std::ostringstream os;
  for (const auto& l : lines) os << l.dump() << '\n';
  if (path.empty() || path == "-")
    out << os.str();
  else
    write_text(path, os.str());
}

std::vector<json> read_jsonl(const std::string& path) {
  if (!fs::exists(path)) fail_validation(path, ": no such file");
  std::vector<json> lines;
  detail::for_each_json_line(path, [&](const json& j) { lines.push_back(j); });
  return lines;
}

FeaturePack load_pack(const std::string& dir, std::ostream& err) {
  std::vector<std::string> warnings;
  auto pack = read_pack(dir, &warnings);
  for (const auto& w : warnings) err << "warning: " << dir << ": " << w << '\n';
  return pack;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) fail_validation(flag, " is required");
}

std::string model_dir_or_env(const std::string& value, const char* flag) {
  if (!value.empty()) return value;
  if (const char* env = std::getenv(kModelEnv); env && *env) return env;
  fail_validation(flag, " is required (or set ", kModelEnv, ")");
}

json roc_json(const RocCurve& c) {
  return {{"auc", c.auc}, {"eer", c.eer}, {"eer_threshold", c.eer_threshold}, {"points", c.points.size()}};
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string pack, out, detector = "nn", grid = "3x4", nn_mode = "pq", sigma_convention = "gamma";
  std::size_t pq_bits = 128, pq_subvectors = 16, pca_dim = 16, min_samples = 2;
  unsigned pq_iterations = 25;
  double sigma = 0.001, nu = 0.1, tolerance = 1e-4;
  std::size_t max_iterations = 100000;
  bool pq_normalize = false, rank_normalize = false;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  require(a.pack, "--pack");
  const auto out_dir = model_dir_or_env(a.out, "--out");
  DetectorConfig cfg;
  cfg.kind = parse_detector_kind(a.detector);
  if (a.nn_mode != "pq" && a.nn_mode != "exact") fail_validation("--nn-mode must be pq or exact");
  cfg.nn_mode = a.nn_mode == "pq" ? NnMode::pq : NnMode::exact;
  cfg.pq_code_bits = a.pq_bits;
  cfg.pq_subvectors = a.pq_subvectors;
  cfg.pq_iterations = a.pq_iterations;
  cfg.pq_normalize = a.pq_normalize;
  cfg.pca_dim = a.pca_dim;
  cfg.ocsvm_sigma = a.sigma;
  cfg.ocsvm_nu = a.nu;
  if (a.sigma_convention != "gamma" && a.sigma_convention != "width")
    fail_validation("--sigma-convention must be gamma or width");
  cfg.sigma_convention = a.sigma_convention == "gamma" ? SigmaConvention::gamma : SigmaConvention::width;
  cfg.ocsvm_tolerance = a.tolerance;
  cfg.ocsvm_max_iterations = a.max_iterations;
  cfg.seed = a.seed;
  if (cfg.uses_pq()) cfg.pq_config();
  if (cfg.kind == DetectorKind::ocsvm) cfg.ocsvm_gamma();
  const auto [rows, cols] = parse_grid(a.grid);

  const auto pack = load_pack(a.pack, err);
  const auto model = train_model(pack, cfg, rows, cols, {a.min_samples, a.rank_normalize});
  if (model.bank.fitted_cells() < model.bank.spec().cell_count())
    err << "warning: " << model.bank.spec().cell_count() - model.bank.fitted_cells()
        << " grid cells have too little training data; their regions will be flagged untrained_cell\n";
  const auto hash = save_model(model, out_dir);
  json report = {{"command", "train"},
                 {"model_dir", out_dir},
                 {"model_hash", hash},
                 {"detector", to_string(cfg.kind)},
                 {"preprocessing", cfg.preprocessing_descriptor()},
                 {"grid", a.grid},
                 {"cells", model.bank.spec().cell_count()},
                 {"fitted_cells", model.bank.fitted_cells()},
                 {"training_records", pack.size()}};
  out << report.dump(2) << '\n';
  return 0;
}

struct DetectArgs {
  std::string pack, model, out, threshold, mode = "single";
};

int cmd_detect(const DetectArgs& a, std::ostream& out, std::ostream& err) {
  require(a.pack, "--pack");
  const auto loaded = load_model(model_dir_or_env(a.model, "--model"));
  std::optional<double> threshold;
  if (!a.threshold.empty()) threshold = parse_threshold(a.threshold);
  const auto pack = load_pack(a.pack, err);
  const auto dets = detect(loaded.model, pack, threshold);
  std::vector<json> lines;
  std::size_t detected = 0, untrained = 0;
  for (const auto& d : dets) {
    lines.push_back(to_json(d));
    detected += d.detected.value_or(false) ? 1 : 0;
    untrained += d.untrained_cell ? 1 : 0;
  }
  if (untrained > 0) err << "warning: " << untrained << " regions fall in untrained grid cells\n";
  write_jsonl(a.out, lines, out);
  if (!a.out.empty() && a.out != "-") {
    json report = {{"command", "detect"},
                   {"records", dets.size()},
                   {"untrained_cell", untrained},
                   {"model_hash", loaded.model_hash},
                   {"out", a.out}};
    report["detected"] = threshold ? json(detected) : json(nullptr);
    out << report.dump(2) << '\n';
  }
  return 0;
}

int cmd_recount(const DetectArgs& a, std::ostream& out, std::ostream& err) {
  require(a.pack, "--pack");
  const auto loaded = load_model(model_dir_or_env(a.model, "--model"));
  RecountMode mode;
  if (a.mode == "single")
    mode = RecountMode::single;
  else if (a.mode == "multi")
    mode = RecountMode::multi;
  else
    fail_validation("--mode must be single or multi");
  std::optional<double> threshold;
  if (!a.threshold.empty()) threshold = parse_threshold(a.threshold);
  const auto pack = load_pack(a.pack, err);
  const auto records = recount(loaded.model, pack, mode, threshold);
  std::vector<json> lines;
  for (const auto& r : records) lines.push_back(to_json(r));
  write_jsonl(a.out, lines, out);
  if (!a.out.empty() && a.out != "-") {
    json report = {{"command", "recount"},
                   {"records", records.size()},
                   {"mode", a.mode},
                   {"model_hash", loaded.model_hash},
                   {"out", a.out}};
    out << report.dump(2) << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::vector<std::string> detections, gt, recount;
  std::string out, roc_csv, unseen, aggregation = "max", agreement = "intersect";
  bool frame_level = false, pixel_level = false, region_ap = false, json_stdout = false;
};

std::vector<Detection> load_detections(const std::string& path, const FeaturePack& gt) {
  std::vector<Detection> dets;
  for (const auto& j : read_jsonl(path)) {
    auto d = detection_from_json(j);
    if (d.record >= gt.size() || gt.records[d.record].video_id != d.video_id ||
        gt.records[d.record].frame_index != d.frame_index)
      fail_validation(path, ": detection for record ", d.record, " does not match the ground-truth pack");
    dets.push_back(std::move(d));
  }
  return dets;
}

int cmd_eval(EvalArgs a, std::ostream& out, std::ostream& err) {
  if (a.gt.empty()) fail_validation("--gt is required");
  if (!a.detections.empty() && a.detections.size() != a.gt.size())
    fail_validation("--detections and --gt must list the same number of splits");
  if (!a.recount.empty() && a.recount.size() != a.gt.size())
    fail_validation("--recount and --gt must list the same number of splits");
  if (a.detections.empty() && a.recount.empty()) fail_validation("nothing to evaluate: pass --detections or --recount");
  if (!a.detections.empty() && !a.frame_level && !a.pixel_level && !a.region_ap) a.frame_level = true;
  if (!a.recount.empty() && a.unseen.empty()) fail_validation("--recount needs --unseen");
  const auto agg = parse_aggregation(a.aggregation);
  const auto agreement = parse_agreement(a.agreement);
  std::map<std::string, std::vector<std::string>> unseen;
  if (!a.recount.empty()) unseen = parse_unseen(a.unseen);

  json report = {{"command", "eval"}, {"splits", json::array()}};
  std::ostringstream csv;
  csv << "split,criterion,threshold,tpr,fpr\n";
  csv << std::setprecision(17);
  auto add_csv = [&](std::size_t split, const char* criterion, const std::vector<RocPoint>& pts) {
    for (const auto& p : pts) csv << split << ',' << criterion << ',' << p.threshold << ',' << p.tpr << ',' << p.fpr << '\n';
  };
  std::vector<double> frame_aucs, pixel_aucs, aps, recount_aucs;
  std::ostringstream table;
  table << std::left << std::setw(7) << "split" << std::setw(14) << "criterion" << std::setw(10) << "AUC"
        << std::setw(10) << "EER" << "AP\n";
  auto row = [&](std::size_t s, const std::string& crit, std::optional<double> auc, std::optional<double> eer,
                 std::optional<double> ap) {
    auto cell = [](std::optional<double> v) {
      std::ostringstream c;
      if (v) c << std::fixed << std::setprecision(4) << *v; else c << "-";
      return c.str();
    };
    table << std::left << std::setw(7) << s << std::setw(14) << crit << std::setw(10) << cell(auc) << std::setw(10)
          << cell(eer) << cell(ap) << '\n';
  };

  for (std::size_t s = 0; s < a.gt.size(); ++s) {
    const auto gt_pack = load_pack(a.gt[s], err);
    if (!gt_pack.labels) fail_validation(a.gt[s], ": pack has no labels.jsonl; ground truth is required");
    json split = {{"gt", a.gt[s]}};
    if (!a.detections.empty()) {
      split["detections"] = a.detections[s];
      const auto dets = load_detections(a.detections[s], gt_pack);
      if (a.frame_level) {
        const auto c = frame_level_roc(dets, *gt_pack.labels, agg);
        std::size_t abnormal = 0;
        for (const auto& f : gt_pack.labels->frames) abnormal += f.abnormal ? 1 : 0;
        split["frame_level"] = roc_json(c);
        split["frame_level"]["frames"] = gt_pack.labels->frames.size();
        split["frame_level"]["abnormal_frames"] = abnormal;
        split["frame_level"]["aggregation"] = a.aggregation;
        frame_aucs.push_back(c.auc);
        add_csv(s, "frame", c.points);
        row(s, "frame", c.auc, c.eer, std::nullopt);
      }
      if (a.pixel_level) {
        const auto c = pixel_level_roc(dets, *gt_pack.labels);
        split["pixel_level"] = roc_json(c);
        pixel_aucs.push_back(c.auc);
        add_csv(s, "pixel", c.points);
        row(s, "pixel", c.auc, c.eer, std::nullopt);
      }
      if (a.region_ap) {
        std::vector<ScoredLabel> items;
        for (const auto& d : dets) {
          const auto* label = gt_pack.labels->for_record(d.record);
          items.push_back({d.score, label && label->abnormal});
        }
        const double ap = average_precision(items);
        split["region_ap"] = ap;
        aps.push_back(ap);
        row(s, "region", std::nullopt, std::nullopt, ap);
      }
    }
    if (!a.recount.empty()) {
      std::vector<RecountRecord> records;
      for (const auto& j : read_jsonl(a.recount[s])) records.push_back(recount_record_from_json(j));
      const auto items = recount_eval_items(gt_pack, records, unseen);
      const auto res = recounting_eval(items, agreement);
      split["recounting"] = {{"auc", res.auc},
                             {"positives", res.positives},
                             {"negatives", res.negatives},
                             {"agreement", a.agreement}};
      recount_aucs.push_back(res.auc);
      add_csv(s, "recounting", res.points);
      row(s, "recounting", res.auc, std::nullopt, std::nullopt);
    }
    report["splits"].push_back(std::move(split));
  }
  auto mean = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  json summary = json::object();
  if (!frame_aucs.empty()) summary["frame_level_auc"] = mean(frame_aucs);
  if (!pixel_aucs.empty()) summary["pixel_level_auc"] = mean(pixel_aucs);
  if (!aps.empty()) summary["map"] = mean_average_precision(aps);
  if (!recount_aucs.empty()) summary["recounting_auc"] = mean(recount_aucs);
  report["mean"] = summary;
  if (a.gt.size() > 1) {
    if (!aps.empty()) table << "mAP over " << aps.size() << " splits: " << std::fixed << std::setprecision(4)
                            << summary["map"].get<double>() << '\n';
  }

  if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
  if (!a.roc_csv.empty()) write_text(a.roc_csv, csv.str());
  if (a.json_stdout)
    out << report.dump(2) << '\n';
  else
    out << table.str();
  return 0;
}

struct SplitArgs {
  std::string pack, task, out;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  require(a.pack, "--pack");
  require(a.task, "--task");
  require(a.out, "--out");
  if (a.repeats == 0) fail_validation("--repeats must be positive");
  const auto pack = load_pack(a.pack, err);
  const auto splits = split_unseen_repeats(pack, a.task, a.seed, a.repeats);
  json report = {{"command", "split"}, {"task", a.task}, {"seed", a.seed}, {"splits", json::array()}};
  for (std::size_t r = 0; r < splits.size(); ++r) {
    const auto& s = splits[r];
    const fs::path dir = fs::path(a.out) / ("split_" + std::to_string(r));
    for (const auto& w : write_pack(s.train, dir / "train")) err << "warning: " << w << '\n';
    for (const auto& w : write_pack(s.test, dir / "test")) err << "warning: " << w << '\n';
    write_text(dir / "unseen.json", json{{a.task, s.unseen}}.dump(2) + "\n");
    report["splits"].push_back({{"repeat", r},
                                {"dir", dir.string()},
                                {"unseen", s.unseen},
                                {"train_images", s.train_images},
                                {"test_images", s.test_images},
                                {"train_regions", s.train.size()},
                                {"test_regions", s.test.size()},
                                {"balanced", s.balanced},
                                {"leakage", unseen_leakage(s.train, a.task, s.unseen)}});
  }
  write_text(fs::path(a.out) / "splits.json", report.dump(2) + "\n");
  out << report.dump(2) << '\n';
  return 0;
}

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool split_fixture = false;
  std::size_t images = 100;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  require(a.out, "--out");
  const fs::path dir(a.out);
  json report = {{"command", "synth"}, {"out", a.out}};
  auto emit = [&](const FeaturePack& p, const fs::path& where) {
    for (const auto& w : write_pack(p, where)) err << "warning: " << w << '\n';
  };
  if (a.split_fixture) {
    const auto pack = generate_split_fixture(a.seed.value_or(0), a.images);
    emit(pack, dir);
    report["kind"] = "split-fixture";
    report["records"] = pack.size();
    report["images"] = a.images;
    out << report.dump(2) << '\n';
    return 0;
  }
  SynthConfig cfg;
  if (!a.config.empty()) cfg = synth_config_from_json(detail::parse_json_file(a.config));
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  const auto train = generate_training(cfg);
  const auto test = generate(cfg);
  emit(train, dir / "train");
  emit(test, dir / "test");
  write_text(dir / "unseen.json", json(cfg.unseen_categories()).dump(2) + "\n");
  write_text(dir / "synth_config.json", to_json(cfg).dump(2) + "\n");
  std::size_t anomalies = 0;
  for (const auto& r : test.labels->regions) anomalies += r.abnormal ? 1 : 0;
  report["kind"] = "detection";
  report["seed"] = cfg.seed;
  report["train_records"] = train.size();
  report["test_records"] = test.size();
  report["test_anomalies"] = anomalies;
  out << report.dump(2) << '\n';
  return 0;
}

int cmd_validate(const std::string& pack_dir, std::ostream& out) {
  require(pack_dir, "--pack");
  std::vector<std::string> warnings;
  const auto pack = read_pack(pack_dir, &warnings);
  json tasks = json::array();
  for (const auto& t : pack.manifest.tasks) tasks.push_back({{"name", t.name}, {"categories", t.categories}});
  json report = {{"command", "validate"},
                 {"pack", pack_dir},
                 {"records", pack.size()},
                 {"feature_dim", pack.feature_dim()},
                 {"videos", pack.manifest.videos.size()},
                 {"tasks", tasks},
                 {"labels", pack.labels.has_value()},
                 {"warnings", warnings}};
  out << report.dump(2) << '\n';
  return 0;
}

/// Removes `--config FILE` / `--config=FILE` wherever it appears.
std::vector<std::string> extract_config(const std::vector<std::string>& args, std::string& config) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i > 0 && args[i] == "--config") {
      if (i + 1 >= args.size()) fail_validation("--config needs a file");
      config = args[++i];
    } else if (i > 0 && args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  return rest;
}

class WarningRedirect {
 public:
  explicit WarningRedirect(std::ostream& err) : saved_(warning_sink()) {
    warning_sink() = [&err](std::string_view msg) { err << "warning: " << msg << '\n'; };
  }
  ~WarningRedirect() { warning_sink() = saved_; }

 private:
  WarningSink saved_;
};

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  WarningRedirect redirect(err);
  CLI::App app("Abnormal event detection and recounting over region feature packs", "aed");
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Fit a grid bank of novelty detectors and recounting densities");
  c_train->add_option("--pack", train.pack, "Training feature pack directory (normal data)");
  c_train->add_option("--out", train.out, "Model directory to write")->envname(kModelEnv);
  c_train->add_option("--detector", train.detector, "nn | ocsvm | kde")->capture_default_str();
  c_train->add_option("--grid", train.grid, "Grid as RxC")->capture_default_str();
  c_train->add_option("--nn-mode", train.nn_mode, "pq | exact")->capture_default_str();
  c_train->add_option("--pq-bits", train.pq_bits, "PQ code length in bits")->capture_default_str();
  c_train->add_option("--pq-subvectors", train.pq_subvectors, "PQ subvectors")->capture_default_str();
  c_train->add_option("--pq-iterations", train.pq_iterations, "k-means iterations")->capture_default_str();
  c_train->add_flag("--pq-normalize", train.pq_normalize, "L2-normalize features before PQ");
  c_train->add_option("--pca-dim", train.pca_dim, "PCA dimension for ocsvm/kde (0 = none)")->capture_default_str();
  c_train->add_option("--ocsvm-sigma", train.sigma, "OC-SVM kernel parameter")->capture_default_str();
  c_train->add_option("--ocsvm-nu", train.nu, "OC-SVM nu")->capture_default_str();
  c_train->add_option("--sigma-convention", train.sigma_convention,
                      "gamma: k=exp(-s|a-b|^2); width: k=exp(-|a-b|^2/(2s^2))")
      ->capture_default_str();
  c_train->add_option("--ocsvm-tolerance", train.tolerance, "SMO stopping tolerance")->capture_default_str();
  c_train->add_option("--ocsvm-max-iterations", train.max_iterations, "SMO iteration cap")->capture_default_str();
  c_train->add_option("--min-samples", train.min_samples, "Minimum training regions per cell")->capture_default_str();
  c_train->add_flag("--rank-normalize", train.rank_normalize, "Report scores as ranks within each cell");
  c_train->add_option("--seed", train.seed, "Random seed")->capture_default_str();

  DetectArgs det;
  auto* c_detect = app.add_subcommand("detect", "Score every region of a pack");
  c_detect->add_option("--pack", det.pack, "Feature pack directory");
  c_detect->add_option("--model", det.model, "Model directory")->envname(kModelEnv);
  c_detect->add_option("--threshold", det.threshold, "Flag regions scoring at least this (number, inf, -inf)");
  c_detect->add_option("--out", det.out, "Detections JSON lines (default stdout)");

  DetectArgs rec;
  auto* c_recount = app.add_subcommand("recount", "Name concepts of regions and score their anomaly");
  c_recount->add_option("--pack", rec.pack, "Feature pack directory");
  c_recount->add_option("--model", rec.model, "Model directory")->envname(kModelEnv);
  c_recount->add_option("--threshold", rec.threshold, "Only recount regions scoring at least this");
  c_recount->add_option("--mode", rec.mode, "single (argmax) | multi (all categories >= 0.1)")->capture_default_str();
  c_recount->add_option("--out", rec.out, "Recount JSON lines (default stdout)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate detections and recounting against ground truth");
  c_eval->add_option("--detections", ev.detections, "Detections JSON lines, one per split");
  c_eval->add_option("--gt", ev.gt, "Ground-truth pack directories, one per split");
  c_eval->add_flag("--frame-level", ev.frame_level, "Frame-level ROC");
  c_eval->add_flag("--pixel-level", ev.pixel_level, "Pixel-level ROC (40% coverage rule)");
  c_eval->add_flag("--region-ap", ev.region_ap, "Average precision over regions ranked by score");
  c_eval->add_option("--aggregation", ev.aggregation, "Frame score: max | mean")->capture_default_str();
  c_eval->add_option("--recount", ev.recount, "Multi-mode recount JSON lines, one per split");
  c_eval->add_option("--unseen", ev.unseen, "Unseen categories: JSON file or task:cat,cat;task:cat");
  c_eval->add_option("--agreement", ev.agreement, "intersect | exact")->capture_default_str();
  c_eval->add_option("--out", ev.out, "Write the JSON report here");
  c_eval->add_option("--roc-csv", ev.roc_csv, "Write ROC points as CSV");
  c_eval->add_flag("--json", ev.json_stdout, "Print the JSON report instead of the table");

  SplitArgs sp;
  auto* c_split = app.add_subcommand("split", "Unseen-category train/test splits");
  c_split->add_option("--pack", sp.pack, "Annotated feature pack directory");
  c_split->add_option("--task", sp.task, "Concept task whose categories are split");
  c_split->add_option("--repeats", sp.repeats, "Number of splits")->capture_default_str();
  c_split->add_option("--seed", sp.seed, "Random seed")->capture_default_str();
  c_split->add_option("--out", sp.out, "Output directory");

  SynthArgs sy;
  std::uint64_t synth_seed = 0;
  auto* c_synth = app.add_subcommand("synth", "Generate synthetic feature packs");
  c_synth->add_option("--synth-config", sy.config, "Generator parameters (JSON)");
  auto* synth_seed_opt = c_synth->add_option("--seed", synth_seed, "Random seed");
  c_synth->add_option("--out", sy.out, "Output directory");
  c_synth->add_flag("--split-fixture", sy.split_fixture, "Write an annotated image collection for split");
  c_synth->add_option("--images", sy.images, "Images in the split fixture")->capture_default_str();

  std::string validate_pack_dir;
  auto* c_validate = app.add_subcommand("validate", "Check a feature pack");
  c_validate->add_option("--pack", validate_pack_dir, "Feature pack directory");

  try {
    std::string config;
    const auto args = extract_config(raw_args, config);
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    if (!config.empty()) {
      if (!fs::exists(config)) fail_validation("config file ", config, " not found");
      app.set_config("--config", config, "JSON file supplying any flag", true);
    } else {
      app.set_config("--config", "", "JSON file supplying any flag");
    }
    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 2;
    }
    if (synth_seed_opt->count() > 0) sy.seed = synth_seed;

    if (c_train->parsed()) return cmd_train(train, out, err);
    if (c_detect->parsed()) return cmd_detect(det, out, err);
    if (c_recount->parsed()) return cmd_recount(rec, out, err);
    if (c_eval->parsed()) return cmd_eval(ev, out, err);
    if (c_split->parsed()) return cmd_split(sp, out, err);
    if (c_synth->parsed()) return cmd_synth(sy, out, err);
    if (c_validate->parsed()) return cmd_validate(validate_pack_dir, out);
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const RuntimeError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace aed
