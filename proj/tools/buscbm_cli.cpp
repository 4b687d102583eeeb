// buscbm: command-line front end.
//
// Exit codes: 0 success, 2 input/config error, 3 undefined metric, 1 other.

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "buscbm/buscbm.hpp"
#include "buscbm/http.hpp"

namespace fs = std::filesystem;
using namespace buscbm;

namespace {

constexpr std::uint64_t kDefaultSeed = 0;
constexpr const char* kVersion = "1.0.0";

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << text;
}

class Run {
 public:
  Run(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), start_(std::chrono::steady_clock::now()) {}

  void set_out(const std::string& dir) {
    out_ = dir;
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec || !fs::is_directory(out_)) throw InputError("cannot create output directory '" + dir + "'");
  }

  fs::path path(const std::string& name) const { return out_ / name; }

  void input(const std::string& path) { inputs_.push_back(path); }
  void config(const std::string& key, Json value) { config_[key] = std::move(value); }
  void seed(const std::string& key, std::uint64_t value) { seeds_[key] = value; }

  void output_json(const std::string& name, const Json& j) {
    write_text(path(name), j.dump(2) + "\n");
    outputs_.push_back(path(name).string());
  }

  void output_text(const std::string& name, const std::string& text) {
    write_text(path(name), text);
    outputs_.push_back(path(name).string());
  }

  void output_file(const fs::path& p) { outputs_.push_back(p.string()); }

  void report(const std::string& stem, const Json& j, const std::string& text) {
    output_json(stem + ".json", j);
    output_text(stem + ".txt", text);
  }

  void finish() {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json artifacts = Json::object();
    Json ins = Json::array();
    for (const auto& p : inputs_) ins.push_back(Json{{"path", p}, {"sha256", sha256_file(p)}});
    Json outs = Json::array();
    for (const auto& p : outputs_) outs.push_back(Json{{"path", p}, {"sha256", sha256_file(p)}});
    Json manifest{{"tool", "buscbm"},      {"version", kVersion}, {"command", command_},  {"argv", argv_},
                  {"config", config_},     {"seeds", seeds_},     {"inputs", ins},        {"outputs", outs},
                  {"wall_time_seconds", wall}};
    write_text(path("manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  fs::path out_ = ".";
  Json config_ = Json::object();
  Json seeds_ = Json::object();
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

std::optional<Split> resolve_split(const std::string& choice, const Cohort& cohort) {
  if (choice == "all") return std::nullopt;
  if (choice != "auto") return parse_split(choice);
  std::size_t with = 0;
  for (const auto& w : cohort) with += w.split ? 1 : 0;
  if (with == 0) return std::nullopt;
  if (with != cohort.size()) throw InputError("cohort mixes women with and without a split field");
  return Split::test;
}

std::string split_name(const std::optional<Split>& s) { return s ? std::string(to_string(*s)) : "all"; }

std::vector<NamedHead> load_heads(const std::vector<std::string>& paths, Run& run) {
  std::vector<NamedHead> heads;
  std::map<std::string, int> seen;
  for (const auto& p : paths) {
    run.input(p);
    HeadModel m;
    try {
      m = head_from_json(read_json_file(p));
    } catch (const InputError& e) {
      throw InputError(p + ": " + e.what());
    }
    std::string name(to_string(m.config.variant));
    if (const int n = ++seen[name]; n > 1) name += "#" + std::to_string(n);
    heads.push_back({name, std::move(m)});
  }
  return heads;
}

struct Inputs {
  Cohort cohort;
  std::vector<Detection> detections;
};

Inputs load_inputs(const std::string& cohort_path, const std::string& detections_path, Run& run) {
  Inputs in;
  run.input(cohort_path);
  in.cohort = read_cohort_file(cohort_path);
  if (!detections_path.empty()) {
    run.input(detections_path);
    in.detections = read_detections_file(detections_path);
  }
  return in;
}

int side_dim_of(std::span<const TrainRecord> records) {
  if (records.empty()) return 0;
  const std::size_t d = records.front().side_features.size();
  for (const auto& r : records) {
    if (r.side_features.size() != d) throw InputError("detections carry side-feature vectors of different lengths");
  }
  return static_cast<int>(d);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out = "sim";
  std::uint64_t seed = kDefaultSeed;
};

int cmd_simulate(const SimulateArgs& a, Run& run) {
  run.set_out(a.out);
  SimConfig cfg;
  if (!a.config.empty()) {
    run.input(a.config);
    cfg = sim_config_from_json(read_json_file(a.config));
  }
  run.config("simulation", sim_config_to_json(cfg));
  run.seed("seed", a.seed);
  const auto sim = simulate_cohort(cfg, a.seed);
  write_cohort_file(run.path("cohort.jsonl").string(), sim.cohort);
  run.output_file(run.path("cohort.jsonl"));
  write_detections_file(run.path("detections.jsonl").string(), sim.detections);
  run.output_file(run.path("detections.jsonl"));
  run.output_json("oracle.json", sim.oracle_json);
  run.finish();
  std::cout << "simulated " << sim.cohort.size() << " women, " << sim.n_lesions << " lesions ("
            << sim.n_malignant << " malignant), " << sim.detections.size() << " detections\n"
            << "Bayes oracle AUROC " << detail::fixed(sim.bayes_auroc_empirical, 4) << " (analytic "
            << detail::fixed(sim.bayes_auroc_analytic, 4) << ")\n";
  return 0;
}

struct SplitArgs {
  std::string cohort;
  std::string out = "split";
  std::uint64_t seed = kDefaultSeed;
  std::vector<double> fractions{0.7, 0.1, 0.2};
};

int cmd_split(const SplitArgs& a, Run& run) {
  run.set_out(a.out);
  if (a.fractions.size() != 3) throw InputError("--fractions takes three values (train val test)");
  const std::array<double, 3> fr{a.fractions[0], a.fractions[1], a.fractions[2]};
  run.config("fractions", fr);
  run.seed("seed", a.seed);
  run.input(a.cohort);
  const Cohort cohort = read_cohort_file(a.cohort);
  auto [kept, report] = apply_exclusions(cohort);
  const auto assignment = split_groups(group_ids(kept), fr, a.seed);
  const Cohort split = assign_splits(std::move(kept), assignment);
  write_cohort_file(run.path("cohort_split.jsonl").string(), split);
  run.output_file(run.path("cohort_split.jsonl"));
  run.report("exclusions", exclusion_report_json(report), exclusion_report_text(report));
  const auto summary = summarize_splits(split);
  run.report("split_summary", split_summary_json(summary), split_summary_text(summary));
  Json groups = Json::object();
  for (const auto& [g, s] : assignment.groups) groups[g] = std::string(to_string(s));
  const auto counts = assignment.counts();
  run.output_json("split_assignment.json", Json{{"seed", a.seed},
                                                {"fractions", fr},
                                                {"group_counts", {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}}},
                                                {"groups", groups}});
  run.finish();
  std::cout << "kept " << report.images_kept << " of " << report.images_in << " images; groups train/val/test = "
            << counts[0] << "/" << counts[1] << "/" << counts[2] << "\n";
  return 0;
}

struct TrainArgs {
  std::string cohort;
  std::string detections;
  std::string config;
  std::string out = "train";
  std::string variant;
  std::optional<std::uint64_t> seed;
  double iou = 0.5;
  std::string geometry = "mask";
  std::string concept_source = "predicted";
  int trials = 25;
};

struct TrainData {
  HeadConfig config;
  std::vector<TrainRecord> train;
  std::vector<TrainRecord> val;
};

TrainData prepare_training(const TrainArgs& a, Run& run) {
  TrainData d;
  if (!a.config.empty()) {
    run.input(a.config);
    d.config = head_config_from_json(read_json_file(a.config));
  }
  if (!a.variant.empty()) d.config.variant = parse_head_variant(a.variant);
  if (a.seed) d.config.seed = *a.seed;
  const auto in = load_inputs(a.cohort, a.detections, run);
  const auto geometry = parse_geometry(a.geometry);
  if (a.concept_source != "predicted" && a.concept_source != "ground_truth") {
    throw InputError("--concept-source must be 'predicted' or 'ground_truth'");
  }
  const auto source = a.concept_source == "predicted" ? ConceptSource::predicted : ConceptSource::ground_truth;
  const auto train_images = build_image_evals(in.cohort, in.detections, Split::train);
  const auto val_images = build_image_evals(in.cohort, in.detections, Split::val);
  d.train = build_train_records(train_images, a.iou, geometry, source);
  d.val = build_train_records(val_images, a.iou, geometry, source);
  if (d.config.variant == HeadVariant::nonlinear_side && d.config.side_feature_dim == 0) {
    d.config.side_feature_dim = side_dim_of(d.train);
  }
  d.config.validate();
  run.config("matching", Json{{"iou", a.iou}, {"geometry", a.geometry}, {"concept_source", a.concept_source}});
  return d;
}

int cmd_train(const TrainArgs& a, Run& run) {
  run.set_out(a.out);
  const auto d = prepare_training(a, run);
  run.config("head", head_config_to_json(d.config));
  run.seed("seed", d.config.seed);
  const auto result = train(d.config, d.train, d.val);
  const HeadModel model{d.config, result.params};
  const std::string variant(to_string(d.config.variant));
  run.output_json("head_" + variant + ".json", head_to_json(model));

  Json epochs = Json::array();
  std::ostringstream text;
  text << "Training log (" << variant << "; " << d.train.size() << " train, " << d.val.size() << " val records)\n"
       << detail::pad("epoch", 8) << detail::pad("lr", 14) << detail::pad("train loss", 14) << "val AUROC\n";
  for (const auto& e : result.log) {
    epochs.push_back(Json{{"epoch", e.epoch},
                          {"learning_rate", e.learning_rate},
                          {"train_loss", e.train_loss},
                          {"val_auroc", e.val_auroc ? Json(*e.val_auroc) : Json(nullptr)}});
    std::ostringstream lr;
    lr << std::setprecision(6) << e.learning_rate;
    text << detail::pad(std::to_string(e.epoch), 8) << detail::pad(lr.str(), 14)
         << detail::pad(detail::fixed(e.train_loss, 6), 14) << (e.val_auroc ? detail::fixed(*e.val_auroc, 4) : "-")
         << "\n";
  }
  text << "selected epoch " << result.best_epoch << "\n";
  run.report("train_log",
             Json{{"report", "training"},
                  {"variant", variant},
                  {"n_train", d.train.size()},
                  {"n_val", d.val.size()},
                  {"steps", result.steps},
                  {"best_epoch", result.best_epoch},
                  {"best_val_auroc", result.best_val_auroc ? Json(*result.best_val_auroc) : Json(nullptr)},
                  {"epochs", epochs}},
             text.str());
  run.finish();
  std::cout << "trained " << variant << " head: best epoch " << result.best_epoch;
  if (result.best_val_auroc) std::cout << ", val AUROC " << detail::fixed(*result.best_val_auroc, 4);
  std::cout << "\n";
  return 0;
}

int cmd_tune(const TrainArgs& a, Run& run) {
  run.set_out(a.out);
  const auto d = prepare_training(a, run);
  const std::uint64_t seed = a.seed.value_or(kDefaultSeed);
  run.config("base_head", head_config_to_json(d.config));
  run.config("trials", a.trials);
  run.seed("seed", seed);
  const SearchSpace space;
  const auto result = tune(d.config, space, d.train, d.val, a.trials, seed);
  Json trials = Json::array();
  std::ostringstream text;
  text << "Random search (" << a.trials << " trials, seed " << seed << ")\n"
       << detail::pad("trial", 7) << detail::pad("width", 7) << detail::pad("lr", 14) << detail::pad("sigmoid", 9)
       << detail::pad("momentum", 10) << "val AUROC\n";
  for (const auto& t : result.trials) {
    trials.push_back(trial_to_json(t));
    std::ostringstream lr;
    lr << std::setprecision(4) << t.config.base_learning_rate;
    text << detail::pad(std::to_string(t.index), 7) << detail::pad(std::to_string(t.config.hidden_width), 7)
         << detail::pad(lr.str(), 14) << detail::pad(t.config.intermediate_sigmoid ? "true" : "false", 9)
         << detail::pad(detail::fixed(t.config.momentum, 3), 10)
         << (t.val_auroc ? detail::fixed(*t.val_auroc, 4) : "failed: " + t.failure) << "\n";
  }
  text << "best trial " << result.best_trial << "\n";
  run.report("tune", Json{{"report", "tuning"}, {"seed", seed}, {"best_trial", result.best_trial}, {"trials", trials}},
             text.str());
  run.output_json("best_config.json", head_config_to_json(result.best));
  run.finish();
  std::cout << "best trial " << result.best_trial << " val AUROC "
            << detail::fixed(*result.trials[result.best_trial].val_auroc, 4) << "\n";
  return 0;
}

struct EvalArgs {
  std::string cohort;
  std::string detections;
  std::string out = "eval";
  std::string split = "auto";
  std::vector<double> iou{0.5, 0.75};
  std::string geometry = "mask";
  std::vector<std::string> heads;
  std::vector<std::string> strategies{"none", "minimal", "maximal"};
  int max_dets = 10;
  bool unmatched_negative = false;
  bool write_logs = false;
};

std::vector<ImageEval> eval_images(const EvalArgs& a, Run& run) {
  const auto in = load_inputs(a.cohort, a.detections, run);
  const auto split = resolve_split(a.split, in.cohort);
  run.config("split", split_name(split));
  return build_image_evals(in.cohort, in.detections, split);
}

int cmd_eval_detect(const EvalArgs& a, Run& run) {
  run.set_out(a.out);
  run.config("max_dets", a.max_dets);
  const auto images = eval_images(a, run);
  const auto report = average_precision_report(images, a.max_dets);
  run.report("detection", detection_report_json(report), detection_report_text(report));
  run.finish();
  std::cout << detection_report_text(report);
  return 0;
}

UnmatchedPolicy policy_of(const EvalArgs& a) {
  return a.unmatched_negative ? UnmatchedPolicy::label_negative : UnmatchedPolicy::exclude;
}

int cmd_eval_concepts(const EvalArgs& a, Run& run) {
  run.set_out(a.out);
  run.config("iou", a.iou);
  run.config("geometry", a.geometry);
  const auto images = eval_images(a, run);
  const auto geometry = parse_geometry(a.geometry);
  std::vector<ThresholdRow> rows;
  for (std::size_t c = 0; c < kNumConcepts; ++c) {
    ThresholdRow row{std::string(kConceptNames[c]), {}};
    for (double t : a.iou) {
      row.cells.push_back(matched_classification_auroc(
          images, t, ClassificationTarget::concept_target(static_cast<Concept>(c)), geometry, policy_of(a)));
    }
    rows.push_back(std::move(row));
  }
  const auto text = threshold_table_text("Concept classification", a.iou, rows);
  run.report("concepts", threshold_table_json("concepts", a.iou, rows, "concept"), text);
  run.finish();
  std::cout << text;
  return 0;
}

int cmd_eval_cancer(const EvalArgs& a, Run& run) {
  run.set_out(a.out);
  run.config("iou", a.iou);
  run.config("geometry", a.geometry);
  auto images = eval_images(a, run);
  const auto heads = load_heads(a.heads, run);
  const auto geometry = parse_geometry(a.geometry);
  std::vector<ThresholdRow> rows;
  auto add_row = [&](const std::string& name, const std::vector<ImageEval>& scored) {
    ThresholdRow row{name, {}};
    for (double t : a.iou) {
      row.cells.push_back(matched_classification_auroc(scored, t, ClassificationTarget::cancer(), geometry, policy_of(a)));
    }
    rows.push_back(std::move(row));
  };
  if (heads.empty()) {
    for (const auto& im : images) {
      for (const auto& d : im.detections) {
        if (!d.cancer_prob) throw InputError("detections of image " + im.image_id + " lack cancer_prob; pass --head");
      }
    }
    add_row("detections", images);
  }
  for (const auto& h : heads) {
    auto scored = images;
    for (auto& im : scored) score_detections(im.detections, h.model);
    add_row(h.name, scored);
  }
  const auto text = threshold_table_text("Cancer classification", a.iou, rows);
  run.report("cancer", threshold_table_json("cancer", a.iou, rows, "head"), text);
  run.finish();
  std::cout << text;
  return 0;
}

int cmd_intervene_eval(const EvalArgs& a, Run& run) {
  run.set_out(a.out);
  run.config("iou", a.iou);
  run.config("geometry", a.geometry);
  run.config("strategies", a.strategies);
  const auto images = eval_images(a, run);
  const auto heads = load_heads(a.heads, run);
  if (heads.empty()) throw InputError("intervene-eval needs at least one --head");
  const auto geometry = parse_geometry(a.geometry);
  std::vector<CorrectionKind> kinds;
  for (const auto& s : a.strategies) kinds.push_back(parse_correction(s));
  const auto rows = evaluate_with_correction(images, heads, kinds, a.iou, geometry, policy_of(a));
  std::vector<CorrectionShift> shifts;
  for (CorrectionKind k : kinds) shifts.push_back(correction_shift(images, k, geometry));
  const auto text = correction_report_text(rows, a.iou, shifts);
  run.report("intervention", correction_report_json(rows, a.iou, shifts), text);
  if (a.write_logs) {
    std::ostringstream logs;
    for (CorrectionKind k : kinds) {
      for (const auto& im : images) {
        for (const auto& log : intervene_image(im.detections, im.ground_truths, {k}, geometry).logs) {
          logs << intervention_log_to_json(log).dump() << "\n";
        }
      }
    }
    run.output_text("intervention_logs.jsonl", logs.str());
  }
  run.finish();
  std::cout << text;
  return 0;
}

struct KappaArgs {
  std::string reads_a;
  std::string reads_b;
  std::string out = "kappa";
  double iou_min = 0.25;
};

AnnotationSet annotations_of(const Cohort& cohort) {
  AnnotationSet out;
  for (const auto& w : cohort) {
    for (const auto& im : w.images) out[im.image_id] = im.lesions;
  }
  return out;
}

int cmd_kappa(const KappaArgs& a, Run& run) {
  run.set_out(a.out);
  run.config("iou_min", a.iou_min);
  run.input(a.reads_a);
  run.input(a.reads_b);
  const auto tables =
      concurrence_tables(annotations_of(read_cohort_file(a.reads_a)), annotations_of(read_cohort_file(a.reads_b)), a.iou_min);
  const Json j = kappa_report_json(tables, a.iou_min);
  run.report("kappa", j, kappa_report_text(j));
  run.finish();
  std::cout << kappa_report_text(j);
  for (const auto& p : j.at("properties")) {
    if (p.at("kappa").is_null()) {
      throw UndefinedMetricError("kappa undefined for " + p.at("property").get<std::string>() + ": " +
                                 p.at("undefined").get<std::string>());
    }
  }
  return 0;
}

struct ServeArgs {
  std::string cohort;
  std::string detections;
  std::vector<std::string> heads;
  std::string oracle;
  std::string split = "test";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
};

int cmd_serve(const ServeArgs& a) {
  Run run("serve", {});
  const auto in = load_inputs(a.cohort, a.detections, run);
  const auto split = resolve_split(a.split, in.cohort);
  auto heads = load_heads(a.heads, run);
  Json metadata{{"split", split_name(split)}};
  if (!a.oracle.empty()) metadata["oracle"] = read_json_file(a.oracle);
  auto bundle = std::make_shared<const SessionBundle>(
      load_session(in.cohort, in.detections, std::move(heads), split, std::move(metadata)));
  const Service service(bundle);
  httplib::Server server;
  mount_service(server, service, a.cors_origin);
  std::cout << "serving " << bundle->images().size() << " images on http://" << a.host << ":" << a.port << std::endl;
  if (!server.listen(a.host, a.port)) throw InputError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-bottleneck toolkit for BI-RADS mass descriptors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::vector<std::string> args(argv, argv + argc);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic case-control cohort with a known oracle");
  simulate->add_option("--config", sim.config, "Simulation config (JSON); defaults are used when omitted")->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Random seed")->capture_default_str();

  SplitArgs sp;
  auto* split = app.add_subcommand("split", "Apply exclusions and split case-control groups into train/val/test");
  split->add_option("--cohort", sp.cohort, "Cohort file (JSON lines)")->required()->check(CLI::ExistingFile);
  split->add_option("--out", sp.out, "Output directory")->capture_default_str();
  split->add_option("--seed", sp.seed, "Random seed")->capture_default_str();
  split->add_option("--fractions", sp.fractions, "Train, val, test fractions")->expected(3)->capture_default_str();

  TrainArgs tr;
  auto add_train_options = [](CLI::App* cmd, TrainArgs& t) {
    cmd->add_option("--cohort", t.cohort, "Split cohort file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--detections", t.detections, "Detections file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", t.config, "Head config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--out", t.out, "Output directory")->capture_default_str();
    cmd->add_option("--variant", t.variant, "linear | nonlinear | nonlinear_side (overrides the config)");
    cmd->add_option("--seed", t.seed, "Random seed (overrides the config)");
    cmd->add_option("--iou", t.iou, "IoU for matching detections to lesions")->capture_default_str();
    cmd->add_option("--geometry", t.geometry, "box | mask")->capture_default_str();
    cmd->add_option("--concept-source", t.concept_source, "predicted | ground_truth")->capture_default_str();
  };
  auto* train_cmd = app.add_subcommand("train", "Train a cancer head on frozen concept logits");
  add_train_options(train_cmd, tr);
  TrainArgs tu;
  tu.out = "tune";
  auto* tune_cmd = app.add_subcommand("tune", "Seeded random search over head hyperparameters");
  add_train_options(tune_cmd, tu);
  tune_cmd->add_option("--trials", tu.trials, "Number of trials")->capture_default_str();

  auto add_eval_options = [](CLI::App* cmd, EvalArgs& e, bool with_iou) {
    cmd->add_option("--cohort", e.cohort, "Cohort file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--detections", e.detections, "Detections file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", e.out, "Output directory")->capture_default_str();
    cmd->add_option("--split", e.split, "auto | train | val | test | all")->capture_default_str();
    if (with_iou) {
      cmd->add_option("--iou", e.iou, "IoU thresholds for matching")->capture_default_str();
      cmd->add_option("--geometry", e.geometry, "box | mask")->capture_default_str();
      cmd->add_flag("--unmatched-negative", e.unmatched_negative,
                    "Score unmatched detections as negatives instead of dropping them");
    }
  };
  EvalArgs det;
  auto* eval_detect = app.add_subcommand("eval-detect", "Average precision for box and mask detections");
  add_eval_options(eval_detect, det, false);
  eval_detect->add_option("--max-dets", det.max_dets, "Detections kept per image")->capture_default_str();
  EvalArgs con;
  auto* eval_concepts = app.add_subcommand("eval-concepts", "Per-concept AUROC on matched detections");
  add_eval_options(eval_concepts, con, true);
  EvalArgs can;
  auto* eval_cancer = app.add_subcommand("eval-cancer", "Cancer AUROC on matched detections");
  add_eval_options(eval_cancer, can, true);
  eval_cancer->add_option("--head", can.heads, "Trained head file(s)")->check(CLI::ExistingFile);
  EvalArgs iv;
  auto* intervene_eval = app.add_subcommand("intervene-eval", "Cancer AUROC with and without concept correction");
  add_eval_options(intervene_eval, iv, true);
  intervene_eval->add_option("--head", iv.heads, "Trained head file(s)")->required()->check(CLI::ExistingFile);
  intervene_eval->add_option("--strategy", iv.strategies, "none | minimal | maximal")->capture_default_str();
  intervene_eval->add_flag("--write-logs", iv.write_logs, "Also write per-detection intervention logs");

  KappaArgs ka;
  auto* kappa = app.add_subcommand("kappa", "Inter-rater agreement on binarized descriptors");
  kappa->add_option("--reads-a", ka.reads_a, "Cohort file annotated by rater A")->required()->check(CLI::ExistingFile);
  kappa->add_option("--reads-b", ka.reads_b, "Cohort file annotated by rater B")->required()->check(CLI::ExistingFile);
  kappa->add_option("--iou-min", ka.iou_min, "Minimum IoU for a lesion pair")->capture_default_str();
  kappa->add_option("--out", ka.out, "Output directory")->capture_default_str();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve cases, predictions and interventions over HTTP");
  serve->add_option("--cohort", sv.cohort, "Split cohort file")->required()->check(CLI::ExistingFile);
  serve->add_option("--detections", sv.detections, "Detections file")->required()->check(CLI::ExistingFile);
  serve->add_option("--head", sv.heads, "Trained head file(s)")->check(CLI::ExistingFile);
  serve->add_option("--oracle", sv.oracle, "Oracle description to expose as metadata")->check(CLI::ExistingFile);
  serve->add_option("--split", sv.split, "auto | train | val | test | all")->capture_default_str();
  serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  serve->add_option("--port", sv.port, "Port")->capture_default_str();
  serve->add_option("--cors-origin", sv.cors_origin, "Allowed CORS origin")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    Run run(name, args);
    if (*simulate) return cmd_simulate(sim, run);
    if (*split) return cmd_split(sp, run);
    if (*train_cmd) return cmd_train(tr, run);
    if (*tune_cmd) return cmd_tune(tu, run);
    if (*eval_detect) return cmd_eval_detect(det, run);
    if (*eval_concepts) return cmd_eval_concepts(con, run);
    if (*eval_cancer) return cmd_eval_cancer(can, run);
    if (*intervene_eval) return cmd_intervene_eval(iv, run);
    if (*kappa) return cmd_kappa(ka, run);
    if (*serve) return cmd_serve(sv);
  } catch (const UndefinedMetricError& e) {
    std::cerr << "error: undefined metric: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
