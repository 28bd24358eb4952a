// psyloc command-line front end.

#include <csignal>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "psyloc/analytics.hpp"
#include "psyloc/annotation.hpp"
#include "psyloc/behavior.hpp"
#include "psyloc/evaluate.hpp"
#include "psyloc/loss.hpp"
#include "psyloc/server.hpp"
#include "psyloc/store.hpp"
#include "psyloc/survey.hpp"
#include "psyloc/toy.hpp"

namespace fs = std::filesystem;
using namespace psyloc;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  auto out = open_out(path);
  fn(out);
  if (!out.flush()) throw Error("cannot write " + path.string());
}

PsychLossParams toy_params(const std::string& params_path) {
  if (!params_path.empty()) return load_params(params_path);
  PsychLossParams p;
  p.sigma_table = default_toy_sigma_table();
  return p;
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
  std::string behavior, annotations, out, summary;
};

int run_ingest(const IngestArgs& a) {
  const IngestResult r = ingest(fs::path(a.behavior), fs::path(a.annotations));
  write_file(a.out, [&](std::ostream& o) { write_records(o, r.records, RecordFormat::enriched); });
  nlohmann::json summary = summary_to_json(r.summary);
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& i : r.issues) {
    issues.push_back({{"kind", to_string(i.kind)},
                      {"line", i.line_no},
                      {"session_id", i.session_id},
                      {"image_id", i.image_id},
                      {"message", i.message}});
  }
  summary["issues"] = issues;
  summary["warnings"] = r.warnings;
  if (a.summary.empty()) {
    std::cout << summary.dump(2) << '\n';
  } else {
    write_file(a.summary, [&](std::ostream& o) { o << summary.dump(2) << '\n'; });
  }
  std::cerr << "ingest: " << r.records.size() << " records, " << r.issues.size() << " issues\n";
  return 0;
}

// --- analyze --------------------------------------------------------------

struct AnalyzeArgs {
  std::string records, out_dir;
  bool include_controls = false;
  double sigma_min = kDefaultSigmaMin;
};

int run_analyze(const AnalyzeArgs& a) {
  auto records = read_enriched_records(fs::path(a.records));
  if (!a.include_controls) {
    std::erase_if(records, [](const BehavioralRecord& r) { return r.is_control; });
  }
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_file(dir / "histograms.csv", [&](std::ostream& o) { write_histograms_csv(o, iou_histograms(records)); });
  const auto acc0 = accuracy_table(records, 0.0);
  write_file(dir / "accuracy_t0.csv", [&](std::ostream& o) { write_accuracy_csv(o, acc0); });
  write_file(dir / "accuracy_t50.csv", [&](std::ostream& o) { write_accuracy_csv(o, accuracy_table(records, 0.5)); });
  write_file(dir / "sigma.csv", [&](std::ostream& o) { write_sigma_csv(o, sigma_table(acc0, a.sigma_min)); });
  write_file(dir / "rt.csv", [&](std::ostream& o) { write_rt_csv(o, response_time_stats(records)); });
  std::cerr << "analyze: " << records.size() << " records -> " << dir.string() << '\n';
  return 0;
}

// --- heatmap --------------------------------------------------------------

struct HeatmapArgs {
  std::string records, annotations, session, image, out;
  double cell = 4.0;
};

int run_heatmap(const HeatmapArgs& a) {
  const auto records = read_enriched_records(fs::path(a.records));
  const auto index = index_annotations(read_annotations(fs::path(a.annotations)));
  const auto ann = index.find(a.image);
  if (ann == index.end()) throw InvalidArgument("image '" + a.image + "' is not in the annotations");
  for (const auto& r : records) {
    if (r.session_id != a.session || r.image_id != a.image) continue;
    const Heatmap h = search_heatmap(r, ann->second.image_width_px, ann->second.image_height_px, a.cell);
    write_file(a.out, [&](std::ostream& o) { write_pgm(o, h); });
    std::cerr << "heatmap: " << h.cols << "x" << h.rows << " cells, " << h.total() << " ms\n";
    return 0;
  }
  throw InvalidArgument("no record for session '" + a.session + "' and image '" + a.image + "'");
}

// --- gradcheck ------------------------------------------------------------

struct GradcheckArgs {
  std::string params;
  std::size_t n = 1000;
  std::uint64_t seed = 7;
  double tol = 1e-6;
};

int run_gradcheck(const GradcheckArgs& a) {
  const PsychLossParams base = a.params.empty() ? PsychLossParams{} : load_params(a.params);
  const GradcheckReport r = gradcheck(a.n, a.seed, base, a.tol);
  std::cout << gradcheck_to_json(r).dump(2) << '\n';
  return r.passed() ? 0 : 1;
}

// --- train-toy / eval / compare --------------------------------------------

struct TrainArgs {
  std::string mode = "psych";
  std::string params, config, out;
  std::size_t seeds = 5;
  std::optional<std::size_t> epochs;
};

void merge_report(const fs::path& path, const std::string& mode, const std::vector<ToyRun>& runs) {
  ReportSet set;
  if (fs::exists(path)) {
    std::ifstream in(path);
    set = read_report_csv(in);
    std::erase_if(set, [&](const auto& kv) { return kv.first.first == mode; });
  }
  for (const auto& r : runs) set[{mode, r.seed}] = r.report;
  write_file(path, [&](std::ostream& o) {
    write_report_csv_header(o);
    for (const auto& [key, report] : set) write_report_csv_rows(o, report, key.second, key.first);
  });
}

int run_train(const TrainArgs& a) {
  const LossMode mode = loss_mode_from_string(a.mode);
  ToyConfig config;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error("cannot read " + a.config);
    config = toy_config_from_json(nlohmann::json::parse(in));
  }
  if (a.epochs) config.epochs = *a.epochs;
  const PsychLossParams params = toy_params(a.params);
  const fs::path dir = a.out;
  fs::create_directories(dir);

  std::vector<ToyRun> runs;
  for (std::uint64_t seed = 1; seed <= a.seeds; ++seed) {
    const auto data = generate_dataset(config, config.n_per_stratum, seed);
    ToyRun run;
    run.seed = seed;
    run.mode = mode;
    run.training = train(data.train, mode, params, config, seed);
    run.report = evaluate(run.training.model, data.test);
    const std::string tag = a.mode + "_seed" + std::to_string(seed);
    write_file(dir / ("model_" + tag + ".json"), [&](std::ostream& o) { o << run.training.model.to_json().dump() << '\n'; });
    write_file(dir / ("test_seed" + std::to_string(seed) + ".jsonl"), [&](std::ostream& o) { write_scenes(o, data.test); });
    write_file(dir / ("loss_" + tag + ".csv"), [&](std::ostream& o) {
      o << "epoch,mean_loss\n";
      o.precision(17);
      for (std::size_t e = 0; e < run.training.loss_curve.size(); ++e) o << e << ',' << run.training.loss_curve[e] << '\n';
    });
    std::cerr << "train-toy: " << a.mode << " seed " << seed << " loss " << run.training.loss_curve.front() << " -> "
              << run.training.loss_curve.back() << ", pooled mAP@0.50 " << run.report.pooled.map50 << '\n';
    runs.push_back(std::move(run));
  }
  write_file(dir / "config.json", [&](std::ostream& o) { o << toy_config_to_json(config).dump(2) << '\n'; });
  merge_report(dir / "report.csv", a.mode, runs);
  return 0;
}

struct EvalArgs {
  std::string model, test, out, mode = "eval";
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  std::ifstream in(a.model);
  if (!in) throw Error("cannot read " + a.model);
  const Regressor model = Regressor::from_json(nlohmann::json::parse(in));
  const auto scenes = read_scenes(fs::path(a.test));
  const StratifiedReport report = evaluate(model, scenes);
  write_file(a.out, [&](std::ostream& o) {
    write_report_csv_header(o);
    write_report_csv_rows(o, report, a.seed, a.mode);
  });
  std::cerr << "eval: " << scenes.size() << " scenes, pooled mAP@0.50 " << report.pooled.map50 << '\n';
  return 0;
}

struct CompareArgs {
  std::string report, out;
};

int run_compare(const CompareArgs& a) {
  std::ifstream in(a.report);
  if (!in) throw Error("cannot read " + a.report);
  const ReportSet set = read_report_csv(in);
  std::vector<StratifiedReport> base, psych;
  for (const auto& [key, report] : set) {
    if (key.first != "baseline") continue;
    const auto p = set.find({"psych", key.second});
    if (p == set.end()) throw MismatchedStrata("seed " + std::to_string(key.second) + " has no psych run");
    base.push_back(report);
    psych.push_back(p->second);
  }
  const RunComparison cmp = compare_runs(base, psych);
  write_file(a.out, [&](std::ostream& o) { write_comparison_csv(o, cmp); });
  // Per-distance means of the per-stratum mean deltas.
  std::cout << "distance_m,map50_delta,map5095_delta,center_err_delta_px\n";
  for (std::size_t d = 0; d < kDistancesM.size(); ++d) {
    double m50 = 0, m5095 = 0, err = 0;
    int n = 0;
    for (const auto& key : all_strata()) {
      const auto& s = cmp.strata[key];
      if (key.distance_index() != d || !s) continue;
      m50 += s->map50.mean;
      m5095 += s->map5095.mean;
      err += s->center_err_px.mean;
      ++n;
    }
    if (n > 0) std::cout << kDistancesM[d] << ',' << m50 / n << ',' << m5095 / n << ',' << err / n << '\n';
  }
  return 0;
}

// --- scan -----------------------------------------------------------------

struct ScanArgs {
  double gsd = 12.729, width = 3840, height = 2160, rt = 9.0;
  std::optional<double> area;
};

int run_scan(const ScanArgs& a) {
  const double footprint = image_footprint_m2(a.gsd, a.width, a.height);
  const double area = a.area.value_or(2.0 * footprint);
  std::cout << nlohmann::json{{"footprint_m2", footprint},
                              {"area_m2", area},
                              {"scan_time_s", scan_time_projection(a.gsd, a.width, a.height, a.rt, area)}}
                   .dump(2)
            << '\n';
  return 0;
}

// --- serve / review -------------------------------------------------------

struct ServiceArgs {
  std::string pool, controls, practice, data = "data", images, thresholds;
  std::size_t surveys = 500;
  std::uint64_t seed = 7;
  int port = 8080;
  std::string host = "127.0.0.1";
  bool allow_multiple = false;
};

// Without an explicit practice file: one easy control plus the positives
// nearest to (50 m, 50%) and (90 m, 10%), taken out of the pool.
std::vector<Annotation> default_practice(ImagePool& pool) {
  if (pool.controls.empty() || pool.positives.size() < 2) throw InvalidArgument("pool too small to pick practice images");
  std::vector<Annotation> out{pool.controls.front()};
  pool.controls.erase(pool.controls.begin());
  for (const auto [d, v] : {std::pair{50, 50}, std::pair{90, 10}}) {
    const auto it = std::min_element(pool.positives.begin(), pool.positives.end(), [&](const auto& x, const auto& y) {
      return std::abs(x.distance_m - d) + std::abs(x.visibility_pct - v) <
             std::abs(y.distance_m - d) + std::abs(y.visibility_pct - v);
    });
    out.push_back(*it);
    pool.positives.erase(it);
  }
  return out;
}

std::unique_ptr<ExperimentStore> open_store(const ServiceArgs& a) {
  ImagePool pool;
  const auto annotations = read_annotations(fs::path(a.pool));
  if (a.controls.empty()) {
    pool = split_pool(annotations);
  } else {
    pool.positives = annotations;
    pool.controls = read_annotations(fs::path(a.controls));
  }
  StoreConfig config;
  config.data_dir = a.data;
  config.allow_multiple_surveys = a.allow_multiple;
  if (!a.thresholds.empty()) {
    std::ifstream in(a.thresholds);
    if (!in) throw Error("cannot read " + a.thresholds);
    config.thresholds = review_thresholds_from_json(nlohmann::json::parse(in));
  }

  std::vector<Annotation> practice;
  std::vector<Survey> surveys;
  const fs::path table = fs::path(a.data) / "surveys.json";
  if (fs::exists(table)) {
    // Restart: the stored surveys and practice set win; keep practice out of the pool.
    std::ifstream in(table);
    practice = nlohmann::json::parse(in).at("practice").get<std::vector<Annotation>>();
    for (const auto& p : practice) {
      for (auto* list : {&pool.positives, &pool.controls}) {
        std::erase_if(*list, [&](const Annotation& x) { return x.image_id == p.image_id; });
      }
    }
  } else {
    if (!a.practice.empty()) {
      practice = read_annotations(fs::path(a.practice));
      for (const auto& p : practice) {
        for (auto* list : {&pool.positives, &pool.controls}) {
          std::erase_if(*list, [&](const Annotation& x) { return x.image_id == p.image_id; });
        }
      }
    } else {
      practice = default_practice(pool);
    }
    surveys = assemble_surveys(pool, a.surveys, a.seed);
  }
  return std::make_unique<ExperimentStore>(config, std::move(pool), std::move(practice), std::move(surveys));
}

ExperimentServer* g_server = nullptr;

int run_serve(const ServiceArgs& a) {
  auto store = open_store(a);
  ServerOptions options;
  options.host = a.host;
  options.port = a.port;
  options.images_dir = a.images;
  ExperimentServer server(*store, options);
  const int port = server.bind();
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server != nullptr) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server != nullptr) g_server->stop();
  });
  std::cerr << "serve: " << store->surveys().size() << " surveys, listening on " << a.host << ':' << port << '\n';
  server.run();
  g_server = nullptr;
  return 0;
}

int run_review(const ServiceArgs& a, const std::string& session, bool apply) {
  auto store = open_store(a);
  const ReviewResult r = apply ? store->review(session) : store->preview_review(session);
  nlohmann::json j = review_to_json(r);
  j["applied"] = apply;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"psyloc: behavioral localization data, human-guided loss and survey service"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "validate behavioral records against annotations");
  ingest_cmd->add_option("--behavior", ingest_args.behavior, "behavioral JSON-lines file")->required();
  ingest_cmd->add_option("--annotations", ingest_args.annotations, "annotation JSON-lines file")->required();
  ingest_cmd->add_option("--out", ingest_args.out, "validated records (with iou)")->required();
  ingest_cmd->add_option("--summary", ingest_args.summary, "summary JSON (default: stdout)");

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "histograms, accuracy, sigma and response-time tables");
  analyze_cmd->add_option("--records", analyze_args.records, "records written by ingest")->required();
  analyze_cmd->add_option("--out-dir", analyze_args.out_dir, "output directory")->required();
  analyze_cmd->add_flag("--include-controls", analyze_args.include_controls, "keep control questions");
  analyze_cmd->add_option("--sigma-min", analyze_args.sigma_min, "lower clamp for sigma");

  HeatmapArgs heatmap_args;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "dwell heatmap of one trail as PGM");
  heatmap_cmd->add_option("--records", heatmap_args.records, "records written by ingest")->required();
  heatmap_cmd->add_option("--annotations", heatmap_args.annotations, "annotation file (image size)")->required();
  heatmap_cmd->add_option("--session", heatmap_args.session)->required();
  heatmap_cmd->add_option("--image", heatmap_args.image)->required();
  heatmap_cmd->add_option("--cell", heatmap_args.cell, "cell size in px");
  heatmap_cmd->add_option("--out", heatmap_args.out)->required();

  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic and numeric loss gradients");
  grad_cmd->add_option("--params", grad_args.params, "loss params JSON");
  grad_cmd->add_option("--n", grad_args.n, "number of random cases");
  grad_cmd->add_option("--seed", grad_args.seed);
  grad_cmd->add_option("--tol", grad_args.tol, "max relative error");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train-toy", "train the synthetic regressor over several seeds");
  train_cmd->add_option("--mode", train_args.mode)->check(CLI::IsMember({"baseline", "psych"}));
  train_cmd->add_option("--params", train_args.params, "loss params JSON (default: built-in toy sigma table)");
  train_cmd->add_option("--config", train_args.config, "toy config JSON overrides");
  train_cmd->add_option("--seeds", train_args.seeds, "seeds 1..N");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--out", train_args.out)->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "stratified mAP of a saved model");
  eval_cmd->add_option("--model", eval_args.model)->required();
  eval_cmd->add_option("--test", eval_args.test)->required();
  eval_cmd->add_option("--out", eval_args.out)->required();
  eval_cmd->add_option("--seed", eval_args.seed, "seed column value");
  eval_cmd->add_option("--mode", eval_args.mode, "mode column value");

  CompareArgs compare_args;
  auto* compare_cmd = app.add_subcommand("compare", "paired psych - baseline deltas from report.csv");
  compare_cmd->add_option("--report", compare_args.report)->required();
  compare_cmd->add_option("--out", compare_args.out)->required();

  ScanArgs scan_args;
  auto* scan_cmd = app.add_subcommand("scan", "project search time over an area");
  scan_cmd->add_option("--gsd", scan_args.gsd, "mm per pixel");
  scan_cmd->add_option("--width", scan_args.width);
  scan_cmd->add_option("--height", scan_args.height);
  scan_cmd->add_option("--rt", scan_args.rt, "seconds per image");
  scan_cmd->add_option("--area", scan_args.area, "m^2 (default: two image footprints)");

  ServiceArgs service_args;
  const auto add_service_options = [&](CLI::App* cmd) {
    cmd->add_option("--pool", service_args.pool, "annotation file of survey images")->required();
    cmd->add_option("--controls", service_args.controls, "control annotations (default: split from --pool)");
    cmd->add_option("--practice", service_args.practice, "three practice annotations");
    cmd->add_option("--data", service_args.data, "state directory");
    cmd->add_option("--surveys", service_args.surveys);
    cmd->add_option("--seed", service_args.seed);
    cmd->add_option("--thresholds", service_args.thresholds, "review thresholds JSON");
  };
  auto* serve_cmd = app.add_subcommand("serve", "run the survey service");
  add_service_options(serve_cmd);
  serve_cmd->add_option("--port", service_args.port);
  serve_cmd->add_option("--host", service_args.host);
  serve_cmd->add_option("--images", service_args.images, "directory of image files");
  serve_cmd->add_flag("--allow-multiple-surveys", service_args.allow_multiple);

  std::string review_session;
  bool review_apply = false;
  auto* review_cmd = app.add_subcommand("review", "review a finished session");
  add_service_options(review_cmd);
  review_cmd->add_option("--session", review_session)->required();
  review_cmd->add_flag("--apply", review_apply, "record the verdict (default: dry run)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return run_ingest(ingest_args);
    if (*analyze_cmd) return run_analyze(analyze_args);
    if (*heatmap_cmd) return run_heatmap(heatmap_args);
    if (*grad_cmd) return run_gradcheck(grad_args);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*compare_cmd) return run_compare(compare_args);
    if (*scan_cmd) return run_scan(scan_args);
    if (*serve_cmd) return run_serve(service_args);
    if (*review_cmd) return run_review(service_args, review_session, review_apply);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
