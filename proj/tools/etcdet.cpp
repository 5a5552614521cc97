// etcdet: command-line front end for the cyclone detection pipeline.

#include "etcdet/catalog.hpp"
#include "etcdet/config.hpp"
#include "etcdet/cyclone_track.hpp"
#include "etcdet/detector/train.hpp"
#include "etcdet/eval.hpp"
#include "etcdet/io.hpp"
#include "etcdet/labelstore.hpp"
#include "etcdet/service.hpp"
#include "etcdet/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using nlohmann::json;
using namespace etc;
namespace det = etc::detector;
namespace fs = std::filesystem;

/// Bad flag combinations found after parsing; exits 1 like a parse error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::string data;
  std::optional<std::uint64_t> seed;
  bool json = false;
};

ProjectConfig project(const Globals& g) {
  ProjectConfig cfg = g.config.empty() ? ProjectConfig{} : load_config(g.config);
  if (!g.data.empty()) cfg.data_dir = g.data;
  if (g.seed) cfg.apply_seed(*g.seed);
  return cfg;
}

/// Human text, or the JSON object when --json is set.
void report(const Globals& g, const json& j, const std::string& human) {
  if (g.json) {
    std::cout << j.dump() << '\n';
  } else {
    std::cout << human << '\n';
  }
}

void write_text(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

json center_json(const CycloneCenter& c) {
  return {{"frame", c.frame_index}, {"lat", c.position.lat}, {"lon", c.position.lon},
          {"i_lat", c.cell.i_lat},  {"i_lon", c.cell.i_lon}, {"mslp", c.mslp},
          {"possibly_tropical", c.possibly_tropical}};
}

std::vector<int> frame_selection(const FrameCatalog& cat, const std::optional<int>& frame) {
  if (frame) {
    cat.frame(*frame);
    return {*frame};
  }
  std::vector<int> all;
  for (const auto& f : cat.frames()) all.push_back(f.index);
  return all;
}

std::vector<det::TrainSample> load_samples(const fs::path& dir, const DatasetManifest& m,
                                           std::optional<Split> split) {
  std::vector<det::TrainSample> out;
  for (const auto& e : m.entries) {
    if (split && e.split != *split) continue;
    out.push_back({read_png(dir / e.image), e.boxes});
  }
  return out;
}

std::optional<Split> split_option(const std::string& s) {
  if (s == "all") return std::nullopt;
  const auto v = parse_split(s);
  if (!v) throw UsageError("--split must be train, test or all");
  return v;
}

std::string results_text(const std::vector<APResult>& results) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  for (const auto& r : results) {
    out << r.label << ": ap " << r.ap << " (" << r.tally.num_gt << " gt, " << r.tally.num_det << " detections)\n";
  }
  out << "mAP " << (results.empty() ? 0.0 : mean_ap(results));
  return out.str();
}

json results_json(const std::vector<APResult>& results) {
  json classes = json::array();
  for (const auto& r : results) {
    classes.push_back({{"class", r.label}, {"ap", r.ap}, {"num_gt", r.tally.num_gt}, {"num_det", r.tally.num_det}});
  }
  return {{"classes", classes}, {"map", results.empty() ? 0.0 : mean_ap(results)}};
}

std::string csv_of(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream out;
  out.precision(10);
  fn(out);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extratropical cyclone detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Project TOML file")->check(CLI::ExistingFile);
  app.add_option("--data", g.data, "Data directory (overrides [data].dir)");
  app.add_option("--seed", g.seed, "Seed for every random stage (overrides [data].seed)");
  app.add_flag("--json", g.json, "Structured output instead of human summaries");

  std::function<void()> run;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Add ETCG grid files to the data directory");
  std::vector<std::string> ingest_files;
  ingest->add_option("files", ingest_files, "ETCG files")->required()->check(CLI::ExistingFile);
  ingest->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      std::vector<GeoGrid> grids;
      for (const auto& f : ingest_files) grids.push_back(load_grid(f, std::nullopt));
      std::stable_sort(grids.begin(), grids.end(), [](const GeoGrid& a, const GeoGrid& b) {
        return a.timestamp() != b.timestamp() ? a.timestamp() < b.timestamp() : a.kind() < b.kind();
      });
      auto cat = FrameCatalog::load(cfg.data_dir);
      for (const auto& grid : grids) cat.add(grid);
      cat.save();
      report(g, {{"ingested", grids.size()}, {"frames", cat.frames().size()}},
             "ingested " + std::to_string(grids.size()) + " grids; catalog holds " +
                 std::to_string(cat.frames().size()) + " frames");
    };
  });

  // render
  auto* render = app.add_subcommand("render", "Render TTR frames to 8-bit PNG");
  std::optional<int> render_frame;
  std::string render_out;
  render->add_option("--frame", render_frame, "Single frame index (default: all)");
  render->add_option("--out", render_out, "Output directory (default: <data>/images)");
  render->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const auto cat = FrameCatalog::load(cfg.data_dir);
      const fs::path out = render_out.empty() ? cfg.data_dir / "images" : fs::path(render_out);
      const auto frames = frame_selection(cat, render_frame);
      for (int i : frames) write_png(out / frame_image_path(i), render_image(cat.load_field(i, FieldKind::TTR)));
      report(g, {{"rendered", frames.size()}, {"out", out.string()}},
             "rendered " + std::to_string(frames.size()) + " frames into " + out.string());
    };
  });

  // centers
  auto* centers = app.add_subcommand("centers", "Detect MSLP local-minimum centers (JSON Lines)");
  std::optional<int> centers_frame;
  std::string centers_out;
  centers->add_option("--frame", centers_frame, "Single frame index (default: all)");
  centers->add_option("--out", centers_out, "Output file (default: stdout)");
  centers->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const auto cat = FrameCatalog::load(cfg.data_dir);
      std::string text;
      for (int i : frame_selection(cat, centers_frame)) {
        for (const auto& c : find_local_minima(cat.load_field(i, FieldKind::MSLP), cfg.tracker, i)) {
          text += center_json(c).dump() + "\n";
        }
      }
      write_text(centers_out, text);
    };
  });

  // track
  auto* track = app.add_subcommand("track", "Link centers into tracks (JSON Lines)");
  std::string track_out;
  track->add_option("--out", track_out, "Output file (default: <data>/tracks.jsonl; - for stdout)");
  track->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const auto series = FrameCatalog::load(cfg.data_dir).mslp_series();
      if (series.frames.empty()) throw IoError("no MSLP frames in " + cfg.data_dir.string());
      std::vector<std::vector<CycloneCenter>> per_frame;
      for (std::size_t f = 0; f < series.frames.size(); ++f) {
        per_frame.push_back(find_local_minima(series.frames[f], cfg.tracker, static_cast<int>(f)));
      }
      const auto tracks = link_tracks(per_frame, cfg.tracker);
      const std::string out = track_out.empty() ? (cfg.data_dir / "tracks.jsonl").string() : track_out;
      write_text(out, tracks_to_jsonl(tracks));
      if (out == "-") return;
      const auto stats = track_report(tracks);
      std::ostringstream human;
      human << stats.count << " tracks from " << series.frames.size() << " frames";
      if (stats.count) human << "; duration " << stats.min_hours << "-" << stats.max_hours << " h";
      report(g, {{"tracks", stats.count}, {"frames", series.frames.size()}, {"min_hours", stats.min_hours},
                 {"max_hours", stats.max_hours}, {"mean_hours", stats.mean_hours}, {"out", out}},
             human.str());
    };
  });

  // suggest
  auto* suggest = app.add_subcommand("suggest", "Suggested boxes around detected centers (JSON Lines)");
  int suggest_frame = 0;
  double suggest_half = 15.0;
  std::string suggest_out;
  suggest->add_option("--frame", suggest_frame, "Frame index")->required();
  suggest->add_option("--half-extent", suggest_half, "Half box size in degrees")->check(CLI::PositiveNumber);
  suggest->add_option("--out", suggest_out, "Output file (default: stdout)");
  suggest->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const auto grid = FrameCatalog::load(cfg.data_dir).load_field(suggest_frame, FieldKind::MSLP);
      std::string text;
      for (const auto& c : find_local_minima(grid, cfg.tracker, suggest_frame)) {
        const auto b = suggest_box(c, grid.geometry(), suggest_half);
        auto j = center_json(c);
        j["box"] = {{"xmin", b.xmin}, {"ymin", b.ymin}, {"xmax", b.xmax}, {"ymax", b.ymax}};
        text += j.dump() + "\n";
      }
      write_text(suggest_out, text);
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic data");
  synth->require_subcommand(1);
  auto* synth_series = synth->add_subcommand("series", "Planted-low MSLP/TTR series into the data directory");
  int series_frames = 10;
  double series_step = 1.0;
  synth_series->add_option("--frames", series_frames, "Number of six-hourly frames")->check(CLI::Range(2, 10000));
  synth_series->add_option("--grid-step", series_step, "Grid spacing in degrees (divides 180)")->check(CLI::PositiveNumber);
  synth_series->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const int n_lon = static_cast<int>(std::lround(360.0 / series_step));
      const int n_lat = static_cast<int>(std::lround(180.0 / series_step)) + 1;
      const auto sc = gen_track_scenario(cfg.seed, cfg.tracker, series_frames, GridGeometry::global(n_lon, n_lat));
      const auto series = gen_mslp_series(sc.spec);
      FrameCatalog cat(cfg.data_dir);
      for (const auto& frame : series.frames) {
        cat.add(frame);
        cat.add(ttr_from_mslp(frame, sc.spec.ambient));
      }
      cat.save();
      std::string planted;
      for (const auto& l : sc.lows) {
        json cells = json::array();
        for (std::size_t f = 0; f < l.cells.size(); ++f) {
          if (l.cells[f]) cells.push_back({f, l.cells[f]->i_lat, l.cells[f]->i_lon});
        }
        planted += json{{"kind", to_string(l.kind)}, {"depth", l.low.depth}, {"radius_deg", l.low.radius_deg},
                        {"cells", cells}}.dump() + "\n";
      }
      write_file_atomic(cfg.data_dir / "planted.jsonl", planted);
      report(g, {{"frames", series.frames.size()}, {"lows", sc.lows.size()}, {"out", cfg.data_dir.string()}},
             "wrote " + std::to_string(series.frames.size()) + " frames with " + std::to_string(sc.lows.size()) +
                 " planted lows to " + cfg.data_dir.string());
    };
  });
  auto* synth_dataset = synth->add_subcommand("dataset", "Stage-styled cyclone images in export format");
  std::vector<std::size_t> dataset_counts{554, 650, 303};
  std::string dataset_out, dataset_split = "train";
  synth_dataset->add_option("--counts", dataset_counts, "Boxes per stage: developing mature declining")
      ->expected(3)
      ->delimiter(',');
  synth_dataset->add_option("--out", dataset_out, "Output directory")->required();
  synth_dataset->add_option("--split", dataset_split, "Split label for every frame (train or test)");
  synth_dataset->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      SynthDatasetOptions opt;
      const auto split = split_option(dataset_split);
      if (!split) throw UsageError("--split must be train or test");
      opt.split = *split;
      const auto ds = gen_dataset({dataset_counts[0], dataset_counts[1], dataset_counts[2]}, cfg.seed, opt);
      export_dataset(ds.manifest,
                     [&](int frame) -> std::optional<Gray8> {
                       if (frame < 0 || static_cast<std::size_t>(frame) >= ds.images.size()) return std::nullopt;
                       return ds.images[static_cast<std::size_t>(frame)];
                     },
                     dataset_out);
      const auto counts = category_counts(ds.manifest);
      report(g, {{"frames", ds.images.size()}, {"counts", to_json(counts)}, {"out", dataset_out}},
             "wrote " + std::to_string(ds.images.size()) + " frames to " + dataset_out);
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Seeded train/test split of an exported dataset");
  std::string split_in, split_out;
  std::optional<double> split_ratio;
  split->add_option("--in", split_in, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  split->add_option("--ratio", split_ratio, "Test fraction in (0, 1)");
  split->add_option("--out", split_out, "Output annotations file (default: rewrite the dataset in place)");
  split->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const double ratio = split_ratio.value_or(cfg.split_ratio);
      if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("--ratio must be in (0, 1)");
      auto m = import_dataset(split_in);
      m = split_train_test(std::move(m.entries), ratio, cfg.seed);
      const auto counts = category_counts(m);
      std::size_t n_test = 0;
      for (const auto& e : m.entries) n_test += e.split == Split::Test;
      if (split_out.empty()) {
        write_file_atomic(fs::path(split_in) / "annotations.jsonl", manifest_to_jsonl(m));
        write_file_atomic(fs::path(split_in) / "dataset.json",
                          json{{"seed", m.seed}, {"frames", m.entries.size()}}.dump(2) + "\n");
      } else {
        write_file_atomic(split_out, manifest_to_jsonl(m));
      }
      report(g, {{"frames", m.entries.size()}, {"test", n_test}, {"seed", m.seed}, {"counts", to_json(counts)}},
             std::to_string(m.entries.size() - n_test) + " train / " + std::to_string(n_test) + " test frames");
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train the detector on an exported dataset");
  std::string train_data, train_out, train_resume, train_loss_csv, train_split = "train";
  std::optional<int> train_iterations;
  int checkpoint_every = 0;
  train->add_option("--dataset", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", train_out, "Checkpoint to write")->required();
  train->add_option("--iterations", train_iterations, "Total iterations (overrides [train].iterations)");
  train->add_option("--resume", train_resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--loss-csv", train_loss_csv, "Write the per-iteration loss trace");
  train->add_option("--split", train_split, "Entries to train on: train, test or all");
  train->add_option("--checkpoint-every", checkpoint_every, "Also checkpoint every N iterations");
  train->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const auto m = import_dataset(train_data);
      const auto samples = load_samples(train_data, m, split_option(train_split));
      if (samples.empty()) throw det::TrainingError("no training entries in " + train_data);
      auto tcfg = cfg.train;
      if (train_iterations) tcfg.iterations = *train_iterations;
      auto trainer = train_resume.empty() ? det::Trainer<det::Real>(cfg.model(), tcfg, cfg.augment, samples)
                                          : det::Trainer<det::Real>::load_checkpoint(train_resume, samples);
      const int target = train_resume.empty() ? tcfg.iterations : train_iterations.value_or(trainer.config().iterations);
      std::vector<det::LossRecord> trace;
      while (trainer.iteration() < target) {
        trace.push_back(trainer.step());
        const auto& r = trace.back();
        if (tcfg.log_every > 0 && r.iteration % tcfg.log_every == 0) {
          std::fprintf(stderr, "iter %d  loss %.5f  (conf %.4f, loc %.4f)\n", r.iteration, r.total, r.conf, r.loc);
        }
        if (checkpoint_every > 0 && r.iteration % checkpoint_every == 0) trainer.save_checkpoint(train_out);
      }
      trainer.save_checkpoint(train_out);
      if (!train_loss_csv.empty()) {
        write_file_atomic(train_loss_csv, csv_of([&](std::ostream& o) { det::write_loss_csv(o, trace); }));
      }
      const double last = trace.empty() ? 0.0 : trace.back().total;
      report(g, {{"iterations", trainer.iteration()}, {"samples", samples.size()}, {"final_loss", last}, {"out", train_out}},
             "trained to iteration " + std::to_string(trainer.iteration()) + " on " + std::to_string(samples.size()) +
                 " frames; checkpoint " + train_out);
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Per-class AP and mAP");
  std::string eval_pred, eval_gt, eval_model, eval_data, eval_split = "test", eval_report, eval_curves, eval_pred_out;
  std::optional<double> eval_iou;
  std::optional<std::string> eval_interp;
  eval->add_option("--pred", eval_pred, "Prediction JSON Lines")->check(CLI::ExistingFile);
  eval->add_option("--gt", eval_gt, "Ground-truth annotations JSON Lines")->check(CLI::ExistingFile);
  eval->add_option("--model", eval_model, "Checkpoint to run instead of --pred")->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_data, "Dataset directory for --model")->check(CLI::ExistingDirectory);
  eval->add_option("--split", eval_split, "Entries to score with --model: train, test or all");
  eval->add_option("--iou", eval_iou, "IoU threshold for a true positive");
  eval->add_option("--interpolation", eval_interp, "all-point or 11-point");
  eval->add_option("--report", eval_report, "Write the per-class CSV report");
  eval->add_option("--curves", eval_curves, "Write precision-recall curves as CSV");
  eval->add_option("--pred-out", eval_pred_out, "With --model, also write the predictions");
  eval->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      auto settings = cfg.eval;
      if (eval_iou) settings.iou_threshold = *eval_iou;
      if (eval_interp) {
        const auto mode = parse_interpolation(*eval_interp);
        if (!mode) throw UsageError("--interpolation must be all-point or 11-point");
        settings.interpolation = *mode;
      }
      if (!(settings.iou_threshold > 0.0 && settings.iou_threshold <= 1.0)) throw UsageError("--iou must be in (0, 1]");
      std::vector<ImageDetections> dets;
      std::vector<ImageGroundTruth> gts;
      if (!eval_model.empty()) {
        if (eval_data.empty() || !eval_pred.empty()) throw UsageError("--model needs --dataset and excludes --pred");
        const auto m = import_dataset(eval_data);
        const auto which = split_option(eval_split);
        const auto model = det::load_model<det::Real>(eval_model);
        const auto priors = det::generate_priors(model.config().priors);
        for (const auto& e : m.entries) {
          if (which && e.split != *which) continue;
          const auto s = preprocess_eval(Sample{to_float(read_png(fs::path(eval_data) / e.image)), e.boxes},
                                         model.config().input_size);
          ImageDetections d;
          d.image = e.frame;
          for (const auto& det : det::infer(model, priors, s.image, cfg.infer)) {
            d.boxes.push_back({det.box, det.stage});
            d.scores.push_back(det.score);
          }
          dets.push_back(std::move(d));
          gts.push_back({e.frame, e.boxes});
        }
        if (!eval_pred_out.empty()) write_file_atomic(eval_pred_out, detections_to_jsonl(dets));
      } else {
        if (eval_pred.empty() || eval_gt.empty()) throw UsageError("eval needs --pred and --gt, or --model and --dataset");
        try {
          dets = detections_from_jsonl(read_file_text(eval_pred));
        } catch (const std::invalid_argument& e) {
          throw DatasetError(eval_pred + ": " + e.what());
        }
        for (const auto& e : manifest_from_jsonl(read_file_text(eval_gt)).entries) gts.push_back({e.frame, e.boxes});
      }
      const auto results = evaluate_detections(dets, gts, settings);
      if (!eval_report.empty()) {
        write_file_atomic(eval_report, csv_of([&](std::ostream& o) { write_report_csv(o, results, settings); }));
      }
      if (!eval_curves.empty()) {
        write_file_atomic(eval_curves, csv_of([&](std::ostream& o) { write_curves_csv(o, results); }));
      }
      report(g, results_json(results), results_text(results));
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the labeling HTTP API");
  std::optional<std::string> serve_host;
  std::optional<int> serve_port;
  serve->add_option("--host", serve_host, "Bind address (overrides [service].host)");
  serve->add_option("--port", serve_port, "Port, 0 for any (overrides [service].port)")->check(CLI::Range(0, 65535));
  serve->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      LabelStore store(cfg.data_dir / "labels.jsonl");
      ServiceOptions opt;
      opt.catalog = FrameCatalog::load(cfg.data_dir);
      opt.tracker = cfg.tracker;
      opt.split_ratio = cfg.split_ratio;
      opt.seed = cfg.seed;
      opt.page_size = cfg.service.page_size;
      opt.cache_dir = cfg.data_dir / "cache";
      ApiServer server(std::move(opt), store);
      const auto host = serve_host.value_or(cfg.service.host);
      const int port = server.bind(host, serve_port.value_or(cfg.service.port));
      std::fprintf(stderr, "listening on http://%s:%d\n", host.c_str(), port);
      server.listen();
    };
  });

  // export
  auto* exp = app.add_subcommand("export", "Export Consensus annotations as a dataset");
  std::string export_out;
  std::optional<double> export_ratio;
  exp->add_option("--out", export_out, "Output directory")->required();
  exp->add_option("--ratio", export_ratio, "Test fraction in [0, 1) (overrides [data].split_ratio)");
  exp->callback([&] {
    run = [&] {
      const auto cfg = project(g);
      const double ratio = export_ratio.value_or(cfg.split_ratio);
      if (!(ratio >= 0.0 && ratio < 1.0)) throw UsageError("--ratio must be in [0, 1)");
      LabelStore store(cfg.data_dir / "labels.jsonl");
      const auto cat = FrameCatalog::load(cfg.data_dir);
      const auto m = service_manifest(store, ratio, cfg.seed);
      export_dataset(m,
                     [&](int frame) -> std::optional<Gray8> {
                       if (!cat.contains(frame) || !cat.frame(frame).ttr) return std::nullopt;
                       return render_image(cat.load_field(frame, FieldKind::TTR));
                     },
                     export_out);
      report(g, {{"frames", m.entries.size()}, {"counts", to_json(category_counts(m))}, {"out", export_out}},
             "exported " + std::to_string(m.entries.size()) + " frames to " + export_out);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    run();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "etcdet: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "etcdet: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "etcdet: " << msg << '\n';
    return 2;
  }
}
