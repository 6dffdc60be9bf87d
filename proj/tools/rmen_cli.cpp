// rmen: command-line front end for dataset synthesis, training, prediction,
// decomposition, evaluation, baselines and the benchmark.
//
// Every subcommand runs in two stages. The planning stage validates flags and
// inputs and has no side effects; failures there exit with 1. The returned
// action does the work; failures there exit with 2.

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rmen/model/features.hpp"
#include "rmen/model/gradcheck.hpp"
#include "rmen/pipeline.hpp"
#include "rmen/plot.hpp"

namespace fs = std::filesystem;
using namespace rmen;

namespace {

using Action = std::function<int()>;

struct Options {
  std::string config, out, data, ckpt, in, truth, video, frames, method, split = "test", negate;
  double fps = 15.0, window = 20.0, prominence_scale = 0.5, high_hz = 2.0;
  double cardiac_low = 0.5, cardiac_high = 2.0, resp_cutoff = 0.33, tolerance = 1e-4;
  std::size_t min_distance = 0;
  std::uint64_t seed = 1;
  bool svg = false;
};

void log_line(const std::string& m) { std::cerr << "[rmen] " << m << "\n"; }

RunConfig run_config(const std::string& path) {
  RunConfig rc = path.empty() ? RunConfig{} : load_run_config(path);
  apply_seed_override(rc);
  rc.validate();
  return rc;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " '" + p.string() + "' does not exist or is not a file");
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw ConfigError(what + " '" + p.string() + "' does not exist or is not a directory");
}

void require_output_dir(const std::string& p) {
  if (p.empty()) throw ConfigError("--out is required");
  if (fs::exists(p) && !fs::is_directory(p)) throw ConfigError("output '" + p + "' exists and is not a directory");
}

void require_output_file(const std::string& p) {
  if (p.empty()) throw ConfigError("--out is required");
  if (fs::is_directory(p)) throw ConfigError("output '" + p + "' is a directory");
}

/// `dir/manifest.json` when present, otherwise `dir/<split>/manifest.json`.
fs::path resolve_manifest(const fs::path& dir, const std::string& split) {
  require_dir(dir, "data directory");
  if (fs::is_regular_file(dir / "manifest.json")) return dir / "manifest.json";
  const fs::path p = dir / split / "manifest.json";
  if (!fs::is_regular_file(p)) {
    throw ConfigError("no manifest.json in '" + dir.string() + "' or its '" + split + "' split (run `rmen generate` first)");
  }
  return p;
}

fs::path split_manifest(const fs::path& dir, const std::string& split) {
  const fs::path p = dir / split / "manifest.json";
  require_file(p, "manifest");
  return p;
}

std::vector<std::string> manifest_ids(const fs::path& manifest) {
  std::ifstream in(manifest);
  std::vector<std::string> ids;
  try {
    for (const auto& m : nlohmann::json::parse(in)) ids.push_back(m.at("id").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(manifest.string() + ": " + e.what());
  }
  return ids;
}

std::vector<fs::path> csv_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::pair<std::size_t, std::size_t> parse_frame_range(const std::string& s) {
  const auto dots = s.find("..");
  std::size_t a = 0, b = 0;
  auto num = [](std::string_view t, std::size_t& v) {
    const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    return !t.empty() && r.ec == std::errc{} && r.ptr == t.data() + t.size();
  };
  if (dots == std::string::npos || !num(std::string_view(s).substr(0, dots), a) ||
      !num(std::string_view(s).substr(dots + 2), b) || a >= b) {
    throw ConfigError("--frames must look like a..b with a < b (b exclusive), got '" + s + "'");
  }
  return {a, b};
}

std::vector<model::LabeledVideo> labeled_views(const std::vector<io::DatasetEntry>& entries,
                                               std::vector<labels::PhaseLabelSeries>& storage) {
  storage.clear();
  storage.reserve(entries.size());
  for (const auto& e : entries) storage.push_back(pipeline::ecg_labels(e.ecg, e.video.frames, e.video.fps));
  std::vector<model::LabeledVideo> views;
  for (std::size_t i = 0; i < entries.size(); ++i) views.push_back({&entries[i].video, &storage[i]});
  return views;
}

void write_prediction(const fs::path& out, const std::string& id, const std::vector<double>& curve) {
  io::write_frame_table({{"prediction", &curve}}, out / (id + ".csv"));
}

// ---------------------------------------------------------------------------

Action plan_generate(const Options& o) {
  RunConfig rc = run_config(o.config);
  require_output_dir(o.out);
  return [rc, out = fs::path(o.out)] {
    using pipeline::Split;
    for (Split s : {Split::train, Split::val, Split::test, Split::irregular}) {
      if (pipeline::split_count(rc, s) == 0) continue;
      log_line("generating " + pipeline::split_name(s));
      std::vector<io::DatasetEntry> entries;
      for (const auto& q : pipeline::generate_split(rc, s)) entries.push_back(io::dataset_entry(q));
      io::write_dataset(entries, out / pipeline::split_name(s));
    }
    binary::write_file_atomic(out / "config.json", run_config_to_json(rc).dump(2) + "\n");
    return 0;
  };
}

Action plan_train(const Options& o) {
  RunConfig rc = run_config(o.config);
  const fs::path train = split_manifest(o.data, "train"), val = split_manifest(o.data, "val");
  require_output_file(o.out);
  return [rc, train, val, out = fs::path(o.out)] {
    const auto train_set = io::read_dataset(train), val_set = io::read_dataset(val);
    std::vector<labels::PhaseLabelSeries> tl, vl;
    const auto tv = labeled_views(train_set, tl), vv = labeled_views(val_set, vl);
    const auto result = pipeline::train_rmen(rc, tv, vv, log_line);
    model::save_checkpoint({result.params, pipeline::effective_model(rc), result.history}, out);
    fs::path history = out;
    history.replace_extension();
    binary::write_file_atomic(history.string() + "_history.csv", pipeline::history_csv(result.history));
    log_line("best epoch " + std::to_string(result.best_epoch) + ", checkpoint " + out.string());
    return 0;
  };
}

Action plan_predict(const Options& o) {
  require_file(o.ckpt, "checkpoint");
  const fs::path manifest = resolve_manifest(o.data, o.split);
  require_output_dir(o.out);
  return [ckpt = fs::path(o.ckpt), manifest, out = fs::path(o.out)] {
    const auto ck = model::load_checkpoint(ckpt);
    for (const auto& e : io::read_dataset(manifest)) {
      log_line("predicting " + e.id);
      write_prediction(out, e.id, pipeline::rmen_curve(ck.params, ck.config, e.video));
    }
    return 0;
  };
}

Action plan_decompose(const Options& o) {
  require_dir(o.in, "input directory");
  const auto files = csv_files(o.in);
  if (files.empty()) throw ConfigError("no prediction CSVs in '" + o.in + "'");
  decompose::DecomposeOptions filters{o.cardiac_low, o.cardiac_high, o.resp_cutoff};
  decompose::FilterSpec::band_pass(filters.cardiac_low_hz, filters.cardiac_high_hz, o.fps).validate();
  decompose::FilterSpec::low_pass(filters.respiratory_cutoff_hz, o.fps).validate();
  require_output_dir(o.out);
  return [files, filters, fps = o.fps, svg = o.svg, out = fs::path(o.out)] {
    for (const auto& f : files) {
      const auto curve = io::read_frame_table(f, {"prediction"}).front();
      const auto d = decompose::decompose_curve(curve, fps, filters);
      const std::string id = f.stem().string();
      io::write_frame_table({{"raw_median", &curve}, {"cardiac", &d.cardiac}, {"respiratory", &d.respiratory}},
                            out / (id + ".csv"));
      if (svg) {
        binary::write_file_atomic(out / (id + ".svg"),
                                  plot::line_chart({{"Cardiac", "blue", &d.cardiac}, {"Respiratory", "green", &d.respiratory}},
                                                   fps, id));
      }
    }
    return 0;
  };
}

Action plan_evaluate(const Options& o) {
  const fs::path manifest = resolve_manifest(o.truth, o.split);
  require_dir(o.in, "decomposition directory");
  for (const auto& id : manifest_ids(manifest)) require_file(fs::path(o.in) / (id + ".csv"), "decomposition");
  if (!(o.window > 0.0)) throw ConfigError("--window must be positive");
  if (!(o.high_hz > 0.0)) throw ConfigError("--high-hz must be positive");
  if (!(o.prominence_scale >= 0.0)) throw ConfigError("--prominence-scale must be >= 0");
  require_output_file(o.out);
  return [o, manifest] {
    std::vector<evaluation::SequenceCurve> curves;
    double fps = 15.0;
    for (const auto& e : io::read_dataset(manifest)) {
      const auto ref = labels::map_peaks({*e.ecg.true_peaks, e.ecg.rate}, e.video.fps).frames;
      auto cols = io::read_frame_table(fs::path(o.in) / (e.id + ".csv"), {"raw_median", "cardiac", "respiratory"});
      curves.push_back({e.id, ref, std::move(cols[1])});
      fps = e.video.fps;
    }
    evaluation::EvaluationOptions opt;
    opt.fps = fps;
    opt.window = o.window;
    opt.peaks.high_hz = o.high_hz;
    opt.peaks.prominence_scale = o.prominence_scale;
    if (o.min_distance > 0) opt.peaks.min_distance = o.min_distance;
    const auto run = evaluation::evaluate_run(curves, opt);
    io::write_report(run, o.out);
    std::cout << io::report_csv(run);
    return 0;
  };
}

Action plan_baseline(const Options& o) {
  if (o.method != "density" && o.method != "pca-lstm" && o.method != "pca-ridge") {
    throw ConfigError("--method must be density, pca-lstm or pca-ridge");
  }
  RunConfig rc = run_config(o.config);
  const fs::path target = resolve_manifest(o.data, o.split);
  std::optional<fs::path> train, val;
  if (o.method != "density") {
    train = split_manifest(o.data, "train");
    val = split_manifest(o.data, "val");
  }
  require_output_dir(o.out);
  return [rc, method = o.method, target, train, val, out = fs::path(o.out)] {
    const auto test = io::read_dataset(target);
    if (method == "density") {
      for (const auto& e : test) write_prediction(out, e.id, baselines::density_flow(e.video));
      return 0;
    }
    const auto train_set = io::read_dataset(*train);
    std::vector<const VideoSequence*> videos;
    for (const auto& e : train_set) videos.push_back(&e.video);
    const auto pca = pipeline::fit_pca_features(rc, videos);
    log_line("PCA keeps " + std::to_string(pca.pca.k) + " components");
    std::vector<labels::PhaseLabelSeries> tl, vl;
    labeled_views(train_set, tl);
    std::vector<baselines::FeatureSequence> tf, vf;
    for (std::size_t i = 0; i < train_set.size(); ++i) tf.push_back({pca(train_set[i].video), &tl[i]});
    if (method == "pca-ridge") {
      const auto ridge = pipeline::train_ridge(rc, tf);
      for (const auto& e : test) write_prediction(out, e.id, pipeline::ridge_curve(ridge, pca, e.video));
      return 0;
    }
    const auto val_set = io::read_dataset(*val);
    labeled_views(val_set, vl);
    for (std::size_t i = 0; i < val_set.size(); ++i) vf.push_back({pca(val_set[i].video), &vl[i]});
    const auto lstm = pipeline::train_pca_lstm(rc, pca.pca.k, tf, vf, log_line);
    const auto cfg = pipeline::lstm_regressor_config(rc);
    for (const auto& e : test) write_prediction(out, e.id, pipeline::lstm_curve(lstm.params, cfg, pca, e.video));
    return 0;
  };
}

void print_report(const std::string& title, const model::GradcheckReport& r) {
  std::cout << title << "\n";
  for (const auto& g : r.groups) {
    std::cout << "  " << g.name << " checked " << g.checked << " skipped " << g.skipped << " max_error " << g.max_error
              << "\n";
  }
  std::cout << "  max relative error " << r.max_error() << " (tolerance " << r.tolerance << "): "
            << (r.passed() ? "PASS" : "FAIL") << "\n";
}

Action plan_gradcheck(const Options& o) {
  if (!(o.tolerance > 0.0)) throw ConfigError("--tolerance must be positive");
  if (!o.negate.empty()) {
    Rng probe(0);
    bool known = o.negate == "input";
    for (const auto& e : model::init_parameters(model::mini_config(), probe).entries()) known |= e.name == o.negate;
    for (const auto& e : baselines::init_lstm_regressor(3, 4, probe).entries()) known |= e.name == o.negate;
    if (!known) throw ConfigError("--negate: no parameter named '" + o.negate + "'");
  }
  return [o] {
    model::GradcheckOptions opt;
    opt.tolerance = o.tolerance;
    opt.negate_gradient = o.negate;
    Rng rng(o.seed);
    const auto net = model::gradcheck(model::mini_config(), rng, opt);
    Rng cell_rng(mix_seed(o.seed + 1));
    const auto cell = baselines::gradcheck_lstm_regressor(cell_rng, opt);
    print_report("miniature RMEN", net);
    print_report("1x1 LSTM cell", cell);
    const bool ok = net.passed() && cell.passed();
    std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
    return ok ? 0 : 2;
  };
}

Action plan_export_features(const Options& o) {
  require_file(o.ckpt, "checkpoint");
  require_file(o.video, "video");
  const auto [a, b] = parse_frame_range(o.frames);
  require_output_dir(o.out);
  auto video = io::read_video(o.video, fs::path(o.video).stem().string(), o.fps);
  if (b > video.frames) {
    throw ConfigError("--frames end " + std::to_string(b) + " exceeds the video length " + std::to_string(video.frames));
  }
  return [ckpt = fs::path(o.ckpt), video = std::move(video), a = a, b = b, out = fs::path(o.out)] {
    const auto ck = model::load_checkpoint(ckpt);
    const auto n = model::export_feature_maps(ck.params, ck.config, model::input_window(video, a, b - a), out);
    log_line("wrote " + std::to_string(n) + " feature maps");
    return 0;
  };
}

Action plan_bench(const Options& o) {
  RunConfig rc = run_config(o.config);
  require_output_dir(o.out);
  return [rc, out = fs::path(o.out)] {
    const auto r = pipeline::run_bench(rc, out, log_line);
    std::cout << pipeline::comparison_markdown(r);
    return 0;
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RMEN cardiac and respiratory motion estimation"};
  app.require_subcommand(1);
  Options o;
  std::function<Action(const Options&)> planner;
  auto sub = [&](const std::string& name, const std::string& help, Action (*plan)(const Options&)) {
    auto* s = app.add_subcommand(name, help);
    s->callback([&planner, plan] { planner = plan; });
    return s;
  };

  auto* gen = sub("generate", "Synthesize phantom train/val/test/irregular splits", plan_generate);
  gen->add_option("--config", o.config, "Run configuration JSON (defaults when omitted)");
  gen->add_option("--out", o.out, "Dataset directory")->required();

  auto* train = sub("train", "Train RMEN on a generated dataset", plan_train);
  train->add_option("--data", o.data, "Dataset directory with train/ and val/")->required();
  train->add_option("--config", o.config, "Run configuration JSON");
  train->add_option("--out", o.out, "Checkpoint path (.rmck)")->required();

  auto* predict = sub("predict", "Write raw median prediction curves", plan_predict);
  predict->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  predict->add_option("--data", o.data, "Dataset or split directory")->required();
  predict->add_option("--split", o.split, "Split used when --data is a dataset root");
  predict->add_option("--out", o.out, "Prediction directory")->required();

  auto* dec = sub("decompose", "Split predictions into cardiac and respiratory components", plan_decompose);
  dec->add_option("--in", o.in, "Prediction directory")->required();
  dec->add_option("--fps", o.fps, "Frame rate");
  dec->add_option("--out", o.out, "Decomposition directory")->required();
  dec->add_flag("--svg", o.svg, "Also write SVG plots");
  dec->add_option("--cardiac-low", o.cardiac_low, "Cardiac band lower edge (Hz)");
  dec->add_option("--cardiac-high", o.cardiac_high, "Cardiac band upper edge (Hz)");
  dec->add_option("--resp-cutoff", o.resp_cutoff, "Respiratory low-pass edge (Hz)");

  auto* ev = sub("evaluate", "Score cardiac components against reference R peaks", plan_evaluate);
  ev->add_option("--truth", o.truth, "Dataset or split directory")->required();
  ev->add_option("--split", o.split, "Split used when --truth is a dataset root");
  ev->add_option("--in", o.in, "Decomposition directory")->required();
  ev->add_option("--window", o.window, "Matching window in frames");
  ev->add_option("--min-distance", o.min_distance, "Minimum peak distance in frames (default fps / high-hz)");
  ev->add_option("--high-hz", o.high_hz, "Cardiac band upper edge used for the default peak distance");
  ev->add_option("--prominence-scale", o.prominence_scale, "Prominence threshold as a multiple of the robust spread");
  ev->add_option("--out", o.out, "Report CSV")->required();

  auto* base = sub("baseline", "Predict with a baseline method", plan_baseline);
  base->add_option("--method", o.method, "density, pca-lstm or pca-ridge")->required();
  base->add_option("--data", o.data, "Dataset directory")->required();
  base->add_option("--split", o.split, "Split to predict");
  base->add_option("--config", o.config, "Run configuration JSON");
  base->add_option("--out", o.out, "Prediction directory")->required();

  auto* gc = sub("gradcheck", "Finite-difference check of every backward pass", plan_gradcheck);
  gc->add_option("--seed", o.seed, "Seed for parameters and probes");
  gc->add_option("--tolerance", o.tolerance, "Maximum relative error");
  gc->add_option("--negate", o.negate, "Flip the sign of one analytic gradient (fault injection)");

  auto* ef = sub("export-features", "Export Conv3D feature maps as PGM images", plan_export_features);
  ef->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  ef->add_option("--video", o.video, "Video (.rmvd)")->required();
  ef->add_option("--frames", o.frames, "Frame range a..b (b exclusive)")->required();
  ef->add_option("--fps", o.fps, "Frame rate");
  ef->add_option("--out", o.out, "Output directory")->required();

  auto* bench = sub("bench", "Run the full comparison and write reports", plan_bench);
  bench->add_option("--config", o.config, "Run configuration JSON (defaults when omitted)");
  bench->add_option("--out", o.out, "Results directory")->required();

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

  Action action;
  try {
    action = planner(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
