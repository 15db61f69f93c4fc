#include "cli.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "deepstreet/completion.hpp"
#include "deepstreet/config.hpp"
#include "deepstreet/evaluation.hpp"
#include "deepstreet/manifest.hpp"
#include "deepstreet/raster.hpp"
#include "deepstreet/service.hpp"
#include "deepstreet/synthetic.hpp"
#include "deepstreet/training.hpp"

namespace deepstreet::cli {
namespace fs = std::filesystem;

namespace {

/// Raised for inputs that do not exist or cannot be read (exit 1).
class MissingInput : public Error {
 public:
  using Error::Error;
};

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw MissingInput(std::string(what) + " not found: " + path.string());
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

PipelineConfig load_config(const Globals& g) {
  std::optional<fs::path> explicit_path;
  if (!g.config_path.empty()) explicit_path = g.config_path;
  PipelineConfig config;
  if (const auto path = resolve_config_path(explicit_path)) {
    require_file(*path, "config");
    config = read_config(*path);
  }
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  int width = 1024;
  int height = 1024;
};

void cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  const PipelineConfig config = load_config(g);
  const SyntheticCity city = synthetic_city(a.width, a.height, config.seed, config.pixel_size_m);
  fs::create_directories(a.out_dir);
  write_road_file(fs::path(a.out_dir) / "roads.txt", city.roads);
  write_ascii_grid(fs::path(a.out_dir) / "dem.asc", city.dem);
  out << "wrote " << city.roads.size() << " roads and a " << city.dem.rows << "x" << city.dem.cols << " DEM to "
      << a.out_dir << '\n';
}

// ---- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::string roads;
  std::string dem;
  std::string out;
};

void cmd_ingest(const Globals& g, const IngestArgs& a, std::ostream& out) {
  const PipelineConfig config = load_config(g);
  require_file(a.roads, "road file");
  require_file(a.dem, "DEM");
  const DemGrid dem = read_ascii_grid(a.dem);
  CityRaster raster(geometry_for_dem(dem, config.pixel_size_m));
  const auto roads = read_road_file(a.roads, config.road_class_table());
  const StrokeStats stats = stroke_roads(roads, raster);
  encode_dem(dem, config.dem_min_m, config.dem_max_m, raster);

  const fs::path png(a.out);
  if (png.has_parent_path()) fs::create_directories(png.parent_path());
  write_png(png, raster.image);
  const auto& geo = raster.geometry;
  const nlohmann::json sidecar = {{"width_px", geo.width},         {"height_px", geo.height},
                                  {"pixel_size_m", geo.pixel_size_m}, {"origin_x", geo.origin_x},
                                  {"origin_y", geo.origin_y},       {"segments", stats.segments},
                                  {"skipped_edges", stats.skipped_edges}, {"dem_min_m", config.dem_min_m},
                                  {"dem_max_m", config.dem_max_m}};
  fs::path meta = png;
  meta.replace_extension(".json");
  std::ofstream(meta) << sidecar.dump(2) << '\n';
  out << "rasterized " << stats.segments << " roads into " << geo.width << "x" << geo.height << " px -> " << png.string()
      << '\n';
}

// ---- sample -----------------------------------------------------------------

struct SampleArgs {
  std::string raster;
  std::string out_dir;
  int count = 0;
  std::string policy = "disjoint";
};

void cmd_sample(const Globals& g, const SampleArgs& a, std::ostream& out) {
  const PipelineConfig config = load_config(g);
  require_file(a.raster, "raster");
  const ChannelImage image = read_png(a.raster);
  if (image.channels != 3) throw Error("city raster must have three channels");
  RasterGeometry geo;
  geo.width = image.width;
  geo.height = image.height;
  geo.pixel_size_m = config.pixel_size_m;
  const CityRaster raster(geo, image);

  auto tiles = sample_tiles(raster, a.count, config.seed, parse_overlap_policy(a.policy), config.tile_px);
  split_dataset(tiles, config.train_fraction, config.seed);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir / "tiles");
  Manifest manifest;
  manifest.pixel_size_m = config.pixel_size_m;
  manifest.tile_px = config.tile_px;
  manifest.dem_min_m = config.dem_min_m;
  manifest.dem_max_m = config.dem_max_m;
  manifest.seed = config.seed;
  // Test tiles get a fixed hole so evaluations are repeatable.
  std::mt19937_64 hole_rng(config.seed ^ 0x686f6c65ULL);
  for (const auto& t : tiles) {
    std::ostringstream name;
    name << "tiles/" << std::setw(6) << std::setfill('0') << t.id << ".png";
    write_png(dir / name.str(), t.pixels);
    ManifestRecord record{t.id, t.row, t.col, t.split, name.str(), std::nullopt};
    if (t.split == Split::test) record.hole = random_mask(hole_rng, config.mask_geometry()).hole();
    manifest.records.push_back(record);
  }
  write_manifest(dir / "manifest.tsv", manifest);
  out << "sampled " << tiles.size() << " tiles -> " << (dir / "manifest.tsv").string() << '\n';
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out_dir;
};

void cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const PipelineConfig config = load_config(g);
  require_file(a.manifest, "manifest");
  const Manifest manifest = read_manifest(a.manifest);
  if (manifest.tile_px != config.tile_px) {
    throw Error("manifest tiles are " + std::to_string(manifest.tile_px) + " px but the config says " +
                std::to_string(config.tile_px));
  }
  auto tiles = load_split(a.manifest, manifest, Split::train);
  const fs::path dir = a.out_dir.empty() ? fs::path(config.checkpoint_dir) : fs::path(a.out_dir);
  const auto report_every = std::max<std::int64_t>(1, config.generator_iters / 20);
  const TrainResult result =
      train(std::move(tiles), config.train_config(), config.network_config(), dir, [&](const IterationRecord& r) {
        if (r.iteration % report_every == 0) {
          out << "phase " << r.phase << " iter " << r.iteration << " mse " << r.mse << " d_loss " << r.d_loss
              << " g_adv " << r.g_adv << '\n';
        }
      });
  for (const auto& p : result.checkpoints) out << "checkpoint " << p.string() << '\n';
}

// ---- complete ---------------------------------------------------------------

struct CompleteArgs {
  std::string checkpoint;
  std::string tile;
  std::string mask;
  std::string out;
  std::string batch;
  bool threshold = false;
};

void cmd_complete(const Globals& g, const CompleteArgs& a, std::ostream& out, std::ostream& err, int& status) {
  (void)g;
  require_file(a.checkpoint, "checkpoint");
  const InferenceModel model = load_inference_model(a.checkpoint);
  CompletionOptions options;
  options.threshold = a.threshold;

  if (a.batch.empty()) {
    if (a.tile.empty() || a.mask.empty() || a.out.empty()) {
      throw MissingInput("complete needs --tile, --mask and --out (or --batch)");
    }
    require_file(a.tile, "tile");
    const Tile tile = read_png(a.tile);
    const Mask mask(model.model.config.tile_px, parse_hole(a.mask));
    const CompletionResult result = complete(model.model, tile, mask, options);
    const fs::path png(a.out);
    if (png.has_parent_path()) fs::create_directories(png.parent_path());
    write_png(png, result.tile);
    fs::path sidecar = png;
    sidecar.replace_extension(".json");
    write_completion_sidecar(sidecar, model.id, mask.hole(), result.elapsed_ms);
    out << "completed " << a.tile << " -> " << png.string() << " in " << result.elapsed_ms << " ms\n";
    return;
  }

  // Batch file: one `tile.png<TAB>r,c,h,w<TAB>out.png` per line.
  require_file(a.batch, "batch file");
  std::ifstream in(a.batch);
  std::vector<CompletionRequest> requests;
  std::vector<std::string> outputs;
  std::vector<std::string> parse_errors;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string tile_path, hole, out_path;
    std::getline(fields, tile_path, '\t');
    std::getline(fields, hole, '\t');
    std::getline(fields, out_path, '\t');
    CompletionRequest request;
    std::string problem;
    try {
      if (out_path.empty()) throw FormatError("expected tile<TAB>mask<TAB>out");
      require_file(tile_path, "tile");
      request.tile = read_png(tile_path);
      request.hole = parse_hole(hole);
    } catch (const std::exception& e) {
      problem = e.what();
      request.tile.reset();
    }
    requests.push_back(std::move(request));
    outputs.push_back(out_path);
    parse_errors.push_back(problem);
  }
  const auto outcomes = batch_complete(model, requests, {}, options);
  int failed = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const std::string error = !parse_errors[i].empty() ? parse_errors[i] : outcomes[i].error;
    if (!error.empty()) {
      ++failed;
      err << "request " << i + 1 << ": " << error << '\n';
      continue;
    }
    const fs::path png(outputs[i]);
    if (png.has_parent_path()) fs::create_directories(png.parent_path());
    write_png(png, outcomes[i].result->tile);
    fs::path sidecar = png;
    sidecar.replace_extension(".json");
    write_completion_sidecar(sidecar, model.id, requests[i].hole, outcomes[i].result->elapsed_ms);
  }
  out << "completed " << outcomes.size() - failed << " of " << outcomes.size() << " requests\n";
  if (failed > 0) status = kFailure;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out_dir;
  std::string split = "test";
  int limit = 0;
};

void cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const PipelineConfig config = load_config(g);
  require_file(a.checkpoint, "checkpoint");
  require_file(a.manifest, "manifest");
  const InferenceModel model = load_inference_model(a.checkpoint);
  const Manifest manifest = read_manifest(a.manifest);
  MaskGeometry geometry = config.mask_geometry();
  geometry.tile_px = model.model.config.tile_px;
  std::mt19937_64 rng(config.seed);
  std::vector<EvalCase> cases;
  for (const ManifestRecord* r : manifest.with_split(parse_split(a.split))) {
    if (a.limit > 0 && static_cast<int>(cases.size()) >= a.limit) break;
    const Mask mask = r->hole ? Mask(geometry.tile_px, *r->hole) : random_mask(rng, geometry);
    cases.push_back({std::to_string(r->id), load_tile(a.manifest, *r), mask});
  }
  const EvalReport report = evaluate(model, cases, a.out_dir);
  double mse = 0.0, connectivity = 0.0;
  int blank = 0;
  for (const auto& row : report.rows) {
    mse += row.hole_mse;
    connectivity += row.connectivity;
    blank += row.blank_context;
  }
  const double n = std::max<std::size_t>(1, report.rows.size());
  out << "evaluated " << report.rows.size() << " tiles (proxy metrics): mean hole_mse " << mse / n
      << ", mean connectivity " << connectivity / n << ", blank-context " << blank << " -> "
      << (fs::path(a.out_dir) / "report.tsv").string() << '\n';
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string checkpoint_dir;
  std::string checkpoint;
  std::string manifest;
  std::string static_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
};

Service* g_running = nullptr;

void cmd_serve(const Globals& g, const ServeArgs& a, std::ostream& out) {
  const PipelineConfig config = load_config(g);
  ServiceOptions options;
  options.checkpoint_dir = a.checkpoint_dir.empty() ? fs::path(config.checkpoint_dir) : fs::path(a.checkpoint_dir);
  if (!a.checkpoint.empty()) options.checkpoint = a.checkpoint;
  if (!a.manifest.empty()) {
    require_file(a.manifest, "manifest");
    options.manifest = a.manifest;
  }
  if (!a.static_dir.empty()) options.static_dir = a.static_dir;
  Service service(options);
  const int port = service.bind(a.host, a.port);
  if (port < 0) throw Error("cannot bind " + a.host + ":" + std::to_string(a.port));
  out << "serving on http://" << a.host << ":" << port << (service.healthy() ? "" : " (degraded: no checkpoint)")
      << std::endl;
  g_running = &service;
  std::signal(SIGINT, [](int) {
    if (g_running) g_running->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_running) g_running->stop();
  });
  service.run();
  g_running = nullptr;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"deepstreet: street-network completion pipeline", "deepstreet"};
  app.set_help_all_flag("--help-all", "Expand all help");
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config file (default: $DEEPSTREET_CONFIG)");
  app.add_option("--seed", g.seed, "Override the config seed");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic road file and DEM");
  c_synth->add_option("--out-dir", synth.out_dir)->required();
  c_synth->add_option("--width", synth.width, "Raster width in pixels");
  c_synth->add_option("--height", synth.height, "Raster height in pixels");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Rasterize roads and a DEM into a city raster PNG");
  c_ingest->add_option("--roads", ingest.roads, "Road line file")->required();
  c_ingest->add_option("--dem", ingest.dem, "ESRI ASCII grid")->required();
  c_ingest->add_option("--out", ingest.out, "Output PNG")->required();

  SampleArgs sample;
  auto* c_sample = app.add_subcommand("sample", "Cut tiles and write a manifest");
  c_sample->add_option("--raster", sample.raster, "City raster PNG")->required();
  c_sample->add_option("--out-dir", sample.out_dir)->required();
  c_sample->add_option("--count", sample.count)->required()->check(CLI::PositiveNumber);
  c_sample->add_option("--policy", sample.policy)->check(CLI::IsMember({"disjoint", "free"}));

  TrainArgs train_args;
  auto* c_train = app.add_subcommand("train", "Run the three training phases");
  c_train->add_option("--manifest", train_args.manifest)->required();
  c_train->add_option("--out-dir", train_args.out_dir, "Checkpoint directory (default: config checkpoint_dir)");

  CompleteArgs complete_args;
  auto* c_complete = app.add_subcommand("complete", "Complete one tile or a batch file");
  c_complete->add_option("--checkpoint", complete_args.checkpoint)->required();
  c_complete->add_option("--tile", complete_args.tile);
  c_complete->add_option("--mask", complete_args.mask, "row0,col0,height,width");
  c_complete->add_option("--out", complete_args.out);
  c_complete->add_option("--batch", complete_args.batch, "Lines of tile<TAB>mask<TAB>out");
  c_complete->add_flag("--threshold", complete_args.threshold, "Snap road channels to 0/255");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Write proxy metrics and montages");
  c_eval->add_option("--checkpoint", eval.checkpoint)->required();
  c_eval->add_option("--manifest", eval.manifest)->required();
  c_eval->add_option("--out-dir", eval.out_dir)->required();
  c_eval->add_option("--split", eval.split)->check(CLI::IsMember({"train", "test"}));
  c_eval->add_option("--limit", eval.limit, "Evaluate at most this many tiles");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the HTTP service");
  c_serve->add_option("--checkpoint-dir", serve.checkpoint_dir);
  c_serve->add_option("--checkpoint", serve.checkpoint, "Checkpoint id (file name without .dsck)");
  c_serve->add_option("--manifest", serve.manifest);
  c_serve->add_option("--static", serve.static_dir, "Directory of UI assets mounted at /");
  c_serve->add_option("--host", serve.host);
  c_serve->add_option("--port", serve.port)->check(CLI::Range(0, 65535));

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::RequiredError& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }
  if (app.get_subcommands().empty()) {
    err << "error: no command given\n\n" << app.help();
    return kUsage;
  }

  int status = kOk;
  try {
    if (c_synth->parsed()) cmd_synth(g, synth, out);
    if (c_ingest->parsed()) cmd_ingest(g, ingest, out);
    if (c_sample->parsed()) cmd_sample(g, sample, out);
    if (c_train->parsed()) cmd_train(g, train_args, out);
    if (c_complete->parsed()) cmd_complete(g, complete_args, out, err, status);
    if (c_eval->parsed()) cmd_eval(g, eval, out);
    if (c_serve->parsed()) cmd_serve(g, serve, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return status;
}

}  // namespace deepstreet::cli
