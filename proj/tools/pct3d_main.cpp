#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pct3d/checkpoint.hpp"
#include "pct3d/gradcheck_suite.hpp"
#include "pct3d/network.hpp"
#include "pct3d/trainer.hpp"

namespace fs = std::filesystem;
using namespace pct3d;

namespace {

struct Args {
  std::string config;
  std::string data;
  std::string ckpt;
  std::string out;
  std::string log_csv;
  std::string scale = "tiny";
  std::string classes;
  int epochs = 200;
  int batch = 16;
  int points = 0;
  int repeat = 10;
  int synth_samples = 40;
  int n_points = 64;
  std::uint64_t seed = 1;
};

ModelConfig load_and_echo_config(const std::string& path) {
  ModelConfig cfg = load_model_config(path);
  std::cerr << "# resolved config (" << path << ")\n";
  std::ostringstream os;
  write_model_config(cfg, os);
  std::istringstream is(os.str());
  std::string line;
  while (std::getline(is, line)) std::cerr << "# " << line << '\n';
  return cfg;
}

std::vector<ShapeClass> parse_classes(const std::string& list, Task task) {
  if (list.empty()) {
    if (task == Task::kSegmentation) return {ShapeClass::kCube};
    return {ShapeClass::kSphere, ShapeClass::kCube, ShapeClass::kTorus,
            ShapeClass::kCylinder};
  }
  std::vector<ShapeClass> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(shape_from_name(item));
  if (out.empty()) throw ConfigError("empty class list");
  return out;
}

Dataset build_dataset(const ModelConfig& cfg, const Args& args) {
  if (args.data == "synth") {
    SynthConfig sc;
    sc.classes = parse_classes(args.classes, cfg.task);
    sc.n_points = cfg.input_points;
    sc.samples_per_class = args.synth_samples;
    sc.seed = args.seed;
    Dataset ds = synth_shapes(sc);
    if (cfg.task == Task::kClassification && ds.num_classes != cfg.num_classes) {
      throw ConfigError("synthetic dataset has " +
                        std::to_string(ds.num_classes) +
                        " classes but the config sets num_classes=" +
                        std::to_string(cfg.num_classes));
    }
    if (cfg.task == Task::kSegmentation && ds.num_parts != cfg.num_parts) {
      throw ConfigError("synthetic dataset has " + std::to_string(ds.num_parts) +
                        " parts but the config sets num_parts=" +
                        std::to_string(cfg.num_parts));
    }
    return ds;
  }
  const fs::path manifest = fs::path(args.data) / "manifest.txt";
  Dataset raw = load_manifest(manifest.string());
  if (raw.num_classes > cfg.num_classes) {
    throw ConfigError("manifest labels exceed num_classes=" +
                      std::to_string(cfg.num_classes));
  }
  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.num_parts = cfg.num_parts;
  for (PointCloud& pc : raw.samples) {
    if (pc.point_count() < cfg.input_points) {
      throw ConfigError("sample with " + std::to_string(pc.point_count()) +
                        " points cannot be resampled to input_points=" +
                        std::to_string(cfg.input_points));
    }
    if (cfg.in_channels == 6 && !pc.has_normals()) {
      throw ConfigError("in_channels=6 but a data file carries no normals");
    }
    ds.samples.push_back(resample_fps(normalize_unit_sphere(pc), cfg.input_points));
  }
  return ds;
}

int cmd_train(const Args& args) {
  ModelConfig cfg = load_and_echo_config(args.config);
  Dataset ds = build_dataset(cfg, args);
  Model model(cfg);
  model.init_params(args.seed);
  TrainOptions opt;
  opt.epochs = args.epochs;
  opt.batch_size = args.batch;
  opt.seed = args.seed;
  opt.checkpoint_path = args.out;
  opt.log_csv_path = args.log_csv;
  opt.progress = &std::cerr;
  const TrainResult res = train(model, ds, opt);
  std::cout << "epochs=" << args.epochs << " best_epoch=" << res.best_epoch
            << " best_loss=" << res.best_loss << " best_oa=" << res.best_oa
            << " final_oa=" << res.final_oa << '\n';
  std::cout << "checkpoint=" << args.out << " log=" << args.log_csv << '\n';
  return 0;
}

int cmd_eval(const Args& args) {
  ModelConfig cfg = load_and_echo_config(args.config);
  Model model(cfg);
  load_checkpoint(args.ckpt, model.registry());
  Dataset ds = build_dataset(cfg, args);
  const MetricsReport report = evaluate(model, ds);
  std::cout << report.to_json() << '\n';
  return 0;
}

int cmd_gradcheck(const Args& args) {
  load_and_echo_config(args.config);
  if (args.scale != "tiny") {
    throw ConfigError("unknown --scale '" + args.scale + "' (expected: tiny)");
  }
  const auto checks = run_gradient_suite(args.seed);
  bool ok = true;
  for (const BlockCheck& c : checks) {
    std::printf("%-26s max_rel_err=%.3e %s\n", c.block.c_str(), c.max_rel_err,
                c.max_rel_err < 1e-4 ? "ok" : "FAIL");
    ok = ok && c.max_rel_err < 1e-4;
  }
  std::printf("gradcheck %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_params(const Args& args) {
  ModelConfig cfg = load_and_echo_config(args.config);
  Model model(cfg);
  std::cout << "parameters=" << model.param_count() << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", model.param_megabytes());
  std::cout << "megabytes=" << buf << '\n';
  return 0;
}

int cmd_bench(const Args& args) {
  ModelConfig cfg = load_and_echo_config(args.config);
  if (args.points > 0) {
    cfg.input_points = args.points;
    cfg.validate();
  }
  Model model(cfg);
  model.init_params(args.seed);
  SynthConfig sc;
  sc.classes = {ShapeClass::kSphere};
  sc.n_points = cfg.input_points;
  sc.samples_per_class = 1;
  sc.seed = args.seed;
  const Dataset ds = synth_shapes(sc);
  const auto entries = model.benchmark(ds.samples[0], args.repeat);
  std::cout << "block,repeats,total_ms,mean_ms\n";
  for (const auto& e : entries) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%d,%.3f,%.3f", e.block.c_str(),
                  args.repeat, e.total_ms, e.total_ms / args.repeat);
    std::cout << buf << '\n';
  }
  return 0;
}

int cmd_synth(const Args& args) {
  SynthConfig sc;
  sc.classes = parse_classes(args.classes, Task::kClassification);
  sc.n_points = args.n_points;
  sc.samples_per_class = args.synth_samples;
  sc.seed = args.seed;
  const Dataset ds = synth_shapes(sc);
  fs::create_directories(args.out);
  std::ofstream manifest(fs::path(args.out) / "manifest.txt");
  if (!manifest) throw ValueError("cannot write manifest in '" + args.out + "'");
  int index = 0;
  for (const PointCloud& pc : ds.samples) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04d.xyz",
                  shape_name(sc.classes[pc.class_label]), index++);
    save_xyz(pc, (fs::path(args.out) / name).string());
    manifest << name << ',' << pc.class_label << '\n';
  }
  std::cout << "wrote " << ds.samples.size() << " samples to " << args.out
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3DPCT: point-cloud transformer training and inspection"};
  app.require_subcommand(1);
  Args args;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "model config file")->required();
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", args.seed, "deterministic seed");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", args.data, "'synth' or a manifest directory")
        ->required();
    sub->add_option("--synth-samples", args.synth_samples,
                    "samples per class for synthetic data");
    sub->add_option("--synth-classes", args.classes,
                    "comma list of sphere,cube,torus,cylinder");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  add_config(train_cmd);
  add_data(train_cmd);
  add_seed(train_cmd);
  train_cmd->add_option("--epochs", args.epochs, "training epochs");
  train_cmd->add_option("--batch", args.batch, "batch size");
  train_cmd->add_option("--out", args.out, "checkpoint path")
      ->default_val("model.ckpt");
  train_cmd->add_option("--log", args.log_csv, "CSV log path")
      ->default_val("train_log.csv");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(eval_cmd);
  add_data(eval_cmd);
  add_seed(eval_cmd);
  eval_cmd->add_option("--ckpt", args.ckpt, "checkpoint path")->required();

  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_config(grad_cmd);
  add_seed(grad_cmd);
  grad_cmd->add_option("--scale", args.scale, "suite scale (tiny)");

  CLI::App* params_cmd =
      app.add_subcommand("params", "parameter count and size estimate");
  add_config(params_cmd);

  CLI::App* bench_cmd = app.add_subcommand("bench", "per-block forward timings");
  add_config(bench_cmd);
  add_seed(bench_cmd);
  bench_cmd->add_option("--points", args.points, "override input point count");
  bench_cmd->add_option("--repeat", args.repeat, "forward repetitions");

  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic labeled dataset");
  add_seed(synth_cmd);
  synth_cmd->add_option("--classes", args.classes,
                        "comma list of sphere,cube,torus,cylinder");
  synth_cmd->add_option("--n-points", args.n_points, "points per sample");
  synth_cmd->add_option("--samples-per-class", args.synth_samples,
                        "samples per class");
  synth_cmd->add_option("--out", args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  }

  try {
    if (app.got_subcommand(train_cmd)) return cmd_train(args);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(args);
    if (app.got_subcommand(grad_cmd)) return cmd_gradcheck(args);
    if (app.got_subcommand(params_cmd)) return cmd_params(args);
    if (app.got_subcommand(bench_cmd)) return cmd_bench(args);
    if (app.got_subcommand(synth_cmd)) return cmd_synth(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
