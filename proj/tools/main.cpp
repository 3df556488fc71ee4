// ccfpse command-line driver: make-data, train, generate, eval, gradcheck, bench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ccfpse/bench.hpp"
#include "ccfpse/config.hpp"
#include "ccfpse/data.hpp"
#include "ccfpse/gradcheck.hpp"
#include "ccfpse/metrics.hpp"
#include "ccfpse/trainer.hpp"

namespace fs = std::filesystem;
using namespace ccfpse;

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailed = 1;
constexpr int kUsageError = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

ExperimentConfig resolve(const Common& c, const char* seed_key) {
  auto overrides = c.overrides;
  if (c.seed) overrides.push_back(std::string(seed_key) + "=" + std::to_string(*c.seed));
  std::optional<fs::path> path;
  if (!c.config.empty()) path = fs::path(c.config);
  return load_config(path, overrides);
}

void print_metrics(const SegMetrics& m, std::ostream& os) {
  os << std::fixed << std::setprecision(4) << "mIoU " << m.miou << "  accuracy " << m.accuracy << '\n';
  for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
    os << "  class " << c << " IoU ";
    if (m.per_class_iou[c]) {
      os << *m.per_class_iou[c];
    } else {
      os << "n/a";
    }
    os << '\n';
  }
  os.unsetf(std::ios::fixed);
}

void write_metrics_csv(const fs::path& path, const SegMetrics& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,value\nmiou," << m.miou << "\naccuracy," << m.accuracy << '\n';
  for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
    out << "iou_" << c << ',';
    if (m.per_class_iou[c]) out << *m.per_class_iou[c];
    out << '\n';
  }
}

int cmd_make_data(const Common& common) {
  const auto cfg = resolve(common, "data.seed");
  const fs::path out = common.out.empty() ? fs::path("data") : fs::path(common.out);
  const auto samples = generate_dataset(cfg.data.task, cfg.data.count, cfg.data.seed);
  const auto manifest = write_dataset(out, samples);
  std::cout << "wrote " << samples.size() << " samples, manifest " << manifest.string() << '\n';
  return kOk;
}

int cmd_train(const Common& common, const std::string& resume, bool no_eval) {
  const fs::path out = common.out.empty() ? fs::path("run") : fs::path(common.out);
  std::unique_ptr<TrainState> state;
  if (!resume.empty()) {
    state = load_checkpoint(resume);
    // Only schedule-type overrides make sense when resuming; the stored config wins otherwise.
    if (!common.overrides.empty()) {
      auto doc = to_json(state->config);
      for (const auto& o : common.overrides) apply_override(doc, o);
      state->config.train.steps = config_from_json(doc).train.steps;
    }
  } else {
    state = std::make_unique<TrainState>(resolve(common, "train.seed"));
  }
  const auto train = training_set(state->config);
  const auto eval = evaluation_set(state->config);
  RunOptions options;
  options.out_dir = out;
  options.evaluate = !no_eval;
  const auto total = state->config.train.steps;
  options.on_step = [total](std::int64_t step, const StepLosses& l) {
    if (step % 100 == 0 || step == total) {
      std::fprintf(stderr, "step %lld/%lld  loss_d %.4f  loss_g %.4f  adv %.4f  perc %.4f  fm %.4f\n",
                   static_cast<long long>(step), static_cast<long long>(total), l.loss_d, l.loss_g, l.adv, l.perc,
                   l.fm);
    }
  };
  const auto summary = run_training(*state, train, eval, options);
  std::cout << "trained " << summary.steps << " steps in " << std::fixed << std::setprecision(1) << summary.seconds
            << " s; log " << summary.log.string() << ", checkpoint " << summary.checkpoint.string() << '\n';
  std::cout.unsetf(std::ios::fixed);
  if (summary.metrics) {
    print_metrics(*summary.metrics, std::cout);
    write_metrics_csv(out / "metrics.csv", *summary.metrics);
  }
  return kOk;
}

int cmd_generate(const Common& common, const std::string& checkpoint, const std::string& manifest) {
  auto state = load_checkpoint(checkpoint);
  const fs::path out = common.out.empty() ? fs::path("generated") : fs::path(common.out);
  std::vector<LabelMap> labels;
  if (!manifest.empty()) {
    for (const auto& e : read_manifest(manifest)) labels.push_back(read_pgm(e.label, state->config.data.task.num_labels));
  } else {
    for (const auto& s : evaluation_set(state->config)) labels.push_back(s.label);
  }
  const std::uint64_t seed = common.seed.value_or(derive_seed(state->config.train.seed, 7));
  const auto images = generate_images(*state, labels, seed);
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << i << ".ppm";
    write_ppm(out / "images" / name.str(), images[i]);
  }
  write_ppm(out / "grid.ppm", make_grid(images, 8));
  std::cout << "wrote " << images.size() << " images to " << (out / "images").string() << '\n';
  return kOk;
}

int cmd_eval(const Common& common, const std::string& manifest, const std::string& checkpoint) {
  SegMetrics metrics;
  if (!checkpoint.empty()) {
    auto state = load_checkpoint(checkpoint);
    const auto eval = manifest.empty() ? evaluation_set(state->config)
                                       : load_dataset(manifest, state->config.data.task.num_labels);
    metrics = evaluate(*state, eval, common.seed.value_or(derive_seed(state->config.train.seed, 7)));
  } else {
    if (manifest.empty()) throw ArgumentError("eval needs --manifest (and optionally --checkpoint)");
    const auto cfg = resolve(common, "train.seed");
    ConfusionMatrix cm(cfg.data.task.num_labels);
    for (const auto& s : load_dataset(manifest, cfg.data.task.num_labels)) {
      cm.add(segment_by_palette(s.image, cfg.data.task), s.label);
    }
    metrics = cm.metrics();
  }
  print_metrics(metrics, std::cout);
  if (!common.out.empty()) {
    fs::create_directories(common.out);
    write_metrics_csv(fs::path(common.out) / "metrics.csv", metrics);
  }
  return kOk;
}

int cmd_gradcheck(const Common& common, const std::string& scope, bool inject_fault) {
  std::vector<GradCheckScope> scopes;
  if (scope == "all") {
    scopes = {GradCheckScope::kPrimitives, GradCheckScope::kConditionalOps, GradCheckScope::kEndToEnd};
  } else {
    scopes = {parse_gradcheck_scope(scope)};
  }
  bool ok = true;
  for (auto s : scopes) {
    const auto report = run_gradcheck_suite(s, common.seed.value_or(7), inject_fault);
    for (const auto& c : report.cases) {
      std::printf("%-4s %-44s rel %.3e  abs %.3e  (%lld probes, tol %.0e)\n", c.result.passed ? "ok" : "FAIL",
                  c.name.c_str(), c.result.max_rel_error, c.result.max_abs_error,
                  static_cast<long long>(c.result.checked), c.tolerance);
    }
    ok = ok && report.passed();
  }
  std::printf("%s\n", ok ? "gradcheck passed" : "gradcheck FAILED");
  return ok ? kOk : kVerificationFailed;
}

int cmd_bench(const Common& common, BenchConfig bench) {
  if (common.seed) bench.seed = *common.seed;
  const auto report = bench_ops(bench);
  if (common.out.empty()) {
    write_bench_csv(std::cout, report);
  } else {
    fs::create_directories(common.out);
    const auto path = fs::path(common.out) / "bench.csv";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_bench_csv(out, report);
    std::cout << "wrote " << path.string() << '\n';
  }
  return kOk;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_option("--seed", c.seed, "Seed override");
  sub->add_option("--set", c.overrides, "Dotted KEY=VALUE config override (repeatable)")->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layout-conditioned image synthesis with predicted conditional convolutions"};
  app.require_subcommand(1);
  Common common;

  auto* make_data = app.add_subcommand("make-data", "Write a synthetic PGM/PPM dataset and manifest");
  add_common(make_data, common);

  std::string resume;
  bool no_eval = false;
  auto* train = app.add_subcommand("train", "Train generator, weight net and discriminator");
  add_common(train, common);
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_flag("--no-eval", no_eval, "Skip the held-out evaluation after training");

  std::string checkpoint;
  std::string manifest;
  auto* generate = app.add_subcommand("generate", "Synthesize images for label maps from a checkpoint");
  add_common(generate, common);
  generate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  generate->add_option("--manifest", manifest, "Manifest whose label maps are used (default: eval layouts)");

  auto* eval = app.add_subcommand("eval", "Segment images by palette and report mIoU / accuracy");
  add_common(eval, common);
  eval->add_option("--manifest", manifest, "Manifest of (label, image) pairs");
  eval->add_option("--checkpoint", checkpoint, "Generate the images from this checkpoint first");

  std::string scope = "all";
  bool inject_fault = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suites in 64-bit precision");
  add_common(gradcheck, common);
  gradcheck->add_option("--scope", scope, "primitives, ccops, endtoend or all")
      ->check(CLI::IsMember({"primitives", "ccops", "endtoend", "all"}));
  gradcheck->add_flag("--inject-fault", inject_fault, "Add an op with a wrong gradient rule");

  BenchConfig bench;
  auto* bench_cmd = app.add_subcommand("bench", "Cost of factorized vs naive predicted convolution");
  add_common(bench_cmd, common);
  bench_cmd->add_option("-C,--channels-in", bench.channels_in);
  bench_cmd->add_option("-D,--channels-out", bench.channels_out);
  bench_cmd->add_option("-k,--kernel", bench.kernel);
  bench_cmd->add_option("-H,--height", bench.height);
  bench_cmd->add_option("-W,--width", bench.width);
  bench_cmd->add_option("--head-channels", bench.head_channels);
  bench_cmd->add_option("--repeats", bench.repeats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsageError;
  }

  try {
    if (*make_data) return cmd_make_data(common);
    if (*train) return cmd_train(common, resume, no_eval);
    if (*generate) return cmd_generate(common, checkpoint, manifest);
    if (*eval) return cmd_eval(common, manifest, checkpoint);
    if (*gradcheck) return cmd_gradcheck(common, scope, inject_fault);
    if (*bench_cmd) return cmd_bench(common, bench);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kVerificationFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}
