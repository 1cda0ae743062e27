#include "lrnet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "lrnet/gradcheck.hpp"
#include "lrnet/infer.hpp"
#include "lrnet/io.hpp"
#include "lrnet/train.hpp"
#include "lrnet/weights_io.hpp"

namespace lrnet {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 1;
    case ErrorKind::data:
    case ErrorKind::shape:
      return 2;
    case ErrorKind::numeric:
      return 3;
  }
  return 2;
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::data, "cannot create directory '" + dir + "'");
}

std::vector<fs::path> pgm_files(const std::string& dir) {
  require(fs::is_directory(dir), ErrorKind::data, "'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string name_list(const std::vector<std::string>& names) {
  std::string s;
  for (std::size_t i = 0; i < names.size() && i < 10; ++i) s += (i ? ", " : "") + names[i];
  if (names.size() > 10) s += ", ... (" + std::to_string(names.size()) + " total)";
  return s;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, std::ostream& out) {
  ensure_dir(cfg.dataset);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < cfg.synth.count; ++i) {
    const Sample s = synth_sample(cfg.synth, i);
    char image_name[32], mask_name[32];
    std::snprintf(image_name, sizeof image_name, "image_%04zu.pgm", i);
    std::snprintf(mask_name, sizeof mask_name, "mask_%04zu.pgm", i);
    write_image((fs::path(cfg.dataset) / image_name).string(), s.image);
    write_mask((fs::path(cfg.dataset) / mask_name).string(), s.mask);
    entries.push_back({split_for_index(i), image_name, mask_name});
  }
  write_manifest(cfg.dataset, entries);
  const auto n_test = static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [](const ManifestEntry& e) { return e.split == "test"; }));
  out << "wrote " << entries.size() << " samples to " << cfg.dataset << " (" << entries.size() - n_test
      << " train / " << n_test << " test)\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const auto loaded = load_dataset(cfg.dataset, "train");
  require(!loaded.empty(), ErrorKind::data, "dataset '" + cfg.dataset + "' has no training samples");
  std::vector<Sample> samples;
  samples.reserve(loaded.size());
  for (const auto& l : loaded) samples.push_back(l.sample);

  ensure_dir(cfg.output);
  {
    std::ofstream cfg_out(fs::path(cfg.output) / "config.txt", std::ios::trunc);
    cfg_out << serialize_config(cfg);
  }
  TrainOptions options;
  options.out_dir = cfg.output;
  options.resume = cfg.resume;
  options.on_epoch = [&out](const EpochStats& e) { out << format_epoch(e) << std::endl; };
  const TrainResult r = train(cfg.model, cfg.train, samples, options);
  out << "best epoch " << r.best_epoch << "; weights in " << (fs::path(cfg.output) / kBestWeights).string() << " and "
      << (fs::path(cfg.output) / kLastWeights).string() << "\n";
}

void cmd_infer(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.weights.empty(), ErrorKind::config, "infer needs --weights");
  require(fs::exists(cfg.weights), ErrorKind::data, "weights file '" + cfg.weights + "' does not exist");
  LrNet<float> model(cfg.model);
  model.load_store(load_weights(cfg.weights, cfg.model));

  // (input image path, output file name)
  std::vector<std::pair<fs::path, std::string>> jobs;
  if (!cfg.input.empty()) {
    if (fs::is_directory(cfg.input)) {
      for (const auto& p : pgm_files(cfg.input)) jobs.emplace_back(p, p.filename().string());
    } else {
      require(fs::exists(cfg.input), ErrorKind::data, "input '" + cfg.input + "' does not exist");
      jobs.emplace_back(cfg.input, fs::path(cfg.input).filename().string());
    }
  } else {
    for (const auto& e : read_manifest(cfg.dataset)) {
      if (cfg.split == "all" || e.split == cfg.split) jobs.emplace_back(fs::path(cfg.dataset) / e.image, e.mask);
    }
  }
  ensure_dir(cfg.output);
  for (const auto& [path, name] : jobs) {
    const Image image = read_image(path.string());
    const Mask mask = threshold_mask(sliding_infer(image, model, cfg.threads), cfg.tau);
    write_mask((fs::path(cfg.output) / name).string(), mask);
  }
  out << "wrote " << jobs.size() << " masks to " << cfg.output << "\n";
}

EvalReport cmd_eval(const RunConfig& cfg, std::ostream& out) {
  require(!cfg.pred.empty(), ErrorKind::config, "eval needs --pred");
  std::map<std::string, fs::path> pred, gt;
  for (const auto& p : pgm_files(cfg.pred)) pred.emplace(p.filename().string(), p);
  if (!cfg.gt.empty()) {
    for (const auto& p : pgm_files(cfg.gt)) gt.emplace(p.filename().string(), p);
  } else {
    for (const auto& e : read_manifest(cfg.dataset)) {
      if (cfg.split == "all" || e.split == cfg.split) gt.emplace(fs::path(e.mask).filename().string(), fs::path(cfg.dataset) / e.mask);
    }
  }
  std::vector<std::string> unpaired;
  for (const auto& [name, p] : pred) {
    if (!gt.count(name)) unpaired.push_back("prediction " + name);
  }
  for (const auto& [name, p] : gt) {
    if (!pred.count(name)) unpaired.push_back("ground truth " + name);
  }
  require(unpaired.empty(), ErrorKind::data, "unpaired files: " + name_list(unpaired));

  std::vector<Mask> pm, gm;
  for (const auto& [name, p] : pred) {
    pm.push_back(read_mask(p.string()));
    gm.push_back(read_mask(gt.at(name).string()));
  }
  const auto window = static_cast<std::size_t>(cfg.model.window);
  const EvalReport report = evaluate(pm, gm, count_params(cfg.model), count_flops(cfg.model, window, window));
  out << report.table() << report.record() << "\n";
  ensure_dir(cfg.output);
  std::ofstream rec(fs::path(cfg.output) / "eval_report.txt", std::ios::trunc);
  rec << report.record() << "\n";
  require(static_cast<bool>(rec.flush()), ErrorKind::data, "cannot write eval report in '" + cfg.output + "'");
  return report;
}

Score cmd_score(double iou_percent, double pd_percent, double params_m, double flops_g, std::ostream& out) {
  const Score s = score(iou_percent, pd_percent, params_m, flops_g);
  char buf[128];
  std::snprintf(buf, sizeof buf, "S_p=%.2f S_e=%.2f S_pe=%.2f\n", s.s_p, s.s_e, s.s_pe);
  out << buf;
  return s;
}

bool cmd_gradcheck(std::size_t seeds, int window, bool corrupt_backward, std::ostream& out) {
  GradSuiteOptions opt;
  opt.seeds = seeds;
  opt.model_window = window;
  opt.corrupt_backward = corrupt_backward;
  bool all = true;
  const GradCheckResult* worst = nullptr;
  const auto results = run_grad_suite(opt, [&](const GradCheckResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-4s %-30s max_rel=%.3e tol=%.0e probes=%zu excluded=%zu worst=%s\n",
                  r.pass ? "ok" : "FAIL", r.name.c_str(), r.max_rel_error, r.tolerance, r.probes, r.excluded,
                  r.worst.c_str());
    out << buf << std::flush;
    all = all && r.pass;
  });
  for (const auto& r : results) {
    if (!worst || r.max_rel_error / r.tolerance > worst->max_rel_error / worst->tolerance) worst = &r;
  }
  if (worst) out << "worst: " << worst->name << " at " << worst->worst << " (" << worst->max_rel_error << ")\n";
  out << (all ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return all;
}

namespace {

struct SharedFlags {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::string> ablate;
  std::map<std::string, std::string> values;  // config key -> text
  bool resume = false;
};

void add_shared(CLI::App* sub, SharedFlags& f) {
  sub->add_option("--config", f.config, "key=value config file");
  sub->add_option("--set", f.sets, "override one config key (key=value), repeatable");
  sub->add_option("--ablate", f.ablate, "no-lfea, no-lfd, no-rft or no-sbam (repeatable)")
      ->check(CLI::IsMember({"no-lfea", "no-lfd", "no-rft", "no-sbam"}));
  const std::pair<const char*, const char*> keyed[] = {
      {"--seed", "seed"},          {"--threads", "threads"},     {"--window", "model.window"},
      {"--channel-mult", "model.channel_mult"},                  {"--tau", "tau"},
      {"--dataset", "dataset"},    {"--weights", "weights"},     {"--output", "output"},
      {"--input", "input"},        {"--pred", "pred"},           {"--gt", "gt"},
      {"--split", "split"},        {"--epochs", "train.epochs"}, {"--batch-size", "train.batch_size"},
      {"--lr", "train.lr"},        {"--count", "synth.count"},
  };
  for (const auto& [flag, key] : keyed) {
    sub->add_option_function<std::string>(
        flag, [&f, key = std::string(key)](const std::string& v) { f.values[key] = v; }, "sets " + std::string(key));
  }
  sub->add_flag("--resume", f.resume, "continue training from the output directory");
}

RunConfig build_config(const SharedFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) apply_config_file(cfg, f.config);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    require(eq != std::string::npos, ErrorKind::config, "--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, value] : f.values) set_config_value(cfg, key, value);
  for (const auto& a : f.ablate) apply_ablation(cfg.model, a);
  if (f.resume) cfg.resume = true;
  finalize_config(cfg);
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"lrnet: lightweight infrared small-target segmentation"};
  app.require_subcommand(1);
  SharedFlags flags;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* train_cmd = app.add_subcommand("train", "train on the dataset's train split");
  auto* infer = app.add_subcommand("infer", "tiled inference to binary masks");
  auto* eval = app.add_subcommand("eval", "metrics and score for predicted masks");
  for (auto* s : {synth, train_cmd, infer, eval}) add_shared(s, flags);

  auto* score_cmd = app.add_subcommand("score", "score from IoU, Pd, params (M) and FLOPs (G)");
  double sv[4] = {0, 0, 0, 0};
  score_cmd->add_option("iou", sv[0])->required();
  score_cmd->add_option("pd", sv[1])->required();
  score_cmd->add_option("params", sv[2])->required();
  score_cmd->add_option("flops", sv[3])->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every layer and the model");
  std::size_t seeds = 10;
  int grad_window = 32;
  bool corrupt = false;
  grad->add_option("--seeds", seeds, "random seeds per check");
  grad->add_option("--window", grad_window, "model window for the full-model check");
  grad->add_flag("--corrupt-backward", corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (score_cmd->parsed()) {
      cmd_score(sv[0], sv[1], sv[2], sv[3], out);
      return 0;
    }
    if (grad->parsed()) return cmd_gradcheck(seeds, grad_window, corrupt, out) ? 0 : 3;
    const RunConfig cfg = build_config(flags);
    if (synth->parsed()) cmd_synth(cfg, out);
    if (train_cmd->parsed()) cmd_train(cfg, out);
    if (infer->parsed()) cmd_infer(cfg, out);
    if (eval->parsed()) cmd_eval(cfg, out);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace lrnet
