#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "run_config.hpp"
#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"
#include "swarmloc/sim/dataset.hpp"

namespace swarmloc::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key = value file with [sections]");
  sub->add_option("--set", c.overrides, "override, section.key=value (repeatable)");
}

RunConfig resolve(const Common& c, const std::string& command, std::ostream& err) {
  RunConfig rc = load_run_config(c.config, c.overrides);
  err << "# swarmloc " << command << "\n" << resolved_ini(rc);
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string file_tag(const std::string& method) {
  std::string s = method;
  for (char& ch : s) {
    if (ch == '+') ch = '_';
  }
  return s;
}

std::string default_prefix(const std::string& data, const std::string& tag) {
  fs::path p(data);
  return (p.parent_path() / (p.stem().string() + "_" + tag)).string();
}

std::optional<matchnet::NetworkParams> load_ckpt(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return matchnet::NetworkParams::load(path);
}

int cmd_gen(const Common& common, const std::string& out_path, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(common, "gen", err);
  const sim::Dataset data = sim::generate_dataset(rc.sim);
  sim::write_dataset(data, out_path);
  nlohmann::ordered_json j;
  j["path"] = out_path;
  j["n_robots"] = data.n_robots();
  j["n_frames"] = data.n_frames();
  j["seed"] = data.config.seed;
  j["max_det"] = data.config.max_det();
  j["trees"] = data.trees.size();
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_train(const Common& common, const std::string& data_path, const std::string& val_path,
              const std::string& out_dir, const std::string& init, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(common, "train", err);
  const sim::Dataset data = sim::read_dataset(data_path);
  std::optional<sim::Dataset> val;
  if (!val_path.empty()) val = sim::read_dataset(val_path);
  matchnet::NetworkParams params;
  if (!init.empty()) {
    params = matchnet::NetworkParams::load(init);
  } else {
    matchnet::MatchNetConfig net = rc.net;
    if (net.max_det == 0) net.max_det = data.config.max_det();
    params = matchnet::NetworkParams::init(net, rc.train.seed);
  }
  rc.train.out_dir = out_dir;
  fs::create_directories(out_dir);
  RunConfig logged = rc;
  logged.net = params.config;
  write_text(fs::path(out_dir) / "config.ini", resolved_ini(logged));
  const train::TrainStats st = train::train(params, data, val ? &*val : nullptr, rc.train, &out);
  nlohmann::ordered_json j;
  j["best_epoch"] = st.best_epoch;
  j["steps"] = st.steps;
  j["instances_used"] = st.instances_used;
  j["instances_skipped"] = st.instances_skipped;
  j["frames_skipped"] = st.frames_skipped;
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const Common& common, const std::string& method_name, const std::string& data_path,
             const std::string& ckpt, std::string prefix, std::ostream& out, std::ostream& err) {
  const eval::Method method = eval::parse_method(method_name);
  RunConfig rc = resolve(common, "eval", err);
  const sim::Dataset data = sim::read_dataset(data_path);
  const auto params = load_ckpt(ckpt);
  const eval::EvalReport rep = eval::run_pipeline(data, method, params ? &*params : nullptr, rc.eval);
  if (prefix.empty()) prefix = default_prefix(data_path, file_tag(method_name));
  eval::write_report(rep, prefix);
  out << eval::report_to_json(rep, false) << "\n";
  return kExitOk;
}

int cmd_run(const Common& common, const std::string& data_path, const std::string& ckpt, std::string prefix,
            std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(common, "run", err);
  const sim::Dataset data = sim::read_dataset(data_path);
  const auto params = load_ckpt(ckpt);
  const runtime::DecentralizedReport rep = runtime::run_decentralized(data, params ? &*params : nullptr, rc.runtime);
  if (prefix.empty()) prefix = default_prefix(data_path, "run");
  runtime::write_decentralized(rep, prefix);
  out << runtime::decentralized_to_json(rep) << "\n";
  return kExitOk;
}

int cmd_export(const Common& common, const std::string& data_path, const std::string& ckpt,
               std::vector<std::string> methods, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(common, "export-plots", err);
  const sim::Dataset data = sim::read_dataset(data_path);
  const auto params = load_ckpt(ckpt);
  if (methods.empty()) {
    methods = {"pvo", "simple", "simple+pgo"};
    if (params) methods.insert(methods.end(), {"learned", "learned+pgo"});
  }
  rc.eval.keep_positions = true;
  std::vector<eval::EvalReport> reps;
  for (const std::string& m : methods) {
    reps.push_back(eval::run_pipeline(data, eval::parse_method(m), params ? &*params : nullptr, rc.eval));
  }
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const int n = data.n_robots();
  const int first = rc.eval.first_frame;
  const std::size_t frames = reps.front().frames.size();

  std::ofstream rpe(dir / "rpe_time.csv");
  std::ofstream traj(dir / "trajectory.csv");
  if (!rpe || !traj) throw Error("cannot write into " + out_dir);
  rpe << "frame";
  traj << "frame,robot,gt_x,gt_y,gt_z";
  for (const std::string& m : methods) {
    rpe << "," << m;
    traj << "," << m << "_x," << m << "_y," << m << "_z";
  }
  rpe << "\n";
  traj << "\n";
  for (std::size_t f = 0; f < frames; ++f) {
    const int frame = reps.front().frames[f].frame;
    rpe << frame;
    for (const eval::EvalReport& r : reps) rpe << "," << format_double(r.frames[f].rpe);
    rpe << "\n";
    const sim::SwarmFrame& fr = data.frames[first + f];
    for (int j = 0; j < n; ++j) {
      const Vec3 g = relative(fr.gt[0], fr.gt[j]).t();
      traj << frame << "," << j << "," << format_double(g.x()) << "," << format_double(g.y()) << "," << format_double(g.z());
      for (const eval::EvalReport& r : reps) {
        const Vec3& e = r.positions[f][j];
        traj << "," << format_double(e.x()) << "," << format_double(e.y()) << "," << format_double(e.z());
      }
      traj << "\n";
    }
  }
  for (std::size_t k = 0; k < methods.size(); ++k) {
    std::ofstream heat(dir / ("heatmap_" + file_tag(methods[k]) + ".csv"));
    if (!heat) throw Error("cannot write into " + out_dir);
    heat << "observer";
    for (int j = 0; j < n; ++j) heat << "," << j;
    heat << "\n";
    for (int i = 0; i < n; ++i) {
      heat << i;
      for (int j = 0; j < n; ++j) heat << "," << format_double(reps[k].pair_rpe(i, j));
      heat << "\n";
    }
  }
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  for (const eval::EvalReport& r : reps) summary[r.method] = r.rpe_rmse;
  out << summary.dump() << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-robot UWB + bearing relative localization", "swarmloc"};
  app.require_subcommand(1);

  Common common;
  std::string out_path, data, val, out_dir, init, method, ckpt, prefix;
  std::vector<std::string> methods;

  CLI::App* gen = app.add_subcommand("gen", "generate a simulated dataset (JSON Lines)");
  add_common(gen, common);
  gen->add_option("--out", out_path, "dataset path")->required();

  CLI::App* tr = app.add_subcommand("train", "train the match network");
  add_common(tr, common);
  tr->add_option("--data", data, "training dataset")->required();
  tr->add_option("--val", val, "validation dataset (default: tail of --data)");
  tr->add_option("--out-dir", out_dir, "checkpoints, metrics.csv and config.ini")->required();
  tr->add_option("--init", init, "start from this checkpoint");

  CLI::App* ev = app.add_subcommand("eval", "centralized evaluation of one method");
  add_common(ev, common);
  ev->add_option("--method", method, "pvo, simple, simple+pgo, learned, learned+pgo")->required();
  ev->add_option("--data", data, "dataset")->required();
  ev->add_option("--ckpt", ckpt, "checkpoint for the learned methods");
  ev->add_option("--out", prefix, "output prefix for <prefix>.json and CSVs");

  CLI::App* run = app.add_subcommand("run", "decentralized run, one node per robot");
  add_common(run, common);
  run->add_option("--data", data, "dataset")->required();
  run->add_option("--ckpt", ckpt, "checkpoint; Simple Match front end without it");
  run->add_option("--out", prefix, "output prefix");

  CLI::App* ex = app.add_subcommand("export-plots", "CSV series for trajectories, RPE over time and heat maps");
  add_common(ex, common);
  ex->add_option("--data", data, "dataset")->required();
  ex->add_option("--ckpt", ckpt, "checkpoint for the learned methods");
  ex->add_option("--methods", methods, "methods to export (default: all available)");
  ex->add_option("--out-dir", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(common, out_path, out, err);
    if (tr->parsed()) return cmd_train(common, data, val, out_dir, init, out, err);
    if (ev->parsed()) return cmd_eval(common, method, data, ckpt, prefix, out, err);
    if (run->parsed()) return cmd_run(common, data, ckpt, prefix, out, err);
    if (ex->parsed()) return cmd_export(common, data, ckpt, methods, out_dir, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace swarmloc::cli
