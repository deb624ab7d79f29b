#include "mmadapt_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mmadapt/adaptation.hpp"
#include "mmadapt/binary_io.hpp"
#include "mmadapt/checkpoint.hpp"
#include "mmadapt/ensemble.hpp"
#include "mmadapt/errors.hpp"
#include "mmadapt/metrics.hpp"
#include "mmadapt/pretrain.hpp"
#include "mmadapt/rng.hpp"
#include "mmadapt/synthbench.hpp"
#include "mmadapt_cli/png.hpp"

namespace mmadapt::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Settings of one command invocation. Paths live in `inputs` and `output`; only
// command, seed, params and provenance enter the fingerprint stored in checkpoints.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  json params = json::object();
  json inputs = json::object();
  json provenance = json::object();
  std::string output;

  std::string fingerprinted() const {
    return json{{"command", command}, {"seed", seed}, {"params", params}, {"provenance", provenance}}.dump();
  }
  json to_json() const {
    return {{"command", command}, {"seed", seed},   {"params", params}, {"inputs", inputs},
            {"provenance", provenance}, {"output", output}, {"fingerprint", hex64(fnv1a(fingerprinted()))}};
  }
};

// Collects flag values as strings; typed against the defaults when merged.
struct Invocation {
  std::string name;
  json defaults;
  std::map<std::string, std::string> flags;
  std::map<std::string, std::string> input_flags;
  std::vector<std::string> teachers;
  std::string config_file;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool eval = false;
};

json parse_typed(const std::string& key, const json& like, const std::string& raw) {
  try {
    std::size_t used = 0;
    if (like.is_string()) return raw;
    if (like.is_boolean()) {
      if (raw == "true" || raw == "1") return true;
      if (raw == "false" || raw == "0") return false;
      throw std::invalid_argument(raw);
    }
    if (like.is_number_unsigned() || like.is_number_integer()) {
      if (raw.empty() || raw[0] == '-') throw std::invalid_argument(raw);
      const auto v = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument(raw);
      return v;
    }
    if (like.is_null() && raw == "auto") return nullptr;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("invalid value '" + raw + "' for " + key);
  }
}

void check_type(const std::string& key, const json& like, const json& v) {
  const bool ok = like.is_null() ? (v.is_null() || v.is_number())
                  : like.is_string() ? v.is_string()
                  : like.is_boolean() ? v.is_boolean()
                  : like.is_number_unsigned() ? v.is_number_unsigned()
                  : like.is_number() ? v.is_number()
                                     : true;
  if (!ok) throw ConfigError("config value for '" + key + "' has the wrong type");
}

RunConfig resolve(const Invocation& inv) {
  RunConfig rc;
  rc.command = inv.name;
  rc.params = inv.defaults;
  if (!inv.config_file.empty()) {
    json file;
    try {
      file = json::parse(read_text(inv.config_file));
    } catch (const json::exception& e) {
      throw ConfigError("config " + inv.config_file + ": " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (file.contains("command") && file["command"] != inv.name) {
      throw ConfigError("config " + inv.config_file + " is for command '" + file["command"].get<std::string>() + "'");
    }
    if (file.contains("seed")) rc.seed = file["seed"].get<std::uint64_t>();
    if (file.contains("params")) {
      for (const auto& [k, v] : file["params"].items()) {
        if (!rc.params.contains(k)) throw ConfigError("config " + inv.config_file + ": unknown parameter '" + k + "'");
        check_type(k, inv.defaults[k], v);
        rc.params[k] = v;
      }
    }
    if (file.contains("inputs")) rc.inputs = file["inputs"];
    if (file.contains("output")) rc.output = file["output"].get<std::string>();
  }
  for (const auto& [k, raw] : inv.flags) rc.params[k] = parse_typed(k, inv.defaults[k], raw);
  for (const auto& [k, v] : inv.input_flags) rc.inputs[k] = v;
  if (!inv.teachers.empty()) rc.inputs["teachers"] = inv.teachers;
  if (inv.seed) rc.seed = *inv.seed;
  if (!inv.out.empty()) rc.output = inv.out;
  return rc;
}

std::string input(const RunConfig& rc, const std::string& key) {
  if (!rc.inputs.contains(key) || !rc.inputs[key].is_string() || rc.inputs[key].get<std::string>().empty()) {
    throw ConfigError(rc.command + ": missing --" + key);
  }
  return rc.inputs[key].get<std::string>();
}

fs::path output_dir(const RunConfig& rc) {
  if (rc.output.empty()) throw ConfigError(rc.command + ": missing --out");
  fs::create_directories(rc.output);
  return rc.output;
}

void write_run_config(const RunConfig& rc, const fs::path& dir) {
  write_text(dir / "config.json", rc.to_json().dump(2) + "\n");
}

std::vector<std::size_t> split_indices(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "val") return ds.val;
  if (split == "test") return ds.test;
  if (split == "all") {
    std::vector<std::size_t> all(ds.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw ConfigError("unknown split '" + split + "' (train, val, test, all)");
}

std::vector<int> foreground(const SegNet& net) {
  return {net.class_binding().begin() + 1, net.class_binding().end()};
}

MetricReport evaluate(const SegNet& net, const Dataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw DataError("evaluation split is empty");
  const auto truths = ds.truths(idx);
  std::vector<LabelMap> preds;
  for (auto i : idx) preds.push_back(predict_labels(net, ds.samples[i].image));
  return evaluate_predictions(preds, truths, foreground(net));
}

void write_metrics(const MetricReport& r, const fs::path& dir, const std::string& stem) {
  write_text(dir / (stem + ".csv"), r.to_csv());
  write_text(dir / (stem + ".json"), r.to_json());
}

std::string plane_name(const char* prefix, std::size_t i, const char* ext) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(4) << std::setfill('0') << i << ext;
  return os.str();
}

void print_summary(std::ostream& out, const std::string& label, const MetricReport& r) {
  out << label << ':';
  for (const auto& c : r.classes) out << ' ' << c.name << " dsc=" << c.dsc << " asd=" << c.asd;
  out << " | mean dsc=" << r.mean_dsc << '\n';
}

Checkpoint make_checkpoint(SegNet net, const std::string& kind, const RunConfig& rc) {
  return Checkpoint{std::move(net), kind, rc.fingerprinted(), rc.seed};
}

// --- commands ---------------------------------------------------------------

void cmd_synth_gen(RunConfig rc, std::ostream& out) {
  const auto dir = output_dir(rc);
  DomainSpec spec = rc.params["spec"].is_object() ? domain_spec_from_json(rc.params["spec"].dump())
                                                  : domain_spec_by_name(rc.params["domain"].get<std::string>());
  rc.params["spec"] = json::parse(domain_spec_to_json(spec));
  const Dataset ds = generate_dataset(spec, rc.params["n"].get<std::size_t>(), rc.seed);
  save_dataset(ds, dir);
  rc.provenance["digest"] = hex64(dataset_digest(ds));
  write_run_config(rc, dir);
  out << "synth-gen: " << ds.samples.size() << " samples of " << spec.name << " (train " << ds.train.size()
      << ", val " << ds.val.size() << ", test " << ds.test.size() << ") digest " << hex64(dataset_digest(ds))
      << " -> " << dir.string() << '\n';
}

void cmd_pretrain(RunConfig rc, std::ostream& out) {
  const Dataset ds = load_dataset(input(rc, "data"));
  const auto dir = output_dir(rc);
  std::string organ_name_param = rc.params["organ"].get<std::string>();
  if (organ_name_param.empty()) {
    if (ds.spec.labeled_organs.size() != 1) {
      throw ConfigError("pretrain: dataset labels " + std::to_string(ds.spec.labeled_organs.size()) +
                        " organs, pass --organ");
    }
    organ_name_param = organ_name(ds.spec.labeled_organs.front());
    rc.params["organ"] = organ_name_param;
  }
  const Organ organ = organ_from_name(organ_name_param);
  if (std::find(ds.spec.labeled_organs.begin(), ds.spec.labeled_organs.end(), organ) == ds.spec.labeled_organs.end()) {
    throw ConfigError("pretrain: dataset " + ds.spec.name + " has no usable labels for " + organ_name_param);
  }
  if (ds.train.empty()) throw DataError("pretrain: empty training split");
  rc.provenance["data_digest"] = hex64(dataset_digest(ds));

  PretrainConfig pc;
  pc.epochs = rc.params["epochs"].get<std::size_t>();
  pc.batch_size = rc.params["batch_size"].get<std::size_t>();
  pc.lr = rc.params["lr"].get<double>();
  pc.contrast_jitter = rc.params["contrast_jitter"].get<double>();
  pc.offset_jitter = rc.params["offset_jitter"].get<double>();
  pc.seed = rc.seed;
  const PretrainResult r = pretrain_teacher(ds.images(ds.train), ds.truths(ds.train), organ, pc);

  save_checkpoint(make_checkpoint(r.net, "teacher", rc), dir / "model.ckpt");
  std::ostringstream trace;
  trace << std::setprecision(17) << "epoch,loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) trace << e << ',' << r.epoch_loss[e] << '\n';
  write_text(dir / "trace.csv", trace.str());
  const MetricReport m = evaluate(r.net, ds, ds.test);
  write_metrics(m, dir, "metrics");
  write_run_config(rc, dir);
  print_summary(out, "pretrain " + organ_name_param + " (source test)", m);
}

void cmd_adapt(RunConfig rc, std::ostream& out, bool eval) {
  const Checkpoint teacher = load_checkpoint(input(rc, "teacher"));
  const Dataset ds = load_dataset(input(rc, "data"));
  const auto dir = output_dir(rc);
  if (teacher.net.config().num_classes != 2) {
    throw ConfigError("adapt: expected a single-organ teacher, checkpoint has " +
                      std::to_string(teacher.net.config().num_classes) + " classes");
  }
  const int organ = teacher.net.class_binding()[1];
  if (rc.params["lambda_th"].is_null()) rc.params["lambda_th"] = default_lambda_th(organ);
  rc.provenance["teacher_fingerprint"] = hex64(teacher.fingerprint());
  rc.provenance["data_digest"] = hex64(dataset_digest(ds));

  AdaptConfig ac;
  ac.lambda_th = rc.params["lambda_th"].get<double>();
  ac.aux_decoders = rc.params["aux_decoders"].get<std::size_t>();
  ac.beta = rc.params["beta"].get<double>();
  ac.lambda_con = rc.params["lambda_con"].get<double>();
  ac.lambda_im = rc.params["lambda_im"].get<double>();
  ac.epochs = rc.params["epochs"].get<std::size_t>();
  ac.batch_size = rc.params["batch_size"].get<std::size_t>();
  ac.lr = rc.params["lr"].get<double>();
  const std::string pl = rc.params["pseudo_labels"].get<std::string>();
  if (pl == "source_model") {
    ac.pseudo_labels = PseudoLabelSource::source_model;
  } else if (pl == "current_model") {
    ac.pseudo_labels = PseudoLabelSource::current_model;
  } else {
    throw ConfigError("adapt: pseudo_labels must be source_model or current_model");
  }
  ac.seed = rc.seed;

  // Labels never reach training: only images of the train split are passed on.
  const AdaptResult r = run_model_adaptation(teacher.net, ds.images(ds.train), ac);
  save_checkpoint(make_checkpoint(r.net, "adapted", rc), dir / "model.ckpt");
  write_text(dir / "trace.csv", r.trace_csv());
  if (eval) {
    const MetricReport before = evaluate(teacher.net, ds, ds.test);
    const MetricReport after = evaluate(r.net, ds, ds.test);
    write_metrics(before, dir, "metrics_before");
    write_metrics(after, dir, "metrics");
    print_summary(out, "adapt before", before);
    print_summary(out, "adapt after", after);
  } else {
    out << "adapt: " << ac.epochs << " epochs -> " << (dir / "model.ckpt").string() << '\n';
  }
  write_run_config(rc, dir);
}

void cmd_ensemble(RunConfig rc, std::ostream& out) {
  if (!rc.inputs.contains("teachers") || rc.inputs["teachers"].empty()) throw ConfigError("ensemble: missing --teacher");
  std::vector<SegNet> nets;
  json fingerprints = json::array();
  for (const auto& path : rc.inputs["teachers"]) {
    const Checkpoint c = load_checkpoint(path.get<std::string>());
    fingerprints.push_back(hex64(c.fingerprint()));
    nets.push_back(c.net);
  }
  const Dataset ds = load_dataset(input(rc, "data"));
  const auto dir = output_dir(rc);
  rc.provenance["teacher_fingerprints"] = fingerprints;
  rc.provenance["data_digest"] = hex64(dataset_digest(ds));
  const TeacherPool pool(std::move(nets));

  EnsembleConfig ec;
  ec.lambda_fa = rc.params["lambda_fa"].get<double>();
  ec.epochs = rc.params["epochs"].get<std::size_t>();
  ec.batch_size = rc.params["batch_size"].get<std::size_t>();
  ec.lr = rc.params["lr"].get<double>();
  ec.strategy = strategy_from_name(rc.params["strategy"].get<std::string>());
  ec.proj_channels = rc.params["proj_channels"].get<std::size_t>();
  ec.seed = rc.seed;
  const EnsembleResult r = run_model_ensemble(pool, ds.images(ds.train), ec);

  save_checkpoint(make_checkpoint(r.student, "student", rc), dir / "model.ckpt");
  write_text(dir / "trace.csv", r.trace_csv());
  const fs::path sel_dir = dir / "selection";
  fs::create_directories(sel_dir);
  json planes = json::array();
  for (std::size_t k = 0; k < r.selections.size(); ++k) {
    const std::string name = plane_name("selection", ds.train[k], ".u8");
    write_file(sel_dir / name, r.selections[k].selected);
    planes.push_back({{"sample", ds.train[k]}, {"file", name}});
  }
  json teachers = json::array();
  for (const auto& b : pool.registry.bindings) teachers.push_back(std::vector<int>(b.begin() + 1, b.end()));
  write_text(sel_dir / "manifest.json",
             json{{"format", "mmadapt-selection"},
                  {"height", r.selections.front().height},
                  {"width", r.selections.front().width},
                  {"strategy", strategy_name(ec.strategy)},
                  {"teacher_classes", teachers},
                  {"planes", planes}}
                     .dump(2) +
                 "\n");
  bool labeled = !ds.test.empty();
  for (auto i : ds.test) labeled = labeled && ds.has_labels(i);
  if (labeled) {
    const MetricReport m = evaluate(r.student, ds, ds.test);
    write_metrics(m, dir, "metrics");
    print_summary(out, "ensemble " + strategy_name(ec.strategy), m);
  } else {
    out << "ensemble: no test labels, metrics skipped\n";
  }
  write_run_config(rc, dir);
}

void cmd_eval(RunConfig rc, std::ostream& out) {
  const Checkpoint model = load_checkpoint(input(rc, "model"));
  const Dataset ds = load_dataset(input(rc, "data"));
  const MetricReport m = evaluate(model.net, ds, split_indices(ds, rc.params["split"].get<std::string>()));
  if (!rc.output.empty()) {
    const auto dir = output_dir(rc);
    rc.provenance["model_fingerprint"] = hex64(model.fingerprint());
    rc.provenance["data_digest"] = hex64(dataset_digest(ds));
    write_metrics(m, dir, "metrics");
    write_run_config(rc, dir);
  }
  out << m.to_csv();
}

void cmd_render(RunConfig rc, std::ostream& out) {
  const Checkpoint model = load_checkpoint(input(rc, "model"));
  const Dataset ds = load_dataset(input(rc, "data"));
  const auto dir = output_dir(rc);
  auto idx = split_indices(ds, rc.params["split"].get<std::string>());
  const auto limit = rc.params["limit"].get<std::size_t>();
  if (limit > 0 && idx.size() > limit) idx.resize(limit);
  std::size_t written = 0;
  for (auto i : idx) {
    const auto& s = ds.samples[i];
    const LabelMap pred = predict_labels(model.net, s.image);
    write_png(render_overlay(s.image, pred, s.truth), dir / plane_name("overlay", i, ".png"));
    ++written;
  }
  if (rc.inputs.contains("selection") && !rc.inputs["selection"].get<std::string>().empty()) {
    const fs::path sel_dir = rc.inputs["selection"].get<std::string>();
    json manifest;
    try {
      manifest = json::parse(read_text(sel_dir / "manifest.json"));
    } catch (const json::exception& e) {
      throw DataError("selection manifest: " + std::string(e.what()));
    }
    const auto h = manifest.at("height").get<std::size_t>(), w = manifest.at("width").get<std::size_t>();
    for (const auto& p : manifest.at("planes")) {
      const auto bytes = read_file(sel_dir / p.at("file").get<std::string>());
      write_png(render_selection(bytes, h, w), dir / plane_name("selection", p.at("sample").get<std::size_t>(), ".png"));
      ++written;
    }
  }
  write_run_config(rc, dir);
  out << "render: " << written << " images -> " << dir.string() << '\n';
}

// --- wiring -----------------------------------------------------------------

struct Command {
  CLI::App* app = nullptr;
  Invocation inv;
};

void add_common(Command& c) {
  c.app->add_option("--config", c.inv.config_file, "JSON run config; flags override its values");
  c.app->add_option_function<std::uint64_t>("--seed", [&c](const std::uint64_t& v) { c.inv.seed = v; }, "Root seed");
  c.app->add_option("--out", c.inv.out, "Output directory");
}

void add_param(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.inv.flags[key] = v; }, help);
}

void add_input(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.inv.input_flags[key] = v; }, help);
}

int exit_for(const std::exception& e, std::ostream& err, int code) {
  err << "error: " << e.what() << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-stage model adaptation and ensemble for segmentation", "mmadapt"};
  app.require_subcommand(1);
  std::map<std::string, Command> cmds;
  auto make = [&](const std::string& name, const std::string& help, json defaults) -> Command& {
    Command& c = cmds[name];
    c.app = app.add_subcommand(name, help);
    c.inv.name = name;
    c.inv.defaults = std::move(defaults);
    add_common(c);
    return c;
  };

  auto& synth = make("synth-gen", "Generate a synthetic dataset", {{"domain", "target"}, {"n", 86}, {"spec", nullptr}});
  add_param(synth, "--domain", "domain", "source_liver, source_spleen, source_kidney or target");
  add_param(synth, "--n", "n", "Number of images");

  auto& pre = make("pretrain", "Train a single-organ teacher on a labeled source dataset",
                   {{"organ", ""}, {"epochs", 60}, {"batch_size", 4}, {"lr", 2e-3}, {"contrast_jitter", 0.4},
                    {"offset_jitter", 0.1}});
  add_input(pre, "--data", "data", "Source dataset directory");
  add_param(pre, "--organ", "organ", "liver, spleen or kidney (default: the dataset's labeled organ)");
  add_param(pre, "--epochs", "epochs", "Training epochs");
  add_param(pre, "--batch-size", "batch_size", "Images per step");
  add_param(pre, "--lr", "lr", "Adam learning rate");
  add_param(pre, "--contrast-jitter", "contrast_jitter", "Random contrast gain range");
  add_param(pre, "--offset-jitter", "offset_jitter", "Random intensity offset range");

  auto& adapt = make("adapt", "Adapt a teacher to unlabeled target images",
                     {{"lambda_th", nullptr}, {"aux_decoders", 4}, {"beta", 0.1}, {"lambda_con", 0.1},
                      {"lambda_im", 1.0}, {"epochs", 100}, {"batch_size", 4}, {"lr", 2e-3},
                      {"pseudo_labels", "source_model"}});
  add_input(adapt, "--teacher", "teacher", "Teacher checkpoint");
  add_input(adapt, "--data", "data", "Target dataset directory");
  add_param(adapt, "--lambda-th", "lambda_th", "Entropy threshold in nats (default depends on the organ)");
  add_param(adapt, "--aux-decoders", "aux_decoders", "Auxiliary decoders");
  add_param(adapt, "--beta", "beta", "Diversity weight inside L_im");
  add_param(adapt, "--lambda-con", "lambda_con", "Consistency weight");
  add_param(adapt, "--lambda-im", "lambda_im", "Information maximization weight");
  add_param(adapt, "--epochs", "epochs", "Training epochs");
  add_param(adapt, "--batch-size", "batch_size", "Images per step");
  add_param(adapt, "--lr", "lr", "Adam learning rate");
  add_param(adapt, "--pseudo-labels", "pseudo_labels", "source_model or current_model");
  adapt.app->add_flag("--eval", adapt.inv.eval, "Report test metrics before and after adaptation");

  auto& ens = make("ensemble", "Distill adapted teachers into one multi-organ student",
                   {{"lambda_fa", 0.001}, {"epochs", 200}, {"batch_size", 2}, {"lr", 2e-3},
                    {"strategy", "certainty_norm"}, {"proj_channels", 32}});
  ens.app->add_option("--teacher", ens.inv.teachers, "Adapted teacher checkpoint (repeat per teacher)");
  add_input(ens, "--data", "data", "Target dataset directory");
  add_param(ens, "--lambda-fa", "lambda_fa", "Feature aggregation weight");
  add_param(ens, "--epochs", "epochs", "Training epochs");
  add_param(ens, "--batch-size", "batch_size", "Images per step");
  add_param(ens, "--lr", "lr", "Adam learning rate");
  add_param(ens, "--strategy", "strategy", "certainty_norm, certainty_raw or average");
  add_param(ens, "--proj-channels", "proj_channels", "Projection channels");

  auto& ev = make("eval", "Evaluate a checkpoint on a labeled dataset", {{"split", "test"}});
  add_input(ev, "--model", "model", "Checkpoint");
  add_input(ev, "--data", "data", "Dataset directory");
  add_param(ev, "--split", "split", "train, val, test or all");

  auto& render = make("render", "Write overlay and selection-map PNGs", {{"split", "test"}, {"limit", 0}});
  add_input(render, "--model", "model", "Checkpoint");
  add_input(render, "--data", "data", "Dataset directory");
  add_input(render, "--selection", "selection", "Selection-map directory written by ensemble");
  add_param(render, "--split", "split", "train, val, test or all");
  add_param(render, "--limit", "limit", "Maximum number of images (0: all)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (auto& [name, c] : cmds) {
      if (!c.app->parsed()) continue;
      RunConfig rc = resolve(c.inv);
      if (name == "synth-gen") cmd_synth_gen(std::move(rc), out);
      else if (name == "pretrain") cmd_pretrain(std::move(rc), out);
      else if (name == "adapt") cmd_adapt(std::move(rc), out, c.inv.eval);
      else if (name == "ensemble") cmd_ensemble(std::move(rc), out);
      else if (name == "eval") cmd_eval(std::move(rc), out);
      else if (name == "render") cmd_render(std::move(rc), out);
    }
  } catch (const ConfigError& e) {
    return exit_for(e, err, kExitConfig);
  } catch (const DataError& e) {
    return exit_for(e, err, kExitData);
  } catch (const ShapeError& e) {
    return exit_for(e, err, kExitData);
  } catch (const NumericError& e) {
    return exit_for(e, err, kExitNumeric);
  } catch (const json::exception& e) {
    return exit_for(e, err, kExitConfig);
  } catch (const fs::filesystem_error& e) {
    return exit_for(e, err, kExitData);
  } catch (const std::exception& e) {
    return exit_for(e, err, kExitInternal);
  }
  return kExitOk;
}

}  // namespace mmadapt::cli
