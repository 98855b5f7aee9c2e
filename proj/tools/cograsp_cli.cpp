// Command-line front end: gen-scenarios, label, train, eval, rank, plan, render.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cograsp/ce_model.hpp"
#include "cograsp/errors.hpp"
#include "cograsp/evaluation.hpp"
#include "cograsp/feasibility_dataset.hpp"
#include "cograsp/grasp_sampling.hpp"
#include "cograsp/render.hpp"
#include "cograsp/scenario_generator.hpp"
#include "cograsp/scenario_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cograsp;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_counts(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v < 0) throw ValidationError(what + ": '" + item + "' is not a non-negative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ValidationError(what + " must not be empty");
  return out;
}

std::vector<double> parse_reals(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ValidationError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw ValidationError("input file '" + path + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Scenario load_with_grasps(const std::string& path, std::size_t samples_per_point) {
  require_file(path);
  Scenario sc = load_scenario(path);
  if (sc.grasp_set.empty()) {
    SamplingConfig s;
    s.samples_per_grasp_point = samples_per_point;
    sc.grasp_set = build_grasp_set(sc, s);
  }
  return sc;
}

// ---- commands ----

struct GenOptions {
  std::size_t count = 24;
  GeneratorConfig gen;
  std::uint64_t seed = 0;
  std::string out_dir;
};

void run_gen(const GenOptions& o) {
  const auto scenarios = generate_scenarios(o.count, o.gen, o.seed);
  fs::create_directories(o.out_dir);
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scenario_%04zu.json", i);
    save_scenario(scenarios[i], fs::path(o.out_dir) / name);
  }
  std::cout << "wrote " << scenarios.size() << " scenarios to " << o.out_dir << "\n";
}

struct LabelOptions {
  std::string input;
  std::string out;
  std::string stats;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  std::string split = "0.7,0.2,0.1";
  double base_radius = 0.30;
  std::size_t samples_per_point = 60;
};

std::vector<std::string> scenario_files(const std::string& input) {
  if (fs::is_directory(input)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("no .json scenarios in '" + input + "'");
    return files;
  }
  require_file(input);
  return {input};
}

void run_label(const LabelOptions& o) {
  const auto fractions = parse_reals(o.split, "--split");
  if (fractions.size() != 3) throw ValidationError("--split needs three fractions");
  if (o.jobs == 0) throw ValidationError("--jobs must be at least 1");
  const auto files = scenario_files(o.input);
  std::vector<Scenario> scenarios;
  for (const auto& f : files) scenarios.push_back(load_with_grasps(f, o.samples_per_point));

  LabelConfig cfg;
  cfg.jobs = o.jobs;
  cfg.base_footprint_radius = o.base_radius;
  cfg.planner.base_footprint_radius = o.base_radius;
  std::vector<LabeledScenario> labeled;
  LabelStats total;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    LabelStats st;
    labeled.push_back(label_scenario(scenarios[i], cfg, &st));
    total.pairs_evaluated += st.pairs_evaluated;
    total.pairs_feasible += st.pairs_feasible;
    total.pairs_failed += st.pairs_failed;
    total.seconds += st.seconds;
    std::cerr << "[" << i + 1 << "/" << scenarios.size() << "] " << files[i] << ": " << st.pairs_feasible << "/"
              << st.pairs_evaluated << " feasible\n";
  }
  const Dataset ds = split_dataset(std::move(labeled), {fractions[0], fractions[1], fractions[2]}, o.seed);
  save_dataset(ds, o.out);
  const double per_pair = total.pairs_evaluated ? total.seconds / static_cast<double>(total.pairs_evaluated) : 0.0;
  std::cout << "labeled " << ds.scenarios.size() << " scenarios, " << total.pairs_feasible << "/"
            << total.pairs_evaluated << " pairs feasible, " << per_pair << " s per pair\n";
  if (!o.stats.empty()) {
    const json j{{"scenarios", ds.scenarios.size()},
                 {"pairs_evaluated", total.pairs_evaluated},
                 {"pairs_feasible", total.pairs_feasible},
                 {"pairs_failed", total.pairs_failed},
                 {"seconds", total.seconds},
                 {"seconds_per_pair", per_pair}};
    write_text(o.stats, j.dump(2) + "\n");
  }
}

struct TrainOptions {
  std::string dataset;
  std::string out_dir;
  std::uint64_t seed = 0;
  CEModelConfig model;
  std::string conv_channels = "8,16,32";
};

void run_train(TrainOptions o) {
  require_file(o.dataset);
  o.model.conv_channels = parse_counts(o.conv_channels, "--conv-channels");
  o.model.validate();
  const Dataset ds = load_dataset(o.dataset);
  const TrainResult r = train(ds, o.model, o.seed, [](const EpochRecord& e) {
    std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss << " lr "
              << e.learning_rate << "\n";
  });
  fs::create_directories(o.out_dir);
  save_model(r.model, fs::path(o.out_dir) / "model.json");
  std::string csv = "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : r.history) {
    csv += std::to_string(e.epoch) + "," + full(e.train_loss) + "," + full(e.val_loss) + "," + full(e.learning_rate) +
           "\n";
  }
  write_text(fs::path(o.out_dir) / "history.csv", csv);
  std::cout << "trained " << r.history.size() << " epochs; wrote " << (fs::path(o.out_dir) / "model.json").string()
            << "\n";
}

struct EvalOptions {
  std::string model;
  std::string dataset;
  std::string out;
  std::string split = "test";
  std::string ks = "1,3,5";
  double threshold = -1.0;
  std::size_t random_trials = 10000;
  std::uint64_t seed = 0;
  double base_radius = 0.30;
  std::string group_by;
  std::size_t jobs = 1;
};

void run_eval(const EvalOptions& o) {
  require_file(o.model);
  require_file(o.dataset);
  EvalConfig cfg;
  cfg.ks = parse_counts(o.ks, "--ks");
  if (o.threshold >= 0.0) cfg.threshold = o.threshold;
  cfg.random_trials = o.random_trials;
  cfg.seed = o.seed;
  cfg.base_footprint_radius = o.base_radius;
  if (!o.group_by.empty()) cfg.group_by = o.group_by;
  cfg.jobs = o.jobs;
  const Split split = parse_split(o.split);
  const CEModel model = load_model(o.model);
  const Dataset ds = load_dataset(o.dataset);
  const EvalReport report = evaluate_model(model, ds, split, cfg);
  write_text(o.out, report_to_json(report).dump(2) + "\n");
  for (std::size_t k = 0; k < cfg.ks.size(); ++k) {
    std::cout << "top-" << cfg.ks[k] << ": model " << report.all.model[k] << " random " << report.all.random[k] << "\n";
  }
}

struct RankOptions {
  std::string model;
  std::string scenario;
  std::size_t top_k = 5;
  double base_radius = 0.30;
  std::size_t samples_per_point = 60;
};

void run_rank(const RankOptions& o) {
  require_file(o.model);
  if (o.top_k == 0) throw ValidationError("--top-k must be at least 1");
  CEModel model = load_model(o.model);
  const Scenario sc = load_with_grasps(o.scenario, o.samples_per_point);
  const auto e = model.embed_scenario(sc);
  const AffinityMatrix a = ranked_affinity(e, sc, o.base_radius);
  const auto pairs = top_k_pairs(a, o.top_k);
  std::size_t rank = 1;
  for (const auto& [i, j] : pairs) {
    const double aff = a.at(i, j);
    std::cout << rank++ << "\t" << i << "\t" << j << "\t" << full(aff) << "\t"
              << full(pair_probability(aff, model.config().temperature)) << "\n";
  }
}

struct PlanOptions {
  std::string scenario;
  std::size_t center = 0;
  std::size_t context = 1;
  std::string out;
  std::size_t samples_per_point = 60;
};

void run_plan(const PlanOptions& o) {
  const Scenario sc = load_with_grasps(o.scenario, o.samples_per_point);
  if (o.center >= sc.grasp_set.size() || o.context >= sc.grasp_set.size() || o.center == o.context) {
    throw ValidationError("--center and --context must be distinct indices below " +
                          std::to_string(sc.grasp_set.size()));
  }
  PlannedPair p;
  p.pair = {o.center, o.context};
  try {
    const RegionSequence regions = scenario_regions(sc);
    p.trajectory = solve_trajectory(sc, sc.grasp_set[o.center], sc.grasp_set[o.context], regions, PlannerConfig{});
  } catch (const BrokenChain& e) {
    p.trajectory.status = std::string("corridor failed: ") + e.what();
  } catch (const UncoveredEndpoint& e) {
    p.trajectory.status = std::string("corridor failed: ") + e.what();
  } catch (const SeedInCollision& e) {
    p.trajectory.status = std::string("corridor failed: ") + e.what();
  }
  write_text(o.out, planned_pair_to_json(p).dump(2) + "\n");
  std::cout << (p.trajectory.feasible ? "feasible" : "infeasible") << " (" << p.trajectory.status << ")\n";
}

struct RenderCmdOptions {
  std::string scenario;
  std::string trajectory;
  std::string pair;
  std::string out;
  double pixels_per_meter = 100.0;
};

void run_render(const RenderCmdOptions& o) {
  require_file(o.scenario);
  const Scenario sc = load_scenario(o.scenario);
  RenderOptions ro;
  ro.pixels_per_meter = o.pixels_per_meter;
  if (!o.pair.empty()) {
    const auto p = parse_counts(o.pair, "--pair");
    if (p.size() != 2) throw ValidationError("--pair needs two indices");
    ro.highlight = PairIndex{p[0], p[1]};
  }
  std::optional<PlannedPair> planned;
  if (!o.trajectory.empty()) {
    require_file(o.trajectory);
    std::ifstream in(o.trajectory);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("trajectory file: ") + e.what());
    }
    planned = planned_pair_from_json(j);
  }
  write_text(o.out, render_svg(sc, planned ? &*planned : nullptr, ro));
  std::cout << "wrote " << o.out << "\n";
}

// ---- config files ----

/// Expands `--config file.json` into flags placed before the command line's
/// own arguments, so explicit flags win. Keys are option names without the
/// leading dashes; '_' and '-' are interchangeable.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
  if (args.size() < 2) return args;
  const CLI::App* sub = nullptr;
  for (const auto* s : app.get_subcommands([](const CLI::App*) { return true; })) {
    if (s->get_name() == args[1]) sub = s;
  }
  if (sub == nullptr) return args;
  std::string config_path;
  for (std::size_t i = 2; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") config_path = args[i + 1];
  }
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;
  require_file(config_path);
  std::ifstream in(config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config file: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
  std::vector<std::string> out{args[0], args[1]};
  for (const auto& [raw_key, value] : j.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "help") {
      throw ValidationError("unknown config key '" + raw_key + "' for " + args[1]);
    }
    if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      out.push_back("--" + key);
      out.push_back(joined);
    } else if (value.is_string()) {
      out.push_back("--" + key);
      out.push_back(value.get<std::string>());
    } else if (value.is_number() || value.is_boolean()) {
      out.push_back("--" + key);
      out.push_back(value.dump());
    } else {
      throw ValidationError("config key '" + raw_key + "' has an unsupported value");
    }
  }
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

std::string table_defaults() {
  const CEModelConfig c;
  std::ostringstream s;
  s << "Training defaults: learning rate " << c.optimizer.learning_rate << ", weight decay "
    << c.optimizer.weight_decay << ", batch size " << c.batch_size << ", epochs " << c.epochs << ", embed size d "
    << c.embed_dim << ", temperature " << c.temperature << ", negative ratio alpha " << c.alpha
    << ", plateau factor " << c.optimizer.schedule_factor << ", plateau patience " << c.optimizer.schedule_patience
    << ", reference decision threshold 0.64.\n"
    << "Every option can also be given in a JSON file passed with --config (keys are option names).\n"
    << "Exit codes: 0 success, 2 invalid input, 3 runtime failure.";
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cograsp: grasp-pair feasibility labeling, embedding training and ranking for two-robot transport"};
  app.require_subcommand(1);
  app.footer(table_defaults());
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config_unused;
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_unused, "JSON file with option values");
  };

  GenOptions gen;
  auto* g = app.add_subcommand("gen-scenarios", "Generate two-room transport scenarios");
  g->add_option("--count", gen.count, "Number of scenarios");
  g->add_option("--shape", gen.gen.shape, "Object shape: bar, rectangle, t, triangle, asymmetric");
  g->add_option("--orientations", gen.gen.orientations, "Start yaws per layout");
  g->add_option("--passage-width", gen.gen.passage_width, "Passage width [m]");
  g->add_option("--map-width", gen.gen.map_width, "Map width [m]");
  g->add_option("--map-height", gen.gen.map_height, "Map height [m]");
  g->add_option("--wall-x", gen.gen.wall_x, "Dividing wall position [m]");
  g->add_option("--min-tables", gen.gen.min_tables, "Fewest tables per layout");
  g->add_option("--max-tables", gen.gen.max_tables, "Most tables per layout");
  g->add_option("--samples-per-grasp-point", gen.gen.sampling.samples_per_grasp_point, "Base candidates per grasp point");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  add_config(g);
  g->callback([&] { run_gen(gen); });

  LabelOptions label;
  auto* l = app.add_subcommand("label", "Label every admissible grasp pair with the trajectory oracle");
  l->add_option("--input", label.input, "Scenario file or directory of scenario files")->required();
  l->add_option("--out", label.out, "Dataset file to write")->required();
  l->add_option("--stats", label.stats, "Optional JSON file with timing statistics");
  l->add_option("--jobs", label.jobs, "Worker threads");
  l->add_option("--seed", label.seed, "Split seed");
  l->add_option("--split", label.split, "Train,val,test fractions");
  l->add_option("--base-radius", label.base_radius, "Robot base footprint radius [m]");
  l->add_option("--samples-per-grasp-point", label.samples_per_point, "Used for scenarios without a grasp set");
  add_config(l);
  l->callback([&] { run_label(label); });

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train the conditional embedding model");
  t->add_option("--dataset", tr.dataset, "Labeled dataset file")->required();
  t->add_option("--out-dir", tr.out_dir, "Directory for model.json and history.csv")->required();
  t->add_option("--seed", tr.seed, "Random seed");
  t->add_option("--embed-dim", tr.model.embed_dim, "Embedding size d");
  t->add_option("--temperature", tr.model.temperature, "Sigmoid temperature tau");
  t->add_option("--batch-size", tr.model.batch_size, "Centers per minibatch");
  t->add_option("--epochs", tr.model.epochs, "Training epochs");
  t->add_option("--alpha", tr.model.alpha, "Negative pool ratio alpha");
  t->add_option("--learning-rate", tr.model.optimizer.learning_rate, "AdamW learning rate");
  t->add_option("--weight-decay", tr.model.optimizer.weight_decay, "AdamW weight decay");
  t->add_option("--schedule-factor", tr.model.optimizer.schedule_factor, "Plateau scheduler factor");
  t->add_option("--schedule-patience", tr.model.optimizer.schedule_patience, "Plateau scheduler patience [epochs]");
  t->add_option("--raster-size", tr.model.raster_size, "Scene raster side [pixels]");
  t->add_option("--mlp-hidden", tr.model.mlp_hidden, "MLP hidden width");
  t->add_option("--gru-hidden", tr.model.gru_hidden, "GRU hidden size");
  t->add_option("--conv-channels", tr.conv_channels, "Conv encoder channels");
  add_config(t);
  t->callback([&] { run_train(tr); });

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate ranking and classification on a dataset split");
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--dataset", ev.dataset, "Labeled dataset file")->required();
  e->add_option("--out", ev.out, "report.json path")->required();
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--ks", ev.ks, "Top-k values");
  e->add_option("--threshold", ev.threshold, "Decision threshold; negative selects the F1-best threshold");
  e->add_option("--random-trials", ev.random_trials, "Monte-Carlo trials for the random baseline");
  e->add_option("--seed", ev.seed, "Random baseline seed");
  e->add_option("--base-radius", ev.base_radius, "Robot base footprint radius [m]");
  e->add_option("--group-by", ev.group_by, "Scenario meta key for grouped rates");
  e->add_option("--jobs", ev.jobs, "Worker threads");
  add_config(e);
  e->callback([&] { run_eval(ev); });

  RankOptions rk;
  auto* r = app.add_subcommand("rank", "Print the top-k grasp pairs of a scenario");
  r->add_option("--model", rk.model, "Model file")->required();
  r->add_option("--scenario", rk.scenario, "Scenario file")->required();
  r->add_option("--top-k", rk.top_k, "Rows to print");
  r->add_option("--base-radius", rk.base_radius, "Robot base footprint radius [m]");
  r->add_option("--samples-per-grasp-point", rk.samples_per_point, "Used when the scenario has no grasp set");
  add_config(r);
  r->callback([&] { run_rank(rk); });

  PlanOptions pl;
  auto* p = app.add_subcommand("plan", "Plan a transport trajectory for one grasp pair");
  p->add_option("--scenario", pl.scenario, "Scenario file")->required();
  p->add_option("--center", pl.center, "Center configuration index");
  p->add_option("--context", pl.context, "Context configuration index");
  p->add_option("--out", pl.out, "Trajectory JSON path")->required();
  p->add_option("--samples-per-grasp-point", pl.samples_per_point, "Used when the scenario has no grasp set");
  add_config(p);
  p->callback([&] { run_plan(pl); });

  RenderCmdOptions rd;
  auto* d = app.add_subcommand("render", "Draw a scenario and optional trajectory as SVG");
  d->add_option("--scenario", rd.scenario, "Scenario file")->required();
  d->add_option("--trajectory", rd.trajectory, "Trajectory JSON from plan");
  d->add_option("--pair", rd.pair, "Pair to highlight, e.g. 3,7");
  d->add_option("--out", rd.out, "SVG path")->required();
  d->add_option("--pixels-per-meter", rd.pixels_per_meter, "Drawing scale");
  add_config(d);
  d->callback([&] { run_render(rd); });

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(app, args);
    // CLI11 consumes arguments in reverse.
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitValidation;
  } catch (const ValidationError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const CorruptFile& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const FormatVersionMismatch& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const ShapeMismatch& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& ex) {
    std::cerr << "runtime failure: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
