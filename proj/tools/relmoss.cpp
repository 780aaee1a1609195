// SPDX-License-Identifier: Apache-2.0
// relmoss: command-line driver for data generation, ingestion, training,
// evaluation, diagnostics and ablations.

#include <Eigen/Core>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "relmoss/diagnostics.hpp"
#include "relmoss/run_config.hpp"
#include "relmoss/train.hpp"

namespace fs = std::filesystem;
using namespace relmoss;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Invocation {
  std::string command;
  ordered_json args = ordered_json::object();
  std::optional<RunConfig> config;
  fs::path out_dir;
  std::vector<std::string> outputs;
  std::vector<ordered_json> extra;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out_dir / name;
  }
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

RunConfig load_config(const std::string& path, const std::string& out_override) {
  const fs::path p(path);
  RunConfig rc = run_config_from_json(read_json_file(p), p.parent_path());
  if (!out_override.empty()) rc.output_dir = out_override;
  return rc;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw RdbError("cannot write " + p.string());
  out << text;
}

void write_run_record(const Invocation& inv, double seconds, const std::string& status, const std::string& error) {
  if (inv.out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(inv.out_dir, ec);
  ordered_json j;
  j["tool"] = "relmoss";
  j["format_version"] = kRunFormatVersion;
  j["command"] = inv.command;
  j["args"] = inv.args;
  if (inv.config) {
    j["config"] = to_json(*inv.config);
    j["seed"] = inv.config->train.seed;
  }
  j["versions"] = {{"relmoss", kVersion},
                   {"compiler", __VERSION__},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  j["wall_time_s"] = seconds;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["outputs"] = inv.outputs;
  for (const auto& e : inv.extra)
    for (const auto& [k, v] : e.items()) j[k] = v;
  std::ofstream out(inv.out_dir / "run.json");
  if (out) out << j.dump(2) << '\n';
}

struct TrainedModel {
  RelMossModel model;
  std::vector<EncodedTable> tables;
  TrainResult result;
};

TrainedModel fit(const Dataset& ds, const TrainConfig& cfg) {
  RelMossModel m = make_model(ds.graph, fit_statistics(ds.db, ds.train_masks()), ds.target, cfg);
  auto tables = precompute_tables(m, ds.db);
  TrainResult res = train(m, ds, tables);
  return TrainedModel{std::move(m), std::move(tables), std::move(res)};
}

const std::string& entity_id(const Dataset& ds, std::size_t row) {
  const std::size_t pk = ds.db.schemas[ds.target].pk_column();
  return std::get<std::string>(ds.db.rows[ds.target][row].cells[pk]);
}

void write_metrics(Invocation& inv, const std::string& stem, const std::vector<MetricsReport>& reports) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_text(inv.file(stem + ".json"), arr.dump(2) + "\n");
  std::ofstream csv(inv.file(stem + ".csv"));
  write_metrics_csv(csv, reports);
}

void print_report(const MetricsReport& r) {
  std::cout << r.split << ": b_acc " << r.b_acc << " g_mean " << r.g_mean << " (tp " << r.cm.tp << ", fn " << r.cm.fn
            << ", tn " << r.cm.tn << ", fp " << r.cm.fp << ")" << (r.degenerate ? " [degenerate]" : "") << '\n';
}

// ---------------------------------------------------------------------------

int cmd_synth(Invocation& inv) {
  const RunConfig& rc = *inv.config;
  if (!rc.synth) throw ConfigError("synth-data needs a 'synth' section");
  const SynthDataset ds = generate(*rc.synth);
  fs::create_directories(inv.out_dir);
  write_dataset(ds, *rc.synth, inv.out_dir);
  for (const char* f : {"manifest.json", "users.csv", "items.csv", "interactions.csv", "labels.csv", "provenance.json"})
    inv.outputs.push_back(f);
  std::cout << describe(*rc.synth);
  const ImbalanceStats st = compute_imbalance_stats(ds.labels.label);
  std::cout << "emitted: " << st.n_pos << " minority / " << st.n_neg << " majority, ratio " << st.ratio << '\n';
  return kExitOk;
}

int cmd_ingest(Invocation& inv, const std::string& manifest, const std::string& labels, const std::string& target,
               bool dump) {
  const fs::path mp(manifest);
  const RelationalDatabase db = load_database(mp, mp.parent_path());
  const HeteroGraph g = build_graph(db);
  const IntegrityReport integrity = validate_referential_integrity(db);
  ordered_json rep;
  rep["tables"] = ordered_json::array();
  for (std::size_t t = 0; t < db.table_count(); ++t)
    rep["tables"].push_back({{"name", db.schemas[t].name}, {"rows", db.rows[t].size()}});
  rep["relations"] = ordered_json::array();
  for (const RelationType& r : g.relations())
    rep["relations"].push_back({{"id", r.rel_id},
                                {"name", r.name},
                                {"src", db.schemas[r.src_type].name},
                                {"dst", db.schemas[r.dst_type].name},
                                {"edges", g.adjacency(r.rel_id).edge_count()}});
  rep["integrity"] = {{"total_dangling", integrity.total_dangling()}, {"per_link", integrity.to_json()}};
  rep["warnings"] = {{"unparsable_numeric", db.warnings.unparsable_numeric},
                     {"unparsable_timestamp", db.warnings.unparsable_timestamp}};
  std::cout << "tables: " << db.table_count() << ", relations: " << g.relation_count()
            << ", dangling references: " << integrity.total_dangling() << '\n';
  if (!labels.empty()) {
    const std::size_t t = db.table_index(target);
    const TaskLabels tl = read_labels_csv(labels, db, t);
    std::vector<int> known;
    for (int y : tl.label)
      if (y >= 0) known.push_back(y);
    const ImbalanceStats st = compute_imbalance_stats(known);
    rep["imbalance"] = {{"target_table", target},
                        {"positives", st.n_pos},
                        {"negatives", st.n_neg},
                        {"ratio", st.single_class ? json(nullptr) : json(st.ratio)},
                        {"single_class", st.single_class}};
    std::cout << "labels: " << st.n_pos << " positive / " << st.n_neg << " negative, imbalance ratio " << st.ratio
              << '\n';
  }
  fs::create_directories(inv.out_dir);
  write_text(inv.file("ingest_report.json"), rep.dump(2) + "\n");
  if (dump) {
    std::ofstream out(inv.file("graph.jsonl"));
    dump_graph(g, out);
  }
  return kExitOk;
}

int cmd_train(Invocation& inv, bool dump_graph_flag, bool dump_gates, bool dump_synth) {
  const RunConfig& rc = *inv.config;
  const Dataset ds = load_run_dataset(rc);
  fs::create_directories(inv.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  TrainedModel tm = fit(ds, rc.train);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_model(inv.file("model.json"), tm.model, ds);
  write_metrics(inv, "history", tm.result.history);
  const MetricsReport val = evaluate(tm.model, ds, tm.tables, Split::Val, static_cast<int>(rc.train.epochs));
  print_report(tm.result.history.back());
  print_report(val);
  inv.extra.push_back({{"training",
                        {{"seconds", secs},
                         {"bank_capacity", tm.result.bank_capacity},
                         {"synthesized", tm.result.synthesized},
                         {"skipped_cold", tm.result.skipped_cold},
                         {"minority_label", tm.model.minority_label},
                         {"parameters", tm.model.params.parameter_count()}}}});
  if (dump_graph_flag) {
    std::ofstream out(inv.file("graph.jsonl"));
    dump_graph(ds.graph, out);
  }
  if (dump_gates) {
    std::ofstream out(inv.file("gates.csv"));
    out << "epoch,layer,relation,relation_name,mean_gate\n";
    for (const GateStat& g : tm.result.gate_log)
      out << g.epoch << ',' << g.layer << ',' << g.relation << ',' << ds.graph.relation(g.relation).name << ','
          << json(g.mean).dump() << '\n';
  }
  if (dump_synth) {
    std::ofstream out(inv.file("synth.csv"));
    out << "epoch,batch,anchor_id,parent_id,bank_index,lambda,distance\n";
    for (const SynthRecord& s : tm.result.synth_log) {
      out << s.epoch << ',' << s.batch << ',';
      csv::write_field(out, entity_id(ds, s.anchor_row));
      out << ',';
      csv::write_field(out, entity_id(ds, s.parent_row));
      out << ',' << s.parent_index << ',' << json(s.lambda).dump() << ',' << json(s.distance).dump() << '\n';
    }
  }
  return kExitOk;
}

int cmd_eval(Invocation& inv, const std::string& checkpoint) {
  const RunConfig& rc = *inv.config;
  const Dataset ds = load_run_dataset(rc);
  const RelMossModel m = load_model(checkpoint, ds);
  const auto tables = precompute_tables(m, ds.db);
  std::vector<MetricsReport> reports;
  for (Split s : {Split::Val, Split::Test}) {
    if (ds.rows_in(s).empty()) continue;
    reports.push_back(evaluate(m, ds, tables, s, static_cast<int>(m.config.epochs)));
    print_report(reports.back());
  }
  fs::create_directories(inv.out_dir);
  write_metrics(inv, "metrics", reports);
  return kExitOk;
}

int cmd_collapse(Invocation& inv) {
  const CollapseOptions& opt = inv.config->collapse;
  fs::create_directories(inv.out_dir);
  std::ofstream out(inv.file("collapse.csv"));
  out << "fixture,layer,measured,bound,factor,holds\n";
  std::size_t runs = 0, skipped = 0, violations = 0;
  auto emit = [&](std::size_t idx, const CollapseCurve& c) {
    for (std::size_t l = 0; l < c.measured.size(); ++l) {
      const bool ok = l == 0 || c.measured[l] <= c.bound[l] + kCollapseTolerance;
      violations += !ok;
      out << idx << ',' << l << ',' << json(c.measured[l]).dump() << ',' << json(c.bound[l]).dump() << ','
          << json(c.factor).dump() << ',' << (ok ? 1 : 0) << '\n';
    }
  };
  if (opt.fixture == "star") {
    const RegularFixture f = make_star_fixture(opt.fan, opt.minority);
    const auto c = collapse_curve(f.graph, f.labels, f.stack, f.x0, opt.layers, f.probe);
    if (!c) {
      ++skipped;
    } else {
      ++runs;
      emit(0, *c);
      std::cout << "star fixture: proportion " << c->factor << ", signal";
      for (double v : c->measured) std::cout << ' ' << v;
      std::cout << '\n';
    }
  } else {
    Rng rng(opt.seed);
    for (std::size_t i = 0; i < opt.fixtures; ++i) {
      const RegularFixture f = make_random_regular_fixture(rng);
      const auto c = collapse_curve(f.graph, f.labels, f.stack, f.x0, opt.layers, f.probe);
      if (!c) {
        ++skipped;
        continue;
      }
      ++runs;
      emit(i, *c);
    }
  }
  const bool pass = runs > 0 && violations == 0;
  std::cout << (pass ? "PASS" : "FAIL") << " collapse bound: " << runs << " fixture(s), " << opt.layers
            << " layer(s), " << violations << " violation(s), " << skipped << " skipped\n";
  inv.extra.push_back({{"summary", {{"pass", pass}, {"fixtures", runs}, {"violations", violations}, {"skipped", skipped}}}});
  return kExitOk;
}

// Re-runs relation-guided synthesis over the training minority with the
// trained representations, once with the configured omega and once with
// omega = 0, and compares both synthetic signature sets against the true ones.
int cmd_consistency(Invocation& inv, const std::string& checkpoint) {
  const RunConfig& rc = *inv.config;
  const Dataset ds = load_run_dataset(rc);
  const RelMossModel m = load_model(checkpoint, ds);
  const auto tables = precompute_tables(m, ds.db);
  std::vector<std::size_t> minors;
  for (std::size_t r : ds.rows_in(Split::Train))
    if (ds.labels.label[r] == m.minority_label) minors.push_back(r);
  if (minors.size() < 2) throw TrainingError("consistency needs at least two training minority entities");
  Rng rng = derive_stream(m.config.seed, 3);
  rng.shuffle(minors);
  if (minors.size() > rc.consistency.max_points) minors.resize(rc.consistency.max_points);
  std::sort(minors.begin(), minors.end());

  const Tensor reps = forward_rows(m, ds, tables, minors).reps;
  MemoryBank bank(minors.size(), m.config.dim, m.sig_width);
  PointSet truth;
  for (std::size_t i = 0; i < minors.size(); ++i) {
    const auto sig = ds.signatures.row(minors[i]);
    truth.emplace_back(sig.begin(), sig.end());
    const auto rep = reps.row(i);
    bank.push(BankEntry{{rep.begin(), rep.end()}, truth.back(), NodeRef{ds.target, minors[i]}});
  }
  fs::create_directories(inv.out_dir);
  std::ofstream out(inv.file("consistency.csv"));
  out << "omega,n_synthetic,shift,p_value,null_q95\n";
  std::vector<double> shifts;
  for (double omega : {m.config.omega, 0.0}) {
    SynthesisOptions opt;
    opt.omega = omega;
    opt.beta_alpha = m.config.beta_alpha;
    opt.beta_beta = m.config.beta_beta;
    opt.minority_label = m.minority_label;
    Rng syn_rng = derive_stream(m.config.seed, 3);
    PointSet synthetic;
    for (std::size_t i = 0; i < minors.size(); ++i) {
      auto s = synthesize(reps.row(i), ds.signatures.row(minors[i]), bank, opt, syn_rng, NodeRef{ds.target, minors[i]});
      if (s) synthetic.push_back(std::move(s->sig));
    }
    Rng perm_rng = derive_stream(m.config.seed, 4);
    const PermutationResult pr = energy_permutation_test(truth, synthetic, rc.consistency.permutations, perm_rng);
    shifts.push_back(pr.observed);
    out << json(omega).dump() << ',' << synthetic.size() << ',' << json(pr.observed).dump() << ','
        << json(pr.p_value).dump() << ',' << json(pr.quantile95).dump() << '\n';
    std::cout << "omega " << omega << ": shift " << pr.observed << " (p " << pr.p_value << ")\n";
  }
  const bool pass = shifts[0] < shifts[1] || (m.config.omega == 0.0 && shifts[0] == shifts[1]);
  std::cout << (pass ? "PASS" : "FAIL") << " consistency: relation-guided shift " << shifts[0]
            << (pass ? " < " : " >= ") << "feature-only shift " << shifts[1] << '\n';
  inv.extra.push_back({{"summary", {{"pass", pass}, {"shift_guided", shifts[0]}, {"shift_feature_only", shifts[1]}}}});
  return kExitOk;
}

int cmd_ablate(Invocation& inv) {
  const RunConfig& rc = *inv.config;
  const Dataset ds = load_run_dataset(rc);
  struct Variant {
    const char* name;
    std::function<void(TrainConfig&)> apply;
  };
  const std::vector<Variant> variants{
      {"full", [](TrainConfig&) {}},
      {"disable_gate", [](TrainConfig& c) { c.disable_gate = true; }},
      {"disable_syn",
       [](TrainConfig& c) {
         c.disable_syn = true;
         c.gamma = 0.0;
       }},
      {"omega0", [](TrainConfig& c) { c.omega = 0.0; }},
  };
  fs::create_directories(inv.out_dir);
  std::ofstream runs(inv.file("ablation_runs.csv"));
  runs << "variant,seed,b_acc,g_mean\n";
  std::ofstream table(inv.file("ablation.csv"));
  table << "variant,b_acc,g_mean\n";
  for (const Variant& v : variants) {
    double b = 0.0, g = 0.0;
    for (std::uint64_t seed : rc.ablate.seeds) {
      TrainConfig cfg = rc.train;
      cfg.seed = seed;
      v.apply(cfg);
      const TrainedModel tm = fit(ds, cfg);
      const MetricsReport r = evaluate(tm.model, ds, tm.tables, Split::Test, static_cast<int>(cfg.epochs));
      runs << v.name << ',' << seed << ',' << json(r.b_acc).dump() << ',' << json(r.g_mean).dump() << '\n';
      b += r.b_acc;
      g += r.g_mean;
    }
    const double n = static_cast<double>(rc.ablate.seeds.size());
    table << v.name << ',' << json(b / n).dump() << ',' << json(g / n).dump() << '\n';
    std::cout << v.name << ": b_acc " << b / n << " g_mean " << g / n << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relmoss: imbalanced entity classification on relational databases"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 success, 1 configuration error, 2 runtime failure.\n"
      "Every command writes run.json (command, resolved config, seed, versions, wall time, outputs)\n"
      "into its output directory.\n\n"
      "Config JSON (unknown keys rejected):\n"
      "  output_dir            directory for all outputs (relative to the config file)\n"
      "  synth {...}           synthetic dataset parameters (generated in memory), or\n"
      "  data {manifest, labels, target_table}\n"
      "  train {...}           training parameters\n"
      "  diagnose {collapse {fixture, layers, fixtures, fan, minority, seed},\n"
      "            consistency {permutations, max_points}}\n"
      "  ablate {seeds}\n\n"
      "Outputs:\n"
      "  synth-data            manifest.json, users.csv, items.csv, interactions.csv,\n"
      "                        labels.csv (entity_id,label,split), provenance.json\n"
      "  ingest                ingest_report.json [graph.jsonl]\n"
      "  train                 model.json, history.json, history.csv [graph.jsonl gates.csv synth.csv]\n"
      "  eval                  metrics.json, metrics.csv (epoch,split,tp,fn,tn,fp,b_acc,g_mean,loss_cls,loss_syn)\n"
      "  diagnose collapse     collapse.csv (fixture,layer,measured,bound,factor,holds)\n"
      "  diagnose consistency  consistency.csv (omega,n_synthetic,shift,p_value,null_q95)\n"
      "  ablate                ablation.csv (variant,b_acc,g_mean), ablation_runs.csv");

  Invocation inv;
  std::string cfg_path, checkpoint, manifest, labels, target = "users", out;
  std::optional<std::uint64_t> seed;
  bool dump_graph_flag = false, dump_gates = false, dump_synth = false;

  auto add_out = [&](CLI::App* c) { c->add_option("--out", out, "Output directory (overrides output_dir)"); };
  auto add_cfg = [&](CLI::App* c) { c->add_option("config", cfg_path, "Run config JSON")->required(); };

  CLI::App* synth = app.add_subcommand("synth-data", "Generate a synthetic relational dataset");
  add_cfg(synth);
  add_out(synth);

  CLI::App* ingest = app.add_subcommand("ingest", "Load a manifest and its CSVs, report integrity and imbalance");
  ingest->add_option("manifest", manifest, "Schema manifest JSON")->required();
  ingest->add_option("--labels", labels, "Labels CSV (entity_id,label,split)");
  ingest->add_option("--target", target, "Target table for --labels");
  add_out(ingest);
  ingest->add_flag("--dump-graph", dump_graph_flag, "Write graph.jsonl");

  CLI::App* tr = app.add_subcommand("train", "Train a model and save model.json");
  add_cfg(tr);
  add_out(tr);
  tr->add_option("--seed", seed, "Override train.seed");
  tr->add_flag("--dump-graph", dump_graph_flag, "Write graph.jsonl");
  tr->add_flag("--dump-gates", dump_gates, "Write per-epoch mean gate values (gates.csv)");
  tr->add_flag("--dump-synth", dump_synth, "Write synthetic-sample provenance (synth.csv)");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the validation and test splits");
  add_cfg(ev);
  ev->add_option("checkpoint", checkpoint, "model.json from train")->required()->check(CLI::ExistingFile);
  add_out(ev);

  CLI::App* diag = app.add_subcommand("diagnose", "Diagnostics");
  diag->require_subcommand(1);
  CLI::App* collapse = diag->add_subcommand("collapse", "Layerwise minority-signal bound on linear fixtures");
  add_cfg(collapse);
  add_out(collapse);
  CLI::App* consistency = diag->add_subcommand("consistency", "Energy-distance shift of synthetic signatures");
  add_cfg(consistency);
  consistency->add_option("checkpoint", checkpoint, "model.json from train")->required()->check(CLI::ExistingFile);
  add_out(consistency);

  CLI::App* ablate = app.add_subcommand("ablate", "Train and test {full, disable_gate, disable_syn, omega0}");
  add_cfg(ablate);
  add_out(ablate);
  ablate->add_option("--seed", seed, "Run a single seed instead of ablate.seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  int code = kExitOk;
  try {
    CLI::App* sub = app.get_subcommands().front();
    inv.command = sub->get_name();
    if (sub == diag) inv.command += " " + diag->get_subcommands().front()->get_name();
    if (!cfg_path.empty()) inv.args["config"] = cfg_path;
    if (!checkpoint.empty()) inv.args["checkpoint"] = checkpoint;
    if (!out.empty()) inv.args["out"] = out;
    if (seed) inv.args["seed"] = *seed;
    if (!out.empty()) inv.out_dir = out;

    if (sub == ingest) {
      inv.args["manifest"] = manifest;
      if (!labels.empty()) inv.args["labels"] = labels;
      inv.args["target"] = target;
      inv.args["dump_graph"] = dump_graph_flag;
      if (inv.out_dir.empty()) inv.out_dir = "relmoss_ingest";
      code = cmd_ingest(inv, manifest, labels, target, dump_graph_flag);
    } else {
      inv.config = load_config(cfg_path, out);
      if (seed) {
        inv.config->train.seed = *seed;
        inv.config->ablate.seeds = {*seed};
      }
      inv.out_dir = inv.config->output_dir;
      if (sub == synth) {
        code = cmd_synth(inv);
      } else if (sub == tr) {
        inv.args["dump_graph"] = dump_graph_flag;
        inv.args["dump_gates"] = dump_gates;
        inv.args["dump_synth"] = dump_synth;
        code = cmd_train(inv, dump_graph_flag, dump_gates, dump_synth);
      } else if (sub == ev) {
        code = cmd_eval(inv, checkpoint);
      } else if (inv.command == "diagnose collapse") {
        code = cmd_collapse(inv);
      } else if (inv.command == "diagnose consistency") {
        code = cmd_consistency(inv, checkpoint);
      } else if (sub == ablate) {
        code = cmd_ablate(inv);
      }
    }
    write_run_record(inv, elapsed(), "ok", "");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    write_run_record(inv, elapsed(), "config_error", e.what());
    code = kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    write_run_record(inv, elapsed(), "runtime_error", e.what());
    code = kExitRuntime;
  }
  return code;
}
