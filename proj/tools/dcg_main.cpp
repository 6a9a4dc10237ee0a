// Command-line surface: dataset synthesis, training, evaluation,
// explanation export, graph inspection, and the numeric self-tests.
//
// Exit codes: 0 success; 2 config/schema/data problems (bad flags, missing
// files, malformed inputs); 1 numeric failures (training abort, failed
// gradient checks).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dcg/checkpoint.hpp"
#include "dcg/encoders.hpp"
#include "dcg/error.hpp"
#include "dcg/explain.hpp"
#include "dcg/gradcheck.hpp"
#include "dcg/graph.hpp"
#include "dcg/io_util.hpp"
#include "dcg/model.hpp"
#include "dcg/synth.hpp"
#include "dcg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct RunConfig {
  dcg::ModelConfig model;
  dcg::TrainConfig train;
};

RunConfig load_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  if (!fs::exists(path)) throw dcg::ConfigError("no config file at " + path);
  json j;
  try {
    j = json::parse(dcg::read_text_file(path));
  } catch (const json::exception& e) {
    throw dcg::ConfigError("config parse failure: " + std::string(e.what()));
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "model" && it.key() != "train")
      throw dcg::ConfigError("unknown config section \"" + it.key() + "\"");
  if (j.contains("model")) rc.model = dcg::ModelConfig::from_json(j.at("model"));
  if (j.contains("train")) rc.train = dcg::TrainConfig::from_json(j.at("train"));
  return rc;
}

std::unique_ptr<dcg::TextEncoder> make_encoder(const dcg::ModelConfig& cfg) {
  if (cfg.encoder == "file")
    return std::make_unique<dcg::FileTextEncoder>(dcg::FileTextEncoder::load(cfg.embedding_file));
  return std::make_unique<dcg::HashTextEncoder>(cfg.encoder_seed, cfg.d_t);
}

dcg::Model build_fresh_model(const dcg::DatasetBundle& ds, const dcg::ModelConfig& cfg,
                             uint64_t init_seed) {
  auto encoder = make_encoder(cfg);
  dcg::PromptMode mode =
      cfg.prompt_mode == "bare" ? dcg::PromptMode::kBareName : dcg::PromptMode::kFull;
  dcg::PrototypeBank bank = dcg::build_prototypes(ds.schema, *encoder, mode);
  dcg::PpmiPrior prior =
      dcg::build_ppmi(dcg::concept_label_table(ds.train), ds.schema, cfg.ppmi_smoothing);
  dcg::DataDims dims{ds.patch_count, ds.patch_width, ds.classes};
  return dcg::Model::create(ds.schema, cfg, bank, prior.matrix, dims, init_seed);
}

void check_dims(const dcg::Model& model, const dcg::DatasetBundle& ds) {
  if (model.dims().patch_count != ds.patch_count || model.dims().patch_width != ds.patch_width ||
      model.dims().classes != ds.classes)
    throw dcg::DataError("checkpoint dims do not match dataset dims");
}

std::string metrics_pretty(const dcg::EvalMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "diag_acc %.4f\ndiag_macro_f1 %.4f\nconcept_acc %.4f\nconcept_macro_f1 %.4f",
                m.diag_acc, m.diag_macro_f1, m.concept_acc, m.concept_macro_f1);
  return buf;
}

ordered_json metrics_json(const dcg::EvalMetrics& m) {
  return {{"diag_acc", m.diag_acc},
          {"diag_f1", m.diag_macro_f1},
          {"concept_acc", m.concept_acc},
          {"concept_f1", m.concept_macro_f1}};
}

void dump_edges(const fs::path& path, const dcg::Tensor& mat) {
  std::string out;
  for (int64_t i = 0; i < mat.dim(0); ++i)
    for (int64_t j = 0; j < mat.dim(1); ++j) {
      double w = mat.at(i, j);
      if (w == 0.0) continue;
      out += std::to_string(i);
      out += '\t';
      out += std::to_string(j);
      out += '\t';
      out += dcg::format_double(w);
      out += '\n';
    }
  dcg::write_text_file_atomic(path, out);
}

void dump_nodes(const fs::path& path, const dcg::ConceptDictionary& dict) {
  std::string out;
  for (int64_t id = 0; id < dict.node_count(); ++id) {
    auto [k, m] = dict.node_km(id);
    out += std::to_string(id);
    out += '\t';
    out += dict.concepts()[static_cast<size_t>(k)].name;
    out += '\t';
    out += dict.concepts()[static_cast<size_t>(k)].values[static_cast<size_t>(m)];
    out += '\n';
  }
  dcg::write_text_file_atomic(path, out);
}

// One training run: fit, keep the best-validation checkpoint, report test
// metrics. Returns nullopt when training aborted.
std::optional<dcg::EvalMetrics> run_training(const dcg::DatasetBundle& ds, RunConfig rc,
                                             uint64_t seed, const fs::path& out_dir) {
  rc.train.seed = seed;
  fs::create_directories(out_dir);
  dcg::Model model = build_fresh_model(ds, rc.model, seed);
  dcg::TrainResult res = dcg::train_model(model, ds.train, ds.val, rc.train);

  model.load_snapshot(res.best_params);
  dcg::save_checkpoint(out_dir / "model.ckpt", model);
  std::string log_text;
  for (const auto& line : res.log_lines) {
    log_text += line;
    log_text += '\n';
  }
  dcg::write_text_file_atomic(out_dir / "train.log", log_text);

  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.abort_reason
              << " (last good checkpoint kept at " << (out_dir / "model.ckpt").string() << ")\n";
    return std::nullopt;
  }

  dcg::EvalMetrics test = dcg::evaluate_split(model, ds.test);
  ordered_json summary;
  summary["seed"] = seed;
  summary["best_epoch"] = res.best_epoch;
  summary["best_val_f1"] = res.best_val_f1;
  summary["test"] = metrics_json(test);
  dcg::write_text_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  return test;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              std::optional<uint64_t> seed) {
  dcg::SyntheticSpec spec;
  if (!spec_path.empty()) {
    if (!fs::exists(spec_path)) throw dcg::DataError("no spec file at " + spec_path);
    try {
      spec = dcg::SyntheticSpec::from_json(json::parse(dcg::read_text_file(spec_path)));
    } catch (const json::exception& e) {
      throw dcg::DataError("spec parse failure: " + std::string(e.what()));
    }
  }
  if (seed) spec.seed = *seed;
  dcg::DatasetBundle ds = dcg::generate(spec);
  dcg::write_dataset(ds, out_dir);
  std::cout << "dataset written to " << out_dir << "\n"
            << "train " << ds.train.size() << "  val " << ds.val.size() << "  test "
            << ds.test.size() << "\n"
            << "bayes_accuracy " << dcg::format_double(*ds.bayes_accuracy) << "\n"
            << "schema_hash " << ds.schema.schema_hash() << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& config_path, std::optional<uint64_t> seed,
              const std::string& seeds_csv) {
  dcg::DatasetBundle ds = dcg::read_dataset(data_dir);
  RunConfig rc = load_run_config(config_path);

  std::vector<uint64_t> seeds;
  if (!seeds_csv.empty()) {
    for (const auto& tok : dcg::split(seeds_csv, ','))
      seeds.push_back(static_cast<uint64_t>(dcg::parse_int(tok, "--seeds")));
    if (seeds.empty()) throw dcg::ConfigError("--seeds: no seeds given");
  } else {
    seeds.push_back(seed.value_or(rc.train.seed));
  }

  if (seeds.size() == 1) {
    auto test = run_training(ds, rc, seeds[0], out_dir);
    if (!test) return 1;
    std::cout << "seed " << seeds[0] << " test metrics\n" << metrics_pretty(*test) << "\n";
    return 0;
  }

  std::vector<dcg::EvalMetrics> all;
  for (uint64_t s : seeds) {
    auto test = run_training(ds, rc, s, fs::path(out_dir) / ("seed_" + std::to_string(s)));
    if (!test) return 1;
    std::cout << "seed " << s << ": diag_acc " << dcg::format_double(test->diag_acc)
              << " diag_f1 " << dcg::format_double(test->diag_macro_f1) << " concept_acc "
              << dcg::format_double(test->concept_acc) << " concept_f1 "
              << dcg::format_double(test->concept_macro_f1) << "\n";
    all.push_back(*test);
  }

  auto agg = [&](auto pick) {
    double mean = 0.0;
    for (const auto& m : all) mean += pick(m);
    mean /= static_cast<double>(all.size());
    double var = 0.0;
    for (const auto& m : all) var += (pick(m) - mean) * (pick(m) - mean);
    double sd = all.size() > 1 ? std::sqrt(var / static_cast<double>(all.size() - 1)) : 0.0;
    return std::pair<double, double>(mean, sd);
  };
  auto [da, das] = agg([](const dcg::EvalMetrics& m) { return m.diag_acc; });
  auto [df, dfs] = agg([](const dcg::EvalMetrics& m) { return m.diag_macro_f1; });
  auto [ca, cas] = agg([](const dcg::EvalMetrics& m) { return m.concept_acc; });
  auto [cf, cfs] = agg([](const dcg::EvalMetrics& m) { return m.concept_macro_f1; });
  std::printf("aggregate over %zu seeds (mean +/- std)\n", all.size());
  std::printf("diag_acc    %.4f +/- %.4f\n", da, das);
  std::printf("diag_f1     %.4f +/- %.4f\n", df, dfs);
  std::printf("concept_acc %.4f +/- %.4f\n", ca, cas);
  std::printf("concept_f1  %.4f +/- %.4f\n", cf, cfs);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
             const std::string& format) {
  dcg::CheckpointData ckpt = dcg::load_checkpoint(ckpt_path);
  dcg::DatasetBundle ds = dcg::read_dataset(data_dir);
  dcg::require_schema_match(ckpt, ds.schema);
  dcg::Model model = dcg::model_from_checkpoint(ckpt);
  check_dims(model, ds);
  dcg::EvalMetrics m = dcg::evaluate_split(model, ds.split(split));
  if (format == "records")
    std::cout << metrics_json(m).dump() << "\n";
  else
    std::cout << metrics_pretty(m) << "\n";
  return 0;
}

int cmd_explain(const std::string& ckpt_path, const std::string& data_dir,
                const std::string& samples_csv, const std::string& split,
                const std::string& format, const std::string& out_path, int top_n) {
  dcg::CheckpointData ckpt = dcg::load_checkpoint(ckpt_path);
  dcg::DatasetBundle ds = dcg::read_dataset(data_dir);
  dcg::require_schema_match(ckpt, ds.schema);
  dcg::Model model = dcg::model_from_checkpoint(ckpt);
  check_dims(model, ds);

  std::vector<int64_t> ids;
  for (const auto& tok : dcg::split(samples_csv, ','))
    ids.push_back(dcg::parse_int(tok, "--samples"));
  if (ids.empty()) throw dcg::ConfigError("--samples: no sample ids given");

  const dcg::Split& sp = ds.split(split);
  dcg::NoGradGuard ng;
  dcg::Model::Shared shared = model.shared_forward();
  dcg::ExplainOptions opts;
  opts.top_n = top_n;

  std::string out;
  for (int64_t id : ids) {
    const dcg::SampleRecord* found = nullptr;
    for (const auto& s : sp.samples)
      if (s.id == id) {
        found = &s;
        break;
      }
    if (!found)
      throw dcg::DataError("sample id " + std::to_string(id) + " not in split \"" + split + "\"");
    dcg::ModelOutput mo = model.forward(*found, shared);
    ordered_json rep = dcg::build_report(model, shared, mo, *found, opts);
    if (format == "pretty")
      out += dcg::render_pretty(rep);
    else
      out += rep.dump() + "\n";
  }
  if (out_path.empty())
    std::cout << out;
  else
    dcg::write_text_file_atomic(out_path, out);
  return 0;
}

int cmd_graph(const std::string& ckpt_path, const std::string& data_dir,
              const std::string& out_dir, double smoothing) {
  if (ckpt_path.empty() && data_dir.empty())
    throw dcg::ConfigError("graph: need --ckpt and/or --data");
  fs::create_directories(out_dir);

  if (!ckpt_path.empty()) {
    dcg::CheckpointData ckpt = dcg::load_checkpoint(ckpt_path);
    dcg::Model model = dcg::model_from_checkpoint(ckpt);
    if (!data_dir.empty()) {
      dcg::DatasetBundle ds = dcg::read_dataset(data_dir);
      dcg::require_schema_match(ckpt, ds.schema);
    }
    dump_nodes(fs::path(out_dir) / "nodes.tsv", model.dict());
    dump_edges(fs::path(out_dir) / "a0.tsv", model.ppmi());
    dump_edges(fs::path(out_dir) / "r.tsv", model.mask());
    if (model.config().use_graph) {
      dcg::NoGradGuard ng;
      dcg::Model::Shared shared = model.shared_forward();
      dump_edges(fs::path(out_dir) / "ahat.tsv", shared.adjacency);
    }
    std::cout << "graph dumps written to " << out_dir << "\n";
    return 0;
  }

  dcg::DatasetBundle ds = dcg::read_dataset(data_dir);
  dcg::PpmiPrior prior = dcg::build_ppmi(dcg::concept_label_table(ds.train), ds.schema, smoothing);
  dump_nodes(fs::path(out_dir) / "nodes.tsv", ds.schema);
  dump_edges(fs::path(out_dir) / "a0.tsv", prior.matrix);
  dump_edges(fs::path(out_dir) / "r.tsv", dcg::build_mask(ds.schema));
  std::cout << "graph dumps written to " << out_dir << " (no checkpoint: prior and mask only)\n";
  return 0;
}

int cmd_gradcheck(const std::string& op, bool corrupt, bool list) {
  if (list) {
    for (const auto& n : dcg::gradcheck_names()) std::cout << n << "\n";
    return 0;
  }
  dcg::GradCheckOptions opts;
  opts.only_op = op;
  opts.corrupt = corrupt;
  auto reports = dcg::run_gradchecks(opts);
  for (const auto& r : reports) {
    std::printf("%s %-18s max_rel=%.3e coords=%lld time=%.2fs", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.max_rel, static_cast<long long>(r.coords), r.seconds);
    if (!r.pass) std::printf(" worst=%s", r.worst.c_str());
    std::printf("\n");
  }
  return dcg::all_passed(reports) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept-grounded diagnosis: synthesis, training, explanation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic concept-annotated dataset");
  std::string synth_spec, synth_out;
  std::optional<uint64_t> synth_seed;
  synth->add_option("--spec", synth_spec, "generator spec JSON (omit for the built-in default)");
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--seed", synth_seed, "override the spec seed");

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset directory");
  std::string train_data, train_out, train_config, train_seeds;
  std::optional<uint64_t> train_seed;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--config", train_config, "run config JSON ({\"model\":..,\"train\":..})");
  train->add_option("--seed", train_seed, "training seed (overrides config)");
  train->add_option("--seeds", train_seeds, "comma-separated seed sweep, e.g. 1,2,3");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "test", eval_format = "pretty";
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--split", eval_split, "train|val|test (default test)");
  eval->add_option("--format", eval_format, "pretty|records")
      ->check(CLI::IsMember({"pretty", "records"}));

  // explain
  auto* explain = app.add_subcommand("explain", "export per-sample explanation reports");
  std::string ex_ckpt, ex_data, ex_samples, ex_split = "test", ex_format = "records", ex_out;
  int ex_topn = 5;
  explain->add_option("--ckpt", ex_ckpt, "checkpoint file")->required();
  explain->add_option("--data", ex_data, "dataset directory")->required();
  explain->add_option("--samples", ex_samples, "comma-separated sample ids")->required();
  explain->add_option("--split", ex_split, "train|val|test (default test)");
  explain->add_option("--top-n", ex_topn, "concepts shown in panels B/C (default 5)");
  explain->add_option("--format", ex_format, "pretty|records")
      ->check(CLI::IsMember({"pretty", "records"}));
  explain->add_option("--out", ex_out, "write reports to a file instead of stdout");

  // graph
  auto* graph = app.add_subcommand("graph", "dump prior/mask/adjacency as edge lists");
  std::string g_ckpt, g_data, g_out;
  double g_smoothing = 1.0;
  graph->add_option("--ckpt", g_ckpt, "checkpoint file");
  graph->add_option("--data", g_data, "dataset directory");
  graph->add_option("--out", g_out, "output directory")->required();
  graph->add_option("--smoothing", g_smoothing, "PPMI smoothing when building from data");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient self-tests");
  std::string gc_op;
  bool gc_corrupt = false, gc_list = false;
  gc->add_option("--op", gc_op, "check a single op by name");
  gc->add_flag("--corrupt", gc_corrupt, "deliberately damage one gradient (must fail)");
  gc->add_flag("--list", gc_list, "list check names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_spec, synth_out, synth_seed);
    if (*train) return cmd_train(train_data, train_out, train_config, train_seed, train_seeds);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_split, eval_format);
    if (*explain)
      return cmd_explain(ex_ckpt, ex_data, ex_samples, ex_split, ex_format, ex_out, ex_topn);
    if (*graph) return cmd_graph(g_ckpt, g_data, g_out, g_smoothing);
    if (*gc) return cmd_gradcheck(gc_op, gc_corrupt, gc_list);
  } catch (const dcg::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dcg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
