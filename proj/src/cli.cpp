#include "cprobe/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "cprobe/evaluator.hpp"
#include "cprobe/frequency.hpp"
#include "cprobe/http_backend.hpp"
#include "cprobe/parallel.hpp"
#include "cprobe/probe.hpp"
#include "cprobe/report.hpp"
#include "cprobe/synth.hpp"
#include "cprobe/toy_backend.hpp"
#include "cprobe/toyformer.hpp"

namespace cprobe {
namespace fs = std::filesystem;

ActivationStore capture_examples(const Backend& backend,
                                 const std::vector<LabeledExample>& examples) {
  const BackendMeta meta = backend.meta();
  std::vector<int> layers(static_cast<std::size_t>(meta.num_layers));
  for (int l = 0; l < meta.num_layers; ++l) layers[static_cast<std::size_t>(l)] = l;

  std::vector<const LabeledExample*> todo;
  for (const auto& e : examples)
    if (e.label != Label::ND) todo.push_back(&e);

  std::vector<std::vector<ActivationRecord>> per_example(todo.size());
  parallel_for(todo.size(), [&](std::size_t i) {
    const LabeledExample& e = *todo[i];
    if (e.token_positions.size() != kAllRoles.size())
      throw std::runtime_error("example " + std::to_string(e.id) + " lacks token positions");
    std::vector<int> positions;
    for (const auto& [role, pos] : e.token_positions) positions.push_back(pos);
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());

    const auto acts = backend.capture_activations(e.prompt.text, positions, layers, kAllModules);
    for (const auto& [role, pos] : e.token_positions) {
      for (const auto& a : acts) {
        if (a.position != pos) continue;
        per_example[i].push_back({e.id, static_cast<std::uint16_t>(a.layer), a.module, role,
                                  a.vector});
      }
    }
  });

  ActivationStore store(meta);
  for (auto& recs : per_example) {
    std::sort(recs.begin(), recs.end(), [](const ActivationRecord& a, const ActivationRecord& b) {
      return std::tie(a.layer, a.module, a.token_role) < std::tie(b.layer, b.module, b.token_role);
    });
    for (auto& r : recs) store.add(std::move(r));
  }
  return store;
}

namespace {

class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string backend;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
};

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

void require(const fs::path& path, const char* producer) {
  if (!fs::exists(path))
    throw CliError("missing input " + path.string() + " (produced by `" + producer + "`)");
}

std::string percent(std::size_t num, std::size_t den) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(1);
  s << (den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den)) << "%";
  return s.str();
}

std::string fixed(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError("cannot write " + path.string());
  out << text;
}

std::unique_ptr<Backend> open_backend(const Globals& g) {
  if (!g.backend.empty()) return make_backend(g.backend);
  if (const char* env = std::getenv("CONFLICT_PROBE_BACKEND_URL"); env && *env)
    return make_backend("");
  const fs::path model = fs::path(g.out_dir) / "model";
  if (fs::exists(model / "manifest.json")) return make_backend("toy:" + model.string());
  throw CliError("no backend: pass --backend, set CONFLICT_PROBE_BACKEND_URL, or run `train-toy`");
}

KnowledgeBase open_kb(const fs::path& dir) {
  require(dir / "kb.jsonl", "synth-kb");
  return load_kb(dir);
}

std::vector<LabeledExample> open_labels(const fs::path& path) {
  require(path, "label");
  return read_labeled(path);
}

ActivationStore open_store(const fs::path& path) {
  require(path, "capture");
  return read_store(path);
}

std::optional<ProbeAddress> parse_address(int layer, const std::string& module,
                                          const std::string& role) {
  if (layer < 0 && module.empty() && role.empty()) return std::nullopt;
  if (layer < 0 || module.empty() || role.empty())
    throw CliError("--layer, --module and --role must be given together");
  return ProbeAddress{layer, module_from_string(module), role_from_string(role)};
}

std::string probe_dir_name(const ProbeAddress& a) {
  return "L" + std::to_string(a.layer) + "_" + std::string(to_string(a.module)) + "_" +
         std::string(to_string(a.role));
}

double training_accuracy(const ProbeModel& probe, const ProbeDataset& ds) {
  return ds.size() == 0 ? 0.0 : success_rate(probe, ds);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw CliError("--seeds needs at least one value");
  return seeds;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parametric vs contextual knowledge probing"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--backend", g.backend, "toy:<model-dir> or http:<base-url>");
  app.add_option("--seed", g.seed, "seed for generation, balancing and training");
  app.add_option("--out-dir", g.out_dir, "directory for default artifact paths");

  std::function<void()> action;
  auto dir = [&] { return fs::path(g.out_dir); };

  // synth-kb
  SynthOptions synth;
  std::string synth_dir;
  auto* c_synth = app.add_subcommand("synth-kb", "generate a synthetic knowledge base and corpus");
  c_synth->add_option("--facts", synth.facts);
  c_synth->add_option("--groups", synth.groups);
  c_synth->add_option("--objects", synth.objects_per_relation, "objects per relation");
  c_synth->add_option("--max-frequency", synth.max_frequency);
  c_synth->add_option("--conflict-demos", synth.conflict_demos);
  c_synth->add_option("--kb-dir", synth_dir);
  c_synth->callback([&] {
    action = [&] {
      synth.seed = g.seed;
      const auto path = or_default(synth_dir, dir() / "kb");
      const auto result = synthesize_kb(synth);
      write_synth(path, result);
      out << "synth-kb: " << result.kb.triplets().size() << " facts, "
          << result.kb.groups().size() << " groups, " << result.subject_frequency.size()
          << " subjects, " << result.corpus.size() << " corpus documents -> " << path.string()
          << "\n";
    };
  });

  // train-toy
  toy::ToyConfig config;
  std::string optimizer = "sgd", corpus_path, model_dir;
  auto* c_train = app.add_subcommand("train-toy", "train the toy transformer on a corpus");
  c_train->add_option("--corpus", corpus_path);
  c_train->add_option("--model-dir", model_dir);
  c_train->add_option("--layers", config.num_layers);
  c_train->add_option("--d-model", config.d_model);
  c_train->add_option("--d-mlp", config.d_mlp);
  c_train->add_option("--heads", config.num_heads);
  c_train->add_option("--context", config.context_len);
  c_train->add_option("--epochs", config.epochs);
  c_train->add_option("--lr", config.learning_rate);
  c_train->add_option("--batch", config.batch_size);
  c_train->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  bool quiet = false;
  c_train->add_flag("--quiet", quiet, "no per-epoch progress");
  c_train->callback([&] {
    action = [&] {
      const auto corpus_file = or_default(corpus_path, dir() / "kb" / "corpus.jsonl");
      require(corpus_file, "synth-kb");
      const auto target = or_default(model_dir, dir() / "model");
      config.seed = g.seed;
      config.optimizer = optimizer == "sgd" ? toy::Optimizer::SGD : toy::Optimizer::Adam;
      const auto trained =
          toy::train_on_corpus(config, read_corpus(corpus_file), [&](int epoch, double loss) {
            if (!quiet) err << "epoch " << epoch << " loss " << fixed(loss, 6) << "\n";
          });
      toy::save_model(target, trained.result.state, trained.tokenizer);
      out << "train-toy: " << trained.result.steps << " steps, final loss "
          << fixed(trained.result.final_loss, 6) << ", vocab " << trained.tokenizer.vocab().size()
          << " -> " << target.string() << "\n";
    };
  });

  // elicit
  std::string kb_dir, pk_path, removed_path;
  double jw_threshold = 0.8;
  auto* c_elicit = app.add_subcommand("elicit", "elicit parametric answers for every KB fact");
  c_elicit->add_option("--kb-dir", kb_dir);
  c_elicit->add_option("--out", pk_path);
  c_elicit->add_option("--jw-threshold", jw_threshold);
  c_elicit->callback([&] {
    action = [&] {
      const auto kb = open_kb(or_default(kb_dir, dir() / "kb"));
      const auto filtered = filter_subject_object_bias(kb, jw_threshold);
      write_removal_log(dir() / "removed.jsonl", filtered.removed);
      const auto backend = open_backend(g);
      PipelineLog log;
      const auto pk = elicit_pk(filtered.kb, *backend, &log);
      for (const auto& e : log.entries) err << e << "\n";
      const auto path = or_default(pk_path, dir() / "pk.jsonl");
      write_pk(path, pk);
      std::size_t matched = 0;
      for (const auto& r : pk) matched += r.matched;
      out << "elicit: " << matched << "/" << pk.size() << " matched (" << percent(matched, pk.size())
          << "), " << filtered.removed.size() << " removed by similarity -> " << path.string()
          << "\n";
    };
  });

  // counterfact
  std::string counter_path;
  int k = 3;
  auto* c_counter = app.add_subcommand("counterfact", "pick counter-objects for matched facts");
  c_counter->add_option("--pk", pk_path);
  c_counter->add_option("--k", k);
  c_counter->add_option("--out", counter_path);
  c_counter->callback([&] {
    action = [&] {
      const auto in = or_default(pk_path, dir() / "pk.jsonl");
      require(in, "elicit");
      const auto backend = open_backend(g);
      PipelineLog log;
      const auto counters = build_counter_pk(read_pk(in), *backend, k, &log);
      for (const auto& e : log.entries) err << e << "\n";
      const auto path = or_default(counter_path, dir() / "counter.jsonl");
      write_counters(path, counters);
      out << "counterfact: " << counters.size() << " counter records (k=" << k << ") -> "
          << path.string() << "\n";
    };
  });

  // prompts
  std::string prompts_path;
  auto* c_prompts = app.add_subcommand("prompts", "build probing prompts from counter records");
  c_prompts->add_option("--counter", counter_path);
  c_prompts->add_option("--kb-dir", kb_dir);
  c_prompts->add_option("--out", prompts_path);
  c_prompts->callback([&] {
    action = [&] {
      const auto in = or_default(counter_path, dir() / "counter.jsonl");
      require(in, "counterfact");
      const auto kb = open_kb(or_default(kb_dir, dir() / "kb"));
      std::vector<ProbePrompt> prompts;
      for (const auto& c : read_counters(in)) prompts.push_back(build_probe_prompt(c, kb));
      const auto path = or_default(prompts_path, dir() / "prompts.jsonl");
      write_prompts(path, prompts);
      out << "prompts: " << prompts.size() << " prompts -> " << path.string() << "\n";
    };
  });

  // label
  std::string labels_path;
  auto* c_label = app.add_subcommand("label", "label prompts as CK, PK or ND");
  c_label->add_option("--prompts", prompts_path);
  c_label->add_option("--kb-dir", kb_dir);
  c_label->add_option("--out", labels_path);
  c_label->callback([&] {
    action = [&] {
      const auto in = or_default(prompts_path, dir() / "prompts.jsonl");
      require(in, "prompts");
      const auto kb = open_kb(or_default(kb_dir, dir() / "kb"));
      const auto backend = open_backend(g);
      const auto labeled = label_examples(read_prompts(in), *backend, kb);
      const auto path = or_default(labels_path, dir() / "labeled.jsonl");
      write_labeled(path, labeled);
      const auto s = summarize_labels(labeled).overall;
      out << "label: CK " << s.ck << ", PK " << s.pk << ", ND " << s.nd << " -> " << path.string()
          << "\n";
    };
  });

  // capture
  std::string store_path;
  auto* c_capture = app.add_subcommand("capture", "capture activations for labeled examples");
  c_capture->add_option("--labels", labels_path);
  c_capture->add_option("--out", store_path);
  c_capture->callback([&] {
    action = [&] {
      const auto labeled = open_labels(or_default(labels_path, dir() / "labeled.jsonl"));
      const auto backend = open_backend(g);
      const auto store = capture_examples(*backend, labeled);
      const auto path = or_default(store_path, dir() / "acts.aprb");
      write_store(path, store);
      out << "capture: " << store.size() << " records, " << store.meta().num_layers
          << " layers -> " << path.string() << "\n";
    };
  });

  // train-probe
  int layer = -1;
  std::string module_name, role_name, probe_out;
  ProbeOptions probe_options;
  auto add_probe_options = [&](CLI::App* c) {
    c->add_option("--l2", probe_options.l2);
    c->add_option("--max-iters", probe_options.max_iters);
    c->add_option("--tol", probe_options.tol);
  };
  auto* c_tprobe = app.add_subcommand("train-probe", "train one probe on all balanced data");
  c_tprobe->add_option("--store", store_path);
  c_tprobe->add_option("--labels", labels_path);
  c_tprobe->add_option("--layer", layer)->required();
  c_tprobe->add_option("--module", module_name)->required();
  c_tprobe->add_option("--role", role_name)->required();
  c_tprobe->add_option("--out", probe_out);
  add_probe_options(c_tprobe);
  c_tprobe->callback([&] {
    action = [&] {
      const auto address = *parse_address(layer, module_name, role_name);
      const auto store = open_store(or_default(store_path, dir() / "acts.aprb"));
      const auto labeled = open_labels(or_default(labels_path, dir() / "labeled.jsonl"));
      const auto ds = undersample_balance(
          assemble_dataset(store, address.layer, address.module, address.role, labeled), g.seed);
      const auto probe = train_linear_probe(ds, probe_options);
      const auto path = or_default(probe_out, dir() / "probes" / probe_dir_name(address));
      save_probe(path, probe, address, ds.size());
      out << "train-probe: " << probe_dir_name(address) << ", " << ds.size() << " rows, "
          << probe.iterations << " iterations, train accuracy "
          << fixed(training_accuracy(probe, ds)) << " -> " << path.string() << "\n";
    };
  });

  // evaluate
  std::string results_path;
  bool shuffled = false;
  auto* c_eval = app.add_subcommand("evaluate", "leave-one-group-out evaluation");
  c_eval->add_option("--store", store_path);
  c_eval->add_option("--labels", labels_path);
  c_eval->add_option("--out", results_path);
  c_eval->add_option("--layer", layer);
  c_eval->add_option("--module", module_name);
  c_eval->add_option("--role", role_name);
  c_eval->add_flag("--shuffled", shuffled, "permutation control with shuffled labels");
  add_probe_options(c_eval);
  c_eval->callback([&] {
    action = [&] {
      const auto store = open_store(or_default(store_path, dir() / "acts.aprb"));
      const auto labeled = open_labels(or_default(labels_path, dir() / "labeled.jsonl"));
      std::vector<ProbeAddress> only;
      if (auto a = parse_address(layer, module_name, role_name)) only.push_back(*a);
      const auto results = evaluate_store(store, labeled, g.seed, probe_options, shuffled, only);
      const auto path = or_default(results_path, dir() / "results.jsonl");
      write_results(path, results);
      const auto best = std::max_element(results.begin(), results.end(), [](auto& a, auto& b) {
        return a.aggregate.P < b.aggregate.P;
      });
      out << "evaluate: " << results.size() << " addresses, best P " << fixed(best->aggregate.P)
          << " at " << probe_dir_name(best->address) << " -> " << path.string() << "\n";
    };
  });

  // probe-all
  auto* c_all = app.add_subcommand("probe-all", "capture, train and evaluate every address");
  c_all->add_option("--labels", labels_path);
  c_all->add_option("--store", store_path);
  c_all->add_option("--out", results_path);
  c_all->add_flag("--shuffled", shuffled);
  add_probe_options(c_all);
  c_all->callback([&] {
    action = [&] {
      const auto labeled = open_labels(or_default(labels_path, dir() / "labeled.jsonl"));
      const auto backend = open_backend(g);
      const auto store = capture_examples(*backend, labeled);
      write_store(or_default(store_path, dir() / "acts.aprb"), store);

      const auto addresses = all_addresses(store.meta());
      parallel_for(addresses.size(), [&](std::size_t i) {
        const auto& a = addresses[i];
        auto ds = assemble_dataset(store, a.layer, a.module, a.role, labeled);
        if (shuffled) ds = shuffle_labels(ds, g.seed);
        ds = undersample_balance(ds, g.seed);
        save_probe(dir() / "probes" / probe_dir_name(a), train_linear_probe(ds, probe_options), a,
                   ds.size());
      });
      const auto results = evaluate_store(store, labeled, g.seed, probe_options, shuffled);
      const auto path = or_default(results_path, dir() / "results.jsonl");
      write_results(path, results);
      out << "probe-all: " << store.size() << " records, " << addresses.size()
          << " probes, results -> " << path.string() << "\n";
    };
  });

  // labels-summary
  std::string csv_path;
  auto* c_lsum = app.add_subcommand("labels-summary", "CK/PK/ND counts per relation and overall");
  c_lsum->add_option("--labels", labels_path);
  c_lsum->add_option("--csv", csv_path);
  c_lsum->callback([&] {
    action = [&] {
      const auto summary =
          summarize_labels(open_labels(or_default(labels_path, dir() / "labeled.jsonl")));
      const auto path = or_default(csv_path, dir() / "labels_summary.csv");
      write_text(path, labels_csv(summary));
      err << labels_table(summary);
      out << "labels-summary: CK " << summary.overall.ck << ", PK " << summary.overall.pk
          << ", ND " << summary.overall.nd << " over " << summary.per_relation.size()
          << " relations -> " << path.string() << "\n";
    };
  });

  // freq-report
  std::string freq_url, freq_out;
  auto* c_freq = app.add_subcommand("freq-report", "subject frequency by label with U tests");
  c_freq->add_option("--labels", labels_path);
  c_freq->add_option("--corpus", corpus_path, "local corpus (.jsonl text field or plain lines)");
  c_freq->add_option("--freq-url", freq_url, "remote count service base URL");
  c_freq->add_option("--out", freq_out);
  c_freq->callback([&] {
    action = [&] {
      const auto labeled = open_labels(or_default(labels_path, dir() / "labeled.jsonl"));
      std::unique_ptr<FrequencyProvider> provider;
      if (!freq_url.empty()) {
        provider = std::make_unique<RemoteFrequencyProvider>(freq_url);
      } else {
        const auto corpus = or_default(corpus_path, dir() / "kb" / "corpus.jsonl");
        require(corpus, "synth-kb");
        provider = std::make_unique<CorpusFrequencyProvider>(read_corpus(corpus));
      }
      const auto report = subject_frequency_report(labeled, *provider);
      const auto path = or_default(freq_out, dir() / "freq_report.json");
      write_text(path, to_json(report).dump(2) + "\n");
      out << "freq-report:";
      for (const auto& c : report.comparisons) {
        out << " " << c.name;
        if (c.ran)
          out << " U=" << fixed(c.test.u_a, 1) << " p=" << fixed(c.test.p_greater);
        else
          out << " skipped";
        out << ";";
      }
      out << " " << report.failures.size() << " lookup failures -> " << path.string() << "\n";
    };
  });

  // seed-sweep
  std::string seeds_text = "0,1,2,3,4", sweep_out;
  auto* c_sweep = app.add_subcommand("seed-sweep", "repeat evaluation over several seeds");
  c_sweep->add_option("--store", store_path);
  c_sweep->add_option("--labels", labels_path);
  c_sweep->add_option("--seeds", seeds_text, "comma-separated");
  c_sweep->add_option("--out", sweep_out, "CSV path");
  c_sweep->add_flag("--shuffled", shuffled);
  add_probe_options(c_sweep);
  c_sweep->callback([&] {
    action = [&] {
      const auto store = open_store(or_default(store_path, dir() / "acts.aprb"));
      const auto labeled = open_labels(or_default(labels_path, dir() / "labeled.jsonl"));
      const auto seeds = parse_seeds(seeds_text);
      const auto report = seed_sweep(store, labeled, seeds, probe_options, shuffled);
      const auto path = or_default(sweep_out, dir() / (shuffled ? "sweep_shuffled.csv" : "sweep.csv"));
      write_text(path, sweep_csv(report));
      for (std::size_t i = 0; i < seeds.size(); ++i)
        write_results(path.parent_path() / ("sweep_seed" + std::to_string(seeds[i]) + ".jsonl"),
                      report.runs[i]);
      double max_sd = 0.0;
      for (const auto& row : report.rows) max_sd = std::max(max_sd, row.stddev);
      out << "seed-sweep: " << seeds.size() << " seeds, " << report.rows.size()
          << " addresses, mean P " << fixed(report.overall_mean) << ", max stddev "
          << fixed(max_sd) << " -> " << path.string() << "\n";
    };
  });

  // report
  std::string report_in, report_prefix;
  auto* c_report = app.add_subcommand("report", "CSV and SVG curves from results");
  c_report->add_option("--in", report_in);
  c_report->add_option("--out-prefix", report_prefix);
  c_report->callback([&] {
    action = [&] {
      const auto in = or_default(report_in, dir() / "results.jsonl");
      require(in, "evaluate");
      const auto results = read_results(in);
      const auto prefix = or_default(report_prefix, in.parent_path() / in.stem());
      write_text(prefix.string() + ".csv", results_csv(results));
      write_text(prefix.string() + ".svg", results_svg(results));
      out << "report: " << results.size() << " rows -> " << prefix.string() << ".csv, "
          << prefix.string() << ".svg\n";
    };
  });

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "expose the backend over the wire protocol");
  c_serve->add_option("--host", host);
  c_serve->add_option("--port", port);
  c_serve->callback([&] {
    action = [&] {
      const auto backend = open_backend(g);
      WireServer server(*backend);
      out << "serve: " << backend->meta().model_name << " on " << host << ":" << port << "\n";
      out.flush();
      server.listen_blocking(host, port);
    };
  });

  std::vector<std::string> argv_store;
  argv_store.push_back("conflict-probe");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (action) action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace cprobe
