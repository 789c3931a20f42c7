// Copyright 2026 The LDRF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <functional>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ldrf/benchmark.hpp"
#include "ldrf/decompose.hpp"
#include "ldrf/error.hpp"
#include "ldrf/io.hpp"
#include "ldrf/metrics.hpp"
#include "ldrf/pruner.hpp"
#include "ldrf/recompose.hpp"
#include "ldrf/reconstruct.hpp"

namespace ldrf::cli {

namespace {

using nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool reproducible = false;
  std::string flops_scope = "conv";

  int threads() const { return reproducible ? 1 : 0; }
};

json load_json(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, path + ": malformed JSON: " + e.what());
  }
}

void emit_text(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty())
    out << text;
  else
    write_text(path, text);
}

void emit(const json& j, const std::string& path, std::ostream& out) { emit_text(j.dump(2) + "\n", path, out); }

// Rank report of an already decomposed network; z is the embedding width.
RankReport report_from_decomposed(const Network& net) {
  RankReport r;
  r.energy = net.info.value("energy", 0.0);
  for (const auto& [e, t] : decomposed_pairs(net)) {
    RankEntry entry;
    entry.name = net.layers[t].name.substr(0, net.layers[t].name.size() - 2);
    entry.z = net.layers[e].out;
    entry.n = net.layers[t].out;
    r.layers.push_back(std::move(entry));
  }
  return r;
}

int exit_status(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kFormatError:
    case ErrorCode::kIoError:
      return kExitUsage;
    case ErrorCode::kDivergence:
      return kExitDivergence;
    default:
      return kExitFailure;
  }
}

void stamp(Network& net, const std::string& command, const json& config, const Globals& g) {
  net.info["provenance"] = {{"command", command}, {"seed", g.seed}, {"reproducible", g.reproducible}, {"config", config}};
}

json header(const std::string& command, const json& config, const Globals& g) {
  return {{"version", 1}, {"command", command}, {"seed", g.seed}, {"reproducible", g.reproducible}, {"config", config}};
}

}  // namespace

int run_command(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neuron pruning by layer decomposition and recomposition", "ldrf"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed recorded in every output");
  app.add_flag("--reproducible", g.reproducible, "Single-threaded, bit-reproducible execution");
  app.add_option("--flops-scope", g.flops_scope, "Layers counted by cost reports")->check(CLI::IsMember({"conv", "all"}));

  std::function<void()> action;
  const auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // gen-data
  SyntheticSpec gen;
  std::string gen_out, gen_test_out;
  int gen_test_samples = 0;
  {
    CLI::App* s = sub("gen-data", "Write a seeded synthetic image dataset");
    s->add_option("--out", gen_out, "Dataset path")->required();
    s->add_option("--samples", gen.samples, "Samples in --out")->check(CLI::PositiveNumber);
    s->add_option("--test-out", gen_test_out, "Optional held-out split from the same distribution");
    s->add_option("--test-samples", gen_test_samples, "Samples in --test-out")->check(CLI::NonNegativeNumber);
    s->add_option("--classes", gen.classes, "Number of classes");
    s->add_option("--channels", gen.shape.c, "Image channels");
    s->add_option("--height", gen.shape.h, "Image height");
    s->add_option("--width", gen.shape.w, "Image width");
    s->add_option("--noise", gen.noise, "Pixel noise std-dev");
    s->add_option("--separation", gen.separation, "Class blob amplitude");
    s->callback([&] {
      action = [&] {
        require(gen_test_out.empty() || gen_test_samples > 0, "--test-out needs --test-samples > 0");
        SyntheticSpec synth = gen;
        synth.seed = g.seed;
        synth.samples = gen.samples + (gen_test_out.empty() ? 0 : gen_test_samples);
        const Dataset all = gen_synthetic(synth);
        save_dataset(all.subset(0, gen.samples), gen_out);
        if (!gen_test_out.empty()) save_dataset(all.subset(gen.samples, gen_test_samples), gen_test_out);
        emit(header("gen-data", synth.to_json(), g), "", out);
      };
    });
  }

  // train-toy
  std::string tt_data, tt_out;
  int tt_epochs = 16;
  OptimSettings tt_opt;
  {
    CLI::App* s = sub("train-toy", "Train the toy benchmark network on a dataset");
    s->add_option("--data", tt_data, "Training dataset")->required();
    s->add_option("--out", tt_out, "Model path")->required();
    s->add_option("--epochs", tt_epochs, "Training epochs")->check(CLI::PositiveNumber);
    s->add_option("--lr", tt_opt.lr, "Learning rate");
    s->add_option("--batch", tt_opt.batch, "Batch size")->check(CLI::PositiveNumber);
    s->callback([&] {
      action = [&] {
        const Dataset data = load_dataset(tt_data);
        Network net = make_toy_net(g.seed, static_cast<int>(data.num_classes), data.images.sample_shape());
        OptimSettings os = tt_opt;
        os.seed = g.seed;
        os.weight_decay = 1e-4;
        os.iters = tt_epochs * std::max(1, data.size() / os.batch);
        const TrainReport rep = train_classifier(net, data.images, data.labels, os);
        const json cfg = {{"data", tt_data}, {"epochs", tt_epochs}, {"lr", os.lr}, {"batch", os.batch}};
        stamp(net, "train-toy", cfg, g);
        save_model(net, tt_out);
        json j = header("train-toy", cfg, g);
        j["init_loss"] = rep.init_loss;
        j["final_loss"] = rep.final_loss;
        j["train_accuracy"] = evaluate(net, data, g.threads()).accuracy;
        emit(j, "", out);
      };
    });
  }

  // analyze
  std::string an_model, an_out, an_data, an_val;
  double an_energy = 0.5, an_tol = 0.01, an_start = 0.3;
  bool an_search = false;
  {
    CLI::App* s = sub("analyze", "Per-layer singular values, ranks and valid keep ranges");
    s->add_option("--model", an_model, "Plain model")->required();
    s->add_option("--energy", an_energy, "Preserved singular-value energy")->check(CLI::Range(1e-9, 1.0));
    s->add_option("--out", an_out, "Report path (stdout when omitted)");
    s->add_flag("--search-energy", an_search, "Pick the smallest energy that keeps accuracy");
    s->add_option("--data", an_data, "Statistics/training data for --search-energy");
    s->add_option("--val", an_val, "Validation data for --search-energy");
    s->add_option("--tolerance", an_tol, "Allowed accuracy drop for --search-energy");
    s->add_option("--start", an_start, "First energy tried by --search-energy");
    s->callback([&] {
      action = [&] {
        const Network net = load_model(an_model);
        json cfg = {{"model", an_model}, {"energy", an_energy}};
        RankReport rep;
        json extra;
        if (an_search) {
          require(!an_data.empty() && !an_val.empty(), "--search-energy needs --data and --val");
          const EnergySearchResult r = search_energy(net, load_dataset(an_data), load_dataset(an_val), an_tol, an_start);
          rep = r.result.report;
          extra = {{"energy", r.energy}, {"accuracy", r.accuracy}, {"reference_accuracy", r.reference_accuracy},
                   {"recovered", r.recovered}};
          cfg["search"] = {{"data", an_data}, {"val", an_val}, {"tolerance", an_tol}, {"start", an_start}};
        } else {
          rep = analyze_network(net, an_energy);
        }
        json j = rep.to_json();
        j.update(header("analyze", cfg, g));
        if (!extra.is_null()) j["search"] = extra;
        emit(j, an_out, out);
      };
    });
  }

  // decompose
  std::string de_model, de_data, de_out, de_report, de_val;
  double de_energy = 0.5, de_cls_energy = 0.0, de_tol = 0.01, de_start = 0.3;
  DecomposeOptions de_opt;
  de_opt.finetune.lr = 0.002;
  bool de_search = false;
  {
    CLI::App* s = sub("decompose", "Split every linear layer into embedding and transformation factors");
    s->add_option("--model", de_model, "Plain model")->required();
    s->add_option("--data", de_data, "Data for embedding statistics (and fine-tuning)")->required();
    s->add_option("--out", de_out, "Decomposed model path")->required();
    s->add_option("--energy", de_energy, "Preserved singular-value energy")->check(CLI::Range(1e-9, 1.0));
    s->add_option("--classifier-energy", de_cls_energy, "Energy for the classifier layer (0: same as --energy)");
    s->add_option("--finetune-iters", de_opt.finetune_iters, "Short fine-tune of the decomposed network");
    s->add_option("--finetune-lr", de_opt.finetune.lr, "Fine-tune learning rate");
    s->add_option("--report", de_report, "Rank report path");
    s->add_flag("--search-energy", de_search, "Pick the smallest energy that keeps accuracy");
    s->add_option("--val", de_val, "Validation data for --search-energy");
    s->add_option("--tolerance", de_tol, "Allowed accuracy drop for --search-energy");
    s->add_option("--start", de_start, "First energy tried by --search-energy");
    s->callback([&] {
      action = [&] {
        const Network net = load_model(de_model);
        const Dataset data = load_dataset(de_data);
        DecomposeOptions opt = de_opt;
        opt.classifier_energy = de_cls_energy;
        opt.finetune.seed = g.seed;
        json cfg = {{"model", de_model},
                    {"data", de_data},
                    {"energy", de_energy},
                    {"classifier_energy", de_cls_energy},
                    {"finetune_iters", opt.finetune_iters},
                    {"finetune_lr", opt.finetune.lr}};
        DecomposeResult res;
        if (de_search) {
          require(!de_val.empty(), "--search-energy needs --val");
          EnergySearchResult r = search_energy(net, data, load_dataset(de_val), de_tol, de_start, opt);
          cfg["energy"] = r.energy;
          cfg["search"] = {{"val", de_val}, {"tolerance", de_tol}, {"start", de_start}, {"recovered", r.recovered}};
          res = std::move(r.result);
        } else {
          res = decompose_network(net, de_energy, data, opt);
        }
        stamp(res.net, "decompose", cfg, g);
        save_model(res.net, de_out);
        json j = res.report.to_json();
        j.update(header("decompose", cfg, g));
        if (!de_report.empty()) emit(j, de_report, out);
        json summary = header("decompose", cfg, g);
        summary["ranks"] = json::object();
        for (const auto& e : res.report.layers) summary["ranks"][e.name] = {{"z", e.z}, {"n", e.n}};
        emit(summary, "", out);
      };
    });
  }

  // prune (LDRF) and baseline-prune share their options
  std::string pr_model, pr_config, pr_data, pr_out, pr_report;
  double pr_cls_energy = 0.0;
  const auto prune_options = [&](CLI::App* s) {
    s->add_option("--model", pr_model, "Input model")->required();
    s->add_option("--config", pr_config, "Prune config JSON")->required();
    s->add_option("--data", pr_data, "Reconstruction data")->required();
    s->add_option("--out", pr_out, "Pruned model path")->required();
    s->add_option("--report", pr_report, "Per-layer loss report path");
  };
  const auto load_config = [&] {
    PruneConfig cfg = PruneConfig::from_json(load_json(pr_config));
    if (g.seed_given) cfg.seed = g.seed;
    cfg.optim.seed = cfg.seed;
    g.seed = cfg.seed;
    return cfg;
  };
  int exit_override = -1;
  {
    CLI::App* s = sub("prune", "Prune with embedding-space reconstruction");
    prune_options(s);
    s->add_option("--classifier-energy", pr_cls_energy, "Classifier energy when decomposing a plain model");
    s->callback([&] {
      action = [&] {
        const PruneConfig cfg = load_config();
        Network net = load_model(pr_model);
        const Dataset data = load_dataset(pr_data);
        if (net.form == NetForm::kPlain) {
          DecomposeOptions opt;
          opt.classifier_energy = pr_cls_energy;
          net = decompose_network(net, cfg.energy, data, opt).net;
        }
        const auto violations = validate_config(cfg, report_from_decomposed(net));
        if (!violations.empty()) {
          for (const auto& v : violations) err << "error: " << v.message << '\n';
          exit_override = kExitUsage;
          return;
        }
        json cfgj = {{"model", pr_model}, {"data", pr_data}, {"prune", cfg.to_json()}};
        std::vector<LayerLoss> progress;
        try {
          PruneResult res = ldrf_prune_network(net, cfg, data, &progress);
          stamp(res.net, "prune", cfgj, g);
          save_model(res.net, pr_out);
          json j = res.report_json(cfg);
          j.update(header("prune", cfgj, g));
          emit(j, pr_report, out);
        } catch (const DivergenceError& e) {
          json j = header("prune", cfgj, g);
          j["diverged_layer"] = e.layer();
          j["error"] = e.what();
          j["layers"] = json::array();
          for (const auto& l : progress) j["layers"].push_back(l.to_json());
          emit(j, pr_report, out);
          throw;
        }
      };
    });
  }
  {
    CLI::App* s = sub("baseline-prune", "Prune layer by layer with least-squares refits");
    prune_options(s);
    s->callback([&] {
      action = [&] {
        const PruneConfig cfg = load_config();
        const Network net = load_model(pr_model);
        const Dataset data = load_dataset(pr_data);
        json cfgj = {{"model", pr_model}, {"data", pr_data}, {"prune", cfg.to_json()}};
        PruneResult res = baseline_prune_network(net, cfg, data);
        stamp(res.net, "baseline-prune", cfgj, g);
        save_model(res.net, pr_out);
        json j = res.report_json(cfg);
        j.update(header("baseline-prune", cfgj, g));
        emit(j, pr_report, out);
      };
    });
  }

  // recompose
  std::string rc_model, rc_out, rc_data;
  double rc_tol = 1e-5;
  {
    CLI::App* s = sub("recompose", "Merge factors and strip pruned channels into a slim network");
    s->add_option("--model", rc_model, "Pruned model")->required();
    s->add_option("--out", rc_out, "Slim model path")->required();
    s->add_option("--data", rc_data, "Optional data to verify logit equivalence");
    s->add_option("--tol", rc_tol, "Equivalence tolerance");
    s->callback([&] {
      action = [&] {
        const Network net = load_model(rc_model);
        Network slim = strip_pruned(net);
        const json cfg = {{"model", rc_model}, {"data", rc_data}, {"tol", rc_tol}};
        stamp(slim, "recompose", cfg, g);
        json j = header("recompose", cfg, g);
        j["layers"] = json::array();
        for (const auto& l : slim.layers)
          if (l.is_linear()) j["layers"].push_back({{"name", l.name}, {"in", l.in}, {"out", l.out}});
        if (!rc_data.empty()) {
          const Equivalence eq = verify_equivalence(net, slim, load_dataset(rc_data).images, rc_tol);
          j["max_abs_dev"] = eq.max_abs_dev;
          j["equivalent"] = eq.pass;
          if (!eq.pass) exit_override = kExitFailure;
        }
        save_model(slim, rc_out);
        emit(j, "", out);
      };
    });
  }

  // eval
  std::string ev_model, ev_data, ev_out;
  {
    CLI::App* s = sub("eval", "Accuracy and cross-entropy on a dataset");
    s->add_option("--model", ev_model, "Model")->required();
    s->add_option("--data", ev_data, "Dataset")->required();
    s->add_option("--out", ev_out, "Report path (stdout when omitted)");
    s->callback([&] {
      action = [&] {
        const EvalResult r = evaluate(load_model(ev_model), load_dataset(ev_data), g.threads());
        json j = header("eval", {{"model", ev_model}, {"data", ev_data}}, g);
        j["accuracy"] = r.accuracy;
        j["loss"] = r.loss;
        j["samples"] = r.samples;
        emit(j, ev_out, out);
      };
    });
  }

  // compare
  ToyBenchmark bench;
  bench.finetune_iters = 100;
  int cmp_seeds = 10;
  std::string cmp_out, cmp_crit = "topk", cmp_base_crit = "topk";
  {
    CLI::App* s = sub("compare", "Paired LDRF vs baseline comparison on the toy benchmark (CSV)");
    s->add_option("--seeds", cmp_seeds, "Number of paired seeds, starting at --seed")->check(CLI::PositiveNumber);
    s->add_option("--keep-ratio", bench.keep_ratio, "Fraction of neurons kept per layer");
    s->add_option("--energy", bench.energy, "Decomposition energy");
    s->add_option("--criterion", cmp_crit, "Selection criterion for LDRF");
    s->add_option("--baseline-criterion", cmp_base_crit, "Selection criterion for the baseline");
    s->add_option("--recon-iters", bench.recon.iters, "Reconstruction iterations per layer");
    s->add_option("--recon-lr", bench.recon.lr, "Reconstruction learning rate");
    s->add_option("--finetune-iters", bench.finetune_iters, "End-to-end fine-tune after pruning");
    s->add_option("--out", cmp_out, "CSV path (stdout when omitted)");
    s->callback([&] {
      action = [&] {
        const Criterion cl = criterion_from_string(cmp_crit);
        const Criterion cb = criterion_from_string(cmp_base_crit);
        json cfg = bench.to_json();
        cfg["criterion"] = cmp_crit;
        cfg["baseline_criterion"] = cmp_base_crit;
        cfg["seeds"] = cmp_seeds;
        std::ostringstream csv;
        csv << "# " << header("compare", cfg, g).dump() << '\n';
        csv << "method,keep-ratio,pre-ft-acc,post-ft-acc,seed,reference-acc\n";
        for (int i = 0; i < cmp_seeds; ++i) {
          const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(i);
          const PairedOutcome r = run_paired(bench, seed, cl, cb);
          const auto row = [&](const char* method, const MethodOutcome& m) {
            csv << method << ',' << bench.keep_ratio << ',' << m.pre_ft_accuracy << ',' << m.post_ft_accuracy << ','
                << seed << ',' << r.reference_accuracy << '\n';
          };
          row("ldrf", r.ldrf);
          row("baseline", r.baseline);
        }
        emit_text(csv.str(), cmp_out, out);
      };
    });
  }

  // flops
  std::string fl_model, fl_reference, fl_out, fl_format = "json";
  {
    CLI::App* s = sub("flops", "Multiply-accumulate counts and speed-up");
    s->add_option("--model", fl_model, "Model")->required();
    s->add_option("--reference", fl_reference, "Original model for the speed-up ratio");
    s->add_option("--format", fl_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    s->add_option("--out", fl_out, "Report path (stdout when omitted)");
    s->callback([&] {
      action = [&] {
        const FlopsScope scope = flops_scope_from_string(g.flops_scope);
        const Network net = load_model(fl_model);
        const CostReport rep = cost_report(net, scope);
        if (fl_format == "csv") {
          emit_text(rep.to_csv(), fl_out, out);
          return;
        }
        json j = rep.to_json();
        j.update(header("flops", {{"model", fl_model}, {"reference", fl_reference}, {"scope", g.flops_scope}}, g));
        if (!fl_reference.empty()) j["speedup"] = speedup(load_model(fl_reference), net, scope);
        emit(j, fl_out, out);
      };
    });
  }

  try {
    std::vector<std::string> rev(args_in.rbegin(), args_in.rend());
    app.parse(rev);
    g.seed_given = app.get_option("--seed")->count() > 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return exit_override >= 0 ? exit_override : kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_status(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace ldrf::cli
