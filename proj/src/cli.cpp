#include "flowcal/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "flowcal/flowcal.hpp"

namespace flowcal {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FlowOptions {
  FlowConfig flow;
  TrainConfig train;
  std::string coupling = "dense";
  std::string log_path;

  void add_to(CLI::App& app) {
    app.add_option("--lr", train.learning_rate, "Adam learning rate")->capture_default_str();
    app.add_option("--epochs", train.epochs, "training epochs (fractions allowed)")
        ->capture_default_str();
    app.add_option("--batch-size", train.batch_size, "minibatch size (clamped to N)")
        ->capture_default_str();
    app.add_option("--clip-norm", train.clip_norm, "global gradient-norm clip")
        ->capture_default_str();
    app.add_option("--levels", flow.levels, "flow levels")->capture_default_str();
    app.add_option("--depth", flow.depth, "blocks per level")->capture_default_str();
    app.add_option("--width", flow.width, "coupling network width")->capture_default_str();
    app.add_option("--coupling", coupling, "coupling network: dense or conv1d")
        ->check(CLI::IsMember({"dense", "conv1d"}))
        ->capture_default_str();
    app.add_option("--log", log_path, "write the training log (step<TAB>nll) here");
  }

  void finalize(std::uint64_t seed) {
    flow.coupling = coupling == "conv1d" ? CouplingKind::conv1d : CouplingKind::dense;
    train.seed = seed;
    try {
      train.validate();
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    if (flow.levels < 1 || flow.depth < 1 || flow.width < 1)
      throw UsageError("--levels, --depth and --width must be >= 1");
  }
};

struct MethodOptions {
  std::string method = "raw";
  std::string model_path;
  std::optional<Index> k;
  bool k_sweep = false;
  std::string validation_pairs;
  Index k_max = 20;

  void add_to(CLI::App& app) {
    app.add_option("--method", method, "raw, flow, sn, natsv or sn+natsv")
        ->check(CLI::IsMember({"raw", "flow", "sn", "natsv", "sn+natsv"}))
        ->capture_default_str();
    app.add_option("--model", model_path, "trained flow model (method flow); trains one if absent");
    app.add_option("--k", k, "number of singular directions to null (natsv methods)");
    app.add_flag("--k-sweep", k_sweep, "select k in 1..k-max on --validation-pairs");
    app.add_option("--validation-pairs", validation_pairs, "pairs used by --k-sweep");
    app.add_option("--k-max", k_max, "upper end of the k sweep")->capture_default_str();
  }

  bool uses_k() const { return method == "natsv" || method == "sn+natsv"; }

  void validate() const {
    if (uses_k() && !k && !k_sweep) throw UsageError("--method " + method + " requires --k or --k-sweep");
    if (k_sweep && validation_pairs.empty()) throw UsageError("--k-sweep requires --validation-pairs");
    if (k && *k < 0) throw UsageError("--k must be >= 0");
    if (k_max < 1) throw UsageError("--k-max must be >= 1");
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool machine = false;
};

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string shortest(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

EmbeddingMatrix apply_method(const EmbeddingMatrix& e, const MethodOptions& m, FlowOptions& f,
                             Context& ctx) {
  if (m.method == "raw") return e;
  if (m.method == "flow") {
    if (!m.model_path.empty()) return transform(e, load_model(m.model_path), ctx.threads);
    auto trained = train_flow(e.matrix, f.flow, f.train);
    if (!f.log_path.empty()) save_training_log(f.log_path, trained.step_nll);
    return transform(e, trained.model, ctx.threads);
  }
  if (m.method == "sn") return apply_baseline(e, Baseline::sn, 0);

  const bool with_sn = m.method == "sn+natsv";
  Index k = m.k.value_or(0);
  if (m.k_sweep) {
    const auto sel = select_natsv_k(e, load_pairs(m.validation_pairs), with_sn, m.k_max);
    k = sel.best_k;
    ctx.err << "selected k = " << k << " (validation spearman_x100 " << fixed2(100 * sel.best_rho)
            << ")\n";
  }
  return apply_baseline(e, with_sn ? Baseline::sn_natsv : Baseline::natsv, k);
}

std::vector<Index> parse_index_list(const std::string& text, const char* flag) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<Index>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + " is empty");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow-based calibration and evaluation of sentence embeddings", "flowcal"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");

  Context ctx{out, err};
  app.add_option("--seed", ctx.seed, "seed for every random choice")->capture_default_str();
  app.add_option("--threads", ctx.threads, "worker threads for row-parallel work")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("--machine", ctx.machine, "raw values as TSV instead of x100 tables");
  // Every subcommand accepts the globals after its name too.
  app.fallthrough();

  std::function<void()> action;

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  bool no_sentences = false;
  auto* synth = app.add_subcommand("synth", "generate the synthetic anisotropic benchmark");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n-sentences", synth_cfg.n_sentences)->capture_default_str();
  synth->add_option("--latent-dim", synth_cfg.latent_dim)->capture_default_str();
  synth->add_option("--observed-dim", synth_cfg.observed_dim)->capture_default_str();
  synth->add_option("--kappa", synth_cfg.condition_number, "condition number of W")
      ->capture_default_str();
  synth->add_option("--freq-shift", synth_cfg.frequency_shift, "frequency shift strength c")
      ->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise_std)->capture_default_str();
  synth->add_option("--zipf", synth_cfg.zipf_exponent)->capture_default_str();
  synth->add_option("--n-pairs", synth_cfg.n_pairs)->capture_default_str();
  synth->add_flag("--no-sentences", no_sentences, "skip the toy sentence file");
  synth->callback([&] {
    action = [&] {
      synth_cfg.seed = ctx.seed;
      synth_cfg.sentences = !no_sentences;
      try {
        synth_cfg.validate();
      } catch (const DomainError& e) {
        throw UsageError(e.what());
      }
      write_synth(synth_out, generate(synth_cfg));
      out << "wrote " << synth_out << '\n';
    };
  });

  // train-flow
  FlowOptions train_opts;
  std::string train_in, train_out;
  auto* train = app.add_subcommand("train-flow", "fit a flow to embeddings by maximum likelihood");
  train->add_option("--embeddings", train_in, "EMBD file")->required();
  train->add_option("--out", train_out, "model file")->required();
  train_opts.add_to(*train);
  train->callback([&] {
    action = [&] {
      train_opts.finalize(ctx.seed);
      const auto e = load_embeddings(train_in);
      const auto r = train_flow(e.matrix, train_opts.flow, train_opts.train);
      save_model(train_out, r.model);
      if (!train_opts.log_path.empty()) save_training_log(train_opts.log_path, r.step_nll);
      if (ctx.machine) {
        out << "initial_nll\t" << shortest(r.initial_nll) << "\nfinal_nll\t"
            << shortest(r.final_nll) << "\nsteps\t" << r.step_nll.size() << '\n';
      } else {
        out << "steps " << r.step_nll.size() << ", nll " << shortest(r.initial_nll) << " -> "
            << shortest(r.final_nll) << '\n';
      }
    };
  });

  // transform
  std::string tr_in, tr_model, tr_out;
  auto* tr = app.add_subcommand("transform", "map embeddings to the latent space of a flow");
  tr->add_option("--embeddings", tr_in)->required();
  tr->add_option("--model", tr_model)->required();
  tr->add_option("--out", tr_out)->required();
  tr->callback([&] {
    action = [&] {
      save_embeddings(tr_out, transform(load_embeddings(tr_in), load_model(tr_model), ctx.threads));
    };
  });

  // eval / eval-auc
  struct EvalOptions {
    std::string embeddings, pairs, dump, report;
    MethodOptions method;
    FlowOptions flow;
  };
  EvalOptions ev, ev_auc;
  auto add_eval = [&](const char* name, const char* help, EvalOptions& o, bool is_auc) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--embeddings", o.embeddings)->required();
    cmd->add_option("--pairs", o.pairs)->required();
    cmd->add_option("--dump", o.dump, "per-pair dump: index_a, index_b, predicted, gold");
    cmd->add_option("--report", o.report, "TSV report: metric, value, n_pairs");
    o.method.add_to(*cmd);
    o.flow.add_to(*cmd);
    cmd->callback([&, is_auc] {
      action = [&, is_auc] {
        o.method.validate();
        o.flow.finalize(ctx.seed);
        const auto e = load_embeddings(o.embeddings);
        const auto pairs = load_pairs(o.pairs);
        pairs.check_indices(e.rows());
        const auto calibrated = apply_method(e, o.method, o.flow, ctx);
        const bool keep = !o.dump.empty();
        const auto r = is_auc ? evaluate_entailment(calibrated, pairs, keep)
                              : evaluate_similarity(calibrated, pairs, keep);
        if (keep) write_pair_dump(o.dump, r);
        if (!o.report.empty()) write_report_tsv(o.report, {r});
        if (ctx.machine)
          out << r.metric << '\t' << shortest(r.value) << '\t' << r.n_pairs << '\n';
        else
          out << r.metric << "_x100\t" << fixed2(100 * r.value) << '\n';
      };
    });
  };
  add_eval("eval", "Spearman correlation of pair cosines with gold similarity", ev, false);
  add_eval("eval-auc", "AUC of pair cosines against binary entailment labels", ev_auc, true);

  // baseline
  std::string bl_in, bl_out;
  MethodOptions bl_method;
  FlowOptions bl_flow;
  auto* bl = app.add_subcommand("baseline", "apply SN / NATSV / SN+NATSV and write the result");
  bl->add_option("--embeddings", bl_in)->required();
  bl->add_option("--out", bl_out)->required();
  bl_method.add_to(*bl);
  bl->callback([&] {
    action = [&] {
      if (bl_method.method == "raw" || bl_method.method == "flow")
        throw UsageError("baseline --method must be sn, natsv or sn+natsv");
      bl_method.validate();
      save_embeddings(bl_out, apply_method(load_embeddings(bl_in), bl_method, bl_flow, ctx));
    };
  });

  // diagnose
  std::string dg_in, dg_freq, dg_buckets = "100,500,5000,10000", dg_ks = "3,5,7",
                              dg_neighbors = "l2";
  auto* dg = app.add_subcommand("diagnose", "anisotropy probes: bucketed norms, k-NN, spectrum");
  dg->add_option("--embeddings", dg_in)->required();
  dg->add_option("--frequency", dg_freq, "row-aligned frequency ranks");
  dg->add_option("--buckets", dg_buckets, "ascending rank boundaries")->capture_default_str();
  dg->add_option("--knn-k", dg_ks, "comma-separated k values")->capture_default_str();
  dg->add_option("--neighbors", dg_neighbors, "neighbor selection for k-NN rows: l2 or dot")
      ->check(CLI::IsMember({"l2", "dot"}))
      ->capture_default_str();
  dg->callback([&] {
    action = [&] {
      BucketSpec buckets;
      buckets.boundaries.clear();
      for (Index b : parse_index_list(dg_buckets, "--buckets")) buckets.boundaries.push_back(b);
      try {
        buckets.validate();
      } catch (const DomainError& e) {
        throw UsageError(e.what());
      }
      const auto ks = parse_index_list(dg_ks, "--knn-k");
      const auto e = load_embeddings(dg_in);
      std::optional<FrequencyTable> freq;
      if (!dg_freq.empty()) freq = load_frequency(dg_freq);
      const auto report =
          diagnose(e.matrix, freq ? &*freq : nullptr, buckets, ks,
                   dg_neighbors == "dot" ? NeighborSelection::dot : NeighborSelection::l2,
                   ctx.threads);
      out << (ctx.machine ? format_report_tsv(report) : format_report(report, buckets));
    };
  });

  // lexical
  std::string lx_sent, lx_pairs, lx_emb, lx_scatter;
  MethodOptions lx_method;
  FlowOptions lx_flow;
  auto* lx = app.add_subcommand("lexical", "correlate embedding similarity with edit distance");
  lx->add_option("--sentences", lx_sent)->required();
  lx->add_option("--pairs", lx_pairs)->required();
  lx->add_option("--embeddings", lx_emb)->required();
  lx->add_option("--scatter", lx_scatter, "scatter dump for plotting");
  lx_method.add_to(*lx);
  lx_flow.add_to(*lx);
  lx->callback([&] {
    action = [&] {
      lx_method.validate();
      lx_flow.finalize(ctx.seed);
      const auto e = load_embeddings(lx_emb);
      const auto sentences = load_sentences(lx_sent);
      if (static_cast<Index>(sentences.sentences.size()) != e.rows())
        throw DomainError("sentence file has " + std::to_string(sentences.sentences.size()) +
                          " lines for " + std::to_string(e.rows()) + " embeddings");
      const auto pairs = load_pairs(lx_pairs);
      const auto calibrated = apply_method(e, lx_method, lx_flow, ctx);
      const auto r = lexical_correlation(sentences, pairs, pair_cosines(calibrated.matrix, pairs));
      if (!lx_scatter.empty()) write_scatter(lx_scatter, r.scatter);
      if (ctx.machine) {
        out << "rho_predicted_edit\t" << shortest(r.rho_predicted_edit) << '\n'
            << "rho_gold_edit\t" << shortest(r.rho_gold_edit) << '\n'
            << "rho_predicted_gold\t" << shortest(r.rho_predicted_gold) << '\n';
      } else {
        out << "spearman_x100(similarity, edit_distance)\t" << fixed2(100 * r.rho_predicted_edit)
            << '\n'
            << "spearman_x100(gold, edit_distance)\t" << fixed2(100 * r.rho_gold_edit) << '\n'
            << "spearman_x100(similarity, gold)\t" << fixed2(100 * r.rho_predicted_gold) << '\n';
      }
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nrun with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace flowcal
