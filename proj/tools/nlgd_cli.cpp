// Command-line front end: training runs, repeats, random search, grid
// sweeps, toy-model trajectories, SNR evaluation, and result reporting.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nlgd/records.hpp"
#include "nlgd/search.hpp"
#include "nlgd/snr.hpp"
#include "nlgd/training.hpp"

namespace {

using nlgd::RunConfig;

struct CommonArgs {
  std::string problem = "quadratic_deep";
  std::string opt = "sgd";
  double lr = 0.1;
  double nu = 1.0;
  double rho = 0.0;
  double lambda_prime = 0.0;
  std::size_t epochs = 100;
  std::size_t batch = 128;
  std::size_t batches_per_epoch = 100;
  std::uint64_t seed = 0;
  std::uint64_t problem_seed = 42;
  std::string schedule = "constant";
  std::vector<std::string> params;  // key=value problem parameters
  std::string config_path;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--problem", a.problem, "problem id");
  cmd->add_option("--opt", a.opt, "optimizer name");
  cmd->add_option("--lr", a.lr, "base learning rate");
  cmd->add_option("--nu", a.nu, "signed-power exponent");
  cmd->add_option("--rho", a.rho, "momentum coefficient");
  cmd->add_option("--decay", a.lambda_prime, "weight-decay strength lambda'");
  cmd->add_option("--epochs", a.epochs, "training epochs");
  cmd->add_option("--batch", a.batch, "batch size");
  cmd->add_option("--batches-per-epoch", a.batches_per_epoch,
                  "batches per epoch (online problems)");
  cmd->add_option("--seed", a.seed, "training seed");
  cmd->add_option("--problem-seed", a.problem_seed, "problem-instance seed");
  cmd->add_option("--schedule", a.schedule, "constant | annihilation");
  cmd->add_option("--param", a.params, "problem parameter key=value");
  cmd->add_option("--config", a.config_path, "JSON config file (same keys)");
}

std::map<std::string, double> parse_params(const std::vector<std::string>& kv) {
  std::map<std::string, double> out;
  for (const std::string& entry : kv) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--param", "expected key=value, got " + entry);
    }
    out[entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
  }
  return out;
}

void apply_config_file(CommonArgs& a) {
  if (a.config_path.empty()) return;
  std::ifstream in(a.config_path);
  if (!in) throw std::runtime_error("cannot open config file: " + a.config_path);
  nlohmann::json j = nlohmann::json::parse(in);
  auto get = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("problem", a.problem);
  get("opt", a.opt);
  get("lr", a.lr);
  get("nu", a.nu);
  get("rho", a.rho);
  get("decay", a.lambda_prime);
  get("epochs", a.epochs);
  get("batch", a.batch);
  get("batches_per_epoch", a.batches_per_epoch);
  get("seed", a.seed);
  get("problem_seed", a.problem_seed);
  get("schedule", a.schedule);
  if (j.contains("problem_params")) {
    for (const auto& [k, v] : j.at("problem_params").items()) {
      a.params.push_back(k + "=" + std::to_string(v.get<double>()));
    }
  }
}

RunConfig to_config(CommonArgs& a) {
  apply_config_file(a);
  RunConfig cfg;
  cfg.problem_id = a.problem;
  cfg.problem_params = parse_params(a.params);
  cfg.problem_seed = a.problem_seed;
  cfg.opt_kind = nlgd::opt_kind_from_name(a.opt);
  cfg.hyper.alpha = a.lr;
  cfg.hyper.nu = a.nu;
  cfg.hyper.rho = a.rho;
  cfg.hyper.lambda_prime = a.lambda_prime;
  if (cfg.opt_kind == nlgd::OptKind::kClippedSgd && !cfg.hyper.clip_t) {
    cfg.hyper.clip_t = 1.0;
  }
  cfg.schedule.base_lr = a.lr;
  cfg.schedule.total_epochs = a.epochs;
  if (a.schedule == "annihilation") {
    cfg.schedule.kind = nlgd::ScheduleSpec::Kind::kAnnihilation;
  } else if (a.schedule != "constant") {
    throw CLI::ValidationError("--schedule", "unknown schedule " + a.schedule);
  }
  cfg.batch_size = a.batch;
  cfg.batches_per_epoch = a.batches_per_epoch;
  cfg.seed = a.seed;
  return cfg;
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t comma = csv.find(',', pos);
    out.push_back(std::stod(csv.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void report_run(const nlgd::RunRecord& rec, const std::string& key) {
  if (rec.diverged) {
    std::cerr << "warning: run diverged after " << rec.completed_epochs
              << " epochs; stored as a flagged record\n";
  }
  std::cout << "record " << key << "  final_test_loss=" << rec.final_test_loss;
  if (rec.has_accuracy) {
    std::cout << "  final_test_accuracy=" << rec.final_test_accuracy;
  }
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"signed-power gradient-transform optimizer toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out = "results";
  app.add_option("--out", out, "record store / output directory")
      ->capture_default_str();

  CommonArgs train_args;
  CLI::App* train = app.add_subcommand("train", "run one training config");
  add_common(train, train_args);

  CommonArgs rep_args;
  std::size_t n_seeds = 10;
  CLI::App* repeats = app.add_subcommand("repeats", "multi-seed repeats");
  add_common(repeats, rep_args);
  repeats->add_option("--n-seeds", n_seeds, "number of derived seeds");

  CommonArgs search_args;
  std::size_t budget = 50, final_repeats = 10;
  CLI::App* search = app.add_subcommand("search", "medium random search");
  add_common(search, search_args);
  search->add_option("--budget", budget, "hyperparameter samples");
  search->add_option("--final-repeats", final_repeats, "seeds for the winner");

  CommonArgs sweep_args;
  std::string nu_list = "0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::string lr_list = "0.001,0.01,0.1";
  std::size_t seeds_per_cell = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "nu x lr grid sweep");
  add_common(sweep, sweep_args);
  sweep->add_option("--nu-values", nu_list, "comma-separated nu axis");
  sweep->add_option("--lr-values", lr_list, "comma-separated lr axis");
  sweep->add_option("--seeds-per-cell", seeds_per_cell, "runs per cell");

  std::string toy_model = "three-node";
  CommonArgs toy_args;
  toy_args.lr = 0.05;
  std::size_t toy_steps = 2000;
  double toy_kappa = 0.5, toy_w = 0.1, toy_sigma = 0.3, toy_a = 1.0;
  double toy_v1 = 0.01, toy_v2 = 0.0001;
  CLI::App* toy = app.add_subcommand("toy", "toy-model trajectory");
  toy->add_option("--model", toy_model, "single-node | three-node");
  toy->add_option("--opt", toy_args.opt, "optimizer name");
  toy->add_option("--nu", toy_args.nu, "signed-power exponent");
  toy->add_option("--lr", toy_args.lr, "learning rate");
  toy->add_option("--rho", toy_args.rho, "momentum coefficient");
  toy->add_option("--steps", toy_steps, "update steps");
  toy->add_option("--batch", toy_args.batch, "batch size");
  toy->add_option("--seed", toy_args.seed, "sampling seed");
  toy->add_option("--kappa", toy_kappa, "path imbalance (three-node)");
  toy->add_option("--w", toy_w, "base weight (three-node)");
  toy->add_option("--v1", toy_v1, "initial v1 (single-node)");
  toy->add_option("--v2", toy_v2, "initial v2 (single-node)");
  toy->add_option("--sigma", toy_sigma, "input noise std");
  toy->add_option("--a", toy_a, "input mean / target");

  std::size_t snr_n = 10000, snr_dim = 4, snr_signal = 4;
  double snr_sig = 1.0, snr_noise = 0.5;
  std::uint64_t snr_seed = 0;
  CLI::App* snr = app.add_subcommand("snr", "SNR metrics on synthetic data");
  snr->add_option("--n", snr_n, "samples");
  snr->add_option("--dim", snr_dim, "inputs");
  snr->add_option("--signal-count", snr_signal, "inputs carrying the signal");
  snr->add_option("--sigma-signal", snr_sig, "signal std");
  snr->add_option("--sigma-noise", snr_noise, "noise std");
  snr->add_option("--seed", snr_seed, "sampling seed");

  std::vector<std::string> filters;
  bool report_tsv = false;
  CLI::App* report = app.add_subcommand("report", "summarize stored records");
  report->add_option("--filter", filters, "field=value record filter");
  report->add_flag("--tsv", report_tsv, "tab-separated output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) {
      nlgd::RecordStore store(out);
      nlgd::RunRecord rec = nlgd::run_training(to_config(train_args));
      report_run(rec, store.put_run(rec));
    } else if (*repeats) {
      nlgd::RecordStore store(out);
      nlgd::RepeatSummary summary =
          nlgd::run_repeats(to_config(rep_args), n_seeds);
      for (const nlgd::RunRecord& rec : summary.records) store.put_run(rec);
      if (summary.diverged_count > 0) {
        std::cerr << "warning: " << summary.diverged_count
                  << " of " << n_seeds << " runs diverged\n";
      }
      std::printf("final metric %.4f +/- %.4f over %zu seeds\n", summary.mean,
                  summary.stddev, n_seeds);
    } else if (*search) {
      nlgd::RecordStore store(out);
      nlgd::SearchSpec spec;
      spec.budget = budget;
      spec.final_repeats = final_repeats;
      RunConfig cfg = to_config(search_args);
      nlgd::SearchResult result =
          nlgd::run_medium_search(cfg, spec, search_args.seed);
      const std::string key = store.put_search(result);
      if (result.all_diverged) {
        std::cerr << "warning: every sampled configuration diverged\n";
        std::cout << "record " << key << "  (search failure)\n";
      } else {
        const nlgd::SearchSample& best = result.samples[result.best_index];
        std::printf(
            "record %s  best lr=%.5g nu=%.2f  final %.4f +/- %.4f\n",
            key.c_str(), best.hyper.alpha, best.hyper.nu,
            result.final_summary.mean, result.final_summary.stddev);
      }
    } else if (*sweep) {
      RunConfig cfg = to_config(sweep_args);
      nlgd::GridResult grid =
          nlgd::grid_sweep(cfg, parse_list(nu_list), parse_list(lr_list),
                           seeds_per_cell, sweep_args.seed);
      std::filesystem::create_directories(out);
      const std::string path = out + "/grid.tsv";
      std::ofstream f(path);
      f << nlgd::export_grid(grid);
      if (!f) throw std::runtime_error("cannot write " + path);
      std::cout << "grid written to " << path << "\n";
    } else if (*toy) {
      nlgd::HyperParams hp;
      hp.alpha = toy_args.lr;
      hp.nu = toy_args.nu;
      hp.rho = toy_args.rho;
      const nlgd::OptKind kind = nlgd::opt_kind_from_name(toy_args.opt);
      std::filesystem::create_directories(out);
      const std::string path = out + "/trajectory.tsv";
      std::ofstream f(path);
      if (toy_model == "single-node") {
        nlgd::ToySingleNode init{toy_v1, toy_v2, toy_a, toy_sigma};
        nlgd::ToySingleTrajectory traj = nlgd::run_toy_single(
            init, kind, hp, toy_steps, toy_args.batch, toy_args.seed);
        f << "step\tv1\tv2\n";
        for (std::size_t i = 0; i < traj.v1.size(); ++i) {
          f << i << '\t' << traj.v1[i] << '\t' << traj.v2[i] << '\n';
        }
      } else if (toy_model == "three-node") {
        nlgd::ToyThreeNode init =
            nlgd::make_kappa_imbalanced(toy_w, toy_kappa, toy_a, toy_sigma);
        nlgd::ToyThreeTrajectory traj = nlgd::run_toy_three(
            init, kind, hp, toy_steps, toy_args.batch, toy_args.seed);
        f << "step\tp1\tp2\n";
        for (std::size_t i = 0; i < traj.p1.size(); ++i) {
          f << i << '\t' << traj.p1[i] << '\t' << traj.p2[i] << '\n';
        }
      } else {
        throw CLI::ValidationError("--model", "unknown toy model " + toy_model);
      }
      if (!f) throw std::runtime_error("cannot write " + path);
      std::cout << "trajectory written to " << path << "\n";
    } else if (*snr) {
      nlgd::CorrelatedSpec spec;
      spec.n = snr_n;
      spec.dim = snr_dim;
      spec.signal_count = snr_signal;
      spec.sigma_signal = snr_sig;
      spec.sigma_noise = snr_noise;
      nlgd::RngStream rng(snr_seed);
      nlgd::CorrelatedDataset data = nlgd::gen_correlated_dataset(spec, rng);
      nlgd::Tensor signals({spec.n, spec.dim});
      for (std::size_t i = 0; i < spec.n; ++i) {
        for (std::size_t j = 0; j < spec.signal_count; ++j) {
          signals.at(i, j) = data.latent[i];
        }
      }
      nlgd::SnrInputs inputs = nlgd::estimate_snr_inputs(data.inputs, signals);
      nlgd::NodeWeights equal{nlgd::Tensor({spec.dim}, 1.0), 1.0};
      nlgd::NodeWeights best = nlgd::optimal_weights(inputs);
      std::printf("equal-weight snr  %.6f\n", nlgd::node_snr(equal, inputs));
      std::printf("optimal snr       %.6f\n", nlgd::node_snr(best, inputs));
      std::printf("distance(equal, optimal) = %.6f\n",
                  nlgd::snr_distance(equal, best));
      std::printf("optimal weights:");
      for (double w : best.w.data) std::printf(" %.6f", w);
      std::printf("\n");
    } else if (*report) {
      nlgd::RecordStore store(out);
      std::map<std::string, std::string> filter;
      for (const std::string& entry : filters) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
          throw CLI::ValidationError("--filter",
                                     "expected field=value, got " + entry);
        }
        filter[entry.substr(0, eq)] = entry.substr(eq + 1);
      }
      const auto rows = nlgd::summarize(store.query_runs(filter));
      std::cout << (report_tsv ? nlgd::render_summary_tsv(rows)
                               : nlgd::render_summary_text(rows));
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
