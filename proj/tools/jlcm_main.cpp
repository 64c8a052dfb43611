// Command-line front end: simulate / fit / classify / compare / diagnose.
// Exit codes: 0 success, 2 user or configuration error, 3 sampler failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jlcm/fit.hpp"
#include "jlcm/grad.hpp"
#include "jlcm/io.hpp"
#include "jlcm/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SimulateArgs {
  std::string scenario;
  int n = 0;
  std::uint64_t seed = 1;
  std::string out;
};

struct FitArgs {
  std::string longitudinal, survival, config, out;
  int chains = 4, iterations = 2000, warmup = 1000, thin = 1, max_tree_depth = 10;
  double target_accept = 0.8, hm_beta = 0.6;
  double epsilon = 0.0;
  bool epsilon_set = false;
  std::uint64_t seed = 1;
};

struct ClassifyArgs {
  std::string fit_dir;
  std::string truth;
};

struct CompareArgs {
  std::string fit_a, fit_b;
  std::vector<std::string> fits;  // two-positional alternative to --fit-a/--fit-b
  std::string criterion = "loo";
};

struct DiagnoseArgs {
  std::string fit_dir;
  // gradient check mode
  bool grad_check = false;
  std::string longitudinal, survival, config;
  int points = 10;
  double fd_step = 1e-5;
  std::uint64_t seed = 1;
};

int cmd_simulate(const SimulateArgs& args) {
  jlcm::ScenarioConfig config = jlcm::builtin_scenario(args.scenario, args.n, args.seed);
  jlcm::SimulatedDataset sim = jlcm::simulate_dataset(config);
  fs::create_directories(args.out);
  jlcm::write_dataset_csvs(sim.data, args.out + "/longitudinal.csv", args.out + "/survival.csv");
  jlcm::write_truth_json(args.out + "/truth.json", config, sim);
  long records = 0;
  long events = 0;
  for (const auto& s : sim.data.subjects) {
    records += static_cast<long>(s.records.size());
    events += s.event;
  }
  std::cout << "scenario " << config.name << ": " << args.n << " subjects, " << records
            << " longitudinal records, " << events << " observed events\n"
            << "wrote " << args.out << "/{longitudinal.csv,survival.csv,truth.json}\n";
  return 0;
}

json selection_to_json(const jlcm::FitResult& result) {
  json chains = json::array();
  for (const auto& ch : result.chains) {
    json c{{"chain", ch.chain_id},
           {"failed", ch.failed},
           {"kept_draws", ch.n_kept},
           {"divergences", ch.postwarmup_divergences},
           {"step_size", ch.step_size},
           {"mean_accept", ch.mean_accept}};
    if (ch.failed) c["reason"] = ch.failure_reason;
    chains.push_back(c);
  }
  json weights = json::array();
  for (double w : result.selection.log_weights)
    weights.push_back(std::isfinite(w) ? json(w) : json());
  return json{{"beta", result.selection.beta},
              {"epsilon", result.selection.epsilon},
              {"selected_chain", result.chains[result.selection.selected].chain_id},
              {"log_weights", weights},
              {"chains", chains}};
}

int cmd_fit(const FitArgs& args) {
  jlcm::Dataset data = jlcm::load_dataset(args.longitudinal, args.survival);
  std::string config_text = jlcm::read_text_file(args.config);
  jlcm::ModelConfig model = jlcm::parse_model_config(config_text);

  jlcm::FitOptions opt;
  opt.nuts.chains = args.chains;
  opt.nuts.iterations = args.iterations;
  opt.nuts.warmup = args.warmup;
  opt.nuts.thin = args.thin;
  opt.nuts.max_tree_depth = args.max_tree_depth;
  opt.nuts.target_accept = args.target_accept;
  opt.nuts.seed = args.seed;
  opt.hm_beta = args.hm_beta;
  if (args.epsilon_set) opt.hm_epsilon = args.epsilon;
  opt.inits = model.inits;

  jlcm::FitResult result = jlcm::run_fit(data, model.spec, model.priors, opt);

  fs::create_directories(args.out);
  std::vector<std::string> ids;
  for (const auto& s : data.subjects) ids.push_back(s.id);

  for (const auto& ch : result.chains) {
    if (ch.failed) continue;
    std::string tag = std::to_string(ch.chain_id);
    jlcm::write_draws_csv(args.out + "/draws_chain" + tag + ".csv", ch, result.param_names);
    jlcm::write_stats_csv(args.out + "/stats_chain" + tag + ".csv", ch);
  }
  {
    auto out = jlcm::detail::open_out(args.out + "/selection.json");
    out << selection_to_json(result).dump(2) << '\n';
  }
  jlcm::write_class_draws_csv(args.out + "/class_draws.csv", result.labels, ids);
  jlcm::write_class_probs_csv(args.out + "/class_probs.csv", ids, result.class_probs,
                              result.map_labels, result.labels.n_classes);
  jlcm::write_pointwise_csv(args.out + "/pointwise.csv", result.pointwise, ids);
  {
    std::vector<std::vector<double>> rows;
    for (const auto& r : result.summary) rows.push_back({r.mean, r.sd, r.q025, r.q975});
    auto out = jlcm::detail::open_out(args.out + "/summary.csv");
    out << "parameter,mean,sd,q2.5,q97.5\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << result.summary[i].name;
      for (double v : rows[i]) out << ',' << jlcm::format_double(v);
      out << '\n';
    }
  }
  {
    json rc{{"command", "fit"},
            {"longitudinal", args.longitudinal},
            {"survival", args.survival},
            {"config", args.config},
            {"seed", args.seed},
            {"chains", args.chains},
            {"iterations", args.iterations},
            {"warmup", args.warmup},
            {"thin", args.thin},
            {"target_accept", args.target_accept},
            {"max_tree_depth", args.max_tree_depth},
            {"hm_beta", args.hm_beta}};
    rc["hm_epsilon"] = args.epsilon_set ? json(args.epsilon) : json();
    auto out = jlcm::detail::open_out(args.out + "/run_config.json");
    out << rc.dump(2) << '\n';
    auto echo = jlcm::detail::open_out(args.out + "/model_config.json");
    echo << config_text;
  }

  const auto& best = result.selected();
  std::cout << "selected chain " << best.chain_id << " of " << args.chains
            << " (log weight " << result.selection.log_weights[result.selection.selected]
            << ", divergences " << best.postwarmup_divergences << ")\n";
  for (const auto& ch : result.chains)
    if (ch.failed)
      std::cout << "chain " << ch.chain_id << " failed: " << ch.failure_reason << "\n";
  std::cout << "wrote fit artifacts to " << args.out << "\n";
  return 0;
}

int cmd_classify(const ClassifyArgs& args) {
  jlcm::ClassDraws cd = jlcm::read_class_draws_csv(args.fit_dir + "/class_draws.csv");
  std::vector<double> probs = jlcm::posterior_class_probs(cd);
  std::vector<int> map_labels = jlcm::map_classes(probs, cd.n_subjects, cd.n_classes);

  std::vector<int> counts(cd.n_classes, 0);
  for (int v : map_labels) ++counts[v - 1];
  std::cout << cd.n_subjects << " subjects, " << cd.n_classes << " classes, " << cd.n_draws
            << " label draws\n";
  for (int g = 0; g < cd.n_classes; ++g)
    std::cout << "class " << (g + 1) << ": " << counts[g] << " subjects ("
              << static_cast<double>(counts[g]) / cd.n_subjects << ")\n";

  if (!args.truth.empty()) {
    jlcm::TruthInfo truth = jlcm::read_truth_json(args.truth);
    if (static_cast<int>(truth.labels.size()) != cd.n_subjects)
      throw jlcm::ConfigError("truth file subject count does not match the fit");
    int G = cd.n_classes;
    for (int v : truth.labels) G = std::max(G, v);
    std::vector<int> perm(G);
    std::iota(perm.begin(), perm.end(), 1);
    double best = 0.0;
    do {
      int hits = 0;
      for (int i = 0; i < cd.n_subjects; ++i)
        if (perm[map_labels[i] - 1] == truth.labels[i]) ++hits;
      best = std::max(best, static_cast<double>(hits) / cd.n_subjects);
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::cout << "classification accuracy (best class relabeling): " << best << "\n";
  }
  return 0;
}

jlcm::CriterionResult criterion_for(const std::string& which, const jlcm::PointwiseLogLik& pll) {
  return which == "waic" ? jlcm::waic(pll) : jlcm::psis_loo(pll);
}

int cmd_compare(CompareArgs args) {
  if (!args.fits.empty()) {
    args.fit_a = args.fits[0];
    args.fit_b = args.fits[1];
  }
  if (args.fit_a.empty() || args.fit_b.empty())
    throw jlcm::ConfigError("compare: pass --fit-a and --fit-b, or --fits A B");
  jlcm::PointwiseLogLik a = jlcm::read_pointwise_csv(args.fit_a + "/pointwise.csv");
  jlcm::PointwiseLogLik b = jlcm::read_pointwise_csv(args.fit_b + "/pointwise.csv");
  if (a.n_subjects != b.n_subjects)
    throw jlcm::ConfigError("compare: fits cover different numbers of subjects");

  jlcm::CriterionResult ca = criterion_for(args.criterion, a);
  jlcm::CriterionResult cb = criterion_for(args.criterion, b);
  jlcm::ComparisonResult cmp = jlcm::compare(ca, cb);

  auto report_khat = [](const jlcm::CriterionResult& c, const std::string& name) {
    int high = 0;
    for (double k : c.pareto_khat)
      if (std::isfinite(k) && k > 0.7) ++high;
    if (high > 0)
      std::cout << "warning: " << name << " has " << high
                << " subjects with Pareto k-hat > 0.7; importance weights may be unstable\n";
  };
  std::printf("criterion: %s\n", args.criterion.c_str());
  std::printf("%-8s %14s %10s %10s\n", "model", "estimate", "se", "p_eff");
  std::printf("%-8s %14.3f %10.3f %10.3f\n", "A", ca.estimate, ca.se, ca.p_eff);
  std::printf("%-8s %14.3f %10.3f %10.3f\n", "B", cb.estimate, cb.se, cb.p_eff);
  std::printf("delta (A-B): %.3f  se: %.3f  z: %.3f  one-tailed p: %.5g\n", cmp.delta, cmp.se,
              cmp.z, cmp.p_value);
  if (cmp.favored < 0) {
    std::printf("no difference\n");
  } else {
    const char* name = cmp.favored == 0 ? "A" : "B";
    std::printf("favored: model %s  (z>1.65: %s, z>2.33: %s, z>3.09: %s)\n", name,
                cmp.significant_5 ? "yes" : "no", cmp.significant_1 ? "yes" : "no",
                cmp.significant_01 ? "yes" : "no");
  }
  if (args.criterion == "loo") {
    report_khat(ca, "model A");
    report_khat(cb, "model B");
  }
  return 0;
}

int grad_check(const DiagnoseArgs& args) {
  jlcm::Dataset data = jlcm::load_dataset(args.longitudinal, args.survival);
  jlcm::ModelConfig model = jlcm::load_model_config(args.config);
  auto compiled = std::make_shared<const jlcm::CompiledData>(
      jlcm::CompiledData::build(data, model.spec, model.priors));
  jlcm::Posterior post(compiled);
  jlcm::FitOptions opt;
  opt.nuts.seed = args.seed;

  double worst = 0.0;
  for (int k = 0; k < args.points; ++k) {
    std::vector<double> theta = jlcm::initial_point(post, opt, k + 1);
    double lp = 0.0;
    std::vector<double> grad(post.dim());
    if (!post.value_grad(theta.data(), lp, grad.data()))
      throw std::runtime_error("gradient check: non-finite log density at a test point");
    std::vector<double> fd = jlcm::finite_difference_gradient(
        [&](const std::vector<double>& t) { return post.value(t.data()); }, theta, args.fd_step);
    double err = 0.0;
    for (int c = 0; c < post.dim(); ++c)
      err = std::max(err, std::abs(grad[c] - fd[c]) / std::max(1.0, std::abs(grad[c])));
    worst = std::max(worst, err);
    std::printf("point %2d: lp = %.6f, max relative gradient error = %.3e\n", k + 1, lp, err);
  }
  std::printf("max relative gradient error over %d points: %.3e\n", args.points, worst);
  return 0;
}

int cmd_diagnose(const DiagnoseArgs& args) {
  if (args.grad_check) return grad_check(args);

  std::vector<jlcm::NumericTable> chains;
  std::vector<long> divergences;
  for (int k = 1;; ++k) {
    std::string draws_path = args.fit_dir + "/draws_chain" + std::to_string(k) + ".csv";
    if (!fs::exists(draws_path)) {
      if (k == 1)
        throw jlcm::ConfigError("no draws_chain1.csv under '" + args.fit_dir + "'");
      break;
    }
    chains.push_back(jlcm::read_numeric_csv(draws_path));
    long div = 0;
    std::string stats_path = args.fit_dir + "/stats_chain" + std::to_string(k) + ".csv";
    if (fs::exists(stats_path)) {
      jlcm::NumericTable stats = jlcm::read_numeric_csv(stats_path);
      for (const auto& row : stats.rows) div += static_cast<long>(row[3]);
    }
    divergences.push_back(div);
  }

  for (std::size_t k = 0; k < chains.size(); ++k)
    std::printf("chain %zu: %zu kept draws, %ld divergent\n", k + 1, chains[k].rows.size(),
                divergences[k]);

  const auto& names = chains[0].header;
  std::printf("%-32s %10s %12s\n", "parameter", "rhat", "ess");
  for (std::size_t p = 0; p < names.size(); ++p) {
    std::vector<std::vector<double>> per_chain;
    for (const auto& ch : chains) {
      if (ch.header != names)
        throw jlcm::ConfigError("diagnose: chains disagree on parameter columns");
      std::vector<double> col;
      col.reserve(ch.rows.size());
      for (const auto& row : ch.rows) col.push_back(row[p]);
      per_chain.push_back(std::move(col));
    }
    double rhat = jlcm::split_rhat(per_chain);
    double e = jlcm::ess(per_chain);
    std::printf("%-32s %10.4f %12.1f\n", names[p].c_str(), rhat, e);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian joint latent class models for longitudinal and time-to-event data"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--scenario", sim_args.scenario,
                  "setting1-g{1,2,3} or setting2-s{1,2,3,4}")->required();
  sim->add_option("--n", sim_args.n, "number of subjects")->required();
  sim->add_option("--seed", sim_args.seed, "RNG seed");
  sim->add_option("--out", sim_args.out, "output directory")->required();

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit the joint latent class model");
  fit->add_option("--longitudinal", fit_args.longitudinal, "longitudinal CSV (id,time,value)")
      ->required();
  fit->add_option("--survival", fit_args.survival,
                  "survival CSV (id,event_time,event,covariates...)")->required();
  fit->add_option("--config", fit_args.config, "model/prior JSON config")->required();
  fit->add_option("--out", fit_args.out, "output directory")->required();
  fit->add_option("--chains", fit_args.chains, "number of parallel chains");
  fit->add_option("--iterations", fit_args.iterations, "total iterations per chain");
  fit->add_option("--warmup", fit_args.warmup, "warmup iterations");
  fit->add_option("--thin", fit_args.thin, "keep every thin-th draw");
  fit->add_option("--seed", fit_args.seed, "RNG seed");
  fit->add_option("--target-accept", fit_args.target_accept, "step size adaptation target");
  fit->add_option("--max-tree-depth", fit_args.max_tree_depth, "trajectory doubling cap");
  fit->add_option("--beta", fit_args.hm_beta, "high-density fraction for chain weights");
  auto* eps = fit->add_option("--epsilon", fit_args.epsilon,
                              "kernel radius override for chain weights");

  ClassifyArgs classify_args;
  auto* classify = app.add_subcommand("classify", "report class membership from a fit");
  classify->add_option("--fit", classify_args.fit_dir, "fit output directory")->required();
  classify->add_option("--truth", classify_args.truth, "truth.json for accuracy scoring");

  CompareArgs compare_args;
  auto* comp = app.add_subcommand("compare", "compare two fits by WAIC or PSIS-LOO");
  comp->add_option("--fit-a", compare_args.fit_a, "first fit directory");
  comp->add_option("--fit-b", compare_args.fit_b, "second fit directory");
  comp->add_option("--fits", compare_args.fits, "the two fit directories at once")
      ->expected(2);
  comp->add_option("--criterion", compare_args.criterion, "loo or waic")
      ->check(CLI::IsMember({"loo", "waic"}));

  DiagnoseArgs diag_args;
  auto* diag = app.add_subcommand("diagnose", "convergence diagnostics or gradient check");
  diag->add_option("--fit", diag_args.fit_dir, "fit output directory");
  diag->add_flag("--grad-check", diag_args.grad_check, "check analytic gradients against FD");
  diag->add_option("--longitudinal", diag_args.longitudinal, "longitudinal CSV (grad check)");
  diag->add_option("--survival", diag_args.survival, "survival CSV (grad check)");
  diag->add_option("--config", diag_args.config, "model config (grad check)");
  diag->add_option("--points", diag_args.points, "test points for grad check");
  diag->add_option("--fd-step", diag_args.fd_step, "finite difference step");
  diag->add_option("--seed", diag_args.seed, "RNG seed for grad check points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (fit->parsed()) {
      fit_args.epsilon_set = eps->count() > 0;
      return cmd_fit(fit_args);
    }
    if (classify->parsed()) return cmd_classify(classify_args);
    if (comp->parsed()) return cmd_compare(compare_args);
    if (diag->parsed()) {
      if (!diag_args.grad_check && diag_args.fit_dir.empty())
        throw jlcm::ConfigError("diagnose: pass --fit <dir> or --grad-check with data options");
      if (diag_args.grad_check &&
          (diag_args.longitudinal.empty() || diag_args.survival.empty() ||
           diag_args.config.empty()))
        throw jlcm::ConfigError(
            "diagnose --grad-check needs --longitudinal, --survival, and --config");
      return cmd_diagnose(diag_args);
    }
  } catch (const jlcm::AllChainsFailed& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
