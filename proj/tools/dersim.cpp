// Command-line driver: run experiment configs, solve or validate case files,
// and write generated case files.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dersim/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRunError = 3;

int cmd_run(const std::string& config_path, const std::string& out, const std::string& seeds) {
  dersim::ExperimentConfig cfg = dersim::load_config(config_path);
  if (!out.empty()) cfg.out_dir = out;
  if (!seeds.empty()) {
    cfg.seeds = dersim::parse_seed_list(seeds);
    if (cfg.seeds.empty()) throw dersim::ConfigError("seed list is empty");
  }
  const auto result = dersim::run_experiment(cfg, &std::cerr);
  for (const auto& s : result.seeds) {
    std::cout << "seed " << s.seed << ": ";
    if (!s.ok) {
      std::cout << "error: " << s.error << '\n';
      continue;
    }
    std::cout << "final error " << dersim::format_double(s.final_error) << ", rate "
              << dersim::format_double(s.rate.a) << " (R^2 " << dersim::format_double(s.rate.r2) << ")\n";
  }
  std::cout << "wrote " << (cfg.out_dir / "summary.csv").string() << '\n';
  return result.exit_code;
}

int cmd_solve(const std::string& case_path, double xi, double n_hat) {
  const auto c = dersim::load_case(case_path);
  const auto sol = dersim::solve_bisection(c.instance, xi, n_hat);
  std::cout << "lambda_star " << dersim::format_double(sol.lambda_star) << '\n';
  std::cout << "price " << dersim::format_double(dersim::multiplier_scale(xi, n_hat, c.instance.size()) * sol.lambda_star)
            << '\n';
  std::cout << "kkt_residual " << dersim::format_double(sol.kkt_residual) << '\n';
  std::cout << "i,p_star,mu,nu\n";
  for (Eigen::Index i = 0; i < sol.p_star.size(); ++i) {
    std::cout << i << ',' << dersim::format_double(sol.p_star[i]) << ',' << dersim::format_double(sol.mu_star[i]) << ','
              << dersim::format_double(sol.nu_star[i]) << '\n';
  }
  return 0;
}

int cmd_validate(const std::string& case_path) {
  const auto c = dersim::load_case(case_path);
  const bool connected = dersim::is_connected(c.graph.size(), c.graph.edges(), c.graph.mode());
  std::cout << "agents " << c.instance.size() << ", " << dersim::to_string(c.graph.mode()) << " graph with "
            << c.graph.edge_count() << " edges, " << (connected ? "connected" : "NOT connected") << '\n';
  std::cout << "total load " << dersim::format_double(c.instance.total_load()) << " within ["
            << dersim::format_double(c.instance.lower.sum()) << ", " << dersim::format_double(c.instance.upper.sum())
            << "]\n";
  return connected ? 0 : kConfigError;
}

int cmd_generate(std::size_t n, std::uint64_t seed, const std::string& graph, const std::string& out) {
  dersim::InstanceSpec spec;
  spec.n = n;
  const auto gen = dersim::generate_instance(spec, seed);
  dersim::NominalGraph g = [&] {
    if (graph == "ieee39" || graph == "ieee39-directed") {
      if (n != 39) throw dersim::ConfigError("ieee39 graphs need n = 39");
      const auto lines = dersim::ieee39_lines();
      return graph == "ieee39" ? dersim::NominalGraph(n, lines, dersim::GraphMode::undirected)
                               : dersim::NominalGraph(n, dersim::orient_strongly_connected(n, lines),
                                                      dersim::GraphMode::directed);
    }
    if (graph == "random") return dersim::random_graph(n, 0.1, dersim::GraphMode::undirected, seed);
    if (graph == "random-directed") return dersim::random_graph(n, 0.1, dersim::GraphMode::directed, seed);
    throw dersim::ConfigError("unknown graph kind '" + graph + "'");
  }();
  std::ostringstream text;
  text << "# generated instance, seed " << seed << ", " << gen.attempts << " draw(s)\n";
  text << "# a b c p_lo p_hi load\n";
  dersim::write_case(text, gen.instance, g);
  if (out.empty()) {
    std::cout << text.str();
  } else {
    dersim::write_atomically(out, text.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed economic dispatch simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  std::string seeds;
  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "INI experiment config")->required();
  run->add_option("--out", out, "Output directory (overrides the config)");
  run->add_option("--seeds", seeds, "Seed list such as 1,2,5-9 (overrides the config)");

  std::string case_path;
  double xi = 1.0;
  double n_hat = 1.0;
  auto* solve = app.add_subcommand("solve", "Solve a case file with the bisection oracle");
  solve->add_option("case", case_path, "Case file")->required();
  solve->add_option("--xi", xi, "Multiplier gain xi")->capture_default_str();
  solve->add_option("--n-hat", n_hat, "Network size estimate n_hat")->capture_default_str();

  auto* validate = app.add_subcommand("validate", "Check a case file");
  validate->add_option("case", case_path, "Case file")->required();

  std::size_t gen_n = 39;
  std::uint64_t gen_seed = 1;
  std::string gen_graph = "ieee39";
  auto* generate = app.add_subcommand("generate-case", "Write a random case file");
  generate->add_option("--n", gen_n, "Agent count")->capture_default_str();
  generate->add_option("--seed", gen_seed, "Instance seed")->capture_default_str();
  generate->add_option("--graph", gen_graph, "ieee39, ieee39-directed, random or random-directed")
      ->capture_default_str();
  generate->add_option("--out", out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, out, seeds);
    if (*solve) return cmd_solve(case_path, xi, n_hat);
    if (*validate) return cmd_validate(case_path);
    if (*generate) return cmd_generate(gen_n, gen_seed, gen_graph, out);
  } catch (const dersim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const dersim::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kConfigError;
  } catch (const dersim::InvalidInstanceError& e) {
    std::cerr << "invalid instance: " << e.what() << '\n';
    return kConfigError;
  } catch (const dersim::InfeasibleError& e) {
    std::cerr << "infeasible instance: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunError;
  }
  return 0;
}
