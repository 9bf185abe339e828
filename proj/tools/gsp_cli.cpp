// gsp: command-line front end.
//
//   gsp solve COST.csv [--mu --epsilon --iters --tol --oracle]
//   gsp gradcheck [--sizes 1x1,3x5 --tolerance T]
//   gsp synthetic CONFIG.json [--compare] [--timing]
//   gsp eval EMBEDDINGS.csv LABELS.csv
//
// Structured output goes to stdout (or --output); logs go to stderr.
// Exit codes: 0 ok, 1 check failure, 2 usage or input error, 3 numerical failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsp/bench.hpp"
#include "gsp/error.hpp"
#include "gsp/gradcheck.hpp"
#include "gsp/linalg.hpp"
#include "gsp/metrics.hpp"
#include "gsp/simplex.hpp"
#include "gsp/transport.hpp"

namespace {

using nlohmann::json;

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;
constexpr int kNumerical = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gsp::ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gsp::ConfigError("cannot write " + path.string());
  out << text;
}

void emit(const json& j, const std::string& output) {
  const std::string text = j.dump(2) + "\n";
  if (output.empty())
    std::cout << text;
  else
    write_file(output, text);
}

json matrix_json(const gsp::Matrix& m) { return gsp::matrix_to_json(m); }

int cmd_solve(const std::string& path, const gsp::TransportConfig& cfg, bool oracle, const std::string& output) {
  const gsp::Matrix c = gsp::parse_csv(read_file(path));
  const auto sol = gsp::solve_forward(c, cfg);
  const double cost = gsp::transport_cost(c, sol.plan);
  json j{{"m", c.rows()},
         {"n", c.cols()},
         {"mu", cfg.mu},
         {"epsilon", cfg.epsilon},
         {"iters_run", sol.iters_run},
         {"rho", sol.rho},
         {"plan", matrix_json(sol.plan)},
         {"pooling_weights", gsp::pooling_weights(sol)},
         {"objective", gsp::objective_p2(c, sol, cfg.epsilon)},
         {"transport_cost", cost},
         {"marginal_residual", gsp::marginal_residual(sol)}};
  if (oracle) {
    const auto lp = gsp::lp_oracle(c, cfg.mu);
    j["lp_objective"] = lp.objective;
    j["objective_gap"] = cost - lp.objective;
  }
  emit(j, output);
  return kOk;
}

std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    std::size_t m = 0, n = 0;
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      m = std::stoul(item.substr(0, x));
      n = std::stoul(item.substr(x + 1));
    } catch (const std::exception&) {
      throw gsp::ConfigError("--sizes: expected MxN, got \"" + item + "\"");
    }
    if (m == 0 || n == 0 || m > 16 || n > 16) throw gsp::ConfigError("--sizes: entries must lie in 1..16");
    out.emplace_back(m, n);
  }
  if (out.empty()) throw gsp::ConfigError("--sizes: empty list");
  return out;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& sizes, double tolerance, const std::string& output) {
  gsp::GradcheckOptions opt;
  opt.seed = seed;
  opt.sizes = parse_sizes(sizes);
  opt.tolerance = tolerance;
  json checks = json::array();
  std::size_t failed = 0;
  for (const auto& r : gsp::run_gradcheck(opt)) {
    checks.push_back({{"name", r.name}, {"size", r.size}, {"error", r.error}, {"tolerance", r.tolerance}, {"pass", r.pass}});
    if (!r.pass) {
      ++failed;
      std::cerr << "FAIL " << r.name << " " << r.size << " error " << r.error << " > " << r.tolerance << "\n";
    }
  }
  emit({{"seed", seed}, {"checks", checks}, {"passed", checks.size() - failed}, {"failed", failed}}, output);
  return failed ? kCheckFailed : kOk;
}

json run_summary(const gsp::RunReport& r) {
  return {{"pooling", r.config.pooling},
          {"zsr_enabled", r.config.zsr_enabled},
          {"status", r.status},
          {"epochs", r.epochs.size()},
          {"best_epoch", r.best_epoch},
          {"best_map_at_r", r.best_map_at_r}};
}

gsp::RunReport run_and_save(const gsp::SyntheticConfig& cfg, const std::filesystem::path& dir,
                            const std::string& suffix, bool timing) {
  const gsp::RunReport r = gsp::train(cfg, [&](const gsp::EpochRecord& e) {
    std::cerr << cfg.pooling << (cfg.zsr_enabled ? "+zsr" : "") << " epoch " << e.epoch << " loss " << e.train_loss
              << " map@r " << e.map_at_r << "\n";
  });
  write_file(dir / ("report" + suffix + ".json"), gsp::report_to_json(r, timing).dump(2) + "\n");
  std::ostringstream epochs, geometry;
  gsp::write_epochs_csv(epochs, r);
  gsp::export_geometry(geometry, r);
  write_file(dir / ("epochs" + suffix + ".csv"), epochs.str());
  write_file(dir / ("geometry" + suffix + ".csv"), geometry.str());
  if (timing) std::cerr << "wall " << r.wall_seconds << " s\n";
  return r;
}

int cmd_synthetic(const std::string& path, bool seed_given, std::uint64_t seed, bool compare, bool timing,
                  const std::string& output) {
  gsp::SyntheticConfig cfg = gsp::parse_synthetic_config(read_file(path));
  if (seed_given) cfg.seed = seed;
  const std::filesystem::path dir = output.empty() ? std::filesystem::path(".") : std::filesystem::path(output);
  std::filesystem::create_directories(dir);

  json summary;
  bool diverged = false;
  if (compare) {
    gsp::SyntheticConfig gap_cfg = cfg, gsp_cfg = cfg;
    gap_cfg.pooling = "gap";
    gsp_cfg.pooling = "gsp";
    const auto a = run_and_save(gap_cfg, dir, "_gap", timing);
    const auto b = run_and_save(gsp_cfg, dir, "_gsp", timing);
    summary = {{"seed", cfg.seed},
               {"gap", run_summary(a)},
               {"gsp", run_summary(b)},
               {"map_at_r_delta", b.best_map_at_r - a.best_map_at_r}};
    write_file(dir / "comparison.json", summary.dump(2) + "\n");
    diverged = a.status == "diverged" || b.status == "diverged";
  } else {
    const auto r = run_and_save(cfg, dir, "", timing);
    summary = run_summary(r);
    summary["seed"] = cfg.seed;
    diverged = r.status == "diverged";
  }
  std::cout << summary.dump(2) << "\n";
  if (diverged) {
    std::cerr << "training diverged; reports hold the last finite epoch\n";
    return kNumerical;
  }
  return kOk;
}

int cmd_eval(const std::string& emb_path, const std::string& label_path, const std::string& output) {
  const gsp::Matrix e = gsp::parse_csv(read_file(emb_path));
  const gsp::Matrix l = gsp::parse_csv(read_file(label_path));
  if (l.rows() != 1 && l.cols() != 1) throw gsp::DimensionError("labels: expected a single row or column");
  std::vector<int> labels;
  for (std::size_t k = 0; k < l.size(); ++k) {
    const double v = l.data()[k];
    if (v != std::floor(v) || v < 0)
      throw gsp::ParseError("labels: expected a non-negative integer", l.cols() == 1 ? k + 1 : 1);
    labels.push_back(static_cast<int>(v));
  }
  const auto m = gsp::evaluate_retrieval(e, labels);
  emit({{"p_at_1", m.p_at_1},
        {"p_at_r", m.p_at_r},
        {"map_at_r", m.map_at_r},
        {"queries", m.queries},
        {"skipped", m.skipped}},
       output);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized sum pooling: transport solver, gradient checks, synthetic study, retrieval metrics"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::string output;
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--output", output, "Output file (solve, gradcheck, eval) or directory (synthetic)");

  gsp::TransportConfig tc;
  bool oracle = false;
  std::string cost_path;
  auto* solve = app.add_subcommand("solve", "Solve the partial transport problem for a cost CSV");
  solve->fallthrough();
  solve->add_option("cost", cost_path, "Cost matrix CSV (m rows, n columns)")->required();
  solve->add_option("--mu", tc.mu, "Transported mass ratio")->capture_default_str();
  solve->add_option("--epsilon", tc.epsilon, "Entropy smoothing")->capture_default_str();
  solve->add_option("--iters", tc.max_iters, "Iterations")->capture_default_str();
  solve->add_option("--tol", tc.tol, "Early exit when max |rho change| < tol (0 = fixed iterations)")->capture_default_str();
  solve->add_flag("--oracle", oracle, "Also solve the exact LP and report the objective gap");

  std::string sizes = "1x1,3x5,4x8";
  double tolerance = 0.0;
  auto* grad = app.add_subcommand("gradcheck", "Run the seeded gradient-check battery");
  grad->fallthrough();
  grad->add_option("--sizes", sizes, "Comma-separated MxN instance sizes")->capture_default_str();
  grad->add_option("--tolerance", tolerance, "Override every check tolerance");

  std::string config_path;
  bool compare = false, timing = false;
  auto* synth = app.add_subcommand("synthetic", "Train the synthetic token study");
  synth->fallthrough();
  synth->add_option("config", config_path, "SyntheticConfig JSON")->required();
  synth->add_flag("--compare", compare, "Run gap and gsp from the same config");
  synth->add_flag("--timing", timing, "Record wall-clock time in the reports");

  std::string emb_path, label_path;
  auto* eval = app.add_subcommand("eval", "Retrieval metrics for an embedding CSV");
  eval->fallthrough();
  eval->add_option("embeddings", emb_path, "Embeddings CSV, one sample per row")->required();
  eval->add_option("labels", label_path, "Labels CSV, one integer per row")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return cmd_solve(cost_path, tc, oracle, output);
    if (*grad) return cmd_gradcheck(seed, sizes, tolerance, output);
    if (*synth) return cmd_synthetic(config_path, app.count("--seed") > 0, seed, compare, timing, output);
    if (*eval) return cmd_eval(emb_path, label_path, output);
  } catch (const gsp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const gsp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
