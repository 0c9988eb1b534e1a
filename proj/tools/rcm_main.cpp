// Command-line front end: validate / infer / compare / bench over .rcm files.
//
// Exit codes: 0 success, 1 parse errors, 2 validation failure, 3 divergent
// integral, 4 unsupported structure (or ground model over the cap),
// 5 lifted/ground mismatch in compare.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rcm/bench.hpp"
#include "rcm/dsl.hpp"
#include "rcm/engine.hpp"
#include "rcm/ground_oracle.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDivergent = 3;
constexpr int kExitUnsupported = 4;
constexpr int kExitMismatch = 5;

struct Loaded {
  rcm::Model model;
};

std::optional<Loaded> load(const std::string& path, int& exit_code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << path << ": cannot open\n";
    exit_code = kExitParse;
    return std::nullopt;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  rcm::ParseResult r = rcm::parse_model(ss.str(), path);
  if (!r.ok()) {
    for (const auto& d : r.diagnostics) std::cerr << rcm::format_diagnostic(d) << '\n';
    exit_code = kExitParse;
    return std::nullopt;
  }
  try {
    rcm::check_model(r.model);
  } catch (const std::invalid_argument& e) {
    std::cerr << path << ": " << e.what() << '\n';
    exit_code = kExitValidation;
    return std::nullopt;
  }
  return Loaded{std::move(r.model)};
}

void print_marginal(const rcm::QueryMarginal& qm) {
  for (std::size_t i = 0; i < qm.names.size(); ++i)
    std::printf("query %s mean %.17g variance %.17g\n", qm.names[i].c_str(), qm.mean[i],
                qm.cov[i][i]);
  for (std::size_t i = 0; i < qm.names.size(); ++i)
    for (std::size_t j = i + 1; j < qm.names.size(); ++j)
      std::printf("cov %s %s %.17g\n", qm.names[i].c_str(), qm.names[j].c_str(), qm.cov[i][j]);
  std::printf("log_normalizer %.17g\n", qm.log_normalizer);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / (1.0 + std::max(std::abs(a), std::abs(b)));
}

int run_validate(const std::string& path) {
  int code = kExitOk;
  auto loaded = load(path, code);
  if (!loaded) return code;
  rcm::ValidationReport rep = rcm::validate(loaded->model);
  for (std::size_t i = 0; i < rep.components.size(); ++i) {
    const auto& c = rep.components[i];
    std::printf("component %zu: %lld variable%s, atoms", i, (long long)c.variables,
                c.variables == 1 ? "" : "s");
    for (const auto& a : c.atoms) std::printf(" %s", a.c_str());
    std::printf(", %s%s\n", c.anchored ? "anchored" : "UNANCHORED",
                c.has_query ? ", queried" : "");
  }
  std::printf("connected: %s\n", rep.connected ? "yes" : "no");
  std::printf("proper density: %s\n", rep.proper_density ? "yes" : "no");
  std::printf("query components anchored: %s\n", rep.query_ok ? "yes" : "no");
  return rep.proper_density ? kExitOk : kExitValidation;
}

int run_infer(const std::string& path, const std::string& method, bool check_closure,
              bool trace) {
  int code = kExitOk;
  auto loaded = load(path, code);
  if (!loaded) return code;
  const rcm::Model& m = loaded->model;
  if (m.queries.empty()) {
    std::cerr << path << ": no query variables\n";
    return kExitValidation;
  }
  try {
    rcm::ValidationReport rep = rcm::validate(m);
    if (!rep.query_ok) {
      std::cerr << path << ": a query variable lies in an unanchored component\n";
      return kExitValidation;
    }
    if (method == "ground") {
      print_marginal(rcm::oracle_marginal(rcm::ground_model(m)));
      return kExitOk;
    }
    rcm::EngineOptions opt;
    opt.inversion_only = method == "inversion";
    opt.check_closure = check_closure;
    rcm::LiftedResult res = rcm::fove_continuous(m, opt);
    if (trace) {
      int n = 0;
      for (const auto& s : res.trace) {
        nlohmann::json j = {{"step", ++n},
                            {"method", rcm::to_string(s.kind)},
                            {"atom", s.atom},
                            {"cardinality", s.cardinality},
                            {"cost", s.cost}};
        std::cerr << j.dump() << '\n';
      }
    }
    if (check_closure)
      std::printf("closure checks %d, worst coefficient error %.3g\n", res.closure_checks,
                  res.closure_delta);
    print_marginal(res.marginal);
    return kExitOk;
  } catch (const rcm::GroundCapExceeded& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kExitUnsupported;
  } catch (const rcm::DivergentIntegral& e) {
    std::cerr << path << ": divergent: " << e.what() << '\n';
    return kExitDivergent;
  } catch (const rcm::NonPairwiseModel& e) {
    std::cerr << path << ": unsupported: " << e.what() << '\n';
    return kExitUnsupported;
  }
}

int run_compare(const std::string& path, double tol) {
  int code = kExitOk;
  auto loaded = load(path, code);
  if (!loaded) return code;
  const rcm::Model& m = loaded->model;
  if (m.queries.empty()) {
    std::cerr << path << ": no query variables\n";
    return kExitValidation;
  }
  try {
    rcm::ValidationReport rep = rcm::validate(m);
    if (!rep.query_ok) {
      std::cerr << path << ": a query variable lies in an unanchored component\n";
      return kExitValidation;
    }
    rcm::QueryMarginal lifted = rcm::fove_continuous(m).marginal;
    rcm::QueryMarginal ground = rcm::oracle_marginal(rcm::ground_model(m));
    double worst = rel_err(lifted.log_normalizer, ground.log_normalizer);
    for (std::size_t i = 0; i < lifted.names.size(); ++i) {
      worst = std::max(worst, rel_err(lifted.mean[i], ground.mean[i]));
      for (std::size_t j = 0; j < lifted.names.size(); ++j)
        worst = std::max(worst, rel_err(lifted.cov[i][j], ground.cov[i][j]));
      std::printf("query %s lifted mean %.17g variance %.17g | ground mean %.17g variance %.17g\n",
                  lifted.names[i].c_str(), lifted.mean[i], lifted.cov[i][i], ground.mean[i],
                  ground.cov[i][i]);
    }
    std::printf("log_normalizer lifted %.17g | ground %.17g\n", lifted.log_normalizer,
                ground.log_normalizer);
    std::printf("worst relative error %.3g (tolerance %.3g)\n", worst, tol);
    if (worst > tol) {
      std::printf("MISMATCH\n");
      return kExitMismatch;
    }
    std::printf("MATCH\n");
    return kExitOk;
  } catch (const rcm::GroundCapExceeded& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kExitUnsupported;
  } catch (const rcm::DivergentIntegral& e) {
    std::cerr << path << ": divergent: " << e.what() << '\n';
    return kExitDivergent;
  } catch (const rcm::NonPairwiseModel& e) {
    std::cerr << path << ": unsupported: " << e.what() << '\n';
    return kExitUnsupported;
  }
}

int run_bench_cmd(const std::string& markets, const std::string& banks,
                  const std::string& methods, double seconds, const std::string& output,
                  int parallel) {
  rcm::BenchConfig cfg;
  try {
    cfg.markets = rcm::parse_size_range(markets);
    cfg.banks = rcm::parse_size_range(banks);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitParse;
  }
  cfg.methods.clear();
  std::size_t pos = 0;
  while (pos < methods.size()) {
    std::size_t comma = methods.find(',', pos);
    cfg.methods.push_back(
        methods.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    pos = comma == std::string::npos ? methods.size() : comma + 1;
  }
  for (const auto& method : cfg.methods)
    if (method != "lifted" && method != "ground" && method != "inversion") {
      std::cerr << "unknown method '" << method << "'\n";
      return kExitParse;
    }
  cfg.per_cell_seconds = seconds;

  std::vector<rcm::BenchRow> rows;
  if (parallel <= 1) {
    rows = rcm::run_bench(cfg);
  } else {
    // Parallel cells trade timing fidelity for throughput; rows keep their
    // deterministic order and the skip-after-timeout shortcut is disabled.
    struct Cell {
      std::int64_t ns, nb;
      std::string method;
    };
    std::vector<Cell> cells;
    for (std::int64_t ns : cfg.markets)
      for (std::int64_t nb : cfg.banks)
        for (const auto& method : cfg.methods) cells.push_back({ns, nb, method});
    rows.resize(cells.size());
    std::size_t next = 0;
    while (next < cells.size()) {
      std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(parallel),
                                                cells.size() - next);
      std::vector<std::future<rcm::BenchRow>> fs;
      for (std::size_t k = 0; k < batch; ++k) {
        const Cell& c = cells[next + k];
        fs.push_back(std::async(std::launch::async, [&c, &cfg]() {
          return rcm::run_bench_cell(rcm::make_recession_model(c.ns, c.nb), c.ns, c.nb, c.method,
                                     cfg.per_cell_seconds);
        }));
      }
      for (std::size_t k = 0; k < batch; ++k) rows[next + k] = fs[k].get();
      next += batch;
    }
  }

  if (output.empty() || output == "-") {
    rcm::write_bench_csv(rows, std::cout);
  } else {
    std::ofstream out(output, std::ios::binary);
    if (!out) {
      std::cerr << output << ": cannot open for writing\n";
      return kExitParse;
    }
    rcm::write_bench_csv(rows, out);
  }
  return kExitOk;
}

int run_format(const std::string& path) {
  int code = kExitOk;
  auto loaded = load(path, code);
  if (!loaded) return code;
  std::fputs(rcm::serialize_model(loaded->model).c_str(), stdout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exact lifted inference for relational continuous models"};
  app.require_subcommand(1);

  std::string file, method = "lifted", tol_unused;
  bool check_closure = false, trace = false;
  double tol = 1e-8;
  std::string markets = "10", banks = "2..2048", methods = "lifted,ground", output;
  double seconds = 60.0;
  int parallel = 1;

  CLI::App* validate = app.add_subcommand("validate", "check that the model is a proper density");
  validate->add_option("file", file, "model file")->required();

  CLI::App* infer = app.add_subcommand("infer", "compute the exact query marginal");
  infer->add_option("file", file, "model file")->required();
  infer->add_option("--method", method, "lifted | inversion | ground")
      ->check(CLI::IsMember({"lifted", "inversion", "ground"}));
  infer->add_flag("--check-closure", check_closure,
                  "pairwise-decompose every intermediate form");
  infer->add_flag("--trace", trace, "emit one JSON line per elimination step on stderr");

  CLI::App* compare = app.add_subcommand("compare", "check lifted against the ground oracle");
  compare->add_option("file", file, "model file")->required();
  compare->add_option("--tol", tol, "relative tolerance");

  CLI::App* bench = app.add_subcommand("bench", "scaling benchmark on the recession family");
  bench->add_option("--markets", markets, "sizes, e.g. 10 or 5,10 or 4..64");
  bench->add_option("--banks", banks, "sizes, e.g. 2..2048");
  bench->add_option("--methods", methods, "comma list of lifted,ground,inversion");
  bench->add_option("--seconds", seconds, "per-cell time budget");
  bench->add_option("--output", output, "CSV path (default stdout)");
  bench->add_option("--parallel", parallel, "run cells concurrently (distorts timings)");

  CLI::App* format = app.add_subcommand("format", "print the canonical serialization");
  format->add_option("file", file, "model file")->required();

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) return run_validate(file);
  if (infer->parsed()) return run_infer(file, method, check_closure, trace);
  if (compare->parsed()) return run_compare(file, tol);
  if (bench->parsed()) return run_bench_cmd(markets, banks, methods, seconds, output, parallel);
  if (format->parsed()) return run_format(file);
  return kExitOk;
}
