#ifndef RCM_BENCH_HPP
#define RCM_BENCH_HPP

// Scaling benchmark on the recession family: one unobserved economy variable
// influences every market, every (market, bank) gain couples its market to
// the bank's revenue, one market and one revenue are observed, the economy is
// queried. Lifted elimination answers the query in constant work per size;
// grounding pays for the full (markets x banks) matrix.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcm/engine.hpp"
#include "rcm/ground_oracle.hpp"
#include "rcm/model.hpp"

namespace rcm {

inline Model make_recession_model(std::int64_t n_markets, std::int64_t n_banks) {
  Model m;
  m.domains.push_back({"S", n_markets, {}});
  m.domains.push_back({"B", n_banks, {}});
  m.atoms.push_back({"Recession", {}, {}});
  m.atoms.push_back({"Market", {0}, {}});
  m.atoms.push_back({"Gain", {0, 1}, {}});
  m.atoms.push_back({"Revenue", {1}, {}});
  m.factors.push_back({Term::atom_ref(0, {}), Term::atom_ref(1, {"s"}), 4.0, 0.0});
  m.factors.push_back({Term::atom_ref(2, {"s", "b"}), Term::atom_ref(1, {"s"}), 2.0, 0.0});
  m.factors.push_back({Term::atom_ref(3, {"b"}), Term::atom_ref(2, {"s", "b"}), 1.5, 0.0});
  m.observations.push_back({GroundRef{1, {0}}, 0.3});
  m.observations.push_back({GroundRef{3, {0}}, 0.1});
  m.queries.push_back(GroundRef{0, {}});
  return m;
}

// Unobserved ground variables of make_recession_model(ns, nb).
inline std::int64_t recession_ground_size(std::int64_t ns, std::int64_t nb) {
  return 1 + ns + ns * nb + nb - 2;
}

struct BenchRow {
  std::string model = "recession";
  std::int64_t n_markets = 0;
  std::int64_t n_banks = 0;
  std::string method;  // lifted | ground | inversion
  std::optional<double> wall_ms;
  std::optional<double> mean;
  std::optional<double> variance;
  std::optional<double> log_normalizer;
  std::string status = "ok";  // ok | timeout | divergent | unsupported
};

struct BenchConfig {
  std::vector<std::int64_t> markets = {10};
  std::vector<std::int64_t> banks = {2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048};
  std::vector<std::string> methods = {"lifted", "ground"};
  double per_cell_seconds = 60.0;
  // After a timeout at some size, larger sizes of the same method are marked
  // timeout without running (cost is monotone in size on this family).
  bool skip_after_timeout = true;
};

// "a..b" doubles from a to b inclusive-of-crossing; "a,b,c" lists values.
inline std::vector<std::int64_t> parse_size_range(const std::string& spec) {
  std::vector<std::int64_t> out;
  if (auto dots = spec.find(".."); dots != std::string::npos) {
    std::int64_t a = std::stoll(spec.substr(0, dots));
    std::int64_t b = std::stoll(spec.substr(dots + 2));
    if (a <= 0 || b < a) throw std::invalid_argument("bad size range: " + spec);
    for (std::int64_t v = a; v <= b; v *= 2) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos < spec.size()) {
    std::size_t comma = spec.find(',', pos);
    std::string tok = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    out.push_back(std::stoll(tok));
    if (out.back() <= 0) throw std::invalid_argument("bad size range: " + spec);
    pos = comma == std::string::npos ? spec.size() : comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("bad size range: " + spec);
  return out;
}

namespace detail {

struct CellOutcome {
  double wall_ms = 0.0;
  QueryMarginal marginal;
};

inline CellOutcome run_cell_once(const Model& m, const std::string& method,
                                 std::chrono::steady_clock::time_point deadline) {
  auto t0 = std::chrono::steady_clock::now();
  CellOutcome out;
  if (method == "ground") {
    out.marginal = oracle_marginal(ground_model(m), deadline);
  } else {
    EngineOptions opt;
    opt.inversion_only = method == "inversion";
    opt.deadline = deadline;
    out.marginal = fove_continuous(m, opt).marginal;
  }
  auto t1 = std::chrono::steady_clock::now();
  out.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return out;
}

}  // namespace detail

// Runs one (model, method) cell under the per-cell deadline. A first run
// faster than one second is treated as warm-up and measured again.
inline BenchRow run_bench_cell(const Model& m, std::int64_t ns, std::int64_t nb,
                               const std::string& method, double per_cell_seconds) {
  BenchRow row;
  row.n_markets = ns;
  row.n_banks = nb;
  row.method = method;
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::microseconds(static_cast<std::int64_t>(per_cell_seconds * 1e6));
  try {
    detail::CellOutcome out = detail::run_cell_once(m, method, deadline);
    if (out.wall_ms < 1000.0 && std::chrono::steady_clock::now() < deadline)
      out = detail::run_cell_once(m, method, deadline);
    row.wall_ms = out.wall_ms;
    row.mean = out.marginal.mean.at(0);
    row.variance = out.marginal.cov.at(0).at(0);
    row.log_normalizer = out.marginal.log_normalizer;
  } catch (const DeadlineExceeded&) {
    row.status = "timeout";
  } catch (const GroundCapExceeded&) {
    row.status = "timeout";
  } catch (const DivergentIntegral&) {
    row.status = "divergent";
  } catch (const NonPairwiseModel&) {
    row.status = "unsupported";
  }
  return row;
}

inline std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  std::vector<BenchRow> rows;
  for (std::int64_t ns : cfg.markets) {
    std::vector<bool> dead(cfg.methods.size(), false);
    for (std::int64_t nb : cfg.banks) {
      Model m = make_recession_model(ns, nb);
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        if (cfg.skip_after_timeout && dead[mi]) {
          BenchRow row;
          row.n_markets = ns;
          row.n_banks = nb;
          row.method = cfg.methods[mi];
          row.status = "timeout";
          rows.push_back(row);
          continue;
        }
        BenchRow row = run_bench_cell(m, ns, nb, cfg.methods[mi], cfg.per_cell_seconds);
        if (row.status == "timeout") dead[mi] = true;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

// RFC 4180: quote a field when it contains a comma, a quote, or a newline.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline constexpr const char* kBenchCsvHeader =
    "model,n_markets,n_banks,method,wall_ms,mean,variance,log_normalizer,status";

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
  os << kBenchCsvHeader << '\n';
  char buf[64];
  auto num = [&](const std::optional<double>& v, const char* fmt) {
    if (!v) return std::string();
    std::snprintf(buf, sizeof(buf), fmt, *v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << csv_field(r.model) << ',' << r.n_markets << ',' << r.n_banks << ','
       << csv_field(r.method) << ',' << num(r.wall_ms, "%.3f") << ',' << num(r.mean, "%.17g")
       << ',' << num(r.variance, "%.17g") << ',' << num(r.log_normalizer, "%.17g") << ','
       << csv_field(r.status) << '\n';
  }
}

}  // namespace rcm

#endif  // RCM_BENCH_HPP
