#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rcm/dsl.hpp"

#ifndef RCM_TESTDATA_DIR
#error "RCM_TESTDATA_DIR must point at the testdata directory"
#endif

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> corpus(const char* sub) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fs::path(RCM_TESTDATA_DIR) / sub))
    if (e.path().extension() == ".rcm") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  REQUIRE(out.size() >= 10);
  return out;
}

}  // namespace

TEST_CASE("every golden model round-trips through the canonical serialization") {
  for (const auto& p : corpus("golden")) {
    CAPTURE(p.filename().string());
    rcm::ParseResult first = rcm::parse_model(slurp(p), p.filename().string());
    REQUIRE(first.ok());
    std::string canonical = rcm::serialize_model(first.model);
    rcm::ParseResult second = rcm::parse_model(canonical, "canonical");
    REQUIRE(second.ok());
    CHECK(first.model == second.model);
    CHECK(rcm::serialize_model(second.model) == canonical);  // byte-stable fixpoint
  }
}

TEST_CASE("every malformed file yields at least one positioned diagnostic") {
  for (const auto& p : corpus("malformed")) {
    CAPTURE(p.filename().string());
    rcm::ParseResult r = rcm::parse_model(slurp(p), p.filename().string());
    CHECK_FALSE(r.ok());
    REQUIRE_FALSE(r.diagnostics.empty());
    for (const auto& d : r.diagnostics) {
      CHECK(d.line >= 1);
      CHECK(d.col >= 1);
      CHECK_FALSE(d.message.empty());
      CHECK(d.file == p.filename().string());
    }
  }
}

TEST_CASE("diagnostics carry the offending line and column") {
  rcm::ParseResult r = rcm::parse_model("domain D = 2\natom A(D)\nfactor rn(A(s), B(s); sigma2=1)\n", "t");
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].line == 3);
  CHECK(r.diagnostics[0].col == 17);
  CHECK(r.diagnostics[0].message == "unknown atom 'B'");
  CHECK(rcm::format_diagnostic(r.diagnostics[0]) == "t:3:17: unknown atom 'B'");
}

TEST_CASE("a negative pair variance is rejected where it is written") {
  rcm::ParseResult r =
      rcm::parse_model("domain D = 2\natom A(D)\natom B(D)\nfactor rn(A(s), B(s); sigma2=-1)\n", "t");
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].line == 4);
  CHECK(r.diagnostics[0].message == "sigma2 must be positive");
}

TEST_CASE("parsing recovers after an error and reports later lines too") {
  rcm::ParseResult r = rcm::parse_model(
      "domain D = 2\n"
      "atom A(D\n"              // missing paren
      "atom B(D)\n"             // fine
      "observe B(5) = 1\n"      // out of range
      "query B(0)\n",           // fine
      "t");
  CHECK(r.diagnostics.size() == 2);
  REQUIRE(r.diagnostics.size() >= 2);
  CHECK(r.diagnostics[0].line == 2);
  CHECK(r.diagnostics[1].line == 4);
  // The surviving directives still landed in the model.
  CHECK(r.model.atom_index("B") >= 0);
  CHECK(r.model.queries.size() == 1);
}

TEST_CASE("serialization canonicalizes spacing and float formatting") {
  rcm::ParseResult r = rcm::parse_model(
      "domain   D = {  x , y }\n"
      "atom A( D )\n"
      "factor rn( A(s) , 0.5 ; sigma2 = 2.0 , d = 0 )\n"
      "observe A( x ) = 0.2500\n",
      "t");
  REQUIRE(r.ok());
  std::string canonical = rcm::serialize_model(r.model);
  CHECK(canonical ==
        "domain D = {x, y}\n"
        "atom A(D)\n"
        "factor rn(A(s), 0.5; sigma2=2)\n"
        "observe A(x) = 0.25\n");
}

TEST_CASE("empty observation and query sections serialize to nothing") {
  rcm::ParseResult r = rcm::parse_model("domain D = 1\natom A(D)\nfactor rn(A(s), 0; sigma2=1)\n", "t");
  REQUIRE(r.ok());
  std::string canonical = rcm::serialize_model(r.model);
  CHECK(canonical.find("observe") == std::string::npos);
  CHECK(canonical.find("query") == std::string::npos);
}
