#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "fixtures.hpp"

using dop::testing::corpus_dir;
using dop::testing::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  std::string cmd = std::string(DOP_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string sample(const std::string& name) { return (corpus_dir() / "samples" / name).string(); }

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

long counter(const std::string& out, const std::string& name) {
  std::smatch m;
  REQUIRE(std::regex_search(out, m, std::regex(name + " (\\d+)")));
  return std::stol(m[1]);
}

double number(const std::string& out, const std::string& label) {
  std::smatch m;
  REQUIRE(std::regex_search(out, m, std::regex(label + " ([0-9.e+-]+)")));
  return std::stod(m[1]);
}

}  // namespace

TEST_CASE("tree prints the production tree") {
  auto r = run_cli("tree TRIANGLE centroid");
  CHECK(r.status == 0);
  auto ls = lines(r.out);
  REQUIRE(ls.size() == 13);
  CHECK(ls[0] == "TRIANGLE (centroid)");
  CHECK(ls[1] == "  vertices[1] : POINT (position)");
  CHECK(ls[2] == "    x : REAL");

  auto internal = run_cli("tree TRIANGLE --internal centroid");
  CHECK(internal.status == 0);
  CHECK(lines(internal.out).size() == 4);

  auto unknown = run_cli("tree NOPE centroid");
  CHECK(unknown.status == 2);
  CHECK(unknown.out.find("UnknownClass") != std::string::npos);
}

TEST_CASE("interface renders a class") {
  auto r = run_cli("interface TRIANGLE");
  CHECK(r.status == 0);
  CHECK(r.out.rfind("class TRIANGLE", 0) == 0);
}

TEST_CASE("build computes and reuses the store") {
  TempDir dir;
  std::string args = "build TRIANGLE surface -p " + sample("triangle_345.params") + " --store " +
                     (dir.path() / "store").string();
  auto first = run_cli(args);
  CHECK(first.status == 0);
  CHECK(first.out.find("surface = 6.0") != std::string::npos);
  CHECK(counter(first.out, "builds") > 0);
  auto second = run_cli(args);
  CHECK(second.status == 0);
  CHECK(second.out.find("surface = 6.0") != std::string::npos);
  CHECK(counter(second.out, "builds") == 0);
  CHECK(counter(second.out, "store_hits") >= 1);
}

TEST_CASE("build reports missing parameters and bad literals") {
  TempDir dir;
  std::ofstream(dir.path() / "partial.params") << "vertices[1].x = 0\nvertices[1].y = 0\nvertices[1].z = 0\n"
                                                   "vertices[2].x = 3\nvertices[2].y = 0\nvertices[2].z = 0\n"
                                                   "vertices[3].x = 0\nvertices[3].y = 4\n";
  auto missing = run_cli("build TRIANGLE surface -p " + (dir.path() / "partial.params").string());
  CHECK(missing.status == 2);
  CHECK(missing.out.find("vertices[3].z") != std::string::npos);

  auto bad = run_cli("build TRIANGLE surface -p " + sample("triangle_345.params") + " --set 'vertices[1].x=abc'");
  CHECK(bad.status == 2);
  auto unknown = run_cli("build TRIANGLE surface -p " + sample("triangle_345.params") + " --set 'vertices[9].x=1'");
  CHECK(unknown.status == 2);
}

TEST_CASE("check reports builder clusters") {
  auto ok = run_cli("check TRIANGLE");
  CHECK(ok.status == 0);
  CHECK(ok.out.rfind("TRIANGLE is well built", 0) == 0);

  auto g = corpus_dir() / "geometry";
  auto split = run_cli("check TRIANGLE --classes '" + (corpus_dir() / "samples" / "*.dop").string() +
                   "' --classes " + (g / "point.dop").string() + " --classes " + (g / "segment.dop").string());
  CHECK(split.status == 0);
  CHECK(split.out.find("is not well built") != std::string::npos);
  CHECK(split.out.find("{vertices}") != std::string::npos);
  CHECK(split.out.find("{color}") != std::string::npos);
}

TEST_CASE("iterate rebuilds only what changed") {
  auto r = run_cli("iterate TRIANGLE surface -p " + sample("triangle_345.params") +
               " --step 'vertices[1].x=1' --iters 3");
  CHECK(r.status == 0);
  auto ls = lines(r.out);
  REQUIRE(ls.size() == 4);
  CHECK(ls[0] == "iter\trebuilt\tsurface");
  for (std::size_t i = 1; i < ls.size(); ++i) {
    auto rebuilt = std::stol(ls[i].substr(ls[i].find('\t') + 1));
    CHECK(rebuilt > 0);
    CHECK(rebuilt < 13);
  }
  auto zero = run_cli("iterate TRIANGLE surface -p " + sample("triangle_345.params") + " --iters 0");
  CHECK(zero.status == 2);
}

TEST_CASE("simulate predicts makespans") {
  std::string base = "simulate TRIANGLE centroid --costs " + sample("uniform.costs");
  auto one = run_cli(base + " --workers 1");
  CHECK(one.status == 0);
  CHECK(number(one.out, "makespan") == number(one.out, "total cpu"));
  auto three = run_cli(base + " --workers 3");
  CHECK(three.status == 0);
  CHECK(number(three.out, "makespan") < number(one.out, "makespan"));
  CHECK(number(three.out, "makespan") >= number(three.out, "critical path cpu"));

  TempDir dir;
  std::ofstream(dir.path() / "bad.costs") << "default 1 0\n";
  auto bad = run_cli("simulate TRIANGLE centroid --costs " + (dir.path() / "bad.costs").string());
  CHECK(bad.status == 2);
  CHECK(bad.out.find("bad.costs:1") != std::string::npos);
}

TEST_CASE("build traces replay cleanly") {
  TempDir dir;
  auto trace = (dir.path() / "trace.tsv").string();
  auto b = run_cli("build TRIANGLE centroid -p " + sample("triangle_345.params") + " --trace " + trace);
  CHECK(b.status == 0);
  auto r = run_cli("replay " + trace + " --class TRIANGLE --substate centroid");
  CHECK(r.status == 0);
  CHECK(r.out.find("nesting ok") != std::string::npos);
  std::ofstream(dir.path() / "bad.tsv") << "1\tbuild_start\t.\tcentroid\n";
  CHECK(run_cli("replay " + (dir.path() / "bad.tsv").string()).status == 2);
}

TEST_CASE("json-lines output") {
  auto r = run_cli("--format json-lines build TRIANGLE surface -p " + sample("triangle_345.params"));
  CHECK(r.status == 0);
  auto ls = lines(r.out);
  REQUIRE(ls.size() >= 2);
  CHECK(ls[0] == R"({"substate":"surface","value":6.0})");
  CHECK(ls[1].find("\"builds\":") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(run_cli("").status == 2);
  CHECK(run_cli("bogus").status == 2);
  CHECK(run_cli("build").status == 2);
}
