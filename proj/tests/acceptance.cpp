// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "dop/dsl.hpp"
#include "dop/error.hpp"
#include "dop/geometry.hpp"
#include "dop/manager.hpp"
#include "dop/scheduler.hpp"
#include "dop/store.hpp"
#include "fixtures.hpp"

using namespace dop;

namespace {

constexpr double kRelTol = 1e-9;
constexpr auto kCycleTimeout = std::chrono::seconds(1);
constexpr int kRandomModels = 200;
constexpr std::size_t kMaxTreeNodes = 50;
constexpr int kFuzzInputs = 10000;
constexpr int kSchedulerInstances = 100;
constexpr std::size_t kMaxWorkers = 8;
const char* const kSchemaVersion = "acceptance-v1";

const testing::Triangle k345{{{0, 0, 0}, {3, 0, 0}, {0, 4, 0}}};

std::string self_exe;

struct Failure {
  std::string what;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

bool close_rel(double a, double b) {
  return std::abs(a - b) <= kRelTol * std::max({1.0, std::abs(a), std::abs(b)});
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// Runs this executable with `args` and returns its stdout.
std::string run_self(const std::string& args) {
  std::string cmd = "'" + self_exe + "' " + args;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  expect(pipe != nullptr, "cannot start " + cmd);
  std::string out;
  char buf[1024];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  int status = ::pclose(pipe);
  expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "child failed: " + cmd);
  return out;
}

// --- child modes --------------------------------------------------------------

int child_build(const std::string& store_dir) {
  auto registry = testing::geometry_registry();
  auto procs = testing::counting_geometry_procedures();
  auto store = open_store(store_dir, kSchemaVersion);
  auto m = ObjectManager::create(registry, procs.table, *store, "TRIANGLE", testing::triangle_conditions(k345));
  double surface = m->provide("surface").as_real();
  auto stats = m->total_stats();
  std::cout << *procs.calls << ' ' << stats.store_hits << ' ' << fmt(surface) << '\n';
  return 0;
}

int child_digest() {
  auto registry = testing::geometry_registry();
  auto tree = derive_substate_tree(registry, "TRIANGLE", "surface");
  std::cout << derive_key(tree, tree.root(), testing::triangle_conditions(k345), kSchemaVersion).hex() << '\n';
  return 0;
}

// --- criteria -------------------------------------------------------------------

std::string geometry_oracle() {
  using namespace geometry;
  auto sides = sides_of({k345[0], k345[1], k345[2]});
  double perimeter = perimeter_of(sides);
  expect(perimeter == 12.0, "perimeter " + fmt(perimeter));
  double heron = surface_of(perimeter, sides).surface;
  double shoelace = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = k345[i];
    const auto& b = k345[(i + 1) % 3];
    shoelace += a.x * b.y - b.x * a.y;
  }
  shoelace = std::abs(shoelace) / 2;
  expect(close_rel(heron, shoelace) && close_rel(heron, 6.0), "surface " + fmt(heron));

  auto registry = testing::geometry_registry();
  ProcedureTable procs;
  register_procedures(procs);
  MemoryStore store(kSchemaVersion);
  auto m = ObjectManager::create(registry, procs, store, "TRIANGLE", testing::triangle_conditions(k345));
  expect(m->provide("perimeter").as_real() == 12.0, "managed perimeter");
  expect(close_rel(m->provide("surface").as_real(), shoelace), "managed surface");
  auto c = point_from(m->provide("centroid"));
  expect(c.x == 1.0 && close_rel(c.y, 4.0 / 3.0) && c.z == 0.0, "centroid of 3-4-5");

  testing::Triangle unit{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  auto u = centroid_of({unit[0], unit[1], unit[2]});
  auto oracle = [&](double geometry::Point::*axis) {
    return (unit[0].*axis + unit[1].*axis + unit[2].*axis) / 3;
  };
  expect(u.x == oracle(&Point::x) && u.y == oracle(&Point::y) && u.z == oracle(&Point::z),
         "centroid of unit axes");
  expect(close_rel(u.x, 1.0 / 3) && close_rel(u.y, 1.0 / 3) && close_rel(u.z, 1.0 / 3), "one third");
  return "perimeter 12, surface " + fmt(heron) + " (shoelace " + fmt(shoelace) + "), centroid (1, " +
         fmt(c.y) + ", 0)";
}

// Internal attributes reached from `attribute` through `needs` inside one class.
std::uint64_t internal_closure(const ClassSchema& schema, const std::string& attribute) {
  std::set<std::string> seen;
  std::vector<std::string> todo{attribute};
  while (!todo.empty()) {
    auto name = todo.back();
    todo.pop_back();
    const auto* a = schema.find(name);
    if (!a || !a->is_internal() || !seen.insert(name).second) continue;
    for (const auto& need : a->needs) todo.push_back(need.attribute);
  }
  return seen.size();
}

std::string memoization() {
  auto registry = testing::geometry_registry();
  auto procs = testing::counting_geometry_procedures();
  MemoryStore store(kSchemaVersion);
  auto m = ObjectManager::create(registry, procs.table, store, "TRIANGLE", testing::triangle_conditions(k345));
  m->provide("surface");
  auto tree = derive_substate_tree(registry, "TRIANGLE", "surface");
  std::uint64_t expected = 0;
  for (const auto& n : tree.nodes())
    if (n.kind != NodeKind::Parameter) expected += internal_closure(registry.at(n.class_name), n.substate);
  expect(*procs.calls == expected,
         "cold calls " + std::to_string(*procs.calls) + " != " + std::to_string(expected));
  for (const auto& [slot, s] : m->all_stats()) expect(s.builds <= 1, slot + " built twice");
  auto cold = *procs.calls;
  m->provide("surface");
  expect(*procs.calls == cold, "second provide ran procedures");
  return "cold " + std::to_string(cold) + " procedure calls (one per internal attribute built), warm 0";
}

std::string persistence() {
  testing::TempDir dir;
  auto store = (dir.path() / "store").string();
  std::istringstream first(run_self("--child-build '" + store + "'"));
  std::istringstream second(run_self("--child-build '" + store + "'"));
  std::uint64_t b1 = 0, h1 = 0, b2 = 0, h2 = 0;
  std::string v1, v2;
  first >> b1 >> h1 >> v1;
  second >> b2 >> h2 >> v2;
  expect(b1 > 0, "first run built nothing");
  expect(b2 == 0, "second run built " + std::to_string(b2));
  expect(h2 >= 1, "second run had no store hit");
  expect(v1 == v2, "values differ");
  return "run 1: " + std::to_string(b1) + " builds; run 2: " + std::to_string(b2) + " builds, " +
         std::to_string(h2) + " hits";
}

std::set<std::pair<std::string, std::string>> not_ready(const ObjectManager& m, const ProductionTree& tree) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& n : tree.nodes())
    if (n.kind != NodeKind::Parameter && m.status_at(n.path, n.substate) != Status::Ready)
      out.emplace(n.path.display(), n.substate);
  return out;
}

std::set<std::pair<std::string, std::string>> ancestors(const ProductionTree& tree, const SlotPath& leaf) {
  std::set<std::pair<std::string, std::string>> out;
  for (NodeId a : tree.ancestors(*tree.find(leaf)))
    out.emplace(tree.node(a).path.display(), tree.node(a).substate);
  return out;
}

std::string invalidation() {
  std::mt19937_64 rng(20240401);
  std::size_t mutations = 0;
  for (int round = 0; round < kRandomModels; ++round) {
    auto model = testing::random_model(rng, kMaxTreeNodes);
    auto ground = derive_production_tree(model.registry, model.root_class, model.target);
    expect(ground.size() <= kMaxTreeNodes, "tree too large");
    auto sub = derive_substate_tree(model.registry, model.root_class, model.target);
    auto leaves = ground_state_leaves(sub);
    MemoryStore store(kSchemaVersion);
    auto m = ObjectManager::create(model.registry, model.procedures, store, model.root_class,
                                   testing::random_conditions(rng, ground));
    m->provide(model.target);
    for (int step = 0; step < 3; ++step) {
      auto leaf = leaves[rng() % leaves.size()];
      m->set_parameter(leaf, testing::random_real(rng));
      ++mutations;
      expect(not_ready(*m, sub) == ancestors(sub, leaf),
             "round " + std::to_string(round) + ": NotReady set differs for " + leaf.display());
      m->provide(model.target);
    }
    auto results = m->iterate(
        model.target,
        [&](std::size_t) {
          return std::vector<ParameterUpdate>{{leaves[rng() % leaves.size()], testing::random_real(rng)}};
        },
        3);
    MemoryStore fresh_store(kSchemaVersion);
    auto fresh = ObjectManager::create(model.registry, model.procedures, fresh_store, model.root_class,
                                       m->conditions());
    expect(fresh->provide(model.target) == results.back().value,
           "round " + std::to_string(round) + ": iterate differs from fresh build");
  }
  return std::to_string(kRandomModels) + " models, " + std::to_string(mutations) +
         " mutations, iterate bit-exact with fresh builds";
}

std::string well_built() {
  auto registry = testing::geometry_registry();
  auto plain = check_well_built(registry, "TRIANGLE");
  expect(plain.well_built, "TRIANGLE not well built");
  auto colored = testing::load_registry_files({testing::corpus_dir() / "samples" / "triangle_color.dop",
                                               testing::corpus_dir() / "samples" / "color.dop",
                                               testing::corpus_dir() / "geometry" / "point.dop",
                                               testing::corpus_dir() / "geometry" / "segment.dop"});
  auto split = check_well_built(colored, "TRIANGLE");
  expect(!split.well_built, "colored TRIANGLE reported well built");
  std::set<std::vector<std::string>> clusters(split.leaf_clusters.begin(), split.leaf_clusters.end());
  expect(clusters == std::set<std::vector<std::string>>{{"vertices"}, {"color"}}, "clusters differ");
  return "TRIANGLE well built; with color: {vertices} / {color}";
}

std::string cycles() {
  std::vector<dsl::SourceUnit> mutual{
      {"class A\nfeature\n  p : REAL\n  b : B builder (\"bv\")\n"
       "  av : REAL internal (av_build) needs p end\n"
       "  ab : REAL internal (ab_build) needs b(\"bv\") end\nend\n",
       "a.dop"},
      {"class B\nfeature\n  q : REAL\n  a : A builder (\"av\")\n"
       "  bv : REAL internal (bv_build) needs q end\n"
       "  ba : REAL internal (ba_build) needs a(\"av\") end\nend\n",
       "b.dop"}};
  auto loaded = dsl::load_registry(mutual);
  expect(loaded.registry.has_value(), "mutual fixture does not load");
  ProcedureTable procs;
  procs.add("A", "av_build", [](const BuildInputs& in) { return AttributeValue(in["p"].as_real() * 2); });
  procs.add("A", "ab_build", [](const BuildInputs& in) { return AttributeValue(in["b"].as_real() + 1); });
  procs.add("B", "bv_build", [](const BuildInputs& in) { return AttributeValue(in["q"].as_real() * 3); });
  procs.add("B", "ba_build", [](const BuildInputs& in) { return AttributeValue(in["a"].as_real() + 1); });
  MemoryStore store(kSchemaVersion);
  CalculationConditions ca;
  ca.set(SlotPath::parse("b.q"), 2.0);
  auto a = ObjectManager::create(*loaded.registry, procs, store, "A", ca);
  expect(a->provide("ab").as_real() == 7.0, "A root");
  CalculationConditions cb;
  cb.set(SlotPath::parse("a.p"), 5.0);
  auto b = ObjectManager::create(*loaded.registry, procs, store, "B", cb);
  expect(b->provide("ba").as_real() == 11.0, "B root");

  std::vector<dsl::SourceUnit> cyclic{
      {"class A\nfeature\n  b : B builder (\"s\")\n  s : REAL internal (s_build) needs b(\"s\") end\nend\n", "a"},
      {"class B\nfeature\n  a : A builder (\"s\")\n  s : REAL internal (s_build) needs a(\"s\") end\nend\n", "b"}};
  auto attempt = std::async(std::launch::async, [&]() -> std::string {
    auto r = dsl::load_registry(cyclic);
    for (const auto& d : r.diagnostics)
      if (d.code == "CycleDetected") return "load";
    if (!r.registry) return "load failed without CycleDetected";
    ProcedureTable none;
    none.add("A", "s_build", [](const BuildInputs&) { return AttributeValue(0.0); });
    none.add("B", "s_build", [](const BuildInputs&) { return AttributeValue(0.0); });
    MemoryStore s(kSchemaVersion);
    try {
      auto m = ObjectManager::create(*r.registry, none, s, "A");
      m->provide("s");
    } catch (const Error& e) {
      return e.code() == ErrorCode::CycleDetected ? "provide" : std::string(e.what());
    }
    return "no error";
  });
  if (attempt.wait_for(kCycleTimeout) != std::future_status::ready) {
    std::cout << "criterion 6: FAIL - same sub-state cycle did not terminate within 1 s" << std::endl;
    std::_Exit(1);
  }
  auto where = attempt.get();
  expect(where == "load" || where == "provide", "cycle not detected: " + where);
  return "A<->B build from both roots; same sub-state cycle raises CycleDetected at " + where;
}

std::string mutate(std::mt19937_64& rng, std::string text) {
  static const std::vector<std::string> tokens{"class", "feature", "end", "builder", "internal", "needs",
                                               "uses", "(", ")", "\"", ":", ",", "--", "ARRAY[", "]",
                                               "arity", "require", "ensure", "invariant", "{", "}", "\n"};
  int edits = 1 + static_cast<int>(rng() % 8);
  for (int i = 0; i < edits && !text.empty(); ++i) {
    std::size_t at = rng() % (text.size() + 1);
    switch (rng() % 4) {
      case 0: text.insert(at, tokens[rng() % tokens.size()]); break;
      case 1: text.erase(std::min(at, text.size() - 1), 1 + rng() % 16); break;
      case 2: if (at < text.size()) text[at] = static_cast<char>(rng() % 256); break;
      default: text = text.substr(0, at); break;
    }
  }
  return text;
}

std::string dsl_roundtrip() {
  std::size_t checked = 0;
  std::size_t warnings = 0;
  std::vector<std::string> sources;
  for (const char* name : {"triangle_listing.dop", "pyramid_listing.dop"}) {
    auto unit = testing::read_unit(testing::fixture_dir() / name);
    sources.push_back(unit.text);
    auto [first, d1] = dsl::parse_class(unit);
    expect(!dsl::has_errors(d1), std::string(name) + " has errors");
    warnings += d1.size();
    auto [second, d2] = dsl::parse_class({dsl::render_interface(first), "rendered"});
    expect(d2.empty() && second == first, std::string(name) + " round trip differs");
    auto [third, d3] = dsl::parse_class({dsl::render_interface(second), "rendered"});
    expect(d3.empty() && third == second, std::string(name) + " second round trip differs");
    ++checked;
  }
  std::mt19937_64 rng(777);
  for (int i = 0; i < kFuzzInputs; ++i) {
    std::string text;
    if (i % 2) {
      text = mutate(rng, sources[rng() % sources.size()]);
    } else {
      text.resize(rng() % 512);
      for (auto& c : text) c = static_cast<char>(rng() % 256);
    }
    auto result = dsl::parse_unit({text, "fuzz"});
    for (const auto& d : result.diagnostics)
      expect(d.span.offset + d.span.length <= text.size(), "diagnostic span out of bounds");
  }
  return std::to_string(checked) + " listings parse with 0 errors (" + std::to_string(warnings) +
         " warnings) and round-trip, " + std::to_string(kFuzzInputs) +
         " fuzz inputs parsed without crash";
}

std::string key_properties() {
  auto d1 = run_self("--child-digest");
  auto d2 = run_self("--child-digest");
  expect(!d1.empty() && d1 == d2, "digests differ across processes");

  auto registry = testing::geometry_registry();
  auto tree = derive_substate_tree(registry, "TRIANGLE", "surface");
  auto c = testing::triangle_conditions(k345);
  auto base = derive_key(tree, tree.root(), c, kSchemaVersion);
  expect(base.hex() + "\n" == d1, "in-process digest differs from child");
  for (const auto& leaf : ground_state_leaves(tree)) {
    auto moved = c;
    double v = c.find(leaf)->as_real();
    moved.set(leaf, std::nextafter(v, v + 1));
    expect(!(derive_key(tree, tree.root(), moved, kSchemaVersion) == base), "ulp change at " + leaf.display());
  }

  auto pyramid = derive_production_tree(registry, "TRIANGULAR_PYRAMID", "base_surface");
  NodeId base_node = *pyramid.find(SlotPath::parse("base"));
  CalculationConditions pc;
  testing::assign_triangle(pc, k345, "base.");
  std::mt19937_64 rng(5);
  std::optional<StateKey> first;
  for (int i = 0; i < 20; ++i) {
    for (const char* axis : {"apex.x", "apex.y", "apex.z"}) pc.set(SlotPath::parse(axis), testing::random_real(rng));
    auto k = derive_key(pyramid, base_node, pc, kSchemaVersion);
    if (!first) first = k;
    expect(k == *first, "base sub-key changed with the apex");
  }
  return "cross-process digests equal (" + d1.substr(0, 16) + "...), 9 ulp changes detected, base key stable";
}

ProductionTree random_tree(std::mt19937_64& rng, std::size_t n) {
  ProductionTree t;
  t.add_node(TreeNode{SlotPath{}, "C0", "s", NodeKind::Internal, std::nullopt, {}});
  std::vector<NodeId> chain{0};
  for (std::size_t i = 1; i < n; ++i) {
    chain.resize(1 + rng() % chain.size());
    NodeId parent = chain.back();
    chain.push_back(t.add_node(TreeNode{t.node(parent).path.child("a", i), "C" + std::to_string(rng() % 4),
                                        "s" + std::to_string(rng() % 3), NodeKind::Internal, parent, {}}));
  }
  return t;
}

std::string scheduler_bounds() {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> cost(0, 5);
  for (int round = 0; round < kSchedulerInstances; ++round) {
    auto tree = random_tree(rng, 1 + rng() % kMaxTreeNodes);
    CostModel model(Cost{cost(rng), 0, 0});
    for (int c = 0; c < 4; ++c)
      for (int s = 0; s < 3; ++s)
        if (rng() % 2) model.set("C" + std::to_string(c) + ".s" + std::to_string(s), Cost{cost(rng), 0, 0});
    auto report = simulate_workflow(tree, model);
    double previous = 0;
    for (std::size_t w = 1; w <= kMaxWorkers; ++w) {
      auto s = schedule_builds(tree, model, w);
      std::string where = "instance " + std::to_string(round) + " w=" + std::to_string(w);
      expect(validate_schedule(tree, model, s).empty(), where + ": invalid schedule");
      double slack = kRelTol * std::max(1.0, s.makespan);
      expect(s.makespan + slack >= report.critical_path_cpu, where + ": below critical path");
      expect(s.makespan + slack >= report.total.cpu_seconds / static_cast<double>(w), where + ": below total/w");
      expect(w == 1 || s.makespan <= previous, where + ": makespan increased");
      previous = s.makespan;
    }
  }

  std::size_t builds = 0;
  for (int round = 0; round < kSchedulerInstances; ++round) {
    auto model = testing::random_model(rng, kMaxTreeNodes);
    auto ground = derive_production_tree(model.registry, model.root_class, model.target);
    MemoryStore store(kSchemaVersion);
    auto m = ObjectManager::create(model.registry, model.procedures, store, model.root_class,
                                   testing::random_conditions(rng, ground));
    m->provide(model.target);
    auto observed = replay_trace(m->trace());
    expect(!observed.builds.empty() && !observed.builds[0].enclosing, "trace does not start at the root");
    for (const auto& b : observed.builds) {
      if (!b.enclosing) continue;
      const auto& outer = observed.builds[*b.enclosing];
      expect(outer.start < b.start && b.end < outer.end, "build not enclosed by its parent");
      expect(SlotPath::parse(b.slot_path).starts_with(SlotPath::parse(outer.slot_path)), "nesting crosses objects");
    }
    builds += observed.builds.size();
  }
  return std::to_string(kSchedulerInstances) + " instances x " + std::to_string(kMaxWorkers) +
         " worker counts within bounds; " + std::to_string(builds) + " traced builds properly nested";
}

}  // namespace

int main(int argc, char** argv) {
  self_exe = std::filesystem::canonical("/proc/self/exe").string();
  if (argc == 3 && std::string(argv[1]) == "--child-build") return child_build(argv[2]);
  if (argc == 2 && std::string(argv[1]) == "--child-digest") return child_digest();

  const std::vector<std::pair<int, std::function<std::string()>>> criteria{
      {1, geometry_oracle}, {2, memoization}, {3, persistence},  {4, invalidation},    {5, well_built},
      {6, cycles},          {7, dsl_roundtrip}, {8, key_properties}, {9, scheduler_bounds}};
  int failures = 0;
  for (const auto& [n, check] : criteria) {
    auto start = std::chrono::steady_clock::now();
    std::string verdict;
    try {
      verdict = "PASS - " + check();
    } catch (const Failure& f) {
      verdict = "FAIL - " + f.what;
    } catch (const std::exception& e) {
      verdict = std::string("FAIL - unexpected exception: ") + e.what();
    }
    if (verdict.rfind("FAIL", 0) == 0) ++failures;
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    std::cout << "criterion " << n << ": " << verdict << " [" << ms.count() << " ms]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
