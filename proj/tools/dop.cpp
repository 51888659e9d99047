// dop: load .dop classes, print production trees, build sub-states against a
// persistent store, iterate over changing parameters and simulate workflows.
//
// Exit status: 0 success, 2 user or input error, 1 internal error.

#include <glob.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "dop/dsl.hpp"
#include "dop/error.hpp"
#include "dop/geometry.hpp"
#include "dop/manager.hpp"
#include "dop/params.hpp"
#include "dop/scheduler.hpp"
#include "dop/store.hpp"

#ifndef DOP_CORPUS_DIR
#define DOP_CORPUS_DIR "share/dop"
#endif

namespace {

using json = nlohmann::ordered_json;
using namespace dop;

enum class Format { Plain, JsonLines };

struct Common {
  std::vector<std::string> class_globs{std::string(DOP_CORPUS_DIR) + "/geometry/*.dop"};
  Format format = Format::Plain;
  bool quiet = false;
};

class Output {
 public:
  explicit Output(Format f) : format_(f) {}
  bool json_mode() const { return format_ == Format::JsonLines; }
  void line(const std::string& text) const {
    if (!json_mode()) std::cout << text << '\n';
  }
  void record(const json& j) const {
    if (json_mode()) std::cout << j.dump() << '\n';
  }

 private:
  Format format_;
};

json to_json(const AttributeValue& v) {
  switch (v.kind()) {
    case ValueKind::Boolean: return v.as_bool();
    case ValueKind::Integer: return v.as_integer();
    case ValueKind::Real: return v.as_real();
    case ValueKind::String: return v.as_string();
    case ValueKind::RealVector: return v.as_reals();
    case ValueKind::List: {
      json out = json::array();
      for (const auto& item : v.as_list()) out.push_back(to_json(item));
      return out;
    }
    case ValueKind::Composite: {
      json out = json::object();
      for (const auto& f : v.as_fields()) out[f.name] = to_json(f.value);
      return out;
    }
  }
  return nullptr;
}

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::set<std::string> files;
  for (const auto& p : patterns) {
    glob_t g{};
    int rc = ::glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.insert(g.gl_pathv[i]);
    ::globfree(&g);
    if (rc == GLOB_NOMATCH)
      throw Error(ErrorCode::IoFailure, "no class file matches '" + p + "'");
    if (rc != 0) throw Error(ErrorCode::IoFailure, "cannot expand '" + p + "'");
  }
  return {files.begin(), files.end()};
}

Registry load(const Common& common) {
  std::vector<dsl::SourceUnit> units;
  for (const auto& file : expand_globs(common.class_globs)) units.push_back(dsl::read_source(file));
  auto result = dsl::load_registry(units);
  for (const auto& d : result.diagnostics)
    if (d.severity == dsl::Severity::Error || !common.quiet)
      std::cerr << dsl::format_diagnostic(d) << '\n';
  if (!result.registry)
    throw Error(ErrorCode::InvalidInput, "class definitions contain errors");
  return std::move(*result.registry);
}

std::string schema_fingerprint(const Registry& registry) {
  std::string text;
  for (const auto& [name, schema] : registry.classes()) text += dsl::render_interface(schema);
  return to_hex(sha256(text)).substr(0, 16);
}

std::string node_label(const TreeNode& n, bool is_root) {
  if (n.kind == NodeKind::Parameter) return n.path.back().attribute + " : " + n.class_name;
  std::string name;
  if (!is_root) {
    const auto& step = n.path.back();
    name = step.attribute + (step.index ? "[" + std::to_string(*step.index) + "]" : "") + " : ";
  }
  return name + n.class_name + " (" + n.substate + ")";
}

void print_tree(const Output& out, const ProductionTree& tree) {
  for (NodeId id = 0; id < tree.size(); ++id) {
    const TreeNode& n = tree.node(id);
    std::size_t depth = tree.depth_of(id);
    out.line(std::string(2 * depth, ' ') + node_label(n, id == tree.root()));
    out.record(json{{"depth", depth},
                    {"path", n.path.display()},
                    {"class", n.class_name},
                    {"substate", n.substate},
                    {"kind", node_kind_name(n.kind)}});
  }
}

std::unique_ptr<ValueStore> open_value_store(const std::string& flag, bool memory_default,
                                             const Registry& registry) {
  std::string root = flag;
  if (root.empty())
    if (const char* env = std::getenv("DOP_STORE"); env && *env) root = env;
  if (root.empty() && !memory_default) root = ".dop-store";
  if (root.empty()) return std::make_unique<MemoryStore>(schema_fingerprint(registry));
  return FileStore::open(root, schema_fingerprint(registry));
}

// Parameters for `substate` of `class_name`: file assignments, then --set
// overrides, checked against the ground-state leaves.
CalculationConditions gather_parameters(const Registry& registry, const std::string& class_name,
                                        const std::string& substate, const std::string& params_file,
                                        const std::vector<std::string>& sets) {
  std::vector<ParameterAssignment> assignments;
  if (!params_file.empty()) assignments = read_parameter_file(params_file);
  for (const auto& s : sets) {
    auto a = parse_assignment(s);
    std::erase_if(assignments, [&](const auto& x) { return x.leaf == a.leaf; });
    assignments.push_back(std::move(a));
  }
  auto ground = derive_production_tree(registry, class_name, substate);
  auto conditions = bind_parameters(ground, assignments);
  auto needed = derive_substate_tree(registry, class_name, substate);
  auto missing = conditions.missing_for(needed);
  if (!missing.empty()) {
    std::vector<std::string> paths;
    std::string list;
    for (const auto& m : missing) {
      paths.push_back(m.str());
      list += (list.empty() ? "" : ", ") + m.str();
    }
    throw Error(ErrorCode::MissingParameter, "no value for " + list, paths);
  }
  return conditions;
}

void write_trace(const std::string& path, const ObjectManager& manager) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : manager.trace()) out << format_trace_line(r) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write trace '" + path + "'");
}

void print_warnings(const ObjectManager& manager, const Common& common) {
  if (common.quiet) return;
  for (const auto& w : manager.warnings()) std::cerr << "warning: " << w << '\n';
}

// --- commands ---------------------------------------------------------------

struct TreeArgs {
  std::string class_name, substate, internal;
  bool canonical = false;
};

void cmd_tree(const Common& common, const TreeArgs& a) {
  Output out(common.format);
  Registry registry = load(common);
  ProductionTree tree;
  if (!a.internal.empty()) {
    tree = internal_tree(registry, a.class_name, a.internal);
  } else {
    if (a.substate.empty())
      throw Error(ErrorCode::InvalidInput, "a sub-state or --internal ATTRIBUTE is required");
    tree = derive_production_tree(registry, a.class_name, a.substate);
  }
  if (a.canonical && !out.json_mode()) {
    std::cout << tree.serialize();
    return;
  }
  print_tree(out, tree);
}

void cmd_interface(const Common& common, const std::string& class_name) {
  Output out(common.format);
  Registry registry = load(common);
  const ClassSchema& schema = registry.at(class_name);
  if (!out.json_mode()) {
    std::cout << dsl::render_interface(schema);
    return;
  }
  for (const auto& attr : schema.attributes) {
    json j{{"class", schema.name}, {"attribute", attr.name}, {"type", attr.type.to_string()}};
    if (attr.is_internal()) j["internal"] = attr.procedure();
    else if (attr.is_builder()) j["builder"] = attr.required_substate();
    else j["parameter"] = true;
    if (attr.arity) j["arity"] = *attr.arity;
    json needs = json::array();
    for (const auto& n : attr.needs)
      needs.push_back(n.substate ? n.attribute + "(\"" + *n.substate + "\")" : n.attribute);
    j["needs"] = needs;
    out.record(j);
  }
}

void cmd_check(const Common& common, const std::string& class_name) {
  Output out(common.format);
  Registry registry = load(common);
  auto report = check_well_built(registry, class_name);
  if (report.well_built) out.line(class_name + " is well built");
  else out.line(class_name + " is not well built; split it by builder cluster:");
  json clusters = json::array();
  for (const auto& cluster : report.leaf_clusters) {
    std::set<std::string> members(cluster.begin(), cluster.end());
    std::vector<std::string> users;
    for (const auto& [internal, leaves] : report.internal_leaves)
      for (const auto& l : leaves)
        if (members.count(l)) {
          users.push_back(internal);
          break;
        }
    std::string names, used_by;
    for (const auto& c : cluster) names += (names.empty() ? "" : ", ") + c;
    for (const auto& u : users) used_by += (used_by.empty() ? "" : ", ") + u;
    out.line("  {" + names + "} needed by " + (used_by.empty() ? "no internal attribute" : used_by));
    clusters.push_back(json{{"builders", cluster}, {"needed_by", users}});
  }
  out.record(json{{"class", class_name}, {"well_built", report.well_built}, {"clusters", clusters}});
}

struct BuildArgs {
  std::string class_name, substate, params, store, trace;
  std::vector<std::string> sets;
  bool stats = false;
};

void cmd_build(const Common& common, const BuildArgs& a) {
  Output out(common.format);
  Registry registry = load(common);
  auto conditions = gather_parameters(registry, a.class_name, a.substate, a.params, a.sets);
  auto store = open_value_store(a.store, false, registry);
  ProcedureTable procedures;
  geometry::register_procedures(procedures);
  auto manager = ObjectManager::create(registry, procedures, *store, a.class_name, conditions);
  AttributeValue value;
  try {
    value = manager->provide(a.substate);
  } catch (...) {
    write_trace(a.trace, *manager);
    throw;
  }
  write_trace(a.trace, *manager);
  print_warnings(*manager, common);
  auto total = manager->total_stats();
  out.line(a.substate + " = " + to_text(value));
  out.line("builds " + std::to_string(total.builds) + "  store_hits " +
           std::to_string(total.store_hits) + "  store_misses " + std::to_string(total.store_misses));
  out.record(json{{"substate", a.substate}, {"value", to_json(value)}});
  out.record(json{{"builds", total.builds},
                  {"store_hits", total.store_hits},
                  {"store_misses", total.store_misses}});
  if (!a.stats) return;
  for (const auto& [key, s] : manager->all_stats()) {
    out.line("  " + key + "  builds " + std::to_string(s.builds) + "  hits " +
             std::to_string(s.store_hits) + "  misses " + std::to_string(s.store_misses));
    out.record(json{{"slot", key},
                    {"builds", s.builds},
                    {"store_hits", s.store_hits},
                    {"store_misses", s.store_misses}});
  }
}

struct IterateArgs {
  std::string class_name, substate, params, store, trace;
  std::vector<std::string> sets, steps;
  std::size_t iters = 1;
};

void cmd_iterate(const Common& common, const IterateArgs& a) {
  Output out(common.format);
  Registry registry = load(common);
  auto conditions = gather_parameters(registry, a.class_name, a.substate, a.params, {});
  std::vector<ParameterUpdate> sets;
  for (const auto& s : a.sets) {
    auto p = parse_assignment(s);
    sets.push_back(ParameterUpdate{p.leaf, p.value});
  }
  std::vector<std::pair<SlotPath, double>> steps;
  for (const auto& s : a.steps) {
    auto p = parse_assignment(s);
    double delta = p.value.kind() == ValueKind::Integer ? static_cast<double>(p.value.as_integer())
                                                        : p.value.as_real();
    steps.emplace_back(p.leaf, delta);
  }
  auto store = open_value_store(a.store, true, registry);
  ProcedureTable procedures;
  geometry::register_procedures(procedures);
  auto manager = ObjectManager::create(registry, procedures, *store, a.class_name, conditions);
  auto updates_for = [&](std::size_t i) {
    std::vector<ParameterUpdate> updates = sets;
    if (i > 1)
      for (const auto& [leaf, delta] : steps) {
        const AttributeValue* current = manager->conditions().find(leaf);
        if (!current) throw Error(ErrorCode::UnknownLeaf, "'" + leaf.str() + "' has no value to step");
        updates.push_back(ParameterUpdate{leaf, AttributeValue(current->as_real() + delta)});
      }
    return updates;
  };
  std::vector<IterationResult> results;
  try {
    results = manager->iterate(a.substate, updates_for, a.iters);
  } catch (...) {
    write_trace(a.trace, *manager);
    throw;
  }
  write_trace(a.trace, *manager);
  print_warnings(*manager, common);
  out.line("iter\trebuilt\t" + a.substate);
  for (const auto& r : results) {
    out.line(std::to_string(r.iteration) + "\t" + std::to_string(r.rebuilt_node_count) + "\t" +
             to_text(r.value));
    out.record(json{{"iteration", r.iteration},
                    {"rebuilt", r.rebuilt_node_count},
                    {"value", to_json(r.value)}});
  }
}

struct SimulateArgs {
  std::string class_name, substate, costs;
  std::size_t workers = 1;
  bool schedule = false;
};

void cmd_simulate(const Common& common, const SimulateArgs& a) {
  Output out(common.format);
  Registry registry = load(common);
  CostModel model(Cost{1, 0, 0});
  if (!a.costs.empty()) model = read_cost_file(a.costs);
  auto tree = derive_production_tree(registry, a.class_name, a.substate);
  auto report = simulate_workflow(tree, model);
  auto schedule = schedule_builds(tree, model, a.workers);
  out.line("nodes " + std::to_string(tree.size()));
  out.line("total cpu " + format_real(report.total.cpu_seconds) + "  memory " +
           format_real(report.total.memory_bytes) + "  disk " + format_real(report.total.disk_bytes));
  out.line("critical path cpu " + format_real(report.critical_path_cpu));
  out.line("workers " + std::to_string(a.workers) + "  makespan " + format_real(schedule.makespan));
  out.record(json{{"nodes", tree.size()},
                  {"total_cpu", report.total.cpu_seconds},
                  {"total_memory", report.total.memory_bytes},
                  {"total_disk", report.total.disk_bytes},
                  {"critical_path_cpu", report.critical_path_cpu},
                  {"workers", a.workers},
                  {"makespan", schedule.makespan}});
  if (!a.schedule) return;
  out.line("worker\tstart\tend\tnode");
  auto rows = schedule.assignments;
  std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
    return x.start != y.start ? x.start < y.start : x.worker < y.worker;
  });
  for (const auto& r : rows) {
    const TreeNode& n = tree.node(r.node);
    out.line(std::to_string(r.worker) + "\t" + format_real(r.start) + "\t" + format_real(r.end) +
             "\t" + n.path.display() + " " + n.substate);
    out.record(json{{"worker", r.worker},
                    {"start", r.start},
                    {"end", r.end},
                    {"path", n.path.display()},
                    {"substate", n.substate}});
  }
}

struct ReplayArgs {
  std::string trace, class_name, substate;
};

void cmd_replay(const Common& common, const ReplayArgs& a) {
  Output out(common.format);
  std::ifstream in(a.trace, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read trace '" + a.trace + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  auto records = parse_trace_text(buf.str());
  auto observed = replay_trace(records);
  for (const auto& b : observed.builds) {
    out.line(std::string(2 * b.depth, ' ') + b.slot_path + " " + b.substate + "  [" +
             std::to_string(b.start) + ", " + std::to_string(b.end) + "]");
    out.record(json{{"path", b.slot_path},
                    {"substate", b.substate},
                    {"start", b.start},
                    {"end", b.end},
                    {"depth", b.depth}});
  }
  out.line("builds " + std::to_string(observed.builds.size()) + "  store_hits " +
           std::to_string(observed.store_hits) + "  store_misses " +
           std::to_string(observed.store_misses) + "  nesting ok");
  out.record(json{{"builds", observed.builds.size()},
                  {"store_hits", observed.store_hits},
                  {"store_misses", observed.store_misses},
                  {"properly_nested", true}});
  if (a.class_name.empty()) return;
  Registry registry = load(common);
  auto tree = derive_production_tree(registry, a.class_name, a.substate);
  auto cmp = compare_replay(tree, registry, records, observed);
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? std::string("none") : s;
  };
  out.line("predicted " + join(cmp.predicted));
  out.line("missing " + join(cmp.missing));
  out.line("unexpected " + join(cmp.unexpected));
  out.record(json{{"predicted", cmp.predicted}, {"missing", cmp.missing}, {"unexpected", cmp.unexpected}});
}

void report_error(const Common& common, const std::string& code, const std::string& message) {
  if (common.format == Format::JsonLines)
    std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n';
  else
    std::cerr << "dop: " << code << ": " << message << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deductive object programming runtime"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  std::map<std::string, Format> formats{{"plain", Format::Plain}, {"json-lines", Format::JsonLines}};
  app.add_option("--classes", common.class_globs, "Glob(s) of .dop class files")
      ->allow_extra_args(false);
  app.add_option("--format", common.format, "Output format")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case).description("plain|json-lines"))
      ->option_text("plain|json-lines");
  app.add_flag("-q,--quiet", common.quiet, "Suppress warnings");

  TreeArgs tree;
  auto* tree_cmd = app.add_subcommand("tree", "Print the production tree of CLASS in SUBSTATE");
  tree_cmd->add_option("class", tree.class_name)->required();
  tree_cmd->add_option("substate", tree.substate);
  tree_cmd->add_option("--internal", tree.internal, "Print the internal tree of an attribute");
  tree_cmd->add_flag("--canonical", tree.canonical, "Canonical line format");

  std::string interface_class;
  auto* interface_cmd = app.add_subcommand("interface", "Print the enriched class interface");
  interface_cmd->add_option("class", interface_class)->required();

  std::string check_class;
  auto* check_cmd = app.add_subcommand("check", "Report whether CLASS is well built");
  check_cmd->add_option("class", check_class)->required();

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "Provide CLASS in SUBSTATE");
  build_cmd->add_option("class", build.class_name)->required();
  build_cmd->add_option("substate", build.substate)->required();
  build_cmd->add_option("-p,--params", build.params, "Parameter file");
  build_cmd->add_option("--set", build.sets, "Override a parameter: path=value");
  build_cmd->add_option("--store", build.store, "Store directory (default $DOP_STORE or .dop-store)");
  build_cmd->add_option("--trace", build.trace, "Write the build trace to a file");
  build_cmd->add_flag("--stats", build.stats, "Per-object counters");

  IterateArgs iter;
  auto* iter_cmd = app.add_subcommand("iterate", "Provide SUBSTATE repeatedly under changing parameters");
  iter_cmd->add_option("class", iter.class_name)->required();
  iter_cmd->add_option("substate", iter.substate)->required();
  iter_cmd->add_option("-p,--params", iter.params, "Parameter file");
  iter_cmd->add_option("--set", iter.sets, "Assign path=value at every iteration");
  iter_cmd->add_option("--step", iter.steps, "Add delta to path from the second iteration on");
  iter_cmd->add_option("--iters", iter.iters, "Iteration count")->check(CLI::PositiveNumber);
  iter_cmd->add_option("--store", iter.store, "Store directory (default $DOP_STORE or in memory)");
  iter_cmd->add_option("--trace", iter.trace, "Write the build trace to a file");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Cost report and simulated schedule");
  sim_cmd->add_option("class", sim.class_name)->required();
  sim_cmd->add_option("substate", sim.substate)->required();
  sim_cmd->add_option("--costs", sim.costs, "Cost file (default: 1 cpu second per node)");
  sim_cmd->add_option("--workers", sim.workers, "Simulated workers")->check(CLI::PositiveNumber);
  sim_cmd->add_flag("--schedule", sim.schedule, "Print every assignment");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Check and print the builds of a trace file");
  replay_cmd->add_option("trace", replay.trace)->required();
  replay_cmd->add_option("--class", replay.class_name, "Compare with the tree of this class");
  replay_cmd->add_option("--substate", replay.substate, "Sub-state for --class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*tree_cmd) cmd_tree(common, tree);
    else if (*interface_cmd) cmd_interface(common, interface_class);
    else if (*check_cmd) cmd_check(common, check_class);
    else if (*build_cmd) cmd_build(common, build);
    else if (*iter_cmd) cmd_iterate(common, iter);
    else if (*sim_cmd) cmd_simulate(common, sim);
    else if (*replay_cmd) {
      if (!replay.class_name.empty() && replay.substate.empty())
        throw Error(ErrorCode::InvalidInput, "--class needs --substate");
      cmd_replay(common, replay);
    }
  } catch (const Error& e) {
    report_error(common, std::string(error_code_name(e.code())), e.message());
    return 2;
  } catch (const std::exception& e) {
    report_error(common, "Internal", e.what());
    return 1;
  }
  return 0;
}
