#pragma once

// Simulated distribution of the builds of a production tree over workers,
// and cost ("non-value calculation") reports over the same tree.
//
// Cost file, one entry per line:
//   TRIANGLE.centroid  2.5  1048576  0
//   REAL.x             0    8        8
//   default            1    0        0
// Fields are cpu seconds, memory bytes, disk bytes; `#` starts a comment.

#include <filesystem>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dop/manager.hpp"
#include "dop/model.hpp"

namespace dop {

struct Cost {
  double cpu_seconds = 0;
  double memory_bytes = 0;
  double disk_bytes = 0;
  friend bool operator==(const Cost&, const Cost&) = default;
};

class CostModel {
 public:
  CostModel() = default;
  explicit CostModel(Cost fallback) : default_(fallback) {}

  // Throws InvalidInput for negative or non-finite estimates.
  void set(std::string class_substate, Cost cost);
  void set_default(Cost cost);
  const Cost& default_cost() const { return default_; }
  const std::map<std::string, Cost, std::less<>>& entries() const { return entries_; }

  // Entry "CLASS.substate" of the node, or the default.
  const Cost& cost_of(const TreeNode& node) const;

 private:
  std::map<std::string, Cost, std::less<>> entries_;
  Cost default_;
};

// Throws InvalidInput with the line number.
CostModel parse_cost_text(std::string_view text, std::string_view origin = "<input>");
CostModel read_cost_file(const std::filesystem::path& path);

struct WorkflowReport {
  std::vector<Cost> node_costs;  // indexed by NodeId
  Cost total;
  // Largest cpu sum along a root-to-leaf chain.
  double critical_path_cpu = 0;
};

WorkflowReport simulate_workflow(const ProductionTree& tree, const CostModel& model);

struct Assignment {
  NodeId node = 0;
  std::size_t worker = 0;
  double start = 0;
  double end = 0;
};

struct Schedule {
  std::size_t workers = 0;
  std::vector<Assignment> assignments;  // by start time, then worker
  double makespan = 0;
};

// List scheduling: a node becomes ready when all its children have finished;
// ready nodes are taken longest remaining chain to the root first, ties
// broken by slot path. The returned schedule is the best list schedule using
// at most `workers` workers, so the makespan never grows with more workers.
// Throws InvalidInput when workers is 0.
Schedule schedule_builds(const ProductionTree& tree, const CostModel& model, std::size_t workers);

// List schedule on exactly `workers` workers.
Schedule list_schedule(const ProductionTree& tree, const CostModel& model, std::size_t workers);

// Precedence, worker overlap and duration violations; empty when valid.
std::vector<std::string> validate_schedule(const ProductionTree& tree, const CostModel& model,
                                           const Schedule& schedule);

// A build interval reconstructed from a trace.
struct ObservedBuild {
  std::string slot_path;
  std::string substate;
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  std::size_t depth = 0;                // nesting depth, 0 for outermost builds
  std::optional<std::size_t> enclosing;  // index of the enclosing build
};

struct ObservedSchedule {
  std::vector<ObservedBuild> builds;  // in start order
  std::size_t store_hits = 0;
  std::size_t store_misses = 0;
  std::size_t invalidations = 0;
};

// Checks that timestamps increase and build_start/build_end pairs nest
// properly. Throws MalformedTrace.
ObservedSchedule replay_trace(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> parse_trace_text(std::string_view text);

struct ReplayComparison {
  // Objects of the tree whose requested sub-state is internal.
  std::vector<std::string> predicted;
  // Predicted objects neither built nor found in the store.
  std::vector<std::string> missing;
  // Objects built in the trace that the tree does not contain.
  std::vector<std::string> unexpected;
};

ReplayComparison compare_replay(const ProductionTree& tree, const Registry& registry,
                                const std::vector<TraceRecord>& trace,
                                const ObservedSchedule& observed);

}  // namespace dop
