#pragma once

// The Object Manager: provides any object of a production tree in any of its
// sub-states. A request is answered from memory when the sub-state is Ready,
// otherwise from the value store under the sub-state key, otherwise by
// providing every needed attribute first (depth-first, in `needs` order),
// running the build procedure and storing the result.
//
// One ObjectManager exists per object of the tree; children are created on
// demand. A tree of managers is confined to one thread.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dop/model.hpp"
#include "dop/store.hpp"
#include "dop/value.hpp"

namespace dop {

// Values handed to a build procedure: exactly the attributes its `needs`
// list declares.
class BuildInputs {
 public:
  BuildInputs(const ClassSchema& schema, const AttributeDecl& attribute,
              std::vector<std::pair<std::string, AttributeValue>> values,
              std::vector<std::string>& warnings)
      : schema_(schema), attribute_(attribute), values_(std::move(values)), warnings_(warnings) {}

  // Throws BuildFailure when `need` is not declared by the attribute.
  const AttributeValue& operator[](std::string_view need) const;
  const std::vector<std::pair<std::string, AttributeValue>>& all() const { return values_; }
  const ClassSchema& schema() const { return schema_; }
  const AttributeDecl& attribute() const { return attribute_; }
  void warn(std::string message) const;

 private:
  const ClassSchema& schema_;
  const AttributeDecl& attribute_;
  std::vector<std::pair<std::string, AttributeValue>> values_;
  std::vector<std::string>& warnings_;
};

using BuildProcedure = std::function<AttributeValue(const BuildInputs&)>;

class ProcedureTable {
 public:
  void add(std::string class_name, std::string procedure, BuildProcedure body);
  const BuildProcedure* find(std::string_view class_name, std::string_view procedure) const;

 private:
  std::map<std::pair<std::string, std::string>, BuildProcedure, std::less<>> procedures_;
};

enum class Status { NotReady, Building, Ready };
std::string_view status_name(Status status);

enum class TraceEvent { BuildStart, BuildEnd, StoreHit, StoreMiss, Invalidate };
std::string_view trace_event_name(TraceEvent event);

// One line of the trace log: `timestamp TAB event TAB slot_path TAB substate`.
// Timestamps are a logical clock, strictly increasing within one manager tree.
struct TraceRecord {
  std::uint64_t timestamp = 0;
  TraceEvent event = TraceEvent::BuildStart;
  std::string slot_path;  // "." for the root object
  std::string substate;
};

std::string format_trace_line(const TraceRecord& record);
// Throws MalformedTrace.
TraceRecord parse_trace_line(std::string_view line);

struct SubstateStats {
  std::uint64_t builds = 0;
  std::uint64_t store_hits = 0;
  std::uint64_t store_misses = 0;
};

struct IterationResult {
  std::size_t iteration = 0;  // 1-based
  AttributeValue value;
  std::uint64_t rebuilt_node_count = 0;
};

struct ParameterUpdate {
  SlotPath leaf;
  AttributeValue value;
};

struct ManagerOptions {
  bool record_trace = true;
};

class ObjectManager {
 public:
  // Root manager for an object of `class_name`. The registry, procedures and
  // store must outlive the manager tree.
  static std::unique_ptr<ObjectManager> create(const Registry& registry,
                                               const ProcedureTable& procedures, ValueStore& store,
                                               std::string_view class_name,
                                               CalculationConditions conditions = {},
                                               ManagerOptions options = {});
  ~ObjectManager();
  ObjectManager(const ObjectManager&) = delete;
  ObjectManager& operator=(const ObjectManager&) = delete;

  const std::string& class_name() const { return schema_->name; }
  const SlotPath& path() const { return path_; }

  AttributeValue provide(std::string_view substate);

  // Manager of the object at `path` relative to this one, created on demand.
  ObjectManager& child(const SlotPath& path);

  // `leaf` is relative to this manager. Invalidates exactly the sub-states
  // depending on the leaf, on this object and its ancestors.
  void set_parameter(const SlotPath& leaf, AttributeValue value);

  bool is_not_ready(std::string_view substate) const;
  Status status(std::string_view substate) const;
  // Status of `substate` on the object at `object` (relative); NotReady when
  // that object has never been instantiated.
  Status status_at(const SlotPath& object, std::string_view substate) const;

  std::vector<IterationResult> iterate(std::string_view target,
                                       const std::vector<ParameterUpdate>& updates,
                                       std::size_t max_iters);
  // Updates computed per iteration (1-based) by `updates_for`.
  std::vector<IterationResult> iterate(
      std::string_view target,
      const std::function<std::vector<ParameterUpdate>(std::size_t)>& updates_for,
      std::size_t max_iters);

  // Counters of this object's sub-states.
  std::map<std::string, SubstateStats> build_stats() const;
  // Sums over every object of the tree.
  SubstateStats total_stats() const;
  // Per object and sub-state, keyed "slot_path:substate".
  std::map<std::string, SubstateStats> all_stats() const;

  std::uint64_t iteration_counter() const;
  const CalculationConditions& conditions() const;
  const std::vector<TraceRecord>& trace() const;
  const std::vector<std::string>& warnings() const;

 private:
  struct Session;
  struct Slot {
    Status status = Status::NotReady;
    std::optional<AttributeValue> value;
    SubstateStats stats;
  };

  ObjectManager(std::shared_ptr<Session> session, const ClassSchema& schema, SlotPath path,
                ObjectManager* parent);

  ObjectManager& child_at(const AttributeDecl& builder, std::optional<std::size_t> index);
  const ObjectManager* find_child(const SlotStep& step) const;
  const AttributeDecl& attribute(std::string_view substate) const;
  AttributeValue read_parameter(const AttributeDecl& attr) const;
  AttributeValue provide_builder(const AttributeDecl& attr, Slot& slot);
  AttributeValue build_internal(const AttributeDecl& attr, Slot& slot);
  StateKey key_for(const AttributeDecl& attr) const;
  void mark_not_ready(const std::set<std::string>& attributes);
  void collect_stats(std::map<std::string, SubstateStats>& out) const;
  void emit(TraceEvent event, std::string_view substate) const;

  std::shared_ptr<Session> session_;
  const ClassSchema* schema_;
  SlotPath path_;
  ObjectManager* parent_;
  std::map<std::string, Slot, std::less<>> slots_;
  std::map<SlotStep, std::unique_ptr<ObjectManager>> children_;
};

}  // namespace dop
