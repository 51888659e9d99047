#include "dop/manager.hpp"

#include <charconv>

#include "dop/error.hpp"

namespace dop {

// --- BuildInputs / ProcedureTable ----------------------------------------

const AttributeValue& BuildInputs::operator[](std::string_view need) const {
  for (const auto& [name, value] : values_)
    if (name == need) return value;
  throw Error(ErrorCode::BuildFailure, schema_.name + "." + attribute_.name + " reads '" +
                                           std::string(need) + "' without declaring it in needs");
}

void BuildInputs::warn(std::string message) const {
  warnings_.push_back(schema_.name + "." + attribute_.name + ": " + std::move(message));
}

void ProcedureTable::add(std::string class_name, std::string procedure, BuildProcedure body) {
  procedures_[{std::move(class_name), std::move(procedure)}] = std::move(body);
}

const BuildProcedure* ProcedureTable::find(std::string_view class_name,
                                           std::string_view procedure) const {
  auto it = procedures_.find(std::make_pair(std::string(class_name), std::string(procedure)));
  return it == procedures_.end() ? nullptr : &it->second;
}

// --- trace ----------------------------------------------------------------

std::string_view status_name(Status status) {
  switch (status) {
    case Status::NotReady: return "NotReady";
    case Status::Building: return "Building";
    case Status::Ready: return "Ready";
  }
  return "?";
}

std::string_view trace_event_name(TraceEvent event) {
  switch (event) {
    case TraceEvent::BuildStart: return "build_start";
    case TraceEvent::BuildEnd: return "build_end";
    case TraceEvent::StoreHit: return "store_hit";
    case TraceEvent::StoreMiss: return "store_miss";
    case TraceEvent::Invalidate: return "invalidate";
  }
  return "?";
}

std::string format_trace_line(const TraceRecord& r) {
  return std::to_string(r.timestamp) + '\t' + std::string(trace_event_name(r.event)) + '\t' +
         r.slot_path + '\t' + r.substate;
}

TraceRecord parse_trace_line(std::string_view line) {
  auto bad = [&](const std::string& why) {
    return Error(ErrorCode::MalformedTrace, why + ": '" + std::string(line) + "'");
  };
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto tab = line.find('\t', pos);
    fields.push_back(line.substr(pos, tab == std::string_view::npos ? std::string_view::npos : tab - pos));
    if (tab == std::string_view::npos) break;
    pos = tab + 1;
  }
  if (fields.size() != 4) throw bad("expected 4 tab-separated fields");
  TraceRecord r;
  auto ts = fields[0];
  auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), r.timestamp);
  if (ec != std::errc{} || ptr != ts.data() + ts.size()) throw bad("bad timestamp");
  static constexpr TraceEvent kEvents[] = {TraceEvent::BuildStart, TraceEvent::BuildEnd,
                                           TraceEvent::StoreHit, TraceEvent::StoreMiss,
                                           TraceEvent::Invalidate};
  bool known = false;
  for (auto e : kEvents)
    if (trace_event_name(e) == fields[1]) {
      r.event = e;
      known = true;
    }
  if (!known) throw bad("unknown event");
  if (fields[2].empty() || fields[3].empty()) throw bad("empty slot path or sub-state");
  r.slot_path = std::string(fields[2]);
  r.substate = std::string(fields[3]);
  return r;
}

// --- session --------------------------------------------------------------

struct ObjectManager::Session {
  Session(const Registry& r, const ProcedureTable& p, ValueStore& s, CalculationConditions c,
          ManagerOptions o)
      : registry(r), procedures(p), store(s), conditions(std::move(c)), options(o) {}

  const ProductionTree& substate_tree(const std::string& class_name, const std::string& substate) {
    auto key = std::make_pair(class_name, substate);
    auto it = trees.find(key);
    if (it == trees.end())
      it = trees.emplace(key, derive_substate_tree(registry, class_name, substate)).first;
    return it->second;
  }

  // Parameter leaves of the root's ground state with their declared types.
  const std::map<SlotPath, std::string>& ground_leaves(const ClassSchema& root_schema) {
    if (leaf_types) return *leaf_types;
    std::map<SlotPath, std::string> out;
    for (const auto& attr : root_schema.attributes) {
      if (attr.is_parameter()) {
        out[SlotPath{}.child(attr.name)] = attr.type.to_string();
      } else if (attr.is_builder()) {
        const ClassSchema& child = registry.at(attr.type.element().name);
        const auto& tree = substate_tree(child.name, attr.required_substate());
        std::vector<std::optional<std::size_t>> indices;
        if (attr.type.is_collection()) {
          if (!attr.arity)
            throw Error(ErrorCode::UnknownArity,
                        root_schema.name + "." + attr.name + " declares no arity");
          for (std::size_t i = 1; i <= *attr.arity; ++i) indices.emplace_back(i);
        } else {
          indices.emplace_back(std::nullopt);
        }
        for (auto index : indices) {
          SlotPath base = SlotPath{}.child(attr.name, index);
          for (NodeId id : tree.leaves())
            if (tree.node(id).kind == NodeKind::Parameter)
              out[base.concat(tree.node(id).path)] = tree.node(id).class_name;
        }
      }
    }
    leaf_types = std::move(out);
    return *leaf_types;
  }

  const Registry& registry;
  const ProcedureTable& procedures;
  ValueStore& store;
  CalculationConditions conditions;
  ManagerOptions options;
  std::vector<TraceRecord> trace;
  std::uint64_t clock = 0;
  std::vector<std::string> warnings;
  std::uint64_t iteration_counter = 0;
  std::uint64_t total_builds = 0;
  std::map<std::pair<std::string, std::string>, ProductionTree> trees;
  std::optional<std::map<SlotPath, std::string>> leaf_types;
  ObjectManager* root = nullptr;
};

// --- ObjectManager --------------------------------------------------------

std::unique_ptr<ObjectManager> ObjectManager::create(const Registry& registry,
                                                     const ProcedureTable& procedures,
                                                     ValueStore& store, std::string_view class_name,
                                                     CalculationConditions conditions,
                                                     ManagerOptions options) {
  const ClassSchema& schema = registry.at(class_name);
  auto session =
      std::make_shared<Session>(registry, procedures, store, std::move(conditions), options);
  std::unique_ptr<ObjectManager> root(new ObjectManager(session, schema, SlotPath{}, nullptr));
  session->root = root.get();
  return root;
}

ObjectManager::ObjectManager(std::shared_ptr<Session> session, const ClassSchema& schema,
                             SlotPath path, ObjectManager* parent)
    : session_(std::move(session)), schema_(&schema), path_(std::move(path)), parent_(parent) {}

ObjectManager::~ObjectManager() = default;

const AttributeDecl& ObjectManager::attribute(std::string_view substate) const {
  if (const auto* a = schema_->find(substate)) return *a;
  throw Error(ErrorCode::UnknownSubState,
              "class '" + schema_->name + "' has no sub-state '" + std::string(substate) + "'");
}

void ObjectManager::emit(TraceEvent event, std::string_view substate) const {
  if (!session_->options.record_trace) return;
  session_->trace.push_back(
      TraceRecord{++session_->clock, event, path_.display(), std::string(substate)});
}

AttributeValue ObjectManager::read_parameter(const AttributeDecl& attr) const {
  SlotPath leaf = path_.child(attr.name);
  if (const AttributeValue* v = session_->conditions.find(leaf)) return *v;
  throw Error(ErrorCode::MissingParameter, "no value for " + leaf.str(), {leaf.str()});
}

AttributeValue ObjectManager::provide(std::string_view substate) {
  const AttributeDecl& attr = attribute(substate);
  if (attr.is_parameter()) return read_parameter(attr);
  Slot& slot = slots_[attr.name];
  if (slot.status == Status::Ready) return *slot.value;
  if (slot.status == Status::Building) {
    std::string where = path_.display() + " " + schema_->name + "." + attr.name;
    throw Error(ErrorCode::CycleDetected, "re-entered " + where + " while it is being built",
                {schema_->name + "." + attr.name});
  }
  return attr.is_builder() ? provide_builder(attr, slot) : build_internal(attr, slot);
}

ObjectManager& ObjectManager::child_at(const AttributeDecl& builder,
                                       std::optional<std::size_t> index) {
  SlotStep step{builder.name, index};
  auto it = children_.find(step);
  if (it == children_.end()) {
    const ClassSchema& cls = session_->registry.at(builder.type.element().name);
    std::unique_ptr<ObjectManager> m(
        new ObjectManager(session_, cls, path_.child(builder.name, index), this));
    it = children_.emplace(step, std::move(m)).first;
  }
  return *it->second;
}

const ObjectManager* ObjectManager::find_child(const SlotStep& step) const {
  auto it = children_.find(step);
  return it == children_.end() ? nullptr : it->second.get();
}

ObjectManager& ObjectManager::child(const SlotPath& path) {
  ObjectManager* m = this;
  for (const auto& step : path.steps()) {
    const AttributeDecl* attr = m->schema_->find(step.attribute);
    if (!attr || !attr->is_builder())
      throw Error(ErrorCode::UnknownLeaf,
                  "'" + path.str() + "' does not name a builder object of " + schema_->name);
    bool collection = attr->type.is_collection();
    if (collection != step.index.has_value() ||
        (collection && attr->arity && *step.index > *attr->arity))
      throw Error(ErrorCode::UnknownLeaf, "bad index in '" + path.str() + "'");
    m = &m->child_at(*attr, step.index);
  }
  return *m;
}

AttributeValue ObjectManager::provide_builder(const AttributeDecl& attr, Slot& slot) {
  slot.status = Status::Building;
  try {
    AttributeValue value;
    if (attr.type.is_collection()) {
      if (!attr.arity)
        throw Error(ErrorCode::UnknownArity, schema_->name + "." + attr.name + " declares no arity");
      ValueList items;
      for (std::size_t i = 1; i <= *attr.arity; ++i)
        items.push_back(child_at(attr, i).provide(attr.required_substate()));
      value = AttributeValue(std::move(items));
    } else {
      value = child_at(attr, std::nullopt).provide(attr.required_substate());
    }
    slot.value = value;
    slot.status = Status::Ready;
    return value;
  } catch (...) {
    slot.status = Status::NotReady;
    throw;
  }
}

StateKey ObjectManager::key_for(const AttributeDecl& attr) const {
  const ProductionTree& tree = session_->substate_tree(schema_->name, attr.name);
  CalculationConditions local;
  std::vector<std::string> missing;
  for (NodeId id : tree.leaves()) {
    const TreeNode& leaf = tree.node(id);
    if (leaf.kind != NodeKind::Parameter) continue;
    SlotPath absolute = path_.concat(leaf.path);
    if (const AttributeValue* v = session_->conditions.find(absolute))
      local.set(leaf.path, *v);
    else
      missing.push_back(absolute.str());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::MissingParameter, "no value for " + list, missing);
  }
  return derive_key(tree, tree.root(), local, session_->store.schema_version());
}

AttributeValue ObjectManager::build_internal(const AttributeDecl& attr, Slot& slot) {
  StateKey key = key_for(attr);
  if (auto cached = session_->store.get(key)) {
    slot.value = decode_value(*cached);
    slot.status = Status::Ready;
    ++slot.stats.store_hits;
    emit(TraceEvent::StoreHit, attr.name);
    return *slot.value;
  }
  ++slot.stats.store_misses;
  emit(TraceEvent::StoreMiss, attr.name);

  slot.status = Status::Building;
  emit(TraceEvent::BuildStart, attr.name);
  try {
    std::vector<std::pair<std::string, AttributeValue>> inputs;
    for (const Need& need : attr.needs) inputs.emplace_back(need.attribute, provide(need.attribute));

    ++slot.stats.builds;
    ++session_->total_builds;
    const std::string where = path_.display() + " " + schema_->name + "." + attr.name;
    const BuildProcedure* body = session_->procedures.find(schema_->name, attr.procedure());
    if (!body)
      throw Error(ErrorCode::BuildFailure,
                  where + ": no build procedure '" + attr.procedure() + "' is registered");
    AttributeValue value;
    try {
      value = (*body)(BuildInputs(*schema_, attr, std::move(inputs), session_->warnings));
    } catch (const Error& e) {
      throw Error(ErrorCode::BuildFailure, where + ": " + e.message(), {std::string(error_code_name(e.code()))});
    } catch (const std::exception& e) {
      throw Error(ErrorCode::BuildFailure, where + ": " + e.what());
    }
    session_->store.put(key, encode_value(value));
    slot.value = std::move(value);
    slot.status = Status::Ready;
    emit(TraceEvent::BuildEnd, attr.name);
    return *slot.value;
  } catch (...) {
    slot.status = Status::NotReady;
    slot.value.reset();
    emit(TraceEvent::BuildEnd, attr.name);
    throw;
  }
}

void ObjectManager::mark_not_ready(const std::set<std::string>& attributes) {
  for (const auto& name : attributes) {
    auto it = slots_.find(name);
    if (it == slots_.end() || it->second.status != Status::Ready) continue;
    it->second.status = Status::NotReady;
    it->second.value.reset();
    emit(TraceEvent::Invalidate, name);
  }
}

void ObjectManager::set_parameter(const SlotPath& leaf, AttributeValue value) {
  if (parent_) {
    session_->root->set_parameter(path_.concat(leaf), std::move(value));
    return;
  }
  const auto& leaves = session_->ground_leaves(*schema_);
  auto it = leaves.find(leaf);
  if (it == leaves.end())
    throw Error(ErrorCode::UnknownLeaf, "'" + leaf.display() + "' is not a parameter leaf of " +
                                            schema_->name);
  AttributeValue coerced;
  if (!coerce_to_type(value, it->second, coerced))
    throw Error(ErrorCode::TypeMismatch, "'" + leaf.str() + "' is " + it->second + ", got " +
                                             std::string(value_kind_name(value.kind())));
  session_->conditions.set(leaf, std::move(coerced));
  ++session_->iteration_counter;

  // Walk the owner chain, then compute bottom-up which attributes depend on
  // the leaf at each level.
  const auto& steps = leaf.steps();
  std::vector<const ClassSchema*> classes{schema_};
  for (std::size_t j = 0; j + 1 < steps.size(); ++j) {
    const AttributeDecl* b = classes.back()->find(steps[j].attribute);
    classes.push_back(&session_->registry.at(b->type.element().name));
  }
  std::vector<std::set<std::string>> affected(classes.size());
  std::size_t owner = classes.size() - 1;
  affected[owner] = dependent_attributes(*classes[owner], {steps.back().attribute});
  for (std::size_t j = owner; j-- > 0;) {
    const AttributeDecl* b = classes[j]->find(steps[j].attribute);
    if (!affected[j + 1].count(b->required_substate())) break;
    affected[j] = dependent_attributes(*classes[j], {b->name});
  }

  ObjectManager* m = this;
  for (std::size_t j = 0; j < classes.size() && m; ++j) {
    m->mark_not_ready(affected[j]);
    if (j < owner) {
      auto c = m->children_.find(steps[j]);
      m = c == m->children_.end() ? nullptr : c->second.get();
    }
  }
}

Status ObjectManager::status(std::string_view substate) const {
  const AttributeDecl& attr = attribute(substate);
  if (attr.is_parameter())
    return session_->conditions.find(path_.child(attr.name)) ? Status::Ready : Status::NotReady;
  auto it = slots_.find(attr.name);
  return it == slots_.end() ? Status::NotReady : it->second.status;
}

bool ObjectManager::is_not_ready(std::string_view substate) const {
  return status(substate) != Status::Ready;
}

Status ObjectManager::status_at(const SlotPath& object, std::string_view substate) const {
  const ObjectManager* m = this;
  for (const auto& step : object.steps()) {
    m = m->find_child(step);
    if (!m) return Status::NotReady;
  }
  return m->status(substate);
}

std::vector<IterationResult> ObjectManager::iterate(std::string_view target,
                                                    const std::vector<ParameterUpdate>& updates,
                                                    std::size_t max_iters) {
  return iterate(target, [&](std::size_t) { return updates; }, max_iters);
}

std::vector<IterationResult> ObjectManager::iterate(
    std::string_view target,
    const std::function<std::vector<ParameterUpdate>(std::size_t)>& updates_for,
    std::size_t max_iters) {
  if (max_iters < 1) throw Error(ErrorCode::InvalidInput, "iterate needs max_iters >= 1");
  std::vector<IterationResult> results;
  for (std::size_t i = 1; i <= max_iters; ++i) {
    try {
      for (auto& u : updates_for(i)) set_parameter(u.leaf, std::move(u.value));
      auto before = session_->total_builds;
      AttributeValue value = provide(target);
      results.push_back(IterationResult{i, std::move(value), session_->total_builds - before});
    } catch (const Error& e) {
      throw Error(e.code(), "iteration " + std::to_string(i) + ": " + e.message(), e.details());
    }
  }
  return results;
}

std::map<std::string, SubstateStats> ObjectManager::build_stats() const {
  std::map<std::string, SubstateStats> out;
  for (const auto& [name, slot] : slots_) out[name] = slot.stats;
  return out;
}

void ObjectManager::collect_stats(std::map<std::string, SubstateStats>& out) const {
  for (const auto& [name, slot] : slots_) out[path_.display() + ":" + name] = slot.stats;
  for (const auto& [step, child] : children_) child->collect_stats(out);
}

std::map<std::string, SubstateStats> ObjectManager::all_stats() const {
  std::map<std::string, SubstateStats> out;
  collect_stats(out);
  return out;
}

SubstateStats ObjectManager::total_stats() const {
  SubstateStats total;
  for (const auto& [key, s] : all_stats()) {
    total.builds += s.builds;
    total.store_hits += s.store_hits;
    total.store_misses += s.store_misses;
  }
  return total;
}

std::uint64_t ObjectManager::iteration_counter() const { return session_->iteration_counter; }
const CalculationConditions& ObjectManager::conditions() const { return session_->conditions; }
const std::vector<TraceRecord>& ObjectManager::trace() const { return session_->trace; }
const std::vector<std::string>& ObjectManager::warnings() const { return session_->warnings; }

}  // namespace dop
