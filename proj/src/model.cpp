#include "dop/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "dop/error.hpp"

namespace dop {

std::optional<BasicType> basic_type_from_name(std::string_view name) {
  if (name == "BOOLEAN") return BasicType::Boolean;
  if (name == "INTEGER") return BasicType::Integer;
  if (name == "REAL") return BasicType::Real;
  if (name == "STRING") return BasicType::String;
  return std::nullopt;
}

std::string_view basic_type_name(BasicType type) {
  switch (type) {
    case BasicType::Boolean: return "BOOLEAN";
    case BasicType::Integer: return "INTEGER";
    case BasicType::Real: return "REAL";
    case BasicType::String: return "STRING";
  }
  return "?";
}

TypeRef TypeRef::array_of(TypeRef element) {
  TypeRef t;
  t.name = "ARRAY";
  t.args.push_back(std::move(element));
  return t;
}

std::optional<BasicType> TypeRef::basic() const {
  const TypeRef& e = element();
  if (!e.args.empty()) return std::nullopt;
  return basic_type_from_name(e.name);
}

std::string TypeRef::to_string() const {
  if (args.empty()) return name;
  std::string out = name + "[";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    out += args[i].to_string();
  }
  return out + "]";
}

bool operator==(const AttributeDecl& a, const AttributeDecl& b) {
  return a.name == b.name && a.type == b.type && a.kind == b.kind && a.arity == b.arity &&
         a.needs == b.needs && a.uses == b.uses && a.require == b.require &&
         a.ensure == b.ensure && a.feature_clients == b.feature_clients;
}

const AttributeDecl* ClassSchema::find(std::string_view attribute) const {
  for (const auto& a : attributes)
    if (a.name == attribute) return &a;
  return nullptr;
}

const std::map<std::string, std::string, std::less<>>& ClassSchema::context_suffixes() {
  static const std::map<std::string, std::string, std::less<>> table{
      {"build", "_build"}, {"read", "_read"}, {"set", "_set"}};
  return table;
}

bool operator==(const ClassSchema& a, const ClassSchema& b) {
  return a.name == b.name && a.attributes == b.attributes && a.invariant == b.invariant;
}

bool Registry::add(ClassSchema schema) {
  auto name = schema.name;
  return classes_.emplace(std::move(name), std::move(schema)).second;
}

const ClassSchema* Registry::find(std::string_view name) const {
  auto it = classes_.find(name);
  return it == classes_.end() ? nullptr : &it->second;
}

const ClassSchema& Registry::at(std::string_view name) const {
  if (const auto* s = find(name)) return *s;
  throw Error(ErrorCode::UnknownClass, "class '" + std::string(name) + "' is not registered");
}

// --- SlotPath -------------------------------------------------------------

SlotPath SlotPath::parse(std::string_view text) {
  std::vector<SlotStep> steps;
  if (text.empty() || text == ".") return SlotPath{};
  auto bad = [&] {
    return Error(ErrorCode::InvalidInput, "malformed slot path '" + std::string(text) + "'");
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto dot = text.find('.', pos);
    auto part = text.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
    if (part.empty()) throw bad();
    SlotStep step;
    auto bracket = part.find('[');
    std::string_view name = part.substr(0, bracket);
    if (name.empty()) throw bad();
    for (char c : name)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) throw bad();
    step.attribute = std::string(name);
    if (bracket != std::string_view::npos) {
      if (part.back() != ']') throw bad();
      auto digits = part.substr(bracket + 1, part.size() - bracket - 2);
      std::size_t index = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
      if (ec != std::errc{} || ptr != digits.data() + digits.size() || index == 0 || digits.empty())
        throw bad();
      step.index = index;
    }
    steps.push_back(std::move(step));
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return SlotPath(std::move(steps));
}

SlotPath SlotPath::child(std::string attribute, std::optional<std::size_t> index) const {
  auto steps = steps_;
  steps.push_back(SlotStep{std::move(attribute), index});
  return SlotPath(std::move(steps));
}

SlotPath SlotPath::parent() const {
  auto steps = steps_;
  if (!steps.empty()) steps.pop_back();
  return SlotPath(std::move(steps));
}

SlotPath SlotPath::concat(const SlotPath& tail) const {
  auto steps = steps_;
  steps.insert(steps.end(), tail.steps_.begin(), tail.steps_.end());
  return SlotPath(std::move(steps));
}

bool SlotPath::starts_with(const SlotPath& prefix) const {
  return prefix.steps_.size() <= steps_.size() &&
         std::equal(prefix.steps_.begin(), prefix.steps_.end(), steps_.begin());
}

SlotPath SlotPath::relative_to(const SlotPath& prefix) const {
  return SlotPath(std::vector<SlotStep>(steps_.begin() + static_cast<std::ptrdiff_t>(
                                                              std::min(prefix.size(), size())),
                                        steps_.end()));
}

std::string SlotPath::str() const {
  std::string out;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (i) out += '.';
    out += steps_[i].attribute;
    if (steps_[i].index) out += "[" + std::to_string(*steps_[i].index) + "]";
  }
  return out;
}

std::string SlotPath::display() const { return is_root() ? "." : str(); }

// --- ProductionTree -------------------------------------------------------

std::string_view node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Internal: return "internal";
    case NodeKind::Builder: return "builder";
    case NodeKind::Parameter: return "parameter";
  }
  return "?";
}

NodeId ProductionTree::add_node(TreeNode node) {
  NodeId id = nodes_.size();
  if (node.parent) nodes_.at(*node.parent).children.push_back(id);
  nodes_.push_back(std::move(node));
  return id;
}

std::optional<NodeId> ProductionTree::find(const SlotPath& path) const {
  for (NodeId i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].path == path) return i;
  return std::nullopt;
}

std::vector<NodeId> ProductionTree::leaves() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].children.empty()) out.push_back(i);
  return out;
}

std::vector<NodeId> ProductionTree::ancestors(NodeId id) const {
  std::vector<NodeId> out;
  for (auto p = nodes_.at(id).parent; p; p = nodes_[*p].parent) out.push_back(*p);
  return out;
}

std::vector<NodeId> ProductionTree::subtree(NodeId id) const {
  std::vector<NodeId> out;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    out.push_back(n);
    const auto& ch = nodes_[n].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::size_t ProductionTree::depth_of(NodeId id) const { return ancestors(id).size(); }

std::size_t ProductionTree::height() const {
  std::size_t h = 0;
  for (NodeId i = 0; i < nodes_.size(); ++i) h = std::max(h, depth_of(i) + 1);
  return h;
}

std::string ProductionTree::serialize_subtree(NodeId id) const {
  std::ostringstream out;
  out << kFormatHeader << '\n';
  const auto& top = nodes_.at(id);
  std::size_t base_depth = depth_of(id);
  for (NodeId n : subtree(id)) {
    const auto& node = nodes_[n];
    out << depth_of(n) - base_depth << '\t' << node.path.relative_to(top.path).display() << '\t'
        << node.class_name << '\t' << node.substate << '\t' << node_kind_name(node.kind) << '\n';
  }
  return out.str();
}

std::string ProductionTree::serialize() const {
  if (nodes_.empty()) return std::string(kFormatHeader) + "\n";
  return serialize_subtree(root());
}

// --- derivation -----------------------------------------------------------

namespace {

const AttributeDecl& require_attribute(const ClassSchema& schema, std::string_view name) {
  if (const auto* a = schema.find(name)) return *a;
  throw Error(ErrorCode::UnknownSubState,
              "class '" + schema.name + "' has no sub-state '" + std::string(name) + "'");
}

NodeKind kind_of(const AttributeDecl& a) {
  if (a.is_internal()) return NodeKind::Internal;
  if (a.is_builder()) return NodeKind::Builder;
  return NodeKind::Parameter;
}

void check_need_substate(const ClassSchema& schema, const AttributeDecl& owner, const Need& need,
                         const AttributeDecl& target) {
  if (!need.substate) return;
  if (!target.is_builder())
    throw Error(ErrorCode::UnresolvedNeed, schema.name + "." + owner.name + " needs '" +
                                               need.attribute + "' in sub-state '" +
                                               *need.substate + "' but it is not a builder");
  if (*need.substate != target.required_substate())
    throw Error(ErrorCode::UnresolvedNeed,
                schema.name + "." + owner.name + " needs '" + need.attribute + "' in sub-state '" +
                    *need.substate + "' but it is declared as builder (\"" +
                    target.required_substate() + "\")");
}

class Expander {
 public:
  explicit Expander(const Registry& registry) : registry_(registry) {}

  ProductionTree run(std::string_view class_name, std::string_view substate, bool ground) {
    const ClassSchema& schema = registry_.at(class_name);
    const AttributeDecl& target = require_attribute(schema, substate);
    if (target.is_parameter()) {
      tree_.add_node(TreeNode{SlotPath{}.child(target.name), target.type.to_string(),
                              target.name, NodeKind::Parameter, std::nullopt, {}});
      return std::move(tree_);
    }
    NodeId root = tree_.add_node(
        TreeNode{SlotPath{}, schema.name, std::string(substate), kind_of(target), std::nullopt, {}});
    std::vector<const AttributeDecl*> members;
    if (ground) {
      for (const auto& a : schema.attributes)
        if (!a.is_internal()) members.push_back(&a);
      // The target's own closure must still be well formed.
      attribute_closure(schema, substate);
    } else {
      stack_.emplace_back(schema.name, std::string(substate));
      members = attribute_closure(schema, substate);
    }
    expand_members(root, members);
    return std::move(tree_);
  }

 private:
  void expand_members(NodeId owner, const std::vector<const AttributeDecl*>& members) {
    for (const AttributeDecl* attr : members) {
      SlotPath base = tree_.node(owner).path;
      if (attr->is_parameter()) {
        tree_.add_node(TreeNode{base.child(attr->name), attr->type.to_string(), attr->name,
                                NodeKind::Parameter, owner, {}});
        continue;
      }
      const ClassSchema& child = registry_.at(attr->type.element().name);
      const std::string& substate = attr->required_substate();
      require_attribute(child, substate);
      if (attr->type.is_collection()) {
        if (!attr->arity)
          throw Error(ErrorCode::UnknownArity, "builder collection '" + tree_.node(owner).class_name +
                                                   "." + attr->name + "' declares no arity");
        for (std::size_t i = 1; i <= *attr->arity; ++i)
          expand_object(owner, base.child(attr->name, i), child, substate);
      } else {
        expand_object(owner, base.child(attr->name), child, substate);
      }
    }
  }

  void expand_object(NodeId parent, SlotPath path, const ClassSchema& schema,
                     const std::string& substate) {
    auto key = std::make_pair(schema.name, substate);
    auto hit = std::find(stack_.begin(), stack_.end(), key);
    if (hit != stack_.end()) {
      std::vector<std::string> cycle;
      for (auto it = hit; it != stack_.end(); ++it) cycle.push_back(it->first + "." + it->second);
      cycle.push_back(key.first + "." + key.second);
      std::string text;
      for (const auto& c : cycle) text += (text.empty() ? "" : " -> ") + c;
      throw Error(ErrorCode::CycleDetected, "production cycle " + text, cycle);
    }
    stack_.push_back(key);
    NodeId id = tree_.add_node(
        TreeNode{std::move(path), schema.name, substate, NodeKind::Builder, parent, {}});
    expand_members(id, attribute_closure(schema, substate));
    stack_.pop_back();
  }

  const Registry& registry_;
  ProductionTree tree_;
  std::vector<std::pair<std::string, std::string>> stack_;
};

}  // namespace

std::vector<const AttributeDecl*> attribute_closure(const ClassSchema& schema,
                                                    std::string_view attribute) {
  const AttributeDecl& start = require_attribute(schema, attribute);
  std::set<std::string> reached;
  std::vector<std::string> on_stack;
  std::set<std::string> done;

  auto visit = [&](auto&& self, const AttributeDecl& attr) -> void {
    if (!attr.is_internal()) {
      reached.insert(attr.name);
      return;
    }
    if (done.count(attr.name)) return;
    if (std::find(on_stack.begin(), on_stack.end(), attr.name) != on_stack.end()) {
      std::vector<std::string> cycle;
      for (auto it = std::find(on_stack.begin(), on_stack.end(), attr.name); it != on_stack.end();
           ++it)
        cycle.push_back(schema.name + "." + *it);
      cycle.push_back(schema.name + "." + attr.name);
      throw Error(ErrorCode::CycleDetected,
                  "internal attributes of '" + schema.name + "' need each other", cycle);
    }
    on_stack.push_back(attr.name);
    for (const Need& need : attr.needs) {
      const AttributeDecl* target = schema.find(need.attribute);
      if (!target)
        throw Error(ErrorCode::UnresolvedNeed, schema.name + "." + attr.name + " needs unknown '" +
                                                   need.attribute + "'");
      check_need_substate(schema, attr, need, *target);
      self(self, *target);
    }
    on_stack.pop_back();
    done.insert(attr.name);
  };
  visit(visit, start);

  std::vector<const AttributeDecl*> out;
  for (const auto& a : schema.attributes)
    if (reached.count(a.name)) out.push_back(&a);
  return out;
}

std::set<std::string> dependent_attributes(const ClassSchema& schema,
                                           const std::set<std::string>& changed) {
  std::set<std::string> out = changed;
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& a : schema.attributes) {
      if (!a.is_internal() || out.count(a.name)) continue;
      for (const Need& n : a.needs) {
        if (out.count(n.attribute)) {
          out.insert(a.name);
          grew = true;
          break;
        }
      }
    }
  }
  return out;
}

ProductionTree derive_production_tree(const Registry& registry, std::string_view root_class,
                                      std::string_view target_substate) {
  return Expander(registry).run(root_class, target_substate, /*ground=*/true);
}

ProductionTree derive_substate_tree(const Registry& registry, std::string_view class_name,
                                    std::string_view substate) {
  return Expander(registry).run(class_name, substate, /*ground=*/false);
}

std::vector<SlotPath> ground_state_leaves(const ProductionTree& tree) {
  std::vector<SlotPath> out;
  for (NodeId id : tree.leaves())
    if (tree.node(id).kind == NodeKind::Parameter) out.push_back(tree.node(id).path);
  return out;
}

WellBuiltReport check_well_built(const Registry& registry, std::string_view class_name) {
  const ClassSchema& schema = registry.at(class_name);
  WellBuiltReport report;
  std::vector<std::string> builders;
  std::set<std::string> all;
  for (const auto& a : schema.attributes)
    if (!a.is_internal()) {
      builders.push_back(a.name);
      all.insert(a.name);
    }

  std::map<std::string, std::set<std::string>> needed_by;
  for (const auto& a : schema.attributes) {
    if (!a.is_internal()) continue;
    auto& leaves = report.internal_leaves[a.name];
    for (const auto* leaf : attribute_closure(schema, a.name)) {
      leaves.insert(leaf->name);
      needed_by[leaf->name].insert(a.name);
    }
    if (leaves != all) report.well_built = false;
  }

  std::vector<std::set<std::string>> signatures;
  for (const auto& b : builders) {
    const auto& sig = needed_by[b];
    auto it = std::find(signatures.begin(), signatures.end(), sig);
    if (it == signatures.end()) {
      signatures.push_back(sig);
      report.leaf_clusters.push_back({b});
    } else {
      report.leaf_clusters[static_cast<std::size_t>(it - signatures.begin())].push_back(b);
    }
  }
  return report;
}

ProductionTree internal_tree(const Registry& registry, std::string_view class_name,
                             std::string_view attribute) {
  const ClassSchema& schema = registry.at(class_name);
  const AttributeDecl& root = require_attribute(schema, attribute);
  if (!root.is_internal())
    throw Error(ErrorCode::NotInternal,
                schema.name + "." + std::string(attribute) + " is not an internal attribute");

  ProductionTree tree;
  std::vector<std::string> on_stack;
  auto expand = [&](auto&& self, const AttributeDecl& attr, std::optional<NodeId> parent,
                    const SlotPath& path) -> void {
    NodeId id = tree.add_node(
        TreeNode{path, schema.name, attr.name, NodeKind::Internal, parent, {}});
    if (std::find(on_stack.begin(), on_stack.end(), attr.name) != on_stack.end())
      throw Error(ErrorCode::CycleDetected,
                  "internal attributes of '" + schema.name + "' need each other");
    on_stack.push_back(attr.name);
    for (const Need& need : attr.needs) {
      const AttributeDecl* target = schema.find(need.attribute);
      if (!target)
        throw Error(ErrorCode::UnresolvedNeed,
                    schema.name + "." + attr.name + " needs unknown '" + need.attribute + "'");
      check_need_substate(schema, attr, need, *target);
      if (target->is_internal()) {
        self(self, *target, id, path.child(target->name));
      } else if (target->is_parameter()) {
        tree.add_node(TreeNode{path.child(target->name), target->type.to_string(), target->name,
                               NodeKind::Parameter, id, {}});
      } else {
        const std::string& cls = target->type.element().name;
        if (target->type.is_collection() && target->arity) {
          for (std::size_t i = 1; i <= *target->arity; ++i)
            tree.add_node(TreeNode{path.child(target->name, i), cls, target->required_substate(),
                                   NodeKind::Builder, id, {}});
        } else {
          tree.add_node(TreeNode{path.child(target->name), cls, target->required_substate(),
                                 NodeKind::Builder, id, {}});
        }
      }
    }
    on_stack.pop_back();
  };
  expand(expand, root, std::nullopt, SlotPath{}.child(root.name));
  return tree;
}

}  // namespace dop
