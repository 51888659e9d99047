#pragma once

// Schema and production-tree data model.
//
// A class declares three kinds of attributes: internal ones (computed from
// other attributes of the same object by a named build procedure), builder
// ones (objects of another class provided in a named sub-state) and
// parameters (basic-typed leaves supplied by the user). The registry of
// classes induces the production tree of any object.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dop {

struct SourceSpan {
  std::string origin;
  std::uint32_t line = 0;    // 1-based; 0 when unknown
  std::uint32_t column = 0;  // 1-based
  std::size_t offset = 0;
  std::size_t length = 0;
};

enum class BasicType { Boolean, Integer, Real, String };

std::optional<BasicType> basic_type_from_name(std::string_view name);
std::string_view basic_type_name(BasicType type);

// `POINT`, `REAL`, `ARRAY[POINT]`. Only ARRAY is a collection.
struct TypeRef {
  std::string name;
  std::vector<TypeRef> args;

  static TypeRef simple(std::string name) { return TypeRef{std::move(name), {}}; }
  static TypeRef array_of(TypeRef element);

  bool is_collection() const { return name == "ARRAY" && args.size() == 1; }
  // The element type for collections, the type itself otherwise.
  const TypeRef& element() const { return is_collection() ? args.front() : *this; }
  // Basic type of the value or of the collection elements, if any.
  std::optional<BasicType> basic() const;
  std::string to_string() const;

  friend bool operator==(const TypeRef&, const TypeRef&) = default;
};

struct InternalKind {
  std::string procedure;
  friend bool operator==(const InternalKind&, const InternalKind&) = default;
};
struct BuilderKind {
  std::string substate;
  friend bool operator==(const BuilderKind&, const BuilderKind&) = default;
};
struct ParameterKind {
  friend bool operator==(const ParameterKind&, const ParameterKind&) = default;
};

using AttributeKind = std::variant<InternalKind, BuilderKind, ParameterKind>;

struct Need {
  std::string attribute;
  std::optional<std::string> substate;
  friend bool operator==(const Need&, const Need&) = default;
};

struct UsesEntry {
  std::string context;
  std::string procedure;
  friend bool operator==(const UsesEntry&, const UsesEntry&) = default;
};

struct AttributeDecl {
  std::string name;
  TypeRef type;
  AttributeKind kind;
  std::optional<std::size_t> arity;  // fixed cardinality of builder collections
  std::vector<Need> needs;
  std::vector<UsesEntry> uses;
  std::optional<std::string> require;  // opaque assertion text
  std::optional<std::string> ensure;
  std::string feature_clients;  // "ANY", "NONE", ... or "" for a bare `feature`
  SourceSpan span;              // not part of structural equality

  bool is_internal() const { return std::holds_alternative<InternalKind>(kind); }
  bool is_builder() const { return std::holds_alternative<BuilderKind>(kind); }
  bool is_parameter() const { return std::holds_alternative<ParameterKind>(kind); }
  bool exported() const { return feature_clients != "NONE"; }
  const std::string& procedure() const { return std::get<InternalKind>(kind).procedure; }
  const std::string& required_substate() const { return std::get<BuilderKind>(kind).substate; }

  friend bool operator==(const AttributeDecl& a, const AttributeDecl& b);
};

struct ClassSchema {
  std::string name;
  std::vector<AttributeDecl> attributes;
  std::optional<std::string> invariant;
  SourceSpan span;

  const AttributeDecl* find(std::string_view attribute) const;

  // Build procedure suffix for each `uses` context: build, read, set.
  static const std::map<std::string, std::string, std::less<>>& context_suffixes();

  friend bool operator==(const ClassSchema& a, const ClassSchema& b);
};

class Registry {
 public:
  // Returns false when a class with that name is already registered.
  bool add(ClassSchema schema);
  const ClassSchema* find(std::string_view name) const;
  const ClassSchema& at(std::string_view name) const;  // throws UnknownClass
  std::size_t size() const { return classes_.size(); }
  const std::map<std::string, ClassSchema, std::less<>>& classes() const { return classes_; }

 private:
  std::map<std::string, ClassSchema, std::less<>> classes_;
};

// One step of a slot path: an attribute name, with a 1-based index when the
// attribute is a collection (`vertices[2]`).
struct SlotStep {
  std::string attribute;
  std::optional<std::size_t> index;
  friend auto operator<=>(const SlotStep&, const SlotStep&) = default;
};

class SlotPath {
 public:
  SlotPath() = default;
  explicit SlotPath(std::vector<SlotStep> steps) : steps_(std::move(steps)) {}

  // Accepts "", "." (root) and dotted forms such as `base.vertices[2].x`.
  static SlotPath parse(std::string_view text);

  bool is_root() const { return steps_.empty(); }
  const std::vector<SlotStep>& steps() const { return steps_; }
  std::size_t size() const { return steps_.size(); }
  const SlotStep& back() const { return steps_.back(); }

  SlotPath child(std::string attribute, std::optional<std::size_t> index = {}) const;
  SlotPath parent() const;
  SlotPath concat(const SlotPath& tail) const;
  bool starts_with(const SlotPath& prefix) const;
  // Path with the first `prefix.size()` steps removed; prefix must match.
  SlotPath relative_to(const SlotPath& prefix) const;

  std::string str() const;      // "" for the root
  std::string display() const;  // "." for the root

  friend auto operator<=>(const SlotPath&, const SlotPath&) = default;

 private:
  std::vector<SlotStep> steps_;
};

enum class NodeKind { Internal, Builder, Parameter };
std::string_view node_kind_name(NodeKind kind);

using NodeId = std::size_t;

struct TreeNode {
  SlotPath path;
  std::string class_name;  // basic type text for parameter leaves
  std::string substate;
  NodeKind kind;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
};

// Nodes are stored in depth-first pre-order; node 0 is the root.
class ProductionTree {
 public:
  static constexpr std::string_view kFormatHeader = "# dop-tree v1";

  NodeId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::optional<NodeId> find(const SlotPath& path) const;
  std::vector<NodeId> leaves() const;
  // Strict ancestors, nearest first.
  std::vector<NodeId> ancestors(NodeId id) const;
  std::vector<NodeId> subtree(NodeId id) const;
  std::size_t depth_of(NodeId id) const;  // root has depth 0
  std::size_t height() const;             // node count of the longest root-leaf chain

  // Canonical line format, one node per line:
  //   depth TAB slot_path TAB class TAB substate TAB kind
  // preceded by the versioned header line.
  std::string serialize() const;
  // Same format for the subtree of `id`, with depths and paths relative to it.
  std::string serialize_subtree(NodeId id) const;

  NodeId add_node(TreeNode node);  // used by derivation

 private:
  std::vector<TreeNode> nodes_;
};

// Full tree of an object of `root_class` requested in `target_substate`. The
// root expands to its ground state (every builder and parameter attribute);
// each builder child expands only what its requested sub-state needs. When the
// target is a parameter the tree is that single leaf.
ProductionTree derive_production_tree(const Registry& registry, std::string_view root_class,
                                      std::string_view target_substate);

// Like derive_production_tree, but the root also expands only what
// `substate` needs. This is the tree behind a sub-state key.
ProductionTree derive_substate_tree(const Registry& registry, std::string_view class_name,
                                    std::string_view substate);

std::vector<SlotPath> ground_state_leaves(const ProductionTree& tree);

struct WellBuiltReport {
  bool well_built = true;
  // Builders (parameters included) grouped by the set of internals needing them.
  std::vector<std::vector<std::string>> leaf_clusters;
  // For each internal attribute, the builders it transitively needs.
  std::map<std::string, std::set<std::string>> internal_leaves;
};

WellBuiltReport check_well_built(const Registry& registry, std::string_view class_name);

// Tree of one internal attribute: expands `needs` inside the class down to
// builder and parameter attributes, which are its leaves.
ProductionTree internal_tree(const Registry& registry, std::string_view class_name,
                             std::string_view attribute);

// Builder and parameter attributes reachable from `attribute` through
// same-class `needs`, in declaration order. Throws CycleDetected on a cycle
// between internal attributes and UnresolvedNeed on dangling names.
std::vector<const AttributeDecl*> attribute_closure(const ClassSchema& schema,
                                                    std::string_view attribute);

// Attributes of the class whose value depends on any of `changed`, including
// `changed` themselves.
std::set<std::string> dependent_attributes(const ClassSchema& schema,
                                           const std::set<std::string>& changed);

}  // namespace dop
