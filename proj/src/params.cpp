#include "dop/params.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dop/error.hpp"

namespace dop {

namespace {

std::string_view trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Drops a trailing comment, ignoring comment markers inside string literals.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '\\') ++i;
      else if (c == '"') quoted = false;
    } else if (c == '"') {
      quoted = true;
    } else if (c == '#' || (c == '-' && i + 1 < line.size() && line[i + 1] == '-')) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

ParameterAssignment parse_assignment(std::string_view text) {
  auto eq = text.find('=');
  if (eq == std::string_view::npos)
    throw Error(ErrorCode::InvalidInput, "expected 'path = value', got '" + std::string(text) + "'");
  auto path_text = trim(text.substr(0, eq));
  auto value_text = trim(text.substr(eq + 1));
  if (path_text.empty()) throw Error(ErrorCode::InvalidInput, "missing slot path before '='");
  if (value_text.empty())
    throw Error(ErrorCode::InvalidInput, "missing value for '" + std::string(path_text) + "'");
  ParameterAssignment a;
  a.leaf = SlotPath::parse(path_text);
  if (a.leaf.is_root()) throw Error(ErrorCode::InvalidInput, "the root is not a parameter leaf");
  a.value = parse_literal(value_text);
  return a;
}

std::vector<ParameterAssignment> parse_parameter_text(std::string_view text,
                                                      std::string_view origin) {
  std::vector<ParameterAssignment> out;
  std::set<SlotPath> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    auto where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    ParameterAssignment a;
    try {
      a = parse_assignment(line);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidInput, where + e.message());
    }
    a.line = line_no;
    if (!seen.insert(a.leaf).second)
      throw Error(ErrorCode::InvalidInput, where + "duplicate assignment of '" + a.leaf.str() + "'");
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ParameterAssignment> read_parameter_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read parameter file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_parameter_text(buf.str(), path.string());
}

CalculationConditions bind_parameters(const ProductionTree& tree,
                                      const std::vector<ParameterAssignment>& assignments) {
  std::map<SlotPath, std::string> leaf_types;
  for (NodeId id : tree.leaves()) {
    const TreeNode& n = tree.node(id);
    if (n.kind == NodeKind::Parameter) leaf_types[n.path] = n.class_name;
  }
  CalculationConditions out;
  for (const auto& a : assignments) {
    auto it = leaf_types.find(a.leaf);
    if (it == leaf_types.end())
      throw Error(ErrorCode::UnknownLeaf,
                  "'" + a.leaf.str() + "' is not a parameter leaf of " + tree.node(0).class_name,
                  {a.leaf.str()});
    AttributeValue coerced;
    if (!coerce_to_type(a.value, it->second, coerced))
      throw Error(ErrorCode::TypeMismatch, "'" + a.leaf.str() + "' is " + it->second + ", got " +
                                               to_text(a.value));
    out.set(a.leaf, std::move(coerced));
  }
  return out;
}

}  // namespace dop
