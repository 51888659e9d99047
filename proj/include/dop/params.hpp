#pragma once

// Parameter files: one `slot_path = literal` assignment per line.
//
//   # triangle 3-4-5
//   vertices[1].x = 0.0
//   vertices[2].x = 3
//
// `#` and `--` start comments. Literals follow parse_literal().

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dop/model.hpp"
#include "dop/store.hpp"
#include "dop/value.hpp"

namespace dop {

struct ParameterAssignment {
  SlotPath leaf;
  AttributeValue value;
  std::size_t line = 0;
};

// Throws InvalidInput (with the line number) on syntax errors and duplicate
// paths.
std::vector<ParameterAssignment> parse_parameter_text(std::string_view text,
                                                      std::string_view origin = "<input>");
// Throws IoFailure when the file cannot be read.
std::vector<ParameterAssignment> read_parameter_file(const std::filesystem::path& path);

// Parses `path=literal`, as given to --set.
ParameterAssignment parse_assignment(std::string_view text);

// Checks each assignment against the parameter leaves of `tree`: unknown
// paths raise UnknownLeaf, values the declared type cannot hold raise
// TypeMismatch. Values are coerced to the declared type.
CalculationConditions bind_parameters(const ProductionTree& tree,
                                      const std::vector<ParameterAssignment>& assignments);

}  // namespace dop
