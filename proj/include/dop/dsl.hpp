#pragma once

// Parser and renderer for `.dop` class definitions: Eiffel-style classes
// extended with the `internal`, `builder`, `needs` and `uses` keywords.
//
//   class TRIANGLE
//   feature {ANY}
//      vertices : ARRAY[POINT] builder ("position") arity (3)
//      surface : REAL internal (surface_build)
//         needs perimeter, sides
//         ensure
//            surface_is_built: Result > 0.0
//         end -- surface
//   end -- class TRIANGLE
//
// Assertions are kept as opaque text, `do ... end` bodies are skipped.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dop/model.hpp"

namespace dop::dsl {

struct SourceUnit {
  std::string text;
  std::string origin;
};

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string code;
  std::string message;
  SourceSpan span;
};

bool has_errors(std::span<const Diagnostic> diagnostics);
std::string format_diagnostic(const Diagnostic& diagnostic);

struct ParseResult {
  std::vector<ClassSchema> classes;
  std::vector<Diagnostic> diagnostics;
};

// Parses every class of the unit. Never throws on bad input: syntax errors
// become diagnostics and the parser resynchronizes at the next `end`.
ParseResult parse_unit(const SourceUnit& source);

// First class of the unit (an empty schema plus an error when there is none).
std::pair<ClassSchema, std::vector<Diagnostic>> parse_class(const SourceUnit& source);

// The enriched class interface: kinds, required sub-states and needs of every
// attribute. parse_class(render_interface(s)) is structurally equal to s.
std::string render_interface(const ClassSchema& schema);

struct LoadResult {
  std::optional<Registry> registry;  // present only when no errors were found
  std::vector<Diagnostic> diagnostics;
};

// Parses all units and cross-resolves type names, sub-states and needs.
LoadResult load_registry(std::span<const SourceUnit> sources);

// Throws IoFailure.
SourceUnit read_source(const std::filesystem::path& path);

}  // namespace dop::dsl
