#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dop {

struct Field;
struct AttributeValue;

using ValueList = std::vector<AttributeValue>;
using ValueFields = std::vector<Field>;

enum class ValueKind { Boolean, Integer, Real, String, RealVector, List, Composite };

// Value of one attribute of one object: basic values, vectors of reals,
// collections of values (ARRAY[POINT]) and composites (named fields in
// declaration order).
struct AttributeValue {
  using Storage = std::variant<bool, std::int64_t, double, std::string, std::vector<double>,
                               ValueList, ValueFields>;

  AttributeValue() : data(false) {}
  AttributeValue(bool v) : data(v) {}
  AttributeValue(std::int64_t v) : data(v) {}
  AttributeValue(int v) : data(static_cast<std::int64_t>(v)) {}
  AttributeValue(double v) : data(v) {}
  AttributeValue(std::string v) : data(std::move(v)) {}
  AttributeValue(const char* v) : data(std::string(v)) {}
  AttributeValue(std::vector<double> v) : data(std::move(v)) {}
  AttributeValue(ValueList v) : data(std::move(v)) {}
  AttributeValue(ValueFields v) : data(std::move(v)) {}

  ValueKind kind() const { return static_cast<ValueKind>(data.index()); }

  bool as_bool() const;
  std::int64_t as_integer() const;
  double as_real() const;
  const std::string& as_string() const;
  const std::vector<double>& as_reals() const;
  const ValueList& as_list() const;
  const ValueFields& as_fields() const;
  const AttributeValue& field(std::string_view name) const;

  Storage data;
};

struct Field {
  std::string name;
  AttributeValue value;
};

std::string_view value_kind_name(ValueKind kind);

// Structural equality with reals compared by bit pattern.
bool bit_equal(const AttributeValue& a, const AttributeValue& b);
inline bool operator==(const AttributeValue& a, const AttributeValue& b) { return bit_equal(a, b); }

// Canonical byte encoding: one tag byte per value, little-endian fixed-width
// integers, reals as IEEE-754 binary64 bit patterns, length-prefixed strings.
std::string encode_value(const AttributeValue& value);
// Throws StorageCorrupt on malformed input.
AttributeValue decode_value(std::string_view bytes);

// Human-readable rendering. Reals use the shortest text that round-trips.
std::string format_real(double value);
std::string to_text(const AttributeValue& value);

// Literal syntax of parameter files: true/false, integers, reals, "strings"
// and [a, b, ...] lists. Throws InvalidInput.
AttributeValue parse_literal(std::string_view text);

// Converts a literal to the declared parameter type (`REAL`, `ARRAY[REAL]`,
// ...). Integers widen to reals; numeric lists become real vectors. Returns
// false when the value cannot represent that type.
bool coerce_to_type(const AttributeValue& value, std::string_view type_text, AttributeValue& out);

}  // namespace dop
