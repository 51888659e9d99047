#include "dop/value.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

#include "dop/error.hpp"

namespace dop {

namespace {

Error wrong_kind(ValueKind want, ValueKind got) {
  return Error(ErrorCode::TypeMismatch, "expected " + std::string(value_kind_name(want)) +
                                            " value, got " + std::string(value_kind_name(got)));
}

template <class T>
const T& get_as(const AttributeValue& v, ValueKind want) {
  if (const T* p = std::get_if<T>(&v.data)) return *p;
  throw wrong_kind(want, v.kind());
}

enum Tag : std::uint8_t {
  kBool = 1,
  kInteger = 2,
  kReal = 3,
  kString = 4,
  kRealVector = 5,
  kList = 6,
  kComposite = 7,
};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, std::string_view s) {
  put_u64(out, s.size());
  out.append(s);
}

void encode_into(std::string& out, const AttributeValue& v) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          out.push_back(static_cast<char>(kBool));
          out.push_back(x ? 1 : 0);
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          out.push_back(static_cast<char>(kInteger));
          put_u64(out, static_cast<std::uint64_t>(x));
        } else if constexpr (std::is_same_v<T, double>) {
          out.push_back(static_cast<char>(kReal));
          put_u64(out, std::bit_cast<std::uint64_t>(x));
        } else if constexpr (std::is_same_v<T, std::string>) {
          out.push_back(static_cast<char>(kString));
          put_string(out, x);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          out.push_back(static_cast<char>(kRealVector));
          put_u64(out, x.size());
          for (double d : x) put_u64(out, std::bit_cast<std::uint64_t>(d));
        } else if constexpr (std::is_same_v<T, ValueList>) {
          out.push_back(static_cast<char>(kList));
          put_u64(out, x.size());
          for (const auto& item : x) encode_into(out, item);
        } else {
          out.push_back(static_cast<char>(kComposite));
          put_u64(out, x.size());
          for (const auto& f : x) {
            put_string(out, f.name);
            encode_into(out, f.value);
          }
        }
      },
      v.data);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint8_t byte() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  std::string string() {
    auto n = count(1);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  // Element count, bounded by the bytes left so corrupt lengths fail fast.
  std::size_t count(std::size_t min_element_size) {
    auto n = u64();
    if (n > (bytes_.size() - pos_) / min_element_size) corrupt("length exceeds payload");
    return static_cast<std::size_t>(n);
  }

  AttributeValue value(int depth) {
    if (depth > 256) corrupt("nesting too deep");
    switch (byte()) {
      case kBool: {
        auto b = byte();
        if (b > 1) corrupt("bad boolean");
        return AttributeValue(b == 1);
      }
      case kInteger: return AttributeValue(static_cast<std::int64_t>(u64()));
      case kReal: return AttributeValue(std::bit_cast<double>(u64()));
      case kString: return AttributeValue(string());
      case kRealVector: {
        std::vector<double> v(count(8));
        for (auto& d : v) d = std::bit_cast<double>(u64());
        return AttributeValue(std::move(v));
      }
      case kList: {
        ValueList items(count(2));
        for (auto& item : items) item = value(depth + 1);
        return AttributeValue(std::move(items));
      }
      case kComposite: {
        ValueFields fields(count(10));
        for (auto& f : fields) {
          f.name = string();
          f.value = value(depth + 1);
        }
        return AttributeValue(std::move(fields));
      }
      default: corrupt("unknown value tag");
    }
  }

  [[noreturn]] void corrupt(const std::string& why) const {
    throw Error(ErrorCode::StorageCorrupt, "malformed value encoding: " + why);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) corrupt("truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

bool AttributeValue::as_bool() const { return get_as<bool>(*this, ValueKind::Boolean); }
std::int64_t AttributeValue::as_integer() const {
  return get_as<std::int64_t>(*this, ValueKind::Integer);
}
double AttributeValue::as_real() const { return get_as<double>(*this, ValueKind::Real); }
const std::string& AttributeValue::as_string() const {
  return get_as<std::string>(*this, ValueKind::String);
}
const std::vector<double>& AttributeValue::as_reals() const {
  return get_as<std::vector<double>>(*this, ValueKind::RealVector);
}
const ValueList& AttributeValue::as_list() const { return get_as<ValueList>(*this, ValueKind::List); }
const ValueFields& AttributeValue::as_fields() const {
  return get_as<ValueFields>(*this, ValueKind::Composite);
}

const AttributeValue& AttributeValue::field(std::string_view name) const {
  for (const auto& f : as_fields())
    if (f.name == name) return f.value;
  throw Error(ErrorCode::TypeMismatch, "composite has no field '" + std::string(name) + "'");
}

std::string_view value_kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::Boolean: return "BOOLEAN";
    case ValueKind::Integer: return "INTEGER";
    case ValueKind::Real: return "REAL";
    case ValueKind::String: return "STRING";
    case ValueKind::RealVector: return "ARRAY[REAL]";
    case ValueKind::List: return "ARRAY";
    case ValueKind::Composite: return "COMPOSITE";
  }
  return "?";
}

bool bit_equal(const AttributeValue& a, const AttributeValue& b) {
  return encode_value(a) == encode_value(b);
}

std::string encode_value(const AttributeValue& value) {
  std::string out;
  encode_into(out, value);
  return out;
}

AttributeValue decode_value(std::string_view bytes) {
  Reader r(bytes);
  auto v = r.value(0);
  if (!r.done()) r.corrupt("trailing bytes");
  return v;
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string s(buf, ec == std::errc{} ? ptr : buf);
  if (std::isfinite(value) && s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

std::string to_text(const AttributeValue& value) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_real(x);
        } else if constexpr (std::is_same_v<T, std::string>) {
          std::string out = "\"";
          for (char c : x) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
          }
          return out + "\"";
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string out = "(";
          for (std::size_t i = 0; i < x.size(); ++i) out += (i ? ", " : "") + format_real(x[i]);
          return out + ")";
        } else if constexpr (std::is_same_v<T, ValueList>) {
          std::string out = "[";
          for (std::size_t i = 0; i < x.size(); ++i) out += (i ? ", " : "") + to_text(x[i]);
          return out + "]";
        } else {
          std::string out = "{";
          for (std::size_t i = 0; i < x.size(); ++i)
            out += (i ? ", " : "") + x[i].name + ": " + to_text(x[i].value);
          return out + "}";
        }
      },
      value.data);
}

namespace {

class LiteralParser {
 public:
  explicit LiteralParser(std::string_view text) : text_(text) {}

  AttributeValue parse() {
    auto v = value(0);
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing text");
    return v;
  }

 private:
  AttributeValue value(int depth) {
    if (depth > 64) fail("nesting too deep");
    skip_space();
    if (pos_ >= text_.size()) fail("empty literal");
    char c = text_[pos_];
    if (c == '"') return string();
    if (c == '[') {
      ++pos_;
      ValueList items;
      skip_space();
      if (peek() == ']') {
        ++pos_;
        return AttributeValue(std::move(items));
      }
      while (true) {
        items.push_back(value(depth + 1));
        skip_space();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ']') {
          ++pos_;
          break;
        }
        fail("expected ',' or ']'");
      }
      return AttributeValue(std::move(items));
    }
    std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != ',' && text_[pos_] != ']')
      ++pos_;
    auto word = text_.substr(start, pos_ - start);
    if (word == "true" || word == "True") return AttributeValue(true);
    if (word == "false" || word == "False") return AttributeValue(false);
    std::int64_t i = 0;
    auto [iptr, iec] = std::from_chars(word.data(), word.data() + word.size(), i);
    if (iec == std::errc{} && iptr == word.data() + word.size()) return AttributeValue(i);
    auto number = word;
    if (!number.empty() && number.front() == '+') number.remove_prefix(1);
    double d = 0;
    auto [dptr, dec] = std::from_chars(number.data(), number.data() + number.size(), d);
    if (dec == std::errc{} && dptr == number.data() + number.size() && !number.empty())
      return AttributeValue(d);
    fail("cannot read literal '" + std::string(word) + "'");
  }

  AttributeValue string() {
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
      out += text_[pos_++];
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return AttributeValue(std::move(out));
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::InvalidInput,
                "bad literal '" + std::string(text_) + "': " + why);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

bool coerce_basic(const AttributeValue& v, std::string_view basic, AttributeValue& out) {
  switch (v.kind()) {
    case ValueKind::Boolean:
      if (basic != "BOOLEAN") return false;
      break;
    case ValueKind::Integer:
      if (basic == "REAL") {
        out = AttributeValue(static_cast<double>(v.as_integer()));
        return true;
      }
      if (basic != "INTEGER") return false;
      break;
    case ValueKind::Real:
      if (basic != "REAL") return false;
      break;
    case ValueKind::String:
      if (basic != "STRING") return false;
      break;
    default: return false;
  }
  out = v;
  return true;
}

}  // namespace

AttributeValue parse_literal(std::string_view text) { return LiteralParser(text).parse(); }

bool coerce_to_type(const AttributeValue& value, std::string_view type_text, AttributeValue& out) {
  constexpr std::string_view prefix = "ARRAY[";
  if (type_text.starts_with(prefix) && type_text.ends_with("]")) {
    auto element = type_text.substr(prefix.size(), type_text.size() - prefix.size() - 1);
    if (element == "REAL" && value.kind() == ValueKind::RealVector) {
      out = value;
      return true;
    }
    if (value.kind() != ValueKind::List) return false;
    if (element == "REAL") {
      std::vector<double> reals;
      for (const auto& item : value.as_list()) {
        AttributeValue r;
        if (!coerce_basic(item, "REAL", r)) return false;
        reals.push_back(r.as_real());
      }
      out = AttributeValue(std::move(reals));
      return true;
    }
    ValueList items;
    for (const auto& item : value.as_list()) {
      AttributeValue c;
      if (!coerce_basic(item, element, c)) return false;
      items.push_back(std::move(c));
    }
    out = AttributeValue(std::move(items));
    return true;
  }
  return coerce_basic(value, type_text, out);
}

}  // namespace dop
