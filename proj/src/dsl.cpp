#include "dop/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dop/error.hpp"

namespace dop::dsl {

bool has_errors(std::span<const Diagnostic> diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

std::string format_diagnostic(const Diagnostic& d) {
  std::ostringstream out;
  out << (d.span.origin.empty() ? "<input>" : d.span.origin) << ':' << d.span.line << ':'
      << d.span.column << ": " << (d.severity == Severity::Error ? "error" : "warning") << " ["
      << d.code << "] " << d.message;
  return out.str();
}

namespace {

// --- lexer ----------------------------------------------------------------

enum class Tok { Ident, String, Number, Punct, Eof };

struct Token {
  Tok kind = Tok::Eof;
  std::string text;  // string contents without quotes for Tok::String
  std::size_t offset = 0;
  std::size_t length = 0;
  std::uint32_t line = 1;
  std::uint32_t column = 1;
};

class Lexer {
 public:
  Lexer(const SourceUnit& source, std::vector<Diagnostic>& diags)
      : src_(source.text), origin_(source.origin), diags_(diags) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_trivia();
      Token t;
      t.offset = pos_;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::Eof;
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_'))
          advance();
        t.kind = Tok::Ident;
        t.text = src_.substr(t.offset, pos_ - t.offset);
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '.'))
          advance();
        t.kind = Tok::Number;
        t.text = src_.substr(t.offset, pos_ - t.offset);
      } else if (c == '"') {
        advance();
        lex_string(t, "\"");
      } else if (src_.compare(pos_, 2, "``") == 0) {
        advance();
        advance();
        lex_string(t, "''");
      } else {
        static const char* two[] = {":=", "/=", "<=", ">=", ".."};
        t.kind = Tok::Punct;
        std::size_t n = 1;
        for (const char* op : two)
          if (src_.compare(pos_, 2, op) == 0) n = 2;
        for (std::size_t i = 0; i < n; ++i) advance();
        t.text = src_.substr(t.offset, n);
      }
      t.length = pos_ - t.offset;
      out.push_back(std::move(t));
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_trivia() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (src_.compare(pos_, 2, "--") == 0) {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  void lex_string(Token& t, std::string_view close) {
    t.kind = Tok::String;
    std::size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n' && src_.compare(pos_, close.size(), close) != 0)
      advance();
    t.text = src_.substr(start, pos_ - start);
    if (pos_ < src_.size() && src_[pos_] != '\n') {
      for (std::size_t i = 0; i < close.size(); ++i) advance();
    } else {
      diags_.push_back(Diagnostic{Severity::Error, "UnterminatedString",
                                  "string literal is not terminated on its line",
                                  SourceSpan{origin_, t.line, t.column, t.offset, pos_ - t.offset}});
    }
  }

  const std::string& src_;
  const std::string& origin_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
  std::uint32_t line_ = 1;
  std::uint32_t col_ = 1;
};

// --- parser ---------------------------------------------------------------

struct SyntaxFailure {};

const std::set<std::string, std::less<>> kClauseKeywords{"is",  "needs", "uses", "require",
                                                         "local", "do",  "ensure", "rescue", "end"};
const std::set<std::string, std::less<>> kBlockOpeners{"if",    "loop",  "inspect",
                                                       "check", "debug", "across"};
const std::set<std::string, std::less<>> kUnsupportedClassClauses{
    "inherit", "create", "creation", "indexing", "note", "convert", "deferred", "expanded"};

std::string normalize_assertion(std::string_view raw) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    auto first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos) {
      auto last = line.find_last_not_of(" \t\r");
      if (!out.empty()) out += '\n';
      out += line.substr(first, last - first + 1);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

class Parser {
 public:
  explicit Parser(const SourceUnit& source) : source_(source) {
    tokens_ = Lexer(source, result_.diagnostics).run();
  }

  ParseResult run() {
    while (!at_eof()) {
      if (at_kw("class")) {
        parse_class();
      } else {
        error(peek(), "SyntaxError", "expected 'class', found '" + peek().text + "'");
        // Skip to the next class header.
        do {
          ++pos_;
        } while (!at_eof() && !at_kw("class"));
      }
    }
    return std::move(result_);
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  bool at_eof() const { return peek().kind == Tok::Eof; }
  bool at_kw(std::string_view kw, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Ident && peek(ahead).text == kw;
  }
  bool at_punct(std::string_view p, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Punct && peek(ahead).text == p;
  }
  const Token& take() {
    const Token& t = peek();
    if (!at_eof()) ++pos_;
    return t;
  }

  SourceSpan span_of(const Token& t) const {
    return SourceSpan{source_.origin, t.line, t.column, t.offset, t.length};
  }

  void error(const Token& at, std::string code, std::string message) {
    result_.diagnostics.push_back(
        Diagnostic{Severity::Error, std::move(code), std::move(message), span_of(at)});
  }
  void warning(const Token& at, std::string code, std::string message) {
    result_.diagnostics.push_back(
        Diagnostic{Severity::Warning, std::move(code), std::move(message), span_of(at)});
  }

  [[noreturn]] void fail(std::string message) {
    error(peek(), "SyntaxError", std::move(message));
    throw SyntaxFailure{};
  }

  std::string describe(const Token& t) const {
    return t.kind == Tok::Eof ? std::string("end of file") : "'" + t.text + "'";
  }

  const Token& expect_ident(std::string_view what) {
    if (peek().kind != Tok::Ident) fail("expected " + std::string(what) + ", found " + describe(peek()));
    return take();
  }
  void expect_punct(std::string_view p) {
    if (!at_punct(p)) fail("expected '" + std::string(p) + "', found " + describe(peek()));
    take();
  }

  // Consumes tokens up to and including the next `end` (or stops at EOF).
  void resync() {
    while (!at_eof() && !at_kw("end")) ++pos_;
    take();
  }

  void parse_class() {
    const Token& kw = take();
    ClassSchema schema;
    schema.span = span_of(kw);
    if (peek().kind != Tok::Ident) {
      error(peek(), "SyntaxError", "expected class name after 'class'");
      resync();
      return;
    }
    const Token& name = take();
    schema.name = name.text;
    schema.span = span_of(name);
    if (std::any_of(name.text.begin(), name.text.end(),
                    [](char c) { return std::islower(static_cast<unsigned char>(c)); }))
      warning(name, "LowercaseClassName", "class names are conventionally upper case");

    std::string clients;
    bool in_feature = false;
    bool warned_outside = false;
    while (true) {
      if (at_eof()) {
        warning(peek(), "MissingEnd", "class '" + schema.name + "' is not closed by 'end'");
        break;
      }
      if (at_kw("end")) {
        take();
        break;
      }
      if (at_kw("class")) {
        warning(peek(), "MissingEnd", "class '" + schema.name + "' is not closed by 'end'");
        break;
      }
      try {
        if (at_kw("feature")) {
          take();
          clients = parse_feature_clients();
          in_feature = true;
        } else if (at_kw("invariant")) {
          parse_invariant(schema);
        } else if (peek().kind == Tok::Ident && kUnsupportedClassClauses.count(peek().text)) {
          fail("'" + peek().text + "' clauses are not supported");
        } else if (peek().kind == Tok::Ident && at_punct(":", 1)) {
          if (!in_feature && !warned_outside) {
            warning(peek(), "AttributeOutsideFeature",
                    "attributes should be declared inside a 'feature' block");
            warned_outside = true;
          }
          parse_attribute(schema, clients);
        } else {
          fail("expected an attribute declaration, found " + describe(peek()));
        }
      } catch (const SyntaxFailure&) {
        resync();
      }
    }
    result_.classes.push_back(std::move(schema));
  }

  std::string parse_feature_clients() {
    if (!at_punct("{")) return "";
    take();
    std::string clients;
    while (!at_punct("}")) {
      const Token& t = expect_ident("client class name");
      if (!clients.empty()) clients += ", ";
      clients += t.text;
      if (at_punct(",")) take();
      else if (!at_punct("}")) fail("expected ',' or '}' in feature clients");
    }
    take();
    return clients;
  }

  void parse_invariant(ClassSchema& schema) {
    const Token& kw = take();
    std::size_t start = kw.offset + kw.length;
    if (at_punct(":")) {
      start = peek().offset + peek().length;
      take();
    }
    while (!at_eof() && !at_kw("end") && !at_kw("class")) take();
    schema.invariant = normalize_assertion(
        std::string_view(source_.text).substr(start, peek().offset - start));
  }

  TypeRef parse_type(int depth = 0) {
    if (depth > 32) fail("type nesting too deep");
    TypeRef t;
    t.name = expect_ident("type name").text;
    if (at_punct("[")) {
      take();
      t.args.push_back(parse_type(depth + 1));
      while (at_punct(",")) {
        take();
        t.args.push_back(parse_type(depth + 1));
      }
      expect_punct("]");
    }
    return t;
  }

  std::string expect_substate() {
    if (peek().kind != Tok::String) fail("expected a quoted sub-state name, found " + describe(peek()));
    std::string s = take().text;
    if (s.empty()) fail("empty sub-state name");
    return s;
  }

  void parse_attribute(ClassSchema& schema, const std::string& clients) {
    const Token& name = take();
    take();  // ':'
    AttributeDecl attr;
    attr.name = name.text;
    attr.span = span_of(name);
    attr.feature_clients = clients;
    attr.type = parse_type();
    attr.kind = ParameterKind{};

    if (at_kw("internal")) {
      take();
      expect_punct("(");
      attr.kind = InternalKind{expect_ident("build procedure name").text};
      expect_punct(")");
    } else if (at_kw("builder")) {
      take();
      expect_punct("(");
      attr.kind = BuilderKind{expect_substate()};
      expect_punct(")");
    }
    if (at_kw("arity")) {
      take();
      expect_punct("(");
      const Token& n = peek();
      std::size_t value = 0;
      auto [ptr, ec] = std::from_chars(n.text.data(), n.text.data() + n.text.size(), value);
      if (n.kind != Tok::Number || ec != std::errc{} || ptr != n.text.data() + n.text.size() ||
          value == 0)
        fail("expected a positive arity");
      take();
      attr.arity = value;
      expect_punct(")");
    }
    bool explicit_kind = !attr.is_parameter();
    bool routine = false;
    if (peek().kind == Tok::Ident && kClauseKeywords.count(peek().text) && !at_kw("end"))
      routine = parse_body(attr);
    // A routine without a kind keyword is built by the conventional procedure.
    if (!explicit_kind && routine) attr.kind = InternalKind{attr.name + "_build"};
    if (attr.is_parameter() && !attr.type.basic())
      error(name, "ClassTypedParameter",
            "attribute '" + attr.name + "' of class type " + attr.type.to_string() +
                " must be declared 'internal' or 'builder'");

    if (schema.find(attr.name))
      error(name, "DuplicateAttribute", "attribute '" + attr.name + "' is declared twice");
    else
      schema.attributes.push_back(std::move(attr));
  }

  // Returns true when the body is a routine (`needs` or `do`).
  bool parse_body(AttributeDecl& attr) {
    bool routine = false;
    while (true) {
      if (at_eof()) fail("expected 'end' closing attribute '" + attr.name + "'");
      if (at_kw("end")) {
        take();
        return routine;
      }
      if (at_kw("is")) {
        take();
      } else if (at_kw("needs")) {
        take();
        routine = true;
        parse_needs(attr);
      } else if (at_kw("uses")) {
        take();
        parse_uses(attr);
      } else if (at_kw("require")) {
        attr.require = capture_assertion();
      } else if (at_kw("ensure")) {
        attr.ensure = capture_assertion();
      } else if (at_kw("local")) {
        take();
        while (!at_eof() && !(peek().kind == Tok::Ident && kClauseKeywords.count(peek().text)))
          take();
      } else if (at_kw("do") || at_kw("rescue")) {
        routine = true;
        take();
        skip_instructions();
      } else {
        fail("unexpected " + describe(peek()) + " in declaration of '" + attr.name + "'");
      }
    }
  }

  void parse_needs(AttributeDecl& attr) {
    bool paren = at_punct("(");
    if (paren) take();
    while (true) {
      Need need;
      need.attribute = expect_ident("needed attribute name").text;
      if (at_punct("(")) {
        take();
        need.substate = expect_substate();
        expect_punct(")");
      }
      attr.needs.push_back(std::move(need));
      if (!at_punct(",")) break;
      take();
    }
    if (paren) expect_punct(")");
  }

  void parse_uses(AttributeDecl& attr) {
    expect_punct("(");
    while (true) {
      const Token& ctx = expect_ident("context name");
      expect_punct(":");
      const Token& proc = expect_ident("procedure name");
      const auto& table = ClassSchema::context_suffixes();
      auto it = table.find(ctx.text);
      if (it == table.end()) {
        error(ctx, "UnknownContext", "context '" + ctx.text + "' is not one of build, read, set");
      } else if (!proc.text.ends_with(it->second)) {
        warning(proc, "ContextSuffix", "procedure for context '" + ctx.text +
                                           "' should end with '" + it->second + "'");
      }
      attr.uses.push_back(UsesEntry{ctx.text, proc.text});
      if (!at_punct(",")) break;
      take();
    }
    expect_punct(")");
  }

  std::string capture_assertion() {
    const Token& kw = take();
    std::size_t start = kw.offset + kw.length;
    while (!at_eof() && !(peek().kind == Tok::Ident && kClauseKeywords.count(peek().text) &&
                          !at_kw("is")))
      take();
    return normalize_assertion(std::string_view(source_.text).substr(start, peek().offset - start));
  }

  void skip_instructions() {
    int depth = 0;
    while (!at_eof()) {
      if (peek().kind == Tok::Ident) {
        const auto& w = peek().text;
        if (depth == 0 && (w == "end" || w == "ensure" || w == "rescue")) return;
        if (kBlockOpeners.count(w)) ++depth;
        else if (w == "end") --depth;
      }
      take();
    }
  }

  const SourceUnit& source_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  ParseResult result_;
};

// --- rendering ------------------------------------------------------------

void render_block(std::ostringstream& out, std::string_view keyword, const std::string& text) {
  out << "      " << keyword << '\n';
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    out << "         " << text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos)
        << '\n';
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
}

// --- registry validation --------------------------------------------------

class Validator {
 public:
  Validator(const Registry& registry, std::vector<Diagnostic>& diags)
      : registry_(registry), diags_(diags) {}

  void check(const ClassSchema& schema) {
    for (const auto& attr : schema.attributes) check_attribute(schema, attr);
    for (const auto& attr : schema.attributes) {
      if (!attr.is_internal()) continue;
      try {
        attribute_closure(schema, attr.name);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::CycleDetected) error(attr.span, "CycleDetected", e.what());
      }
    }
  }

 private:
  void error(const SourceSpan& span, std::string code, std::string message) {
    diags_.push_back(Diagnostic{Severity::Error, std::move(code), std::move(message), span});
  }

  void check_attribute(const ClassSchema& schema, const AttributeDecl& attr) {
    const std::string where = schema.name + "." + attr.name;
    const TypeRef& element = attr.type.element();
    if (!attr.type.args.empty() && !attr.type.is_collection())
      error(attr.span, "UnresolvedType",
            where + ": generic type " + attr.type.to_string() + " is not supported");

    if (attr.is_builder()) {
      if (attr.type.basic()) {
        error(attr.span, "BasicTypedBuilder",
              where + ": basic-typed attributes are parameters and cannot be built");
      } else if (const ClassSchema* target = registry_.find(element.name)) {
        if (!target->find(attr.required_substate()))
          error(attr.span, "UnknownSubState",
                where + ": class " + element.name + " has no sub-state '" +
                    attr.required_substate() + "'");
      } else {
        error(attr.span, "UnresolvedType", where + ": class " + element.name + " is not defined");
      }
      if (attr.type.is_collection() && !attr.arity)
        diags_.push_back(Diagnostic{Severity::Warning, "MissingArity",
                                    where + ": builder collection has no declared arity",
                                    attr.span});
    } else if (attr.is_internal()) {
      if (!attr.type.basic() && element.args.empty() && !registry_.find(element.name))
        error(attr.span, "UnresolvedType", where + ": class " + element.name + " is not defined");
    }

    for (const Need& need : attr.needs) {
      const AttributeDecl* target = schema.find(need.attribute);
      if (!target) {
        error(attr.span, "UnresolvedNeed", where + " needs unknown attribute '" + need.attribute + "'");
      } else if (need.substate && !target->is_builder()) {
        error(attr.span, "UnresolvedNeed",
              where + " requests a sub-state of '" + need.attribute + "', which is not a builder");
      } else if (need.substate && *need.substate != target->required_substate()) {
        error(attr.span, "UnresolvedNeed",
              where + " needs '" + need.attribute + "' in sub-state '" + *need.substate +
                  "' but it is declared as builder (\"" + target->required_substate() + "\")");
      }
    }
  }

  const Registry& registry_;
  std::vector<Diagnostic>& diags_;
};

}  // namespace

ParseResult parse_unit(const SourceUnit& source) { return Parser(source).run(); }

std::pair<ClassSchema, std::vector<Diagnostic>> parse_class(const SourceUnit& source) {
  auto result = parse_unit(source);
  if (result.classes.empty()) {
    result.diagnostics.push_back(
        Diagnostic{Severity::Error, "NoClass", "source contains no class declaration",
                   SourceSpan{source.origin, 1, 1, 0, 0}});
    return {ClassSchema{}, std::move(result.diagnostics)};
  }
  return {std::move(result.classes.front()), std::move(result.diagnostics)};
}

std::string render_interface(const ClassSchema& schema) {
  std::ostringstream out;
  out << "class " << schema.name << "\n\n";
  std::optional<std::string> clients;
  for (const auto& attr : schema.attributes) {
    if (!clients || *clients != attr.feature_clients) {
      clients = attr.feature_clients;
      out << "feature";
      if (!clients->empty()) out << " {" << *clients << '}';
      out << "\n\n";
    }
    out << "   " << attr.name << " : " << attr.type.to_string();
    if (attr.is_internal()) out << " internal (" << attr.procedure() << ')';
    if (attr.is_builder()) out << " builder (\"" << attr.required_substate() << "\")";
    if (attr.arity) out << " arity (" << *attr.arity << ')';
    out << '\n';
    bool body = !attr.needs.empty() || !attr.uses.empty() || attr.require || attr.ensure;
    if (!attr.needs.empty()) {
      out << "      needs ";
      for (std::size_t i = 0; i < attr.needs.size(); ++i) {
        if (i) out << ", ";
        out << attr.needs[i].attribute;
        if (attr.needs[i].substate) out << "(\"" << *attr.needs[i].substate << "\")";
      }
      out << '\n';
    }
    if (!attr.uses.empty()) {
      out << "      uses (";
      for (std::size_t i = 0; i < attr.uses.size(); ++i) {
        if (i) out << ", ";
        out << attr.uses[i].context << " : " << attr.uses[i].procedure;
      }
      out << ")\n";
    }
    if (attr.require) render_block(out, "require", *attr.require);
    if (attr.ensure) render_block(out, "ensure", *attr.ensure);
    if (body) out << "      end -- " << attr.name << '\n';
    out << '\n';
  }
  if (schema.invariant) {
    out << "invariant\n";
    std::size_t pos = 0;
    const auto& text = *schema.invariant;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      out << "   " << text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos)
          << '\n';
      if (nl == std::string::npos) break;
      pos = nl + 1;
    }
    out << '\n';
  }
  out << "end -- class " << schema.name << '\n';
  return out.str();
}

LoadResult load_registry(std::span<const SourceUnit> sources) {
  LoadResult result;
  Registry registry;
  for (const auto& source : sources) {
    auto parsed = parse_unit(source);
    result.diagnostics.insert(result.diagnostics.end(), parsed.diagnostics.begin(),
                              parsed.diagnostics.end());
    for (auto& schema : parsed.classes) {
      if (const ClassSchema* prior = registry.find(schema.name)) {
        result.diagnostics.push_back(Diagnostic{
            Severity::Error, "DuplicateClass",
            "class '" + schema.name + "' is already defined at " + prior->span.origin + ":" +
                std::to_string(prior->span.line),
            schema.span});
        continue;
      }
      registry.add(std::move(schema));
    }
  }
  Validator validator(registry, result.diagnostics);
  for (const auto& [name, schema] : registry.classes()) validator.check(schema);
  if (!has_errors(result.diagnostics)) result.registry = std::move(registry);
  return result;
}

SourceUnit read_source(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return SourceUnit{buf.str(), path.string()};
}

}  // namespace dop::dsl
