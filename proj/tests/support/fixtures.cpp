#include "fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dop/error.hpp"

namespace dop::testing {

std::filesystem::path corpus_dir() { return DOP_CORPUS_DIR; }
std::filesystem::path fixture_dir() { return DOP_FIXTURE_DIR; }

dsl::SourceUnit read_unit(const std::filesystem::path& path) { return dsl::read_source(path); }

Registry load_registry_files(const std::vector<std::filesystem::path>& files) {
  std::vector<dsl::SourceUnit> units;
  for (const auto& f : files) units.push_back(read_unit(f));
  auto result = dsl::load_registry(units);
  if (!result.registry) {
    std::string text;
    for (const auto& d : result.diagnostics) text += dsl::format_diagnostic(d) + "\n";
    throw std::runtime_error("fixture registry does not load:\n" + text);
  }
  return std::move(*result.registry);
}

Registry geometry_registry() {
  auto g = corpus_dir() / "geometry";
  return load_registry_files({g / "point.dop", g / "segment.dop", g / "triangle.dop",
                              g / "triangular_pyramid.dop"});
}

void assign_triangle(CalculationConditions& c, const Triangle& t, const std::string& prefix) {
  for (std::size_t i = 0; i < 3; ++i) {
    std::string base = prefix + "vertices[" + std::to_string(i + 1) + "].";
    c.set(SlotPath::parse(base + "x"), t[i].x);
    c.set(SlotPath::parse(base + "y"), t[i].y);
    c.set(SlotPath::parse(base + "z"), t[i].z);
  }
}

CalculationConditions triangle_conditions(const Triangle& t) {
  CalculationConditions c;
  assign_triangle(c, t);
  return c;
}

CountingProcedures counting_geometry_procedures() {
  ProcedureTable plain;
  geometry::register_procedures(plain);
  CountingProcedures out;
  static const std::pair<const char*, const char*> kNames[] = {
      {"POINT", "position_build"},     {"SEGMENT", "length_build"},
      {"TRIANGLE", "sides_build"},     {"TRIANGLE", "perimeter_build"},
      {"TRIANGLE", "surface_build"},   {"TRIANGLE", "centroid_build"},
      {"TRIANGULAR_PYRAMID", "base_surface_build"}};
  for (auto [cls, proc] : kNames) {
    BuildProcedure body = *plain.find(cls, proc);
    auto calls = out.calls;
    out.table.add(cls, proc, [body, calls](const BuildInputs& in) {
      ++*calls;
      return body(in);
    });
  }
  return out;
}

double random_real(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(-100.0, 100.0)(rng);
}

namespace {

double flatten_sum(const AttributeValue& v, double weight) {
  switch (v.kind()) {
    case ValueKind::Real: return v.as_real() * weight;
    case ValueKind::Integer: return static_cast<double>(v.as_integer()) * weight;
    case ValueKind::RealVector: {
      double s = 0;
      for (double x : v.as_reals()) s = s * 1.25 + x * weight;
      return s;
    }
    case ValueKind::List: {
      double s = 0;
      for (const auto& item : v.as_list()) s = s * 0.75 + flatten_sum(item, weight);
      return s;
    }
    default: return 0;
  }
}

}  // namespace

RandomModel random_model(std::mt19937_64& rng, std::size_t max_tree_nodes) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  while (true) {
    RandomModel m;
    std::size_t class_count = 1 + pick(4);
    // Build classes from the last (no builders) to the first.
    std::vector<ClassSchema> classes(class_count);
    std::vector<std::vector<std::string>> internals(class_count);
    for (std::size_t ci = class_count; ci-- > 0;) {
      ClassSchema& cls = classes[ci];
      cls.name = "K" + std::to_string(ci);
      std::vector<std::string> available;
      std::size_t params = 1 + pick(3);
      for (std::size_t p = 0; p < params; ++p) {
        AttributeDecl a;
        a.name = "p" + std::to_string(p);
        a.type = TypeRef::simple("REAL");
        a.kind = ParameterKind{};
        cls.attributes.push_back(a);
        available.push_back(a.name);
      }
      std::size_t builders = ci + 1 < class_count ? pick(3) : 0;
      for (std::size_t b = 0; b < builders; ++b) {
        std::size_t target = ci + 1 + pick(class_count - ci - 1);
        AttributeDecl a;
        a.name = "b" + std::to_string(b);
        bool collection = pick(3) == 0;
        a.type = collection ? TypeRef::array_of(TypeRef::simple(classes[target].name))
                            : TypeRef::simple(classes[target].name);
        if (collection) a.arity = 1 + pick(3);
        a.kind = BuilderKind{internals[target][pick(internals[target].size())]};
        cls.attributes.push_back(a);
        available.push_back(a.name);
      }
      std::size_t count = 1 + pick(3);
      for (std::size_t i = 0; i < count; ++i) {
        AttributeDecl a;
        a.name = "i" + std::to_string(i);
        a.type = TypeRef::simple("REAL");
        a.kind = InternalKind{a.name + "_build"};
        std::vector<std::string> pool = available;
        std::shuffle(pool.begin(), pool.end(), rng);
        std::size_t needs = 1 + pick(std::min<std::size_t>(pool.size(), 3));
        for (std::size_t k = 0; k < needs; ++k) a.needs.push_back(Need{pool[k], std::nullopt});
        double weight = 0.5 + static_cast<double>(pick(7)) * 0.25;
        m.procedures.add(cls.name, a.name + "_build", [weight](const BuildInputs& in) {
          double s = 1.0;
          for (const auto& [name, value] : in.all()) s = s * 0.5 + flatten_sum(value, weight);
          return AttributeValue(s);
        });
        cls.attributes.push_back(a);
        internals[ci].push_back(a.name);
        available.push_back(a.name);
      }
    }
    for (auto& c : classes) m.registry.add(c);
    m.root_class = classes[0].name;
    m.target = internals[0].back();
    auto tree = derive_production_tree(m.registry, m.root_class, m.target);
    if (tree.size() <= max_tree_nodes && tree.size() >= 2) return m;
  }
}

CalculationConditions random_conditions(std::mt19937_64& rng, const ProductionTree& ground) {
  CalculationConditions c;
  for (const auto& leaf : ground_state_leaves(ground)) c.set(leaf, random_real(rng));
  return c;
}

TempDir::TempDir() {
  auto base = std::filesystem::temp_directory_path();
  std::string templ = (base / "dop-test-XXXXXX").string();
  if (!::mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
  path_ = templ;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace dop::testing
