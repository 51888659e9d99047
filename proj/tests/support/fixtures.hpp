#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dop/dsl.hpp"
#include "dop/geometry.hpp"
#include "dop/manager.hpp"
#include "dop/model.hpp"
#include "dop/store.hpp"

namespace dop::testing {

std::filesystem::path corpus_dir();
std::filesystem::path fixture_dir();

dsl::SourceUnit read_unit(const std::filesystem::path& path);
// Registry from the shipped geometry classes plus `extra` files.
Registry load_registry_files(const std::vector<std::filesystem::path>& files);
Registry geometry_registry();

using Triangle = std::array<geometry::Point, 3>;

// Assignments vertices[i].{x,y,z} under `prefix` (e.g. "base.").
void assign_triangle(CalculationConditions& c, const Triangle& t, const std::string& prefix = "");
CalculationConditions triangle_conditions(const Triangle& t);

// Procedure table with a call counter around every procedure.
struct CountingProcedures {
  ProcedureTable table;
  std::shared_ptr<std::uint64_t> calls = std::make_shared<std::uint64_t>(0);
};
CountingProcedures counting_geometry_procedures();

// Random acyclic class hierarchies with REAL parameters and internal
// attributes whose procedures mix their inputs.
struct RandomModel {
  Registry registry;
  ProcedureTable procedures;
  std::string root_class;
  std::string target;  // internal attribute of the root class
};
RandomModel random_model(std::mt19937_64& rng, std::size_t max_tree_nodes);

// A random REAL for parameters.
double random_real(std::mt19937_64& rng);

// Values for every parameter leaf of the ground tree of the root class.
CalculationConditions random_conditions(std::mt19937_64& rng, const ProductionTree& ground);

// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace dop::testing
