#pragma once

// Persistent values keyed by the production tree of a sub-state plus its
// calculation conditions.
//
// On-disk layout:
//   <root>/format                         "dop-store\nformat 1\nhash sha256\n"
//   <root>/objects/<2 hex>/<64 hex>.rec   one record per key
//
// Record (all integers little-endian):
//   0   4   magic "DOPR"
//   4   4   format version (1)
//   8   32  key digest (SHA-256 of the key preimage)
//   40  8   payload length
//   48  32  SHA-256 of the payload
//   80  ..  payload: canonical value encoding (see value.hpp)

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "dop/model.hpp"
#include "dop/value.hpp"

namespace dop {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& digest);

// Parameter values for the leaves of a production tree, keyed by slot path.
class CalculationConditions {
 public:
  void set(const SlotPath& leaf, AttributeValue value);
  const AttributeValue* find(const SlotPath& leaf) const;
  bool erase(const SlotPath& leaf);
  std::size_t size() const { return values_.size(); }
  const std::map<SlotPath, AttributeValue>& values() const { return values_; }

  // Leaves of `tree` without a value, and assigned paths that are not leaves.
  std::vector<SlotPath> missing_for(const ProductionTree& tree) const;
  std::vector<SlotPath> extra_for(const ProductionTree& tree) const;

 private:
  std::map<SlotPath, AttributeValue> values_;
};

struct StateKey {
  Digest digest{};
  std::string preimage;

  std::string hex() const { return to_hex(digest); }
  friend bool operator==(const StateKey& a, const StateKey& b) { return a.digest == b.digest; }
};

// Key of the sub-state held by `node`: the canonical serialization of the
// node's subtree, the node's sub-state and the sorted leaf assignments, all
// relative to the node. Assignments are looked up by the leaves' paths in
// `tree`. Throws MissingParameter listing every unassigned leaf.
StateKey derive_key(const ProductionTree& tree, NodeId node, const CalculationConditions& conditions,
                    std::string_view schema_version);

struct StoreCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t writes = 0;
};

class ValueStore {
 public:
  explicit ValueStore(std::string schema_version) : schema_version_(std::move(schema_version)) {}
  virtual ~ValueStore() = default;
  ValueStore(const ValueStore&) = delete;
  ValueStore& operator=(const ValueStore&) = delete;

  // Encoded value stored under `key`, if any.
  std::optional<std::string> get(const StateKey& key);
  void put(const StateKey& key, std::string_view payload);

  StoreCounters counters() const;
  const std::string& schema_version() const { return schema_version_; }

 protected:
  virtual std::optional<std::string> load(const StateKey& key) = 0;
  virtual void save(const StateKey& key, std::string_view payload) = 0;

 private:
  std::string schema_version_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> writes_{0};
};

class MemoryStore final : public ValueStore {
 public:
  explicit MemoryStore(std::string schema_version = "1") : ValueStore(std::move(schema_version)) {}
  std::size_t size() const;

 protected:
  std::optional<std::string> load(const StateKey& key) override;
  void save(const StateKey& key, std::string_view payload) override;

 private:
  mutable std::mutex mutex_;
  std::map<Digest, std::string> records_;
};

class FileStore final : public ValueStore {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  // Creates the layout when absent. Throws IoFailure or FormatVersionMismatch.
  static std::unique_ptr<FileStore> open(const std::filesystem::path& root,
                                         std::string schema_version);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path record_path(const StateKey& key) const;

 protected:
  std::optional<std::string> load(const StateKey& key) override;
  void save(const StateKey& key, std::string_view payload) override;

 private:
  FileStore(std::filesystem::path root, std::string schema_version)
      : ValueStore(std::move(schema_version)), root_(std::move(root)) {}

  std::filesystem::path root_;
  std::atomic<std::uint64_t> temp_counter_{0};
};

inline std::unique_ptr<FileStore> open_store(const std::filesystem::path& root,
                                             std::string schema_version) {
  return FileStore::open(root, std::move(schema_version));
}

}  // namespace dop
