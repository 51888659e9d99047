#include "dop/store.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "dop/error.hpp"

namespace dop {

Digest sha256(std::string_view bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size())
    throw Error(ErrorCode::IoFailure, "SHA-256 computation failed");
  return out;
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(digest.size() * 2);
  for (auto b : digest) {
    out += kHex[b >> 4];
    out += kHex[b & 0xf];
  }
  return out;
}

// --- CalculationConditions ------------------------------------------------

void CalculationConditions::set(const SlotPath& leaf, AttributeValue value) {
  values_[leaf] = std::move(value);
}

const AttributeValue* CalculationConditions::find(const SlotPath& leaf) const {
  auto it = values_.find(leaf);
  return it == values_.end() ? nullptr : &it->second;
}

bool CalculationConditions::erase(const SlotPath& leaf) { return values_.erase(leaf) > 0; }

std::vector<SlotPath> CalculationConditions::missing_for(const ProductionTree& tree) const {
  std::vector<SlotPath> out;
  for (const auto& leaf : ground_state_leaves(tree))
    if (!find(leaf)) out.push_back(leaf);
  return out;
}

std::vector<SlotPath> CalculationConditions::extra_for(const ProductionTree& tree) const {
  auto leaves = ground_state_leaves(tree);
  std::set<SlotPath> known(leaves.begin(), leaves.end());
  std::vector<SlotPath> out;
  for (const auto& [path, value] : values_)
    if (!known.count(path)) out.push_back(path);
  return out;
}

// --- keys -----------------------------------------------------------------

StateKey derive_key(const ProductionTree& tree, NodeId node, const CalculationConditions& conditions,
                    std::string_view schema_version) {
  const TreeNode& top = tree.node(node);
  std::map<std::string, std::string> assignments;
  std::vector<std::string> missing;
  for (NodeId id : tree.subtree(node)) {
    const TreeNode& leaf = tree.node(id);
    if (leaf.kind != NodeKind::Parameter) continue;
    const AttributeValue* value = conditions.find(leaf.path);
    if (!value) {
      missing.push_back(leaf.path.str());
      continue;
    }
    std::string encoded = encode_value(*value);
    std::string hex;
    static constexpr char kHex[] = "0123456789abcdef";
    for (unsigned char c : encoded) {
      hex += kHex[c >> 4];
      hex += kHex[c & 0xf];
    }
    assignments[leaf.path.relative_to(top.path).display()] = leaf.class_name + '\t' + hex;
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::MissingParameter, "no value for " + list, missing);
  }

  StateKey key;
  key.preimage = "dop-key v1\nschema ";
  key.preimage += schema_version;
  key.preimage += "\nsubstate ";
  key.preimage += top.substate;
  key.preimage += "\ntree\n";
  key.preimage += tree.serialize_subtree(node);
  key.preimage += "conditions\n";
  for (const auto& [path, value] : assignments) key.preimage += path + '\t' + value + '\n';
  key.preimage += "end\n";
  key.digest = sha256(key.preimage);
  return key;
}

// --- ValueStore -----------------------------------------------------------

std::optional<std::string> ValueStore::get(const StateKey& key) {
  auto found = load(key);
  (found ? hits_ : misses_).fetch_add(1, std::memory_order_relaxed);
  return found;
}

void ValueStore::put(const StateKey& key, std::string_view payload) {
  save(key, payload);
  writes_.fetch_add(1, std::memory_order_relaxed);
}

StoreCounters ValueStore::counters() const {
  return StoreCounters{hits_.load(), misses_.load(), writes_.load()};
}

std::size_t MemoryStore::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::optional<std::string> MemoryStore::load(const StateKey& key) {
  std::lock_guard lock(mutex_);
  auto it = records_.find(key.digest);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

void MemoryStore::save(const StateKey& key, std::string_view payload) {
  std::lock_guard lock(mutex_);
  records_[key.digest] = std::string(payload);
}

// --- FileStore ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'O', 'P', 'R'};
constexpr std::size_t kHeaderSize = 80;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return v;
}

std::string format_text() {
  return "dop-store\nformat " + std::to_string(FileStore::kFormatVersion) + "\nhash sha256\n";
}

}  // namespace

std::unique_ptr<FileStore> FileStore::open(const std::filesystem::path& root,
                                           std::string schema_version) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root / "objects", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create store at '" + root.string() + "': " + ec.message());

  auto format_file = root / "format";
  if (fs::exists(format_file)) {
    std::ifstream in(format_file);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read '" + format_file.string() + "'");
    std::string line;
    std::optional<long> version;
    while (std::getline(in, line))
      if (line.rfind("format ", 0) == 0) version = std::strtol(line.c_str() + 7, nullptr, 10);
    if (!version)
      throw Error(ErrorCode::FormatVersionMismatch,
                  "'" + format_file.string() + "' does not declare a format version");
    if (*version != static_cast<long>(kFormatVersion))
      throw Error(ErrorCode::FormatVersionMismatch,
                  "store format " + std::to_string(*version) + " is not supported (expected " +
                      std::to_string(kFormatVersion) + ")");
  } else {
    std::ofstream out(format_file, std::ios::binary | std::ios::trunc);
    out << format_text();
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write '" + format_file.string() + "'");
  }
  return std::unique_ptr<FileStore>(new FileStore(root, std::move(schema_version)));
}

std::filesystem::path FileStore::record_path(const StateKey& key) const {
  auto hex = key.hex();
  return root_ / "objects" / hex.substr(0, 2) / (hex + ".rec");
}

std::optional<std::string> FileStore::load(const StateKey& key) {
  auto path = record_path(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    throw Error(ErrorCode::IoFailure, "cannot read '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string record = buf.str();

  auto corrupt = [&](const std::string& why) {
    return Error(ErrorCode::StorageCorrupt, "record '" + path.string() + "': " + why);
  };
  if (record.size() < kHeaderSize) throw corrupt("truncated header");
  if (std::memcmp(record.data(), kMagic, 4) != 0) throw corrupt("bad magic");
  if (get_le(record, 4, 4) != kFormatVersion) throw corrupt("unsupported record version");
  if (std::memcmp(record.data() + 8, key.digest.data(), 32) != 0) throw corrupt("digest mismatch");
  auto length = get_le(record, 40, 8);
  if (length != record.size() - kHeaderSize) throw corrupt("payload length mismatch");
  std::string payload = record.substr(kHeaderSize);
  Digest check = sha256(payload);
  if (std::memcmp(record.data() + 48, check.data(), 32) != 0) throw corrupt("checksum mismatch");
  return payload;
}

void FileStore::save(const StateKey& key, std::string_view payload) {
  namespace fs = std::filesystem;
  auto final_path = record_path(key);
  std::error_code ec;
  fs::create_directories(final_path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create '" + final_path.parent_path().string() + "'");

  std::string record(kMagic, 4);
  put_le(record, kFormatVersion, 4);
  record.append(reinterpret_cast<const char*>(key.digest.data()), key.digest.size());
  put_le(record, payload.size(), 8);
  Digest check = sha256(payload);
  record.append(reinterpret_cast<const char*>(check.data()), check.size());
  record.append(payload);

  auto temp = final_path.parent_path() /
              (".tmp-" + key.hex() + "-" + std::to_string(::getpid()) + "-" +
               std::to_string(temp_counter_.fetch_add(1)));
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
    out.flush();
    if (!out) {
      fs::remove(temp, ec);
      throw Error(ErrorCode::IoFailure, "cannot write '" + temp.string() + "'");
    }
  }
  fs::rename(temp, final_path, ec);
  if (ec) {
    fs::remove(temp, ec);
    throw Error(ErrorCode::IoFailure, "cannot publish '" + final_path.string() + "'");
  }
}

}  // namespace dop
