#include "dop/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "dop/error.hpp"

namespace dop {

// --- cost model -----------------------------------------------------------

namespace {

void check_cost(const Cost& c, std::string_view what) {
  for (double v : {c.cpu_seconds, c.memory_bytes, c.disk_bytes})
    if (!std::isfinite(v) || v < 0)
      throw Error(ErrorCode::InvalidInput,
                  "cost of '" + std::string(what) + "' must be finite and non-negative");
}

}  // namespace

void CostModel::set(std::string class_substate, Cost cost) {
  check_cost(cost, class_substate);
  entries_[std::move(class_substate)] = cost;
}

void CostModel::set_default(Cost cost) {
  check_cost(cost, "default");
  default_ = cost;
}

const Cost& CostModel::cost_of(const TreeNode& node) const {
  auto it = entries_.find(node.class_name + "." + node.substate);
  return it == entries_.end() ? default_ : it->second;
}

CostModel parse_cost_text(std::string_view text, std::string_view origin) {
  CostModel model;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key)) continue;
    auto where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    Cost c;
    std::string extra;
    if (!(fields >> c.cpu_seconds >> c.memory_bytes >> c.disk_bytes) || (fields >> extra))
      throw Error(ErrorCode::InvalidInput,
                  where + "expected 'CLASS.substate cpu mem disk' or 'default cpu mem disk'");
    if (key != "default" && (key.find('.') == std::string::npos || key.front() == '.' ||
                             key.back() == '.'))
      throw Error(ErrorCode::InvalidInput, where + "'" + key + "' is not CLASS.substate");
    if (!seen.insert(key).second)
      throw Error(ErrorCode::InvalidInput, where + "duplicate entry '" + key + "'");
    try {
      if (key == "default") model.set_default(c);
      else model.set(key, c);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidInput, where + e.message());
    }
  }
  return model;
}

CostModel read_cost_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot read cost file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cost_text(buf.str(), path.string());
}

// --- workflow -------------------------------------------------------------

WorkflowReport simulate_workflow(const ProductionTree& tree, const CostModel& model) {
  WorkflowReport report;
  report.node_costs.reserve(tree.size());
  std::vector<double> chain(tree.size(), 0.0);
  for (NodeId id = 0; id < tree.size(); ++id) {
    const TreeNode& n = tree.node(id);
    const Cost& c = model.cost_of(n);
    report.node_costs.push_back(c);
    report.total.cpu_seconds += c.cpu_seconds;
    report.total.memory_bytes += c.memory_bytes;
    report.total.disk_bytes += c.disk_bytes;
    // pre-order: the parent's chain is known
    chain[id] = c.cpu_seconds + (n.parent ? chain[*n.parent] : 0.0);
    report.critical_path_cpu = std::max(report.critical_path_cpu, chain[id]);
  }
  return report;
}

// --- scheduling -----------------------------------------------------------

Schedule list_schedule(const ProductionTree& tree, const CostModel& model, std::size_t workers) {
  if (workers == 0) throw Error(ErrorCode::InvalidInput, "at least one worker is required");
  Schedule schedule;
  schedule.workers = workers;
  const std::size_t n = tree.size();
  if (n == 0) return schedule;

  std::vector<double> cpu(n), priority(n);
  std::vector<std::size_t> pending(n);
  for (NodeId id = 0; id < n; ++id) {
    const TreeNode& node = tree.node(id);
    cpu[id] = model.cost_of(node).cpu_seconds;
    priority[id] = cpu[id] + (node.parent ? priority[*node.parent] : 0.0);
    pending[id] = node.children.size();
  }

  auto before = [&](NodeId a, NodeId b) {
    if (priority[a] != priority[b]) return priority[a] > priority[b];
    return tree.node(a).path < tree.node(b).path;
  };
  std::set<NodeId, decltype(before)> ready(before);
  for (NodeId id = 0; id < n; ++id)
    if (pending[id] == 0) ready.insert(id);

  using Running = std::pair<double, NodeId>;  // end time, node
  std::priority_queue<Running, std::vector<Running>, std::greater<>> running;
  std::vector<std::size_t> worker_of(n);
  std::set<std::size_t> idle;
  for (std::size_t w = 0; w < workers; ++w) idle.insert(w);

  double now = 0;
  std::size_t finished = 0;
  while (finished < n) {
    while (!ready.empty() && !idle.empty()) {
      NodeId id = *ready.begin();
      ready.erase(ready.begin());
      std::size_t w = *idle.begin();
      idle.erase(idle.begin());
      worker_of[id] = w;
      schedule.assignments.push_back(Assignment{id, w, now, now + cpu[id]});
      running.emplace(now + cpu[id], id);
    }
    if (running.empty()) break;  // unreachable for a well-formed tree
    now = running.top().first;
    while (!running.empty() && running.top().first == now) {
      NodeId id = running.top().second;
      running.pop();
      ++finished;
      idle.insert(worker_of[id]);
      schedule.makespan = std::max(schedule.makespan, now);
      if (auto parent = tree.node(id).parent; parent && --pending[*parent] == 0)
        ready.insert(*parent);
    }
  }
  return schedule;
}

Schedule schedule_builds(const ProductionTree& tree, const CostModel& model, std::size_t workers) {
  if (workers == 0) throw Error(ErrorCode::InvalidInput, "at least one worker is required");
  Schedule best = list_schedule(tree, model, 1);
  for (std::size_t k = 2; k <= std::min(workers, std::max<std::size_t>(tree.size(), 1)); ++k) {
    Schedule s = list_schedule(tree, model, k);
    if (s.makespan < best.makespan) best = std::move(s);
  }
  best.workers = workers;
  return best;
}

std::vector<std::string> validate_schedule(const ProductionTree& tree, const CostModel& model,
                                           const Schedule& schedule) {
  std::vector<std::string> problems;
  std::vector<const Assignment*> of(tree.size(), nullptr);
  for (const auto& a : schedule.assignments) {
    if (a.node >= tree.size()) {
      problems.push_back("assignment of unknown node " + std::to_string(a.node));
      continue;
    }
    std::string name = tree.node(a.node).path.display();
    if (of[a.node]) problems.push_back(name + " is scheduled twice");
    of[a.node] = &a;
    if (a.worker >= schedule.workers) problems.push_back(name + " runs on a worker out of range");
    double cpu = model.cost_of(tree.node(a.node)).cpu_seconds;
    if (std::abs(a.end - a.start - cpu) > 1e-9 * std::max(1.0, a.end) || a.start < 0)
      problems.push_back(name + " has a wrong duration");
    if (a.end > schedule.makespan) problems.push_back(name + " ends after the makespan");
  }
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (!of[id]) {
      problems.push_back(tree.node(id).path.display() + " is not scheduled");
      continue;
    }
    for (NodeId c : tree.node(id).children)
      if (of[c] && of[c]->end > of[id]->start)
        problems.push_back(tree.node(id).path.display() + " starts before " +
                           tree.node(c).path.display() + " ends");
  }
  std::map<std::size_t, std::vector<const Assignment*>> by_worker;
  for (const auto& a : schedule.assignments) by_worker[a.worker].push_back(&a);
  for (auto& [w, list] : by_worker) {
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) {
      return a->start != b->start ? a->start < b->start : a->end < b->end;
    });
    for (std::size_t i = 1; i < list.size(); ++i)
      if (list[i]->start < list[i - 1]->end)
        problems.push_back("worker " + std::to_string(w) + " runs two builds at once");
  }
  return problems;
}

// --- replay ---------------------------------------------------------------

std::vector<TraceRecord> parse_trace_text(std::string_view text) {
  std::vector<TraceRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    try {
      out.push_back(parse_trace_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedTrace, "line " + std::to_string(line_no) + ": " + e.message());
    }
  }
  return out;
}

ObservedSchedule replay_trace(const std::vector<TraceRecord>& trace) {
  ObservedSchedule out;
  std::vector<std::size_t> open;
  std::optional<std::uint64_t> last;
  for (const auto& r : trace) {
    if (last && r.timestamp <= *last)
      throw Error(ErrorCode::MalformedTrace,
                  "timestamp " + std::to_string(r.timestamp) + " does not increase");
    last = r.timestamp;
    switch (r.event) {
      case TraceEvent::BuildStart: {
        ObservedBuild b{r.slot_path, r.substate, r.timestamp, 0, open.size(), std::nullopt};
        if (!open.empty()) b.enclosing = open.back();
        open.push_back(out.builds.size());
        out.builds.push_back(std::move(b));
        break;
      }
      case TraceEvent::BuildEnd: {
        if (open.empty())
          throw Error(ErrorCode::MalformedTrace, "build_end of " + r.slot_path + " " + r.substate +
                                                     " without a matching build_start");
        ObservedBuild& b = out.builds[open.back()];
        if (b.slot_path != r.slot_path || b.substate != r.substate)
          throw Error(ErrorCode::MalformedTrace, "build_end of " + r.slot_path + " " + r.substate +
                                                     " closes build of " + b.slot_path + " " +
                                                     b.substate);
        b.end = r.timestamp;
        open.pop_back();
        break;
      }
      case TraceEvent::StoreHit: ++out.store_hits; break;
      case TraceEvent::StoreMiss: ++out.store_misses; break;
      case TraceEvent::Invalidate: ++out.invalidations; break;
    }
  }
  if (!open.empty()) {
    const auto& b = out.builds[open.back()];
    throw Error(ErrorCode::MalformedTrace,
                "build_start of " + b.slot_path + " " + b.substate + " is never closed");
  }
  return out;
}

ReplayComparison compare_replay(const ProductionTree& tree, const Registry& registry,
                                const std::vector<TraceRecord>& trace,
                                const ObservedSchedule& observed) {
  ReplayComparison out;
  std::set<std::pair<std::string, std::string>> predicted;
  std::set<std::string> objects;
  for (const auto& n : tree.nodes()) {
    if (n.kind == NodeKind::Parameter) continue;
    objects.insert(n.path.display());
    const ClassSchema* cls = registry.find(n.class_name);
    const AttributeDecl* attr = cls ? cls->find(n.substate) : nullptr;
    if (attr && attr->is_internal()) {
      predicted.emplace(n.path.display(), n.substate);
      out.predicted.push_back(n.path.display() + " " + n.substate);
    }
  }
  std::set<std::pair<std::string, std::string>> provided;
  for (const auto& b : observed.builds) provided.emplace(b.slot_path, b.substate);
  for (const auto& r : trace)
    if (r.event == TraceEvent::StoreHit) provided.emplace(r.slot_path, r.substate);
  for (const auto& p : predicted)
    if (!provided.count(p)) out.missing.push_back(p.first + " " + p.second);
  std::set<std::string> reported;
  for (const auto& b : observed.builds)
    if (!objects.count(b.slot_path) && reported.insert(b.slot_path).second)
      out.unexpected.push_back(b.slot_path);
  return out;
}

}  // namespace dop
