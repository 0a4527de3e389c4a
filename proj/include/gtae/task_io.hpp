// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON formats: task collections, score tables, subset plans, model
// parameters and cluster assignments.

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtae/affinity.hpp"
#include "gtae/cluster.hpp"
#include "gtae/error.hpp"
#include "gtae/models.hpp"

namespace gtae {

using Json = nlohmann::ordered_json;

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw InvalidArgument(what + ": " + e.what());
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// Task collections. Binary labels are 0/1 on disk and -1/+1 in memory.

namespace detail {

template <typename F>
auto guarded(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const Json::exception& e) {
    throw InvalidArgument(what + ": " + e.what());
  }
}

inline bool binary(const TaskCollection& tasks) { return tasks.num_classes == 2; }

}  // namespace detail

inline TaskCollection tasks_from_json(const Json& j) {
  return detail::guarded("task collection", [&] {
    TaskCollection tasks;
    tasks.input_dim = j.at("input_dim").get<std::size_t>();
    tasks.num_classes = j.value("num_classes", std::size_t{2});
    for (const auto& jt : j.at("tasks")) {
      TaskData task;
      task.id = jt.at("id").get<int>();
      for (auto [name, split] : {std::pair{"train", &task.train}, {"val", &task.val}, {"test", &task.test}}) {
        if (!jt.contains(name)) continue;
        const auto& js = jt.at(name);
        const auto& xs = js.at("x");
        const auto& ys = js.at("y");
        require(xs.size() == ys.size(), "task collection: x and y lengths differ in task " + std::to_string(task.id));
        for (std::size_t i = 0; i < xs.size(); ++i) {
          Sample s;
          s.x = xs[i].get<Vector>();
          const double y = ys[i].get<double>();
          if (detail::binary(tasks)) {
            require(y == 0.0 || y == 1.0, "task collection: binary labels must be 0 or 1");
            s.y = y == 1.0 ? 1.0 : -1.0;
          } else {
            s.y = y;
          }
          split->push_back(std::move(s));
        }
      }
      tasks.tasks.push_back(std::move(task));
    }
    tasks.validate();
    return tasks;
  });
}

inline Json to_json(const TaskCollection& tasks) {
  Json j;
  j["input_dim"] = tasks.input_dim;
  if (!detail::binary(tasks)) j["num_classes"] = tasks.num_classes;
  j["tasks"] = Json::array();
  for (const auto& task : tasks.tasks) {
    Json jt;
    jt["id"] = task.id;
    for (auto [name, split] : {std::pair{"train", &task.train}, {"val", &task.val}, {"test", &task.test}}) {
      Json xs = Json::array(), ys = Json::array();
      for (const auto& s : *split) {
        xs.push_back(s.x);
        if (detail::binary(tasks))
          ys.push_back(s.y > 0.0 ? 1 : 0);
        else
          ys.push_back(s.y);
      }
      jt[name] = {{"x", xs}, {"y", ys}};
    }
    j["tasks"].push_back(std::move(jt));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Score tables: an array of {subset: [ids], task: id, score} records, subsets
// in plan order and tasks in subset order.

inline Json to_json(const ScoreTable& table, const std::vector<int>& ids) {
  Json j = Json::array();
  for (std::size_t s = 0; s < table.subsets.size(); ++s) {
    Json subset = Json::array();
    for (std::size_t t : table.subsets[s]) subset.push_back(ids.at(t));
    for (std::size_t t : table.subsets[s]) {
      if (!table.contains(s, t)) continue;
      j.push_back({{"subset", subset}, {"task", ids.at(t)}, {"score", table.at(s, t)}});
    }
  }
  return j;
}

inline ScoreTable score_table_from_json(const Json& j, const TaskCollection& tasks, Provenance provenance) {
  return detail::guarded("score table", [&] {
    ScoreTable table;
    table.provenance = provenance;
    for (const auto& rec : j) {
      TaskSubset subset;
      for (const auto& id : rec.at("subset")) subset.push_back(tasks.index_of(id.get<int>()));
      std::sort(subset.begin(), subset.end());
      validate_subset(subset, tasks.size());
      // Consecutive records of one subset belong together; a repeat after a
      // different subset starts a new plan entry.
      if (table.subsets.empty() || table.subsets.back() != subset ||
          table.contains(table.subsets.size() - 1, tasks.index_of(rec.at("task").get<int>())))
        table.subsets.push_back(subset);
      table.set(table.subsets.size() - 1, tasks.index_of(rec.at("task").get<int>()), rec.at("score").get<double>());
    }
    return table;
  });
}

// ---------------------------------------------------------------------------
// Subset plans

inline Json to_json(const SubsetPlan& plan, const std::vector<int>& ids) {
  Json subsets = Json::array();
  for (const auto& s : plan.subsets) {
    Json js = Json::array();
    for (std::size_t t : s) js.push_back(ids.at(t));
    subsets.push_back(std::move(js));
  }
  return {{"n", plan.n}, {"alpha", plan.alpha}, {"seed", plan.seed}, {"subsets", subsets}};
}

inline SubsetPlan plan_from_json(const Json& j, const TaskCollection& tasks) {
  return detail::guarded("subset plan", [&] {
    SubsetPlan plan;
    plan.n = j.at("n").get<std::size_t>();
    require(plan.n == tasks.size(), "subset plan: task count does not match the collection");
    plan.alpha = j.at("alpha").get<std::size_t>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& js : j.at("subsets")) {
      TaskSubset s;
      for (const auto& id : js) s.push_back(tasks.index_of(id.get<int>()));
      std::sort(s.begin(), s.end());
      plan.subsets.push_back(std::move(s));
    }
    plan.validate();
    return plan;
  });
}

// ---------------------------------------------------------------------------
// Model parameters

inline std::string to_string(ArchKind k) { return k == ArchKind::linear ? "linear" : "mlp1"; }

inline ArchKind arch_from_string(const std::string& s) {
  if (s == "linear") return ArchKind::linear;
  if (s == "mlp1") return ArchKind::mlp1;
  throw InvalidArgument("unknown architecture '" + s + "' (expected linear or mlp1)");
}

inline Json to_json(const ModelParams& m) {
  return {{"arch", to_string(m.spec.kind)},
          {"input_dim", m.spec.input_dim},
          {"hidden_dim", m.spec.hidden_dim},
          {"num_classes", m.spec.num_classes},
          {"theta", m.theta}};
}

inline ModelParams model_from_json(const Json& j) {
  return detail::guarded("model", [&] {
    ModelParams m;
    m.spec.kind = arch_from_string(j.at("arch").get<std::string>());
    m.spec.input_dim = j.at("input_dim").get<std::size_t>();
    m.spec.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    m.spec.num_classes = j.at("num_classes").get<std::size_t>();
    m.spec.validate();
    m.theta = j.at("theta").get<Vector>();
    require(m.theta.size() == m.spec.parameter_count(), "model: parameter count does not match the architecture");
    return m;
  });
}

// ---------------------------------------------------------------------------
// Cluster assignments: {"0": [ids], "1": [ids], ...} in canonical order.

inline Json to_json(const ClusterAssignment& a, const std::vector<int>& ids) {
  Json j = Json::object();
  for (std::size_t c = 0; c < a.k(); ++c) {
    Json members = Json::array();
    for (std::size_t t : a.clusters()[c]) members.push_back(ids.at(t));
    j[std::to_string(c)] = std::move(members);
  }
  return j;
}

inline ClusterAssignment assignment_from_json(const Json& j, const std::vector<int>& ids) {
  return detail::guarded("assignment", [&] {
    std::vector<std::vector<std::size_t>> clusters;
    for (const auto& [key, members] : j.items()) {
      std::vector<std::size_t> c;
      for (const auto& id : members) {
        const auto it = std::find(ids.begin(), ids.end(), id.get<int>());
        require(it != ids.end(), "assignment: unknown task id " + std::to_string(id.get<int>()));
        c.push_back(static_cast<std::size_t>(it - ids.begin()));
      }
      clusters.push_back(std::move(c));
    }
    return ClusterAssignment(ids.size(), std::move(clusters));
  });
}

/// Ids mentioned in an assignment, ascending.
inline std::vector<int> assignment_ids(const Json& j) {
  std::vector<int> ids;
  for (const auto& [key, members] : j.items())
    for (const auto& id : members) ids.push_back(id.get<int>());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace gtae
