#include "osslam/factor_graph.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "osslam/error.hpp"

namespace osslam {

int FactorGraph::add_pose(const Pose3& initial) {
  values_.poses.push_back(initial);
  return num_poses() - 1;
}

int FactorGraph::add_landmark(const Point3& initial) {
  if (!initial.allFinite()) throw DataError("landmark initial estimate must be finite");
  values_.landmarks.push_back(initial);
  return num_landmarks() - 1;
}

void FactorGraph::check_ref(const VariableRef& ref) const {
  const int limit = ref.kind == VariableRef::Kind::pose ? num_poses() : num_landmarks();
  if (ref.index < 0 || ref.index >= limit) {
    throw UsageError(std::string("factor references missing ") +
                     (ref.kind == VariableRef::Kind::pose ? "pose " : "landmark ") + std::to_string(ref.index));
  }
}

std::size_t FactorGraph::add_factor(Factor factor) {
  for (const auto& ref : factor_variables(factor)) check_ref(ref);
  if (const auto* b = std::get_if<BetweenFactor>(&factor); b && b->from == b->to) {
    throw UsageError("between factor must connect two distinct poses");
  }
  if (const auto* m = std::get_if<MixtureObservationFactor>(&factor)) {
    if (m->components.empty()) throw UsageError("mixture factor needs at least one component");
    double total = 0.0;
    for (const auto& c : m->components) {
      if (!(c.weight > 0.0)) throw UsageError("mixture weights must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("mixture weights must sum to 1");
  }
  if (const auto* w = std::get_if<WeightedObservationFactor>(&factor)) {
    if (!(w->weight > 0.0 && w->weight <= 1.0)) throw UsageError("observation weight must lie in (0, 1]");
  }
  factors_.push_back(std::move(factor));
  return factors_.size() - 1;
}

void FactorGraph::set_weight(std::size_t factor_index, double weight) {
  auto* w = std::get_if<WeightedObservationFactor>(&factors_.at(factor_index));
  if (!w) throw UsageError("factor is not a weighted observation");
  if (!(weight > 0.0 && weight <= 1.0)) throw UsageError("observation weight must lie in (0, 1]");
  w->weight = weight;
}

void FactorGraph::set_values(Values values) {
  if (values.poses.size() != values_.poses.size() || values.landmarks.size() != values_.landmarks.size()) {
    throw UsageError("replacement values do not match the graph's variables");
  }
  values_ = std::move(values);
}

double FactorGraph::total_error(const Values& values) const {
  double e = 0.0;
  for (const auto& f : factors_) e += factor_error(f, values);
  return e;
}

void FactorGraph::check_well_posed() const {
  // Union-find over all variables; poses first, landmarks after.
  const int n = num_poses() + num_landmarks();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto node = [&](const VariableRef& r) { return r.kind == VariableRef::Kind::pose ? r.index : num_poses() + r.index; };

  std::vector<bool> anchored_pose(num_poses(), false);
  std::vector<bool> observed(num_landmarks(), false);
  for (const auto& f : factors_) {
    if (const auto* p = std::get_if<PriorFactor>(&f)) anchored_pose[p->pose] = true;
    const auto vars = factor_variables(f);
    for (std::size_t i = 1; i < vars.size(); ++i) parent[find(node(vars[i]))] = find(node(vars[0]));
    for (const auto& v : vars) {
      if (v.kind == VariableRef::Kind::landmark) observed[v.index] = true;
    }
  }
  if (num_poses() == 0) throw NumericalError("graph has no pose variables");
  std::vector<bool> anchored_root(n, false);
  bool any_prior = false;
  for (int i = 0; i < num_poses(); ++i) {
    if (anchored_pose[i]) {
      anchored_root[find(i)] = true;
      any_prior = true;
    }
  }
  if (!any_prior) throw NumericalError("underconstrained graph: no pose prior fixes the gauge");
  for (int i = 0; i < n; ++i) {
    if (!anchored_root[find(i)]) {
      throw NumericalError("underconstrained graph: variable " + std::to_string(i) +
                           " is not connected to a prior");
    }
  }
  for (int j = 0; j < num_landmarks(); ++j) {
    if (!observed[j]) throw NumericalError("underconstrained graph: landmark " + std::to_string(j) + " is unobserved");
  }
}

}  // namespace osslam
