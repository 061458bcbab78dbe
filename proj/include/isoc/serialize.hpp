#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "isoc/cost_model.hpp"
#include "isoc/dynamics.hpp"
#include "isoc/forward_solver.hpp"
#include "isoc/gap_functional.hpp"
#include "isoc/inverse_solver.hpp"
#include "isoc/transport.hpp"

namespace isoc {

using ordered_json = nlohmann::ordered_json;

// flow-v1: trajectory batches and empirical flows share the schema tag
ordered_json batch_to_json(const trajectory_batch& batch);
trajectory_batch batch_from_json(const ordered_json& j);
ordered_json flow_to_json(const empirical_flow& flow);
empirical_flow flow_from_json(const ordered_json& j);

// cost-v1: rbf terms as arrays [w, at, ax, au, t0, x0, u0]
ordered_json pair_to_json(const cost_pair& pair);
cost_pair pair_from_json(const ordered_json& j);
ordered_json class_to_json(const cost_class_d& klass);
cost_class_d class_from_json(const ordered_json& j);

// grid-v1: metadata json + node values csv
ordered_json value_grid_meta(const value_grid& vg);
std::string value_grid_csv(const value_grid& vg);

ordered_json gap_report_to_json(const gap_report& rep);

// one row per candidate
std::string inverse_table_csv(const inverse_result& res);
ordered_json inverse_summary_json(const inverse_result& res, const std::string& solver_tag);

std::string coupling_csv(const bridge_solution& bridge);
std::string curve_csv(const penalized_curve& curve);
ordered_json curve_to_json(const penalized_curve& curve);
ordered_json equivalence_to_json(const equivalence_report& rep);

// per-bin flow moments for plotting: t, w_sum, mean_x, var_x, mean_u, var_u
std::string flow_moments_csv(const empirical_flow& flow);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace isoc
