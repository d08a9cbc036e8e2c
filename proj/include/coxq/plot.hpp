#pragma once

#include <string>
#include <vector>

#include "coxq/metrics.hpp"

namespace coxq {

/// Renders one SVG line chart. Non-finite values leave gaps in the polyline;
/// `reference` (if finite) draws a dashed horizontal rule. Output bytes are a
/// pure function of the inputs.
std::string render_line_chart(const std::vector<double>& xs, const std::vector<double>& ys,
                              const std::string& title, const std::string& y_label,
                              double reference);

/// Writes the standard chart set (return, training cost, eval return/cost,
/// estimation bias, conflict ratio, lambda, delta) into out_dir; the cost
/// charts carry the episode-cost-limit reference line.
std::vector<std::string> emit_plots(const std::vector<MetricsRecord>& records,
                                    const std::string& out_dir, double cost_limit);

}  // namespace coxq
