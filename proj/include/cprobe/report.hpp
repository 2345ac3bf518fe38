#pragma once

#include <string>
#include <vector>

#include "cprobe/evaluator.hpp"
#include "cprobe/pipeline.hpp"

namespace cprobe {

/// One row per address: layer,module,role,P,WSE,ci_low,ci_high.
std::string results_csv(const std::vector<AddressResult>& results);

/// Success rate against layer, one panel per module and one line per token
/// role, with a shaded band of width 1.96 * WSE on each side.
std::string results_svg(const std::vector<AddressResult>& results);

/// Plain-text CK/PK/ND table, per relation then overall.
std::string labels_table(const LabelSummary& summary);

/// label,relation,group,count rows for plotting.
std::string labels_csv(const LabelSummary& summary);

/// Per-address mean and standard deviation across seeds.
std::string sweep_csv(const SweepReport& report);

}  // namespace cprobe
