#pragma once

// Cost-table config files. Line oriented; '#' starts a comment.
//
//   [row <label>]            starts a table row
//   arch = resnet50          resnet50 | resnet101
//   resolution = 224x224     or a single number for square inputs
//   classes = 1000
//   block = gc               none | nl | snl | snl_factored | se | gc | framework
//   variant = e_gaussian     NL only
//   pooling = att            framework only
//   fusion = add             framework only
//   ratio = 16
//   mode = all_blocks        all_blocks | last_block_of_c4
//   stages = c3,c4,c5        all_blocks only
//   position = after_add     after_add | after_1x1
//
// Omitted keys take the defaults shown; block = none is a baseline row.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gcnet/cost_model.hpp"
#include "gcnet/report.hpp"

namespace gcnet {

// Throws FormatError("line N: ...") on malformed input.
std::vector<CostRowSpec> parse_cost_config(std::string_view text);
std::vector<CostRowSpec> load_cost_config(const std::filesystem::path& path);

// Reference cost figures for ResNet-50 at 224x224, matched against a row by
// its configuration (not its label). Adds one check per applicable target.
// Returns false when the row matches no known target.
bool add_reference_checks(RunReport& report, const std::string& key, const CostRowSpec& row);

}  // namespace gcnet
