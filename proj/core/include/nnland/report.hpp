#pragma once

#include <string>
#include <vector>

#include "nnland/landscape.hpp"

namespace nnland {

inline constexpr int kReportSchemaVersion = 1;

/// Library version, e.g. "0.3.0".
const char* version_tag() noexcept;

/// Sample table: condition,index,scale,qualifies,value,violation. value is
/// the gradient-dominance ratio or the regularity slack.
std::string samples_csv(const std::vector<const ConditionReport*>& reports);

}  // namespace nnland
