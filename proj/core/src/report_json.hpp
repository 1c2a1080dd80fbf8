#pragma once

#include <json.hpp>

#include "nnland/descent.hpp"
#include "nnland/experiment.hpp"

namespace nnland::report {

using Json = nlohmann::ordered_json;

Json matrix_json(const Matrix& m);
Json to_json(const AssumptionReport& a);
Json to_json(const MinimizerCertificate& cert, bool include_blocks);
Json to_json(const GDParams& p);
Json to_json(const RCParams& p);
Json to_json(const ConditionReport& r);
Json to_json(const EpsilonSearchResult& s);
Json to_json(const RateFit& f);
Json to_json(const DescentTrace& t);
Json to_json(const ExperimentConfig& c);

}  // namespace nnland::report
