#pragma once

#include "sae/direct_estimation.hpp"
#include "sae/sparsity_gate.hpp"
#include "sae/summaries.hpp"
#include "sae/survey_data.hpp"
#include "sae/unit_model.hpp"

#include <json.hpp>

#include <optional>

namespace sae {

using Json = nlohmann::json;

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

Json to_json(const DirectArea& a);
Json to_json(const DirectEstimates& d);
DirectEstimates direct_from_json(const Json& j);

Json to_json(const ConsistencyCheck& c);
Json to_json(const GateReport& g);
Json to_json(const AreaSummary& s);
Json to_json(const std::vector<AreaSummary>& s);
Json to_json(const ScatterData& s);
Json to_json(const RidgeData& r);
Json to_json(const std::vector<AreaClusterCount>& counts);
Json to_json(const WeightAudit& audit);
Json to_json(const HyperGrid& grid);

// Error payload shared by the service and the CLI.
Json error_json(const std::string& code, const std::string& message);
Json error_json(const ValidationError& e);
Json error_json(const GateRefusal& e);

}  // namespace sae
