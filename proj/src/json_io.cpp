#include "sae/json_io.hpp"

namespace sae {

Json to_json(const DirectArea& a) {
    return Json{{"id", a.id},
                {"p_hat", optional_json(a.p_hat)},
                {"var_p", optional_json(a.var_p)},
                {"logit_var", optional_json(a.logit_var)},
                {"ci_low", optional_json(a.ci_low)},
                {"ci_high", optional_json(a.ci_high)},
                {"flag", to_string(a.flag)},
                {"n_clusters", a.n_clusters},
                {"notes", a.notes}};
}

Json to_json(const DirectEstimates& d) {
    Json areas = Json::array();
    for (const auto& a : d.areas) {
        areas.push_back(to_json(a));
    }
    return Json{{"level", d.level}, {"areas", areas}};
}

namespace {

std::optional<double> opt_real(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

DirectFlag parse_flag(const std::string& s) {
    if (s == "ok") {
        return DirectFlag::ok;
    }
    if (s == "no_data") {
        return DirectFlag::no_data;
    }
    if (s == "low_information") {
        return DirectFlag::low_information;
    }
    throw ValidationError("unknown direct-estimate flag '" + s + "'");
}

}  // namespace

DirectEstimates direct_from_json(const Json& j) {
    DirectEstimates d;
    d.level = j.at("level").get<int>();
    for (const auto& a : j.at("areas")) {
        DirectArea x;
        x.id = a.at("id").get<std::string>();
        x.p_hat = opt_real(a, "p_hat");
        x.var_p = opt_real(a, "var_p");
        x.logit_var = opt_real(a, "logit_var");
        x.ci_low = opt_real(a, "ci_low");
        x.ci_high = opt_real(a, "ci_high");
        x.flag = parse_flag(a.at("flag").get<std::string>());
        x.n_clusters = a.at("n_clusters").get<long>();
        x.notes = a.value("notes", std::vector<std::string>{});
        d.areas.push_back(std::move(x));
    }
    return d;
}

Json to_json(const ConsistencyCheck& c) {
    return Json{{"computed", c.computed},
                {"reference", optional_json(c.reference)},
                {"tolerance", c.tolerance},
                {"status", to_string(c.status)}};
}

Json to_json(const GateReport& g) {
    return Json{{"level", g.level},
                {"n_areas", g.n_areas},
                {"n_no_data", g.n_no_data},
                {"n_low_info", g.n_low_info},
                {"verdicts",
                 {{"direct", to_string(g.direct)},
                  {"area_level", to_string(g.area_level)},
                  {"unit_level", to_string(g.unit_level)}}},
                {"overridable",
                 {{"direct", g.direct == Verdict::warn_overridable},
                  {"area_level", false},
                  {"unit_level", g.unit_level == Verdict::warn_overridable}}},
                {"recommendation", to_string(g.recommendation)},
                {"messages", g.messages},
                {"area_level_excluded", g.area_level_excluded},
                {"message_version", g.message_version}};
}

Json to_json(const AreaSummary& s) {
    return Json{{"area", s.id},
                {"level", s.level},
                {"method", to_string(s.method)},
                {"point", optional_json(s.point)},
                {"ci_low", optional_json(s.ci_low)},
                {"ci_high", optional_json(s.ci_high)},
                {"ci_width", optional_json(s.ci_width)},
                {"sd", optional_json(s.sd)},
                {"cv", optional_json(s.cv)},
                {"exceedance", s.exceedance ? Json{{"p0", *s.exceedance_threshold}, {"probability", *s.exceedance}}
                                            : Json(nullptr)},
                {"flags", s.flags},
                {"seed", optional_json(s.seed)}};
}

Json to_json(const std::vector<AreaSummary>& s) {
    Json out = Json::array();
    for (const auto& x : s) {
        out.push_back(to_json(x));
    }
    return out;
}

Json to_json(const ScatterData& s) {
    Json pts = Json::array();
    for (const auto& p : s.points) {
        pts.push_back({{"area", p.id}, {"a", p.a}, {"b", p.b}});
    }
    return Json{{"level", s.level}, {"stat", s.stat}, {"points", pts}, {"unmatched", s.unmatched}};
}

Json to_json(const RidgeData& r) {
    Json curves = Json::array();
    for (const auto& c : r.curves) {
        curves.push_back({{"area", c.id}, {"median", c.median}, {"bandwidth", c.bandwidth}, {"density", c.density}});
    }
    return Json{{"grid", r.grid}, {"curves", curves}, {"notes", r.notes}};
}

Json to_json(const std::vector<AreaClusterCount>& counts) {
    Json out = Json::array();
    for (const auto& c : counts) {
        out.push_back(
            {{"area", c.id}, {"n_clusters", c.n_clusters}, {"n_trials", c.n_trials}, {"n_successes", c.n_successes}});
    }
    return out;
}

Json to_json(const WeightAudit& audit) {
    Json areas = Json::array();
    for (const auto& a : audit.areas) {
        areas.push_back({{"area", a.id}, {"cv", a.cv}, {"n_clusters", a.n_clusters}, {"flagged", a.flagged}});
    }
    return Json{{"level", audit.level}, {"threshold", audit.threshold}, {"areas", areas}};
}

Json to_json(const HyperGrid& grid) {
    Json axes = Json::array();
    for (auto a : grid.axes) {
        axes.push_back(to_string(a));
    }
    const HyperPoint mean = hyper_posterior_mean(grid);
    return Json{{"axes", axes},
                {"n_points", grid.points.size()},
                {"mode", grid.mode},
                {"sd_minus", grid.sd_minus},
                {"sd_plus", grid.sd_plus},
                {"posterior_mean", {{"sigma", mean.sigma}, {"phi", mean.phi}, {"d", mean.d}}},
                {"warnings", grid.warnings}};
}

Json error_json(const std::string& code, const std::string& message) {
    return Json{{"error", {{"code", code}, {"message", message}}}};
}

Json error_json(const ValidationError& e) {
    Json j = error_json("validation_error", e.what());
    if (e.row() > 0) {
        j["error"]["row"] = e.row();
    }
    if (!e.field().empty()) {
        j["error"]["field"] = e.field();
    }
    return j;
}

Json error_json(const GateRefusal& e) {
    Json j = error_json("gate_refused", e.what());
    j["error"]["method"] = to_string(e.method());
    j["error"]["verdict"] = to_string(e.verdict());
    j["error"]["overridable"] = e.verdict() == Verdict::warn_overridable;
    j["error"]["messages"] = e.messages();
    return j;
}

}  // namespace sae
