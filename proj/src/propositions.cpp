#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

#include "bvae/sweep.hpp"

namespace bvae {

namespace {

CheckOutcome non_increasing(const std::vector<SweepRecord>& rows, double SweepRecord::*column, double slack,
                            const char* name) {
    CheckOutcome c;
    c.pass = true;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double prev = rows[i - 1].*column;
        const double cur = rows[i].*column;
        // NaN fails the comparison on purpose.
        if (!(cur <= prev + slack)) {
            c.pass = false;
            c.offending = std::make_pair(rows[i - 1].beta, rows[i].beta);
            c.detail = std::string(name) + " rises from " + format_double(prev) + " to " + format_double(cur);
            return c;
        }
    }
    c.detail = std::string(name) + " non-increasing in beta";
    return c;
}

// Passes when beta = 1 attains the extremum of `column` to within slack.
CheckOutcome extremum_at_one(const std::vector<SweepRecord>& rows, std::size_t one, double SweepRecord::*column,
                             bool maximum, double slack, const char* name) {
    CheckOutcome c;
    c.pass = true;
    const double at_one = rows[one].*column;
    for (const auto& r : rows) {
        const double v = r.*column;
        const bool ok = maximum ? (at_one >= v - slack) : (at_one <= v + slack);
        if (!ok) {
            c.pass = false;
            c.offending = std::make_pair(r.beta, 1.0);
            c.detail = std::string(name) + " at beta=" + format_double(r.beta) + " (" + format_double(v) +
                       ") beats beta=1 (" + format_double(at_one) + ")";
            return c;
        }
    }
    c.detail = std::string(name) + (maximum ? " maximized" : " minimized") + " at beta=1";
    return c;
}

CheckOutcome not_applicable(const char* why) {
    CheckOutcome c;
    c.applicable = false;
    c.pass = true;
    c.detail = why;
    return c;
}

nlohmann::json outcome_json(const CheckOutcome& c) {
    nlohmann::json j{{"applicable", c.applicable}, {"pass", c.pass}, {"detail", c.detail}};
    j["offending_betas"] = c.offending ? nlohmann::json{c.offending->first, c.offending->second} : nlohmann::json();
    return j;
}

}  // namespace

bool PropositionReport::all_pass() const {
    for (const auto* c : {&prop1, &prop2_kl, &prop2_recon, &prop3, &tie_interior_min, &fixed_decoder_mie_min_at_1}) {
        if (c->applicable && !c->pass) return false;
    }
    return true;
}

PropositionReport check_propositions(std::vector<SweepRecord> best, bool freeze_decoder, double slack) {
    std::sort(best.begin(), best.end(), [](const SweepRecord& a, const SweepRecord& b) { return a.beta < b.beta; });
    if (best.size() < 3) {
        throw std::invalid_argument("check_propositions: need at least 3 beta grid points");
    }
    for (std::size_t i = 1; i < best.size(); ++i) {
        if (best[i].beta == best[i - 1].beta) {
            throw std::invalid_argument("check_propositions: expected one best row per beta");
        }
    }
    const auto one = std::find_if(best.begin(), best.end(), [](const SweepRecord& r) { return r.beta == 1.0; });
    if (one == best.end()) {
        throw std::invalid_argument("check_propositions: beta grid must contain 1");
    }
    const auto i_one = static_cast<std::size_t>(one - best.begin());

    PropositionReport rep;
    rep.prop1 = non_increasing(best, &SweepRecord::objective_paper, slack, "objective_paper");
    rep.prop2_kl = non_increasing(best, &SweepRecord::cond_indep_loss, slack, "cond_indep_loss");
    rep.prop2_recon = non_increasing(best, &SweepRecord::reconstruction, slack, "reconstruction");
    rep.prop3 = extremum_at_one(best, i_one, &SweepRecord::elbo, true, slack, "elbo");

    if (freeze_decoder) {
        rep.tie_interior_min = not_applicable("decoder frozen; the interior-minimum claim concerns trained decoders");
        rep.fixed_decoder_mie_min_at_1 = extremum_at_one(best, i_one, &SweepRecord::mie, false, slack, "mie");
    } else {
        rep.fixed_decoder_mie_min_at_1 = not_applicable("decoder trained");
        CheckOutcome& c = rep.tie_interior_min;
        std::size_t arg = 0;
        bool finite = std::isfinite(best[0].tie);
        for (std::size_t i = 1; i < best.size(); ++i) {
            finite = finite && std::isfinite(best[i].tie);
            if (best[i].tie < best[arg].tie) arg = i;
        }
        c.pass = finite && arg > 0 && arg + 1 < best.size();
        if (!finite) {
            c.detail = "tie undefined (NaN) on some best row";
        } else {
            c.detail = "tie argmin at beta=" + format_double(best[arg].beta) + " (" + format_double(best[arg].tie) +
                       "); tie at beta=1 is " + format_double(best[i_one].tie);
        }
        if (!c.pass) {
            c.offending = std::make_pair(best.front().beta, best.back().beta);
        }
    }
    return rep;
}

std::string report_to_json(const PropositionReport& report, const std::vector<Envelope>& env) {
    nlohmann::json j;
    j["prop1_pass"] = outcome_json(report.prop1);
    j["prop2_kl_pass"] = outcome_json(report.prop2_kl);
    j["prop2_recon_pass"] = outcome_json(report.prop2_recon);
    j["prop3_pass"] = outcome_json(report.prop3);
    j["tie_interior_min"] = outcome_json(report.tie_interior_min);
    j["fixed_decoder_mie_min_at_1"] = outcome_json(report.fixed_decoder_mie_min_at_1);
    j["all_pass"] = report.all_pass();
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : env) {
        nlohmann::json row{{"beta", e.beta}};
        for (std::size_t i = 0; i < e.ranges.size(); ++i) {
            row[envelope_columns()[i]] = {{"min", e.ranges[i].first}, {"max", e.ranges[i].second}};
        }
        rows.push_back(row);
    }
    j["restart_envelopes"] = rows;
    return j.dump(2);
}

}  // namespace bvae
