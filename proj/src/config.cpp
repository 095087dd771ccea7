#include "smallgain/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "smallgain/errors.hpp"

namespace smallgain {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw SpecError("config " + where + ": " + what);
}

const json* find(const json& o, const char* key) {
    auto it = o.find(key);
    return it == o.end() ? nullptr : &*it;
}

const json& need(const json& o, const char* key, const std::string& where) {
    const json* v = find(o, key);
    if (!v) fail(where, std::string("missing key '") + key + "'");
    return *v;
}

void check_keys(const json& o, std::initializer_list<const char*> allowed,
                const std::string& where) {
    if (!o.is_object()) fail(where, "expected an object");
    for (const auto& [k, v] : o.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || k == a;
        if (!known) fail(where, "unknown key '" + k + "'");
    }
}

double num(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where, "expected a number");
    return v.get<double>();
}

double num_or(const json& o, const char* key, double dflt,
              const std::string& where) {
    const json* v = find(o, key);
    return v ? num(*v, where + "." + key) : dflt;
}

long long integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) fail(where, "expected an integer");
    return v.get<long long>();
}

std::size_t unsigned_int(const json& v, const std::string& where) {
    const long long n = integer(v, where);
    if (n < 0) fail(where, "expected a nonnegative integer");
    return static_cast<std::size_t>(n);
}

std::size_t unsigned_or(const json& o, const char* key, std::size_t dflt,
                        const std::string& where) {
    const json* v = find(o, key);
    return v ? unsigned_int(*v, where + "." + key) : dflt;
}

bool flag_or(const json& o, const char* key, bool dflt,
             const std::string& where) {
    const json* v = find(o, key);
    if (!v) return dflt;
    if (!v->is_boolean()) fail(where + "." + key, "expected a boolean");
    return v->get<bool>();
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) fail(where, "expected a string");
    return v.get<std::string>();
}

std::vector<double> number_list(const json& v, const std::string& where) {
    if (!v.is_array()) fail(where, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        out.push_back(num(v[k], where + "[" + std::to_string(k) + "]"));
    return out;
}

Eigen::VectorXd evec(const json& v, const std::string& where) {
    const std::vector<double> raw = number_list(v, where);
    Eigen::VectorXd out(static_cast<Eigen::Index>(raw.size()));
    for (std::size_t k = 0; k < raw.size(); ++k)
        out[static_cast<Eigen::Index>(k)] = raw[k];
    return out;
}

Eigen::MatrixXd mat(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty())
        fail(where, "expected a nonempty array of rows");
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < v.size(); ++r)
        rows.push_back(
            number_list(v[r], where + "[" + std::to_string(r) + "]"));
    for (const auto& row : rows)
        if (row.size() != rows.front().size() || row.empty())
            fail(where, "rows must be nonempty and equally sized");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows.front().size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rows[r][c];
    return out;
}

GainSpec parse_gain(const json& j, const std::string& where) {
    check_keys(j, {"lambda", "gamma", "gamma_u", "bounds"}, where);

    const json& jl = need(j, "lambda", where);
    check_keys(jl, {"prefix", "tail"}, where + ".lambda");
    std::vector<double> lam_prefix;
    if (const json* p = find(jl, "prefix"))
        lam_prefix = number_list(*p, where + ".lambda.prefix");
    const double lam_tail = num(need(jl, "tail", where + ".lambda"),
                                where + ".lambda.tail");

    std::vector<GainSpec::Row> rows;
    ToeplitzTail tail;
    if (const json* jg = find(j, "gamma")) {
        check_keys(*jg, {"rows", "tail"}, where + ".gamma");
        if (const json* jr = find(*jg, "rows")) {
            const std::string rw = where + ".gamma.rows";
            if (!jr->is_array()) fail(rw, "expected an array");
            for (std::size_t r = 0; r < jr->size(); ++r) {
                const json& row = (*jr)[r];
                const std::string rloc = rw + "[" + std::to_string(r) + "]";
                if (!row.is_array()) fail(rloc, "expected an array of pairs");
                GainSpec::Row parsed;
                for (std::size_t e = 0; e < row.size(); ++e) {
                    const json& pair = row[e];
                    const std::string ploc =
                        rloc + "[" + std::to_string(e) + "]";
                    if (!pair.is_array() || pair.size() != 2)
                        fail(ploc, "expected a [column, value] pair");
                    parsed.push_back({unsigned_int(pair[0], ploc),
                                      num(pair[1], ploc)});
                }
                rows.push_back(std::move(parsed));
            }
        }
        if (const json* jt = find(*jg, "tail")) {
            const std::string tw = where + ".gamma.tail";
            if (!jt->is_array()) fail(tw, "expected an array of pairs");
            for (std::size_t e = 0; e < jt->size(); ++e) {
                const json& pair = (*jt)[e];
                const std::string ploc = tw + "[" + std::to_string(e) + "]";
                if (!pair.is_array() || pair.size() != 2)
                    fail(ploc, "expected an [offset, value] pair");
                tail.offsets.push_back(
                    {static_cast<int>(integer(pair[0], ploc)),
                     num(pair[1], ploc)});
            }
        }
    }

    std::vector<double> gu_prefix;
    double gu_tail = 1.0;
    const json& ju = need(j, "gamma_u", where);
    check_keys(ju, {"prefix", "tail"}, where + ".gamma_u");
    if (const json* p = find(ju, "prefix"))
        gu_prefix = number_list(*p, where + ".gamma_u.prefix");
    gu_tail = num(need(ju, "tail", where + ".gamma_u"),
                  where + ".gamma_u.tail");

    const json& jb = need(j, "bounds", where);
    const std::string bw = where + ".bounds";
    check_keys(jb,
               {"lambda_lo", "lambda_hi", "gamma_u_hi", "alpha_lo",
                "alpha_hi"},
               bw);
    GainSpec::Bounds bounds;
    bounds.lambda_lo = num(need(jb, "lambda_lo", bw), bw + ".lambda_lo");
    bounds.lambda_hi = num(need(jb, "lambda_hi", bw), bw + ".lambda_hi");
    bounds.gamma_u_hi = num(need(jb, "gamma_u_hi", bw), bw + ".gamma_u_hi");
    bounds.alpha_lo = num(need(jb, "alpha_lo", bw), bw + ".alpha_lo");
    bounds.alpha_hi = num(need(jb, "alpha_hi", bw), bw + ".alpha_hi");

    return GainSpec(std::move(lam_prefix), lam_tail, std::move(rows),
                    std::move(tail), std::move(gu_prefix), gu_tail, bounds);
}

TimeCoeff parse_coeff(const json& j, const std::string& where) {
    check_keys(j, {"c0", "c1", "omega", "phase", "clock_block"}, where);
    TimeCoeff c;
    c.c0 = num_or(j, "c0", 1.0, where);
    c.c1 = num_or(j, "c1", 0.0, where);
    c.omega = num_or(j, "omega", 1.0, where);
    c.phase = num_or(j, "phase", 0.0, where);
    if (const json* cb = find(j, "clock_block"))
        c.clock_block = unsigned_int(*cb, where + ".clock_block");
    return c;
}

Phi parse_phi(const json& v, const std::string& where) {
    const std::string s = text(v, where);
    if (s == "identity") return Phi::identity;
    if (s == "saturation") return Phi::saturation;
    if (s == "sine") return Phi::sine;
    if (s == "cubic") return Phi::cubic;
    if (s == "lookup") return Phi::lookup;
    fail(where, "unknown shape '" + s + "'");
}

SourceRef parse_source(const json& j, const std::string& where) {
    check_keys(j, {"kind", "index", "pre"}, where);
    SourceRef src;
    const std::string kind = text(need(j, "kind", where), where + ".kind");
    if (kind == "self") {
        src.kind = SourceRef::Kind::self;
    } else if (kind == "input") {
        src.kind = SourceRef::Kind::input;
    } else if (kind == "rel") {
        src.kind = SourceRef::Kind::rel_block;
    } else if (kind == "abs") {
        src.kind = SourceRef::Kind::abs_block;
    } else {
        fail(where + ".kind", "unknown source kind '" + kind + "'");
    }
    if (const json* idx = find(j, "index"))
        src.index = integer(*idx, where + ".index");
    if (const json* pre = find(j, "pre")) src.pre = mat(*pre, where + ".pre");
    return src;
}

WeightRule parse_weights(const json& j, const std::string& where) {
    check_keys(j, {"prefix", "tail_base", "tail_ratio", "first"}, where);
    WeightRule w;
    if (const json* p = find(j, "prefix"))
        w.prefix = number_list(*p, where + ".prefix");
    w.tail_base = num(need(j, "tail_base", where), where + ".tail_base");
    w.tail_ratio = num_or(j, "tail_ratio", 0.5, where);
    w.first = unsigned_or(j, "first", 1, where);
    return w;
}

SumTerm parse_sum_term(const json& j, const std::string& where,
                       bool with_type) {
    if (with_type)
        check_keys(j,
                   {"type", "sources", "bias", "phi", "sat_limit", "table",
                    "post", "coeff"},
                   where);
    else
        check_keys(j,
                   {"sources", "bias", "phi", "sat_limit", "table", "post",
                    "coeff"},
                   where);
    SumTerm t;
    const json& js = need(j, "sources", where);
    if (!js.is_array()) fail(where + ".sources", "expected an array");
    for (std::size_t k = 0; k < js.size(); ++k)
        t.sources.push_back(parse_source(
            js[k], where + ".sources[" + std::to_string(k) + "]"));
    if (const json* b = find(j, "bias")) t.bias = evec(*b, where + ".bias");
    if (const json* p = find(j, "phi")) t.phi = parse_phi(*p, where + ".phi");
    t.sat_limit = num_or(j, "sat_limit", 1.0, where);
    if (const json* tab = find(j, "table")) {
        const std::string tw = where + ".table";
        if (!tab->is_array()) fail(tw, "expected an array of pairs");
        for (std::size_t k = 0; k < tab->size(); ++k) {
            const json& pair = (*tab)[k];
            const std::string ploc = tw + "[" + std::to_string(k) + "]";
            if (!pair.is_array() || pair.size() != 2)
                fail(ploc, "expected an [x, y] pair");
            t.table.push_back({num(pair[0], ploc), num(pair[1], ploc)});
        }
    }
    t.post = mat(need(j, "post", where), where + ".post");
    if (const json* c = find(j, "coeff"))
        t.coeff = parse_coeff(*c, where + ".coeff");
    return t;
}

GatherTerm parse_gather_term(const json& j, const std::string& where) {
    check_keys(j,
               {"type", "weights", "pre_gather", "pre_self", "bias", "phi",
                "sat_limit", "post", "coeff", "anchor"},
               where);
    GatherTerm t;
    t.weights = parse_weights(need(j, "weights", where), where + ".weights");
    t.pre_gather = mat(need(j, "pre_gather", where), where + ".pre_gather");
    t.pre_self = mat(need(j, "pre_self", where), where + ".pre_self");
    if (const json* b = find(j, "bias")) t.bias = evec(*b, where + ".bias");
    if (const json* p = find(j, "phi")) t.phi = parse_phi(*p, where + ".phi");
    t.sat_limit = num_or(j, "sat_limit", 1.0, where);
    t.post = mat(need(j, "post", where), where + ".post");
    if (const json* c = find(j, "coeff"))
        t.coeff = parse_coeff(*c, where + ".coeff");
    if (const json* a = find(j, "anchor"))
        t.anchor = parse_source(*a, where + ".anchor");
    return t;
}

SubsystemSpec parse_subsystem(const json& j, const std::string& where) {
    check_keys(j, {"n", "m", "lipschitz", "V", "terms"}, where);
    SubsystemSpec sub;
    sub.n = static_cast<int>(
        unsigned_int(need(j, "n", where), where + ".n"));
    sub.m = static_cast<int>(unsigned_or(j, "m", 0, where));
    sub.lipschitz = num_or(j, "lipschitz", 0.0, where);

    const json& jv = need(j, "V", where);
    const std::string vw = where + ".V";
    check_keys(jv, {"kind", "P", "scale", "alpha_lo", "alpha_hi"}, vw);
    const std::string kind = text(need(jv, "kind", vw), vw + ".kind");
    if (kind == "quadratic") {
        sub.V.kind = LocalLyapunov::Kind::quadratic_form;
        sub.V.P = mat(need(jv, "P", vw), vw + ".P");
    } else if (kind == "distance_power") {
        sub.V.kind = LocalLyapunov::Kind::distance_power;
        sub.V.scale = num_or(jv, "scale", 1.0, vw);
    } else {
        fail(vw + ".kind", "unknown local function kind '" + kind + "'");
    }
    sub.V.alpha_lo = num_or(jv, "alpha_lo", 1.0, vw);
    sub.V.alpha_hi = num_or(jv, "alpha_hi", 1.0, vw);

    if (const json* jt = find(j, "terms")) {
        const std::string tw = where + ".terms";
        if (!jt->is_array()) fail(tw, "expected an array");
        for (std::size_t k = 0; k < jt->size(); ++k) {
            const json& term = (*jt)[k];
            const std::string loc = tw + "[" + std::to_string(k) + "]";
            const std::string type =
                text(need(term, "type", loc), loc + ".type");
            if (type == "sum")
                sub.terms.push_back(parse_sum_term(term, loc, true));
            else if (type == "gather")
                sub.terms.push_back(parse_gather_term(term, loc));
            else
                fail(loc + ".type", "unknown term type '" + type + "'");
        }
    }
    return sub;
}

BlockSet parse_set(const json& j, const std::string& where) {
    check_keys(j, {"kind", "point", "lo", "hi"}, where);
    const std::string kind = text(need(j, "kind", where), where + ".kind");
    if (kind == "origin") return OriginSet{};
    if (kind == "full") return FullSet{};
    if (kind == "diagonal") return DiagonalSet{};
    if (kind == "point")
        return PointSet{number_list(need(j, "point", where),
                                    where + ".point")};
    if (kind == "box")
        return BoxSet{number_list(need(j, "lo", where), where + ".lo"),
                      number_list(need(j, "hi", where), where + ".hi")};
    fail(where + ".kind", "unknown set kind '" + kind + "'");
}

NetworkSpec parse_network(const json& j, const std::string& where) {
    check_keys(j,
               {"p", "q", "time_varying", "dims", "sets", "gain",
                "subsystems"},
               where);

    const json& jd = need(j, "dims", where);
    check_keys(jd, {"prefix", "tail"}, where + ".dims");
    std::vector<int> dim_prefix;
    if (const json* p = find(jd, "prefix")) {
        const std::string dw = where + ".dims.prefix";
        if (!p->is_array()) fail(dw, "expected an array of integers");
        for (std::size_t k = 0; k < p->size(); ++k)
            dim_prefix.push_back(static_cast<int>(unsigned_int(
                (*p)[k], dw + "[" + std::to_string(k) + "]")));
    }
    BlockDims dims(std::move(dim_prefix),
                   static_cast<int>(unsigned_int(
                       need(jd, "tail", where + ".dims"),
                       where + ".dims.tail")));

    const json& jsets = need(j, "sets", where);
    check_keys(jsets, {"prefix", "tail"}, where + ".sets");
    std::vector<BlockSet> set_prefix;
    if (const json* p = find(jsets, "prefix")) {
        const std::string sw = where + ".sets.prefix";
        if (!p->is_array()) fail(sw, "expected an array");
        for (std::size_t k = 0; k < p->size(); ++k)
            set_prefix.push_back(
                parse_set((*p)[k], sw + "[" + std::to_string(k) + "]"));
    }
    SetSpec sets(std::move(set_prefix),
                 parse_set(need(jsets, "tail", where + ".sets"),
                           where + ".sets.tail"),
                 dims);

    const json& jsub = need(j, "subsystems", where);
    check_keys(jsub, {"prefix", "tail"}, where + ".subsystems");
    std::vector<SubsystemSpec> prefix;
    if (const json* p = find(jsub, "prefix")) {
        const std::string sw = where + ".subsystems.prefix";
        if (!p->is_array()) fail(sw, "expected an array");
        for (std::size_t k = 0; k < p->size(); ++k)
            prefix.push_back(parse_subsystem(
                (*p)[k], sw + "[" + std::to_string(k) + "]"));
    }
    SubsystemSpec tail = parse_subsystem(
        need(jsub, "tail", where + ".subsystems"),
        where + ".subsystems.tail");

    return NetworkSpec(std::move(prefix), std::move(tail),
                       parse_gain(need(j, "gain", where), where + ".gain"),
                       std::move(sets), num(need(j, "p", where), where + ".p"),
                       num(need(j, "q", where), where + ".q"),
                       flag_or(j, "time_varying", false, where));
}

InputSignal::Constant parse_constant(const json& j, const std::string& where) {
    InputSignal::Constant c;
    if (j.is_array()) {
        for (std::size_t k = 0; k < j.size(); ++k)
            c.prefix.push_back(
                evec(j[k], where + "[" + std::to_string(k) + "]"));
        return c;
    }
    if (j.is_object()) {
        check_keys(j, {"value", "count"}, where);
        const Eigen::VectorXd v =
            evec(need(j, "value", where), where + ".value");
        const std::size_t count =
            unsigned_int(need(j, "count", where), where + ".count");
        c.prefix.assign(count, v);
        return c;
    }
    fail(where, "expected an array of vectors or a {value, count} object");
}

InputSignal parse_input(const json& j, double q, const std::string& where) {
    check_keys(j, {"kind", "prefix", "pieces", "omega", "phase"}, where);
    const std::string kind = text(need(j, "kind", where), where + ".kind");
    if (kind == "zero") return InputSignal::zero();
    if (kind == "constant")
        return InputSignal::constant(
            parse_constant(need(j, "prefix", where), where + ".prefix"), q);
    if (kind == "piecewise") {
        const json& jp = need(j, "pieces", where);
        const std::string pw = where + ".pieces";
        if (!jp.is_array()) fail(pw, "expected an array");
        std::vector<InputSignal::Piece> pieces;
        for (std::size_t k = 0; k < jp.size(); ++k) {
            const json& piece = jp[k];
            const std::string loc = pw + "[" + std::to_string(k) + "]";
            check_keys(piece, {"from", "prefix"}, loc);
            pieces.push_back(
                {num(need(piece, "from", loc), loc + ".from"),
                 parse_constant(need(piece, "prefix", loc), loc + ".prefix")});
        }
        return InputSignal::piecewise(std::move(pieces), q);
    }
    if (kind == "sinusoid") {
        InputSignal::Sinusoid s;
        s.amplitude =
            parse_constant(need(j, "prefix", where), where + ".prefix");
        s.omega = num_or(j, "omega", 1.0, where);
        s.phase = num_or(j, "phase", 0.0, where);
        return InputSignal::sinusoid(std::move(s), q);
    }
    fail(where + ".kind", "unknown input kind '" + kind + "'");
}

InitialState parse_x0(const json& j, const std::string& where) {
    check_keys(j, {"kind", "blocks", "amplitude"}, where);
    InitialState init;
    const std::string kind = text(need(j, "kind", where), where + ".kind");
    if (kind == "zeros") {
        init.kind = InitialState::Kind::zeros;
    } else if (kind == "blocks") {
        init.kind = InitialState::Kind::blocks;
        const json& jb = need(j, "blocks", where);
        const std::string bw = where + ".blocks";
        if (!jb.is_array()) fail(bw, "expected an array of vectors");
        for (std::size_t k = 0; k < jb.size(); ++k)
            init.blocks.push_back(number_list(
                jb[k], bw + "[" + std::to_string(k) + "]"));
    } else if (kind == "random") {
        init.kind = InitialState::Kind::random;
        init.random_blocks =
            unsigned_int(need(j, "blocks", where), where + ".blocks");
        init.amplitude = num_or(j, "amplitude", 1.0, where);
    } else {
        fail(where + ".kind", "unknown initial state kind '" + kind + "'");
    }
    return init;
}

void parse_integrate_into(const json& j, IntegrateOptions& opts,
                          const std::string& where) {
    opts.dt = num_or(j, "dt", opts.dt, where);
    opts.t0 = num_or(j, "t0", opts.t0, where);
    opts.defect_every = unsigned_or(j, "defect_every", opts.defect_every,
                                    where);
    opts.defect_warn = num_or(j, "defect_warn", opts.defect_warn, where);
    opts.overflow_limit = num_or(j, "overflow_limit", opts.overflow_limit,
                                 where);
}

AnalyzeOptions parse_analyze(const json& j, const std::string& where) {
    check_keys(j, {"schedule", "rho", "schedule_tol", "colsum_cap", "power"},
               where);
    AnalyzeOptions opts;
    if (const json* s = find(j, "schedule")) {
        const std::string sw = where + ".schedule";
        if (!s->is_array() || s->empty())
            fail(sw, "expected a nonempty array of window sizes");
        opts.schedule.clear();
        for (std::size_t k = 0; k < s->size(); ++k)
            opts.schedule.push_back(unsigned_int(
                (*s)[k], sw + "[" + std::to_string(k) + "]"));
    }
    opts.rho = num_or(j, "rho", opts.rho, where);
    opts.schedule_tol = num_or(j, "schedule_tol", opts.schedule_tol, where);
    opts.colsum_cap = num_or(j, "colsum_cap", opts.colsum_cap, where);
    if (const json* p = find(j, "power")) {
        const std::string pw = where + ".power";
        check_keys(*p, {"rel_tol", "max_iter", "shift_factor",
                        "stagnation_window"},
                   pw);
        opts.power.rel_tol = num_or(*p, "rel_tol", opts.power.rel_tol, pw);
        opts.power.max_iter =
            unsigned_or(*p, "max_iter", opts.power.max_iter, pw);
        opts.power.shift_factor =
            num_or(*p, "shift_factor", opts.power.shift_factor, pw);
        opts.power.stagnation_window = unsigned_or(
            *p, "stagnation_window", opts.power.stagnation_window, pw);
    }
    return opts;
}

std::pair<double, double> parse_envelope_pair(const json& j,
                                              const std::string& where) {
    check_keys(j, {"M", "a"}, where);
    return {num(need(j, "M", where), where + ".M"),
            num(need(j, "a", where), where + ".a")};
}

ConsensusSpec parse_consensus(const json& j, const std::string& where) {
    check_keys(j,
               {"n", "agent_terms", "lipschitz", "B", "sigma", "alpha",
                "band", "edges"},
               where);
    ConsensusSpec cs;
    cs.n = static_cast<int>(unsigned_or(j, "n", 1, where));
    if (const json* jt = find(j, "agent_terms")) {
        const std::string tw = where + ".agent_terms";
        if (!jt->is_array()) fail(tw, "expected an array");
        for (std::size_t k = 0; k < jt->size(); ++k)
            cs.agent_terms.push_back(parse_sum_term(
                (*jt)[k], tw + "[" + std::to_string(k) + "]", false));
    }
    cs.lipschitz = num_or(j, "lipschitz", 0.0, where);
    cs.B = mat(need(j, "B", where), where + ".B");
    cs.sigma = num_or(j, "sigma", 1.0, where);
    cs.alpha = parse_weights(need(j, "alpha", where), where + ".alpha");
    if (const json* jb = find(j, "band")) {
        const std::string bw = where + ".band";
        if (!jb->is_array()) fail(bw, "expected an array of pairs");
        for (std::size_t k = 0; k < jb->size(); ++k) {
            const json& pair = (*jb)[k];
            const std::string ploc = bw + "[" + std::to_string(k) + "]";
            if (!pair.is_array() || pair.size() != 2)
                fail(ploc, "expected an [offset, weight] pair");
            cs.band.push_back(
                {unsigned_int(pair[0], ploc), num(pair[1], ploc)});
        }
    }
    if (const json* je = find(j, "edges")) {
        const std::string ew = where + ".edges";
        if (!je->is_array()) fail(ew, "expected an array of triples");
        for (std::size_t k = 0; k < je->size(); ++k) {
            const json& e = (*je)[k];
            const std::string eloc = ew + "[" + std::to_string(k) + "]";
            if (!e.is_array() || e.size() != 3)
                fail(eloc, "expected an [i, j, weight] triple");
            cs.edges.push_back({unsigned_int(e[0], eloc),
                                unsigned_int(e[1], eloc), num(e[2], eloc)});
        }
    }
    return cs;
}

ObserverSpec parse_observer(const json& j, const std::string& where) {
    check_keys(j, {"n", "m_y", "A", "coupling", "C", "K", "gain"}, where);
    const json& jg = need(j, "gain", where);
    ObserverSpec os{1,
                    1,
                    Eigen::MatrixXd(),
                    {},
                    Eigen::MatrixXd(),
                    Eigen::MatrixXd(),
                    parse_gain(jg, where + ".gain")};
    os.n = static_cast<int>(unsigned_or(j, "n", 1, where));
    os.m_y = static_cast<int>(unsigned_or(j, "m_y", 1, where));
    os.A = mat(need(j, "A", where), where + ".A");
    os.C = mat(need(j, "C", where), where + ".C");
    os.K = mat(need(j, "K", where), where + ".K");
    if (const json* jc = find(j, "coupling")) {
        const std::string cw = where + ".coupling";
        if (!jc->is_array()) fail(cw, "expected an array of pairs");
        for (std::size_t k = 0; k < jc->size(); ++k) {
            const json& pair = (*jc)[k];
            const std::string ploc = cw + "[" + std::to_string(k) + "]";
            if (!pair.is_array() || pair.size() != 2)
                fail(ploc, "expected an [offset, matrix] pair");
            os.coupling.push_back(
                {static_cast<int>(integer(pair[0], ploc)),
                 mat(pair[1], ploc)});
        }
    }
    return os;
}

SimulateParams parse_simulate(const json& j, const std::string& where) {
    check_keys(j,
               {"blocks", "T", "dt", "t0", "defect_every", "defect_warn",
                "overflow_limit", "x0", "input", "envelope", "tol",
                "csv_stride"},
               where);
    SimulateParams p;
    p.blocks = unsigned_int(need(j, "blocks", where), where + ".blocks");
    p.T = num(need(j, "T", where), where + ".T");
    parse_integrate_into(j, p.integrate, where);
    p.x0 = parse_x0(need(j, "x0", where), where + ".x0");
    if (const json* env = find(j, "envelope")) {
        const std::string ew = where + ".envelope";
        check_keys(*env, {"M", "a", "gain_value"}, ew);
        EnvelopeOverride ov;
        ov.M = num(need(*env, "M", ew), ew + ".M");
        ov.a = num(need(*env, "a", ew), ew + ".a");
        ov.gain_value = num_or(*env, "gain_value", 0.0, ew);
        p.envelope = ov;
    }
    p.tol = num_or(j, "tol", p.tol, where);
    p.csv_stride = unsigned_or(j, "csv_stride", p.csv_stride, where);
    return p;
}

TimevaryingParams parse_timevarying(const json& j, const std::string& where) {
    check_keys(j,
               {"lambda0", "t0_samples", "x0_samples", "blocks", "T", "dt",
                "defect_every", "envelope", "tol"},
               where);
    TimevaryingParams p;
    p.lambda0 = num_or(j, "lambda0", 1.0, where);
    p.t0_samples = number_list(need(j, "t0_samples", where),
                               where + ".t0_samples");
    const json& jx = need(j, "x0_samples", where);
    const std::string xw = where + ".x0_samples";
    if (!jx.is_array() || jx.empty())
        fail(xw, "expected a nonempty array of initial states");
    for (std::size_t k = 0; k < jx.size(); ++k)
        p.x0_samples.push_back(
            parse_x0(jx[k], xw + "[" + std::to_string(k) + "]"));
    p.blocks = unsigned_int(need(j, "blocks", where), where + ".blocks");
    p.options.T = num(need(j, "T", where), where + ".T");
    parse_integrate_into(j, p.options.integrate, where);
    if (const json* env = find(j, "envelope")) {
        auto [M, a] = parse_envelope_pair(*env, where + ".envelope");
        p.options.envelope_M = M;
        p.options.envelope_a = a;
    }
    p.options.tol = num_or(j, "tol", p.options.tol, where);
    return p;
}

ConsensusRunParams parse_consensus_run(const json& j,
                                       const std::string& where) {
    check_keys(j,
               {"blocks", "T", "dt", "defect_every", "x0", "n_modes", "tol",
                "envelope", "csv_stride"},
               where);
    ConsensusRunParams p;
    p.blocks = unsigned_int(need(j, "blocks", where), where + ".blocks");
    p.T = num(need(j, "T", where), where + ".T");
    parse_integrate_into(j, p.integrate, where);
    p.x0 = parse_x0(need(j, "x0", where), where + ".x0");
    p.metrics.n_modes = unsigned_or(j, "n_modes", p.metrics.n_modes, where);
    p.metrics.tol = num_or(j, "tol", p.metrics.tol, where);
    if (const json* env = find(j, "envelope")) {
        auto [M, a] = parse_envelope_pair(*env, where + ".envelope");
        p.metrics.M = M;
        p.metrics.a = a;
    }
    p.csv_stride = unsigned_or(j, "csv_stride", p.csv_stride, where);
    return p;
}

ObserverRunParams parse_observer_run(const json& j, const std::string& where) {
    check_keys(j,
               {"blocks", "T", "dt", "defect_every", "x0", "xhat0", "tol",
                "csv_stride"},
               where);
    ObserverRunParams p;
    p.blocks = unsigned_int(need(j, "blocks", where), where + ".blocks");
    p.T = num(need(j, "T", where), where + ".T");
    parse_integrate_into(j, p.integrate, where);
    p.x0 = parse_x0(need(j, "x0", where), where + ".x0");
    p.xhat0 = parse_x0(need(j, "xhat0", where), where + ".xhat0");
    p.tol = num_or(j, "tol", p.tol, where);
    p.csv_stride = unsigned_or(j, "csv_stride", p.csv_stride, where);
    return p;
}

}  // namespace

std::vector<double> materialize(const InitialState& init,
                                const BlockLayout& layout,
                                std::uint64_t seed) {
    std::vector<double> flat(layout.flat_dim(), 0.0);
    if (init.kind == InitialState::Kind::blocks) {
        require(init.blocks.size() <= layout.blocks(),
                "initial state lists more blocks than the truncation holds");
        for (std::size_t i = 0; i < init.blocks.size(); ++i) {
            require(init.blocks[i].size() ==
                        static_cast<std::size_t>(layout.dim(i)),
                    "initial state block dimension mismatch");
            std::copy(init.blocks[i].begin(), init.blocks[i].end(),
                      flat.begin() + static_cast<long>(layout.offset(i)));
        }
    } else if (init.kind == InitialState::Kind::random) {
        require(init.random_blocks <= layout.blocks(),
                "initial state lists more blocks than the truncation holds");
        require(std::isfinite(init.amplitude) && init.amplitude >= 0.0,
                "random initial amplitude must be nonnegative");
        // Explicit bit transform; standard distributions are implementation
        // defined, which would break cross-platform reproducibility.
        std::mt19937_64 rng(seed);
        const double inv = 1.0 / 9007199254740992.0;  // 2^-53
        for (std::size_t i = 0; i < init.random_blocks; ++i) {
            const std::size_t off = layout.offset(i);
            for (int c = 0; c < layout.dim(i); ++c) {
                const double u = static_cast<double>(rng() >> 11) * inv;
                flat[off + static_cast<std::size_t>(c)] =
                    init.amplitude * (2.0 * u - 1.0);
            }
        }
    }
    return flat;
}

Scenario parse_scenario(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw SpecError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(root,
               {"seed", "gain", "network", "consensus", "observer", "analyze",
                "simulate", "timevarying", "consensus_run", "observer_run"},
               "root");

    Scenario sc;
    if (const json* s = find(root, "seed")) {
        if (!s->is_number_unsigned()) fail("root.seed", "expected a nonnegative integer");
        sc.seed = s->get<std::uint64_t>();
    }
    if (const json* g = find(root, "gain")) sc.gain = parse_gain(*g, "gain");
    if (const json* n = find(root, "network"))
        sc.network = parse_network(*n, "network");
    if (const json* c = find(root, "consensus"))
        sc.consensus = parse_consensus(*c, "consensus");
    if (const json* o = find(root, "observer"))
        sc.observer = parse_observer(*o, "observer");
    if (const json* a = find(root, "analyze"))
        sc.analyze = parse_analyze(*a, "analyze");
    if (const json* s = find(root, "simulate")) {
        sc.simulate = parse_simulate(*s, "simulate");
        if (const json* in = find(*s, "input")) {
            if (!sc.network)
                fail("simulate.input",
                     "an input signal needs the network section for its "
                     "exponent");
            sc.simulate->input =
                parse_input(*in, sc.network->q, "simulate.input");
        }
    }
    if (const json* t = find(root, "timevarying"))
        sc.timevarying = parse_timevarying(*t, "timevarying");
    if (const json* c = find(root, "consensus_run"))
        sc.consensus_run = parse_consensus_run(*c, "consensus_run");
    if (const json* o = find(root, "observer_run"))
        sc.observer_run = parse_observer_run(*o, "observer_run");
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

}  // namespace smallgain