#pragma once

// File formats: JSON system definitions (with named-field parse errors), norm
// field files, cycle catalogs, trajectory/extremal CSV dumps, OBJ level-set
// meshes, and run manifests. All floating output uses 17 significant digits.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "barnorm/cycles.hpp"
#include "barnorm/extremal.hpp"
#include "barnorm/flow.hpp"
#include "barnorm/linalg.hpp"
#include "barnorm/model.hpp"
#include "barnorm/norm_field.hpp"

namespace barnorm {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using json = nlohmann::json;

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// system files: {"n": int, "generators": [[row-major], ...],
//                optional "pair": {"A": [...], "b": [...], "c": [...]}}

namespace detail {

inline Mat mat_from_json(const json& arr, int n, const std::string& field) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != n * n)
        throw ParseError("field '" + field + "': expected a row-major array of " + std::to_string(n * n) +
                         " numbers");
    Mat m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const auto& v = arr[i * n + j];
            if (!v.is_number()) throw ParseError("field '" + field + "': entry " + std::to_string(i * n + j) +
                                                 " is not a number");
            m(i, j) = v.get<double>();
            if (!std::isfinite(m(i, j)))
                throw ParseError("field '" + field + "': entry " + std::to_string(i * n + j) + " is not finite");
        }
    return m;
}

inline Vec vec_from_json(const json& arr, int n, const std::string& field) {
    if (!arr.is_array() || static_cast<int>(arr.size()) != n)
        throw ParseError("field '" + field + "': expected an array of " + std::to_string(n) + " numbers");
    Vec v(n);
    for (int i = 0; i < n; ++i) {
        if (!arr[i].is_number())
            throw ParseError("field '" + field + "': entry " + std::to_string(i) + " is not a number");
        v[i] = arr[i].get<double>();
        if (!std::isfinite(v[i]))
            throw ParseError("field '" + field + "': entry " + std::to_string(i) + " is not finite");
    }
    return v;
}

inline json mat_to_json(const Mat& m) {
    json arr = json::array();
    for (int i = 0; i < m.dim(); ++i)
        for (int j = 0; j < m.dim(); ++j) arr.push_back(m(i, j));
    return arr;
}

inline json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

}  // namespace detail

inline SwitchedSystem parse_system(const json& j) {
    if (!j.is_object()) throw ParseError("system file: top level must be an object");
    if (!j.contains("n")) throw ParseError("field 'n': missing");
    if (!j["n"].is_number_integer()) throw ParseError("field 'n': must be an integer");
    int n = j["n"].get<int>();
    if (n < 2 || n > kMaxDim) throw ParseError("field 'n': must be in [2,4]");

    if (j.contains("pair")) {
        const json& p = j["pair"];
        if (!p.is_object()) throw ParseError("field 'pair': must be an object");
        if (n != 3) throw ParseError("field 'pair': pair systems require n = 3");
        for (const char* f : {"A", "b", "c"})
            if (!p.contains(f)) throw ParseError(std::string("field 'pair.") + f + "': missing");
        Mat A = detail::mat_from_json(p["A"], 3, "pair.A");
        Vec b = detail::vec_from_json(p["b"], 3, "pair.b");
        Vec c = detail::vec_from_json(p["c"], 3, "pair.c");
        SwitchedSystem sys = SwitchedSystem::from_pair(A, b, c);
        if (j.contains("generators")) {
            // when both are present they must agree entrywise
            const json& g = j["generators"];
            if (!g.is_array() || g.size() != 2) throw ParseError("field 'generators': pair systems carry exactly 2");
            Mat g0 = detail::mat_from_json(g[0], n, "generators[0]");
            Mat g1 = detail::mat_from_json(g[1], n, "generators[1]");
            if ((g0 - sys.generators[0]).max_abs() > 1e-14 || (g1 - sys.generators[1]).max_abs() > 1e-14)
                throw ParseError("field 'generators': inconsistent with 'pair' (expect {A, A + b c^T})");
        }
        return sys;
    }
    if (!j.contains("generators")) throw ParseError("field 'generators': missing");
    const json& g = j["generators"];
    if (!g.is_array() || g.empty()) throw ParseError("field 'generators': expected a nonempty array");
    std::vector<Mat> gens;
    for (std::size_t k = 0; k < g.size(); ++k)
        gens.push_back(detail::mat_from_json(g[k], n, "generators[" + std::to_string(k) + "]"));
    return SwitchedSystem::from_generators(std::move(gens));
}

inline SwitchedSystem load_system(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open system file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError("system file '" + path + "': " + e.what());
    }
    return parse_system(j);
}

inline json system_to_json(const SwitchedSystem& sys) {
    json j;
    j["n"] = sys.n;
    json gens = json::array();
    for (const Mat& g : sys.generators) gens.push_back(detail::mat_to_json(g));
    j["generators"] = gens;
    if (sys.pair) {
        j["pair"] = {{"A", detail::mat_to_json(sys.pair->A)},
                     {"b", detail::vec_to_json(sys.pair->b)},
                     {"c", detail::vec_to_json(sys.pair->c)}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// norm field files

inline json field_to_json(const NormField& f) {
    json j;
    j["n"] = f.dim();
    json nodes = json::array(), values = json::array();
    for (int i = 0; i < f.node_count(); ++i) {
        nodes.push_back(detail::vec_to_json(f.node(i)));
        values.push_back(f.value_at(i));
    }
    j["nodes"] = nodes;
    j["values"] = values;
    j["is_dual"] = f.is_dual();
    j["residual"] = f.residual();
    j["provenance"] = f.provenance();
    return j;
}

/// Reload: the grid is rebuilt from the node count, then values are matched
/// node-by-node (the builders are deterministic).
inline NormField field_from_json(const json& j) {
    for (const char* f : {"n", "nodes", "values", "is_dual"})
        if (!j.contains(f)) throw ParseError(std::string("field '") + f + "': missing");
    int n = j["n"].get<int>();
    auto grid = make_sphere_grid(n, static_cast<int>(j["nodes"].size()));
    if (grid->node_count() != static_cast<int>(j["values"].size()))
        throw ParseError("field 'values': count does not match a supported grid");
    std::vector<double> values(grid->node_count());
    for (int i = 0; i < grid->node_count(); ++i) {
        values[i] = j["values"][i].get<double>();
        if (!(values[i] > 0.0)) throw ParseError("field 'values': entries must be positive");
    }
    NormField f(grid, std::move(values), j["is_dual"].get<bool>());
    if (j.contains("residual")) f.set_residual(j["residual"].get<double>());
    if (j.contains("provenance")) f.set_provenance(j["provenance"].get<std::string>());
    return f;
}

/// OBJ level-set export for n=3: vertices node/value (the unit sphere of the
/// field), faces from the icosphere triangulation.
inline std::string field_to_obj(const NormField& f) {
    const auto* ico = dynamic_cast<const IcoSphereGrid*>(&f.grid());
    if (!ico) throw std::domain_error("field_to_obj: OBJ export requires an n=3 icosphere field");
    std::ostringstream out;
    for (int i = 0; i < ico->node_count(); ++i) {
        Vec v = f.node(i) * (1.0 / f.value_at(i));
        out << "v " << fmt17(v[0]) << " " << fmt17(v[1]) << " " << fmt17(v[2]) << "\n";
    }
    for (int a = 0; a < ico->face_count(); ++a) {
        auto fv = ico->face_vertices(a);
        out << "f " << fv[0] + 1 << " " << fv[1] + 1 << " " << fv[2] + 1 << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// CSV dumps

inline std::string trajectory_to_csv(const Trajectory& x_traj, const Trajectory* l_traj = nullptr,
                                     const std::vector<double>* u = nullptr) {
    std::ostringstream out;
    const int n = x_traj.states.empty() ? 0 : x_traj.states[0].size();
    out << "time";
    for (int i = 1; i <= n; ++i) out << ",x_" << i;
    if (l_traj)
        for (int i = 1; i <= n; ++i) out << ",l_" << i;
    if (u) out << ",u";
    out << "\n";
    for (std::size_t k = 0; k < x_traj.times.size(); ++k) {
        out << fmt17(x_traj.times[k]);
        for (int i = 0; i < n; ++i) out << "," << fmt17(x_traj.states[k][i]);
        if (l_traj)
            for (int i = 0; i < n; ++i) out << "," << fmt17(l_traj->states[k][i]);
        if (u) out << "," << fmt17((*u)[k]);
        out << "\n";
    }
    return out.str();
}

inline std::string extremal_to_csv(const BarabanovPairData& pair, const ExtremalPath& path) {
    std::ostringstream out;
    out << "time,x1,x2,x3,l1,l2,l3,u,phi_b,phi_c\n";
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        const Vec& x = path.x_states[k];
        const Vec& l = path.l_states[k];
        out << fmt17(path.times[k]);
        for (int i = 0; i < 3; ++i) out << "," << fmt17(x[i]);
        for (int i = 0; i < 3; ++i) out << "," << fmt17(l[i]);
        out << "," << fmt17(path.u_values[k]) << "," << fmt17(dot(pair.b, l)) << "," << fmt17(dot(pair.c, x))
            << "\n";
    }
    return out.str();
}

inline json extremal_events_to_json(const ExtremalPath& path) {
    json events = json::array();
    for (const auto& ev : path.switch_times) {
        events.push_back({{"time", ev.time},
                          {"which", ev.which == ZeroFactor::B   ? "b-zero"
                                    : ev.which == ZeroFactor::C ? "c-zero"
                                                                : "both"},
                          {"kind", ev.kind == ZeroKind::Transversal ? "transversal" : "tangential"}});
    }
    return events;
}

// ---------------------------------------------------------------------------
// cycle catalogs

inline json cycle_to_json(const Cycle& c) {
    json j;
    j["durations"] = c.durations;
    j["period"] = c.period;
    j["base_x"] = detail::vec_to_json(c.base_x);
    j["base_l"] = detail::vec_to_json(c.base_l);
    json fl = json::array();
    for (const auto& e : c.floquet.eigenvalues) fl.push_back({{"re", e.real()}, {"im", e.imag()}});
    j["floquet"] = fl;
    j["bang_count"] = c.bang_count;
    j["order_key"] = c.order_key;
    auto side = [](SideVerdict v) {
        return v == SideVerdict::Attract ? "attract" : v == SideVerdict::Repel ? "repel" : "unknown";
    };
    j["attractivity"] = {{"inner", side(c.inner)}, {"outer", side(c.outer)}};
    j["residual"] = c.residual;
    j["start_generator"] = c.start == StartGenerator::AFirst ? "A-first" : "perturbed-first";
    return j;
}

inline json catalog_to_json(const std::vector<Cycle>& catalog) {
    json arr = json::array();
    for (const Cycle& c : catalog) arr.push_back(cycle_to_json(c));
    return arr;
}

inline json family_to_json(const CycleFamily& fam) {
    json j;
    j["parameter_samples"] = fam.parameter_samples;
    json cycles = json::array();
    for (const Cycle& c : fam.cycles) cycles.push_back(cycle_to_json(c));
    j["cycles"] = cycles;
    if (fam.endpoint_lo) j["endpoint_lo"] = cycle_to_json(*fam.endpoint_lo);
    if (fam.endpoint_hi) j["endpoint_hi"] = cycle_to_json(*fam.endpoint_hi);
    j["truncated"] = fam.truncated;
    return j;
}

// ---------------------------------------------------------------------------

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

/// Serializes json with 17-significant-digit floats (nlohmann uses
/// shortest-roundtrip, which is also byte-stable; we keep its output).
inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace barnorm
