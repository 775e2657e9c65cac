#include "qsm/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "qsm/errors.hpp"

namespace qsm {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

const json& as_object(const json& j, const std::string& where) {
    if (!j.is_object()) bad(where, "expected an object");
    return j;
}

// The strict-schema core: every object's keys must come from its allowed
// list, and the error names the stray key.
void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || item.key() == a;
        if (!ok) bad(where, "unknown key '" + item.key() + "'");
    }
}

double get_num(const json& j, const std::string& where, const char* key, double def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number()) bad(where, std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

int get_int(const json& j, const std::string& where, const char* key, int def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number_integer())
        bad(where, std::string("'") + key + "' must be an integer");
    return j.at(key).get<int>();
}

std::uint64_t get_u64(const json& j, const std::string& where, const char* key,
                      std::uint64_t def) {
    if (!j.contains(key)) return def;
    const json& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0))
        bad(where, std::string("'") + key + "' must be a nonnegative integer");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& j, const std::string& where, const char* key, bool def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_boolean()) bad(where, std::string("'") + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_str(const json& j, const std::string& where, const char* key,
                    const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_string()) bad(where, std::string("'") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

std::array<double, 3> as_vec3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) bad(where, "expected an array of 3 numbers");
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
        if (!j.at(i).is_number()) bad(where, "expected an array of 3 numbers");
        out[static_cast<std::size_t>(i)] = j.at(i).get<double>();
    }
    return out;
}

std::array<int, 3> as_ivec3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) bad(where, "expected an array of 3 integers");
    std::array<int, 3> out{};
    for (int i = 0; i < 3; ++i) {
        if (!j.at(i).is_number_integer()) bad(where, "expected an array of 3 integers");
        out[static_cast<std::size_t>(i)] = j.at(i).get<int>();
    }
    return out;
}

std::vector<double> get_num_list(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) return {};
    const json& v = j.at(key);
    if (!v.is_array()) bad(where, std::string("'") + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number())
            bad(where, std::string("'") + key + "' must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

Shape parse_shape(const json& j, const std::string& where) {
    as_object(j, where);
    const std::string type = get_str(j, where, "type", "");
    if (type == "sphere") {
        check_keys(j, where, {"type", "center", "radius", "delta_chi"});
        if (!j.contains("center") || !j.contains("radius"))
            bad(where, "sphere needs 'center' and 'radius'");
        SphereSpec s;
        s.center_mm = as_vec3(j.at("center"), where + ".center");
        s.radius_mm = get_num(j, where, "radius", 0.0);
        s.delta_chi = get_num(j, where, "delta_chi", 0.0);
        return s;
    }
    if (type == "cylinder") {
        check_keys(j, where, {"type", "center", "axis", "radius", "delta_chi"});
        if (!j.contains("center") || !j.contains("radius"))
            bad(where, "cylinder needs 'center' and 'radius'");
        CylinderSpec c;
        c.center_mm = as_vec3(j.at("center"), where + ".center");
        if (j.contains("axis")) c.axis = as_vec3(j.at("axis"), where + ".axis");
        c.radius_mm = get_num(j, where, "radius", 0.0);
        c.delta_chi = get_num(j, where, "delta_chi", 0.0);
        return c;
    }
    if (type == "box") {
        check_keys(j, where, {"type", "min", "max", "delta_chi"});
        if (!j.contains("min") || !j.contains("max"))
            bad(where, "box needs 'min' and 'max'");
        BoxSpec b;
        b.min_mm = as_vec3(j.at("min"), where + ".min");
        b.max_mm = as_vec3(j.at("max"), where + ".max");
        b.delta_chi = get_num(j, where, "delta_chi", 0.0);
        return b;
    }
    bad(where, "unknown shape type '" + type + "'");
}

json shape_to_json(const Shape& s) {
    json j;
    if (const auto* sp = std::get_if<SphereSpec>(&s)) {
        j["type"] = "sphere";
        j["center"] = sp->center_mm;
        j["radius"] = sp->radius_mm;
        j["delta_chi"] = sp->delta_chi;
    } else if (const auto* cy = std::get_if<CylinderSpec>(&s)) {
        j["type"] = "cylinder";
        j["center"] = cy->center_mm;
        j["axis"] = cy->axis;
        j["radius"] = cy->radius_mm;
        j["delta_chi"] = cy->delta_chi;
    } else {
        const auto& bx = std::get<BoxSpec>(s);
        j["type"] = "box";
        j["min"] = bx.min_mm;
        j["max"] = bx.max_mm;
        j["delta_chi"] = bx.delta_chi;
    }
    return j;
}

} // namespace

bool SweepSpec::empty() const {
    return combos.empty() && w_model.empty() && w_grad.empty() && w_dipole.empty();
}

std::vector<std::array<double, 3>> SweepSpec::expand() const {
    std::vector<std::array<double, 3>> out = combos;
    const bool any_list = !w_model.empty() || !w_grad.empty() || !w_dipole.empty();
    if (any_list) {
        if (w_model.empty() || w_grad.empty() || w_dipole.empty())
            throw ConfigError(
                "config: sweep: cartesian lists need all of w_model, w_grad, w_dipole");
        for (double wm : w_model)
            for (double wg : w_grad)
                for (double wd : w_dipole) out.push_back({wm, wg, wd});
    }
    std::vector<std::array<double, 3>> dedup;
    for (const auto& c : out) {
        bool seen = false;
        for (const auto& d : dedup) seen = seen || d == c;
        if (!seen) dedup.push_back(c);
    }
    return dedup;
}

void ExperimentConfig::validate() const {
    phantom.validate();
    noise.validate();
    if (orientations.empty())
        throw ConfigError("config: orientations must not be empty");
    train.validate();
    if (steps < 1) throw ConfigError("config: steps must be >= 1");
    if (!(tkd.t > 0.0) || tkd.t > 1.0 / 3.0 + 1e-15)
        throw ConfigError("config: tkd.t must lie in (0, 1/3]");
    if (cosmos_damping < 0.0) throw ConfigError("config: cosmos.damping must be >= 0");
    if (orientation_sweep.count < 1)
        throw ConfigError("config: orientation_sweep.count must be >= 1");
    if (!(orientation_sweep.cap_deg > 0.0) || orientation_sweep.cap_deg > 90.0)
        throw ConfigError("config: orientation_sweep.cap_deg must lie in (0, 90]");
    for (const auto& c : sweep.combos)
        if (c[0] < 0.0 || c[1] < 0.0 || c[2] < 0.0)
            throw ConfigError("config: sweep weights must be >= 0");
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    as_object(root, "top level");
    check_keys(root, "top level",
               {"grid", "phantom", "noise", "orientations", "hyper", "tkd", "cosmos",
                "train", "steps", "sweep", "orientation_sweep", "seed", "output_dir"});

    ExperimentConfig cfg;
    cfg.phantom.grid.dims = {32, 32, 32};

    if (root.contains("grid")) {
        const json& g = as_object(root.at("grid"), "grid");
        check_keys(g, "grid", {"dims", "voxel_size"});
        if (g.contains("dims")) cfg.phantom.grid.dims = as_ivec3(g.at("dims"), "grid.dims");
        if (g.contains("voxel_size"))
            cfg.phantom.grid.voxel = as_vec3(g.at("voxel_size"), "grid.voxel_size");
    }

    if (root.contains("phantom")) {
        const json& p = as_object(root.at("phantom"), "phantom");
        check_keys(p, "phantom", {"background", "seed", "shapes"});
        cfg.phantom.background = get_num(p, "phantom", "background", 0.0);
        cfg.phantom.seed = get_u64(p, "phantom", "seed", 0);
        if (p.contains("shapes")) {
            if (!p.at("shapes").is_array()) bad("phantom", "'shapes' must be an array");
            int i = 0;
            for (const auto& s : p.at("shapes")) {
                cfg.phantom.shapes.push_back(
                    parse_shape(s, "phantom.shapes[" + std::to_string(i) + "]"));
                ++i;
            }
        }
    }

    if (root.contains("noise")) {
        const json& n = as_object(root.at("noise"), "noise");
        check_keys(n, "noise", {"sigma", "seed"});
        cfg.noise.sigma = get_num(n, "noise", "sigma", 0.0);
        cfg.noise.seed = get_u64(n, "noise", "seed", 0);
    }

    if (root.contains("orientations")) {
        const json& o = root.at("orientations");
        if (!o.is_array()) bad("orientations", "expected an array of [x,y,z] vectors");
        cfg.orientations.clear();
        int i = 0;
        for (const auto& v : o) {
            const auto a =
                as_vec3(v, "orientations[" + std::to_string(i) + "]");
            cfg.orientations.push_back(Orientation::normalized(a[0], a[1], a[2]));
            ++i;
        }
    }

    HyperParams& hp = cfg.train.hp;
    if (root.contains("hyper")) {
        const json& h = as_object(root.at("hyper"), "hyper");
        check_keys(h, "hyper",
                   {"tau", "eps", "lambda", "w_model", "w_grad", "w_dipole",
                    "omega_dipole", "w_voxel", "t_tkd", "t_cone", "m_orientations"});
        hp.tau = get_num(h, "hyper", "tau", hp.tau);
        hp.eps = get_num(h, "hyper", "eps", hp.eps);
        hp.lambda = get_num(h, "hyper", "lambda", hp.lambda);
        hp.w_model = get_num(h, "hyper", "w_model", hp.w_model);
        hp.w_grad = get_num(h, "hyper", "w_grad", hp.w_grad);
        if (h.contains("w_dipole") && h.contains("omega_dipole"))
            bad("hyper", "'w_dipole' and 'omega_dipole' are aliases; give one");
        hp.w_dipole = get_num(h, "hyper", "w_dipole", hp.w_dipole);
        hp.w_dipole = get_num(h, "hyper", "omega_dipole", hp.w_dipole);
        hp.w_voxel = get_num(h, "hyper", "w_voxel", hp.w_voxel);
        hp.t_tkd = get_num(h, "hyper", "t_tkd", hp.t_tkd);
        hp.t_cone = get_num(h, "hyper", "t_cone", hp.t_cone);
        hp.m_orientations = get_int(h, "hyper", "m_orientations", hp.m_orientations);
    }

    cfg.tkd.t = hp.t_tkd;
    if (root.contains("tkd")) {
        const json& t = as_object(root.at("tkd"), "tkd");
        check_keys(t, "tkd", {"t", "zero_fill"});
        cfg.tkd.t = get_num(t, "tkd", "t", cfg.tkd.t);
        cfg.tkd.zero_fill = get_bool(t, "tkd", "zero_fill", cfg.tkd.zero_fill);
    }

    if (root.contains("cosmos")) {
        const json& c = as_object(root.at("cosmos"), "cosmos");
        check_keys(c, "cosmos", {"damping"});
        cfg.cosmos_damping = get_num(c, "cosmos", "damping", 0.0);
    }

    if (root.contains("train")) {
        const json& t = as_object(root.at("train"), "train");
        check_keys(t, "train",
                   {"lr_recon", "lr_inr", "recon_per_cycle", "inr_per_cycle", "dc_mode",
                    "inr_phase_objective", "siren", "recon_channels"});
        cfg.train.lr_recon = get_num(t, "train", "lr_recon", cfg.train.lr_recon);
        cfg.train.lr_inr = get_num(t, "train", "lr_inr", cfg.train.lr_inr);
        cfg.train.recon_per_cycle =
            get_int(t, "train", "recon_per_cycle", cfg.train.recon_per_cycle);
        cfg.train.inr_per_cycle =
            get_int(t, "train", "inr_per_cycle", cfg.train.inr_per_cycle);
        cfg.train.dc_mode =
            dc_mode_from_string(get_str(t, "train", "dc_mode", to_string(cfg.train.dc_mode)));
        cfg.train.inr_objective = inr_objective_from_string(
            get_str(t, "train", "inr_phase_objective", to_string(cfg.train.inr_objective)));
        if (t.contains("siren")) {
            const json& s = as_object(t.at("siren"), "train.siren");
            check_keys(s, "train.siren", {"depth", "width", "omega0"});
            cfg.train.siren.depth = get_int(s, "train.siren", "depth", cfg.train.siren.depth);
            cfg.train.siren.width = get_int(s, "train.siren", "width", cfg.train.siren.width);
            cfg.train.siren.omega0 =
                get_num(s, "train.siren", "omega0", cfg.train.siren.omega0);
        }
        if (t.contains("recon_channels")) {
            const json& c = t.at("recon_channels");
            if (!c.is_array()) bad("train", "'recon_channels' must be an array of integers");
            cfg.train.recon_channels.clear();
            for (const auto& e : c) {
                if (!e.is_number_integer())
                    bad("train", "'recon_channels' must be an array of integers");
                cfg.train.recon_channels.push_back(e.get<int>());
            }
        }
    }

    cfg.steps = get_int(root, "top level", "steps", cfg.steps);

    if (root.contains("sweep")) {
        const json& s = as_object(root.at("sweep"), "sweep");
        check_keys(s, "sweep", {"combos", "w_model", "w_grad", "w_dipole"});
        if (s.contains("combos")) {
            if (!s.at("combos").is_array()) bad("sweep", "'combos' must be an array");
            int i = 0;
            for (const auto& c : s.at("combos")) {
                const std::string where = "sweep.combos[" + std::to_string(i) + "]";
                as_object(c, where);
                check_keys(c, where, {"w_model", "w_grad", "w_dipole"});
                if (!c.contains("w_model") || !c.contains("w_grad") ||
                    !c.contains("w_dipole"))
                    bad(where, "needs w_model, w_grad, and w_dipole");
                cfg.sweep.combos.push_back({get_num(c, where, "w_model", 0.0),
                                            get_num(c, where, "w_grad", 0.0),
                                            get_num(c, where, "w_dipole", 0.0)});
                ++i;
            }
        }
        cfg.sweep.w_model = get_num_list(s, "sweep", "w_model");
        cfg.sweep.w_grad = get_num_list(s, "sweep", "w_grad");
        cfg.sweep.w_dipole = get_num_list(s, "sweep", "w_dipole");
    }

    if (root.contains("orientation_sweep")) {
        const json& o = as_object(root.at("orientation_sweep"), "orientation_sweep");
        check_keys(o, "orientation_sweep", {"count", "cap_deg", "seed"});
        cfg.orientation_sweep.count =
            get_int(o, "orientation_sweep", "count", cfg.orientation_sweep.count);
        cfg.orientation_sweep.cap_deg =
            get_num(o, "orientation_sweep", "cap_deg", cfg.orientation_sweep.cap_deg);
        cfg.orientation_sweep.seed =
            get_u64(o, "orientation_sweep", "seed", cfg.orientation_sweep.seed);
    }

    cfg.seed = get_u64(root, "top level", "seed", cfg.seed);
    cfg.output_dir = get_str(root, "top level", "output_dir", cfg.output_dir);

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string canonical_config_json(const ExperimentConfig& cfg,
                                  const std::array<double, 3>& combo) {
    json shapes = json::array();
    for (const auto& s : cfg.phantom.shapes) shapes.push_back(shape_to_json(s));
    json orients = json::array();
    for (const auto& o : cfg.orientations) orients.push_back(o.b);
    const HyperParams& hp = cfg.train.hp;
    json j{
        {"grid", {{"dims", cfg.phantom.grid.dims}, {"voxel_size", cfg.phantom.grid.voxel}}},
        {"phantom",
         {{"background", cfg.phantom.background},
          {"seed", cfg.phantom.seed},
          {"shapes", shapes}}},
        {"noise", {{"sigma", cfg.noise.sigma}, {"seed", cfg.noise.seed}}},
        {"orientations", orients},
        {"hyper",
         {{"tau", hp.tau},
          {"eps", hp.eps},
          {"lambda", hp.lambda},
          {"w_model", combo[0]},
          {"w_grad", combo[1]},
          {"w_dipole", combo[2]},
          {"w_voxel", hp.w_voxel},
          {"t_tkd", hp.t_tkd},
          {"t_cone", hp.t_cone},
          {"m_orientations", hp.m_orientations}}},
        {"train",
         {{"lr_recon", cfg.train.lr_recon},
          {"lr_inr", cfg.train.lr_inr},
          {"recon_per_cycle", cfg.train.recon_per_cycle},
          {"inr_per_cycle", cfg.train.inr_per_cycle},
          {"dc_mode", to_string(cfg.train.dc_mode)},
          {"inr_phase_objective", to_string(cfg.train.inr_objective)},
          {"siren",
           {{"depth", cfg.train.siren.depth},
            {"width", cfg.train.siren.width},
            {"omega0", cfg.train.siren.omega0}}},
          {"recon_channels", cfg.train.recon_channels}}},
        {"steps", cfg.steps},
        {"seed", cfg.seed}};
    return j.dump();
}

std::uint64_t config_hash(const ExperimentConfig& cfg, const std::array<double, 3>& combo) {
    const std::string s = canonical_config_json(cfg, combo);
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace qsm
