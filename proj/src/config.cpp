#include "pmd/config.hpp"

#include "pmd/error.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>

namespace pmd {

namespace {

using nlohmann::json;

class Reader {
public:
    explicit Reader(std::string_view text) : text_(text) {}

    [[noreturn]] void fail(const std::string& pointer, const std::string& what) const {
        throw ConfigError(pointer, "config key '" + pointer + "': " + what,
                          locate_key_line(text_, pointer));
    }

    void only_keys(const json& obj, const std::string& pointer,
                   std::initializer_list<const char*> allowed) const {
        if (!obj.is_object()) fail(pointer, "expected an object");
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& item : obj.items())
            if (!ok.count(item.key())) fail(pointer + "/" + item.key(), "unknown key");
    }

    const json& require(const json& obj, const std::string& pointer, const char* key) const {
        if (!obj.contains(key)) fail(pointer + "/" + key, "missing required key");
        return obj.at(key);
    }

    double number(const json& v, const std::string& pointer) const {
        if (!v.is_number()) fail(pointer, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(pointer, "must be finite");
        return d;
    }

    std::vector<double> numbers(const json& v, const std::string& pointer) const {
        if (!v.is_array() || v.empty()) fail(pointer, "expected a nonempty array of numbers");
        std::vector<double> out;
        for (std::size_t j = 0; j < v.size(); ++j) out.push_back(number(v[j], pointer + "/" + std::to_string(j)));
        return out;
    }

    // A number c, or a coefficient list [c0, c1, ...] for sum_i c_i x^i.
    ScalarFn scalar_field(const json& v, const std::string& pointer) const {
        std::vector<double> coeffs = v.is_array() ? numbers(v, pointer)
                                                  : std::vector<double>{number(v, pointer)};
        return [coeffs](double x) {
            double acc = 0.0;
            for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
            return acc;
        };
    }

    // A number, a list of x-coefficients, or a matrix P with rows indexed by
    // powers of x and columns by powers of a.
    ActionFn action_field(const json& v, const std::string& pointer) const {
        std::vector<std::vector<double>> rows;
        if (v.is_array() && !v.empty() && v[0].is_array()) {
            for (std::size_t j = 0; j < v.size(); ++j)
                rows.push_back(numbers(v[j], pointer + "/" + std::to_string(j)));
        } else if (v.is_array()) {
            for (double c : numbers(v, pointer)) rows.push_back({c});
        } else {
            rows.push_back({number(v, pointer)});
        }
        return [rows](double x, double a) {
            double acc = 0.0;
            for (auto r = rows.rbegin(); r != rows.rend(); ++r) {
                double inner = 0.0;
                for (auto c = r->rbegin(); c != r->rend(); ++c) inner = inner * a + *c;
                acc = acc * x + inner;
            }
            return acc;
        };
    }

private:
    std::string_view text_;
};

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    std::size_t line = 1;
    for (std::size_t j = 0; j < offset && j < text.size(); ++j)
        if (text[j] == '\n') ++line;
    return line;
}

} // namespace

std::size_t locate_key_line(std::string_view text, std::string_view pointer) {
    std::size_t pos = 0;
    std::size_t found = std::string_view::npos;
    std::size_t start = 0;
    while (start < pointer.size()) {
        if (pointer[start] != '/') return 0;
        std::size_t end = pointer.find('/', start + 1);
        if (end == std::string_view::npos) end = pointer.size();
        const std::string_view part = pointer.substr(start + 1, end - start - 1);
        start = end;
        if (!part.empty() && part.find_first_not_of("0123456789") == std::string_view::npos)
            continue;  // array index: keep the enclosing key's position
        const std::string quoted = "\"" + std::string(part) + "\"";
        const std::size_t hit = text.find(quoted, pos);
        if (hit == std::string_view::npos) break;
        found = hit;
        pos = hit + quoted.size();
    }
    return found == std::string_view::npos ? 0 : line_of_offset(text, found);
}

ControlProblem parse_problem_config(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const std::size_t line = line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1);
        std::ostringstream msg;
        msg << "config syntax error at line " << line << ": " << e.what();
        throw ConfigError("", msg.str(), line);
    }
    Reader rd(text);
    if (!doc.is_object()) rd.fail("", "top level must be an object");

    const json& grid_node = rd.require(doc, "", "grid");
    rd.only_keys(grid_node, "/grid", {"left", "right", "n_interior"});
    const double left = grid_node.contains("left") ? rd.number(grid_node["left"], "/grid/left") : 0.0;
    const double right = grid_node.contains("right") ? rd.number(grid_node["right"], "/grid/right") : 1.0;
    const json& n_node = rd.require(grid_node, "/grid", "n_interior");
    if (!n_node.is_number_integer() || n_node.get<long long>() < 1)
        rd.fail("/grid/n_interior", "expected a positive integer");
    Grid grid;
    try {
        grid = build_grid(left, right, n_node.get<std::size_t>());
    } catch (const ValidationError& e) {
        rd.fail("/grid", e.what());
    }

    const json& act = rd.require(doc, "", "actions");
    if (!act.is_object()) rd.fail("/actions", "expected an object");
    const json& kind = rd.require(act, "/actions", "kind");
    ActionSpace actions;
    try {
        if (kind == "discrete") {
            rd.only_keys(act, "/actions", {"kind", "values"});
            actions = make_discrete_actions(rd.numbers(rd.require(act, "/actions", "values"), "/actions/values"));
        } else if (kind == "interval") {
            rd.only_keys(act, "/actions", {"kind", "alpha", "beta", "n_quad"});
            std::size_t n_quad = kDefaultQuadratureNodes;
            if (act.contains("n_quad")) {
                if (!act["n_quad"].is_number_integer() || act["n_quad"].get<long long>() < 2)
                    rd.fail("/actions/n_quad", "expected an integer >= 2");
                n_quad = act["n_quad"].get<std::size_t>();
            }
            actions = make_interval_actions(rd.number(rd.require(act, "/actions", "alpha"), "/actions/alpha"),
                                            rd.number(rd.require(act, "/actions", "beta"), "/actions/beta"),
                                            n_quad);
        } else {
            rd.fail("/actions/kind", "expected \"discrete\" or \"interval\"");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const ValidationError& e) {
        rd.fail("/actions", e.what());
    }

    Discretization scheme = Discretization::Central;
    if (doc.contains("discretization")) {
        const json& d = doc["discretization"];
        if (d == "central") scheme = Discretization::Central;
        else if (d == "upwind") scheme = Discretization::Upwind;
        else rd.fail("/discretization", "expected \"central\" or \"upwind\"");
    }

    const ScalarFn sigma = rd.scalar_field(rd.require(doc, "", "sigma"), "/sigma");
    const ScalarFn g = doc.contains("g") ? rd.scalar_field(doc["g"], "/g") : ScalarFn([](double) { return 0.0; });

    const std::string model = doc.contains("model") ? (doc["model"].is_string() ? doc["model"].get<std::string>() : "")
                                                    : "lq";
    try {
        if (model == "lq") {
            if (doc.contains("polynomial")) rd.fail("/polynomial", "not used by model \"lq\"");
            const json& lq = rd.require(doc, "", "lq");
            rd.only_keys(lq, "/lq", {"b_bar", "b_hat", "c_bar", "c_hat", "f_bar", "f_tilde", "f_hat", "alpha", "beta"});
            auto field = [&](const char* key, double fallback) {
                return lq.contains(key) ? rd.scalar_field(lq[key], std::string("/lq/") + key)
                                        : ScalarFn([fallback](double) { return fallback; });
            };
            LqProblemSpec spec;
            spec.coefficients = {field("b_bar", 0.0), field("b_hat", 0.0), field("c_bar", 0.0),
                                 field("c_hat", 0.0), field("f_bar", 0.0), field("f_tilde", 0.0),
                                 field("f_hat", 1.0)};
            spec.alpha = lq.contains("alpha") ? rd.number(lq["alpha"], "/lq/alpha") : actions.min_action();
            spec.beta = lq.contains("beta") ? rd.number(lq["beta"], "/lq/beta") : actions.max_action();
            if (spec.alpha == spec.beta) spec.beta = spec.alpha + 1.0;  // single-action space
            return make_lq_problem(spec, std::move(grid), std::move(actions), sigma, g, scheme);
        }
        if (model == "polynomial") {
            if (doc.contains("lq")) rd.fail("/lq", "not used by model \"polynomial\"");
            const json& poly = rd.require(doc, "", "polynomial");
            rd.only_keys(poly, "/polynomial", {"b", "c", "f"});
            auto field = [&](const char* key) {
                return poly.contains(key) ? rd.action_field(poly[key], std::string("/polynomial/") + key)
                                          : ActionFn([](double, double) { return 0.0; });
            };
            return ControlProblem(std::move(grid), std::move(actions), field("b"), field("c"),
                                  field("f"), sigma, g, scheme);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const ValidationError& e) {
        rd.fail(model == "lq" ? "/lq" : "/polynomial", e.what());
    }
    rd.fail("/model", "expected \"lq\" or \"polynomial\"");
}

} // namespace pmd
