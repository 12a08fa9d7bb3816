#include "mvsde/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "mvsde/errors.hpp"

namespace mvsde {

using nlohmann::json;

void save_checkpoint(const DriftModel& m, const std::string& path) {
    const ArchSpec& s = m.spec();
    json widths = {
        {"dim", s.dim},
        {"f_hidden", s.f_hidden},
        {"phi_hidden", s.phi_hidden},
        {"w0_width", s.w0_width},
        {"sample_count", s.sample_count},
        {"flow_layers", s.flow_layers},
        {"flow_hidden", s.flow_hidden},
        {"zero_output_init", s.zero_output_init},
        {"time_scale", s.time_scale},
    };
    json doc = {
        {"architecture", to_string(s.kind)},
        {"widths", widths},
        {"activation", to_string(s.activation)},
        {"seed", m.seed()},
        {"params", m.store().values},
    };
    std::ofstream out(path);
    if (!out) throw ConfigError("checkpoint: cannot open for writing: " + path);
    out << doc.dump(2) << "\n";
}

DriftModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("checkpoint: cannot open: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    ArchSpec spec;
    try {
        spec.kind = drift_kind_from_string(doc.at("architecture").get<std::string>());
        spec.activation = activation_from_string(doc.at("activation").get<std::string>());
        const json& w = doc.at("widths");
        spec.dim = w.at("dim").get<int>();
        spec.f_hidden = w.at("f_hidden").get<std::vector<int>>();
        spec.phi_hidden = w.at("phi_hidden").get<std::vector<int>>();
        spec.w0_width = w.at("w0_width").get<int>();
        spec.sample_count = w.at("sample_count").get<int>();
        spec.flow_layers = w.at("flow_layers").get<int>();
        spec.flow_hidden = w.at("flow_hidden").get<std::vector<int>>();
        if (w.contains("zero_output_init"))
            spec.zero_output_init = w.at("zero_output_init").get<bool>();
        if (w.contains("time_scale")) spec.time_scale = w.at("time_scale").get<double>();
        DriftModel m(spec, doc.at("seed").get<std::uint64_t>());
        const std::vector<double> params = doc.at("params").get<std::vector<double>>();
        if (static_cast<int>(params.size()) != m.store().size())
            throw ConfigError("checkpoint: parameter count mismatch (" +
                              std::to_string(params.size()) + " vs " +
                              std::to_string(m.store().size()) + ")");
        m.store().values = params;
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

}  // namespace mvsde
