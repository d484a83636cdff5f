#include "graphon_mfc/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphon_mfc/numeric.hpp"

namespace gmfc::io {

std::string format17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NumericalFailure("io: cannot open for writing: " + path);
    out << content;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NumericalFailure("io: cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_collection_csv(const std::string& path, const MeasureCollection& mc) {
    std::ostringstream out;
    out << "label_index,atom_index,weight";
    for (std::size_t c = 0; c < mc.dim(); ++c) out << ",x_" << (c + 1);
    out << "\n";
    for (std::size_t k = 0; k < mc.size(); ++k) {
        const auto& m = mc.measure(k);
        for (std::size_t i = 0; i < m.size(); ++i) {
            out << k << ',' << i << ',' << format17(m.weight(i));
            for (double x : m.atom(i)) out << ',' << format17(x);
            out << "\n";
        }
    }
    write_text(path, out.str());
}

void write_collection_header(const std::string& path, const MeasureCollection& mc,
                             std::uint64_t seed, const std::string& task,
                             const std::string& config_hash) {
    nlohmann::json j;
    j["grid"]["labels"] = mc.grid().labels();
    j["grid"]["weights"] = mc.grid().weights();
    j["dim"] = mc.dim();
    j["seed"] = seed;
    j["provenance"]["tool_version"] = kToolVersion;
    j["provenance"]["task"] = task;
    j["provenance"]["config_hash"] = config_hash;
    write_text(path, j.dump(2) + "\n");
}

void write_flow_csv(const std::string& path, const MeasureFlow& flow) {
    std::ostringstream out;
    out << "label_index,atom_index,step,time,weight";
    for (std::size_t c = 0; c < flow.dim(); ++c) out << ",x_" << (c + 1);
    out << "\n";
    for (std::size_t j = 0; j < flow.time_grid().size(); ++j) {
        const MeasureCollection mc = flow.collection_at(j);
        for (std::size_t k = 0; k < mc.size(); ++k) {
            const auto& m = mc.measure(k);
            for (std::size_t i = 0; i < m.size(); ++i) {
                out << k << ',' << i << ',' << j << ',' << format17(flow.time_grid()[j]) << ','
                    << format17(m.weight(i));
                for (double x : m.atom(i)) out << ',' << format17(x);
                out << "\n";
            }
        }
    }
    write_text(path, out.str());
}

}  // namespace gmfc::io
