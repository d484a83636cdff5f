#pragma once

#include <cstdint>
#include <string>

#include "graphon_mfc/measure.hpp"

namespace gmfc {

inline constexpr const char* kToolVersion = "0.1.0";

namespace io {

// 17 significant digits: doubles survive the round trip exactly, which
// is what regression pinning of CSV artifacts relies on.
std::string format17(double x);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

// columns: label_index, atom_index, weight, x_1..x_d
void write_collection_csv(const std::string& path, const MeasureCollection& mc);
// companion header: grid, seed, provenance
void write_collection_header(const std::string& path, const MeasureCollection& mc,
                             std::uint64_t seed, const std::string& task,
                             const std::string& config_hash);

// columns: label_index, atom_index, step, time, weight, x_1..x_d
void write_flow_csv(const std::string& path, const MeasureFlow& flow);

}  // namespace io
}  // namespace gmfc
