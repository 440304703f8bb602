#pragma once

#include <filesystem>
#include <iosfwd>

#include "metagraphloc/radio.hpp"

namespace mgl::radio {

/// Dataset text format (UTF-8 CSV):
///
///     #metagraphloc-v1,M=<int>,D=<int>,FLOOR=<int>
///     #extent=<width>,<height>          optional metadata comment
///     #rssi_floor=<dBm>                 optional metadata comment
///     x,y,z,rssi_1..rssi_M,imu_1..imu_D
///
/// Other `#` lines are ignored. Numbers are written in shortest round-trip form,
/// so write followed by read reproduces the dataset exactly. Detection masks are
/// not stored: an entry equal to the RSSI floor is read back as undetected.
void write_dataset(const FingerprintDataset& data, std::ostream& out);
void write_dataset(const FingerprintDataset& data, const std::filesystem::path& path);

/// Throws ParseError (with line number) on malformed input. `default_rssi_floor`
/// applies when the file carries no `#rssi_floor=` comment.
FingerprintDataset read_dataset(std::istream& in, double default_rssi_floor = -110.0);
FingerprintDataset read_dataset(const std::filesystem::path& path, double default_rssi_floor = -110.0);

}  // namespace mgl::radio
