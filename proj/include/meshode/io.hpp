#pragma once

#include <string>
#include <string_view>

#include "meshode/training.hpp"

namespace meshode {

inline constexpr std::uint32_t kTrajectoryFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// "MSHT" container: header, config echo, rest block, per-sample positions
// then velocities (little-endian f64, node-major) and an FNV-1a checksum.
// Sample times are k * dt_sample.
std::string encode_trajectory(const Trajectory& traj);
Trajectory decode_trajectory(std::string_view bytes);

// "MSHC" container: model kind, architecture, normalizer, named parameter
// tensors, Adam moments, training config echo, seed and a self-check input
// whose stored output must be reproduced bit-exactly on load.
std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace meshode
