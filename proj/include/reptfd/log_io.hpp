#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reptfd/recorder.hpp"

// Little-endian on-disk log formats.
//
// Determinism-log:
//   "RTFD" | version u16 | sampling_span u32 | num_cores u8
//   | block_count u32 | order_count u32
//   | block_count x {core u8, block_idx u32, mem_inst_count u16}
//   | order_count x {src_core u8, src_mem_idx u32, dst_core u8, dst_mem_idx u32}
//
// Result-log:
//   "RTFC" | version u16 | num_cores u8 | num_cores x partial_len u16
//   | record_count u32 | record_count x {core u8, group_idx u32, checksum u32}
namespace reptfd::log_io {

inline constexpr uint16_t kVersion = 1;
inline constexpr std::size_t kBlockRecordBytes = 7;
inline constexpr std::size_t kOrderRecordBytes = 10;
inline constexpr std::size_t kChecksumRecordBytes = 9;

std::vector<uint8_t> encode(const recorder::DeterminismLog& log);
std::vector<uint8_t> encode(const recorder::ResultLog& log);
recorder::DeterminismLog decode_determinism_log(const std::vector<uint8_t>& bytes);
recorder::ResultLog decode_result_log(const std::vector<uint8_t>& bytes);

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

}  // namespace reptfd::log_io
