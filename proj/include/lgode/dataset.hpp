#pragma once

// Simulated dataset generation and the on-disk dataset container.
//
// File layout (all integers/floats little-endian):
//   magic "LGODEDS1" | u32 version | u32 header_len | header JSON (UTF-8)
//   u32 sample_count, then per sample:
//     u32 n_objects | u32 n_edges | n_edges x (u32 i, u32 j) with i < j
//     u8 n_parts (1 = observed horizon only, 2 = plus extrapolation horizon)
//     per part: f64 horizon_begin | f64 horizon_end | u32 n_records |
//               n_records x (u32 object_id, f64 timestamp, f64 features[D])
// The header echoes the generation config, seed and feature scale record.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lgode/observations.hpp"
#include "lgode/sim.hpp"

namespace lgode {

struct GenDataConfig {
    sim::SimConfig sim;
    std::size_t train_samples = 500;
    std::size_t valid_samples = 50;
    std::size_t test_samples = 100;
    std::size_t n_min = 40;
    std::size_t n_max = 52;
    /// Observations per object in the extension horizon of test samples.
    std::size_t extension_observations = 40;
    std::uint64_t seed = 0;
};

/// One system: observations over the main horizon, and for test samples a
/// second set drawn from the following equally long horizon.
struct Sample {
    ObservationSet observed;
    ObservationSet extension;
    bool has_extension = false;
};

struct Dataset {
    std::string split;
    GenDataConfig config;
    ScaleRecord scale;
    std::vector<Sample> samples;
};

struct GeneratedData {
    Dataset train;
    Dataset valid;
    Dataset test;
};

/// Simulates every split, normalizes features jointly across them, then
/// subsamples irregular observations. Times stay in simulation units.
GeneratedData generate_data(const GenDataConfig& cfg);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

/// Writes train/valid/test files plus manifest.txt into dir.
void write_generated(const std::filesystem::path& dir, const GeneratedData& data);
Dataset load_split(const std::filesystem::path& dir, const std::string& split);

std::string dataset_file_name(const std::string& split);

/// Deterministic 64-bit mix for deriving per-item seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace lgode
