#pragma once

#include <string>
#include <vector>

#include "dpgen/trainer.hpp"

namespace dpgen {

// Checkpoint container: magic bytes, format version, config digest, then
// named length-prefixed sections. All scalars little-endian, parameters as
// raw IEEE-754 doubles, so a save/load round trip is bit-exact.

void checkpoint_save(const RunState& state, const TrainConfig& cfg, const std::string& path);

// Rejects version or config-digest mismatches and missing sections before
// constructing any state.
RunState checkpoint_load(const std::string& path, const TrainConfig& cfg);

struct PublicGenerator {
  GeneratorSpec spec;
  ParamVector params;
  NoiseConfig noise;  // injection scale the generator was trained with
  RdpLedger ledger;
  int64_t iteration = 0;
};

// The release artifact: generator spec and parameters plus the privacy
// ledger. Nothing else ever goes into this file.
void save_public_generator(const RunState& state, const TrainConfig& cfg, const std::string& path);
PublicGenerator load_public_generator(const std::string& path);

void save_discriminator_bank(const MlpSpec& spec, const std::vector<ParamVector>& bank,
                             const TrainConfig& cfg, const std::string& path);
std::vector<ParamVector> load_discriminator_bank(const std::string& path, const TrainConfig& cfg);

// Section listing, used by the release-surface scan.
std::vector<std::string> checkpoint_section_names(const std::string& path);

}  // namespace dpgen
